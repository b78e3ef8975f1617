//! Structured, conforming triangulations of the two rectangular subdomains,
//! matched node-for-node along the interface.
//!
//! Each rectangle is split into a uniform grid of cells and every cell is cut
//! along its bottom-left to top-right diagonal, which makes vertex ordering,
//! triangle orientation and the interface trace fully deterministic.

use std::fmt;

/// Relative tolerance for unifying interface vertices of the two sub-meshes.
pub const INTERFACE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Fluid,
    Porous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryTag {
    /// Outer boundary of the fluid subdomain.
    GammaF,
    /// Outer boundary of the porous subdomain.
    GammaP,
    /// The shared interface between the two subdomains.
    Interface,
}

/// Axis-aligned rectangle with strictly positive extents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self, MeshError> {
        if !(x0 < x1 && y0 < y1) || !(x0.is_finite() && x1.is_finite() && y0.is_finite() && y1.is_finite()) {
            return Err(MeshError::DegenerateRect { x0, x1, y0, y1 });
        }
        Ok(Rect { x0, x1, y0, y1 })
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    /// Largest coordinate magnitude, used to scale relative tolerances.
    pub fn scale(&self) -> f64 {
        self.x0
            .abs()
            .max(self.x1.abs())
            .max(self.y0.abs())
            .max(self.y1.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshError {
    DegenerateRect { x0: f64, x1: f64, y0: f64, y1: f64 },
    ZeroCells { nx: usize, ny: usize },
    InterfaceMismatch { fluid_x: f64, porous_x: f64 },
    InterfaceCountMismatch { fluid: usize, porous: usize },
}

impl fmt::Display for MeshError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshError::DegenerateRect { x0, x1, y0, y1 } => {
                write!(f, "degenerate rectangle [{x0},{x1}]x[{y0},{y1}]")
            }
            MeshError::ZeroCells { nx, ny } => {
                write!(f, "mesh needs at least one cell per direction, got {nx}x{ny}")
            }
            MeshError::InterfaceMismatch { fluid_x, porous_x } => write!(
                f,
                "interface traces do not match: fluid vertex at x={fluid_x}, porous vertex at x={porous_x}"
            ),
            MeshError::InterfaceCountMismatch { fluid, porous } => write!(
                f,
                "interface traces have different vertex counts: {fluid} (fluid) vs {porous} (porous)"
            ),
        }
    }
}

impl std::error::Error for MeshError {}

/// Uniform triangulation of a single rectangle, prior to coupling.
#[derive(Clone, Debug)]
pub struct SubMesh {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
    pub region: Region,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
}

/// Build a uniform triangulation of `rect` with `nx` x `ny` cells, each split
/// along the bottom-left to top-right diagonal.
///
/// Vertices are numbered row-major from the bottom-left corner, so the mesh is
/// reproducible bit-for-bit.
pub fn build_rect_mesh(rect: Rect, nx: usize, ny: usize, region: Region) -> Result<SubMesh, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::ZeroCells { nx, ny });
    }
    let dx = rect.width() / nx as f64;
    let dy = rect.height() / ny as f64;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        // Endpoints hit the rectangle bounds exactly so that interface traces
        // of separately generated meshes agree bitwise.
        let y = if j == ny { rect.y1 } else { rect.y0 + j as f64 * dy };
        for i in 0..=nx {
            let x = if i == nx { rect.x1 } else { rect.x0 + i as f64 * dx };
            vertices.push([x, y]);
        }
    }
    let v = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Ok(SubMesh {
        rect,
        nx,
        ny,
        region,
        vertices,
        triangles,
    })
}

#[derive(Clone, Debug)]
pub struct Triangle {
    pub v: [usize; 3],
    pub region: Region,
}

#[derive(Clone, Debug)]
pub struct BoundaryEdge {
    pub v: [usize; 2],
    pub tag: BoundaryTag,
}

/// An edge on the interface, oriented along its tangent, with both incident
/// triangles recorded and the unit normal pointing out of the fluid domain.
#[derive(Clone, Debug)]
pub struct InterfaceEdge {
    pub v: [usize; 2],
    pub fluid_tri: usize,
    pub porous_tri: usize,
    /// Unit normal pointing from the fluid side into the porous side.
    pub normal: [f64; 2],
    /// Unit tangent, `v[0] -> v[1]`.
    pub tangent: [f64; 2],
}

/// Matched triangulations of the fluid and porous subdomains sharing the
/// interface vertices.
#[derive(Clone, Debug)]
pub struct CoupledMesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<Triangle>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub interface_edges: Vec<InterfaceEdge>,
    /// Maximum element diameter.
    pub h: f64,
    /// Minimum element diameter.
    pub h_min: f64,
    pub fluid_rect: Rect,
    pub porous_rect: Option<Rect>,
}

impl CoupledMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let tri = &self.triangles[t];
        [
            self.vertices[tri.v[0]],
            self.vertices[tri.v[1]],
            self.vertices[tri.v[2]],
        ]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Total interface length.
    pub fn interface_length(&self) -> f64 {
        self.interface_edges
            .iter()
            .map(|e| {
                let a = self.vertices[e.v[0]];
                let b = self.vertices[e.v[1]];
                ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
            })
            .sum()
    }

    /// Wrap a single sub-mesh as a coupled mesh with no interface. Useful for
    /// single-region problems and degenerate-region tests.
    pub fn from_single_region(sub: SubMesh) -> Self {
        let tag = match sub.region {
            Region::Fluid => BoundaryTag::GammaF,
            Region::Porous => BoundaryTag::GammaP,
        };
        let triangles: Vec<Triangle> = sub
            .triangles
            .iter()
            .map(|v| Triangle {
                v: *v,
                region: sub.region,
            })
            .collect();
        let boundary_edges = outer_edges(&triangles, sub.vertices.len())
            .into_iter()
            .map(|(v, _)| BoundaryEdge { v, tag })
            .collect();
        let (h, h_min) = diameters(&sub.vertices, &triangles);
        CoupledMesh {
            vertices: sub.vertices,
            triangles,
            boundary_edges,
            interface_edges: Vec::new(),
            h,
            h_min,
            fluid_rect: sub.rect,
            porous_rect: None,
        }
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Edges referenced by exactly one triangle, together with that triangle.
fn outer_edges(triangles: &[Triangle], n_vertices: usize) -> Vec<([usize; 2], usize)> {
    let mut count: std::collections::HashMap<(usize, usize), (usize, usize)> =
        std::collections::HashMap::with_capacity(3 * triangles.len());
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let key = edge_key(tri.v[k], tri.v[(k + 1) % 3]);
            let entry = count.entry(key).or_insert((0, t));
            entry.0 += 1;
            entry.1 = entry.1.min(t);
        }
    }
    let _ = n_vertices;
    let mut out: Vec<([usize; 2], usize)> = count
        .into_iter()
        .filter(|(_, (c, _))| *c == 1)
        .map(|((a, b), (_, t))| ([a, b], t))
        .collect();
    out.sort_unstable();
    out
}

fn diameters(vertices: &[[f64; 2]], triangles: &[Triangle]) -> (f64, f64) {
    let mut h: f64 = 0.0;
    let mut h_min = f64::INFINITY;
    for tri in triangles {
        let mut d: f64 = 0.0;
        for k in 0..3 {
            let a = vertices[tri.v[k]];
            let b = vertices[tri.v[(k + 1) % 3]];
            d = d.max(((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt());
        }
        h = h.max(d);
        h_min = h_min.min(d);
    }
    (h, h_min)
}

/// Merge the fluid and porous sub-meshes, unifying the interface vertices.
///
/// The fluid mesh must sit on top of the porous mesh: the bottom trace of the
/// fluid rectangle and the top trace of the porous rectangle have to carry the
/// same vertex coordinates to within a `1e-12` relative tolerance.
pub fn couple_meshes(fluid: &SubMesh, porous: &SubMesh) -> Result<CoupledMesh, MeshError> {
    assert_eq!(fluid.region, Region::Fluid, "first argument must be the fluid mesh");
    assert_eq!(porous.region, Region::Porous, "second argument must be the porous mesh");

    // Interface trace of the fluid mesh: the bottom row, vertex i = i.
    // Porous mesh: the top row.
    let fl_trace: Vec<usize> = (0..=fluid.nx).collect();
    let po_trace: Vec<usize> = (0..=porous.nx).map(|i| porous.ny * (porous.nx + 1) + i).collect();
    if fl_trace.len() != po_trace.len() {
        return Err(MeshError::InterfaceCountMismatch {
            fluid: fl_trace.len(),
            porous: po_trace.len(),
        });
    }
    let scale = fluid.rect.scale().max(porous.rect.scale()).max(1.0);
    for (&fi, &pi) in fl_trace.iter().zip(&po_trace) {
        let fx = fluid.vertices[fi];
        let px = porous.vertices[pi];
        if (fx[0] - px[0]).abs() > INTERFACE_TOL * scale || (fx[1] - px[1]).abs() > INTERFACE_TOL * scale {
            return Err(MeshError::InterfaceMismatch {
                fluid_x: fx[0],
                porous_x: px[0],
            });
        }
    }

    // Global numbering: fluid vertices keep their indices; porous vertices
    // follow, except trace vertices which collapse onto their fluid twins.
    let mut vertices = fluid.vertices.clone();
    let mut porous_map = vec![usize::MAX; porous.vertices.len()];
    for (&fi, &pi) in fl_trace.iter().zip(&po_trace) {
        porous_map[pi] = fi;
    }
    for (i, &p) in porous.vertices.iter().enumerate() {
        if porous_map[i] == usize::MAX {
            porous_map[i] = vertices.len();
            vertices.push(p);
        }
    }

    let mut triangles: Vec<Triangle> = fluid
        .triangles
        .iter()
        .map(|v| Triangle {
            v: *v,
            region: Region::Fluid,
        })
        .collect();
    triangles.extend(porous.triangles.iter().map(|v| Triangle {
        v: [porous_map[v[0]], porous_map[v[1]], porous_map[v[2]]],
        region: Region::Porous,
    }));

    // Classify the single-triangle edges of each region: edges shared by both
    // regions form the interface, the rest are outer boundary.
    let mut edge_tris: std::collections::HashMap<(usize, usize), Vec<usize>> =
        std::collections::HashMap::with_capacity(3 * triangles.len());
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            edge_tris
                .entry(edge_key(tri.v[k], tri.v[(k + 1) % 3]))
                .or_default()
                .push(t);
        }
    }
    let mut boundary_edges = Vec::new();
    let mut interface_edges = Vec::new();
    let mut keys: Vec<(usize, usize)> = edge_tris.keys().copied().collect();
    keys.sort_unstable();
    for key in keys {
        let tris = &edge_tris[&key];
        match tris.len() {
            1 => {
                let tag = match triangles[tris[0]].region {
                    Region::Fluid => BoundaryTag::GammaF,
                    Region::Porous => BoundaryTag::GammaP,
                };
                boundary_edges.push(BoundaryEdge { v: [key.0, key.1], tag });
            }
            2 => {
                let (ra, rb) = (triangles[tris[0]].region, triangles[tris[1]].region);
                if ra != rb {
                    let (fluid_tri, porous_tri) = if ra == Region::Fluid {
                        (tris[0], tris[1])
                    } else {
                        (tris[1], tris[0])
                    };
                    boundary_edges.push(BoundaryEdge {
                        v: [key.0, key.1],
                        tag: BoundaryTag::Interface,
                    });
                    let a = vertices[key.0];
                    let b = vertices[key.1];
                    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
                    let tangent = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
                    // Normal pointing away from the fluid triangle's third vertex.
                    let mut normal = [tangent[1], -tangent[0]];
                    let ft = &triangles[fluid_tri];
                    let opp = ft.v.iter().copied().find(|&w| w != key.0 && w != key.1).unwrap();
                    let oc = vertices[opp];
                    let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                    if normal[0] * (oc[0] - mid[0]) + normal[1] * (oc[1] - mid[1]) > 0.0 {
                        normal = [-normal[0], -normal[1]];
                    }
                    interface_edges.push(InterfaceEdge {
                        v: [key.0, key.1],
                        fluid_tri,
                        porous_tri,
                        normal,
                        tangent,
                    });
                }
            }
            n => unreachable!("edge shared by {n} triangles"),
        }
    }

    let (h, h_min) = diameters(&vertices, &triangles);
    Ok(CoupledMesh {
        vertices,
        triangles,
        boundary_edges,
        interface_edges,
        h,
        h_min,
        fluid_rect: fluid.rect,
        porous_rect: Some(porous.rect),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn coupled_pi(n: usize) -> CoupledMesh {
        let fluid = build_rect_mesh(Rect::new(0.0, PI, 0.0, PI).unwrap(), n, n, Region::Fluid).unwrap();
        let porous = build_rect_mesh(Rect::new(0.0, PI, -PI, 0.0).unwrap(), n, n, Region::Porous).unwrap();
        couple_meshes(&fluid, &porous).unwrap()
    }

    #[test]
    fn unit_square_single_cell() {
        let rect = Rect::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let mesh = build_rect_mesh(rect, 1, 1, Region::Fluid).unwrap();
        assert_eq!(mesh.vertices.len(), 4);
        assert_eq!(mesh.triangles.len(), 2);
        let coupled = CoupledMesh::from_single_region(mesh);
        for t in 0..2 {
            assert!((coupled.triangle_area(t) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn pi_square_64() {
        let rect = Rect::new(0.0, PI, 0.0, PI).unwrap();
        let mesh = build_rect_mesh(rect, 64, 64, Region::Fluid).unwrap();
        assert_eq!(mesh.triangles.len(), 8192);
        assert_eq!(mesh.vertices.len(), 65 * 65);
        let coupled = CoupledMesh::from_single_region(mesh);
        let expected_h = (PI / 64.0) * 2.0_f64.sqrt();
        assert!((coupled.h - expected_h).abs() < 1e-12 * expected_h);
    }

    #[test]
    fn zero_cells_rejected() {
        let rect = Rect::new(0.0, 1.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            build_rect_mesh(rect, 0, 4, Region::Fluid),
            Err(MeshError::ZeroCells { .. })
        ));
    }

    #[test]
    fn degenerate_rect_rejected() {
        assert!(Rect::new(1.0, 1.0, 0.0, 2.0).is_err());
        assert!(Rect::new(0.0, 1.0, 3.0, 2.0).is_err());
    }

    #[test]
    fn couple_pi_domains() {
        let mesh = coupled_pi(64);
        assert_eq!(mesh.interface_edges.len(), 64);
        // 65 shared vertices: total = 2*65^2 - 65.
        assert_eq!(mesh.n_vertices(), 2 * 65 * 65 - 65);
        let mut iface_vertices: Vec<usize> = mesh
            .interface_edges
            .iter()
            .flat_map(|e| e.v.iter().copied())
            .collect();
        iface_vertices.sort_unstable();
        iface_vertices.dedup();
        assert_eq!(iface_vertices.len(), 65);
        for e in &mesh.interface_edges {
            assert_eq!(e.normal, [0.0, -1.0]);
            assert_eq!(e.tangent, [1.0, 0.0]);
        }
    }

    #[test]
    fn shifted_trace_rejected() {
        let fluid =
            build_rect_mesh(Rect::new(0.0, PI, 0.0, PI).unwrap(), 8, 8, Region::Fluid).unwrap();
        let mut porous =
            build_rect_mesh(Rect::new(0.0, PI, -PI, 0.0).unwrap(), 8, 8, Region::Porous).unwrap();
        for v in porous.vertices.iter_mut() {
            v[0] += 1e-6;
        }
        assert!(matches!(
            couple_meshes(&fluid, &porous),
            Err(MeshError::InterfaceMismatch { .. })
        ));
    }

    #[test]
    fn lid_driven_domains_interface() {
        let fluid =
            build_rect_mesh(Rect::new(0.0, 2.0, 0.0, 1.0).unwrap(), 32, 16, Region::Fluid).unwrap();
        let porous =
            build_rect_mesh(Rect::new(0.0, 2.0, -1.0, 0.0).unwrap(), 32, 16, Region::Porous).unwrap();
        let mesh = couple_meshes(&fluid, &porous).unwrap();
        assert!((mesh.interface_length() - 2.0).abs() < 1e-13);
        for e in &mesh.interface_edges {
            assert_eq!(mesh.vertices[e.v[0]][1], 0.0);
            assert_eq!(mesh.vertices[e.v[1]][1], 0.0);
        }
    }

    #[test]
    fn areas_sum_to_domain_area() {
        let mesh = coupled_pi(16);
        let total: f64 = (0..mesh.n_triangles()).map(|t| mesh.triangle_area(t)).sum();
        let expected = 2.0 * PI * PI;
        assert!((total - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn all_triangles_positively_oriented() {
        let mesh = coupled_pi(8);
        for t in 0..mesh.n_triangles() {
            assert!(mesh.triangle_area(t) > 0.0);
        }
    }

    #[test]
    fn interface_vertices_touch_both_regions() {
        let mesh = coupled_pi(8);
        let mut iface: Vec<usize> = mesh
            .interface_edges
            .iter()
            .flat_map(|e| e.v.iter().copied())
            .collect();
        iface.sort_unstable();
        iface.dedup();
        for &v in &iface {
            let fluid = mesh
                .triangles
                .iter()
                .any(|t| t.region == Region::Fluid && t.v.contains(&v));
            let porous = mesh
                .triangles
                .iter()
                .any(|t| t.region == Region::Porous && t.v.contains(&v));
            assert!(fluid && porous, "interface vertex {v} not shared");
        }
    }

    #[test]
    fn euler_formula_per_subdomain() {
        let mesh = coupled_pi(8);
        for region in [Region::Fluid, Region::Porous] {
            let mut verts = std::collections::HashSet::new();
            let mut edges = std::collections::HashSet::new();
            let mut faces = 0usize;
            for tri in mesh.triangles.iter().filter(|t| t.region == region) {
                faces += 1;
                for k in 0..3 {
                    verts.insert(tri.v[k]);
                    edges.insert(edge_key(tri.v[k], tri.v[(k + 1) % 3]));
                }
            }
            assert_eq!(verts.len() as i64 - edges.len() as i64 + faces as i64, 1);
        }
    }

    #[test]
    fn quasi_uniform_ratio() {
        let mesh = coupled_pi(8);
        assert!(mesh.h / mesh.h_min <= 2.0 * 2.0_f64.sqrt() + 1e-12);
    }
}
