//! Assembly of every bilinear/trilinear form and load vector of the coupled
//! weak formulation and of its Newton linearization.
//!
//! Conventions: velocity dofs interleave components as `2*node + comp`; the
//! fluid momentum block integrates `2 nu D(u):D(v)` plus the tangential
//! interface penalty; the interface coupling blocks are assembled from
//! independent loops so their skew relation can be checked rather than built
//! in. Element loops visit elements in map order, so assembly is
//! deterministic.

use crate::fespace::quadrature::{SegRule, TriRule};
use crate::fespace::{basis, ElemGeom, FEFunction, FieldKind, Spaces};
use crate::linalg::SparseMatrix;
use crate::mesh::Rect;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub enum AssemblyError {
    InvalidParameter { name: &'static str, value: f64 },
    NotSymmetricPositive,
}

impl fmt::Display for AssemblyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssemblyError::InvalidParameter { name, value } => {
                write!(f, "model parameter {name} = {value} out of range")
            }
            AssemblyError::NotSymmetricPositive => {
                write!(f, "conductivity tensor must be symmetric positive definite")
            }
        }
    }
}

impl std::error::Error for AssemblyError {}

/// Hydraulic conductivity: scalar, constant tensor, or piecewise-constant
/// scalar blocks over the porous subdomain (decided per element by centroid).
#[derive(Clone, Debug)]
pub enum Conductivity {
    Scalar(f64),
    Tensor([[f64; 2]; 2]),
    Blocks { background: f64, blocks: Vec<(Rect, f64)> },
}

impl Conductivity {
    pub fn tensor_at(&self, p: [f64; 2]) -> [[f64; 2]; 2] {
        match self {
            Conductivity::Scalar(k) => [[*k, 0.0], [0.0, *k]],
            Conductivity::Tensor(t) => *t,
            Conductivity::Blocks { background, blocks } => {
                for (rect, k) in blocks {
                    if rect.contains(p) {
                        return [[*k, 0.0], [0.0, *k]];
                    }
                }
                [[*background, 0.0], [0.0, *background]]
            }
        }
    }

    /// Spectral norm of the (symmetric) tensor at a point.
    pub fn norm2_at(&self, p: [f64; 2]) -> f64 {
        let t = self.tensor_at(p);
        let tr = t[0][0] + t[1][1];
        let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        (tr / 2.0 + disc).abs()
    }

    fn validate(&self) -> Result<(), AssemblyError> {
        match self {
            Conductivity::Scalar(k) => {
                if !(*k > 0.0) {
                    return Err(AssemblyError::InvalidParameter { name: "kappa", value: *k });
                }
            }
            Conductivity::Tensor(t) => {
                let sym = (t[0][1] - t[1][0]).abs() <= 1e-14 * (t[0][1].abs() + t[1][0].abs() + 1.0);
                let pd = t[0][0] > 0.0 && (t[0][0] * t[1][1] - t[0][1] * t[1][0]) > 0.0;
                if !sym || !pd {
                    return Err(AssemblyError::NotSymmetricPositive);
                }
            }
            Conductivity::Blocks { background, blocks } => {
                if !(*background > 0.0) {
                    return Err(AssemblyError::InvalidParameter {
                        name: "kappa",
                        value: *background,
                    });
                }
                for (_, k) in blocks {
                    if !(*k > 0.0) {
                        return Err(AssemblyError::InvalidParameter { name: "kappa", value: *k });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Physical coefficients of the coupled model.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub nu: f64,
    pub conductivity: Conductivity,
    pub rho: f64,
    pub g: f64,
    pub alpha: f64,
}

impl ModelParams {
    pub fn new(
        nu: f64,
        conductivity: Conductivity,
        rho: f64,
        g: f64,
        alpha: f64,
    ) -> Result<Self, AssemblyError> {
        for (name, value) in [("nu", nu), ("rho", rho), ("g", g), ("alpha", alpha)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(AssemblyError::InvalidParameter { name, value });
            }
        }
        conductivity.validate()?;
        Ok(ModelParams { nu, conductivity, rho, g, alpha })
    }

    /// Scalar kappa with unit remaining parameters.
    pub fn isotropic(nu: f64, kappa: f64) -> Result<Self, AssemblyError> {
        ModelParams::new(nu, Conductivity::Scalar(kappa), 1.0, 1.0, 1.0)
    }
}

pub type VecField = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;
pub type ScalarField = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Body force, source and Dirichlet data of a concrete problem.
#[derive(Clone)]
pub struct ProblemData {
    pub f_fluid: VecField,
    pub f_porous: ScalarField,
    pub g_velocity: VecField,
    pub g_head: ScalarField,
}

impl ProblemData {
    pub fn homogeneous() -> Self {
        ProblemData {
            f_fluid: Arc::new(|_| [0.0, 0.0]),
            f_porous: Arc::new(|_| 0.0),
            g_velocity: Arc::new(|_| [0.0, 0.0]),
            g_head: Arc::new(|_| 0.0),
        }
    }
}

/// Triplet accumulator with 32-bit indices to halve assembly memory.
pub struct TripletBuf {
    nrows: usize,
    ncols: usize,
    rows: Vec<u32>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl TripletBuf {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletBuf {
            nrows,
            ncols,
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        TripletBuf {
            nrows,
            ncols,
            rows: Vec::with_capacity(cap),
            cols: Vec::with_capacity(cap),
            vals: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.nrows && c < self.ncols);
        self.rows.push(r as u32);
        self.cols.push(c as u32);
        self.vals.push(v);
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn for_each(&self, mut f: impl FnMut(usize, usize, f64)) {
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            f(r as usize, c as usize, v);
        }
    }

    /// Compress into CSR, summing duplicates.
    pub fn compress(&self) -> SparseMatrix {
        let nrows = self.nrows;
        let mut counts = vec![0usize; nrows + 1];
        for &r in &self.rows {
            counts[r as usize + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0u32; self.len()];
        let mut vals = vec![0.0f64; self.len()];
        {
            let mut next = counts.clone();
            for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
                let p = next[r as usize];
                cols[p] = c;
                vals[p] = v;
                next[r as usize] += 1;
            }
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut out_cols: Vec<usize> = Vec::with_capacity(self.len());
        let mut out_vals: Vec<f64> = Vec::with_capacity(self.len());
        let mut idx: Vec<u32> = Vec::new();
        for r in 0..nrows {
            let lo = counts[r];
            let hi = counts[r + 1];
            idx.clear();
            idx.extend(0..(hi - lo) as u32);
            idx.sort_unstable_by_key(|&k| cols[lo + k as usize]);
            let mut last = u32::MAX;
            for &k in idx.iter() {
                let c = cols[lo + k as usize];
                let v = vals[lo + k as usize];
                if c == last {
                    *out_vals.last_mut().unwrap() += v;
                } else {
                    out_cols.push(c as usize);
                    out_vals.push(v);
                    last = c;
                }
            }
            row_ptr[r + 1] = out_cols.len();
        }
        SparseMatrix {
            nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx: out_cols,
            values: out_vals,
        }
    }
}

/// Reference basis tables at the quadrature points of a rule.
struct P2Table {
    vals: Vec<[f64; 6]>,
    grads: Vec<[[f64; 2]; 6]>,
}

fn tabulate_p2(rule: &TriRule) -> P2Table {
    P2Table {
        vals: rule.points.iter().map(|p| basis::p2_values(p[0], p[1])).collect(),
        grads: rule.points.iter().map(|p| basis::p2_grads(p[0], p[1])).collect(),
    }
}

fn tabulate_p1(rule: &TriRule) -> Vec<[f64; 3]> {
    rule.points.iter().map(|p| basis::p1_values(p[0], p[1])).collect()
}

fn push_physical_grads(geom: &ElemGeom, ref_grads: &[[f64; 2]; 6]) -> [[f64; 2]; 6] {
    let mut out = [[0.0; 2]; 6];
    for (k, g) in ref_grads.iter().enumerate() {
        out[k] = geom.push_grad(*g);
    }
    out
}

fn centroid(geom: &ElemGeom) -> [f64; 2] {
    geom.to_physical(1.0 / 3.0, 1.0 / 3.0)
}

/// Fluid momentum block: `int 2 nu D(u):D(v)` over the fluid triangles plus
/// the tangential interface penalty of the slip condition.
pub fn assemble_af(spaces: &Spaces, params: &ModelParams) -> SparseMatrix {
    let rule = TriRule::degree6();
    let tab = tabulate_p2(&rule);
    let vel = &spaces.velocity;
    let mesh = &spaces.mesh;
    let nu = params.nu;
    let mut trip = TripletBuf::with_capacity(
        vel.n_dofs(),
        vel.n_dofs(),
        vel.n_elems() * 144 + spaces.mesh.interface_edges.len() * 144,
    );

    for (e, &t) in vel.elems.iter().enumerate() {
        let geom = ElemGeom::new(mesh, t);
        let nodes = &vel.elem_nodes[e];
        let mut local = [[0.0f64; 12]; 12];
        for (q, w) in rule.weights.iter().enumerate() {
            let scale = w * geom.det * nu;
            let g = push_physical_grads(&geom, &tab.grads[q]);
            for a in 0..6 {
                for b in 0..6 {
                    let dot = g[a][0] * g[b][0] + g[a][1] * g[b][1];
                    for c in 0..2 {
                        for d in 0..2 {
                            // 2 nu D(Nb e_d) : D(Na e_c)
                            let val = if c == d {
                                dot + g[a][d] * g[b][c]
                            } else {
                                g[a][d] * g[b][c]
                            };
                            local[2 * a + c][2 * b + d] += scale * val;
                        }
                    }
                }
            }
        }
        for a in 0..6 {
            for c in 0..2 {
                let row = vel.dof(nodes[a], c);
                for b in 0..6 {
                    for d in 0..2 {
                        trip.push(row, vel.dof(nodes[b], d), local[2 * a + c][2 * b + d]);
                    }
                }
            }
        }
    }

    // Beavers-Joseph-Saffman tangential penalty on the interface.
    let seg = SegRule::gauss4();
    for edge in &mesh.interface_edges {
        let a = mesh.vertices[edge.v[0]];
        let b = mesh.vertices[edge.v[1]];
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let tau = edge.tangent;
        let fe = vel.tri_to_elem[edge.fluid_tri];
        let geom = ElemGeom::new(mesh, edge.fluid_tri);
        let nodes = &vel.elem_nodes[fe];
        let pe_geom = ElemGeom::new(mesh, edge.porous_tri);
        for (q, w) in seg.weights.iter().enumerate() {
            let t = seg.points[q];
            let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let k_tensor = params.conductivity.tensor_at(centroid(&pe_geom));
            let ktau = [
                k_tensor[0][0] * tau[0] + k_tensor[0][1] * tau[1],
                k_tensor[1][0] * tau[0] + k_tensor[1][1] * tau[1],
            ];
            let tau_nu_k_tau = nu * (tau[0] * ktau[0] + tau[1] * ktau[1]);
            let coef = nu * params.alpha / tau_nu_k_tau.sqrt();
            let rp = geom.to_reference(p);
            let vals = basis::p2_values(rp[0], rp[1]);
            let scale = w * len * coef;
            for ai in 0..6 {
                for bi in 0..6 {
                    let nanb = vals[ai] * vals[bi] * scale;
                    for c in 0..2 {
                        for d in 0..2 {
                            trip.push(
                                vel.dof(nodes[ai], c),
                                vel.dof(nodes[bi], d),
                                nanb * tau[c] * tau[d],
                            );
                        }
                    }
                }
            }
        }
    }
    trip.compress()
}

/// Darcy block: `rho g int K grad(phi) . grad(psi)` over the porous triangles.
pub fn assemble_ap(spaces: &Spaces, params: &ModelParams) -> SparseMatrix {
    let rule = TriRule::degree6();
    let tab = tabulate_p2(&rule);
    let head = &spaces.head;
    let mesh = &spaces.mesh;
    let rg = params.rho * params.g;
    let mut trip = TripletBuf::with_capacity(head.n_dofs(), head.n_dofs(), head.n_elems() * 36);
    for (e, &t) in head.elems.iter().enumerate() {
        let geom = ElemGeom::new(mesh, t);
        let k_tensor = params.conductivity.tensor_at(centroid(&geom));
        let nodes = &head.elem_nodes[e];
        let mut local = [[0.0f64; 6]; 6];
        for (q, w) in rule.weights.iter().enumerate() {
            let g = push_physical_grads(&geom, &tab.grads[q]);
            let scale = w * geom.det * rg;
            for b in 0..6 {
                let kg = [
                    k_tensor[0][0] * g[b][0] + k_tensor[0][1] * g[b][1],
                    k_tensor[1][0] * g[b][0] + k_tensor[1][1] * g[b][1],
                ];
                for a in 0..6 {
                    local[a][b] += scale * (kg[0] * g[a][0] + kg[1] * g[a][1]);
                }
            }
        }
        for a in 0..6 {
            for b in 0..6 {
                trip.push(nodes[a], nodes[b], local[a][b]);
            }
        }
    }
    trip.compress()
}

/// Pressure-velocity coupling `b(v, q) = -int q div v`, rows indexed by the
/// pressure basis.
pub fn assemble_b(spaces: &Spaces) -> SparseMatrix {
    let rule = TriRule::degree6();
    let tab = tabulate_p2(&rule);
    let p1tab = tabulate_p1(&rule);
    let vel = &spaces.velocity;
    let pres = &spaces.pressure;
    let mesh = &spaces.mesh;
    let mut trip = TripletBuf::with_capacity(pres.n_dofs(), vel.n_dofs(), vel.n_elems() * 36);
    for (e, &t) in vel.elems.iter().enumerate() {
        let geom = ElemGeom::new(mesh, t);
        let vnodes = &vel.elem_nodes[e];
        let pe = pres.tri_to_elem[t];
        let pnodes = &pres.elem_nodes[pe];
        let mut local = [[[0.0f64; 2]; 6]; 3];
        for (q, w) in rule.weights.iter().enumerate() {
            let g = push_physical_grads(&geom, &tab.grads[q]);
            let m = &p1tab[q];
            let scale = w * geom.det;
            for j in 0..3 {
                for b in 0..6 {
                    for d in 0..2 {
                        local[j][b][d] -= scale * m[j] * g[b][d];
                    }
                }
            }
        }
        for j in 0..3 {
            for b in 0..6 {
                for d in 0..2 {
                    trip.push(pnodes[j], vel.dof(vnodes[b], d), local[j][b][d]);
                }
            }
        }
    }
    trip.compress()
}

/// Interface coupling pair: `C` maps head to velocity tests through
/// `rho g int_G phi (v . n_f)`, `Ct` maps velocity to head tests through
/// `rho g int_G psi (u . n_f)`. Assembled independently so the skew relation
/// `Ct = C^T` is a checkable property.
pub fn assemble_interface_coupling(
    spaces: &Spaces,
    params: &ModelParams,
) -> (SparseMatrix, SparseMatrix) {
    let seg = SegRule::gauss4();
    let vel = &spaces.velocity;
    let head = &spaces.head;
    let mesh = &spaces.mesh;
    let rg = params.rho * params.g;
    let mut c_trip = TripletBuf::new(vel.n_dofs(), head.n_dofs());
    let mut ct_trip = TripletBuf::new(head.n_dofs(), vel.n_dofs());
    for edge in &mesh.interface_edges {
        let a = mesh.vertices[edge.v[0]];
        let b = mesh.vertices[edge.v[1]];
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let nf = edge.normal;
        let fe = vel.tri_to_elem[edge.fluid_tri];
        let fgeom = ElemGeom::new(mesh, edge.fluid_tri);
        let vnodes = &vel.elem_nodes[fe];
        let pe = head.tri_to_elem[edge.porous_tri];
        let pgeom = ElemGeom::new(mesh, edge.porous_tri);
        let hnodes = &head.elem_nodes[pe];
        for (q, w) in seg.weights.iter().enumerate() {
            let t = seg.points[q];
            let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let fr = fgeom.to_reference(p);
            let pr = pgeom.to_reference(p);
            let nv = basis::p2_values(fr[0], fr[1]);
            let psi = basis::p2_values(pr[0], pr[1]);
            let scale = w * len * rg;
            for ai in 0..6 {
                for k in 0..6 {
                    let base = scale * nv[ai] * psi[k];
                    for c in 0..2 {
                        c_trip.push(vel.dof(vnodes[ai], c), hnodes[k], base * nf[c]);
                    }
                }
            }
            for k in 0..6 {
                for bi in 0..6 {
                    let base = scale * psi[k] * nv[bi];
                    for d in 0..2 {
                        ct_trip.push(hnodes[k], vel.dof(vnodes[bi], d), base * nf[d]);
                    }
                }
            }
        }
    }
    (c_trip.compress(), ct_trip.compress())
}

/// Linearized convection pair at state `w`:
/// `N1 = c(. ; w, .)` (trial advects the frozen field) and
/// `N2 = c(w ; ., .)` (frozen field advects the trial).
pub fn assemble_oseen(
    spaces: &Spaces,
    params: &ModelParams,
    w: &FEFunction,
) -> (SparseMatrix, SparseMatrix) {
    let mut n1 = TripletBuf::with_capacity(
        spaces.velocity.n_dofs(),
        spaces.velocity.n_dofs(),
        spaces.velocity.n_elems() * 144,
    );
    let mut n2 = TripletBuf::with_capacity(
        spaces.velocity.n_dofs(),
        spaces.velocity.n_dofs(),
        spaces.velocity.n_elems() * 72,
    );
    assemble_oseen_into(spaces, params, w, &mut n1, &mut n2);
    (n1.compress(), n2.compress())
}

/// Shared Oseen element loop; callers choose separate or combined buffers.
pub(crate) fn assemble_oseen_into(
    spaces: &Spaces,
    params: &ModelParams,
    w: &FEFunction,
    n1: &mut TripletBuf,
    n2: &mut TripletBuf,
) {
    let rule = TriRule::degree6();
    let tab = tabulate_p2(&rule);
    let vel = &spaces.velocity;
    let mesh = &spaces.mesh;
    let rho = params.rho;
    for (e, &t) in vel.elems.iter().enumerate() {
        let geom = ElemGeom::new(mesh, t);
        let nodes = &vel.elem_nodes[e];
        let mut local1 = [[[0.0f64; 2]; 2]; 36]; // (a*6+b)[c][d]
        let mut local2 = [0.0f64; 36]; // same-component block
        for (q, w_q) in rule.weights.iter().enumerate() {
            let g = push_physical_grads(&geom, &tab.grads[q]);
            let vals = &tab.vals[q];
            // Value and Jacobian of the frozen field at the quadrature point.
            let mut wv = [0.0f64; 2];
            let mut wg = [[0.0f64; 2]; 2];
            for k in 0..6 {
                let wx = w.coeffs[2 * nodes[k]];
                let wy = w.coeffs[2 * nodes[k] + 1];
                wv[0] += vals[k] * wx;
                wv[1] += vals[k] * wy;
                for d in 0..2 {
                    wg[0][d] += g[k][d] * wx;
                    wg[1][d] += g[k][d] * wy;
                }
            }
            let scale = w_q * geom.det * rho;
            for a in 0..6 {
                let na = vals[a] * scale;
                for b in 0..6 {
                    // N1[(a,c),(b,d)] = rho int Nb dw_c/dx_d Na
                    let nanb = na * vals[b];
                    let slot = a * 6 + b;
                    for c in 0..2 {
                        for d in 0..2 {
                            local1[slot][c][d] += nanb * wg[c][d];
                        }
                    }
                    // N2[(a,c),(b,c)] = rho int (w . grad Nb) Na
                    local2[slot] += na * (wv[0] * g[b][0] + wv[1] * g[b][1]);
                }
            }
        }
        for a in 0..6 {
            for b in 0..6 {
                let slot = a * 6 + b;
                for c in 0..2 {
                    let row = vel.dof(nodes[a], c);
                    for d in 0..2 {
                        n1.push(row, vel.dof(nodes[b], d), local1[slot][c][d]);
                    }
                    n2.push(row, vel.dof(nodes[b], c), local2[slot]);
                }
            }
        }
    }
}

/// Right side carried over from the linearization: `c(w; w, v)`.
pub fn assemble_convection_rhs(spaces: &Spaces, params: &ModelParams, w: &FEFunction) -> Vec<f64> {
    let rule = TriRule::degree6();
    let tab = tabulate_p2(&rule);
    let vel = &spaces.velocity;
    let mesh = &spaces.mesh;
    let rho = params.rho;
    let mut rhs = vec![0.0f64; vel.n_dofs()];
    for (e, &t) in vel.elems.iter().enumerate() {
        let geom = ElemGeom::new(mesh, t);
        let nodes = &vel.elem_nodes[e];
        for (q, w_q) in rule.weights.iter().enumerate() {
            let g = push_physical_grads(&geom, &tab.grads[q]);
            let vals = &tab.vals[q];
            let mut wv = [0.0f64; 2];
            let mut wg = [[0.0f64; 2]; 2];
            for k in 0..6 {
                let wx = w.coeffs[2 * nodes[k]];
                let wy = w.coeffs[2 * nodes[k] + 1];
                wv[0] += vals[k] * wx;
                wv[1] += vals[k] * wy;
                for d in 0..2 {
                    wg[0][d] += g[k][d] * wx;
                    wg[1][d] += g[k][d] * wy;
                }
            }
            let conv = [
                wv[0] * wg[0][0] + wv[1] * wg[0][1],
                wv[0] * wg[1][0] + wv[1] * wg[1][1],
            ];
            let scale = w_q * geom.det * rho;
            for a in 0..6 {
                for c in 0..2 {
                    rhs[vel.dof(nodes[a], c)] += scale * vals[a] * conv[c];
                }
            }
        }
    }
    rhs
}

/// Load vectors `(f_f, v)` and `rho g (f_p, psi)`.
pub fn assemble_loads(
    spaces: &Spaces,
    data: &ProblemData,
    params: &ModelParams,
) -> (Vec<f64>, Vec<f64>) {
    let rule = TriRule::degree6();
    let tab = tabulate_p2(&rule);
    let vel = &spaces.velocity;
    let head = &spaces.head;
    let mesh = &spaces.mesh;
    let mut fluid = vec![0.0f64; vel.n_dofs()];
    for (e, &t) in vel.elems.iter().enumerate() {
        let geom = ElemGeom::new(mesh, t);
        let nodes = &vel.elem_nodes[e];
        for (q, w_q) in rule.weights.iter().enumerate() {
            let p = geom.to_physical(rule.points[q][0], rule.points[q][1]);
            let f = (data.f_fluid)(p);
            let scale = w_q * geom.det;
            for a in 0..6 {
                fluid[vel.dof(nodes[a], 0)] += scale * tab.vals[q][a] * f[0];
                fluid[vel.dof(nodes[a], 1)] += scale * tab.vals[q][a] * f[1];
            }
        }
    }
    let rg = params.rho * params.g;
    let mut porous = vec![0.0f64; head.n_dofs()];
    for (e, &t) in head.elems.iter().enumerate() {
        let geom = ElemGeom::new(mesh, t);
        let nodes = &head.elem_nodes[e];
        for (q, w_q) in rule.weights.iter().enumerate() {
            let p = geom.to_physical(rule.points[q][0], rule.points[q][1]);
            let f = (data.f_porous)(p);
            let scale = w_q * geom.det * rg;
            for a in 0..6 {
                porous[nodes[a]] += scale * tab.vals[q][a] * f;
            }
        }
    }
    (fluid, porous)
}

/// Mass matrix of a field, used for the discrete L2 norms of the stopping
/// rule.
pub fn assemble_mass(spaces: &Spaces, kind: FieldKind) -> SparseMatrix {
    let rule = TriRule::degree6();
    let map = match kind {
        FieldKind::VelocityP2 => &spaces.velocity,
        FieldKind::PressureP1 => &spaces.pressure,
        FieldKind::HeadP2 => &spaces.head,
    };
    let mesh = &spaces.mesh;
    let comps = kind.components();
    let nb = kind.nodes_per_elem();
    let p2tab = tabulate_p2(&rule);
    let p1tab = tabulate_p1(&rule);
    let mut trip = TripletBuf::with_capacity(map.n_dofs(), map.n_dofs(), map.n_elems() * nb * nb * comps);
    for (e, &t) in map.elems.iter().enumerate() {
        let geom = ElemGeom::new(mesh, t);
        let nodes = &map.elem_nodes[e];
        let mut local = [[0.0f64; 6]; 6];
        for (q, w_q) in rule.weights.iter().enumerate() {
            let scale = w_q * geom.det;
            for a in 0..nb {
                let va = if nb == 6 { p2tab.vals[q][a] } else { p1tab[q][a] };
                for b in 0..nb {
                    let vb = if nb == 6 { p2tab.vals[q][b] } else { p1tab[q][b] };
                    local[a][b] += scale * va * vb;
                }
            }
        }
        for a in 0..nb {
            for b in 0..nb {
                for c in 0..comps {
                    trip.push(map.dof(nodes[a], c), map.dof(nodes[b], c), local[a][b]);
                }
            }
        }
    }
    trip.compress()
}

/// Discrete L2 norm through a mass matrix: sqrt(x^T M x).
pub fn mass_norm(mass: &SparseMatrix, x: &[f64]) -> f64 {
    let mx = mass.spmv(x);
    x.iter().zip(&mx).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
}
