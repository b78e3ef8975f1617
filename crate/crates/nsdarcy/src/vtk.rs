//! Legacy ASCII VTK output of meshes and vertex fields, plus a CSV dump of
//! dof values.

use crate::fespace::FEFunction;
use crate::mesh::{CoupledMesh, Region};
use crate::solver::CoupledState;
use std::io::Write;
use std::path::Path;

/// Vertex-sampled data attached to a VTK file.
pub enum PointData<'a> {
    Scalars(&'a str, Vec<f64>),
    Vectors(&'a str, Vec<[f64; 2]>),
}

fn write_header(out: &mut impl Write, mesh: &CoupledMesh, title: &str) -> std::io::Result<()> {
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{title}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", mesh.n_vertices())?;
    for v in &mesh.vertices {
        writeln!(out, "{:.12e} {:.12e} 0.0", v[0], v[1])?;
    }
    writeln!(out, "CELLS {} {}", mesh.n_triangles(), 4 * mesh.n_triangles())?;
    for t in &mesh.triangles {
        writeln!(out, "3 {} {} {}", t.v[0], t.v[1], t.v[2])?;
    }
    writeln!(out, "CELL_TYPES {}", mesh.n_triangles())?;
    for _ in 0..mesh.n_triangles() {
        writeln!(out, "5")?;
    }
    writeln!(out, "CELL_DATA {}", mesh.n_triangles())?;
    writeln!(out, "SCALARS region int 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for t in &mesh.triangles {
        writeln!(out, "{}", if t.region == Region::Fluid { 0 } else { 1 })?;
    }
    Ok(())
}

/// Write the mesh with the region tag per cell and optional vertex data.
pub fn write_vtk(path: &Path, mesh: &CoupledMesh, data: &[PointData<'_>]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_header(&mut out, mesh, "coupled flow")?;
    if !data.is_empty() {
        writeln!(out, "POINT_DATA {}", mesh.n_vertices())?;
        for item in data {
            match item {
                PointData::Scalars(name, values) => {
                    assert_eq!(values.len(), mesh.n_vertices());
                    writeln!(out, "SCALARS {name} double 1")?;
                    writeln!(out, "LOOKUP_TABLE default")?;
                    for v in values {
                        writeln!(out, "{v:.12e}")?;
                    }
                }
                PointData::Vectors(name, values) => {
                    assert_eq!(values.len(), mesh.n_vertices());
                    writeln!(out, "VECTORS {name} double")?;
                    for v in values {
                        writeln!(out, "{:.12e} {:.12e} 0.0", v[0], v[1])?;
                    }
                }
            }
        }
    }
    out.flush()
}

/// Vertex samples of a field: vertex dofs where the field lives, zero on the
/// other subdomain.
pub fn vertex_scalars(mesh: &CoupledMesh, fe: &FEFunction) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_vertices()];
    let map = &fe.map;
    for (e, &t) in map.elems.iter().enumerate() {
        for k in 0..3 {
            let node = map.elem_nodes[e][k];
            out[mesh.triangles[t].v[k]] = fe.coeffs[map.dof(node, 0)];
        }
    }
    out
}

pub fn vertex_vectors(mesh: &CoupledMesh, fe: &FEFunction) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0; 2]; mesh.n_vertices()];
    let map = &fe.map;
    for (e, &t) in map.elems.iter().enumerate() {
        for k in 0..3 {
            let node = map.elem_nodes[e][k];
            out[mesh.triangles[t].v[k]] = [fe.coeffs[map.dof(node, 0)], fe.coeffs[map.dof(node, 1)]];
        }
    }
    out
}

/// Write a full coupled state as one VTK file (velocity, pressure, head).
pub fn write_state_vtk(path: &Path, mesh: &CoupledMesh, state: &CoupledState) -> std::io::Result<()> {
    let data = [
        PointData::Vectors("velocity", vertex_vectors(mesh, &state.velocity)),
        PointData::Scalars("pressure", vertex_scalars(mesh, &state.pressure)),
        PointData::Scalars("head", vertex_scalars(mesh, &state.head)),
    ];
    write_vtk(path, mesh, &data)
}

/// CSV dump of a finite element function: dof index, coordinates, value.
pub fn write_fe_csv(path: &Path, fe: &FEFunction) -> std::io::Result<()> {
    let mut out = String::from("dof,x,y,value\n");
    for d in 0..fe.coeffs.len() {
        let p = fe.map.dof_coord(d);
        out.push_str(&format!("{d},{:.12e},{:.12e},{:.12e}\n", p[0], p[1], fe.coeffs[d]));
    }
    std::fs::write(path, out)
}
