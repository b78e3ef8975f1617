//! The lid-driven cavity over a heterogeneous porous bed: solve, locate where
//! the flow crosses the interface, and write the fields as a VTK file.
//!
//!     cargo run --release --example lid_driven -- [nu] [mesh_k] [out.vtk]

use nsdarcy::cli::interface_crossing;
use nsdarcy::fespace::build_spaces;
use nsdarcy::problems::lid_driven;
use nsdarcy::solver::{build_operators, NewtonConfig};
use nsdarcy::vtk::write_state_vtk;
use std::path::PathBuf;
use std::sync::Arc;

fn main() {
    let mut args = std::env::args().skip(1);
    let nu: f64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let k: u32 = args.next().map(|s| s.parse().unwrap()).unwrap_or(4);
    let out: PathBuf = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("lid_driven.vtk"));

    let prob = lid_driven(nu);
    let mesh = Arc::new(prob.mesh(k).unwrap());
    let spaces = build_spaces(&mesh);
    let ops = build_operators(&spaces, &prob.params, &prob.data);
    let sd = ops.solve_stokes_darcy().unwrap();
    let (state, history, converged) = ops
        .newton_solve(&sd.velocity, &NewtonConfig::default())
        .unwrap();
    println!(
        "nu = {nu}: K = {}, converged = {converged}",
        history.iterations()
    );
    match interface_crossing(&mesh, &state) {
        Some(x) => println!(
            "flow crosses the interface near x = {x:.3} (into the bed for larger x)"
        ),
        None => println!("no interface crossing found"),
    }
    write_state_vtk(&out, &mesh, &state).unwrap();
    println!("fields written to {}", out.display());
}
