//! Solve the manufactured coupled problem on one mesh and report the error
//! norms against the closed-form solution.
//!
//!     cargo run --release --example solve_fem -- [mesh_k] [nu] [kappa]

use nsdarcy::analysis::{
    rel_h1_error_scalar, rel_h1_error_vector, rel_l2_error_scalar, rel_l2_error_vector,
};
use nsdarcy::fespace::build_spaces;
use nsdarcy::problems::manufactured;
use nsdarcy::solver::{build_operators, NewtonConfig};
use std::sync::Arc;
use std::time::Instant;

fn main() {
    let mut args = std::env::args().skip(1);
    let k: u32 = args.next().map(|s| s.parse().unwrap()).unwrap_or(5);
    let nu: f64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let kappa: f64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(1.0);

    let prob = manufactured(nu, kappa);
    let exact = prob.exact.clone().expect("manufactured problem has a closed form");
    let mesh = Arc::new(prob.mesh(k).unwrap());
    let spaces = build_spaces(&mesh);
    println!(
        "mesh k={k}: {} triangles, {} velocity dofs, {} pressure dofs, {} head dofs",
        mesh.n_triangles(),
        spaces.velocity.n_dofs(),
        spaces.pressure.n_dofs(),
        spaces.head.n_dofs()
    );

    let t0 = Instant::now();
    let ops = build_operators(&spaces, &prob.params, &prob.data);
    let sd = ops.solve_stokes_darcy().unwrap();
    let (state, history, converged) = ops
        .newton_solve(&sd.velocity, &NewtonConfig::default())
        .unwrap();
    println!(
        "Newton from the Stokes-Darcy initializer: K = {}, converged = {converged} [{:.1}s]",
        history.iterations(),
        t0.elapsed().as_secs_f64()
    );
    for s in &history.steps {
        println!(
            "  step {}: e_n = {:.3e}, divergence residual = {:.2e}",
            s.step, s.e_n, s.div_residual
        );
    }
    println!("relative errors against the closed form:");
    println!(
        "  L2(u)  = {:.4e}\n  L2(p)  = {:.4e}\n  L2(phi)= {:.4e}\n  H1(u)  = {:.4e}\n  H1(phi)= {:.4e}",
        rel_l2_error_vector(&state.velocity, |p| exact.velocity(p)),
        rel_l2_error_scalar(&state.pressure, |p| exact.pressure(p)),
        rel_l2_error_scalar(&state.head, |p| exact.head(p)),
        rel_h1_error_vector(&state.velocity, |p| exact.velocity_grad(p)),
        rel_h1_error_scalar(&state.head, |p| exact.head_grad(p)),
    );
}
