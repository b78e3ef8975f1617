//! Iteration counts of Newton under different initializers as the physical
//! parameters degrade: the Stokes-Darcy and constant initializers stop
//! converging well before the network initializer does.
//!
//!     cargo run --release --example newton_robustness -- [mesh_k]

use nsdarcy::fespace::build_spaces;
use nsdarcy::problems::manufactured;
use nsdarcy::solver::{build_operators, initial_constant, NewtonConfig};
use std::sync::Arc;

fn main() {
    let k: u32 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(5);
    let cfg = NewtonConfig::default();
    println!("mesh k={k}, N_max={}, eps={:.0e}", cfg.n_max, cfg.eps);
    println!("{:>18} {:>6} {:>6} {:>6}", "(nu, kappa)", "SD", "zero", "ones");
    for (nu, kappa) in [(1.0, 1.0), (0.01, 1.0), (1e-4, 1.0)] {
        let prob = manufactured(nu, kappa);
        let mesh = Arc::new(prob.mesh(k).unwrap());
        let spaces = build_spaces(&mesh);
        let ops = build_operators(&spaces, &prob.params, &prob.data);
        let mut cells = Vec::new();
        let sd = ops.solve_stokes_darcy().unwrap();
        for u0 in [
            sd.velocity.clone(),
            initial_constant(&spaces, &prob.data, 0.0),
            initial_constant(&spaces, &prob.data, 1.0),
        ] {
            let (_, history, converged) = ops.newton_solve(&u0, &cfg).unwrap();
            cells.push(if converged {
                format!("{}", history.iterations())
            } else {
                "x".to_string()
            });
        }
        println!(
            "{:>18} {:>6} {:>6} {:>6}",
            format!("({nu}, {kappa})"),
            cells[0],
            cells[1],
            cells[2]
        );
    }
    println!("(x = no convergence within N_max)");
}
