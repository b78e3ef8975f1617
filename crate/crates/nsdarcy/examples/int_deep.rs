//! The hybrid method end to end on parameters where every classical
//! initializer fails: brief training, nodal interpolation of the learned
//! velocity, then Newton.
//!
//!     cargo run --release --example int_deep -- [nu] [kappa] [mesh_k] [seed]

use nsdarcy::fespace::build_spaces;
use nsdarcy::intdeep::int_deep_solve;
use nsdarcy::pinn::PinnConfig;
use nsdarcy::problems::manufactured;
use nsdarcy::solver::{build_operators, initial_constant, NewtonConfig};
use std::sync::Arc;
use std::time::Instant;

fn main() {
    let mut args = std::env::args().skip(1);
    let nu: f64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(1e-4);
    let kappa: f64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(1e-8);
    let k: u32 = args.next().map(|s| s.parse().unwrap()).unwrap_or(6);
    let seed: u64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(0);

    let prob = manufactured(nu, kappa);
    let mesh = Arc::new(prob.mesh(k).unwrap());
    let spaces = build_spaces(&mesh);
    let newton_cfg = NewtonConfig::default();

    // The classical initializers first, for contrast.
    let ops = build_operators(&spaces, &prob.params, &prob.data);
    let sd = ops.solve_stokes_darcy().unwrap();
    for (name, u0) in [
        ("Stokes-Darcy", sd.velocity.clone()),
        ("zero", initial_constant(&spaces, &prob.data, 0.0)),
        ("ones", initial_constant(&spaces, &prob.data, 1.0)),
    ] {
        let (_, history, converged) = ops.newton_solve(&u0, &newton_cfg).unwrap();
        println!(
            "{name:>14} initializer: {}",
            if converged {
                format!("K = {}", history.iterations())
            } else {
                format!("no convergence within {}", newton_cfg.n_max)
            }
        );
    }

    let pinn_cfg = PinnConfig { epochs: 200, seed, ..Default::default() };
    let t0 = Instant::now();
    let (_, history, converged, meta) =
        int_deep_solve(&prob, &spaces, &pinn_cfg, &newton_cfg).unwrap();
    println!(
        "{:>14} initializer: {} [{:.1}s total, {} training epochs]",
        "network",
        if converged {
            format!("K = {}", history.iterations())
        } else {
            "no convergence".into()
        },
        t0.elapsed().as_secs_f64(),
        meta.epochs
    );
    let e: Vec<String> = history.steps.iter().map(|s| format!("{:.2e}", s.e_n)).collect();
    println!("  relative changes: {}", e.join("  "));
}
