//! Mesh-refinement study on the manufactured problem: third-order velocity
//! and head L2 errors, second-order pressure L2 and H1 errors.
//!
//!     cargo run --release --example convergence_study -- [k_min] [k_max]

use nsdarcy::analysis::{
    convergence_order, rel_h1_error_scalar, rel_h1_error_vector, rel_l2_error_scalar,
    rel_l2_error_vector,
};
use nsdarcy::fespace::build_spaces;
use nsdarcy::problems::manufactured;
use nsdarcy::solver::{build_operators, NewtonConfig};
use std::sync::Arc;

fn main() {
    let mut args = std::env::args().skip(1);
    let k_min: u32 = args.next().map(|s| s.parse().unwrap()).unwrap_or(3);
    let k_max: u32 = args.next().map(|s| s.parse().unwrap()).unwrap_or(5);

    let prob = manufactured(1.0, 1.0);
    let exact = prob.exact.clone().unwrap();
    let mut hs = Vec::new();
    let mut errs: [Vec<f64>; 5] = Default::default();
    println!("{:>10} {:>12} {:>12} {:>12} {:>12} {:>12} {:>4}", "h", "L2(u)", "L2(p)", "L2(phi)", "H1(u)", "H1(phi)", "K");
    for k in k_min..=k_max {
        let mesh = Arc::new(prob.mesh(k).unwrap());
        let spaces = build_spaces(&mesh);
        let ops = build_operators(&spaces, &prob.params, &prob.data);
        let sd = ops.solve_stokes_darcy().unwrap();
        let (state, history, converged) = ops
            .newton_solve(&sd.velocity, &NewtonConfig::default())
            .unwrap();
        assert!(converged);
        let h = std::f64::consts::PI / (1u64 << k) as f64;
        hs.push(h);
        let e = [
            rel_l2_error_vector(&state.velocity, |p| exact.velocity(p)),
            rel_l2_error_scalar(&state.pressure, |p| exact.pressure(p)),
            rel_l2_error_scalar(&state.head, |p| exact.head(p)),
            rel_h1_error_vector(&state.velocity, |p| exact.velocity_grad(p)),
            rel_h1_error_scalar(&state.head, |p| exact.head_grad(p)),
        ];
        for (store, v) in errs.iter_mut().zip(e) {
            store.push(v);
        }
        println!(
            "{:>10.5} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>4}",
            h, e[0], e[1], e[2], e[3], e[4], history.iterations()
        );
    }
    let names = ["L2(u)", "L2(p)", "L2(phi)", "H1(u)", "H1(phi)"];
    println!("observed orders:");
    for (name, e) in names.iter().zip(&errs) {
        let orders: Vec<String> = convergence_order(e, &hs)
            .iter()
            .map(|o| format!("{o:.3}"))
            .collect();
        println!("  {name:>8}: {}", orders.join("  "));
    }
}
