//! Train the residual networks on the manufactured problem and report the
//! discrete max errors of the learned fields.
//!
//!     cargo run --release --example train_pinn -- [epochs] [seed]

use nsdarcy::cli::dl_max_errors;
use nsdarcy::pinn::{train, PinnConfig};
use nsdarcy::problems::manufactured;
use std::time::Instant;

fn main() {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map(|s| s.parse().unwrap()).unwrap_or(200);
    let seed: u64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(0);

    let prob = manufactured(1.0, 1.0);
    let cfg = PinnConfig { epochs, seed, ..Default::default() };
    println!(
        "training: width {}, depths {}/{}, batches {}/{}/{}, eta {:.0e}, {} epochs",
        cfg.width, cfg.depth_fluid, cfg.depth_darcy, cfg.n1, cfg.n2, cfg.n3, cfg.eta, cfg.epochs
    );
    let t0 = Instant::now();
    let (model, history) = train(&prob, &cfg).unwrap();
    println!(
        "done in {:.1}s; loss {:.3} -> {:.3}",
        t0.elapsed().as_secs_f64(),
        history.first().map(|r| r.loss).unwrap_or(f64::NAN),
        history.last().map(|r| r.loss).unwrap_or(f64::NAN)
    );
    for r in history.iter().step_by((epochs / 10).max(1)) {
        println!("  epoch {:>5}: loss {:>9.4}, lr {:.3e}", r.epoch, r.loss, r.lr);
    }
    let errs = dl_max_errors(&prob, &model, 6).unwrap();
    println!("discrete max errors on the test grid:");
    println!(
        "  |u - u_dl| = {:.4e}\n  |v - v_dl| = {:.4e}\n  kappa|p - p_dl| = {:.4e}\n  kappa|phi - phi_dl| = {:.4e}",
        errs[0], errs[1], errs[2], errs[3]
    );
}
