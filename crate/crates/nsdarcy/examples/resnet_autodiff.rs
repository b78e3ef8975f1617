//! The differentiation engine behind the training loss: exact spatial
//! gradients and Hessians of a residual network, checked here against
//! central finite differences.
//!
//!     cargo run --release --example resnet_autodiff

use nsdarcy::pinn::ResNetParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = ResNetParams::init(16, 4, 2, 0.5, &mut rng);
    println!("ResNet width 16, depth 4, 2 outputs; activation max(x^3, 0)");
    let h = 1e-4;
    let mut worst_grad = 0.0f64;
    let mut worst_hess = 0.0f64;
    for _ in 0..100 {
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let out = net.eval(x, 2).unwrap();
        for o in 0..2 {
            let f = |p: [f64; 2]| net.eval(p, 0).unwrap().value[o];
            let gx = (f([x[0] + h, x[1]]) - f([x[0] - h, x[1]])) / (2.0 * h);
            let hxx = (f([x[0] + h, x[1]]) - 2.0 * f(x) + f([x[0] - h, x[1]])) / (h * h);
            worst_grad = worst_grad.max((out.grad[o][0] - gx).abs() / (1.0 + gx.abs()));
            worst_hess = worst_hess.max((out.hess[o][0] - hxx).abs() / (1.0 + hxx.abs()));
        }
    }
    println!("worst relative deviation from central differences over 100 points:");
    println!("  gradient: {worst_grad:.2e}  (finite-difference truncation is O(h^2) = 1e-8)");
    println!("  Hessian:  {worst_hess:.2e}");
    let x = [0.3, -0.6];
    let out = net.eval(x, 2).unwrap();
    println!("sample point {x:?}:");
    for o in 0..2 {
        println!(
            "  output {o}: value {:+.5}, grad ({:+.5}, {:+.5}), hess ({:+.5}, {:+.5}, {:+.5})",
            out.value[o],
            out.grad[o][0],
            out.grad[o][1],
            out.hess[o][0],
            out.hess[o][1],
            out.hess[o][2]
        );
    }
}
