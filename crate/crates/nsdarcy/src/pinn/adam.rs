//! Adam over the concatenated parameters of the three networks, with the
//! exponentially decaying learning-rate schedule applied per epoch.

use crate::pinn::ansatz::PinnModel;
use crate::pinn::loss::ModelGrads;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// First/second moment estimates over a flat parameter vector.
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// One update over parameter/gradient slice pairs, visited in a fixed
    /// order. `lr` is the already-decayed step size for this epoch.
    pub fn step<'a>(
        &mut self,
        pairs: impl Iterator<Item = (&'a mut [f64], &'a [f64])>,
        lr: f64,
    ) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        let mut off = 0usize;
        for (theta, grad) in pairs {
            debug_assert_eq!(theta.len(), grad.len());
            let m = &mut self.m[off..off + theta.len()];
            let v = &mut self.v[off..off + theta.len()];
            for i in 0..theta.len() {
                let g = grad[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                theta[i] -= lr * mhat / (vhat.sqrt() + EPS);
            }
            off += theta.len();
        }
        debug_assert_eq!(off, self.m.len());
    }
}

/// Parameter/gradient slice pairs of a model in canonical order.
pub fn param_grad_pairs<'a>(
    model: &'a mut PinnModel,
    grads: &'a ModelGrads,
) -> impl Iterator<Item = (&'a mut [f64], &'a [f64])> {
    let nets = [
        (&mut model.net_u, &grads.u),
        (&mut model.net_p, &grads.p),
        (&mut model.net_phi, &grads.phi),
    ];
    nets.into_iter().flat_map(|(net, g)| {
        net.w
            .iter_mut()
            .map(|w| w.as_mut_slice())
            .zip(g.w.iter().map(|w| w.as_slice()))
            .chain(
                net.b
                    .iter_mut()
                    .map(|b| b.as_mut_slice())
                    .zip(g.b.iter().map(|b| b.as_slice())),
            )
            .chain(std::iter::once((net.a.as_mut_slice(), g.a.as_slice())))
    })
}

pub fn model_param_count(model: &PinnModel) -> usize {
    model.net_u.n_params() + model.net_p.n_params() + model.net_phi.n_params()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut state = AdamState::new(3);
        let mut theta = vec![1.0, -2.0, 0.5];
        let grad = vec![0.0; 3];
        for _ in 0..10 {
            state.step(std::iter::once((theta.as_mut_slice(), grad.as_slice())), 1e-2);
        }
        assert_eq!(theta, vec![1.0, -2.0, 0.5]);
    }

    /// With a constant gradient the bias-corrected update settles at the
    /// learning rate (unit-step property).
    #[test]
    fn constant_gradient_step_magnitude_approaches_lr() {
        let mut state = AdamState::new(1);
        let mut theta = vec![0.0];
        let grad = vec![0.3];
        let lr = 1e-3;
        let mut prev = theta[0];
        let mut last_step = 0.0;
        for _ in 0..2000 {
            state.step(std::iter::once((theta.as_mut_slice(), grad.as_slice())), lr);
            last_step = (theta[0] - prev).abs();
            prev = theta[0];
        }
        assert!((last_step - lr).abs() < 0.05 * lr, "step {last_step} vs lr {lr}");
    }

    #[test]
    fn decayed_rate_after_ten_thousand_epochs() {
        let eta = 5e-3;
        let decay = 0.01f64.powf(1.0 / 10000.0);
        let eta_l = eta * decay.powi(10000);
        assert!((eta_l - 5e-5).abs() < 1e-12);
    }
}
