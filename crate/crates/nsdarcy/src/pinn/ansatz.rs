//! Boundary-enforcing ansatz: trained fields are `B(x) N(x) + g(x)` with a
//! smooth cutoff `B` vanishing on the strongly constrained boundary and an
//! extension `g` of the boundary data, so the prescribed conditions hold for
//! any network parameters. The pressure is the raw network.

use crate::fields::{FluidField, FluidPoint, PorousField, Scalar2};
use crate::pinn::resnet::{forward, output_panel, Panel, ResNetParams};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// A smooth scalar field with derivatives through second order.
pub type SmoothScalar = Arc<dyn Fn([f64; 2]) -> Scalar2 + Send + Sync>;

/// Cutoffs and boundary-data extensions for one problem.
#[derive(Clone)]
pub struct AnsatzSpec {
    /// Vanishes on the outer fluid boundary, not identically on the interface.
    pub b_u: SmoothScalar,
    /// Vanishes on the outer porous boundary, not identically on the interface.
    pub b_phi: SmoothScalar,
    /// Extension of the velocity boundary data.
    pub g_u: [SmoothScalar; 2],
    /// Extension of the head boundary data.
    pub g_phi: SmoothScalar,
}

/// The three networks of the deep-learning phase.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PinnModel {
    pub net_u: ResNetParams,
    pub net_p: ResNetParams,
    pub net_phi: ResNetParams,
}

/// Scalar2 view of one output of an evaluated panel.
pub(crate) fn panel_scalar2(panel: &Panel, point: usize, out: usize) -> Scalar2 {
    let n = panel.rows;
    let idx = point * n + out;
    Scalar2 {
        v: panel.v[idx],
        dx: if panel.order >= 1 { panel.dx[idx] } else { 0.0 },
        dy: if panel.order >= 1 { panel.dy[idx] } else { 0.0 },
        dxx: if panel.order >= 2 { panel.sxx[idx] } else { 0.0 },
        dxy: if panel.order >= 2 { panel.sxy[idx] } else { 0.0 },
        dyy: if panel.order >= 2 { panel.syy[idx] } else { 0.0 },
    }
}

/// Write a Scalar2 adjoint into an output-panel adjoint slot.
pub(crate) fn add_panel_adjoint(panel: &mut Panel, point: usize, out: usize, adj: &Scalar2) {
    let n = panel.rows;
    let idx = point * n + out;
    panel.v[idx] += adj.v;
    if panel.order >= 1 {
        panel.dx[idx] += adj.dx;
        panel.dy[idx] += adj.dy;
        if panel.order >= 2 {
            panel.sxx[idx] += adj.dxx;
            panel.sxy[idx] += adj.dxy;
            panel.syy[idx] += adj.dyy;
        }
    }
}

/// Compose `B*N + g` with the product rule through second order.
pub(crate) fn compose(b: &Scalar2, n: &Scalar2, g: &Scalar2) -> Scalar2 {
    b.mul(n).add(g)
}

/// Pull a composed-field adjoint back to the raw network output:
/// the transpose of the product rule in `compose`.
pub(crate) fn compose_adjoint(b: &Scalar2, field_adj: &Scalar2) -> Scalar2 {
    Scalar2 {
        v: b.v * field_adj.v
            + b.dx * field_adj.dx
            + b.dy * field_adj.dy
            + b.dxx * field_adj.dxx
            + b.dxy * field_adj.dxy
            + b.dyy * field_adj.dyy,
        dx: b.v * field_adj.dx + 2.0 * b.dx * field_adj.dxx + b.dy * field_adj.dxy,
        dy: b.v * field_adj.dy + b.dx * field_adj.dxy + 2.0 * b.dy * field_adj.dyy,
        dxx: b.v * field_adj.dxx,
        dxy: b.v * field_adj.dxy,
        dyy: b.v * field_adj.dyy,
    }
}

/// Ansatz fields with derivatives at one point. `order` caps the derivative
/// depth actually propagated through the networks.
pub fn ansatz_eval(
    model: &PinnModel,
    spec: &AnsatzSpec,
    x: [f64; 2],
    order: usize,
) -> (FluidPoint, Scalar2) {
    let su = forward(&model.net_u, &[x], order);
    let pu = output_panel(&model.net_u, &su, order);
    let sp = forward(&model.net_p, &[x], order.min(1));
    let pp = output_panel(&model.net_p, &sp, order.min(1));
    let sphi = forward(&model.net_phi, &[x], order);
    let pphi = output_panel(&model.net_phi, &sphi, order);

    let bu = (spec.b_u)(x);
    let bphi = (spec.b_phi)(x);
    let fluid = FluidPoint {
        u: [
            compose(&bu, &panel_scalar2(&pu, 0, 0), &(spec.g_u[0])(x)),
            compose(&bu, &panel_scalar2(&pu, 0, 1), &(spec.g_u[1])(x)),
        ],
        p: panel_scalar2(&pp, 0, 0),
    };
    let phi = compose(&bphi, &panel_scalar2(&pphi, 0, 0), &(spec.g_phi)(x));
    (fluid, phi)
}

/// Ansatz as a field provider for the residual code.
pub struct AnsatzField<'a> {
    pub model: &'a PinnModel,
    pub spec: &'a AnsatzSpec,
}

impl FluidField for AnsatzField<'_> {
    fn fluid_at(&self, p: [f64; 2]) -> FluidPoint {
        ansatz_eval(self.model, self.spec, p, 2).0
    }
}

impl PorousField for AnsatzField<'_> {
    fn porous_at(&self, p: [f64; 2]) -> Scalar2 {
        ansatz_eval(self.model, self.spec, p, 2).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::manufactured;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn small_model(rng: &mut ChaCha8Rng) -> PinnModel {
        PinnModel {
            net_u: ResNetParams::init(8, 2, 2, 0.3, rng),
            net_p: ResNetParams::init(8, 2, 1, 0.3, rng),
            net_phi: ResNetParams::init(8, 2, 1, 0.3, rng),
        }
    }

    #[test]
    fn boundary_values_are_exact() {
        let prob = manufactured(1.0, 1.0);
        let exact = prob.exact.as_ref().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = small_model(&mut rng);
        // Gamma_f samples: x = 0, x = pi, y = pi sides.
        for &x in &[[0.0, 1.1], [PI, 2.3], [0.9, PI], [2.7, PI]] {
            let (fluid, _) = ansatz_eval(&model, &prob.ansatz, x, 0);
            let g = exact.velocity(x);
            assert!((fluid.u[0].v - g[0]).abs() < 1e-10);
            assert!((fluid.u[1].v - g[1]).abs() < 1e-10);
        }
        // Gamma_p samples.
        for &x in &[[0.0, -1.1], [PI, -0.4], [1.8, -PI]] {
            let (_, phi) = ansatz_eval(&model, &prob.ansatz, x, 0);
            assert!((phi.v - exact.head(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_networks_reproduce_extensions() {
        let prob = manufactured(1.0, 1.0);
        let exact = prob.exact.as_ref().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut model = small_model(&mut rng);
        model.net_u.a.iter_mut().for_each(|v| *v = 0.0);
        model.net_p.a.iter_mut().for_each(|v| *v = 0.0);
        model.net_phi.a.iter_mut().for_each(|v| *v = 0.0);
        let x = [1.2, 0.7];
        let (fluid, _) = ansatz_eval(&model, &prob.ansatz, x, 1);
        assert!((fluid.u[0].v - exact.velocity(x)[0]).abs() < 1e-14);
        assert!((fluid.p.v).abs() < 1e-14);
        let y = [1.2, -0.7];
        let (_, phi) = ansatz_eval(&model, &prob.ansatz, y, 1);
        assert!((phi.v - exact.head(y)).abs() < 1e-14);
    }

    #[test]
    fn ansatz_derivatives_match_finite_differences() {
        let prob = manufactured(1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = small_model(&mut rng);
        let h = 1e-4;
        for &x in &[[0.8, 0.9], [2.0, 1.5]] {
            let (fluid, _) = ansatz_eval(&model, &prob.ansatz, x, 2);
            let f = |p: [f64; 2]| ansatz_eval(&model, &prob.ansatz, p, 0).0.u[0].v;
            let gx = (f([x[0] + h, x[1]]) - f([x[0] - h, x[1]])) / (2.0 * h);
            assert!((fluid.u[0].dx - gx).abs() < 1e-5 * (1.0 + gx.abs()));
            let hxx = (f([x[0] + h, x[1]]) - 2.0 * f(x) + f([x[0] - h, x[1]])) / (h * h);
            assert!((fluid.u[0].dxx - hxx).abs() < 1e-3 * (1.0 + hxx.abs()));
            let hxy = (f([x[0] + h, x[1] + h]) - f([x[0] + h, x[1] - h]) - f([x[0] - h, x[1] + h])
                + f([x[0] - h, x[1] - h]))
                / (4.0 * h * h);
            assert!((fluid.u[0].dxy - hxy).abs() < 1e-3 * (1.0 + hxy.abs()));
        }
    }

    #[test]
    fn compose_adjoint_is_transpose_of_compose() {
        // <compose(B, N), W> = <N, compose_adjoint(B, W)> for the linear-in-N part.
        let b = Scalar2 { v: 0.7, dx: -0.3, dy: 0.5, dxx: 0.2, dxy: -0.1, dyy: 0.4 };
        let n = Scalar2 { v: 1.1, dx: 0.6, dy: -0.8, dxx: -0.2, dxy: 0.9, dyy: 0.3 };
        let w = Scalar2 { v: -0.4, dx: 0.2, dy: 0.7, dxx: 0.5, dxy: -0.6, dyy: 0.1 };
        let zero = Scalar2::constant(0.0);
        let fwd = compose(&b, &n, &zero);
        let lhs = fwd.v * w.v + fwd.dx * w.dx + fwd.dy * w.dy + fwd.dxx * w.dxx + fwd.dxy * w.dxy + fwd.dyy * w.dyy;
        let adj = compose_adjoint(&b, &w);
        let rhs = n.v * adj.v + n.dx * adj.dx + n.dy * adj.dy + n.dxx * adj.dxx + n.dxy * adj.dxy + n.dyy * adj.dyy;
        assert!((lhs - rhs).abs() < 1e-14);
    }
}
