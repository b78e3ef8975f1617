//! Pointwise strong-form residuals of the coupled model and their adjoints
//! with respect to the field derivative bundles.
//!
//! The same residual code runs on network ansatz fields and on closed-form
//! solutions, which is how the residual formulas and the manufactured
//! interface compatibility are verified.

use crate::fields::{FluidPoint, Scalar2};

/// Momentum and mass residuals of the Navier-Stokes equations at one point:
/// `-div T(u,p) + rho (u.grad)u - f` expanded through `2 D(u)` as
/// `-nu (Lap u + grad div u) + grad p`, and `div u`.
pub fn fluid_residual(f: &FluidPoint, nu: f64, rho: f64, force: [f64; 2]) -> ([f64; 2], f64) {
    let [u, v] = &f.u;
    let p = &f.p;
    let mom = [
        -nu * (2.0 * u.dxx + u.dyy + v.dxy) + p.dx + rho * (u.v * u.dx + v.v * u.dy) - force[0],
        -nu * (2.0 * v.dyy + v.dxx + u.dxy) + p.dy + rho * (u.v * v.dx + v.v * v.dy) - force[1],
    ];
    (mom, u.dx + v.dy)
}

/// Adjoint of `fluid_residual`: seeds are dJ/d(momentum), dJ/d(divergence).
pub fn fluid_residual_adjoint(
    f: &FluidPoint,
    nu: f64,
    rho: f64,
    mom_seed: [f64; 2],
    div_seed: f64,
) -> ([Scalar2; 2], Scalar2) {
    let [u, v] = &f.u;
    let (sx, sy, sd) = (mom_seed[0], mom_seed[1], div_seed);
    let ubar = Scalar2 {
        v: rho * (u.dx * sx + v.dx * sy),
        dx: rho * u.v * sx + sd,
        dy: rho * v.v * sx,
        dxx: -2.0 * nu * sx,
        dxy: -nu * sy,
        dyy: -nu * sx,
    };
    let vbar = Scalar2 {
        v: rho * (u.dy * sx + v.dy * sy),
        dx: rho * u.v * sy,
        dy: rho * v.v * sy + sd,
        dxx: -nu * sy,
        dxy: -nu * sx,
        dyy: -2.0 * nu * sy,
    };
    let pbar = Scalar2 { v: 0.0, dx: sx, dy: sy, dxx: 0.0, dxy: 0.0, dyy: 0.0 };
    ([ubar, vbar], pbar)
}

/// Darcy residual `f_p + div(K grad phi)` for a (locally constant) symmetric
/// conductivity tensor.
pub fn darcy_residual(phi: &Scalar2, k: [[f64; 2]; 2], source: f64) -> f64 {
    source + k[0][0] * phi.dxx + 2.0 * k[0][1] * phi.dxy + k[1][1] * phi.dyy
}

pub fn darcy_residual_adjoint(k: [[f64; 2]; 2], seed: f64) -> Scalar2 {
    Scalar2 {
        v: 0.0,
        dx: 0.0,
        dy: 0.0,
        dxx: k[0][0] * seed,
        dxy: 2.0 * k[0][1] * seed,
        dyy: k[1][1] * seed,
    }
}

/// The three interface residuals at a point of the interface: mass-flux
/// continuity, normal-stress balance (unweighted), and the tangential slip
/// condition.
pub struct InterfaceResidual {
    pub flux: f64,
    pub stress: f64,
    pub bjs: f64,
}

pub struct InterfaceContext {
    pub normal: [f64; 2],
    pub tangent: [f64; 2],
    pub k: [[f64; 2]; 2],
    pub nu: f64,
    pub rho_g: f64,
    pub alpha: f64,
}

impl InterfaceContext {
    /// nu alpha / sqrt(tau . nu K tau).
    pub fn bjs_coefficient(&self) -> f64 {
        let t = self.tangent;
        let kt = [
            self.k[0][0] * t[0] + self.k[0][1] * t[1],
            self.k[1][0] * t[0] + self.k[1][1] * t[1],
        ];
        let denom = self.nu * (t[0] * kt[0] + t[1] * kt[1]);
        self.nu * self.alpha / denom.sqrt()
    }
}

fn stress_normal(f: &FluidPoint, nu: f64, n: [f64; 2]) -> [f64; 2] {
    let [u, v] = &f.u;
    let d12 = 0.5 * (u.dy + v.dx);
    [
        2.0 * nu * (u.dx * n[0] + d12 * n[1]) - f.p.v * n[0],
        2.0 * nu * (d12 * n[0] + v.dy * n[1]) - f.p.v * n[1],
    ]
}

pub fn interface_residual(f: &FluidPoint, phi: &Scalar2, ctx: &InterfaceContext) -> InterfaceResidual {
    let n = ctx.normal;
    let t = ctx.tangent;
    let kgrad = [
        ctx.k[0][0] * phi.dx + ctx.k[0][1] * phi.dy,
        ctx.k[1][0] * phi.dx + ctx.k[1][1] * phi.dy,
    ];
    let flux = f.u[0].v * n[0] + f.u[1].v * n[1] + kgrad[0] * n[0] + kgrad[1] * n[1];
    let tn = stress_normal(f, ctx.nu, n);
    let stress = ctx.rho_g * phi.v + tn[0] * n[0] + tn[1] * n[1];
    let bjs = tn[0] * t[0]
        + tn[1] * t[1]
        + ctx.bjs_coefficient() * (f.u[0].v * t[0] + f.u[1].v * t[1]);
    InterfaceResidual { flux, stress, bjs }
}

/// Adjoint of `interface_residual` with seeds for (flux, stress, bjs).
pub fn interface_residual_adjoint(
    ctx: &InterfaceContext,
    seeds: [f64; 3],
) -> ([Scalar2; 2], Scalar2, Scalar2) {
    let n = ctx.normal;
    let t = ctx.tangent;
    let (sf, ss, sb) = (seeds[0], seeds[1], seeds[2]);
    let cbjs = ctx.bjs_coefficient();
    // Stress-normal adjoint from both the stress and slip residuals.
    let tnbar = [n[0] * ss + t[0] * sb, n[1] * ss + t[1] * sb];
    let nu = ctx.nu;
    let ubar = Scalar2 {
        v: n[0] * sf + cbjs * t[0] * sb,
        dx: 2.0 * nu * n[0] * tnbar[0],
        dy: nu * (n[1] * tnbar[0] + n[0] * tnbar[1]),
        dxx: 0.0,
        dxy: 0.0,
        dyy: 0.0,
    };
    let vbar = Scalar2 {
        v: n[1] * sf + cbjs * t[1] * sb,
        dx: nu * (n[1] * tnbar[0] + n[0] * tnbar[1]),
        dy: 2.0 * nu * n[1] * tnbar[1],
        dxx: 0.0,
        dxy: 0.0,
        dyy: 0.0,
    };
    let pbar = Scalar2 {
        v: -(n[0] * tnbar[0] + n[1] * tnbar[1]),
        ..Default::default()
    };
    let phibar = Scalar2 {
        v: ctx.rho_g * ss,
        dx: (ctx.k[0][0] * n[0] + ctx.k[1][0] * n[1]) * sf,
        dy: (ctx.k[0][1] * n[0] + ctx.k[1][1] * n[1]) * sf,
        dxx: 0.0,
        dxy: 0.0,
        dyy: 0.0,
    };
    ([ubar, vbar], pbar, phibar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{FluidField, PorousField};
    use crate::problems::manufactured;

    /// Running the closed-form solution through the strong-form residual code
    /// must give zeros everywhere: this pins the residual formulas and the
    /// manufactured interface compatibility at once.
    #[test]
    fn closed_form_substitution_vanishes() {
        for (nu, kappa) in [(1.0, 1.0), (0.01, 1.0), (1e-4, 1e-8)] {
            let prob = manufactured(nu, kappa);
            let exact = prob.exact.as_ref().unwrap();
            // Interior fluid residuals.
            for p in [[0.3, 0.4], [1.2, 2.8], [3.0, 0.04]] {
                let fp = exact.fluid_at(p);
                let (mom, div) = fluid_residual(&fp, nu, 1.0, (prob.data.f_fluid)(p));
                assert!(mom[0].abs() < 1e-10, "mom_x {} at nu={nu}", mom[0]);
                assert!(mom[1].abs() < 1e-10);
                assert!(div.abs() < 1e-12);
            }
            // Interior Darcy residuals.
            for p in [[0.5, -0.3], [2.2, -2.9]] {
                let phi = exact.porous_at(p);
                let k = prob.params.conductivity.tensor_at(p);
                let r = darcy_residual(&phi, k, (prob.data.f_porous)(p));
                assert!(r.abs() < 1e-10, "darcy {r}");
            }
            // All three interface residuals.
            let ctx = InterfaceContext {
                normal: [0.0, -1.0],
                tangent: [1.0, 0.0],
                k: prob.params.conductivity.tensor_at([1.0, 0.0]),
                nu,
                rho_g: 1.0,
                alpha: 1.0,
            };
            for x in [0.2, 1.4, 2.9] {
                let p = [x, 0.0];
                let f = exact.fluid_at(p);
                let phi = exact.porous_at(p);
                let r = interface_residual(&f, &phi, &ctx);
                // The stress balance cancels two terms of size 1/(3 kappa);
                // the bound is absolute at kappa = 1 and relative beyond.
                let stress_scale = 1.0f64.max(phi.v.abs());
                assert!(r.flux.abs() < 1e-10, "flux {}", r.flux);
                assert!(r.stress.abs() < 1e-10 * stress_scale, "stress {}", r.stress);
                assert!(r.bjs.abs() < 1e-10, "bjs {}", r.bjs);
                // The manufactured normal flux is 2 sin(x) on the interface.
                let u_n = f.u[0].v * ctx.normal[0] + f.u[1].v * ctx.normal[1];
                assert!((u_n - 2.0 * x.sin()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_fields_leave_only_data_terms() {
        let f = FluidPoint::default();
        let (mom, div) = fluid_residual(&f, 1.0, 1.0, [3.0, -2.0]);
        assert_eq!(mom, [-3.0, 2.0]);
        assert_eq!(div, 0.0);
        let r = darcy_residual(&Scalar2::default(), [[1.0, 0.0], [0.0, 1.0]], 5.0);
        assert_eq!(r, 5.0);
    }

    #[test]
    fn tiny_conductivity_scales_stress_weight() {
        // The weighting ||K||_2 is applied by the loss, but the BJS
        // coefficient grows like 1/sqrt(kappa); check both hooks.
        let ctx = InterfaceContext {
            normal: [0.0, -1.0],
            tangent: [1.0, 0.0],
            k: [[1e-8, 0.0], [0.0, 1e-8]],
            nu: 1e-4,
            rho_g: 1.0,
            alpha: 1.0,
        };
        let expect = 1e-4 / (1e-4f64 * 1e-8).sqrt();
        assert!((ctx.bjs_coefficient() - expect).abs() < 1e-6 * expect);
    }

    /// Hand-derived adjoints validated against finite differences of the
    /// residual values.
    #[test]
    fn adjoints_match_finite_differences() {
        let base = FluidPoint {
            u: [
                Scalar2 { v: 0.4, dx: -0.2, dy: 0.7, dxx: 0.1, dxy: -0.3, dyy: 0.5 },
                Scalar2 { v: -0.6, dx: 0.9, dy: 0.2, dxx: -0.4, dxy: 0.6, dyy: -0.1 },
            ],
            p: Scalar2 { v: 0.3, dx: -0.8, dy: 0.45, dxx: 0.0, dxy: 0.0, dyy: 0.0 },
        };
        let phi = Scalar2 { v: 0.25, dx: 0.65, dy: -0.35, dxx: 0.15, dxy: 0.05, dyy: -0.55 };
        let (nu, rho) = (0.3, 1.7);
        let ctx = InterfaceContext {
            normal: [0.0, -1.0],
            tangent: [1.0, 0.0],
            k: [[2.0, 0.5], [0.5, 1.0]],
            nu,
            rho_g: 1.3,
            alpha: 0.8,
        };
        let seeds_m = [0.9, -1.1];
        let seed_d = 0.7;
        let seeds_i = [0.6, -0.4, 1.2];

        // J = seeds . residuals; dJ/d(component) must match the adjoint.
        let j = |f: &FluidPoint, phi: &Scalar2| -> f64 {
            let (mom, div) = fluid_residual(f, nu, rho, [0.0, 0.0]);
            let ir = interface_residual(f, phi, &ctx);
            mom[0] * seeds_m[0] + mom[1] * seeds_m[1] + div * seed_d
                + ir.flux * seeds_i[0]
                + ir.stress * seeds_i[1]
                + ir.bjs * seeds_i[2]
        };
        let (mut ubar, mut pbar) = fluid_residual_adjoint(&base, nu, rho, seeds_m, seed_d);
        let (ubar_i, pbar_i, phibar) = interface_residual_adjoint(&ctx, seeds_i);
        ubar[0] = ubar[0].add(&ubar_i[0]);
        ubar[1] = ubar[1].add(&ubar_i[1]);
        pbar = pbar.add(&pbar_i);

        let h = 1e-6;
        let mut check = |set: &dyn Fn(&mut FluidPoint, &mut Scalar2, f64), analytic: f64| {
            let mut fp = base;
            let mut php = phi;
            set(&mut fp, &mut php, h);
            let plus = j(&fp, &php);
            let mut fm = base;
            let mut phm = phi;
            set(&mut fm, &mut phm, -h);
            let minus = j(&fm, &phm);
            let fd = (plus - minus) / (2.0 * h);
            assert!((analytic - fd).abs() < 1e-6 * (1.0 + fd.abs()), "{analytic} vs {fd}");
        };
        check(&|f, _, d| f.u[0].v += d, ubar[0].v);
        check(&|f, _, d| f.u[0].dx += d, ubar[0].dx);
        check(&|f, _, d| f.u[0].dy += d, ubar[0].dy);
        check(&|f, _, d| f.u[0].dxx += d, ubar[0].dxx);
        check(&|f, _, d| f.u[0].dxy += d, ubar[0].dxy);
        check(&|f, _, d| f.u[0].dyy += d, ubar[0].dyy);
        check(&|f, _, d| f.u[1].v += d, ubar[1].v);
        check(&|f, _, d| f.u[1].dx += d, ubar[1].dx);
        check(&|f, _, d| f.u[1].dy += d, ubar[1].dy);
        check(&|f, _, d| f.u[1].dxy += d, ubar[1].dxy);
        check(&|f, _, d| f.p.v += d, pbar.v);
        check(&|f, _, d| f.p.dx += d, pbar.dx);
        check(&|f, _, d| f.p.dy += d, pbar.dy);
        check(&|_, ph, d| ph.v += d, phibar.v);
        check(&|_, ph, d| ph.dx += d, phibar.dx);
        check(&|_, ph, d| ph.dy += d, phibar.dy);

        // Darcy adjoint separately.
        let kd = ctx.k;
        let seed = -0.9;
        let dj = |ph: &Scalar2| darcy_residual(ph, kd, 0.2) * seed;
        let phibar_d = darcy_residual_adjoint(kd, seed);
        let muts: [(fn(&mut Scalar2, f64), f64); 3] = [
            (|ph, d| ph.dxx += d, phibar_d.dxx),
            (|ph, d| ph.dxy += d, phibar_d.dxy),
            (|ph, d| ph.dyy += d, phibar_d.dyy),
        ];
        for (mutate, ana) in muts {
            let mut plus = phi;
            mutate(&mut plus, h);
            let mut minus = phi;
            mutate(&mut minus, -h);
            let fd = (dj(&plus) - dj(&minus)) / (2.0 * h);
            assert!((ana - fd).abs() < 1e-8 * (1.0 + fd.abs()));
        }
    }
}
