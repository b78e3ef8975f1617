//! Error norms, convergence orders, and solution diagnostics.
//!
//! Error integrals use a degree-8 rule so quadrature never dominates the
//! interpolation error being measured.

use crate::fespace::quadrature::TriRule;
use crate::fespace::{ElemGeom, FEFunction};
use crate::linalg::{factorize, SparseMatrix};
use serde::Serialize;

/// Relative errors of one solve, in the norms reported by the experiment
/// tables, plus discrete max errors per component.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ErrorReport {
    pub h: f64,
    pub l2_u: f64,
    pub l2_p: f64,
    pub l2_phi: f64,
    pub h1_u: f64,
    pub h1_phi: f64,
    pub max_u: f64,
    pub max_v: f64,
    pub max_p: f64,
    pub max_phi: f64,
    pub iterations: usize,
}

/// Relative L2 error of a vector field against a callable.
pub fn rel_l2_error_vector(fe: &FEFunction, exact: impl Fn([f64; 2]) -> [f64; 2]) -> f64 {
    let rule = TriRule::degree8();
    let map = &fe.map;
    let mesh = &map.mesh;
    let mut num = 0.0;
    let mut den = 0.0;
    for (e, &t) in map.elems.iter().enumerate() {
        let geom = ElemGeom::new(mesh, t);
        for (q, w) in rule.weights.iter().enumerate() {
            let pt = rule.points[q];
            let phys = geom.to_physical(pt[0], pt[1]);
            let vh = fe.eval_vector(e, pt);
            let ve = exact(phys);
            let scale = w * geom.det;
            num += scale * ((vh[0] - ve[0]).powi(2) + (vh[1] - ve[1]).powi(2));
            den += scale * (ve[0] * ve[0] + ve[1] * ve[1]);
        }
    }
    (num / den).sqrt()
}

/// Relative L2 error of a scalar field.
pub fn rel_l2_error_scalar(fe: &FEFunction, exact: impl Fn([f64; 2]) -> f64) -> f64 {
    let rule = TriRule::degree8();
    let map = &fe.map;
    let mesh = &map.mesh;
    let mut num = 0.0;
    let mut den = 0.0;
    for (e, &t) in map.elems.iter().enumerate() {
        let geom = ElemGeom::new(mesh, t);
        for (q, w) in rule.weights.iter().enumerate() {
            let pt = rule.points[q];
            let phys = geom.to_physical(pt[0], pt[1]);
            let vh = fe.eval_scalar(e, pt);
            let ve = exact(phys);
            let scale = w * geom.det;
            num += scale * (vh - ve).powi(2);
            den += scale * ve * ve;
        }
    }
    (num / den).sqrt()
}

/// Relative H1-seminorm error of a vector field against its exact Jacobian.
pub fn rel_h1_error_vector(fe: &FEFunction, exact_grad: impl Fn([f64; 2]) -> [[f64; 2]; 2]) -> f64 {
    let rule = TriRule::degree8();
    let map = &fe.map;
    let mesh = &map.mesh;
    let mut num = 0.0;
    let mut den = 0.0;
    for (e, &t) in map.elems.iter().enumerate() {
        let geom = ElemGeom::new(mesh, t);
        for (q, w) in rule.weights.iter().enumerate() {
            let pt = rule.points[q];
            let phys = geom.to_physical(pt[0], pt[1]);
            let gh = fe.eval_vector_grad(e, &geom, pt);
            let ge = exact_grad(phys);
            let scale = w * geom.det;
            for c in 0..2 {
                for d in 0..2 {
                    num += scale * (gh[c][d] - ge[c][d]).powi(2);
                    den += scale * ge[c][d] * ge[c][d];
                }
            }
        }
    }
    (num / den).sqrt()
}

/// Relative H1-seminorm error of a scalar field.
pub fn rel_h1_error_scalar(fe: &FEFunction, exact_grad: impl Fn([f64; 2]) -> [f64; 2]) -> f64 {
    let rule = TriRule::degree8();
    let map = &fe.map;
    let mesh = &map.mesh;
    let mut num = 0.0;
    let mut den = 0.0;
    for (e, &t) in map.elems.iter().enumerate() {
        let geom = ElemGeom::new(mesh, t);
        for (q, w) in rule.weights.iter().enumerate() {
            let pt = rule.points[q];
            let phys = geom.to_physical(pt[0], pt[1]);
            let gh = fe.eval_scalar_grad(e, &geom, pt);
            let ge = exact_grad(phys);
            let scale = w * geom.det;
            num += scale * ((gh[0] - ge[0]).powi(2) + (gh[1] - ge[1]).powi(2));
            den += scale * (ge[0] * ge[0] + ge[1] * ge[1]);
        }
    }
    (num / den).sqrt()
}

/// Max absolute difference over a supplied point set.
pub fn discrete_max_error(values: &[f64], exact: &[f64]) -> f64 {
    values
        .iter()
        .zip(exact)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

/// Observed orders between consecutive (h, error) pairs:
/// `log(e_i/e_{i+1}) / log(h_i/h_{i+1})`.
pub fn convergence_order(errors: &[f64], hs: &[f64]) -> Vec<f64> {
    assert_eq!(errors.len(), hs.len());
    errors
        .windows(2)
        .zip(hs.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

/// || D(u) ||_{0, Omega_f}: the L2 norm of the symmetric velocity gradient.
pub fn deformation_norm(fe: &FEFunction) -> f64 {
    let rule = TriRule::degree8();
    let map = &fe.map;
    let mesh = &map.mesh;
    let mut total = 0.0;
    for (e, &t) in map.elems.iter().enumerate() {
        let geom = ElemGeom::new(mesh, t);
        for (q, w) in rule.weights.iter().enumerate() {
            let g = fe.eval_vector_grad(e, &geom, rule.points[q]);
            let d = [
                [g[0][0], 0.5 * (g[0][1] + g[1][0])],
                [0.5 * (g[0][1] + g[1][0]), g[1][1]],
            ];
            let frob = d[0][0] * d[0][0] + 2.0 * d[0][1] * d[0][1] + d[1][1] * d[1][1];
            total += w * geom.det * frob;
        }
    }
    total.sqrt()
}

/// Estimate of the discrete inf-sup constant: the smallest generalized
/// singular value of the divergence coupling against the deformation-norm
/// Gram matrix, i.e. the square root of the smallest eigenvalue of
/// `M_p^{-1} B K^{-1} B^T` restricted to the constrained velocity space.
pub fn inf_sup_constant(
    b: &SparseMatrix,
    velocity_gram: &SparseMatrix,
    pressure_mass: &SparseMatrix,
    constrained: &[bool],
) -> f64 {
    let n_u = b.ncols;
    let n_p = b.nrows;
    // Constrain the velocity Gram matrix (identity rows/cols on constrained
    // dofs) so the inverse acts on the admissible space.
    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    for r in 0..n_u {
        let (cols, vals) = velocity_gram.row(r);
        if constrained[r] {
            trip.push((r, r, 1.0));
            continue;
        }
        for (c, v) in cols.iter().zip(vals) {
            if !constrained[*c] {
                trip.push((r, *c, *v));
            }
        }
    }
    let gram = SparseMatrix::from_triplets(n_u, n_u, &trip).unwrap();
    let fact = factorize(&gram).expect("velocity gram is definite");

    // Dense Schur complement S = B K^{-1} B^T (pressure side is small).
    let mut s = vec![vec![0.0f64; n_p]; n_p];
    for q in 0..n_p {
        // B^T e_q is row q of B.
        let mut rhs = vec![0.0; n_u];
        let (cols, vals) = b.row(q);
        for (c, v) in cols.iter().zip(vals) {
            if !constrained[*c] {
                rhs[*c] = *v;
            }
        }
        let z = fact.solve(&rhs);
        let bz = b.spmv(&z);
        for r in 0..n_p {
            s[r][q] = bz[r];
        }
    }
    // Smallest eigenvalue of M_p^{-1} S by inverse power iteration on
    // S y = lambda M_p y  <=>  y = S^{-1} M_p y / lambda.
    let s_mat = {
        let mut trip = Vec::new();
        for (r, row) in s.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    trip.push((r, c, v));
                }
            }
        }
        SparseMatrix::from_triplets(n_p, n_p, &trip).unwrap()
    };
    let s_fact = factorize(&s_mat).expect("Schur complement is definite");
    let mut y: Vec<f64> = (0..n_p).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let my = pressure_mass.spmv(&y);
        let z = s_fact.solve(&my);
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in y.iter_mut() {
            *v = 0.0;
        }
        for (yi, zi) in y.iter_mut().zip(&z) {
            *yi = zi / norm;
        }
        // Rayleigh quotient lambda = (y^T S y) / (y^T M y).
        let sy = s_mat.spmv(&y);
        let my2 = pressure_mass.spmv(&y);
        let num: f64 = y.iter().zip(&sy).map(|(a, b)| a * b).sum();
        let den: f64 = y.iter().zip(&my2).map(|(a, b)| a * b).sum();
        lambda = num / den;
    }
    lambda.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{build_spaces, nodal_interpolate_scalar, nodal_interpolate_vector};
    use crate::mesh::{build_rect_mesh, couple_meshes, CoupledMesh, Rect, Region};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn coupled_pi(n: usize) -> Arc<CoupledMesh> {
        let fluid =
            build_rect_mesh(Rect::new(0.0, PI, 0.0, PI).unwrap(), n, n, Region::Fluid).unwrap();
        let porous =
            build_rect_mesh(Rect::new(0.0, PI, -PI, 0.0).unwrap(), n, n, Region::Porous).unwrap();
        Arc::new(couple_meshes(&fluid, &porous).unwrap())
    }

    #[test]
    fn interpolant_of_quadratic_has_zero_error() {
        let spaces = build_spaces(&coupled_pi(4));
        let f = |p: [f64; 2]| p[0] * p[0] - 3.0 * p[0] * p[1] + 2.0;
        let grad = |p: [f64; 2]| [2.0 * p[0] - 3.0 * p[1], -3.0 * p[0]];
        let fe = nodal_interpolate_scalar(&spaces.head, f);
        assert!(rel_l2_error_scalar(&fe, f) < 1e-12);
        assert!(rel_h1_error_scalar(&fe, grad) < 1e-12);
    }

    #[test]
    fn relative_error_is_scale_invariant() {
        let spaces = build_spaces(&coupled_pi(3));
        let f = |p: [f64; 2]| (p[0]).sin() * (p[1] + 0.2);
        let fe = nodal_interpolate_scalar(&spaces.head, f);
        let e1 = rel_l2_error_scalar(&fe, |p| f(p) * 1.0);
        let mut fe2 = fe.clone();
        fe2.coeffs.iter_mut().for_each(|c| *c *= 2.0);
        let e2 = rel_l2_error_scalar(&fe2, |p| 2.0 * f(p));
        assert!((e1 - e2).abs() < 1e-13);
    }

    #[test]
    fn vector_error_orders_under_refinement() {
        let f = |p: [f64; 2]| [(p[0]).sin() * p[1], (p[1] * 0.7).cos()];
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        for n in [4usize, 8] {
            let spaces = build_spaces(&coupled_pi(n));
            let fe = nodal_interpolate_vector(&spaces.velocity, f);
            errs.push(rel_l2_error_vector(&fe, f));
            hs.push(PI / n as f64);
        }
        let order = convergence_order(&errs, &hs)[0];
        assert!((order - 3.0).abs() < 0.2, "interpolation order {order}");
    }

    #[test]
    fn discrete_max_cases() {
        assert_eq!(discrete_max_error(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(discrete_max_error(&[1.5, 2.5], &[1.0, 2.0]), 0.5);
    }

    #[test]
    fn order_arithmetic() {
        // Exact h^2 data.
        let hs = [0.1, 0.05, 0.025];
        let errs: Vec<f64> = hs.iter().map(|h| 7.0 * h * h).collect();
        for o in convergence_order(&errs, &hs) {
            assert!((o - 2.0).abs() < 1e-12);
        }
        // Reported convergence table values reproduce their order column.
        let errs = [3.4269e-06, 4.2851e-07, 5.3574e-08];
        let hs = [PI / 64.0, PI / 128.0, PI / 256.0];
        let orders = convergence_order(&errs, &hs);
        assert!((orders[0] - 2.9995).abs() < 1e-3);
        assert!((orders[1] - 2.9997).abs() < 1e-3);
        // Constant errors give order zero.
        let flat = convergence_order(&[1.0, 1.0], &[0.1, 0.05]);
        assert!(flat[0].abs() < 1e-12);
    }

    #[test]
    fn deformation_norm_of_linear_field() {
        let spaces = build_spaces(&coupled_pi(2));
        // u = (x, -y): D(u) = diag(1, -1), |D|^2 = 2, over area pi^2.
        let fe = nodal_interpolate_vector(&spaces.velocity, |p| [p[0], -p[1]]);
        let expect = (2.0 * PI * PI).sqrt();
        assert!((deformation_norm(&fe) - expect).abs() < 1e-10);
    }
}
