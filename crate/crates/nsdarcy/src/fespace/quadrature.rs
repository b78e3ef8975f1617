//! Symmetric quadrature on the reference triangle and Gauss rules on the unit
//! segment.
//!
//! Triangle weights sum to the reference measure 1/2, segment weights to 1, so
//! physical integrals only need the Jacobian determinant / edge length factor.

/// Quadrature rule on the reference triangle (0,0)-(1,0)-(0,1).
#[derive(Clone, Debug)]
pub struct TriRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Gauss rule on the parameter interval [0,1].
#[derive(Clone, Debug)]
pub struct SegRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

fn push_perm3(points: &mut Vec<[f64; 2]>, weights: &mut Vec<f64>, a: f64, b: f64, w: f64) {
    // All three permutations of the barycentric triple (a, b, b);
    // reference coordinates are (xi, eta) = (l1, l2).
    for bary in [[a, b, b], [b, a, b], [b, b, a]] {
        points.push([bary[1], bary[2]]);
        weights.push(w * 0.5);
    }
}

fn push_perm6(points: &mut Vec<[f64; 2]>, weights: &mut Vec<f64>, a: f64, b: f64, c: f64, w: f64) {
    for bary in [
        [a, b, c],
        [a, c, b],
        [b, a, c],
        [b, c, a],
        [c, a, b],
        [c, b, a],
    ] {
        points.push([bary[1], bary[2]]);
        weights.push(w * 0.5);
    }
}

impl TriRule {
    /// 12-point rule, exact through polynomial degree 6.
    pub fn degree6() -> TriRule {
        let mut points = Vec::with_capacity(12);
        let mut weights = Vec::with_capacity(12);
        push_perm3(
            &mut points,
            &mut weights,
            0.501426509658179,
            0.249286745170910,
            0.116786275726379,
        );
        push_perm3(
            &mut points,
            &mut weights,
            0.873821971016996,
            0.063089014491502,
            0.050844906370207,
        );
        push_perm6(
            &mut points,
            &mut weights,
            0.053145049844816,
            0.310352451033785,
            0.636502499121399,
            0.082851075618374,
        );
        TriRule {
            points,
            weights,
            degree: 6,
        }
    }

    /// 25-point rule, exact through polynomial degree 8. Built as a 5x5
    /// Gauss product under the Duffy map (u, v) -> (u, v(1-u)), whose
    /// Jacobian (1-u) raises the u-degree by one: 5-point Gauss covers it.
    /// Used for error norms so that quadrature never dominates interpolation
    /// error.
    pub fn degree8() -> TriRule {
        let gx = [
            -0.9061798459386640,
            -0.5384693101056831,
            0.0,
            0.5384693101056831,
            0.9061798459386640,
        ];
        let gw = [
            0.2369268850561891,
            0.4786286704993665,
            0.5688888888888889,
            0.4786286704993665,
            0.2369268850561891,
        ];
        let mut points = Vec::with_capacity(25);
        let mut weights = Vec::with_capacity(25);
        for i in 0..5 {
            let u = 0.5 * (gx[i] + 1.0);
            let wu = 0.5 * gw[i];
            for j in 0..5 {
                let v = 0.5 * (gx[j] + 1.0);
                let wv = 0.5 * gw[j];
                points.push([u, v * (1.0 - u)]);
                weights.push(wu * wv * (1.0 - u));
            }
        }
        TriRule {
            points,
            weights,
            degree: 8,
        }
    }
}

impl SegRule {
    /// 4-point Gauss-Legendre on [0,1], exact through degree 7.
    pub fn gauss4() -> SegRule {
        let x1 = 0.3399810435848563;
        let x2 = 0.8611363115940526;
        let w1 = 0.6521451548625461;
        let w2 = 0.3478548451374538;
        SegRule {
            points: vec![
                0.5 * (1.0 - x2),
                0.5 * (1.0 - x1),
                0.5 * (1.0 + x1),
                0.5 * (1.0 + x2),
            ],
            weights: vec![0.5 * w2, 0.5 * w1, 0.5 * w1, 0.5 * w2],
            degree: 7,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Closed form of the reference-triangle monomial integral.
    fn monomial_integral(a: usize, b: usize) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    fn check_rule(rule: &TriRule) {
        assert!(rule.weights.iter().all(|&w| w > 0.0));
        let sum: f64 = rule.weights.iter().sum();
        assert!((sum - 0.5).abs() < 1e-14);
        for a in 0..=rule.degree {
            for b in 0..=(rule.degree - a) {
                let q: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                    .sum();
                let exact = monomial_integral(a, b);
                assert!(
                    (q - exact).abs() < 1e-14,
                    "degree-{} rule fails on x^{a} y^{b}: {q} vs {exact}",
                    rule.degree
                );
            }
        }
    }

    #[test]
    fn degree6_exactness() {
        check_rule(&TriRule::degree6());
    }

    #[test]
    fn degree8_exactness() {
        check_rule(&TriRule::degree8());
    }

    #[test]
    fn gauss4_exactness() {
        let rule = SegRule::gauss4();
        let sum: f64 = rule.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-14);
        for k in 0..=rule.degree {
            let q: f64 = rule
                .points
                .iter()
                .zip(&rule.weights)
                .map(|(t, w)| w * t.powi(k as i32))
                .sum();
            let exact = 1.0 / (k as f64 + 1.0);
            assert!((q - exact).abs() < 1e-14, "t^{k}: {q} vs {exact}");
        }
    }
}
