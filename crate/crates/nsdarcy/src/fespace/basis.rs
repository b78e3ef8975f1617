//! Lagrange bases on the reference triangle with vertices (0,0), (1,0), (0,1).
//!
//! P2 node order: the three vertices, then the midpoints of edges (0,1),
//! (1,2), (2,0).

/// P1 values at a reference point.
pub fn p1_values(xi: f64, eta: f64) -> [f64; 3] {
    [1.0 - xi - eta, xi, eta]
}

/// P1 reference gradients (constant).
pub fn p1_grads() -> [[f64; 2]; 3] {
    [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]
}

/// P2 values at a reference point.
pub fn p2_values(xi: f64, eta: f64) -> [f64; 6] {
    let l0 = 1.0 - xi - eta;
    let l1 = xi;
    let l2 = eta;
    [
        l0 * (2.0 * l0 - 1.0),
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        4.0 * l0 * l1,
        4.0 * l1 * l2,
        4.0 * l2 * l0,
    ]
}

/// P2 reference gradients at a reference point.
pub fn p2_grads(xi: f64, eta: f64) -> [[f64; 2]; 6] {
    let l0 = 1.0 - xi - eta;
    let l1 = xi;
    let l2 = eta;
    // dl0 = (-1,-1), dl1 = (1,0), dl2 = (0,1)
    [
        [-(4.0 * l0 - 1.0), -(4.0 * l0 - 1.0)],
        [4.0 * l1 - 1.0, 0.0],
        [0.0, 4.0 * l2 - 1.0],
        [4.0 * (l0 - l1), -4.0 * l1],
        [4.0 * l2, 4.0 * l1],
        [-4.0 * l2, 4.0 * (l0 - l2)],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p1_partition_of_unity_at_barycenter() {
        let v = p1_values(1.0 / 3.0, 1.0 / 3.0);
        for x in v {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn p2_lagrange_property() {
        let nodes = [
            (0.0, 0.0),
            (1.0, 0.0),
            (0.0, 1.0),
            (0.5, 0.0),
            (0.5, 0.5),
            (0.0, 0.5),
        ];
        for (i, &(xi, eta)) in nodes.iter().enumerate() {
            let v = p2_values(xi, eta);
            for (j, &vj) in v.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((vj - expect).abs() < 1e-14, "N{j}({xi},{eta}) = {vj}");
            }
        }
    }

    #[test]
    fn p2_gradients_sum_to_zero() {
        for &(xi, eta) in &[(0.2, 0.3), (0.0, 0.0), (0.5, 0.25), (1.0 / 3.0, 1.0 / 3.0)] {
            let g = p2_grads(xi, eta);
            let sx: f64 = g.iter().map(|v| v[0]).sum();
            let sy: f64 = g.iter().map(|v| v[1]).sum();
            assert!(sx.abs() < 1e-14 && sy.abs() < 1e-14);
        }
    }
}
