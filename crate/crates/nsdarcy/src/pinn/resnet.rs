//! Residual networks with skip connections and an exact differentiation
//! engine.
//!
//! Input derivatives are propagated forward per layer as
//! (value, gradient, Hessian) triples: the activation `max(x^3, 0)` is C^2,
//! so second spatial derivatives are well defined everywhere. Parameter
//! gradients are reverse-accumulated over the same graph. Batches are
//! processed as column-major `width x batch` panels through GEMM kernels.

use matrixmultiply::dgemm;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Activation value and its first three derivatives for `max(x^3, 0)`.
#[inline]
fn act(x: f64) -> f64 {
    if x > 0.0 {
        x * x * x
    } else {
        0.0
    }
}

#[inline]
fn act1(x: f64) -> f64 {
    if x > 0.0 {
        3.0 * x * x
    } else {
        0.0
    }
}

#[inline]
fn act2(x: f64) -> f64 {
    if x > 0.0 {
        6.0 * x
    } else {
        0.0
    }
}

#[inline]
fn act3(x: f64) -> f64 {
    if x > 0.0 {
        6.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PinnError {
    NonFiniteParameter,
    NonFiniteLoss { epoch: usize },
}

impl fmt::Display for PinnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PinnError::NonFiniteParameter => write!(f, "network parameter is not finite"),
            PinnError::NonFiniteLoss { epoch } => {
                write!(f, "loss became non-finite at epoch {epoch}")
            }
        }
    }
}

impl std::error::Error for PinnError {}

/// Weights of one residual network: the fixed 0/1 input embedding, per-layer
/// square blocks with biases, and the linear head.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResNetParams {
    pub width: usize,
    pub depth: usize,
    pub out_dim: usize,
    /// Per-layer `width x width` blocks, row-major.
    pub w: Vec<Vec<f64>>,
    /// Per-layer biases.
    pub b: Vec<Vec<f64>>,
    /// Head, `width x out_dim` row-major.
    pub a: Vec<f64>,
}

impl ResNetParams {
    /// Fan-in-scaled uniform blocks, zero biases, small-uniform head.
    pub fn init(width: usize, depth: usize, out_dim: usize, head_scale: f64, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / width as f64).sqrt();
        let w = (0..depth)
            .map(|_| (0..width * width).map(|_| rng.random_range(-bound..bound)).collect())
            .collect();
        let b = (0..depth).map(|_| vec![0.0; width]).collect();
        let a = (0..width * out_dim)
            .map(|_| {
                if head_scale == 0.0 {
                    0.0
                } else {
                    rng.random_range(-head_scale..head_scale)
                }
            })
            .collect();
        ResNetParams { width, depth, out_dim, w, b, a }
    }

    pub fn n_params(&self) -> usize {
        self.depth * (self.width * self.width + self.width) + self.width * self.out_dim
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().flatten().all(|v| v.is_finite())
            && self.b.iter().flatten().all(|v| v.is_finite())
            && self.a.iter().all(|v| v.is_finite())
    }

    /// Value, spatial gradient and Hessian of every output at one point.
    /// `order` limits the propagated derivatives (0, 1 or 2).
    pub fn eval(&self, x: [f64; 2], order: usize) -> Result<NetOutput, PinnError> {
        if !self.is_finite() {
            return Err(PinnError::NonFiniteParameter);
        }
        let states = forward(self, &[x], order);
        let out = output_panel(self, &states, order);
        let n = self.out_dim;
        Ok(NetOutput {
            value: (0..n).map(|o| out.v[o]).collect(),
            grad: (0..n)
                .map(|o| if order >= 1 { [out.dx[o], out.dy[o]] } else { [0.0; 2] })
                .collect(),
            hess: (0..n)
                .map(|o| {
                    if order >= 2 {
                        [out.sxx[o], out.sxy[o], out.syy[o]]
                    } else {
                        [0.0; 3]
                    }
                })
                .collect(),
        })
    }
}

/// Per-output value, gradient and Hessian (xx, xy, yy) at one point.
#[derive(Clone, Debug)]
pub struct NetOutput {
    pub value: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    pub hess: Vec<[f64; 3]>,
}

/// Gradients with the same shapes as `ResNetParams`.
#[derive(Clone, Debug)]
pub struct NetGrads {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub a: Vec<f64>,
}

impl NetGrads {
    pub fn zeros_like(p: &ResNetParams) -> Self {
        NetGrads {
            w: p.w.iter().map(|w| vec![0.0; w.len()]).collect(),
            b: p.b.iter().map(|b| vec![0.0; b.len()]).collect(),
            a: vec![0.0; p.a.len()],
        }
    }

    pub fn accumulate(&mut self, o: &NetGrads) {
        for (a, b) in self.w.iter_mut().zip(&o.w) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.b.iter_mut().zip(&o.b) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (x, y) in self.a.iter_mut().zip(&o.a) {
            *x += y;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in self.w.iter_mut() {
            for x in w.iter_mut() {
                *x *= s;
            }
        }
        for b in self.b.iter_mut() {
            for x in b.iter_mut() {
                *x *= s;
            }
        }
        for x in self.a.iter_mut() {
            *x *= s;
        }
    }
}

/// One derivative-tracking panel: `rows x n_pts` buffers, column-major.
#[derive(Clone, Debug, Default)]
pub struct Panel {
    pub rows: usize,
    pub n_pts: usize,
    pub order: usize,
    pub v: Vec<f64>,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub sxx: Vec<f64>,
    pub sxy: Vec<f64>,
    pub syy: Vec<f64>,
}

impl Panel {
    pub fn zeros(rows: usize, n_pts: usize, order: usize) -> Self {
        let len = rows * n_pts;
        let d1 = if order >= 1 { len } else { 0 };
        let d2 = if order >= 2 { len } else { 0 };
        Panel {
            rows,
            n_pts,
            order,
            v: vec![0.0; len],
            dx: vec![0.0; d1],
            dy: vec![0.0; d1],
            sxx: vec![0.0; d2],
            sxy: vec![0.0; d2],
            syy: vec![0.0; d2],
        }
    }

    fn bufs(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.v];
        if self.order >= 1 {
            out.push(&self.dx);
            out.push(&self.dy);
        }
        if self.order >= 2 {
            out.push(&self.sxx);
            out.push(&self.sxy);
            out.push(&self.syy);
        }
        out
    }

    fn bufs_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = vec![&mut self.v];
        if self.order >= 1 {
            out.push(&mut self.dx);
            out.push(&mut self.dy);
        }
        if self.order >= 2 {
            out.push(&mut self.sxx);
            out.push(&mut self.sxy);
            out.push(&mut self.syy);
        }
        out
    }
}

/// C (m x n, col-major) = alpha * A (m x k) * B (k x n) + beta * C, with A
/// given by explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    unsafe {
        dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// Forward states: the skip-path panels `h[0..=depth]` and the pre-activation
/// panels `z[0..depth]`.
pub struct ForwardStates {
    pub h: Vec<Panel>,
    pub z: Vec<Panel>,
}

/// Forward propagation of values and spatial derivatives for a batch.
pub fn forward(params: &ResNetParams, pts: &[[f64; 2]], order: usize) -> ForwardStates {
    let m = params.width;
    let n_pts = pts.len();
    let mut h0 = Panel::zeros(m, n_pts, order);
    for (p, pt) in pts.iter().enumerate() {
        // Input embedding V x: first two rows carry the coordinates.
        h0.v[p * m] = pt[0];
        h0.v[p * m + 1] = pt[1];
        if order >= 1 {
            h0.dx[p * m] = 1.0;
            h0.dy[p * m + 1] = 1.0;
        }
    }
    let mut h = vec![h0];
    let mut z = Vec::with_capacity(params.depth);
    for l in 0..params.depth {
        let mut zl = Panel::zeros(m, n_pts, order);
        {
            let prev = &h[l];
            for (zb, hb) in zl.bufs_mut().into_iter().zip(prev.bufs()) {
                gemm(m, m, n_pts, 1.0, &params.w[l], m as isize, 1, hb, 1, m as isize, 0.0, zb, 1, m as isize);
            }
            for p in 0..n_pts {
                for i in 0..m {
                    zl.v[p * m + i] += params.b[l][i];
                }
            }
        }
        let mut hl = h[l].clone();
        for idx in 0..m * n_pts {
            let zv = zl.v[idx];
            hl.v[idx] += act(zv);
            if order >= 1 {
                let a1 = act1(zv);
                hl.dx[idx] += a1 * zl.dx[idx];
                hl.dy[idx] += a1 * zl.dy[idx];
                if order >= 2 {
                    let a2 = act2(zv);
                    let (zx, zy) = (zl.dx[idx], zl.dy[idx]);
                    hl.sxx[idx] += a2 * zx * zx + a1 * zl.sxx[idx];
                    hl.sxy[idx] += a2 * zx * zy + a1 * zl.sxy[idx];
                    hl.syy[idx] += a2 * zy * zy + a1 * zl.syy[idx];
                }
            }
        }
        z.push(zl);
        h.push(hl);
    }
    ForwardStates { h, z }
}

/// Head contraction: per-output panels `out_dim x n_pts`.
pub fn output_panel(params: &ResNetParams, states: &ForwardStates, order: usize) -> Panel {
    let m = params.width;
    let n = params.out_dim;
    let last = states.h.last().unwrap();
    let n_pts = last.n_pts;
    let mut out = Panel::zeros(n, n_pts, order);
    for (ob, hb) in out.bufs_mut().into_iter().zip(last.bufs()) {
        gemm(n, m, n_pts, 1.0, &params.a, 1, n as isize, hb, 1, m as isize, 0.0, ob, 1, n as isize);
    }
    out
}

/// Reverse accumulation: output-panel adjoints to parameter gradients.
/// Adjoints of the skip path are consumed in place.
pub fn backward(
    params: &ResNetParams,
    states: &ForwardStates,
    out_adj: &Panel,
    grads: &mut NetGrads,
) {
    let m = params.width;
    let n = params.out_dim;
    let n_pts = out_adj.n_pts;
    let order = out_adj.order;
    let last = states.h.last().unwrap();

    // Head: a_bar += h_L ybar^T per derivative group; h_bar = a ybar.
    for (ob, hb) in out_adj.bufs().into_iter().zip(last.bufs()) {
        gemm(m, n_pts, n, 1.0, hb, 1, m as isize, ob, n as isize, 1, 1.0, &mut grads.a, n as isize, 1);
    }
    let mut hbar = Panel::zeros(m, n_pts, order);
    for (hb, ob) in hbar.bufs_mut().into_iter().zip(out_adj.bufs()) {
        gemm(m, n, n_pts, 1.0, &params.a, n as isize, 1, ob, 1, n as isize, 0.0, hb, 1, m as isize);
    }

    for l in (0..params.depth).rev() {
        let zl = &states.z[l];
        let mut zbar = Panel::zeros(m, n_pts, order);
        for idx in 0..m * n_pts {
            let zv = zl.v[idx];
            let a1 = act1(zv);
            let mut zb = a1 * hbar.v[idx];
            if order >= 1 {
                let a2 = act2(zv);
                let (zx, zy) = (zl.dx[idx], zl.dy[idx]);
                zb += a2 * (zx * hbar.dx[idx] + zy * hbar.dy[idx]);
                zbar.dx[idx] = a1 * hbar.dx[idx];
                zbar.dy[idx] = a1 * hbar.dy[idx];
                if order >= 2 {
                    let a3 = act3(zv);
                    let (hxx, hxy, hyy) = (hbar.sxx[idx], hbar.sxy[idx], hbar.syy[idx]);
                    zb += a3 * (zx * zx * hxx + zx * zy * hxy + zy * zy * hyy);
                    zb += a2 * (zl.sxx[idx] * hxx + zl.sxy[idx] * hxy + zl.syy[idx] * hyy);
                    zbar.dx[idx] += a2 * (2.0 * zx * hxx + zy * hxy);
                    zbar.dy[idx] += a2 * (2.0 * zy * hyy + zx * hxy);
                    zbar.sxx[idx] = a1 * hxx;
                    zbar.sxy[idx] = a1 * hxy;
                    zbar.syy[idx] = a1 * hyy;
                }
            }
            zbar.v[idx] = zb;
        }
        // Parameter gradients of this layer.
        let prev = &states.h[l];
        for (zb, hb) in zbar.bufs().into_iter().zip(prev.bufs()) {
            gemm(m, n_pts, m, 1.0, zb, 1, m as isize, hb, m as isize, 1, 1.0, &mut grads.w[l], m as isize, 1);
        }
        for p in 0..n_pts {
            for i in 0..m {
                grads.b[l][i] += zbar.v[p * m + i];
            }
        }
        // Skip path: hbar stays; add W^T zbar.
        for (hb, zb) in hbar.bufs_mut().into_iter().zip(zbar.bufs()) {
            gemm(m, m, n_pts, 1.0, &params.w[l], 1, m as isize, zb, 1, m as isize, 1.0, hb, 1, m as isize);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_head_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = ResNetParams::init(8, 2, 2, 1e-2, &mut rng);
        net.a.iter_mut().for_each(|v| *v = 0.0);
        let out = net.eval([0.4, -0.3], 2).unwrap();
        for o in 0..2 {
            assert_eq!(out.value[o], 0.0);
            assert_eq!(out.grad[o], [0.0, 0.0]);
            assert_eq!(out.hess[o], [0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn linear_network_is_head_times_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = ResNetParams::init(6, 1, 2, 1e-1, &mut rng);
        net.w[0].iter_mut().for_each(|v| *v = 0.0);
        net.b[0].iter_mut().for_each(|v| *v = 0.0);
        let x = [0.7, -1.2];
        let out = net.eval(x, 2).unwrap();
        for o in 0..2 {
            // y_o = a[0,o] x + a[1,o] y since sigma(0) = 0.
            let expect = net.a[o] * x[0] + net.a[2 + o] * x[1];
            assert!((out.value[o] - expect).abs() < 1e-15);
            assert!((out.grad[o][0] - net.a[o]).abs() < 1e-15);
            assert!((out.grad[o][1] - net.a[2 + o]).abs() < 1e-15);
            assert_eq!(out.hess[o], [0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn spatial_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = ResNetParams::init(10, 3, 2, 0.5, &mut rng);
        let h = 1e-4;
        for trial in 0..20 {
            let x = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let out = net.eval(x, 2).unwrap();
            for o in 0..2 {
                let f = |p: [f64; 2]| net.eval(p, 0).unwrap().value[o];
                let gx = (f([x[0] + h, x[1]]) - f([x[0] - h, x[1]])) / (2.0 * h);
                let gy = (f([x[0], x[1] + h]) - f([x[0], x[1] - h])) / (2.0 * h);
                let scale_g = 1.0 + gx.abs().max(gy.abs());
                assert!(
                    (out.grad[o][0] - gx).abs() / scale_g < 1e-5,
                    "trial {trial} grad x: {} vs {gx}",
                    out.grad[o][0]
                );
                assert!((out.grad[o][1] - gy).abs() / scale_g < 1e-5);
                let hxx = (f([x[0] + h, x[1]]) - 2.0 * f(x) + f([x[0] - h, x[1]])) / (h * h);
                let hyy = (f([x[0], x[1] + h]) - 2.0 * f(x) + f([x[0], x[1] - h])) / (h * h);
                let hxy = (f([x[0] + h, x[1] + h]) - f([x[0] + h, x[1] - h])
                    - f([x[0] - h, x[1] + h])
                    + f([x[0] - h, x[1] - h]))
                    / (4.0 * h * h);
                let scale_h = 1.0 + hxx.abs().max(hyy.abs()).max(hxy.abs());
                assert!((out.hess[o][0] - hxx).abs() / scale_h < 1e-3);
                assert!((out.hess[o][1] - hxy).abs() / scale_h < 1e-3);
                assert!((out.hess[o][2] - hyy).abs() / scale_h < 1e-3);
            }
        }
    }

    #[test]
    fn non_finite_parameter_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = ResNetParams::init(4, 1, 1, 1e-2, &mut rng);
        net.w[0][3] = f64::NAN;
        assert!(matches!(net.eval([0.0, 0.0], 1), Err(PinnError::NonFiniteParameter)));
    }

    /// Parameter gradients against central differences through a quadratic
    /// functional of value, gradient and Hessian outputs.
    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = ResNetParams::init(8, 2, 2, 0.5, &mut rng);
        let pts: Vec<[f64; 2]> = (0..7)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();

        // J(theta) = sum over pts/outputs of (v^2 + dx^2 + 2 dy^2 + sxx^2 + sxy^2 + syy^2)/2
        let functional = |net: &ResNetParams| -> f64 {
            let states = forward(net, &pts, 2);
            let out = output_panel(net, &states, 2);
            let mut j = 0.0;
            for idx in 0..out.v.len() {
                j += 0.5
                    * (out.v[idx] * out.v[idx]
                        + out.dx[idx] * out.dx[idx]
                        + 2.0 * out.dy[idx] * out.dy[idx]
                        + out.sxx[idx] * out.sxx[idx]
                        + out.sxy[idx] * out.sxy[idx]
                        + out.syy[idx] * out.syy[idx]);
            }
            j
        };

        let states = forward(&net, &pts, 2);
        let out = output_panel(&net, &states, 2);
        let mut adj = Panel::zeros(net.out_dim, pts.len(), 2);
        adj.v.copy_from_slice(&out.v);
        adj.dx.copy_from_slice(&out.dx);
        for (a, o) in adj.dy.iter_mut().zip(&out.dy) {
            *a = 2.0 * o;
        }
        adj.sxx.copy_from_slice(&out.sxx);
        adj.sxy.copy_from_slice(&out.sxy);
        adj.syy.copy_from_slice(&out.syy);
        let mut grads = NetGrads::zeros_like(&net);
        backward(&net, &states, &adj, &mut grads);

        let h = 1e-6;
        let check = |get: &dyn Fn(&ResNetParams) -> f64,
                         set: &dyn Fn(&mut ResNetParams, f64),
                         analytic: f64| {
            let base = get(&net);
            let mut plus = net.clone();
            set(&mut plus, base + h);
            let mut minus = net.clone();
            set(&mut minus, base - h);
            let fd = (functional(&plus) - functional(&minus)) / (2.0 * h);
            let scale = 1.0 + fd.abs();
            assert!(
                (analytic - fd).abs() / scale < 1e-4,
                "analytic {analytic} vs fd {fd}"
            );
        };
        for &(l, ij) in &[(0usize, 5usize), (0, 20), (1, 11), (1, 40)] {
            check(
                &move |n: &ResNetParams| n.w[l][ij],
                &move |n: &mut ResNetParams, v: f64| n.w[l][ij] = v,
                grads.w[l][ij],
            );
        }
        for &(l, i) in &[(0usize, 2usize), (1, 6)] {
            check(
                &move |n: &ResNetParams| n.b[l][i],
                &move |n: &mut ResNetParams, v: f64| n.b[l][i] = v,
                grads.b[l][i],
            );
        }
        for &i in &[0usize, 7, 12] {
            check(
                &move |n: &ResNetParams| n.a[i],
                &move |n: &mut ResNetParams, v: f64| n.a[i] = v,
                grads.a[i],
            );
        }
    }

    #[test]
    fn batch_matches_single_point_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = ResNetParams::init(12, 3, 2, 0.3, &mut rng);
        let pts: Vec<[f64; 2]> = (0..5)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let states = forward(&net, &pts, 2);
        let out = output_panel(&net, &states, 2);
        for (p, pt) in pts.iter().enumerate() {
            let single = net.eval(*pt, 2).unwrap();
            for o in 0..2 {
                assert!((single.value[o] - out.v[p * 2 + o]).abs() < 1e-13);
                assert!((single.grad[o][0] - out.dx[p * 2 + o]).abs() < 1e-13);
                assert!((single.hess[o][2] - out.syy[p * 2 + o]).abs() < 1e-13);
            }
        }
    }
}
