//! Uniform Monte-Carlo sampling of the two subdomains and the interface.

use crate::mesh::Rect;
use rand::Rng;

/// One epoch's collocation points with the region measures needed by the
/// Monte-Carlo loss weights.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub fluid: Vec<[f64; 2]>,
    pub porous: Vec<[f64; 2]>,
    pub interface: Vec<[f64; 2]>,
    pub fluid_area: f64,
    pub porous_area: f64,
    pub interface_len: f64,
    pub normal: [f64; 2],
    pub tangent: [f64; 2],
}

/// Draw i.i.d. uniform points: `n1` in the fluid rectangle, `n2` in the
/// porous rectangle, `n3` on the interface segment.
pub fn sample_batch(
    fluid: &Rect,
    porous: &Rect,
    iface: ([f64; 2], [f64; 2]),
    counts: (usize, usize, usize),
    rng: &mut impl Rng,
) -> SampleBatch {
    let in_rect = |rect: &Rect, r: &mut dyn rand::RngCore| -> [f64; 2] {
        [
            r.random_range(rect.x0..rect.x1),
            r.random_range(rect.y0..rect.y1),
        ]
    };
    let fluid_pts = (0..counts.0).map(|_| in_rect(fluid, rng)).collect();
    let porous_pts = (0..counts.1).map(|_| in_rect(porous, rng)).collect();
    let (a, b) = iface;
    let seg = [b[0] - a[0], b[1] - a[1]];
    let len = (seg[0] * seg[0] + seg[1] * seg[1]).sqrt();
    let interface_pts = (0..counts.2)
        .map(|_| {
            let t: f64 = rng.random_range(0.0..1.0);
            [a[0] + t * seg[0], a[1] + t * seg[1]]
        })
        .collect();
    let tangent = [seg[0] / len, seg[1] / len];
    // Fluid sits above the (horizontal) interface: outward fluid normal.
    let normal = [tangent[1], -tangent[0]];
    SampleBatch {
        fluid: fluid_pts,
        porous: porous_pts,
        interface: interface_pts,
        fluid_area: fluid.area(),
        porous_area: porous.area(),
        interface_len: len,
        normal,
        tangent,
    }
}
