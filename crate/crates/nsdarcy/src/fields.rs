//! Value/gradient/Hessian bundles for scalar fields of two variables, with
//! the product rule through second order. Shared by the network ansatz, the
//! closed-form solutions and the pointwise residual code.

/// A scalar field's value and derivatives through second order at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Scalar2 {
    pub v: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dxy: f64,
    pub dyy: f64,
}

impl Scalar2 {
    pub fn constant(c: f64) -> Self {
        Scalar2 { v: c, ..Default::default() }
    }

    pub fn add(&self, o: &Scalar2) -> Scalar2 {
        Scalar2 {
            v: self.v + o.v,
            dx: self.dx + o.dx,
            dy: self.dy + o.dy,
            dxx: self.dxx + o.dxx,
            dxy: self.dxy + o.dxy,
            dyy: self.dyy + o.dyy,
        }
    }

    pub fn scale(&self, s: f64) -> Scalar2 {
        Scalar2 {
            v: s * self.v,
            dx: s * self.dx,
            dy: s * self.dy,
            dxx: s * self.dxx,
            dxy: s * self.dxy,
            dyy: s * self.dyy,
        }
    }

    /// Product rule through second order.
    pub fn mul(&self, o: &Scalar2) -> Scalar2 {
        Scalar2 {
            v: self.v * o.v,
            dx: self.dx * o.v + self.v * o.dx,
            dy: self.dy * o.v + self.v * o.dy,
            dxx: self.dxx * o.v + 2.0 * self.dx * o.dx + self.v * o.dxx,
            dxy: self.dxy * o.v + self.dx * o.dy + self.dy * o.dx + self.v * o.dxy,
            dyy: self.dyy * o.v + 2.0 * self.dy * o.dy + self.v * o.dyy,
        }
    }

    pub fn grad(&self) -> [f64; 2] {
        [self.dx, self.dy]
    }

    pub fn laplacian(&self) -> f64 {
        self.dxx + self.dyy
    }
}

/// Fluid unknowns at a point: vector velocity and pressure. The pressure
/// second derivatives are never consumed and may be zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct FluidPoint {
    pub u: [Scalar2; 2],
    pub p: Scalar2,
}

/// Field providers for the pointwise residual code: both the trained network
/// ansatz and closed-form solutions implement these, so the same residual
/// path can be exercised by either.
pub trait FluidField {
    fn fluid_at(&self, p: [f64; 2]) -> FluidPoint;
}

pub trait PorousField {
    fn porous_at(&self, p: [f64; 2]) -> Scalar2;
}
