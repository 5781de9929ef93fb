//! Second-order jets: value, gradient and Hessian of scalar quantities with
//! respect to chart coordinates, composed by exact chain rules.
//!
//! Every catalogue function is a finite composition of coordinates, trig
//! polynomials and the C² profile functions from [`crate::stabilize`], so
//! carrying jets through those compositions gives hand-checked analytic
//! derivatives without any automatic differentiation machinery.

use crate::linalg::{Mat3, Vec3, ZERO_MAT, ZERO_VEC};

/// A univariate second-order jet `(f, f', f'')` evaluated at some inner value.
#[derive(Clone, Copy, Debug)]
pub struct Uni {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Uni {
    pub fn new(v: f64, d1: f64, d2: f64) -> Self {
        Uni { v, d1, d2 }
    }
}

/// Value, gradient and Hessian of a scalar function of chart coordinates.
#[derive(Clone, Copy, Debug)]
pub struct Jet2 {
    pub dim: usize,
    pub v: f64,
    pub g: Vec3,
    pub h: Mat3,
}

impl Jet2 {
    pub fn constant(dim: usize, v: f64) -> Self {
        Jet2 {
            dim,
            v,
            g: ZERO_VEC,
            h: ZERO_MAT,
        }
    }

    pub fn coordinate(dim: usize, i: usize, value: f64) -> Self {
        let mut g = ZERO_VEC;
        g[i] = 1.0;
        Jet2 {
            dim,
            v: value,
            g,
            h: ZERO_MAT,
        }
    }

    pub fn add(&self, o: &Jet2) -> Jet2 {
        let mut out = *self;
        out.v += o.v;
        for i in 0..self.dim {
            out.g[i] += o.g[i];
            for j in 0..self.dim {
                out.h[i][j] += o.h[i][j];
            }
        }
        out
    }

    pub fn sub(&self, o: &Jet2) -> Jet2 {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Jet2 {
        let mut out = *self;
        out.v *= s;
        for i in 0..self.dim {
            out.g[i] *= s;
            for j in 0..self.dim {
                out.h[i][j] *= s;
            }
        }
        out
    }

    pub fn add_const(&self, c: f64) -> Jet2 {
        let mut out = *self;
        out.v += c;
        out
    }

    pub fn mul(&self, o: &Jet2) -> Jet2 {
        let mut out = Jet2::constant(self.dim, self.v * o.v);
        for i in 0..self.dim {
            out.g[i] = self.g[i] * o.v + self.v * o.g[i];
            for j in 0..self.dim {
                out.h[i][j] = self.h[i][j] * o.v
                    + self.g[i] * o.g[j]
                    + self.g[j] * o.g[i]
                    + self.v * o.h[i][j];
            }
        }
        out
    }

    /// Quotient `self / o`; caller guarantees `o.v` is bounded away from 0.
    pub fn div(&self, o: &Jet2) -> Jet2 {
        let inv = o.chain(Uni::new(1.0 / o.v, -1.0 / (o.v * o.v), 2.0 / (o.v * o.v * o.v)));
        self.mul(&inv)
    }

    /// Compose with a univariate function given by its jet `f` at `self.v`.
    pub fn chain(&self, f: Uni) -> Jet2 {
        let mut out = Jet2::constant(self.dim, f.v);
        for i in 0..self.dim {
            out.g[i] = f.d1 * self.g[i];
            for j in 0..self.dim {
                out.h[i][j] = f.d1 * self.h[i][j] + f.d2 * self.g[i] * self.g[j];
            }
        }
        out
    }
}

/// Jet of `cos(a * x_i + b)` in coordinate `i`.
pub fn cos_of(dim: usize, i: usize, x: f64, a: f64, b: f64) -> Jet2 {
    let t = a * x + b;
    Jet2::coordinate(dim, i, x).chain(Uni::new(
        t.cos(),
        -a * t.sin(),
        -a * a * t.cos(),
    ))
}
