//! Second-order forward-mode differentiation in three variables.
//!
//! Used to get exact Euclidean gradients and Hessians of solid harmonics and of
//! their 1-homogeneous extensions.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet3 {
    pub v: f64,
    pub g: [f64; 3],
    pub h: [[f64; 3]; 3],
}

impl Jet3 {
    pub const ZERO: Jet3 = Jet3 {
        v: 0.0,
        g: [0.0; 3],
        h: [[0.0; 3]; 3],
    };

    pub fn constant(v: f64) -> Self {
        Jet3 { v, ..Self::ZERO }
    }

    /// Coordinate variable `x_i` evaluated at `value`.
    pub fn var(i: usize, value: f64) -> Self {
        let mut j = Self::constant(value);
        j.g[i] = 1.0;
        j
    }

    pub fn scale(self, s: f64) -> Self {
        let mut out = self;
        out.v *= s;
        for a in 0..3 {
            out.g[a] *= s;
            for b in 0..3 {
                out.h[a][b] *= s;
            }
        }
        out
    }

    /// `self^s` for a positive value.
    pub fn powf(self, s: f64) -> Self {
        debug_assert!(self.v > 0.0);
        let f0 = self.v.powf(s);
        let f1 = s * self.v.powf(s - 1.0);
        let f2 = s * (s - 1.0) * self.v.powf(s - 2.0);
        let mut out = Jet3::constant(f0);
        for a in 0..3 {
            out.g[a] = f1 * self.g[a];
            for b in 0..3 {
                out.h[a][b] = f1 * self.h[a][b] + f2 * self.g[a] * self.g[b];
            }
        }
        out
    }
}

impl Add for Jet3 {
    type Output = Jet3;
    fn add(self, o: Jet3) -> Jet3 {
        let mut out = self;
        out.v += o.v;
        for a in 0..3 {
            out.g[a] += o.g[a];
            for b in 0..3 {
                out.h[a][b] += o.h[a][b];
            }
        }
        out
    }
}

impl Sub for Jet3 {
    type Output = Jet3;
    fn sub(self, o: Jet3) -> Jet3 {
        self + (-o)
    }
}

impl Neg for Jet3 {
    type Output = Jet3;
    fn neg(self) -> Jet3 {
        self.scale(-1.0)
    }
}

impl Mul for Jet3 {
    type Output = Jet3;
    fn mul(self, o: Jet3) -> Jet3 {
        let mut out = Jet3::constant(self.v * o.v);
        for a in 0..3 {
            out.g[a] = self.g[a] * o.v + self.v * o.g[a];
            for b in 0..3 {
                out.h[a][b] = self.h[a][b] * o.v
                    + self.v * o.h[a][b]
                    + self.g[a] * o.g[b]
                    + o.g[a] * self.g[b];
            }
        }
        out
    }
}

impl Mul<f64> for Jet3 {
    type Output = Jet3;
    fn mul(self, s: f64) -> Jet3 {
        self.scale(s)
    }
}
