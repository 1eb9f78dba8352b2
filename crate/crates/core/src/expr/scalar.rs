//! Number types the expression evaluator is generic over.
//!
//! `f64` gives plain values, [`Dual`] carries one directional derivative and
//! [`HyperDual`] carries two first-order directions plus their mixed second
//! derivative. All three are `Copy`, so tree evaluation never allocates.

use core::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    /// Natural logarithm; the caller checks the domain.
    fn ln(self) -> Self;
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        libm::sin(self)
    }
    fn cos(self) -> Self {
        libm::cos(self)
    }
    fn exp(self) -> Self {
        libm::exp(self)
    }
    fn ln(self) -> Self {
        libm::log(self)
    }
}

/// First-order dual number `v + d ε`, `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn new(v: f64, d: f64) -> Self {
        Dual { v, d }
    }

    fn chain(self, fv: f64, dfv: f64) -> Self {
        Dual { v: fv, d: dfv * self.d }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self.v * o.v, d: self.d * o.v + self.v * o.d }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let q = self.v / o.v;
        Dual { v: q, d: (self.d - q * o.d) / o.v }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: -self.d }
    }
}

impl Scalar for Dual {
    fn constant(c: f64) -> Self {
        Dual { v: c, d: 0.0 }
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        self.chain(libm::sin(self.v), libm::cos(self.v))
    }
    fn cos(self) -> Self {
        self.chain(libm::cos(self.v), -libm::sin(self.v))
    }
    fn exp(self) -> Self {
        let e = libm::exp(self.v);
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(libm::log(self.v), 1.0 / self.v)
    }
}

/// Hyper-dual number `v + a ε₁ + b ε₂ + ab ε₁ε₂` with `ε₁² = ε₂² = 0`.
///
/// Seeding `a` with direction `p` and `b` with direction `q` yields the
/// first derivatives along `p` and `q` and the exact mixed second
/// derivative `pᵀ H q` in `ab`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperDual {
    pub v: f64,
    pub a: f64,
    pub b: f64,
    pub ab: f64,
}

impl HyperDual {
    pub fn new(v: f64, a: f64, b: f64) -> Self {
        HyperDual { v, a, b, ab: 0.0 }
    }

    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        HyperDual { v: f0, a: f1 * self.a, b: f1 * self.b, ab: f1 * self.ab + f2 * self.a * self.b }
    }
}

impl Add for HyperDual {
    type Output = HyperDual;
    fn add(self, o: HyperDual) -> HyperDual {
        HyperDual { v: self.v + o.v, a: self.a + o.a, b: self.b + o.b, ab: self.ab + o.ab }
    }
}

impl Sub for HyperDual {
    type Output = HyperDual;
    fn sub(self, o: HyperDual) -> HyperDual {
        HyperDual { v: self.v - o.v, a: self.a - o.a, b: self.b - o.b, ab: self.ab - o.ab }
    }
}

impl Mul for HyperDual {
    type Output = HyperDual;
    fn mul(self, o: HyperDual) -> HyperDual {
        HyperDual {
            v: self.v * o.v,
            a: self.a * o.v + self.v * o.a,
            b: self.b * o.v + self.v * o.b,
            ab: self.ab * o.v + self.a * o.b + self.b * o.a + self.v * o.ab,
        }
    }
}

impl Div for HyperDual {
    type Output = HyperDual;
    fn div(self, o: HyperDual) -> HyperDual {
        let inv = 1.0 / o.v;
        let recip = o.chain(inv, -inv * inv, 2.0 * inv * inv * inv);
        self * recip
    }
}

impl Neg for HyperDual {
    type Output = HyperDual;
    fn neg(self) -> HyperDual {
        HyperDual { v: -self.v, a: -self.a, b: -self.b, ab: -self.ab }
    }
}

impl Scalar for HyperDual {
    fn constant(c: f64) -> Self {
        HyperDual { v: c, a: 0.0, b: 0.0, ab: 0.0 }
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        let (s, c) = (libm::sin(self.v), libm::cos(self.v));
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = (libm::sin(self.v), libm::cos(self.v));
        self.chain(c, -s, -c)
    }
    fn exp(self) -> Self {
        let e = libm::exp(self.v);
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let inv = 1.0 / self.v;
        self.chain(libm::log(self.v), inv, -inv * inv)
    }
}
