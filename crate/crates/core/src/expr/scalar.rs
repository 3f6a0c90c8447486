//! Number types the expression evaluator is generic over.
//!
//! `f64` for plain values, [`Dual`] for one directional derivative, and
//! [`Jet2`] for the truncated Taylor expansion `f(x + s v) = c0 + c1 s + c2 s²`
//! used to read off `vᵀ H v = 2 c2` without forming a Hessian.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self {
        self.sin() / self.cos()
    }
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, c: f64) -> Self;

    /// `self^other` with a variable exponent, through `exp(other ln self)`.
    fn pow(self, other: Self) -> Self {
        (other * self.ln()).exp()
    }
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tan(self) -> Self {
        f64::tan(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn powf(self, c: f64) -> Self {
        f64::powf(self, c)
    }
    fn pow(self, other: Self) -> Self {
        f64::powf(self, other)
    }
}

/// First-order forward-mode number: value and one directional derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn new(v: f64, d: f64) -> Self {
        Self { v, d }
    }

    #[inline]
    fn chain(self, f: f64, df: f64) -> Self {
        Self { v: f, d: df * self.d }
    }
}

impl Add for Dual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.v + o.v, self.d + o.d)
    }
}

impl Sub for Dual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.v - o.v, self.d - o.d)
    }
}

impl Mul for Dual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.v * o.v, self.v * o.d + self.d * o.v)
    }
}

impl Div for Dual {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.v / o.v;
        Self::new(q, (self.d - q * o.d) / o.v)
    }
}

impl Neg for Dual {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.v, -self.d)
    }
}

impl Scalar for Dual {
    fn constant(c: f64) -> Self {
        Self::new(c, 0.0)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::constant(1.0);
        }
        self.chain(self.v.powi(n), n as f64 * self.v.powi(n - 1))
    }
    fn powf(self, c: f64) -> Self {
        self.chain(self.v.powf(c), c * self.v.powf(c - 1.0))
    }
}

/// Second-order truncated Taylor series along a fixed direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Jet2 {
    pub fn new(c0: f64, c1: f64, c2: f64) -> Self {
        Self { c0, c1, c2 }
    }

    /// Compose with a scalar function given its value and first two derivatives at `c0`.
    #[inline]
    fn chain(self, f: f64, df: f64, ddf: f64) -> Self {
        Self {
            c0: f,
            c1: df * self.c1,
            c2: df * self.c2 + 0.5 * ddf * self.c1 * self.c1,
        }
    }

    /// Second directional derivative `d²/ds² f(x + s v)` at `s = 0`.
    pub fn second_derivative(&self) -> f64 {
        2.0 * self.c2
    }
}

impl Add for Jet2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.c0 + o.c0, self.c1 + o.c1, self.c2 + o.c2)
    }
}

impl Sub for Jet2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.c0 - o.c0, self.c1 - o.c1, self.c2 - o.c2)
    }
}

impl Mul for Jet2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.c0 * o.c0,
            self.c0 * o.c1 + self.c1 * o.c0,
            self.c0 * o.c2 + self.c1 * o.c1 + self.c2 * o.c0,
        )
    }
}

impl Div for Jet2 {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q0 = self.c0 / o.c0;
        let q1 = (self.c1 - q0 * o.c1) / o.c0;
        let q2 = (self.c2 - q0 * o.c2 - q1 * o.c1) / o.c0;
        Self::new(q0, q1, q2)
    }
}

impl Neg for Jet2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.c0, -self.c1, -self.c2)
    }
}

impl Scalar for Jet2 {
    fn constant(c: f64) -> Self {
        Self::new(c, 0.0, 0.0)
    }
    fn value(&self) -> f64 {
        self.c0
    }
    fn sin(self) -> Self {
        let (s, c) = self.c0.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.c0.sin_cos();
        self.chain(c, -s, -c)
    }
    fn exp(self) -> Self {
        let e = self.c0.exp();
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let inv = 1.0 / self.c0;
        self.chain(self.c0.ln(), inv, -inv * inv)
    }
    fn sqrt(self) -> Self {
        let s = self.c0.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.c0))
    }
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::constant(1.0),
            1 => self,
            2 => self * self,
            _ => {
                let nf = n as f64;
                self.chain(
                    self.c0.powi(n),
                    nf * self.c0.powi(n - 1),
                    nf * (nf - 1.0) * self.c0.powi(n - 2),
                )
            }
        }
    }
    fn powf(self, c: f64) -> Self {
        self.chain(
            self.c0.powf(c),
            c * self.c0.powf(c - 1.0),
            c * (c - 1.0) * self.c0.powf(c - 2.0),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_division_matches_product_rule() {
        // f(s) = (1 + 2s + 3s²) / (2 + s)
        let a = Jet2::new(1.0, 2.0, 3.0);
        let b = Jet2::new(2.0, 1.0, 0.0);
        let q = a / b;
        let back = q * b;
        assert!((back.c0 - 1.0).abs() < 1e-15);
        assert!((back.c1 - 2.0).abs() < 1e-15);
        assert!((back.c2 - 3.0).abs() < 1e-15);
    }

    #[test]
    fn jet_sqrt_second_coefficient() {
        // sqrt(4 + s): 2 + s/4 - s²/64
        let j = Jet2::new(4.0, 1.0, 0.0).sqrt();
        assert!((j.c1 - 0.25).abs() < 1e-15);
        assert!((j.c2 + 1.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn dual_powi_negative_base() {
        let d = Dual::new(-2.0, 1.0).powi(3);
        assert_eq!(d.v, -8.0);
        assert_eq!(d.d, 12.0);
    }
}
