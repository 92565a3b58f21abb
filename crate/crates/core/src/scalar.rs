//! Scalars that carry exact derivatives along up to three directions.
//!
//! Catalog evaluators are written once, generic over [`Scalar`], and then run
//! on plain `f64` for values or on [`Dual3`] for mixed partials to order 3.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;

    fn scale(self, c: f64) -> Self {
        self * Self::cst(c)
    }
    fn powi(self, k: u32) -> Self {
        let mut acc = Self::cst(1.0);
        for _ in 0..k {
            acc = acc * self;
        }
        acc
    }
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
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
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// Hyper-dual number with three nilpotent units e1, e2, e3 (ei² = 0).
///
/// Component order: `[1, e1, e2, e3, e1e2, e1e3, e2e3, e1e2e3]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual3(pub [f64; 8]);

impl Dual3 {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; 8];
        c[0] = v;
        Dual3(c)
    }

    /// Variable `v` seeded along the units listed in `units` (subset of 1..=3).
    pub fn variable(v: f64, units: &[usize]) -> Self {
        let mut c = [0.0; 8];
        c[0] = v;
        for &u in units {
            c[u] += 1.0;
        }
        Dual3(c)
    }

    pub fn re(&self) -> f64 {
        self.0[0]
    }
    pub fn e1(&self) -> f64 {
        self.0[1]
    }
    pub fn e12(&self) -> f64 {
        self.0[4]
    }
    pub fn e123(&self) -> f64 {
        self.0[7]
    }

    /// f(a + δ) = f(a) + f'δ + f''δ²/2 + f'''δ³/6 for nilpotent δ.
    fn chain(self, f0: f64, f1: f64, f2: f64, f3: f64) -> Self {
        let mut d = self;
        d.0[0] = 0.0;
        let d2 = d * d;
        let d3 = d2 * d;
        let mut out = [0.0; 8];
        out[0] = f0;
        for k in 1..8 {
            out[k] = f1 * d.0[k] + 0.5 * f2 * d2.0[k] + f3 / 6.0 * d3.0[k];
        }
        Dual3(out)
    }
}

impl Add for Dual3 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut c = self.0;
        for (ci, oi) in c.iter_mut().zip(o.0) {
            *ci += oi;
        }
        Dual3(c)
    }
}

impl Sub for Dual3 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut c = self.0;
        for (ci, oi) in c.iter_mut().zip(o.0) {
            *ci -= oi;
        }
        Dual3(c)
    }
}

impl Neg for Dual3 {
    type Output = Self;
    fn neg(self) -> Self {
        Dual3(self.0.map(|v| -v))
    }
}

impl Mul for Dual3 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let a = self.0;
        let b = o.0;
        Dual3([
            a[0] * b[0],
            a[0] * b[1] + a[1] * b[0],
            a[0] * b[2] + a[2] * b[0],
            a[0] * b[3] + a[3] * b[0],
            a[0] * b[4] + a[1] * b[2] + a[2] * b[1] + a[4] * b[0],
            a[0] * b[5] + a[1] * b[3] + a[3] * b[1] + a[5] * b[0],
            a[0] * b[6] + a[2] * b[3] + a[3] * b[2] + a[6] * b[0],
            a[0] * b[7]
                + a[1] * b[6]
                + a[6] * b[1]
                + a[2] * b[5]
                + a[5] * b[2]
                + a[3] * b[4]
                + a[4] * b[3]
                + a[7] * b[0],
        ])
    }
}

impl Div for Dual3 {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let x = o.re();
        let inv = o.chain(1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x), -6.0 / (x * x * x * x));
        self * inv
    }
}

impl Scalar for Dual3 {
    fn cst(v: f64) -> Self {
        Dual3::constant(v)
    }
    fn value(&self) -> f64 {
        self.re()
    }
    fn sin(self) -> Self {
        let (s, c) = self.re().sin_cos();
        self.chain(s, c, -s, -c)
    }
    fn cos(self) -> Self {
        let (s, c) = self.re().sin_cos();
        self.chain(c, -s, -c, s)
    }
    fn exp(self) -> Self {
        let e = self.re().exp();
        self.chain(e, e, e, e)
    }
    fn ln(self) -> Self {
        let x = self.re();
        self.chain(x.ln(), 1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x))
    }
    fn sqrt(self) -> Self {
        let x = self.re();
        let s = x.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * x), 0.375 / (s * x * x))
    }
    fn scale(self, c: f64) -> Self {
        Dual3(self.0.map(|v| v * c))
    }
}

/// Complex number over a generic scalar, enough for polynomial and
/// exponential catalog formulas.
#[derive(Clone, Copy, Debug)]
pub struct Cx<T> {
    pub re: T,
    pub im: T,
}

impl<T: Scalar> Cx<T> {
    pub fn new(re: T, im: T) -> Self {
        Cx { re, im }
    }
    pub fn real(re: T) -> Self {
        Cx { re, im: T::cst(0.0) }
    }
    pub fn conj(self) -> Self {
        Cx { re: self.re, im: -self.im }
    }
    pub fn add(self, o: Self) -> Self {
        Cx::new(self.re + o.re, self.im + o.im)
    }
    pub fn sub(self, o: Self) -> Self {
        Cx::new(self.re - o.re, self.im - o.im)
    }
    pub fn mul(self, o: Self) -> Self {
        Cx::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
    pub fn div(self, o: Self) -> Self {
        let den = o.re * o.re + o.im * o.im;
        let num = self.mul(o.conj());
        Cx::new(num.re / den, num.im / den)
    }
    pub fn scale(self, c: f64) -> Self {
        Cx::new(self.re.scale(c), self.im.scale(c))
    }
    pub fn powi(self, k: u32) -> Self {
        let mut acc = Cx::real(T::cst(1.0));
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }
    /// e^{iθ} for real θ.
    pub fn cis(theta: T) -> Self {
        Cx::new(theta.cos(), theta.sin())
    }
    pub fn norm_sqr(self) -> T {
        self.re * self.re + self.im * self.im
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn third_derivative_of_cubic() {
        // f(x) = x³ at x = 2: f' = 12, f'' = 12, f''' = 6
        let x = Dual3::variable(2.0, &[1, 2, 3]);
        let f = x * x * x;
        assert_eq!(f.re(), 8.0);
        assert_eq!(f.e1(), 12.0);
        assert_eq!(f.e12(), 12.0);
        assert_eq!(f.e123(), 6.0);
    }

    #[test]
    fn transcendental_chain_rules() {
        let x0 = 0.7;
        let x = Dual3::variable(x0, &[1, 2, 3]);
        let f = x.sin() * x.exp();
        // (sin·exp)' = e(s + c), '' = 2e c, ''' = 2e(c − s)
        let (s, c) = x0.sin_cos();
        let e = x0.exp();
        assert!((f.e1() - e * (s + c)).abs() < 1e-14);
        assert!((f.e12() - 2.0 * e * c).abs() < 1e-14);
        assert!((f.e123() - 2.0 * e * (c - s)).abs() < 1e-13);
        let g = x.sqrt().ln() / x;
        // g = ln(x)/(2x); g' = (1 − ln x)/(2x²)
        assert!((g.e1() - (1.0 - x0.ln()) / (2.0 * x0 * x0)).abs() < 1e-14);
    }

    #[test]
    fn mixed_partials_use_distinct_units() {
        // f(x, y) = x² y: ∂x∂y f = 2x
        let x = Dual3::variable(1.5, &[1]);
        let y = Dual3::variable(-0.5, &[2]);
        let f = x * x * y;
        assert_eq!(f.0[4], 3.0);
    }
}
