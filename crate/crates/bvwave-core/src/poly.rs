//! Dense univariate polynomials with exact calculus helpers.
//!
//! Coefficients are stored lowest degree first. Degree is unbounded so that
//! products of pieces stay exact; serialized functions normally carry cubics.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    pub fn zero() -> Self {
        Poly(vec![0.0])
    }

    /// `c0 + c1 x + c2 x^2 + ...`
    pub fn new(coeffs: &[f64]) -> Self {
        let mut p = Poly(coeffs.to_vec());
        p.trim();
        p
    }

    fn trim(&mut self) {
        while self.0.len() > 1 && *self.0.last().unwrap() == 0.0 {
            self.0.pop();
        }
        if self.0.is_empty() {
            self.0.push(0.0);
        }
    }

    pub fn degree(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.0.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly::zero();
        }
        let mut d: Vec<f64> = Vec::with_capacity(self.0.len() - 1);
        for (k, &c) in self.0.iter().enumerate().skip(1) {
            d.push(c * k as f64);
        }
        let mut p = Poly(d);
        p.trim();
        p
    }

    /// Antiderivative with zero constant term.
    pub fn antiderivative(&self) -> Poly {
        let mut a: Vec<f64> = Vec::with_capacity(self.0.len() + 1);
        a.push(0.0);
        for (k, &c) in self.0.iter().enumerate() {
            a.push(c / (k + 1) as f64);
        }
        let mut p = Poly(a);
        p.trim();
        p
    }

    /// Exact `\int_a^b p(x) dx` via the antiderivative.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let anti = self.antiderivative();
        anti.eval(b) - anti.eval(a)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        let mut c = vec![0.0; n];
        for (i, &v) in self.0.iter().enumerate() {
            c[i] += v;
        }
        for (i, &v) in other.0.iter().enumerate() {
            c[i] += v;
        }
        let mut p = Poly(c);
        p.trim();
        p
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut p = Poly(self.0.iter().map(|&c| c * s).collect());
        p.trim();
        p
    }

    pub fn shift(&self, c: f64) -> Poly {
        let mut q = self.clone();
        q.0[0] += c;
        q
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut c = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, &a) in self.0.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.0.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        let mut p = Poly(c);
        p.trim();
        p
    }

    /// Roots in the open interval `(a, b)`, strictly increasing.
    ///
    /// The polynomial is split into monotone segments using the roots of its
    /// derivative (computed recursively), then each sign change is bisected
    /// to machine precision. Roots where the polynomial touches zero without
    /// changing sign are ignored; they do not affect positive-part splits or
    /// absolute-value integrals.
    pub fn roots_in(&self, a: f64, b: f64) -> Vec<f64> {
        let mut roots = Vec::new();
        if self.degree() == 0 || a >= b {
            return roots;
        }
        let mut knots = vec![a];
        for r in self.derivative().roots_in(a, b) {
            knots.push(r);
        }
        knots.push(b);
        for win in knots.windows(2) {
            let (lo, hi) = (win[0], win[1]);
            let (flo, fhi) = (self.eval(lo), self.eval(hi));
            if flo == 0.0 && lo > a {
                push_root(&mut roots, lo);
            }
            if flo * fhi < 0.0 {
                push_root(&mut roots, bisect(self, lo, hi));
            }
        }
        roots
    }

    /// Exact range `(min, max)` of the polynomial over the closed interval.
    pub fn range_on(&self, a: f64, b: f64) -> (f64, f64) {
        let mut lo = self.eval(a).min(self.eval(b));
        let mut hi = self.eval(a).max(self.eval(b));
        for r in self.derivative().roots_in(a, b) {
            let v = self.eval(r);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// `\int_a^b max(p, 0) dx`, splitting at sign changes.
    pub fn integral_pos(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        let mut knots = vec![a];
        knots.extend(self.roots_in(a, b));
        knots.push(b);
        for win in knots.windows(2) {
            let mid = 0.5 * (win[0] + win[1]);
            if self.eval(mid) > 0.0 {
                total += self.integral(win[0], win[1]);
            }
        }
        total
    }

    /// `\int_a^b |p| dx`.
    pub fn integral_abs(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        let mut knots = vec![a];
        knots.extend(self.roots_in(a, b));
        knots.push(b);
        for win in knots.windows(2) {
            let mid = 0.5 * (win[0] + win[1]);
            let piece = self.integral(win[0], win[1]);
            total += if self.eval(mid) >= 0.0 { piece } else { -piece };
        }
        total
    }
}

fn push_root(roots: &mut Vec<f64>, r: f64) {
    if roots.last().map_or(true, |&last| r > last) {
        roots.push(r);
    }
}

fn bisect(p: &Poly, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = p.eval(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fmid = p.eval(mid);
        if fmid == 0.0 {
            return mid;
        }
        if flo * fmid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fmid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_calculus() {
        let p = Poly::new(&[1.0, -2.0, 3.0]); // 1 - 2x + 3x^2
        assert_eq!(p.eval(2.0), 9.0);
        assert_eq!(p.derivative(), Poly::new(&[-2.0, 6.0]));
        assert!((p.integral(0.0, 1.0) - (1.0 - 1.0 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn product_is_exact() {
        let p = Poly::new(&[1.0, 1.0]);
        let q = Poly::new(&[-1.0, 1.0]);
        assert_eq!(p.mul(&q), Poly::new(&[-1.0, 0.0, 1.0]));
    }

    #[test]
    fn cubic_roots() {
        // (x+1)x(x-2) = x^3 - x^2 - 2x
        let p = Poly::new(&[0.0, -2.0, -1.0, 1.0]);
        let roots = p.roots_in(-3.0, 3.0);
        assert_eq!(roots.len(), 3);
        assert!((roots[0] + 1.0).abs() < 1e-12);
        assert!(roots[1].abs() < 1e-12);
        assert!((roots[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn positive_part_integral() {
        // x on (-1, 1): positive part integrates to 1/2
        let p = Poly::new(&[0.0, 1.0]);
        assert!((p.integral_pos(-1.0, 1.0) - 0.5).abs() < 1e-14);
        assert!((p.integral_abs(-1.0, 1.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn range_uses_critical_points() {
        // 1 - x^2 on [-2, 2]: max 1 at 0, min -3 at the ends
        let p = Poly::new(&[1.0, 0.0, -1.0]);
        let (lo, hi) = p.range_on(-2.0, 2.0);
        assert_eq!((lo, hi), (-3.0, 1.0));
    }
}
