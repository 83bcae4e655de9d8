//! Coefficient pairs `(alpha, beta)`: positive, BV, constant outside a
//! compact interval `[-R0, R0]`.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::bv::PiecewiseFunction;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Medium {
    alpha: PiecewiseFunction,
    beta: PiecewiseFunction,
    r0: f64,
}

/// One constant layer of the exact Helmholtz solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layer {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Medium {
    pub fn new(alpha: PiecewiseFunction, beta: PiecewiseFunction, r0: f64) -> Result<Self> {
        alpha.validate()?;
        beta.validate()?;
        if !(r0 > 0.0) {
            return Err(Error::InvalidInput("R0 must be positive".to_string()));
        }
        for (name, f) in [("alpha", &alpha), ("beta", &beta)] {
            let (lo, _) = f.range();
            if !(lo > 0.0) {
                return Err(Error::Precondition(format!("inf {name} must be positive, got {lo}")));
            }
            let (t0, t1) = f.tails();
            if t0 != t1 {
                return Err(Error::InvalidInput(format!(
                    "{name} must take the same constant value on both tails"
                )));
            }
            for &b in f.breakpoints() {
                if b < -r0 || b > r0 {
                    return Err(Error::InvalidInput(format!(
                        "{name} varies at x={b}, outside [-R0, R0] = [-{r0}, {r0}]"
                    )));
                }
            }
        }
        Ok(Medium { alpha, beta, r0 })
    }

    /// Free space: `alpha = beta = 1`.
    pub fn free() -> Self {
        Medium {
            alpha: PiecewiseFunction::constant(1.0),
            beta: PiecewiseFunction::constant(1.0),
            r0: 1.0,
        }
    }

    /// The canonical slab: `alpha = 1`, `beta = 4` on `(-1, 1)`, 1 outside.
    pub fn slab() -> Self {
        Medium {
            alpha: PiecewiseFunction::constant(1.0),
            beta: PiecewiseFunction::box_profile(-1.0, 1.0, 4.0, 1.0),
            r0: 1.0,
        }
    }

    /// Two slabs: `beta = 4` on `(-2,-1)` and `(1,2)`, forming a cavity.
    pub fn two_slab() -> Self {
        let beta = PiecewiseFunction::new(
            alloc::vec![-2.0, -1.0, 1.0, 2.0],
            alloc::vec![
                crate::poly::Poly::constant(4.0),
                crate::poly::Poly::constant(1.0),
                crate::poly::Poly::constant(4.0),
            ],
            (1.0, 1.0),
        )
        .unwrap();
        Medium { alpha: PiecewiseFunction::constant(1.0), beta, r0: 2.0 }
    }

    /// `alpha = 2` on `(0, 1)`, 1 elsewhere; `beta = 1`.
    pub fn alpha_jump() -> Self {
        Medium {
            alpha: PiecewiseFunction::box_profile(0.0, 1.0, 2.0, 1.0),
            beta: PiecewiseFunction::constant(1.0),
            r0: 1.0,
        }
    }

    pub fn alpha(&self) -> &PiecewiseFunction {
        &self.alpha
    }

    pub fn beta(&self) -> &PiecewiseFunction {
        &self.beta
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha.tails().0
    }

    pub fn beta0(&self) -> f64 {
        self.beta.tails().0
    }

    pub fn is_normalized(&self) -> bool {
        self.alpha0() == 1.0 && self.beta0() == 1.0
    }

    pub fn inf_alpha(&self) -> f64 {
        self.alpha.range().0
    }

    pub fn sup_alpha(&self) -> f64 {
        self.alpha.range().1
    }

    pub fn inf_beta(&self) -> f64 {
        self.beta.range().0
    }

    pub fn sup_beta(&self) -> f64 {
        self.beta.range().1
    }

    /// Maximal wave speed `sqrt(sup alpha / inf beta)`.
    pub fn c_max(&self) -> f64 {
        (self.sup_alpha() / self.inf_beta()).sqrt()
    }

    /// Minimal wave speed `sqrt(inf alpha / sup beta)`.
    pub fn c_min(&self) -> f64 {
        (self.inf_alpha() / self.sup_beta()).sqrt()
    }

    /// Splits `[-R0, R0]` into constant layers. Pieces on which `alpha` or
    /// `beta` is non-constant are subdivided `cells_per_piece` times and
    /// replaced by interval averages; constant pieces stay exact.
    pub fn to_layers(&self, cells_per_piece: usize) -> Vec<Layer> {
        let mut knots: Vec<f64> = alloc::vec![-self.r0];
        for f in [&self.alpha, &self.beta] {
            for &b in f.breakpoints() {
                if b > -self.r0 && b < self.r0 {
                    knots.push(b);
                }
            }
        }
        knots.push(self.r0);
        knots.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
        knots.dedup();

        let mut layers = Vec::new();
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            if piece_is_constant(&self.alpha, a, b) && piece_is_constant(&self.beta, a, b) {
                let mid = 0.5 * (a + b);
                layers.push(Layer { a, b, alpha: self.alpha.eval(mid), beta: self.beta.eval(mid) });
            } else {
                let n = cells_per_piece.max(1);
                for k in 0..n {
                    let lo = a + (b - a) * k as f64 / n as f64;
                    let hi = a + (b - a) * (k + 1) as f64 / n as f64;
                    layers.push(Layer {
                        a: lo,
                        b: hi,
                        alpha: self.alpha.integral(lo, hi) / (hi - lo),
                        beta: self.beta.integral(lo, hi) / (hi - lo),
                    });
                }
            }
        }
        layers
    }
}

fn piece_is_constant(f: &PiecewiseFunction, a: f64, b: f64) -> bool {
    let mid = 0.5 * (a + b);
    let probe = [0.1, 0.35, 0.62, 0.83];
    probe.iter().all(|&t| f.eval(a + (b - a) * t) == f.eval(mid))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slab_layers_are_exact() {
        let m = Medium::slab();
        let layers = m.to_layers(8);
        assert_eq!(layers.len(), 1);
        assert_eq!(layers[0], Layer { a: -1.0, b: 1.0, alpha: 1.0, beta: 4.0 });
        assert!(m.is_normalized());
        assert_eq!(m.c_max(), 1.0);
        assert_eq!(m.c_min(), 0.5);
    }

    #[test]
    fn rejects_nonpositive_coefficients() {
        let bad = PiecewiseFunction::box_profile(-1.0, 1.0, 0.0, 1.0);
        assert!(Medium::new(PiecewiseFunction::constant(1.0), bad, 1.0).is_err());
    }

    #[test]
    fn rejects_variation_outside_r0() {
        let beta = PiecewiseFunction::box_profile(-2.0, 2.0, 4.0, 1.0);
        assert!(Medium::new(PiecewiseFunction::constant(1.0), beta, 1.0).is_err());
    }

    #[test]
    fn nonconstant_pieces_get_averaged() {
        // beta = 2 + x on (-1, 1) -> averages per cell
        let beta = PiecewiseFunction::new(
            alloc::vec![-1.0, 1.0],
            alloc::vec![crate::poly::Poly::new(&[2.0, 1.0])],
            (1.0, 1.0),
        )
        .unwrap();
        let m = Medium::new(PiecewiseFunction::constant(1.0), beta, 1.0).unwrap();
        let layers = m.to_layers(4);
        assert_eq!(layers.len(), 4);
        assert!((layers[0].beta - (2.0 - 0.75)).abs() < 1e-14);
        assert!((layers[3].beta - (2.0 + 0.75)).abs() < 1e-14);
    }
}
