//! Construction of the exponential weight `w = e^{q1 + q2}` and verification
//! of its defining measure inequalities.
//!
//! `q1` is a step function built from a recursion over the positive jumps of
//! `V` and `alpha`; each increment is the log of a ratio chosen so that the
//! atoms of `d(w(E-V))` and of `dw - (alpha^A)^{-1} w^A dalpha` come out
//! nonnegative. `q2` collects the continuous positive variation of both
//! coefficients plus a short-range term `(|x|+1)^{-1-delta}`, all integrated
//! in closed form. The resulting `w` is nondecreasing, bounded, and at
//! least 1 everywhere.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use crate::bv::{Limits, PiecewiseFunction};
use crate::error::{Error, Result};
use crate::poly::Poly;

/// Sorted union of the points where `V` or `alpha` jumps upward.
pub fn positive_jump_sets(v: &PiecewiseFunction, alpha: &PiecewiseFunction) -> Vec<f64> {
    let mut sites: Vec<f64> = v
        .jumps()
        .into_iter()
        .chain(alpha.jumps())
        .filter(|&(_, j)| j > 0.0)
        .map(|(x, _)| x)
        .collect();
    sites.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    sites.dedup();
    sites
}

/// Jump ratios at one site. Both lie in `[0, 1)` whenever `E > sup V` and
/// `inf alpha > 0`.
#[derive(Debug, Clone, Copy)]
pub struct JumpRatios {
    pub a: f64,
    pub b: f64,
}

fn jump_ratios_at(
    v: &PiecewiseFunction,
    alpha: &PiecewiseFunction,
    e: f64,
    x: f64,
) -> Result<JumpRatios> {
    let lv = v.limits(x);
    let la = alpha.limits(x);
    let dv = (lv.right - lv.left).max(0.0);
    let da = (la.right - la.left).max(0.0);
    let a = dv / (2.0 * (e - lv.average));
    let b = da / (2.0 * la.average);
    if !(0.0..1.0).contains(&a) || !(0.0..1.0).contains(&b) {
        return Err(Error::Precondition(format!(
            "jump ratios A={a}, B={b} at x={x} fall outside [0,1); \
             E is too small or alpha is degenerate"
        )));
    }
    Ok(JumpRatios { a, b })
}

/// The recursion `r_0 = 0`,
/// `r_j = r_{j-1} + log max(1 + 2A/(1-A), 1 + 2B/(1-B))`
/// over the sites in increasing order. Returns `r_0..r_N`.
pub fn jump_recursion(
    v: &PiecewiseFunction,
    alpha: &PiecewiseFunction,
    e: f64,
    sites: &[f64],
) -> Result<Vec<f64>> {
    let mut r = vec![0.0];
    for &x in sites {
        let JumpRatios { a, b } = jump_ratios_at(v, alpha, e, x)?;
        let growth = (1.0 + 2.0 * a / (1.0 - a)).max(1.0 + 2.0 * b / (1.0 - b));
        r.push(r.last().unwrap() + growth.ln());
    }
    Ok(r)
}

/// Closed-form bound on `r_{N,N}`: the termwise sum of
/// `max(dV / ((E-V)^A - dV/2), dalpha / (alpha^A - dalpha/2))`.
pub fn recursion_bound(
    v: &PiecewiseFunction,
    alpha: &PiecewiseFunction,
    e: f64,
    sites: &[f64],
) -> f64 {
    sites
        .iter()
        .map(|&x| {
            let lv = v.limits(x);
            let la = alpha.limits(x);
            let dv = (lv.right - lv.left).max(0.0);
            let da = (la.right - la.left).max(0.0);
            let term_v = if dv > 0.0 { dv / ((e - lv.average) - 0.5 * dv) } else { 0.0 };
            let term_a = if da > 0.0 { da / (la.average - 0.5 * da) } else { 0.0 };
            term_v.max(term_a)
        })
        .sum()
}

/// The monotone continuous part `q2` of the weight exponent, stored through
/// closed-form antiderivatives.
#[derive(Debug, Clone)]
pub struct Q2 {
    pub k: f64,
    pub delta: f64,
    pub inf_alpha: f64,
    /// Antiderivative of `k dV^c_+ + (2/inf alpha) dalpha^c_+`.
    poly_part: PiecewiseFunction,
    /// Its density, kept for pointwise evaluation of `dw`.
    poly_density: PiecewiseFunction,
}

impl Q2 {
    pub fn eval(&self, x: f64) -> f64 {
        self.poly_part.eval(x) + self.tail_integral(x)
    }

    /// `\int_{-inf}^x (|t|+1)^{-1-delta} dt` in closed form.
    pub fn tail_integral(&self, x: f64) -> f64 {
        let d = self.delta;
        if x <= 0.0 {
            (1.0 - x).powf(-d) / d
        } else {
            (2.0 - (1.0 + x).powf(-d)) / d
        }
    }

    /// Density of `dq2` at a point of continuity.
    pub fn density(&self, x: f64) -> f64 {
        self.poly_density.eval(x) + (x.abs() + 1.0).powf(-1.0 - self.delta)
    }

    /// `q2(+inf)`, attained since the polynomial part has compact variation.
    pub fn at_infinity(&self) -> f64 {
        self.poly_part.tails().1 + 2.0 / self.delta
    }

    /// Piecewise-cubic interpolant of `q2` on `[a, b]`, refined until the
    /// sampled error is below `tol`. Used to cross-check `dw` against the
    /// measure chain rule.
    pub fn to_piecewise(&self, a: f64, b: f64, tol: f64) -> PiecewiseFunction {
        let mut knots: Vec<f64> = vec![a, b];
        if a < 0.0 && b > 0.0 {
            knots.push(0.0);
        }
        for &x in self.poly_part.breakpoints() {
            if x > a && x < b {
                knots.push(x);
            }
        }
        knots.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
        knots.dedup();

        let mut breaks = Vec::new();
        let mut pieces = Vec::new();
        for w in knots.windows(2) {
            let mut m = 4usize;
            loop {
                let mut sub: Vec<(f64, Poly)> = Vec::with_capacity(m);
                let mut worst = 0.0f64;
                for kidx in 0..m {
                    let lo = w[0] + (w[1] - w[0]) * kidx as f64 / m as f64;
                    let hi = w[0] + (w[1] - w[0]) * (kidx + 1) as f64 / m as f64;
                    let cubic = crate::bv::hermite_cubic(
                        lo,
                        hi,
                        self.eval(lo),
                        self.eval(hi),
                        self.density(lo),
                        self.density(hi),
                    );
                    for t in [0.21, 0.5, 0.77] {
                        let x = lo + (hi - lo) * t;
                        worst = worst.max((cubic.eval(x) - self.eval(x)).abs());
                    }
                    sub.push((lo, cubic));
                }
                if worst <= tol || m >= 1 << 14 {
                    for (lo, p) in sub {
                        breaks.push(lo);
                        pieces.push(p);
                    }
                    break;
                }
                m *= 2;
            }
        }
        breaks.push(b);
        PiecewiseFunction::new(breaks, pieces, (self.eval(a), self.eval(b))).unwrap()
    }
}

/// Builds `q2` for the smallest admissible `k = 1/(E_min - sup V)`.
pub fn build_q2(
    v: &PiecewiseFunction,
    alpha: &PiecewiseFunction,
    delta: f64,
    e_min: f64,
) -> Result<(f64, Q2)> {
    if !(delta > 0.0) {
        return Err(Error::Precondition("delta must be positive".to_string()));
    }
    let sup_v = v.range().1;
    if !(e_min > sup_v) {
        return Err(Error::Precondition(format!(
            "need E_min > sup V, got E_min = {e_min}, sup V = {sup_v}"
        )));
    }
    let inf_alpha = alpha.range().0;
    if !(inf_alpha > 0.0) {
        return Err(Error::Precondition("inf alpha must be positive".to_string()));
    }
    let k = 1.0 / (e_min - sup_v);
    let density = v
        .derivative_measure()
        .density()
        .positive_part()
        .scale(k)
        .add(&alpha.derivative_measure().density().positive_part().scale(2.0 / inf_alpha));
    let poly_part = density.cumulative()?;
    Ok((k, Q2 { k, delta, inf_alpha, poly_part, poly_density: density }))
}

/// The assembled weight `w_N = e^{q_{1,N} + q2}` with its derivative measure.
#[derive(Debug, Clone)]
pub struct WeightBundle {
    pub sites: Vec<f64>,
    /// Recursion values `r_0..r_N` for the retained sites.
    pub r: Vec<f64>,
    pub k: f64,
    pub delta: f64,
    pub e: f64,
    q1: PiecewiseFunction,
    q2: Q2,
}

impl WeightBundle {
    pub fn q1(&self) -> &PiecewiseFunction {
        &self.q1
    }

    pub fn q2(&self) -> &Q2 {
        &self.q2
    }

    /// One-sided limits of `w` at `x`.
    pub fn w_limits(&self, x: f64) -> Limits {
        let q1 = self.q1.limits(x);
        let q2 = self.q2.eval(x);
        let left = (q1.left + q2).exp();
        let right = (q1.right + q2).exp();
        Limits { left, right, average: 0.5 * (left + right) }
    }

    /// Average-value representative of `w`.
    pub fn w(&self, x: f64) -> f64 {
        self.w_limits(x).average
    }

    /// Atoms of `dw`: mass `e^{q2(x_j)} (e^{r_j} - e^{r_{j-1}})` at each
    /// retained site.
    pub fn dw_atoms(&self) -> Vec<(f64, f64)> {
        self.sites
            .iter()
            .enumerate()
            .map(|(j, &x)| (x, self.q2.eval(x).exp() * (self.r[j + 1].exp() - self.r[j].exp())))
            .collect()
    }

    /// Density of `dw` at a point of continuity of `w`:
    /// `w^A (k dV^c_+ + (2/inf alpha) dalpha^c_+ + (|x|+1)^{-1-delta})`.
    pub fn dw_density(&self, x: f64) -> f64 {
        self.w(x) * self.q2.density(x)
    }

    pub fn max_w(&self) -> f64 {
        (self.r.last().unwrap() + self.q2.at_infinity()).exp()
    }
}

/// Number of retained jump sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truncation {
    All,
    First(usize),
}

/// Assembles the weight from the first `N` positive-jump sites (or all of
/// them) together with `q2`.
pub fn build_weight(
    v: &PiecewiseFunction,
    alpha: &PiecewiseFunction,
    e: f64,
    delta: f64,
    truncation: Truncation,
) -> Result<WeightBundle> {
    let (k, q2) = build_q2(v, alpha, delta, e)?;
    let mut sites = positive_jump_sets(v, alpha);
    if let Truncation::First(n) = truncation {
        sites.truncate(n);
    }
    let r = jump_recursion(v, alpha, e, &sites)?;

    let q1 = if sites.is_empty() {
        PiecewiseFunction::constant(0.0)
    } else {
        let pieces = r[1..sites.len()].iter().map(|&c| Poly::constant(c)).collect();
        PiecewiseFunction::new(sites.clone(), pieces, (0.0, *r.last().unwrap()))?
    };
    Ok(WeightBundle { sites, r, k, delta, e, q1, q2 })
}

/// Signed slack of one margin check; nonnegative means the bound holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    pub x: f64,
    pub value: f64,
}

/// Atomwise and densitywise margins of the two lower bounds
/// `d(w(E-V)) >= w^A (E_min - V)^A (|x|+1)^{-1-delta}` and
/// `dw - (alpha^A)^{-1} w^A dalpha >= w^A (|x|+1)^{-1-delta}`.
#[derive(Debug, Clone)]
pub struct WeightReport {
    pub atom_margins_v: Vec<Margin>,
    pub atom_margins_alpha: Vec<Margin>,
    pub density_margins_v: Vec<Margin>,
    pub density_margins_alpha: Vec<Margin>,
}

impl WeightReport {
    pub fn worst_atom(&self) -> f64 {
        self.atom_margins_v
            .iter()
            .chain(&self.atom_margins_alpha)
            .map(|m| m.value)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn worst_density(&self) -> f64 {
        self.density_margins_v
            .iter()
            .chain(&self.density_margins_alpha)
            .map(|m| m.value)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn all_nonnegative(&self, tol: f64) -> bool {
        self.worst_atom() >= -tol && self.worst_density() >= -tol
    }
}

/// Checks both measure inequalities: atomwise at every jump of `V` or
/// `alpha` (the right-hand sides carry no atoms once all sites are
/// retained), and densitywise at every grid point.
pub fn verify_lower_bounds(
    bundle: &WeightBundle,
    v: &PiecewiseFunction,
    alpha: &PiecewiseFunction,
    e_min: f64,
    grid: &[f64],
) -> Result<WeightReport> {
    if bundle.sites != positive_jump_sets(v, alpha) {
        return Err(Error::Precondition(
            "verify_lower_bounds requires a bundle built with all sites retained".to_string(),
        ));
    }
    let e = bundle.e;
    let delta = bundle.delta;

    let mut jump_points: Vec<f64> =
        v.jumps().into_iter().chain(alpha.jumps()).map(|(x, _)| x).collect();
    jump_points.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    jump_points.dedup();

    let mut atom_margins_v = Vec::new();
    let mut atom_margins_alpha = Vec::new();
    for &x in &jump_points {
        let w = bundle.w_limits(x);
        let lv = v.limits(x);
        let la = alpha.limits(x);
        // atom of d(w(E-V)) at x
        atom_margins_v.push(Margin { x, value: w.right * (e - lv.right) - w.left * (e - lv.left) });
        // atom of dw - (alpha^A)^{-1} w^A dalpha at x
        atom_margins_alpha.push(Margin {
            x,
            value: (w.right - w.left) - (la.right - la.left) / la.average * w.average,
        });
    }

    let dv = v.derivative_measure();
    let da = alpha.derivative_measure();
    let mut density_margins_v = Vec::new();
    let mut density_margins_alpha = Vec::new();
    for &x in grid {
        if jump_points.contains(&x) {
            continue;
        }
        let w = bundle.w(x);
        let dwd = bundle.dw_density(x);
        let vx = v.eval(x);
        let vpx = dv.density().eval(x);
        let apx = da.density().eval(x);
        let short_range = (x.abs() + 1.0).powf(-1.0 - delta);
        density_margins_v.push(Margin {
            x,
            value: (e - vx) * dwd - w * vpx - w * (e_min - vx) * short_range,
        });
        density_margins_alpha.push(Margin {
            x,
            value: dwd - w * apx / alpha.eval(x) - w * short_range,
        });
    }

    Ok(WeightReport { atom_margins_v, atom_margins_alpha, density_margins_v, density_margins_alpha })
}
