//! Exact stationary solver on layered media.
//!
//! On each constant layer the equation `-(p u')' + q u = 0` has solutions
//! `e^{+-kappa x}` with `kappa^2 = q/p`. Cauchy vectors `(u, p u')` are
//! continuous across interfaces, so a single cosh/sinh transfer step per
//! layer produces the two outgoing solutions, their Wronskian, and the
//! Green's kernel `G(x,y) = -u_-(min) u_+(max) / W`. The kernel is
//! separable on each side of the diagonal, which makes Nystrom operator
//! applications O(n) via prefix sums.
//!
//! Two instantiations share this machinery: the wave-equation form
//! `-(alpha u')' - lambda^2 beta u` (spectral parameter `lambda`, entire
//! in `lambda`) and the semiclassical form
//! `-(h^2 alpha u')' + (V - E - i eps) u`.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::bv::PiecewiseFunction;
use crate::dual::Scalar;
use crate::error::{Error, Result};
use crate::medium::{Layer, Medium};
use crate::quad::Quadrature;
use crate::Complex;

const TWO_PI: f64 = 2.0 * core::f64::consts::PI;

/// `sinh(s)/s`, stable near `s = 0`.
fn sinhc<S: Scalar>(s: S) -> S {
    if s.value().norm() < 1e-5 {
        let s2 = s * s;
        S::from_f64(1.0) + s2.mul_f64(1.0 / 6.0) + (s2 * s2).mul_f64(1.0 / 120.0)
    } else {
        s.sinh() / s
    }
}

/// Propagates a Cauchy vector `(u, p u')` across a constant piece with
/// coefficient `p` and exponent `kappa`, over a signed distance `dx`.
/// The step matrix has determinant one and is entire in `kappa`.
fn transfer_step<S: Scalar>(u: S, pu: S, p: f64, kappa: S, dx: f64) -> (S, S) {
    let s = kappa.mul_f64(dx);
    let ch = s.cosh();
    let snc = sinhc(s).mul_f64(dx); // sinh(s)/kappa
    let u_new = u * ch + pu * snc.mul_f64(1.0 / p);
    let pu_new = u * kappa * kappa * snc.mul_f64(p) + pu * ch;
    (u_new, pu_new)
}

/// Piecewise-constant `-(p u')' + q u` description of the whole line:
/// `m` interior boundaries, `m + 1` pieces, the outer two being tails.
struct System<S> {
    breaks: Vec<f64>,
    p: Vec<f64>,
    kappa: Vec<S>,
}

impl<S: Scalar> System<S> {
    fn pieces(&self) -> usize {
        self.kappa.len()
    }

    /// Piece index containing `x` (breakpoints resolve rightward).
    fn piece_of(&self, x: f64) -> usize {
        self.breaks.partition_point(|&b| b <= x)
    }

    /// Outgoing Cauchy vectors at every break: `u_-` normalized to
    /// `e^{+kappa_0 x}` on the left tail and `u_+` to `e^{-kappa_m x}` on
    /// the right tail, plus the Wronskian `u_- (p u_+') - (p u_-') u_+`
    /// evaluated at every break.
    #[allow(clippy::type_complexity)]
    fn outgoing_vectors(&self) -> (Vec<(S, S)>, Vec<(S, S)>, Vec<S>) {
        let m = self.breaks.len();
        let mut um = vec![(S::from_f64(0.0), S::from_f64(0.0)); m];
        let mut up = um.clone();

        let k0 = self.kappa[0];
        let u = k0.mul_f64(self.breaks[0]).exp();
        um[0] = (u, u * k0.mul_f64(self.p[0]));
        for i in 1..m {
            let (u, pu) = um[i - 1];
            um[i] = transfer_step(
                u,
                pu,
                self.p[i],
                self.kappa[i],
                self.breaks[i] - self.breaks[i - 1],
            );
        }

        let km = self.kappa[self.pieces() - 1];
        let u = (-km.mul_f64(self.breaks[m - 1])).exp();
        up[m - 1] = (u, -(u * km.mul_f64(self.p[self.pieces() - 1])));
        for i in (0..m - 1).rev() {
            let (u, pu) = up[i + 1];
            up[i] = transfer_step(
                u,
                pu,
                self.p[i + 1],
                self.kappa[i + 1],
                self.breaks[i] - self.breaks[i + 1],
            );
        }

        let w = um
            .iter()
            .zip(&up)
            .map(|(&(mu, mpu), &(pu_, ppu))| mu * ppu - mpu * pu_)
            .collect();
        (um, up, w)
    }
}

/// Outgoing solutions of one spectral problem, ready for pointwise
/// evaluation and kernel assembly.
pub struct OutgoingSolutions {
    sys: System<Complex>,
    um: Vec<(Complex, Complex)>,
    up: Vec<(Complex, Complex)>,
    wronskians: Vec<Complex>,
    /// Scale used by the near-resonance refusal threshold.
    w_scale: f64,
    /// Spectral label, for error reporting.
    label: Complex,
}

impl OutgoingSolutions {
    pub fn wronskian(&self) -> Complex {
        self.wronskians[0]
    }

    /// Max relative deviation of the Wronskian across evaluation points.
    pub fn wronskian_spread(&self) -> f64 {
        let w0 = self.wronskians[0];
        let scale = self.wronskians.iter().map(|w| w.norm()).fold(0.0, f64::max).max(1e-300);
        self.wronskians.iter().map(|w| (w - w0).norm()).fold(0.0, f64::max) / scale
    }

    fn vector_at(&self, anchors: &[(Complex, Complex)], x: f64) -> (Complex, Complex) {
        let j = self.sys.piece_of(x);
        let (anchor_x, (u, pu)) = if j == 0 {
            (self.sys.breaks[0], anchors[0])
        } else {
            (self.sys.breaks[j - 1], anchors[j - 1])
        };
        if x == anchor_x {
            return (u, pu);
        }
        transfer_step(u, pu, self.sys.p[j], self.sys.kappa[j], x - anchor_x)
    }

    /// `(u_-, p u_-')` at `x`. On the left tail `u_-` is the pure
    /// exponential `e^{+kappa_0 x}`; evaluating it there in closed form
    /// avoids exciting the parasitic growing mode of the transfer step.
    pub fn minus_at(&self, x: f64) -> (Complex, Complex) {
        if x < self.sys.breaks[0] {
            let k = self.sys.kappa[0];
            let u = self.um[0].0 * (k * (x - self.sys.breaks[0])).exp();
            return (u, u * k * self.sys.p[0]);
        }
        self.vector_at(&self.um, x)
    }

    /// `(u_+, p u_+')` at `x`; pure exponential `e^{-kappa_m x}` on the
    /// right tail, by the same reasoning as [`Self::minus_at`].
    pub fn plus_at(&self, x: f64) -> (Complex, Complex) {
        let m = self.sys.breaks.len();
        if x > self.sys.breaks[m - 1] {
            let k = self.sys.kappa[self.sys.pieces() - 1];
            let u = self.up[m - 1].0 * (-k * (x - self.sys.breaks[m - 1])).exp();
            return (u, -(u * k * self.sys.p[self.sys.pieces() - 1]));
        }
        self.vector_at(&self.up, x)
    }

    /// Green's kernel `G(x, y) = -u_-(min) u_+(max) / W`.
    pub fn green(&self, x: f64, y: f64) -> Complex {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        -self.minus_at(lo).0 * self.plus_at(hi).0 / self.wronskian()
    }

    fn check_invertible(&self) -> Result<()> {
        let w = self.wronskian();
        if w.norm() < 1e-12 * self.w_scale.max(1.0) {
            return Err(Error::NearResonance { lambda: self.label, wronskian_abs: w.norm() });
        }
        Ok(())
    }

    /// Local wavelength `2 pi / |kappa|` at `x`, capped at `cap`.
    fn wavelength_at(&self, x: f64, cap: f64) -> f64 {
        let k = self.sys.kappa[self.sys.piece_of(x)].norm();
        if k < 1e-9 {
            cap
        } else {
            (TWO_PI / k).min(cap)
        }
    }
}

/// Wave-equation spectral problem `-(alpha u')' - lambda^2 beta u` on a
/// layered medium.
#[derive(Debug, Clone)]
pub struct WaveProblem {
    layers: Vec<Layer>,
    alpha0: f64,
    beta0: f64,
    r0: f64,
}

impl WaveProblem {
    /// Exact layered form of a medium; non-constant pieces are refined into
    /// `cells_per_piece` constant cells.
    pub fn from_medium(medium: &Medium, cells_per_piece: usize) -> Self {
        WaveProblem {
            layers: medium.to_layers(cells_per_piece),
            alpha0: medium.alpha0(),
            beta0: medium.beta0(),
            r0: medium.r0(),
        }
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn beta_at(&self, x: f64) -> f64 {
        for l in &self.layers {
            if x >= l.a && x < l.b {
                return l.beta;
            }
        }
        self.beta0
    }

    /// Per-piece wavenumbers `k_j = lambda sqrt(beta_j / alpha_j)`, listed
    /// as left tail, layers, right tail.
    pub fn wavenumbers(&self, lambda: Complex) -> Vec<Complex> {
        let mut ks = vec![lambda * (self.beta0 / self.alpha0).sqrt()];
        ks.extend(self.layers.iter().map(|l| lambda * (l.beta / l.alpha).sqrt()));
        ks.push(lambda * (self.beta0 / self.alpha0).sqrt());
        ks
    }

    fn system<S: Scalar>(&self, lambda: S) -> System<S> {
        let minus_i = S::from_complex(Complex::new(0.0, -1.0));
        let tail_kappa = minus_i * lambda.mul_f64((self.beta0 / self.alpha0).sqrt());
        let mut breaks = vec![self.layers.first().map_or(-self.r0, |l| l.a)];
        let mut p = vec![self.alpha0];
        let mut kappa = vec![tail_kappa];
        for l in &self.layers {
            breaks.push(l.b);
            p.push(l.alpha);
            kappa.push(minus_i * lambda.mul_f64((l.beta / l.alpha).sqrt()));
        }
        p.push(self.alpha0);
        kappa.push(tail_kappa);
        System { breaks, p, kappa }
    }

    /// The two outgoing solutions `u_- = e^{-i lambda' x}` (left tail) and
    /// `u_+ = e^{+i lambda' x}` (right tail), extended by transfer matrices.
    /// Entire in `lambda`.
    pub fn outgoing(&self, lambda: Complex) -> OutgoingSolutions {
        let sys = self.system(lambda);
        let (um, up, wronskians) = sys.outgoing_vectors();
        OutgoingSolutions { sys, um, up, wronskians, w_scale: lambda.norm().max(1.0), label: lambda }
    }

    /// `W(lambda) = alpha (u_- u_+' - u_-' u_+)`; zero exactly at the
    /// resonances, with `W(0) = 0` from the constant solution.
    pub fn wronskian(&self, lambda: Complex) -> Complex {
        self.wronskian_generic(lambda)
    }

    /// Same, in any scalar supporting the transfer arithmetic (used with
    /// dual numbers for derivatives).
    pub fn wronskian_generic<S: Scalar>(&self, lambda: S) -> S {
        let sys = self.system(lambda);
        let (_, _, w) = sys.outgoing_vectors();
        w[0]
    }

    /// Reflection and transmission coefficients `(r, t)` read from the
    /// left-tail decomposition of `u_+`.
    pub fn reflection_transmission(&self, lambda: Complex) -> Result<(Complex, Complex)> {
        if lambda.norm() == 0.0 {
            return Err(Error::Precondition("lambda must be nonzero".to_string()));
        }
        let sol = self.outgoing(lambda);
        let x = sol.sys.breaks[0];
        let (u, pu) = sol.plus_at(x);
        let lam_tail = lambda * (self.beta0 / self.alpha0).sqrt();
        let il_a = Complex::new(0.0, 1.0) * lam_tail * self.alpha0;
        let phase_plus = (Complex::new(0.0, 1.0) * lam_tail * x).exp();
        let a = 0.5 * (u + pu / il_a) / phase_plus;
        let b = 0.5 * (u - pu / il_a) * phase_plus;
        Ok((b / a, 1.0 / a))
    }
}

/// Semiclassical problem `-(h^2 alpha u')' + (V - E - i eps) u` built from
/// BV coefficients with constant tails.
#[derive(Debug, Clone)]
pub struct SemiclassicalProblem {
    layers: Vec<(f64, f64, f64, f64)>, // (a, b, alpha, v)
    alpha_tail: (f64, f64),
    v_tail: (f64, f64),
    extent: (f64, f64),
}

impl SemiclassicalProblem {
    pub fn from_functions(
        alpha: &PiecewiseFunction,
        v: &PiecewiseFunction,
        cells_per_piece: usize,
    ) -> Result<Self> {
        if !(alpha.range().0 > 0.0) {
            return Err(Error::Precondition("inf alpha must be positive".to_string()));
        }
        let mut knots: Vec<f64> = alpha.breakpoints().iter().chain(v.breakpoints()).copied().collect();
        knots.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
        knots.dedup();
        if knots.is_empty() {
            knots = vec![-1.0, 1.0];
        } else if knots.len() == 1 {
            knots.push(knots[0] + 1.0);
        }
        let mut layers = Vec::new();
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let constant = |f: &PiecewiseFunction| {
                [0.19, 0.5, 0.83].iter().all(|&t| f.eval(a + (b - a) * t) == f.eval(0.5 * (a + b)))
            };
            if constant(alpha) && constant(v) {
                let mid = 0.5 * (a + b);
                layers.push((a, b, alpha.eval(mid), v.eval(mid)));
            } else {
                let n = cells_per_piece.max(1);
                for k in 0..n {
                    let lo = a + (b - a) * k as f64 / n as f64;
                    let hi = a + (b - a) * (k + 1) as f64 / n as f64;
                    layers.push((
                        lo,
                        hi,
                        alpha.integral(lo, hi) / (hi - lo),
                        v.integral(lo, hi) / (hi - lo),
                    ));
                }
            }
        }
        Ok(SemiclassicalProblem {
            layers,
            alpha_tail: alpha.tails(),
            v_tail: v.tails(),
            extent: (knots[0], *knots.last().unwrap()),
        })
    }

    pub fn sup_v(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.3)
            .fold(self.v_tail.0.max(self.v_tail.1), f64::max)
    }

    /// Exponent `kappa = sqrt((V - E - i eps)/alpha) / h` with `Re >= 0`.
    /// At `eps = 0` in the classically allowed region the limit from below
    /// the cut is taken: `kappa = -i sqrt((E - V)/alpha) / h`, the outgoing
    /// oscillatory branch.
    pub fn kappa(v: f64, alpha: f64, e: f64, h: f64, eps: f64) -> Complex {
        if eps == 0.0 && v < e {
            return Complex::new(0.0, -((e - v) / alpha).sqrt() / h);
        }
        let z = Complex::new((v - e) / alpha, -(eps / alpha));
        let mut k = z.sqrt();
        if k.re < 0.0 || (k.re == 0.0 && k.im > 0.0) {
            k = -k;
        }
        k / h
    }

    fn system(&self, e: f64, h: f64, eps: f64) -> System<Complex> {
        let h2 = h * h;
        let mut breaks = vec![self.extent.0];
        let mut p = vec![h2 * self.alpha_tail.0];
        let mut kappa = vec![Self::kappa(self.v_tail.0, self.alpha_tail.0, e, h, eps)];
        for &(_, b, a_val, v_val) in &self.layers {
            breaks.push(b);
            p.push(h2 * a_val);
            kappa.push(Self::kappa(v_val, a_val, e, h, eps));
        }
        p.push(h2 * self.alpha_tail.1);
        kappa.push(Self::kappa(self.v_tail.1, self.alpha_tail.1, e, h, eps));
        System { breaks, p, kappa }
    }

    /// Outgoing (or decaying, for `eps > 0`) solutions of `P(h) - i eps`.
    pub fn outgoing(&self, e: f64, h: f64, eps: f64) -> OutgoingSolutions {
        let sys = self.system(e, h, eps);
        let (um, up, wronskians) = sys.outgoing_vectors();
        OutgoingSolutions {
            sys,
            um,
            up,
            wronskians,
            w_scale: h,
            label: Complex::new(e, eps),
        }
    }
}

/// Discretization and power-iteration controls for the Nystrom norms.
#[derive(Debug, Clone, Copy)]
pub struct NystromOptions {
    /// Quadrature nodes per local wavelength (panel-aligned Gauss-Legendre).
    pub points_per_wavelength: f64,
    /// Nodes per panel.
    pub gl_order: usize,
    /// Relative convergence tolerance of the top singular value.
    pub power_tol: f64,
    pub max_iters: usize,
    /// Domain half-width used when only polynomial weights confine the
    /// kernel (semiclassical sweeps).
    pub weight_truncation: f64,
}

impl Default for NystromOptions {
    fn default() -> Self {
        NystromOptions {
            points_per_wavelength: 24.0,
            gl_order: 12,
            power_tol: 1e-9,
            max_iters: 40_000,
            weight_truncation: 40.0,
        }
    }
}

/// Applies the Green's kernel through prefix/suffix sums: `O(n)` per apply
/// thanks to the separable structure on each side of the diagonal.
struct SemiSeparable {
    um: Vec<Complex>,
    up: Vec<Complex>,
    neg_inv_w: Complex,
}

impl SemiSeparable {
    fn from_solutions(sol: &OutgoingSolutions, nodes: &[f64]) -> Self {
        SemiSeparable {
            um: nodes.iter().map(|&x| sol.minus_at(x).0).collect(),
            up: nodes.iter().map(|&x| sol.plus_at(x).0).collect(),
            neg_inv_w: -Complex::new(1.0, 0.0) / sol.wronskian(),
        }
    }

    /// `out_i = sum_j G(x_i, x_j) z_j`.
    fn apply(&self, z: &[Complex], out: &mut [Complex]) {
        let n = z.len();
        let mut prefix = Complex::new(0.0, 0.0);
        for i in 0..n {
            prefix += self.um[i] * z[i];
            out[i] = self.up[i] * prefix;
        }
        let mut suffix = Complex::new(0.0, 0.0);
        for i in (0..n).rev() {
            out[i] = (out[i] + self.um[i] * suffix) * self.neg_inv_w;
            suffix += self.up[i] * z[i];
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Largest singular value of `M_ij = factor_i G(x_i, x_j) factor_j` by
/// power iteration on `M* M`. `M` is complex-symmetric, so the adjoint
/// apply is conjugation-wrapped.
fn top_singular_value(
    kernel: &SemiSeparable,
    factor: &[f64],
    tol: f64,
    max_iters: usize,
) -> f64 {
    let n = factor.len();
    let mut state = 0x6A09E667F3BCC908 ^ (n as u64);
    let mut v: Vec<Complex> =
        (0..n).map(|_| Complex::new(unit_f64(splitmix64(&mut state)), unit_f64(splitmix64(&mut state)))).collect();
    normalize(&mut v);

    let mut scratch = vec![Complex::new(0.0, 0.0); n];
    let mut u = vec![Complex::new(0.0, 0.0); n];
    let mut sigma_prev = 0.0f64;
    let mut sigma = 0.0f64;
    for it in 0..max_iters {
        // u = M v
        for i in 0..n {
            scratch[i] = v[i] * factor[i];
        }
        kernel.apply(&scratch, &mut u);
        for i in 0..n {
            u[i] *= factor[i];
        }
        sigma = norm2(&u);
        if sigma == 0.0 {
            return 0.0;
        }
        // v = normalize(M^H u) = normalize(conj(M conj(u)))
        for i in 0..n {
            scratch[i] = u[i].conj() * factor[i];
        }
        kernel.apply(&scratch, &mut v);
        for i in 0..n {
            v[i] = (v[i] * factor[i]).conj();
        }
        normalize(&mut v);
        if it >= 30 && (sigma - sigma_prev).abs() <= tol * sigma {
            break;
        }
        sigma_prev = sigma;
    }
    sigma
}

fn normalize(v: &mut [Complex]) {
    let n = norm2(v);
    if n > 0.0 {
        for z in v.iter_mut() {
            *z /= n;
        }
    }
}

fn norm2(v: &[Complex]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `u(x_i) = int G(x_i, y) f(y) beta(y) dy` on the quadrature grid.
/// Refuses near-resonant spectral parameters.
pub fn greens_apply(
    sol: &OutgoingSolutions,
    quad: &Quadrature,
    f: &[Complex],
    beta: &[f64],
) -> Result<Vec<Complex>> {
    sol.check_invertible()?;
    let kernel = SemiSeparable::from_solutions(sol, &quad.nodes);
    let z: Vec<Complex> =
        f.iter().zip(beta).zip(&quad.weights).map(|((fi, bi), wi)| fi * bi * wi).collect();
    let mut out = vec![Complex::new(0.0, 0.0); z.len()];
    kernel.apply(&z, &mut out);
    Ok(out)
}

/// Pointwise evaluation of the same integral at arbitrary `x`.
pub fn greens_eval_at(
    sol: &OutgoingSolutions,
    quad: &Quadrature,
    f: &[Complex],
    beta: &[f64],
    x: f64,
) -> Complex {
    let mut acc = Complex::new(0.0, 0.0);
    for ((&y, wi), (fi, bi)) in quad.nodes.iter().zip(&quad.weights).zip(f.iter().zip(beta)) {
        acc += sol.green(x, y) * fi * bi * wi;
    }
    acc
}

/// Residual `|-(alpha u')' - lambda^2 beta u - beta f|` of the applied
/// Green's kernel at probe points, via a five-point second derivative.
pub fn greens_residual(
    sol: &OutgoingSolutions,
    quad: &Quadrature,
    f_fn: impl Fn(f64) -> Complex,
    beta_fn: impl Fn(f64) -> f64,
    alpha_fn: impl Fn(f64) -> f64,
    lambda: Complex,
    probes: &[f64],
) -> f64 {
    let f_samp: Vec<Complex> = quad.nodes.iter().map(|&x| f_fn(x)).collect();
    let beta_samp: Vec<f64> = quad.nodes.iter().map(|&x| beta_fn(x)).collect();
    let u = |x: f64| greens_eval_at(sol, quad, &f_samp, &beta_samp, x);
    let d = 1e-4;
    let mut worst = 0.0f64;
    for &x in probes {
        let stencil = [u(x - 2.0 * d), u(x - d), u(x), u(x + d), u(x + 2.0 * d)];
        let upp = (-stencil[0] + 16.0 * stencil[1] - 30.0 * stencil[2] + 16.0 * stencil[3]
            - stencil[4])
            / (12.0 * d * d);
        let res = -alpha_fn(x) * upp - lambda * lambda * beta_fn(x) * stencil[2]
            - beta_fn(x) * f_fn(x);
        worst = worst.max(res.norm());
    }
    worst
}

fn chi_support(chi: &PiecewiseFunction) -> Result<(f64, f64)> {
    if chi.tails() != (0.0, 0.0) || chi.breakpoints().is_empty() {
        return Err(Error::Precondition("cutoff must be compactly supported".to_string()));
    }
    let (lo, hi) = chi.range();
    if lo < -1e-12 || hi > 1.0 + 1e-12 {
        return Err(Error::Precondition("cutoff must take values in [0, 1]".to_string()));
    }
    let b = chi.breakpoints();
    Ok((b[0], *b.last().unwrap()))
}

/// Builds the panel-aligned grid for a kernel supported in `[lo, hi]`.
fn kernel_grid(
    sol: &OutgoingSolutions,
    lo: f64,
    hi: f64,
    extra_knots: &[f64],
    opts: &NystromOptions,
) -> Quadrature {
    let mut knots = vec![lo, hi];
    for &b in &sol.sys.breaks {
        if b > lo && b < hi {
            knots.push(b);
        }
    }
    for &k in extra_knots {
        if k > lo && k < hi {
            knots.push(k);
        }
    }
    knots.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    knots.dedup();
    let span = hi - lo;
    Quadrature::composite(&knots, opts.gl_order, |mid| {
        let wavelength = sol.wavelength_at(mid, span);
        (opts.gl_order as f64 / opts.points_per_wavelength * wavelength).min(span)
    })
}

/// Operator norm of the cutoff resolvent `chi R(lambda) chi` on
/// `L^2(beta dx)`: the top singular value of the Nystrom matrix of
/// `chi(x) G(x,y) chi(y)` symmetrized by `sqrt(beta w)` factors.
pub fn cutoff_resolvent_norm(
    problem: &WaveProblem,
    lambda: Complex,
    chi: &PiecewiseFunction,
    opts: &NystromOptions,
) -> Result<f64> {
    let (lo, hi) = chi_support(chi)?;
    if lo > -problem.r0 || hi < problem.r0 {
        return Err(Error::Precondition(
            "cutoff support must contain [-R0, R0]".to_string(),
        ));
    }
    let sol = problem.outgoing(lambda);
    sol.check_invertible()?;
    let quad = kernel_grid(&sol, lo, hi, chi.breakpoints(), opts);
    let factor: Vec<f64> = quad
        .nodes
        .iter()
        .zip(&quad.weights)
        .map(|(&x, &w)| chi.eval(x) * (problem.beta_at(x) * w).sqrt())
        .collect();
    let kernel = SemiSeparable::from_solutions(&sol, &quad.nodes);
    Ok(top_singular_value(&kernel, &factor, opts.power_tol, opts.max_iters))
}

/// Weighted norm
/// `|| (|x|+1)^{-(1+delta)/2} (P(h) - i eps)^{-1} (|x|+1)^{-(1+delta)/2} ||`
/// with the weight folded into the Nystrom factors. The grid is truncated
/// where the weight (or tail damping, when `eps` is large) makes the
/// remainder negligible.
pub fn weighted_resolvent_norm(
    problem: &SemiclassicalProblem,
    e: f64,
    h: f64,
    eps: f64,
    delta: f64,
    opts: &NystromOptions,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Precondition("h must be positive".to_string()));
    }
    if eps < 0.0 {
        return Err(Error::Precondition("eps must be nonnegative".to_string()));
    }
    let sol = problem.outgoing(e, h, eps);
    sol.check_invertible()?;

    let extent = problem.extent.0.abs().max(problem.extent.1.abs());
    let tail_damping = sol.sys.kappa[0].re.max(sol.sys.kappa[sol.sys.pieces() - 1].re);
    let mut half_width = opts.weight_truncation.max(extent + 1.0);
    if tail_damping > 0.0 {
        half_width = half_width.min(extent + 55.0 / tail_damping + 1.0);
    }

    let quad = kernel_grid(&sol, -half_width, half_width, &[0.0], opts);
    let factor: Vec<f64> = quad
        .nodes
        .iter()
        .zip(&quad.weights)
        .map(|(&x, &w)| (x.abs() + 1.0).powf(-(1.0 + delta) / 2.0) * w.sqrt())
        .collect();
    let kernel = SemiSeparable::from_solutions(&sol, &quad.nodes);
    Ok(top_singular_value(&kernel, &factor, opts.power_tol, opts.max_iters))
}

/// One row of a semiclassical sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub h: f64,
    pub eps: f64,
    pub norm: f64,
    pub h_times_norm: f64,
}

/// Sweeps `h` at fixed `E`, `eps`, `delta`, reporting `h * norm` per row.
pub fn semiclassical_sweep(
    problem: &SemiclassicalProblem,
    e: f64,
    delta: f64,
    h_list: &[f64],
    eps: f64,
    opts: &NystromOptions,
) -> Result<Vec<SweepRow>> {
    if !(problem.sup_v() < e) {
        return Err(Error::Precondition("need sup V < E".to_string()));
    }
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let norm = weighted_resolvent_norm(problem, e, h, eps, delta, opts)?;
        rows.push(SweepRow { h, eps, norm, h_times_norm: h * norm });
    }
    Ok(rows)
}

/// Semiclassical reduction of the wave problem at spectral parameter
/// `lambda`: `h = |Re lambda|^{-1}`, potential `V_beta = 1 - beta`, `E = 1`,
/// plus the two correction coefficients that carry `Im lambda`.
#[derive(Debug, Clone)]
pub struct Rescaled {
    pub h: f64,
    pub v_beta: PiecewiseFunction,
    pub e: f64,
    /// Coefficient of the `beta` term: `(Im lambda)^2 (Re lambda)^{-2}`.
    pub imag_sq_coeff: f64,
    /// Coefficient of the damping term: `2 Im lambda (Re lambda)^{-1}`.
    pub damping_coeff: f64,
}

/// Change of variables from `(H - lambda^2)` to `P(h) - E` for normalized
/// media. Rejects `Re lambda = 0`.
pub fn rescale_wave_to_semiclassical(medium: &Medium, lambda: Complex) -> Result<Rescaled> {
    if lambda.re == 0.0 {
        return Err(Error::Precondition("Re lambda must be nonzero".to_string()));
    }
    if !medium.is_normalized() {
        return Err(Error::Precondition(
            "rescaling requires unit tails (alpha0 = beta0 = 1)".to_string(),
        ));
    }
    let re = lambda.re.abs();
    Ok(Rescaled {
        h: 1.0 / re,
        v_beta: PiecewiseFunction::constant(1.0).sub(medium.beta()),
        e: 1.0,
        imag_sq_coeff: lambda.im * lambda.im / (lambda.re * lambda.re),
        damping_coeff: 2.0 * lambda.im / lambda.re,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free() -> WaveProblem {
        WaveProblem::from_medium(&Medium::free(), 1)
    }

    fn slab() -> WaveProblem {
        WaveProblem::from_medium(&Medium::slab(), 1)
    }

    #[test]
    fn free_wavenumbers() {
        let ks = free().wavenumbers(Complex::new(2.0, 0.0));
        assert!(ks.iter().all(|k| (k - Complex::new(2.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn slab_wavenumbers() {
        let ks = slab().wavenumbers(Complex::new(1.0, 0.0));
        assert_eq!(ks.len(), 3);
        assert!((ks[0] - Complex::new(1.0, 0.0)).norm() < 1e-15);
        assert!((ks[1] - Complex::new(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn imaginary_lambda_branch() {
        let ks = free().wavenumbers(Complex::new(0.0, 1.0));
        assert!((ks[0] - Complex::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn transfer_step_has_unit_determinant() {
        let p = 2.7;
        let kappa = Complex::new(0.3, -1.1);
        let dx = 0.83;
        let (a, c) = transfer_step(Complex::new(1.0, 0.0), Complex::new(0.0, 0.0), p, kappa, dx);
        let (b, d) = transfer_step(Complex::new(0.0, 0.0), Complex::new(1.0, 0.0), p, kappa, dx);
        let det = a * d - b * c;
        assert!((det - Complex::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn transfer_step_entire_at_zero() {
        let (u, pu) =
            transfer_step(Complex::new(1.0, 0.0), Complex::new(2.0, 0.0), 4.0, Complex::new(0.0, 0.0), 1.0);
        assert!((u - Complex::new(1.5, 0.0)).norm() < 1e-15);
        assert!((pu - Complex::new(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn free_wronskian_is_2_i_lambda() {
        for lam in [Complex::new(1.0, 0.0), Complex::new(3.0, 0.5), Complex::new(0.2, -0.4)] {
            let w = free().wronskian(lam);
            assert!((w - Complex::new(0.0, 2.0) * lam).norm() < 1e-12 * (1.0 + lam.norm()));
        }
    }

    #[test]
    fn wronskian_vanishes_at_zero() {
        assert!(slab().wronskian(Complex::new(0.0, 0.0)).norm() < 1e-14);
        assert!(free().wronskian(Complex::new(0.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn wronskian_is_x_independent() {
        let sol = slab().outgoing(Complex::new(1.7, -0.3));
        assert!(sol.wronskian_spread() < 1e-10);
    }

    #[test]
    fn free_outgoing_solutions_are_plane_waves() {
        let lam = Complex::new(1.3, 0.2);
        let sol = free().outgoing(lam);
        for x in [-2.0, 0.3, 1.9] {
            let expect_p = (Complex::new(0.0, 1.0) * lam * x).exp();
            let expect_m = (Complex::new(0.0, -1.0) * lam * x).exp();
            assert!((sol.plus_at(x).0 - expect_p).norm() < 1e-12);
            assert!((sol.minus_at(x).0 - expect_m).norm() < 1e-12);
        }
    }

    #[test]
    fn flux_unitarity_on_slab() {
        for lam in [0.7, 1.9, 4.3] {
            let (r, t) = slab().reflection_transmission(Complex::new(lam, 0.0)).unwrap();
            let flux = r.norm_sqr() + t.norm_sqr();
            assert!((flux - 1.0).abs() < 1e-10, "flux {flux} at lambda {lam}");
        }
    }

    #[test]
    fn plus_solution_decays_for_imaginary_lambda() {
        let sol = free().outgoing(Complex::new(0.0, 1.0));
        assert!(sol.plus_at(3.0).0.norm() < sol.plus_at(1.5).0.norm());
    }

    #[test]
    fn green_matches_free_kernel() {
        // G(x,y) = i e^{i lambda |x-y|} / (2 lambda)
        let lam = Complex::new(0.0, 1.0);
        let sol = free().outgoing(lam);
        for (x, y) in [(0.0, 0.5), (-1.0, 2.0), (1.5, 1.5)] {
            let expect = Complex::new(0.0, 1.0) * (Complex::new(0.0, 1.0) * lam * (x - y as f64).abs()).exp()
                / (2.0 * lam);
            assert!((sol.green(x, y) - expect).norm() < 1e-13);
            assert!((sol.green(x, y) - sol.green(y, x)).norm() < 1e-14);
        }
    }

    #[test]
    fn green_solves_box_source_at_origin() {
        // lambda = i, f = 1 on (-1,1): u(0) = int e^{-|y|}/2 dy = 1 - e^{-1}
        let lam = Complex::new(0.0, 1.0);
        let prob = free();
        let sol = prob.outgoing(lam);
        let quad = kernel_grid(&sol, -1.0, 1.0, &[], &NystromOptions::default());
        let ones = vec![Complex::new(1.0, 0.0); quad.len()];
        let beta = vec![1.0; quad.len()];
        let u0 = greens_eval_at(&sol, &quad, &ones, &beta, 0.0);
        assert!((u0.re - (1.0 - (-1.0f64).exp())).abs() < 1e-10);
        assert!(u0.im.abs() < 1e-12);
    }

    #[test]
    fn greens_apply_is_linear() {
        let lam = Complex::new(1.2, 0.4);
        let prob = slab();
        let sol = prob.outgoing(lam);
        let quad = kernel_grid(&sol, -2.0, 2.0, &[], &NystromOptions::default());
        let beta: Vec<f64> = quad.nodes.iter().map(|&x| prob.beta_at(x)).collect();
        let f1: Vec<Complex> = quad.nodes.iter().map(|&x| Complex::new(x.cos(), 0.0)).collect();
        let f2: Vec<Complex> = quad.nodes.iter().map(|&x| Complex::new(0.0, x * x)).collect();
        let sum: Vec<Complex> = f1.iter().zip(&f2).map(|(a, b)| a + b).collect();
        let u1 = greens_apply(&sol, &quad, &f1, &beta).unwrap();
        let u2 = greens_apply(&sol, &quad, &f2, &beta).unwrap();
        let us = greens_apply(&sol, &quad, &sum, &beta).unwrap();
        for i in 0..quad.len() {
            assert!((us[i] - u1[i] - u2[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn greens_apply_matches_pointwise_eval() {
        let lam = Complex::new(2.0, 0.1);
        let prob = slab();
        let sol = prob.outgoing(lam);
        let quad = kernel_grid(&sol, -2.0, 2.0, &[], &NystromOptions::default());
        let beta: Vec<f64> = quad.nodes.iter().map(|&x| prob.beta_at(x)).collect();
        let f: Vec<Complex> = quad.nodes.iter().map(|&x| Complex::new((-x * x).exp(), 0.0)).collect();
        let u = greens_apply(&sol, &quad, &f, &beta).unwrap();
        for idx in [0, quad.len() / 3, quad.len() - 1] {
            let direct = greens_eval_at(&sol, &quad, &f, &beta, quad.nodes[idx]);
            assert!((u[idx] - direct).norm() < 1e-11);
        }
    }

    #[test]
    fn refuses_inversion_at_resonance() {
        let prob = free();
        let sol = prob.outgoing(Complex::new(0.0, 0.0));
        let quad = kernel_grid(&sol, -1.0, 1.0, &[], &NystromOptions::default());
        let f = vec![Complex::new(1.0, 0.0); quad.len()];
        let beta = vec![1.0; quad.len()];
        assert!(matches!(
            greens_apply(&sol, &quad, &f, &beta),
            Err(Error::NearResonance { .. })
        ));
    }

    #[test]
    fn semiclassical_kappa_branches() {
        // allowed region at eps = 0: outgoing oscillatory branch
        let k = SemiclassicalProblem::kappa(-3.0, 1.0, 1.0, 0.5, 0.0);
        assert!((k - Complex::new(0.0, -4.0)).norm() < 1e-14);
        // eps > 0: decay, Re > 0
        let k = SemiclassicalProblem::kappa(0.0, 1.0, 1.0, 1.0, 1.0);
        assert!(k.re > 0.0);
        // the eps -> 0 limit approaches the eps = 0 branch
        let k_lim = SemiclassicalProblem::kappa(-3.0, 1.0, 1.0, 0.5, 1e-12);
        assert!((k_lim - Complex::new(0.0, -4.0)).norm() < 1e-6);
    }

    #[test]
    fn large_eps_norm_within_spectral_bound() {
        // || (P - i eps)^{-1} || <= 1/eps; restriction only shrinks the norm
        let alpha = PiecewiseFunction::constant(1.0);
        let v = PiecewiseFunction::box_profile(-1.0, 1.0, -3.0, 0.0);
        let prob = SemiclassicalProblem::from_functions(&alpha, &v, 1).unwrap();
        let eps = 1.0;
        for h in [0.5, 0.1] {
            let n = weighted_resolvent_norm(&prob, 1.0, h, eps, 1.0, &NystromOptions::default())
                .unwrap();
            assert!(n <= 1.0 / eps + 1e-6, "norm {n} exceeds 1/eps at h={h}");
        }
    }

    #[test]
    fn rescaling_slab() {
        let r = rescale_wave_to_semiclassical(&Medium::slab(), Complex::new(10.0, 0.0)).unwrap();
        assert!((r.h - 0.1).abs() < 1e-15);
        assert_eq!(r.e, 1.0);
        assert_eq!(r.v_beta.eval(0.0), -3.0);
        assert_eq!(r.v_beta.eval(5.0), 0.0);
        assert_eq!(r.imag_sq_coeff, 0.0);

        let r = rescale_wave_to_semiclassical(&Medium::slab(), Complex::new(10.0, 0.1)).unwrap();
        assert!((r.imag_sq_coeff - 1e-4).abs() < 1e-18);
        assert!((r.damping_coeff - 0.02).abs() < 1e-16);
    }

    #[test]
    fn rescaling_rejects_imaginary_axis() {
        assert!(rescale_wave_to_semiclassical(&Medium::slab(), Complex::new(0.0, 1.0)).is_err());
    }

    #[test]
    fn free_rescaling_gives_zero_potential() {
        let r = rescale_wave_to_semiclassical(&Medium::free(), Complex::new(4.0, 0.0)).unwrap();
        assert_eq!(r.v_beta.range(), (0.0, 0.0));
    }
}

