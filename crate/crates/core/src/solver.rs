//! Admissible prefixes, forward shooting of the Euler-Lagrange recurrence,
//! direct maximisation of the truncated functional, and diagnostics.

use log::{debug, trace};

use crate::error::{Error, Result};
use crate::qlattice::{dq_k, LatticeFn, QLattice, TailStatus};
use crate::variational::{
    el_residual_scaled, functional_truncated, lagrangian_along, transversality_sequences,
    Lagrangian, TransversalitySequence,
};

/// Armijo sufficient-increase constant.
pub const ARMIJO_C: f64 = 1e-4;
/// Backtracking shrink factor.
pub const BACKTRACK: f64 = 0.5;
/// Smallest trial displacement, relative to `max(1, max|x|)`, before the
/// line search gives up.
pub const MIN_STEP: f64 = 1e-16;
/// Relative sensitivity below which the recurrence cannot be solved.
pub const DEGENERACY_TOL: f64 = 1e-12;
/// Maximum bracket doublings per shooting step.
pub const MAX_DOUBLINGS: usize = 60;
/// Number of trailing samples used to classify a transversality envelope.
pub const ENVELOPE_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub root_tol: f64,
    pub grad_tol: f64,
    pub gap_tol: f64,
    pub tail_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            root_tol: 1e-10,
            grad_tol: 1e-8,
            gap_tol: 1e-8,
            tail_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Horizon {
    /// Truncation index: functionals integrate over `t_0..t_{k_hi}`.
    pub k_hi: usize,
    /// Lattice indices used as `T'` in transversality sweeps.
    pub sample_indices: Vec<usize>,
}

/// A validated higher-order problem on a finite lattice.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub lattice: QLattice,
    pub lagrangian: Lagrangian,
    /// `α_0..α_{r-1}`: `D_q^j[x](a) = α_j`.
    pub alphas: Vec<f64>,
    pub horizon: Horizon,
    pub tolerances: Tolerances,
    pub max_iters: usize,
}

impl ProblemSpec {
    pub const DEFAULT_MAX_ITERS: usize = 10_000;

    /// Validates the invariants; `sample_indices = None` selects
    /// [`default_sample_indices`].
    pub fn new(
        lattice: QLattice,
        lagrangian: Lagrangian,
        alphas: Vec<f64>,
        k_hi: usize,
        sample_indices: Option<Vec<usize>>,
        tolerances: Tolerances,
    ) -> Result<Self> {
        let r = lagrangian.order();
        if alphas.len() != r {
            return Err(Error::Validation(format!(
                "{} initial conditions given for order {r}",
                alphas.len()
            )));
        }
        if let Some(a) = alphas.iter().find(|a| !a.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite initial condition {a}"
            )));
        }
        if k_hi < r {
            return Err(Error::Validation(format!(
                "k_hi = {k_hi} is below the order {r}"
            )));
        }
        if k_hi + r > lattice.last_index() {
            return Err(Error::Validation(format!(
                "k_hi + r = {} exceeds the last lattice index {}",
                k_hi + r,
                lattice.last_index()
            )));
        }
        for (name, v) in [
            ("root_tol", tolerances.root_tol),
            ("grad_tol", tolerances.grad_tol),
            ("gap_tol", tolerances.gap_tol),
            ("tail_tol", tolerances.tail_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        let sample_indices = match sample_indices {
            Some(s) => {
                if s.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Validation(
                        "sample_indices must be strictly increasing".into(),
                    ));
                }
                if let Some(&bad) = s.iter().find(|&&i| i + 2 * r > lattice.n_points()) {
                    return Err(Error::Validation(format!(
                        "sample index {bad} needs lattice points up to {}",
                        bad + 2 * r - 1
                    )));
                }
                s
            }
            None => default_sample_indices(r, k_hi),
        };
        Ok(ProblemSpec {
            lattice,
            lagrangian,
            alphas,
            horizon: Horizon {
                k_hi,
                sample_indices,
            },
            tolerances,
            max_iters: Self::DEFAULT_MAX_ITERS,
        })
    }

    pub fn order(&self) -> usize {
        self.lagrangian.order()
    }
}

/// Every `T'` index from `r` whose transversality stencil stays inside the
/// optimisation window `0..=k_hi-1+r`.
pub fn default_sample_indices(r: usize, k_hi: usize) -> Vec<usize> {
    if k_hi < 2 * r {
        return Vec::new();
    }
    (r..=k_hi - r).collect()
}

/// Coefficient of `g(t_{o+n})` in `D_q^n[g](t_o)`.
fn leading_coeff(lattice: &QLattice, o: usize, n: usize) -> f64 {
    (0..n).map(|m| 1.0 / lattice.step(o + m)).product()
}

/// Solves `D_q^n[g](t_o) = target` for the sample `g(t_{o+n})`, given
/// `known = g(t_o..t_{o+n-1})`.
fn solve_top_sample(lattice: &QLattice, o: usize, known: &[f64], target: f64) -> Result<f64> {
    let n = known.len();
    let mut vals = known.to_vec();
    vals.push(0.0);
    let base = dq_k(&LatticeFn::new(*lattice, o, vals)?, n)?.values()[0];
    Ok((target - base) / leading_coeff(lattice, o, n))
}

/// `x(t_0..t_{r-1})` with `D_q^j[x](a) = α_j` for `j < r`.
pub fn seed_prefix(alphas: &[f64], lattice: &QLattice, r: usize) -> Result<Vec<f64>> {
    if alphas.len() != r {
        return Err(Error::Validation(format!(
            "{} initial conditions given for order {r}",
            alphas.len()
        )));
    }
    if lattice.n_points() < r {
        return Err(Error::too_short(format!(
            "order {r} needs {r} lattice points, have {}",
            lattice.n_points()
        )));
    }
    let mut prefix = Vec::with_capacity(r);
    for (j, &alpha) in alphas.iter().enumerate() {
        let v = solve_top_sample(lattice, 0, &prefix, alpha)?;
        prefix.push(v);
        debug_assert_eq!(prefix.len(), j + 1);
    }
    Ok(prefix)
}

/// Extends `values` (starting at index 0) to `len` samples so that
/// `D_q^r[x]` vanishes wherever a new sample closes its stencil.
pub fn polynomial_continuation(
    values: &[f64],
    lattice: &QLattice,
    r: usize,
    len: usize,
) -> Result<Vec<f64>> {
    if values.len() < r {
        return Err(Error::too_short("continuation needs at least r samples"));
    }
    let mut out = values.to_vec();
    while out.len() < len {
        let m = out.len();
        let v = solve_top_sample(lattice, m - r, &out[m - r..], 0.0)?;
        out.push(v);
    }
    Ok(out)
}

/// Default shooting prefix: the admissible seed followed by a zero
/// `r`-th derivative continuation up to `2r` samples.
pub fn default_prefix(spec: &ProblemSpec) -> Result<Vec<f64>> {
    let r = spec.order();
    let seed = seed_prefix(&spec.alphas, &spec.lattice, r)?;
    polynomial_continuation(&seed, &spec.lattice, r, 2 * r)
}

struct StepProblem<'a> {
    lagrangian: &'a Lagrangian,
    lattice: QLattice,
    offset: usize,
    window: Vec<f64>,
}

impl StepProblem<'_> {
    /// Residual and its rounding scale at `offset` with the newest sample `v`.
    fn eval(&mut self, v: f64) -> Result<(f64, f64)> {
        *self.window.last_mut().expect("non-empty window") = v;
        let x = LatticeFn::new(self.lattice, self.offset, self.window.clone())?;
        let el = el_residual_scaled(self.lagrangian, &x)?;
        Ok((el.residual.values()[0], el.scale.values()[0]))
    }
}

/// Solves the Euler-Lagrange recurrence forward from a `2r`-sample prefix.
///
/// At step `k` the residual at index `k` is a scalar function of the new
/// sample `x(t_{k+2r})`; it is zeroed to `root_tol` times the residual's
/// rounding scale by a secant step, falling back to bracketing with
/// Illinois false position.
pub fn shoot_forward(
    lagrangian: &Lagrangian,
    prefix: &[f64],
    spec: &ProblemSpec,
) -> Result<LatticeFn> {
    let r = lagrangian.order();
    if prefix.len() != 2 * r {
        return Err(Error::Validation(format!(
            "shooting prefix must have {} samples, got {}",
            2 * r,
            prefix.len()
        )));
    }
    let lattice = spec.lattice;
    let n = lattice.n_points();
    if n <= 2 * r {
        return Err(Error::too_short(format!(
            "lattice of {n} points leaves nothing to shoot for order {r}"
        )));
    }
    let q = lattice.ratio();
    let root_tol = spec.tolerances.root_tol;
    let mut x = prefix.to_vec();
    for k in 0..n - 2 * r {
        let m = k + 2 * r;
        let mut window = x[k..m].to_vec();
        let guess = x[m - 1] + q * (x[m - 1] - x[m - 2]);
        window.push(guess);
        let mut prob = StepProblem {
            lagrangian,
            lattice,
            offset: k,
            window,
        };
        let v = solve_step(&mut prob, guess, root_tol, k)?;
        trace!("shoot step {k}: x[{m}] = {v:e}");
        x.push(v);
    }
    LatticeFn::new(lattice, 0, x)
}

fn converged(res: f64, scale: f64, tol: f64) -> bool {
    res.abs() <= tol * scale
}

fn solve_step(prob: &mut StepProblem<'_>, v0: f64, tol: f64, step: usize) -> Result<f64> {
    let (r0, s0) = prob.eval(v0)?;
    let h = 1e-4 * v0.abs().max(1.0);
    let (r1, s1) = prob.eval(v0 + h)?;
    if (r1 - r0).abs() <= DEGENERACY_TOL * s0.max(s1) {
        return Err(Error::DegenerateLagrangian { step });
    }
    if converged(r0, s0, tol) {
        return Ok(v0);
    }
    if converged(r1, s1, tol) {
        return Ok(v0 + h);
    }
    let slope = (r1 - r0) / h;
    let vs = v0 - r0 / slope;
    let (rs, ss) = prob.eval(vs)?;
    if converged(rs, ss, tol) {
        return Ok(vs);
    }

    // bracket around v0, preferring the direction the secant points to
    let candidates = [(v0 + h, r1), (vs, rs)];
    let mut bracket = candidates
        .iter()
        .find(|(_, r)| r.signum() != r0.signum())
        .map(|&(v, r)| ((v0, r0), (v, r)));
    if bracket.is_none() {
        let dir = if vs >= v0 { 1.0 } else { -1.0 };
        let mut width = v0.abs() + 1.0;
        for _ in 0..MAX_DOUBLINGS {
            let vt = v0 + dir * width;
            let (rt, st) = prob.eval(vt)?;
            if converged(rt, st, tol) {
                return Ok(vt);
            }
            if rt.signum() != r0.signum() {
                bracket = Some(((v0, r0), (vt, rt)));
                break;
            }
            width *= 2.0;
        }
    }
    let ((mut a, mut fa), (mut b, mut fb)) = bracket.ok_or(Error::NoBracket { step })?;

    // Illinois false position
    let mut side = 0i8;
    let mut best = if fa.abs() < fb.abs() {
        (a, fa)
    } else {
        (b, fb)
    };
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let c = if c.is_finite() && c > a.min(b) && c < a.max(b) {
            c
        } else {
            0.5 * (a + b)
        };
        let (fc, sc) = prob.eval(c)?;
        if converged(fc, sc, tol) {
            return Ok(c);
        }
        if fc.abs() < best.1.abs() {
            best = (c, fc);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if (b - a).abs() <= 4.0 * f64::EPSILON * a.abs().max(b.abs()) {
            break;
        }
    }
    Err(Error::RootNotConverged {
        step,
        residual: best.1,
    })
}

/// Outcome of [`optimize_truncated`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    /// Trajectory on `0..=k_hi-1+r`.
    pub x: LatticeFn,
    pub j: f64,
    pub iterations: usize,
    /// Max-norm of the gradient over the free samples at exit.
    pub grad_max: f64,
    /// Per free sample, the tolerance its gradient component was held to:
    /// `grad_tol` times the component's rounding scale, plus a floor at the
    /// rounding level of `J`.
    pub grad_bound: Vec<f64>,
    pub converged: bool,
}

/// `w[j]` is the weight of `g(t_{k+j})` in `D_q^order[g](t_k)`.
pub fn stencil_weights(lattice: &QLattice, k: usize, order: usize) -> Vec<f64> {
    if order == 0 {
        return vec![1.0];
    }
    let inner = stencil_weights(lattice, k, order - 1);
    let shifted = stencil_weights(lattice, k + 1, order - 1);
    let h = lattice.step(k);
    (0..=order)
        .map(|j| {
            let hi = if j >= 1 { shifted[j - 1] } else { 0.0 };
            let lo = if j < order { inner[j] } else { 0.0 };
            (hi - lo) / h
        })
        .collect()
}

struct Objective<'a> {
    lagrangian: &'a Lagrangian,
    lattice: QLattice,
    r: usize,
    k_hi: usize,
    /// `weights[k][i]` = stencil of `D_q^i` at `t_k`.
    weights: Vec<Vec<Vec<f64>>>,
}

/// Gradient over the free samples with the magnitude of its summands.
struct Gradient {
    g: Vec<f64>,
    /// `Σ |summand|` per component: the size of the cancellation.
    scale: Vec<f64>,
}

impl Objective<'_> {
    fn trajectory(&self, x: &[f64]) -> Result<LatticeFn> {
        LatticeFn::new(self.lattice, 0, x.to_vec())
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        functional_truncated(self.lagrangian, &self.trajectory(x)?, self.k_hi)
    }

    /// Gradient of `J` with respect to the free samples `x[r..]`.
    ///
    /// Sample `m` enters the integrand at `k` through `u_{i+1} =
    /// D_q^i[x∘σ^{r-i}](t_k)` with weight `w_i(t_k)[m - (k + r - i)]`.
    fn gradient(&self, x: &[f64]) -> Result<Gradient> {
        let r = self.r;
        let traj = self.trajectory(x)?;
        let mut g = vec![0.0; x.len() - r];
        let mut scale = vec![0.0; x.len() - r];
        let q1 = self.lattice.ratio() - 1.0;
        let fields = (0..=r)
            .map(|i| crate::variational::partial_along(self.lagrangian, &traj, i + 2))
            .collect::<Result<Vec<_>>>()?;
        for k in 0..self.k_hi {
            let dt = q1 * self.lattice.point(k);
            for (i, field) in fields.iter().enumerate() {
                let f = field.values()[k] * dt;
                if f == 0.0 {
                    continue;
                }
                for (j, w) in self.weights[k][i].iter().enumerate() {
                    let m = k + r - i + j;
                    if m >= r {
                        g[m - r] += f * w;
                        scale[m - r] += (f * w).abs();
                    }
                }
            }
        }
        Ok(Gradient { g, scale })
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inverse-Hessian approximation of `-J` kept by the BFGS update.
struct InverseHessian {
    h: Vec<Vec<f64>>,
}

impl InverseHessian {
    fn scaled_identity(n: usize, gamma: f64) -> Self {
        let h = (0..n)
            .map(|i| (0..n).map(|j| if i == j { gamma } else { 0.0 }).collect())
            .collect();
        InverseHessian { h }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.h.iter().map(|row| dot(row, v)).collect()
    }

    /// BFGS update with `s = x_new - x` and `y = ∇(-J)_new - ∇(-J)`;
    /// skipped unless `s·y > 0`.
    fn update(&mut self, s: &[f64], y: &[f64]) -> bool {
        let sy = dot(s, y);
        if sy.is_nan() || sy <= f64::EPSILON * dot(s, s).sqrt() * dot(y, y).sqrt() {
            return false;
        }
        let rho = 1.0 / sy;
        let hy = self.apply(y);
        let yhy = dot(y, &hy);
        let n = s.len();
        for i in 0..n {
            for j in 0..n {
                self.h[i][j] +=
                    -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
            }
        }
        true
    }
}

fn grad_bounds(grad: &Gradient, tol: f64, j: f64) -> Vec<f64> {
    let floor = 16.0 * f64::EPSILON * j.abs().max(1.0);
    grad.scale.iter().map(|&s| tol * s + floor).collect()
}

/// Maximises the truncated functional over `x(t_r..t_{k_hi-1+r})` with the
/// first `r` samples pinned by [`seed_prefix`].
///
/// Ascent along a BFGS quasi-Newton direction with Armijo backtracking,
/// falling back to the steepest-ascent direction with a Barzilai-Borwein
/// trial length whenever the quasi-Newton step fails. Stops once every
/// gradient component is within `grad_tol` of its own rounding scale.
pub fn optimize_truncated(
    lagrangian: &Lagrangian,
    alphas: &[f64],
    spec: &ProblemSpec,
) -> Result<OptimizeResult> {
    let r = lagrangian.order();
    let k_hi = spec.horizon.k_hi;
    let lattice = spec.lattice;
    if k_hi < r || k_hi == 0 {
        return Err(Error::Validation(format!(
            "k_hi = {k_hi} is below the order {r}"
        )));
    }
    let len = k_hi + r;
    if len > lattice.n_points() {
        return Err(Error::too_short(format!(
            "optimisation window needs {len} lattice points, have {}",
            lattice.n_points()
        )));
    }
    let seed = seed_prefix(alphas, &lattice, r)?;
    let mut x = polynomial_continuation(&seed, &lattice, r, len)?;
    let weights = (0..k_hi)
        .map(|k| (0..=r).map(|i| stencil_weights(&lattice, k, i)).collect())
        .collect();
    let obj = Objective {
        lagrangian,
        lattice,
        r,
        k_hi,
        weights,
    };
    let n_free = len - r;

    let tol = spec.tolerances.grad_tol;
    let mut j = obj.value(&x)?;
    let mut grad = obj.gradient(&x)?;
    let mut bb_step = 1.0 / max_abs(&grad.g).max(1.0);
    let mut hess: Option<InverseHessian> = None;
    let mut iterations = 0;
    loop {
        let bounds = grad_bounds(&grad, tol, j);
        let gmax = max_abs(&grad.g);
        let done = grad.g.iter().zip(&bounds).all(|(g, b)| g.abs() <= *b);
        if done || iterations >= spec.max_iters {
            if done {
                debug!("optimizer converged after {iterations} iterations, J = {j:e}");
            } else {
                debug!("optimizer hit max_iters with |grad| = {gmax:e}");
            }
            return Ok(OptimizeResult {
                x: obj.trajectory(&x)?,
                j,
                iterations,
                grad_max: gmax,
                grad_bound: bounds,
                converged: done,
            });
        }
        iterations += 1;

        // J cannot be resolved below its own rounding
        let slack = 16.0 * f64::EPSILON * j.abs().max(f64::MIN_POSITIVE);
        let search = |dir: &[f64], mut step: f64| -> Result<Option<(Vec<f64>, f64)>> {
            let slope = dot(&grad.g, dir);
            if slope.is_nan() || slope <= 0.0 {
                return Ok(None);
            }
            // smallest step whose displacement is still resolvable against x
            let min_step = MIN_STEP * max_abs(&x).max(1.0) / max_abs(dir);
            let mut trial = x.clone();
            while step >= min_step {
                for (t, (xv, d)) in trial[r..].iter_mut().zip(x[r..].iter().zip(dir)) {
                    *t = xv + step * d;
                }
                match obj.value(&trial) {
                    Ok(jt) if jt >= j + ARMIJO_C * step * slope - slack => {
                        return Ok(Some((trial, jt)));
                    }
                    Ok(_) | Err(Error::EvalDomain(_)) | Err(Error::NonFinite(_)) => {
                        step *= BACKTRACK;
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(None)
        };

        let mut accepted = None;
        if let Some(h) = &hess {
            accepted = search(&h.apply(&grad.g), 1.0)?;
            if accepted.is_none() {
                trace!("quasi-Newton step failed at iteration {iterations}; restarting");
                hess = None;
            }
        }
        if accepted.is_none() {
            accepted = search(&grad.g, bb_step)?;
        }
        let Some((trial, jt)) = accepted else {
            return Err(Error::LineSearchStall { iter: iterations });
        };
        let new_grad = obj.gradient(&trial)?;
        let s: Vec<f64> = trial[r..].iter().zip(&x[r..]).map(|(a, b)| a - b).collect();
        // gradient of -J
        let y: Vec<f64> = grad.g.iter().zip(&new_grad.g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 0.0 {
            bb_step = dot(&s, &s) / sy;
        } else {
            bb_step *= 2.0;
        }
        let h = hess.get_or_insert_with(|| {
            let yy = dot(&y, &y);
            let gamma = if sy > 0.0 && yy > 0.0 {
                sy / yy
            } else {
                bb_step
            };
            InverseHessian::scaled_identity(n_free, gamma)
        });
        h.update(&s, &y);
        x = trial;
        grad = new_grad;
        j = jt;
    }
}

/// Verdict on a transversality envelope over the sampled window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeVerdict {
    /// Final envelope value within `tail_tol` of zero.
    Vanishing,
    /// Trailing envelope values move monotonically away from zero.
    Diverging,
    Undetermined,
}

impl EnvelopeVerdict {
    /// `Vanishing` when the liminf estimate (last envelope value) is within
    /// `tail_tol` of zero; `Diverging` when the trailing terms keep one sign
    /// and grow strictly in magnitude, so the tail infimum is unbounded.
    pub fn classify(terms: &[f64], envelope: &[f64], tail_tol: f64) -> Self {
        let Some(&last) = envelope.last() else {
            return EnvelopeVerdict::Undetermined;
        };
        if last.abs() <= tail_tol {
            return EnvelopeVerdict::Vanishing;
        }
        if terms.len() < ENVELOPE_WINDOW {
            return EnvelopeVerdict::Undetermined;
        }
        let tail = &terms[terms.len() - ENVELOPE_WINDOW..];
        let one_sign = tail.iter().all(|&v| v > tail_tol) || tail.iter().all(|&v| v < -tail_tol);
        let growing = tail.windows(2).all(|w| w[1].abs() > w[0].abs());
        if one_sign && growing {
            EnvelopeVerdict::Diverging
        } else {
            EnvelopeVerdict::Undetermined
        }
    }
}

impl From<EnvelopeVerdict> for TailStatus {
    fn from(v: EnvelopeVerdict) -> Self {
        match v {
            EnvelopeVerdict::Vanishing => TailStatus::Converged,
            EnvelopeVerdict::Diverging => TailStatus::Diverged,
            EnvelopeVerdict::Undetermined => TailStatus::Undetermined,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransversalityReport {
    pub sequence: TransversalitySequence,
    pub verdict: EnvelopeVerdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDiagnostics {
    pub el: LatticeFn,
    /// Rounding scale of each residual.
    pub el_scale: LatticeFn,
    pub el_max_abs: f64,
    /// Every residual is within `root_tol` of its scale.
    pub el_satisfied: bool,
    /// One record per `k = 1..=r`, in order.
    pub transversality: Vec<TransversalityReport>,
    /// Truncated functional at `k_hi`, when the trajectory covers it.
    pub j_value: Option<f64>,
}

pub fn diagnose(
    lagrangian: &Lagrangian,
    x: &LatticeFn,
    spec: &ProblemSpec,
) -> Result<TrajectoryDiagnostics> {
    let r = lagrangian.order();
    if x.len() < 2 * r + 1 {
        return Err(Error::too_short(format!(
            "diagnostics of order {r} need {} samples, have {}",
            2 * r + 1,
            x.len()
        )));
    }
    let el = el_residual_scaled(lagrangian, x)?;
    let el_max_abs = max_abs(el.residual.values());
    let el_satisfied = el
        .residual
        .values()
        .iter()
        .zip(el.scale.values())
        .all(|(&v, &s)| converged(v, s, spec.tolerances.root_tol));
    let transversality = transversality_sequences(lagrangian, x, &spec.horizon.sample_indices)?
        .into_iter()
        .map(|sequence| TransversalityReport {
            verdict: EnvelopeVerdict::classify(
                &sequence.terms,
                &sequence.envelope,
                spec.tolerances.tail_tol,
            ),
            sequence,
        })
        .collect();
    let k_hi = spec.horizon.k_hi;
    let j_value = if x.offset() == 0 && x.end() + 1 >= k_hi + r {
        Some(functional_truncated(lagrangian, x, k_hi)?)
    } else {
        None
    };
    Ok(TrajectoryDiagnostics {
        el: el.residual,
        el_scale: el.scale,
        el_max_abs,
        el_satisfied,
        transversality,
        j_value,
    })
}

/// `L⟨x⟩` on the integration window, exposed for reporting.
pub fn integrand(lagrangian: &Lagrangian, x: &LatticeFn) -> Result<LatticeFn> {
    lagrangian_along(lagrangian, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qexpr::parse_expression;

    fn lag(src: &str, r: usize) -> Lagrangian {
        Lagrangian::new(parse_expression(src, r).unwrap())
    }

    fn spec(src: &str, r: usize, alphas: Vec<f64>, n: usize, k_hi: usize) -> ProblemSpec {
        ProblemSpec::new(
            QLattice::new(1.0, 2.0, n).unwrap(),
            lag(src, r),
            alphas,
            k_hi,
            None,
            Tolerances::default(),
        )
        .unwrap()
    }

    #[test]
    fn seed_prefix_examples() {
        let l = QLattice::new(1.0, 2.0, 6).unwrap();
        assert_eq!(seed_prefix(&[2.5], &l, 1).unwrap(), vec![2.5]);
        assert_eq!(seed_prefix(&[1.0, 3.0], &l, 2).unwrap(), vec![1.0, 4.0]);
        assert_eq!(seed_prefix(&[0.0; 3], &l, 3).unwrap(), vec![0.0; 3]);
        assert!(seed_prefix(&[1.0], &l, 2).is_err());
    }

    #[test]
    fn seed_prefix_reproduces_derivatives() {
        let l = QLattice::new(0.8, 1.3, 10).unwrap();
        let alphas = [0.3, -1.2, 2.5, 0.75];
        let p = seed_prefix(&alphas, &l, 4).unwrap();
        let f = LatticeFn::new(l, 0, p).unwrap();
        for (j, &a) in alphas.iter().enumerate() {
            let d = dq_k(&f, j).unwrap().values()[0];
            assert!(
                (d - a).abs() <= 1e-12 * a.abs().max(1.0),
                "j={j}: {d} vs {a}"
            );
        }
    }

    #[test]
    fn stencil_weights_match_dq() {
        let l = QLattice::new(1.0, 1.5, 12).unwrap();
        let x =
            LatticeFn::new(l, 0, (0..12).map(|k| ((k * 7 % 5) as f64) - 1.3).collect()).unwrap();
        for order in 0..4 {
            let d = dq_k(&x, order).unwrap();
            for k in 0..12 - order {
                let w = stencil_weights(&l, k, order);
                let v: f64 = w
                    .iter()
                    .enumerate()
                    .map(|(j, w)| w * x.values()[k + j])
                    .sum();
                assert!((v - d.values()[k]).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn shoot_constant_extremal() {
        let s = spec("-u2^2", 1, vec![1.0], 12, 4);
        let x = shoot_forward(&s.lagrangian, &[1.0, 1.0], &s).unwrap();
        assert_eq!(x.len(), 12);
        assert!(x.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn shoot_linear_extremal() {
        let s = spec("-u2^2", 1, vec![0.0], 12, 4);
        let x = shoot_forward(&s.lagrangian, &[0.0, 1.0], &s).unwrap();
        for (k, &v) in x.values().iter().enumerate() {
            let t = s.lattice.point(k);
            assert!((v - (t - 1.0)).abs() <= 1e-12 * t, "k={k}: {v}");
        }
    }

    #[test]
    fn shoot_rejects_degenerate_and_bad_prefix() {
        let s = spec("u2", 1, vec![0.0], 12, 4);
        assert_eq!(
            shoot_forward(&s.lagrangian, &[0.0, 1.0], &s),
            Err(Error::DegenerateLagrangian { step: 0 })
        );
        assert!(matches!(
            shoot_forward(&s.lagrangian, &[0.0], &s),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn shoot_nonlinear_meets_root_tolerance() {
        let s = ProblemSpec::new(
            QLattice::new(1.0, 1.5, 16).unwrap(),
            lag("-u2^2 - 0.1*u2^4 + sin(u1)", 1),
            vec![0.2],
            8,
            None,
            Tolerances::default(),
        )
        .unwrap();
        let x = shoot_forward(&s.lagrangian, &[0.2, 0.5], &s).unwrap();
        let d = diagnose(&s.lagrangian, &x, &s).unwrap();
        assert!(d.el_satisfied);
    }

    #[test]
    fn optimize_examples() {
        let s = spec("-u2^2", 1, vec![1.0], 12, 4);
        let res = optimize_truncated(&s.lagrangian, &[1.0], &s).unwrap();
        assert!(res.converged);
        assert!(res.x.values().iter().all(|&v| (v - 1.0).abs() < 1e-9));
        assert!(res.j.abs() < 1e-12);
        assert_eq!(res.x.len(), 5);

        let s = spec("-u2^2", 1, vec![0.0], 12, 3);
        let res = optimize_truncated(&s.lagrangian, &[0.0], &s).unwrap();
        assert!(res.x.values().iter().all(|&v| v.abs() < 1e-9));
        assert_eq!(res.j, 0.0);

        let s = spec("-(u1 - 2*t)^2", 1, vec![1.0], 12, 4);
        let res = optimize_truncated(&s.lagrangian, &[1.0], &s).unwrap();
        assert!(res.converged);
        for (k, &v) in res.x.values().iter().enumerate() {
            let t = s.lattice.point(k);
            assert!((v - t).abs() < 1e-6 * t, "k={k}: {v}");
        }
        assert!(res.j.abs() < 1e-10);
    }

    #[test]
    fn diagnose_examples() {
        let s = spec("-u2^2", 1, vec![1.0], 12, 8);
        let one = LatticeFn::constant(s.lattice, 0, 12, 1.0).unwrap();
        let d = diagnose(&s.lagrangian, &one, &s).unwrap();
        assert_eq!(d.el_max_abs, 0.0);
        assert_eq!(d.j_value, Some(0.0));
        assert_eq!(d.transversality.len(), 1);
        assert!(d.transversality[0]
            .sequence
            .envelope
            .iter()
            .all(|&v| v == 0.0));
        assert_eq!(d.transversality[0].verdict, EnvelopeVerdict::Vanishing);

        let id = LatticeFn::from_fn(s.lattice, 0, 12, |t| t).unwrap();
        let d = diagnose(&s.lagrangian, &id, &s).unwrap();
        assert_eq!(d.el_max_abs, 0.0);
        let tv = &d.transversality[0];
        let expected: Vec<f64> = tv
            .sequence
            .sample_indices
            .iter()
            .map(|&i| -2.0 * s.lattice.point(i))
            .collect();
        assert_eq!(tv.sequence.terms, expected);
        assert_eq!(tv.verdict, EnvelopeVerdict::Diverging);

        let short = LatticeFn::constant(s.lattice, 0, 2, 1.0).unwrap();
        assert!(matches!(
            diagnose(&s.lagrangian, &short, &s),
            Err(Error::DomainTooShort(_))
        ));
    }

    #[test]
    fn problem_validation() {
        let l = QLattice::new(1.0, 2.0, 12).unwrap();
        let mk = |alphas: Vec<f64>, k_hi, samples| {
            ProblemSpec::new(
                l,
                lag("-u2^2", 1),
                alphas,
                k_hi,
                samples,
                Tolerances::default(),
            )
        };
        assert!(mk(vec![1.0, 0.0], 4, None).is_err());
        assert!(mk(vec![1.0], 11, None).is_err());
        assert!(mk(vec![1.0], 4, Some(vec![3, 2])).is_err());
        assert!(mk(vec![1.0], 4, Some(vec![11])).is_err());
        let ok = mk(vec![1.0], 4, None).unwrap();
        assert_eq!(ok.horizon.sample_indices, vec![1, 2, 3]);
    }

    #[test]
    fn envelope_verdicts() {
        use EnvelopeVerdict::*;
        let check = |terms: &[f64]| {
            EnvelopeVerdict::classify(terms, &crate::variational::liminf_envelope(terms), 1e-9)
        };
        assert_eq!(check(&[0.0, 0.0]), Vanishing);
        assert_eq!(check(&[1.0, 0.5, 1e-12]), Vanishing);
        assert_eq!(check(&[-2.0, -4.0, -8.0]), Diverging);
        assert_eq!(check(&[2.0, 4.0, 8.0]), Diverging);
        assert_eq!(check(&[-1.0, -1.0, -1.0]), Undetermined);
        assert_eq!(check(&[]), Undetermined);
    }
}
