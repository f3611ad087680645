//! Higher-order q-variational calculus on a lattice trajectory.
//!
//! For a Lagrangian of order `r` the trajectory `x` enters through
//! `⟨x⟩(t) = (t, x∘σ^r, D_q[x∘σ^{r-1}], ..., D_q^r[x])`, so argument
//! position `i + 2` of `L` carries `D_q^i[x∘σ^{r-i}]`. Evaluating anything
//! at lattice index `k` reads `x` on `k..=k+r`.

use crate::error::{Error, Result};
use crate::qexpr::ExprAst;
use crate::qlattice::{dq_abs_k, dq_k, q_integral, shift_sigma, LatticeFn, QLattice};

/// A Lagrangian together with its symbolic partials `∂_1 L .. ∂_{r+2} L`.
#[derive(Debug, Clone)]
pub struct Lagrangian {
    ast: ExprAst,
    partials: Vec<ExprAst>,
}

impl Lagrangian {
    pub fn new(ast: ExprAst) -> Self {
        let partials = (1..=ast.arity())
            .map(|j| ast.differentiate(j).expect("argument index within arity"))
            .collect();
        Lagrangian { ast, partials }
    }

    pub fn order(&self) -> usize {
        self.ast.order()
    }

    pub fn ast(&self) -> &ExprAst {
        &self.ast
    }

    /// `∂_j L` for `j` in `1..=r+2`.
    pub fn partial(&self, j: usize) -> &ExprAst {
        &self.partials[j - 1]
    }

    /// `c L` for a real `c`, reparsed from text so partials stay symbolic.
    pub fn scaled(&self, c: f64) -> Result<Lagrangian> {
        let text = format!("({c:?})*({})", self.ast);
        Ok(Lagrangian::new(crate::qexpr::parse_expression(
            &text,
            self.order(),
        )?))
    }
}

impl From<ExprAst> for Lagrangian {
    fn from(ast: ExprAst) -> Self {
        Lagrangian::new(ast)
    }
}

/// `⟨x⟩(t_k)`: the lattice point and `u_1..u_{r+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArgVector {
    pub t: f64,
    pub u: Vec<f64>,
}

impl ArgVector {
    /// Flattened `(t, u_1, ..., u_{r+1})` in the Lagrangian's argument order.
    pub fn to_args(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.u.len() + 1);
        v.push(self.t);
        v.extend_from_slice(&self.u);
        v
    }
}

/// Columns of `⟨x⟩` over every index where it is defined.
struct ArgTable {
    lattice: QLattice,
    offset: usize,
    /// `components[i] = D_q^i[x∘σ^{r-i}]`, each of the same length.
    components: Vec<LatticeFn>,
}

impl ArgTable {
    fn build(x: &LatticeFn, r: usize) -> Result<Self> {
        if x.len() <= r {
            return Err(Error::too_short(format!(
                "⟨x⟩ of order {r} needs at least {} samples, have {}",
                r + 1,
                x.len()
            )));
        }
        let components = (0..=r)
            .map(|i| dq_k(&shift_sigma(x, r - i)?, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(ArgTable {
            lattice: *x.lattice(),
            offset: x.offset(),
            components,
        })
    }

    fn len(&self) -> usize {
        self.components[0].len()
    }

    fn row(&self, j: usize) -> Vec<f64> {
        let mut args = Vec::with_capacity(self.components.len() + 1);
        args.push(self.lattice.point(self.offset + j));
        args.extend(self.components.iter().map(|c| c.values()[j]));
        args
    }

    fn eval(&self, expr: &ExprAst) -> Result<LatticeFn> {
        let values = (0..self.len())
            .map(|j| expr.eval(&self.row(j)))
            .collect::<Result<Vec<_>>>()?;
        LatticeFn::new(self.lattice, self.offset, values)
    }
}

/// `⟨x⟩(t_k)` computed through [`shift_sigma`] and [`dq_k`].
pub fn angle_args(x: &LatticeFn, r: usize, k: usize) -> Result<ArgVector> {
    if !x.covers(k, k + r) {
        return Err(Error::too_short(format!(
            "⟨x⟩ at index {k} needs samples {k}..={}",
            k + r
        )));
    }
    let table = ArgTable::build(&x.slice(k, k + r)?, r)?;
    let row = table.row(0);
    Ok(ArgVector {
        t: row[0],
        u: row[1..].to_vec(),
    })
}

/// `t_k ↦ L⟨x⟩(t_k)` wherever `⟨x⟩` is defined.
pub fn lagrangian_along(lagrangian: &Lagrangian, x: &LatticeFn) -> Result<LatticeFn> {
    let r = lagrangian.order();
    ArgTable::build(x, r)?.eval(lagrangian.ast())
}

/// `t_k ↦ ∂_j L⟨x⟩(t_k)` for `j` in `1..=r+2`.
pub fn partial_along(lagrangian: &Lagrangian, x: &LatticeFn, j: usize) -> Result<LatticeFn> {
    let r = lagrangian.order();
    ArgTable::build(x, r)?.eval(lagrangian.partial(j))
}

/// `f_i = ∂_{i+2} L⟨x⟩` for `i = 0..=r`.
fn partial_fields(lagrangian: &Lagrangian, x: &LatticeFn) -> Result<Vec<LatticeFn>> {
    let r = lagrangian.order();
    let table = ArgTable::build(x, r)?;
    (0..=r)
        .map(|i| table.eval(lagrangian.partial(i + 2)))
        .collect()
}

/// `∫_{t_0}^{t_{k_hi}} L⟨x⟩ d_q t`; reads `x` on `0..=k_hi-1+r`.
pub fn functional_truncated(lagrangian: &Lagrangian, x: &LatticeFn, k_hi: usize) -> Result<f64> {
    let r = lagrangian.order();
    if k_hi == 0 {
        return Ok(0.0);
    }
    let window = window(x, k_hi - 1 + r)?;
    q_integral(&lagrangian_along(lagrangian, &window)?, 0, k_hi)
}

fn window(x: &LatticeFn, last: usize) -> Result<LatticeFn> {
    if !x.covers(0, last) {
        return Err(Error::too_short(format!(
            "need samples 0..={last}, have {}..={}",
            x.offset(),
            x.end()
        )));
    }
    x.slice(0, last)
}

/// `∫_{t_0}^{t_{k_hi}} Σ_i ∂_{i+2}L⟨x⟩ · D_q^i[η∘σ^{r-i}] d_q t`.
pub fn first_variation(
    lagrangian: &Lagrangian,
    x: &LatticeFn,
    eta: &LatticeFn,
    k_hi: usize,
) -> Result<f64> {
    let r = lagrangian.order();
    if x.lattice() != eta.lattice() {
        return Err(Error::MismatchedLattice);
    }
    if k_hi == 0 {
        return Ok(0.0);
    }
    let xw = window(x, k_hi - 1 + r)?;
    let ew = window(eta, k_hi - 1 + r)?;
    let fields = partial_fields(lagrangian, &xw)?;
    let mut integrand = LatticeFn::constant(*x.lattice(), 0, k_hi, 0.0)?;
    for (i, f) in fields.iter().enumerate() {
        let deta = dq_k(&shift_sigma(&ew, r - i)?, i)?;
        integrand = integrand.add(&f.mul(&deta)?)?;
    }
    q_integral(&integrand, 0, k_hi)
}

/// Both sides of the higher-order q-integration by parts identity
/// for `∫_{t_lo}^{t_hi} f · D_q^i[g∘σ^{r-i}] d_q t`, evaluated independently.
///
/// The right side is
/// `(-1)^i q^{-i(i-1)/2} ∫ D_q^i[f] g∘σ^r d_q t + [B]_{t_lo}^{t_hi}` with
/// `B = f D_q^{i-1}[g∘σ^{r-i}]
///    + Σ_{k=1}^{i-1} (-1)^k D_q^k[f] D_q^{i-1-k}[g∘σ^{r-i+k}] Π_{j=1}^k q^{-(i-j)}`.
pub fn ibp_identity_sides(
    f: &LatticeFn,
    g: &LatticeFn,
    r: usize,
    i: usize,
    k_lo: usize,
    k_hi: usize,
) -> Result<(f64, f64)> {
    if r == 0 {
        return Err(Error::InvalidOrder(r));
    }
    if i == 0 || i > r {
        return Err(Error::Validation(format!(
            "derivative order {i} not in 1..={r}"
        )));
    }
    if k_lo > k_hi {
        return Err(Error::InvertedBounds { lo: k_lo, hi: k_hi });
    }
    if f.lattice() != g.lattice() {
        return Err(Error::MismatchedLattice);
    }
    if !f.covers(k_lo, k_hi + i - 1) || !g.covers(k_lo, k_hi + r - 1) {
        return Err(Error::too_short(format!(
            "identity over {k_lo}..{k_hi} needs f on {k_lo}..={} and g on {k_lo}..={}",
            k_hi + i - 1,
            k_hi + r - 1
        )));
    }
    let q = f.lattice().ratio();

    let lhs = {
        let dg = dq_k(&shift_sigma(g, r - i)?, i)?;
        q_integral(&f.mul(&dg)?, k_lo, k_hi)?
    };

    let sign = |k: usize| if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    let integral_term = {
        let coeff = sign(i) * q.powi(-((i * (i - 1) / 2) as i32));
        let dif = dq_k(f, i)?;
        let gs = shift_sigma(g, r)?;
        coeff * q_integral(&dif.mul(&gs)?, k_lo, k_hi)?
    };
    let bracket = |t: usize| -> Result<f64> {
        let mut b = f.at(t)? * dq_at(g, r - i, i - 1, t)?;
        for k in 1..i {
            let weight: f64 = (1..=k).map(|j| q.powi(-((i - j) as i32))).product();
            b += sign(k) * dq_at(f, 0, k, t)? * dq_at(g, r - i + k, i - 1 - k, t)? * weight;
        }
        Ok(b)
    };
    let rhs = integral_term + bracket(k_hi)? - bracket(k_lo)?;
    Ok((lhs, rhs))
}

/// `D_q^order[f∘σ^shift](t_k)` from the samples `k+shift..=k+shift+order`.
fn dq_at(f: &LatticeFn, shift: usize, order: usize, k: usize) -> Result<f64> {
    if !f.covers(k, k + shift + order) {
        return Err(Error::too_short(format!(
            "D_q^{order}[f∘σ^{shift}] at {k} needs samples {k}..={}",
            k + shift + order
        )));
    }
    let local = shift_sigma(&f.slice(k, k + shift + order)?, shift)?;
    dq_k(&local, order)?.at(k)
}

fn alternating_coeff(q: f64, i: usize) -> f64 {
    let sign = if i.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * q.powi(-((i * (i.saturating_sub(1)) / 2) as i32))
}

/// Euler-Lagrange residual with its rounding scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ElResidual {
    pub residual: LatticeFn,
    /// `Σ_i |c_i| |D_q|^i[|∂_{i+2}L⟨x⟩|]`: the magnitude the residual's
    /// cancellation works against, never smaller than `f64::MIN_POSITIVE`.
    pub scale: LatticeFn,
}

/// `Σ_{i=0}^r (-1)^i q^{-i(i-1)/2} D_q^i[∂_{i+2}L⟨x⟩](t_k)` for every `k`
/// with `x` covering `k..=k+2r`.
pub fn el_residual(lagrangian: &Lagrangian, x: &LatticeFn) -> Result<LatticeFn> {
    Ok(el_residual_scaled(lagrangian, x)?.residual)
}

pub fn el_residual_scaled(lagrangian: &Lagrangian, x: &LatticeFn) -> Result<ElResidual> {
    let r = lagrangian.order();
    if x.len() < 2 * r + 1 {
        return Err(Error::too_short(format!(
            "Euler-Lagrange residual of order {r} needs {} samples, have {}",
            2 * r + 1,
            x.len()
        )));
    }
    let q = x.lattice().ratio();
    let n = x.len() - 2 * r;
    let fields = partial_fields(lagrangian, x)?;
    let mut residual = vec![0.0; n];
    let mut scale = vec![0.0; n];
    for (i, f) in fields.iter().enumerate() {
        let c = alternating_coeff(q, i);
        let d = dq_k(f, i)?;
        let da = dq_abs_k(f, i)?;
        for j in 0..n {
            residual[j] += c * d.values()[j];
            scale[j] += c.abs() * da.values()[j];
        }
    }
    for s in &mut scale {
        *s = s.max(f64::MIN_POSITIVE);
    }
    Ok(ElResidual {
        residual: LatticeFn::new(*x.lattice(), x.offset(), residual)?,
        scale: LatticeFn::new(*x.lattice(), x.offset(), scale)?,
    })
}

/// Decomposition of the `k`-th transversality expression at `T' = t_idx`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransversalityParts {
    /// The `k` summands of the bracket, in order.
    pub bracket_terms: Vec<f64>,
    /// `D_q^{r-k}[x∘σ^{k-1}](T')`.
    pub factor: f64,
}

impl TransversalityParts {
    pub fn value(&self) -> f64 {
        self.bracket_terms.iter().sum::<f64>() * self.factor
    }
}

/// `Ψ_i = Π_{j=1}^i q^{-(r-(k-1)+(j-1))}`.
pub fn psi(q: f64, r: usize, k: usize, i: usize) -> f64 {
    (1..=i)
        .map(|j| q.powi(-((r - (k - 1) + (j - 1)) as i32)))
        .product()
}

fn transversality_from_fields(
    fields: &[LatticeFn],
    x: &LatticeFn,
    r: usize,
    k: usize,
    idx: usize,
) -> Result<TransversalityParts> {
    let q = x.lattice().ratio();
    // argument position r+2-(k-1) is field r-(k-1)
    let base = r + 1 - k;
    let mut bracket_terms = Vec::with_capacity(k);
    bracket_terms.push(fields[base].at(idx)?);
    for i in 1..k {
        let sign = if i.is_multiple_of(2) { 1.0 } else { -1.0 };
        bracket_terms.push(sign * dq_at(&fields[base + i], 0, i, idx)? * psi(q, r, k, i));
    }
    let factor = dq_at(x, k - 1, r - k, idx)?;
    Ok(TransversalityParts {
        bracket_terms,
        factor,
    })
}

fn transversality_stencil_end(r: usize, k: usize, idx: usize) -> usize {
    // fields up to idx+k-1 need x up to idx+k-1+r; the factor needs idx+r-1
    idx + k - 1 + r
}

/// The `k`-th transversality expression at lattice index `idx`, split into
/// its bracket summands and the trailing derivative factor.
pub fn transversality_parts(
    lagrangian: &Lagrangian,
    x: &LatticeFn,
    k: usize,
    idx: usize,
) -> Result<TransversalityParts> {
    let r = lagrangian.order();
    if k == 0 || k > r {
        return Err(Error::Validation(format!(
            "transversality index {k} not in 1..={r}"
        )));
    }
    let end = transversality_stencil_end(r, k, idx);
    if !x.covers(idx, end) {
        return Err(Error::too_short(format!(
            "transversality k={k} at {idx} needs samples {idx}..={end}"
        )));
    }
    let local = x.slice(idx, end)?;
    let fields = partial_fields(lagrangian, &local)?;
    transversality_from_fields(&fields, &local, r, k, idx)
}

pub fn transversality_term(
    lagrangian: &Lagrangian,
    x: &LatticeFn,
    k: usize,
    idx: usize,
) -> Result<f64> {
    Ok(transversality_parts(lagrangian, x, k, idx)?.value())
}

/// Suffix minima: `env[j] = min(seq[j..])`.
pub fn liminf_envelope(seq: &[f64]) -> Vec<f64> {
    let mut env = seq.to_vec();
    for j in (0..env.len().saturating_sub(1)).rev() {
        env[j] = env[j].min(env[j + 1]);
    }
    env
}

/// One transversality condition sampled over a window of `T'` indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TransversalitySequence {
    pub k: usize,
    pub sample_indices: Vec<usize>,
    pub terms: Vec<f64>,
    pub envelope: Vec<f64>,
}

impl TransversalitySequence {
    /// Envelope value at the largest sampled `T'`, the window's liminf estimate.
    pub fn liminf_estimate(&self) -> Option<f64> {
        self.envelope.last().copied()
    }
}

/// All `r` transversality sequences along `x` at the given `T'` indices.
pub fn transversality_sequences(
    lagrangian: &Lagrangian,
    x: &LatticeFn,
    sample_indices: &[usize],
) -> Result<Vec<TransversalitySequence>> {
    let r = lagrangian.order();
    let fields = partial_fields(lagrangian, x)?;
    (1..=r)
        .map(|k| {
            let terms = sample_indices
                .iter()
                .map(|&idx| {
                    let end = transversality_stencil_end(r, k, idx);
                    if idx < x.offset() || end > x.end() {
                        return Err(Error::too_short(format!(
                            "transversality k={k} at {idx} needs samples {idx}..={end}"
                        )));
                    }
                    Ok(transversality_from_fields(&fields, x, r, k, idx)?.value())
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TransversalitySequence {
                k,
                sample_indices: sample_indices.to_vec(),
                envelope: liminf_envelope(&terms),
                terms,
            })
        })
        .collect()
}

/// Objective gap of a challenger against a candidate over a window of horizons.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub sample_indices: Vec<usize>,
    /// `∫_{t_0}^{T'} (L⟨x⟩ - L⟨x_*⟩) d_q t` at each sampled `T'`.
    pub terms: Vec<f64>,
    pub envelope: Vec<f64>,
    /// Acceptance threshold actually applied.
    pub tolerance: f64,
    /// The candidate survives this challenger on this window.
    pub passes: bool,
}

/// Window-relative check of weak maximality of `x_star` against one
/// challenger `x`. `gap_tol` is scaled by `1 + max |J(x_star)|` over the
/// window before comparison with the final envelope value.
pub fn weak_maximality_gap(
    lagrangian: &Lagrangian,
    x_star: &LatticeFn,
    x: &LatticeFn,
    sample_indices: &[usize],
    gap_tol: f64,
) -> Result<GapReport> {
    let r = lagrangian.order();
    if x_star.lattice() != x.lattice() {
        return Err(Error::MismatchedLattice);
    }
    if sample_indices.is_empty() {
        return Err(Error::Validation("no sample indices".into()));
    }
    let last = *sample_indices.iter().max().expect("non-empty");
    let star_vals = lagrangian_along(lagrangian, &window(x_star, last.max(1) - 1 + r)?)?;
    let chal_vals = lagrangian_along(lagrangian, &window(x, last.max(1) - 1 + r)?)?;
    let mut terms = Vec::with_capacity(sample_indices.len());
    let mut scale: f64 = 0.0;
    for &idx in sample_indices {
        let js = q_integral(&star_vals, 0, idx)?;
        let jc = q_integral(&chal_vals, 0, idx)?;
        scale = scale.max(js.abs());
        terms.push(jc - js);
    }
    let envelope = liminf_envelope(&terms);
    let tolerance = gap_tol * (1.0 + scale);
    let passes = *envelope.last().expect("non-empty") <= tolerance;
    Ok(GapReport {
        sample_indices: sample_indices.to_vec(),
        terms,
        envelope,
        tolerance,
        passes,
    })
}
