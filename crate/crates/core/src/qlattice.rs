//! Geometric lattices `t_k = a q^k`, functions sampled on them, and the
//! Jackson q-calculus operators acting on those samples.
//!
//! Indices are always absolute lattice indices. A [`LatticeFn`] carries an
//! `offset` so that `values[j]` is the sample at lattice index `offset + j`.

use crate::error::{Error, Result};

/// The grid `{a q^k : k = 0..n_points-1}` with `q > 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QLattice {
    a: f64,
    q: f64,
    n_points: usize,
}

impl QLattice {
    pub fn new(a: f64, q: f64, n_points: usize) -> Result<Self> {
        if !(q.is_finite() && q > 1.0) {
            return Err(Error::InvalidRatio(q));
        }
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidBase(a));
        }
        if n_points == 0 {
            return Err(Error::EmptyLattice);
        }
        let lattice = QLattice { a, q, n_points };
        if !lattice.point(n_points - 1).is_finite() {
            return Err(Error::Overflow(n_points - 1));
        }
        Ok(lattice)
    }

    pub fn base(&self) -> f64 {
        self.a
    }

    pub fn ratio(&self) -> f64 {
        self.q
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Largest valid index `N`.
    pub fn last_index(&self) -> usize {
        self.n_points - 1
    }

    /// `t_k = a q^k`, recomputed from `(a, q, k)` on every call.
    #[inline]
    pub fn point(&self, k: usize) -> f64 {
        self.a * self.q.powf(k as f64)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.point(k)).collect()
    }

    /// Denominator `(q - 1) t_k` of the Jackson quotient at index `k`.
    #[inline]
    pub(crate) fn step(&self, k: usize) -> f64 {
        (self.q - 1.0) * self.point(k)
    }
}

/// Real samples of a function on a contiguous index range of a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFn {
    lattice: QLattice,
    offset: usize,
    values: Vec<f64>,
}

impl LatticeFn {
    pub fn new(lattice: QLattice, offset: usize, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::too_short(
                "a lattice function needs at least one value",
            ));
        }
        if offset + values.len() > lattice.n_points() {
            return Err(Error::too_short(format!(
                "values span indices {}..={} but the lattice ends at {}",
                offset,
                offset + values.len() - 1,
                lattice.last_index()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(offset + j));
        }
        Ok(LatticeFn {
            lattice,
            offset,
            values,
        })
    }

    /// Samples `f(t_k)` for `k = offset..offset+len`.
    pub fn from_fn(
        lattice: QLattice,
        offset: usize,
        len: usize,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let values = (offset..offset + len)
            .map(|k| f(lattice.point(k)))
            .collect();
        Self::new(lattice, offset, values)
    }

    /// The constant function on `offset..offset+len`.
    pub fn constant(lattice: QLattice, offset: usize, len: usize, c: f64) -> Result<Self> {
        Self::new(lattice, offset, vec![c; len])
    }

    pub fn lattice(&self) -> &QLattice {
        &self.lattice
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Last covered lattice index (inclusive).
    pub fn end(&self) -> usize {
        self.offset + self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.offset..=self.end()
    }

    pub fn covers(&self, lo: usize, hi: usize) -> bool {
        lo >= self.offset && hi <= self.end()
    }

    /// Sample at absolute lattice index `k`, if covered.
    pub fn get(&self, k: usize) -> Option<f64> {
        k.checked_sub(self.offset)
            .and_then(|j| self.values.get(j))
            .copied()
    }

    pub fn at(&self, k: usize) -> Result<f64> {
        self.get(k).ok_or_else(|| {
            Error::too_short(format!(
                "index {k} outside covered range {}..={}",
                self.offset,
                self.end()
            ))
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<LatticeFn> {
        LatticeFn::new(
            self.lattice,
            self.offset,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Pointwise combination over the overlap of the two index ranges.
    pub fn zip_with(&self, other: &LatticeFn, f: impl Fn(f64, f64) -> f64) -> Result<LatticeFn> {
        if self.lattice != other.lattice {
            return Err(Error::MismatchedLattice);
        }
        let lo = self.offset.max(other.offset);
        let hi = self.end().min(other.end());
        if lo > hi {
            return Err(Error::too_short("lattice functions do not overlap"));
        }
        let values = (lo..=hi)
            .map(|k| f(self.values[k - self.offset], other.values[k - other.offset]))
            .collect();
        LatticeFn::new(self.lattice, lo, values)
    }

    pub fn scale(&self, c: f64) -> Result<LatticeFn> {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &LatticeFn) -> Result<LatticeFn> {
        self.zip_with(other, |x, y| x + y)
    }

    pub fn mul(&self, other: &LatticeFn) -> Result<LatticeFn> {
        self.zip_with(other, |x, y| x * y)
    }

    /// Restriction to `lo..=hi`.
    pub fn slice(&self, lo: usize, hi: usize) -> Result<LatticeFn> {
        if lo > hi || !self.covers(lo, hi) {
            return Err(Error::too_short(format!(
                "cannot restrict {}..={} to {lo}..={hi}",
                self.offset,
                self.end()
            )));
        }
        LatticeFn::new(
            self.lattice,
            lo,
            self.values[lo - self.offset..=hi - self.offset].to_vec(),
        )
    }
}

/// `D_q^order[f]`. The result keeps `f.offset` and loses `order` samples at
/// the right end, since each application reads `g(t_{k+1})`.
pub fn dq_k(f: &LatticeFn, order: usize) -> Result<LatticeFn> {
    if f.len() <= order {
        return Err(Error::too_short(format!(
            "D_q^{order} needs {} samples, have {}",
            order + 1,
            f.len()
        )));
    }
    let lattice = f.lattice;
    let mut vals = f.values.clone();
    for _ in 0..order {
        vals = vals
            .windows(2)
            .enumerate()
            .map(|(j, w)| (w[1] - w[0]) / lattice.step(f.offset + j))
            .collect();
    }
    LatticeFn::new(lattice, f.offset, vals)
}

/// Magnitude companion of [`dq_k`]: the same stencil with absolute weights
/// applied to `|f|`. Bounds the rounding error of `dq_k(f, order)`.
pub(crate) fn dq_abs_k(f: &LatticeFn, order: usize) -> Result<LatticeFn> {
    if f.len() <= order {
        return Err(Error::too_short(format!(
            "D_q^{order} needs {} samples, have {}",
            order + 1,
            f.len()
        )));
    }
    let lattice = f.lattice;
    let mut vals: Vec<f64> = f.values.iter().map(|v| v.abs()).collect();
    for _ in 0..order {
        vals = vals
            .windows(2)
            .enumerate()
            .map(|(j, w)| (w[1] + w[0]) / lattice.step(f.offset + j))
            .collect();
    }
    LatticeFn::new(lattice, f.offset, vals)
}

/// `f ∘ σ^j`: `values[k] = f(t_{k+j})` over the same offset.
pub fn shift_sigma(f: &LatticeFn, j: usize) -> Result<LatticeFn> {
    if f.len() <= j {
        return Err(Error::too_short(format!(
            "shift by {j} needs more than {j} samples, have {}",
            f.len()
        )));
    }
    LatticeFn::new(f.lattice, f.offset, f.values[j..].to_vec())
}

/// `∫_{t_lo}^{t_hi} f d_q t = (q-1) Σ_{k=lo}^{hi-1} t_k f(t_k)`.
pub fn q_integral(f: &LatticeFn, k_lo: usize, k_hi: usize) -> Result<f64> {
    if k_lo > k_hi {
        return Err(Error::InvertedBounds { lo: k_lo, hi: k_hi });
    }
    if k_lo == k_hi {
        return Ok(0.0);
    }
    if !f.covers(k_lo, k_hi - 1) {
        return Err(Error::too_short(format!(
            "integral over {k_lo}..{k_hi} needs samples {k_lo}..={}, have {}..={}",
            k_hi - 1,
            f.offset,
            f.end()
        )));
    }
    let lattice = f.lattice;
    Ok((k_lo..k_hi)
        .map(|k| lattice.step(k) * f.values[k - f.offset])
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailStatus {
    Converged,
    Diverged,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImproperIntegral {
    /// Partial sum `P_n` at the largest `n` the samples support.
    pub value: f64,
    pub status: TailStatus,
    /// `P_0, P_1, ..., P_n`.
    pub partial_sums: Vec<f64>,
}

/// Estimates `∫_a^∞ f d_q t` from the partial sums `P_n = ∫_{t_0}^{t_n}`.
///
/// The verdict only looks at the last `tail_window` increments
/// `P_{n+1} - P_n`: all below `tail_tol` is `Converged`; all at least
/// `tail_tol`, of one sign and non-shrinking is `Diverged`; anything else
/// is `Undetermined`.
pub fn improper_q_integral(
    f: &LatticeFn,
    tail_tol: f64,
    tail_window: usize,
) -> Result<ImproperIntegral> {
    if f.offset != 0 {
        return Err(Error::too_short(
            "improper integral needs samples from index 0",
        ));
    }
    if tail_window == 0 {
        return Err(Error::Validation("tail_window must be at least 1".into()));
    }
    let lattice = f.lattice;
    let increments: Vec<f64> = f
        .values
        .iter()
        .enumerate()
        .map(|(k, &v)| lattice.step(k) * v)
        .collect();
    // P_n for n = 0..=len-1 uses samples 0..n-1
    let n = f.len() - 1;
    let mut partial_sums = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    partial_sums.push(acc);
    for inc in &increments[..n] {
        acc += inc;
        partial_sums.push(acc);
    }
    let value = acc;

    let status = if n < tail_window {
        TailStatus::Undetermined
    } else {
        let tail = &increments[n - tail_window..n];
        if tail.iter().all(|d| d.abs() < tail_tol) {
            TailStatus::Converged
        } else {
            let same_sign = tail.iter().all(|&d| d > 0.0) || tail.iter().all(|&d| d < 0.0);
            let away_from_zero = tail.iter().all(|d| d.abs() >= tail_tol);
            let non_shrinking = tail.windows(2).all(|w| w[1].abs() >= w[0].abs());
            if same_sign && away_from_zero && non_shrinking {
                TailStatus::Diverged
            } else {
                TailStatus::Undetermined
            }
        }
    };
    Ok(ImproperIntegral {
        value,
        status,
        partial_sums,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lat(a: f64, q: f64, n: usize) -> QLattice {
        QLattice::new(a, q, n).unwrap()
    }

    #[test]
    fn lattice_points() {
        assert_eq!(
            lat(1.0, 2.0, 6).points(),
            vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
        );
        assert_eq!(lat(3.0, 2.0, 3).points(), vec![3.0, 6.0, 12.0]);
    }

    #[test]
    fn lattice_rejects_bad_parameters() {
        assert_eq!(QLattice::new(1.0, 1.0, 5), Err(Error::InvalidRatio(1.0)));
        assert_eq!(QLattice::new(1.0, 0.5, 5), Err(Error::InvalidRatio(0.5)));
        assert_eq!(QLattice::new(0.0, 2.0, 5), Err(Error::InvalidBase(0.0)));
        assert_eq!(QLattice::new(-1.0, 2.0, 5), Err(Error::InvalidBase(-1.0)));
        assert_eq!(QLattice::new(1.0, 2.0, 0), Err(Error::EmptyLattice));
        assert_eq!(QLattice::new(1.0, 2.0, 1100), Err(Error::Overflow(1099)));
    }

    #[test]
    fn consecutive_points_have_ratio_q() {
        for &q in &[1.1, 1.5, 2.0, 3.0] {
            let l = lat(0.7, q, 40);
            for k in 0..39 {
                assert_relative_eq!(
                    l.point(k + 1) / l.point(k),
                    q,
                    max_relative = 4.0 * f64::EPSILON
                );
            }
        }
    }

    #[test]
    fn lattice_fn_rejects_overrun_and_nan() {
        let l = lat(1.0, 2.0, 4);
        assert!(matches!(
            LatticeFn::new(l, 2, vec![1.0, 2.0, 3.0]),
            Err(Error::DomainTooShort(_))
        ));
        assert_eq!(
            LatticeFn::new(l, 1, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(2))
        );
    }

    #[test]
    fn jackson_of_identity_is_one() {
        let l = lat(1.0, 2.0, 6);
        let f = LatticeFn::from_fn(l, 0, 6, |t| t).unwrap();
        let d = dq_k(&f, 1).unwrap();
        assert_eq!(d.offset(), 0);
        assert_eq!(d.values(), &[1.0; 5]);
    }

    #[test]
    fn jackson_of_constant_vanishes() {
        let l = lat(1.0, 2.0, 6);
        let f = LatticeFn::constant(l, 0, 6, 5.0).unwrap();
        assert!(dq_k(&f, 1).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn second_jackson_of_square_is_q_plus_one() {
        let l = lat(1.0, 2.0, 6);
        let f = LatticeFn::from_fn(l, 0, 6, |t| t * t).unwrap();
        let d2 = dq_k(&f, 2).unwrap();
        assert_eq!(d2.len(), 4);
        assert!(d2.values().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn jackson_order_zero_copies_and_too_short_fails() {
        let l = lat(1.0, 2.0, 6);
        let f = LatticeFn::from_fn(l, 1, 3, |t| t).unwrap();
        assert_eq!(dq_k(&f, 0).unwrap(), f);
        assert!(matches!(dq_k(&f, 3), Err(Error::DomainTooShort(_))));
    }

    #[test]
    fn shift_examples() {
        let l = lat(1.0, 2.0, 5);
        let f = LatticeFn::from_fn(l, 0, 5, |t| t).unwrap();
        let s = shift_sigma(&f, 1).unwrap();
        assert_eq!(s.offset(), 0);
        assert_eq!(s.values(), &[2.0, 4.0, 8.0, 16.0]);
        assert_eq!(shift_sigma(&f, 0).unwrap(), f);
        let g = LatticeFn::new(l, 0, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(shift_sigma(&g, 3), Err(Error::DomainTooShort(_))));
    }

    #[test]
    fn q_integral_examples() {
        let l = lat(1.0, 2.0, 6);
        let one = LatticeFn::constant(l, 0, 6, 1.0).unwrap();
        assert_eq!(q_integral(&one, 0, 3).unwrap(), 7.0);
        let id = LatticeFn::from_fn(l, 0, 6, |t| t).unwrap();
        assert_eq!(q_integral(&id, 0, 2).unwrap(), 5.0);
        assert_eq!(q_integral(&id, 4, 4).unwrap(), 0.0);
        assert_eq!(
            q_integral(&id, 3, 1),
            Err(Error::InvertedBounds { lo: 3, hi: 1 })
        );
        let short = LatticeFn::from_fn(l, 1, 2, |t| t).unwrap();
        assert!(matches!(
            q_integral(&short, 0, 2),
            Err(Error::DomainTooShort(_))
        ));
        // upper endpoint itself is not sampled
        assert_eq!(q_integral(&short, 1, 3).unwrap(), 2.0 * 2.0 + 4.0 * 4.0);
    }

    #[test]
    fn improper_integral_of_inverse_square_converges_to_two() {
        let l = lat(1.0, 2.0, 41);
        let f = LatticeFn::from_fn(l, 0, 41, |t| 1.0 / (t * t)).unwrap();
        let res = improper_q_integral(&f, 1e-9, 5).unwrap();
        assert_eq!(res.status, TailStatus::Converged);
        assert!((res.value - 2.0).abs() < 1e-6);
        assert_eq!(res.partial_sums.len(), 41);
    }

    #[test]
    fn improper_integral_of_one_diverges() {
        let l = lat(1.0, 2.0, 20);
        let f = LatticeFn::constant(l, 0, 20, 1.0).unwrap();
        let res = improper_q_integral(&f, 1e-9, 5).unwrap();
        assert_eq!(res.status, TailStatus::Diverged);
        // P_n = a q^n - a
        assert_eq!(res.value, 2f64.powi(19) - 1.0);
    }

    #[test]
    fn improper_integral_of_zero_and_oscillating() {
        let l = lat(1.0, 2.0, 12);
        let z = LatticeFn::constant(l, 0, 12, 0.0).unwrap();
        let res = improper_q_integral(&z, 1e-9, 3).unwrap();
        assert_eq!((res.value, res.status), (0.0, TailStatus::Converged));

        let osc = LatticeFn::new(
            l,
            0,
            (0..12)
                .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 })
                .collect(),
        )
        .unwrap();
        assert_eq!(
            improper_q_integral(&osc, 1e-9, 4).unwrap().status,
            TailStatus::Undetermined
        );
        // window longer than the data
        assert_eq!(
            improper_q_integral(&z, 1e-9, 40).unwrap().status,
            TailStatus::Undetermined
        );
    }

    #[test]
    fn zip_with_uses_overlap() {
        let l = lat(1.0, 2.0, 6);
        let f = LatticeFn::new(l, 0, vec![1.0, 2.0, 3.0]).unwrap();
        let g = LatticeFn::new(l, 1, vec![10.0, 20.0, 30.0]).unwrap();
        let h = f.add(&g).unwrap();
        assert_eq!((h.offset(), h.values()), (1, &[12.0, 23.0][..]));
        let other = LatticeFn::new(lat(1.0, 3.0, 6), 0, vec![1.0]).unwrap();
        assert_eq!(f.add(&other), Err(Error::MismatchedLattice));
    }
}
