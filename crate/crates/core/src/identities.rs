//! Randomized checks of the q-calculus identities on random lattice data.
//!
//! Each identity is evaluated as two independently computed sides and
//! compared with `|lhs - rhs| <= IDENTITY_TOL * max(1, |lhs|, |rhs|)`; the
//! composition lemma is compared in units in the last place.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::qexpr::parse_expression;
use crate::qlattice::{dq_k, q_integral, shift_sigma, LatticeFn, QLattice};
use crate::variational::{ibp_identity_sides, Lagrangian};

pub const IDENTITY_TOL: f64 = 1e-10;
pub const COMPOSITION_MAX_ULPS: u64 = 4;
pub const RATIOS: [f64; 4] = [1.1, 1.5, 2.0, 3.0];
pub const MAX_POINTS: usize = 40;
pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityTally {
    pub name: &'static str,
    pub passed: usize,
    pub failed: usize,
    /// Worst normalised discrepancy seen (relative error, or ulps for the
    /// composition lemma).
    pub worst: f64,
}

impl IdentityTally {
    fn new(name: &'static str) -> Self {
        IdentityTally {
            name,
            passed: 0,
            failed: 0,
            worst: 0.0,
        }
    }

    fn record(&mut self, ok: bool, discrepancy: f64) {
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        if discrepancy.is_nan() || discrepancy > self.worst {
            self.worst = discrepancy;
        }
    }

    fn record_rel(&mut self, lhs: f64, rhs: f64) {
        let e = rel_err(lhs, rhs);
        self.record(e <= IDENTITY_TOL, e);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub trials: usize,
    pub seed: u64,
    pub tallies: Vec<IdentityTally>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.tallies.iter().all(|t| t.failed == 0)
    }

    pub fn tally(&self, name: &str) -> Option<&IdentityTally> {
        self.tallies.iter().find(|t| t.name == name)
    }
}

/// `|lhs - rhs| / max(1, |lhs|, |rhs|)`.
pub fn rel_err(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / 1f64.max(lhs.abs()).max(rhs.abs())
}

/// Distance between two doubles in representable steps.
pub fn ulp_distance(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    if a.is_nan() || b.is_nan() || a.signum() != b.signum() {
        return u64::MAX;
    }
    let (x, y) = (a.abs().to_bits(), b.abs().to_bits());
    x.abs_diff(y)
}

/// A random lattice drawn from the suite's parameter grid.
pub fn random_lattice(rng: &mut impl Rng, min_points: usize) -> QLattice {
    let q = *RATIOS.choose(rng).expect("non-empty");
    let a = rng.gen_range(0.5..2.0);
    let n = rng.gen_range(min_points.max(2)..=MAX_POINTS);
    QLattice::new(a, q, n).expect("grid parameters are valid")
}

pub fn random_fn(rng: &mut impl Rng, lattice: QLattice, lo: f64, hi: f64) -> LatticeFn {
    let values = (0..lattice.n_points())
        .map(|_| rng.gen_range(lo..hi))
        .collect();
    LatticeFn::new(lattice, 0, values).expect("finite samples")
}

/// Values bounded away from zero, of random sign.
pub fn random_nonzero_fn(rng: &mut impl Rng, lattice: QLattice) -> LatticeFn {
    let values = (0..lattice.n_points())
        .map(|_| {
            let m = rng.gen_range(0.5..2.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    LatticeFn::new(lattice, 0, values).expect("finite samples")
}

/// Smooth Lagrangian templates; `U` stands for the top argument `u{r+1}`.
pub const SMOOTH_FAMILY: [&str; 5] = [
    "-(U^2) + 0.5*sin(u1)*u2 + 0.1*t*u1",
    "-(u1 - cos(t))^2 - 0.3*U^2 + 0.2*exp(-(u2^2))",
    "ln(1 + u1^2) - U^2*(1 + 0.1*sin(t)) + 0.05*u1*U",
    "sqrt(1 + u1^2 + u2^2) - 0.5*U^2 + cos(0.3*u2)/(1 + t)",
    "-(U - u1)^2 - u1^4/12 + u2^3/30",
];

/// Member `index` of [`SMOOTH_FAMILY`] at order `r`.
pub fn smooth_lagrangian(index: usize, r: usize) -> Result<Lagrangian> {
    let src = SMOOTH_FAMILY[index % SMOOTH_FAMILY.len()].replace('U', &format!("u{}", r + 1));
    Ok(Lagrangian::new(parse_expression(&src, r)?))
}

/// `-Σ_j c_j (u_j - m_j)^2 + ε sin(u1 + φ t/(1+t))` with `ε < 0.4 c_1`,
/// strictly concave in the trajectory samples.
pub fn random_concave_lagrangian(rng: &mut impl Rng, r: usize) -> Result<Lagrangian> {
    let mut squares = Vec::with_capacity(r + 1);
    let mut c1 = 0.0;
    for j in 1..=r + 1 {
        let c: f64 = rng.gen_range(0.2..2.0);
        if j == 1 {
            c1 = c;
        }
        let m: f64 = rng.gen_range(-1.0..1.0);
        squares.push(format!("{c}*(u{j} - {m})^2"));
    }
    let eps = c1 * rng.gen_range(0.0..0.4);
    let phase: f64 = rng.gen_range(0.0..3.0);
    let src = format!(
        "-({}) + {eps}*sin(u1 + {phase}*t/(1 + t))",
        squares.join(" + ")
    );
    Ok(Lagrangian::new(parse_expression(&src, r)?))
}

pub const NAMES: [&str; 11] = [
    "derivative linearity",
    "product rule",
    "quotient rule",
    "integral linearity",
    "integral splitting",
    "integral positivity",
    "integration by parts",
    "fundamental theorem",
    "derivative of integral",
    "composition lemma",
    "higher-order integration by parts",
];

/// Runs every identity `trials` times on fresh random data.
pub fn run_identity_suite(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tallies: Vec<IdentityTally> = NAMES.iter().map(|n| IdentityTally::new(n)).collect();
    for _ in 0..trials {
        run_trial(&mut rng, &mut tallies)?;
    }
    Ok(SuiteReport {
        trials,
        seed,
        tallies,
    })
}

fn run_trial(rng: &mut ChaCha8Rng, tallies: &mut [IdentityTally]) -> Result<()> {
    let lattice = random_lattice(rng, 2 * MAX_ORDER + 2);
    let q = lattice.ratio();
    let n = lattice.n_points();
    let f = random_fn(rng, lattice, -1.0, 1.0);
    let g = random_fn(rng, lattice, -1.0, 1.0);
    let nz = random_nonzero_fn(rng, lattice);
    let (alpha, beta) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
    let df = dq_k(&f, 1)?;
    let dg = dq_k(&g, 1)?;
    let k = rng.gen_range(0..n - 1);
    let t = |i: usize| (f.values()[i], g.values()[i]);

    // D_q[αf + βg] = α D_q f + β D_q g
    {
        let comb = f.zip_with(&g, |x, y| alpha * x + beta * y)?;
        let lhs = dq_k(&comb, 1)?.values()[k];
        let rhs = alpha * df.values()[k] + beta * dg.values()[k];
        tallies[0].record_rel(lhs, rhs);
    }
    // D_q[fg] = D_q f · g + f^σ · D_q g
    {
        let lhs = dq_k(&f.mul(&g)?, 1)?.values()[k];
        let rhs = df.values()[k] * t(k).1 + t(k + 1).0 * dg.values()[k];
        tallies[1].record_rel(lhs, rhs);
    }
    // D_q[f/g] = (D_q f · g - f · D_q g) / (g g^σ)
    {
        let quot = f.zip_with(&nz, |x, y| x / y)?;
        let lhs = dq_k(&quot, 1)?.values()[k];
        let (gk, gk1) = (nz.values()[k], nz.values()[k + 1]);
        let dnz = dq_k(&nz, 1)?.values()[k];
        let rhs = (df.values()[k] * gk - f.values()[k] * dnz) / (gk * gk1);
        tallies[2].record_rel(lhs, rhs);
    }

    let lo = rng.gen_range(0..n - 1);
    let hi = rng.gen_range(lo + 1..n);
    let mid = rng.gen_range(lo..=hi);
    // ∫(αf + βg) = α∫f + β∫g
    {
        let comb = f.zip_with(&g, |x, y| alpha * x + beta * y)?;
        let lhs = q_integral(&comb, lo, hi)?;
        let rhs = alpha * q_integral(&f, lo, hi)? + beta * q_integral(&g, lo, hi)?;
        tallies[3].record_rel(lhs, rhs);
    }
    // ∫_lo^hi = ∫_lo^mid + ∫_mid^hi
    {
        let lhs = q_integral(&f, lo, hi)?;
        let rhs = q_integral(&f, lo, mid)? + q_integral(&f, mid, hi)?;
        tallies[4].record_rel(lhs, rhs);
    }
    // f > 0 ⇒ ∫ f > 0
    {
        let pos = f.map(|v| v.abs() + 1e-3)?;
        let v = q_integral(&pos, lo, hi)?;
        tallies[5].record(v > 0.0, if v > 0.0 { 0.0 } else { 1.0 });
    }
    // ∫ f D_q g = [f g] - ∫ D_q f · g^σ
    {
        let lhs = q_integral(&f.mul(&dg)?, lo, hi)?;
        let gs = shift_sigma(&g, 1)?;
        let boundary = t(hi).0 * t(hi).1 - t(lo).0 * t(lo).1;
        let rhs = boundary - q_integral(&df.mul(&gs)?, lo, hi)?;
        tallies[6].record_rel(lhs, rhs);
    }
    // ∫_{t_0}^{t_m} D_q f = f(t_m) - f(t_0)
    {
        let m = rng.gen_range(0..n);
        let lhs = q_integral(&df, 0, m)?;
        let rhs = f.values()[m] - f.values()[0];
        tallies[7].record_rel(lhs, rhs);
    }
    // D_q[t ↦ ∫_{t_0}^t f](t_k) = f(t_k)
    {
        let antideriv = (0..n)
            .map(|m| q_integral(&f, 0, m))
            .collect::<Result<Vec<_>>>()?;
        let big_f = LatticeFn::new(lattice, 0, antideriv)?;
        let lhs = dq_k(&big_f, 1)?.values()[k];
        tallies[8].record_rel(lhs, f.values()[k]);
    }
    // D_q[f](σ t) = (1/q) D_q[f∘σ](t)
    {
        let kk = rng.gen_range(0..n - 2);
        let lhs = df.values()[kk + 1];
        let rhs = dq_k(&shift_sigma(&f, 1)?, 1)?.values()[kk] / q;
        let ulps = ulp_distance(lhs, rhs);
        tallies[9].record(ulps <= COMPOSITION_MAX_ULPS, ulps as f64);
    }
    // higher-order integration by parts
    {
        let r = rng.gen_range(1..=MAX_ORDER);
        let i = rng.gen_range(1..=r);
        let top = n - r; // g must reach hi + r - 1, f must reach hi + i - 1
        let lo = rng.gen_range(0..top);
        let hi = rng.gen_range(lo..=top);
        let (lhs, rhs) = ibp_identity_sides(&f, &g, r, i, lo, hi)?;
        tallies[10].record_rel(lhs, rhs);
    }
    Ok(())
}
