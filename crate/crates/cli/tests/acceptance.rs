//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs under `cargo test` as a harness-less target.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qvar_core::identities::{
    random_concave_lagrangian, run_identity_suite, smooth_lagrangian, SMOOTH_FAMILY,
};
use qvar_core::solver::{
    diagnose, optimize_truncated, shoot_forward, EnvelopeVerdict, ProblemSpec, Tolerances,
};
use qvar_core::variational::{el_residual_scaled, transversality_parts};
use qvar_core::{
    angle_args, first_variation, functional_truncated, improper_q_integral, parse_expression,
    q_integral, shift_sigma, transversality_term, Lagrangian, LatticeFn, QLattice, TailStatus,
};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn random_lattice(rng: &mut ChaCha8Rng, n: usize) -> QLattice {
    let q = [1.1, 1.5, 2.0, 3.0][rng.gen_range(0..4)];
    QLattice::new(rng.gen_range(0.5..2.0), q, n).unwrap()
}

fn random_samples(rng: &mut ChaCha8Rng, l: QLattice, len: usize) -> LatticeFn {
    LatticeFn::new(l, 0, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn spec_for(lagrangian: &Lagrangian, l: QLattice, alphas: Vec<f64>, k_hi: usize) -> ProblemSpec {
    ProblemSpec::new(
        l,
        lagrangian.clone(),
        alphas,
        k_hi,
        None,
        Tolerances::default(),
    )
    .unwrap()
}

/// Product rule, quotient rule, fundamental theorem, first- and higher-order
/// integration by parts: 1000 cases each within 1e-10 relative, under 10 s.
fn identity_suite() -> Outcome {
    let start = Instant::now();
    let report = run_identity_suite(1000, 42).unwrap();
    let elapsed = start.elapsed();
    let names = [
        "product rule",
        "quotient rule",
        "fundamental theorem",
        "integration by parts",
        "higher-order integration by parts",
    ];
    let mut worst: f64 = 0.0;
    let mut ok = elapsed < Duration::from_secs(10);
    for name in names {
        let t = report.tally(name).unwrap();
        ok &= t.failed == 0 && t.passed == 1000;
        worst = worst.max(t.worst);
    }
    outcome(
        ok,
        format!("worst relative error {worst:.2e}, {elapsed:.2?}"),
    )
}

fn composition_lemma() -> Outcome {
    let report = run_identity_suite(1000, 42).unwrap();
    let t = report.tally("composition lemma").unwrap();
    outcome(
        t.failed == 0 && t.passed == 1000,
        format!("worst {} ulps over {} cases", t.worst, t.passed + t.failed),
    )
}

fn first_variation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let r = rng.gen_range(1..=3);
        let k_hi = rng.gen_range(1..=8);
        let len = k_hi + r;
        let l = random_lattice(&mut rng, len);
        let lagrangian = smooth_lagrangian(case % SMOOTH_FAMILY.len(), r).unwrap();
        let x = random_samples(&mut rng, l, len);
        let eta = random_samples(&mut rng, l, len);
        let fv = first_variation(&lagrangian, &x, &eta, k_hi).unwrap();
        let plus = x.add(&eta.scale(eps).unwrap()).unwrap();
        let minus = x.add(&eta.scale(-eps).unwrap()).unwrap();
        let fd = (functional_truncated(&lagrangian, &plus, k_hi).unwrap()
            - functional_truncated(&lagrangian, &minus, k_hi).unwrap())
            / (2.0 * eps);
        worst = worst.max((fv - fd).abs() / 1f64.max(fv.abs()).max(fd.abs()));
    }
    outcome(
        worst <= 1e-5,
        format!("worst relative gap {worst:.2e} over 200 cases"),
    )
}

fn fundamental_lemma() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let r = rng.gen_range(1..=3);
        let k_hi = rng.gen_range(r + 1..=r + 8);
        let len = k_hi + r;
        let l = random_lattice(&mut rng, len);
        let lagrangian = smooth_lagrangian(case % SMOOTH_FAMILY.len(), r).unwrap();
        let x = random_samples(&mut rng, l, len);
        let eta: Vec<f64> = (0..len)
            .map(|m| {
                if m >= r && m < k_hi {
                    rng.gen_range(-1.0..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        let eta = LatticeFn::new(l, 0, eta).unwrap();
        let lhs = first_variation(&lagrangian, &x, &eta, k_hi).unwrap();
        let el = el_residual_scaled(&lagrangian, &x).unwrap();
        let eta_shift = shift_sigma(&eta, r).unwrap();
        let upper = k_hi - r;
        let rhs = q_integral(
            &el.residual.zip_with(&eta_shift, |e, h| e * h).unwrap(),
            0,
            upper,
        )
        .unwrap();
        let magnitude = el.scale.zip_with(&eta_shift, |s, h| s * h.abs()).unwrap();
        let scale = 1f64
            .max(lhs.abs())
            .max(rhs.abs())
            .max(q_integral(&magnitude, 0, upper).unwrap());
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    outcome(
        worst <= 1e-9,
        format!("worst relative gap {worst:.2e} over 200 cases"),
    )
}

fn closed_form_extremals() -> Outcome {
    let l = QLattice::new(1.0, 2.0, 12).unwrap();
    let lagrangian = Lagrangian::new(parse_expression("-(u2^2)", 1).unwrap());
    let spec = spec_for(&lagrangian, l, vec![1.0], 8);
    let mut notes = Vec::new();
    let mut ok = true;
    let mut timed = |name: &str, f: &dyn Fn() -> bool| {
        let start = Instant::now();
        let pass = f();
        let elapsed = start.elapsed();
        ok &= pass && elapsed < Duration::from_secs(1);
        notes.push(format!(
            "{name} {} in {elapsed:.1?}",
            if pass { "ok" } else { "FAILED" }
        ));
    };
    timed("shoot", &|| {
        let x = shoot_forward(&lagrangian, &[1.0, 1.0], &spec).unwrap();
        let d = diagnose(&lagrangian, &x, &spec).unwrap();
        x.values().iter().all(|&v| v == 1.0) && d.el_max_abs <= 1e-10
    });
    timed("optimize", &|| {
        let res = optimize_truncated(&lagrangian, &[1.0], &spec).unwrap();
        res.converged
            && res.x.values().iter().all(|&v| (v - 1.0).abs() <= 1e-6)
            && res.j.abs() <= 1e-10
    });
    timed("envelope", &|| {
        let one = LatticeFn::constant(l, 0, 12, 1.0).unwrap();
        let d = diagnose(&lagrangian, &one, &spec).unwrap();
        let flat = d.transversality[0]
            .sequence
            .envelope
            .iter()
            .all(|&v| v == 0.0);
        // x(t) = t: an extremal through x(a) = 1 that is not the maximiser
        let line = shoot_forward(&lagrangian, &[1.0, 2.0], &spec).unwrap();
        let d = diagnose(&lagrangian, &line, &spec).unwrap();
        let tv = &d.transversality[0];
        flat && tv.verdict == EnvelopeVerdict::Diverging
            && tv.sequence.terms.windows(2).all(|w| w[1] < w[0])
            && tv.sequence.liminf_estimate().unwrap() < 0.0
    });
    outcome(ok, notes.join(", "))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut all_converged = true;
    let mut max_iters = 0;
    for _ in 0..50 {
        let r = rng.gen_range(1..=3);
        let k_hi = rng.gen_range(r + 2..=r + 8);
        let l = random_lattice(&mut rng, k_hi + r + 1);
        let lagrangian = random_concave_lagrangian(&mut rng, r).unwrap();
        let alphas: Vec<f64> = (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let spec = spec_for(&lagrangian, l, alphas.clone(), k_hi);
        let res = optimize_truncated(&lagrangian, &alphas, &spec).unwrap();
        all_converged &= res.converged;
        max_iters = max_iters.max(res.iterations);
        let el = el_residual_scaled(&lagrangian, &res.x).unwrap();
        for k in 0..=k_hi - 1 - r {
            let (e, s) = (el.residual.get(k).unwrap(), el.scale.get(k).unwrap());
            worst = worst.max(e.abs() / (spec.tolerances.grad_tol * s));
        }
    }
    outcome(
        all_converged && worst <= 100.0,
        format!("worst |residual| = {worst:.2}·grad_tol·scale, at most {max_iters} iterations"),
    )
}

fn first_order_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let l = random_lattice(&mut rng, 12);
        let lagrangian = smooth_lagrangian(case % SMOOTH_FAMILY.len(), 1).unwrap();
        let x = random_samples(&mut rng, l, 12);
        let idx = rng.gen_range(0..11);
        let tv = transversality_term(&lagrangian, &x, 1, idx).unwrap();
        let args = angle_args(&x, 1, idx).unwrap().to_args();
        let expected = lagrangian
            .ast()
            .differentiate(3)
            .unwrap()
            .eval(&args)
            .unwrap()
            * x.get(idx).unwrap();
        let err = (tv - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(err);
    }
    let mut counts_ok = true;
    for r in 1..=4 {
        let l = random_lattice(&mut rng, 3 * r + 2);
        let x = random_samples(&mut rng, l, 3 * r + 2);
        let lagrangian = smooth_lagrangian(r, r).unwrap();
        for k in 1..=r {
            let parts = transversality_parts(&lagrangian, &x, k, 1).unwrap();
            counts_ok &= parts.bracket_terms.len() == k;
        }
    }
    outcome(
        worst <= f64::EPSILON && counts_ok,
        format!("worst relative gap {worst:.2e}, bracket sizes 1..=k for r<=4: {counts_ok}"),
    )
}

fn improper_integral() -> Outcome {
    let l = QLattice::new(1.0, 2.0, 40).unwrap();
    let f = LatticeFn::from_fn(l, 0, 40, |t| t.powi(-2)).unwrap();
    let res = improper_q_integral(&f, 1e-9, 3).unwrap();
    let one = LatticeFn::constant(l, 0, 40, 1.0).unwrap();
    let diverged = improper_q_integral(&one, 1e-9, 3).unwrap().status == TailStatus::Diverged;
    outcome(
        (res.value - 2.0).abs() <= 1e-6 && res.status == TailStatus::Converged && diverged,
        format!(
            "value {:.12}, status {:?}; f = 1 diverged: {diverged}",
            res.value, res.status
        ),
    )
}

fn cli_golden() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_qvar");
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let problem = root.join("problems/example.json");
    let dir = tempfile::tempdir().unwrap();
    let verify = Command::new(bin)
        .args(["verify", "--seed", "42"])
        .output()
        .unwrap();
    let opt_out = dir.path().join("opt.csv");
    let diag_out = dir.path().join("diag.csv");
    let optimize = Command::new(bin)
        .arg("optimize")
        .arg(&problem)
        .arg("--out")
        .arg(&opt_out)
        .output()
        .unwrap();
    let diagnose = Command::new(bin)
        .arg("diagnose")
        .arg(&problem)
        .arg("--traj")
        .arg(&opt_out)
        .arg("--out")
        .arg(&diag_out)
        .output()
        .unwrap();
    let same = |produced: &Path, golden: &str| {
        std::fs::read(produced).ok() == std::fs::read(root.join(golden)).ok()
    };
    let opt_same = same(&opt_out, "tests/golden/example_optimize.csv");
    let diag_same = same(&diag_out, "tests/golden/example_diagnose.csv");
    outcome(
        verify.status.success()
            && optimize.status.success()
            && diagnose.status.success()
            && opt_same
            && diag_same,
        format!(
            "verify exit {:?}, optimize csv identical: {opt_same}, diagnose csv identical: {diag_same}",
            verify.status.code()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("identity suite", identity_suite),
        ("composition lemma", composition_lemma),
        ("first-variation oracle", first_variation_oracle),
        ("fundamental-lemma consistency", fundamental_lemma),
        ("closed-form extremals", closed_form_extremals),
        ("oracle equivalence", oracle_equivalence),
        ("first-order reduction", first_order_reduction),
        ("improper integral", improper_integral),
        ("cli golden files", cli_golden),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.passed {
            failures += 1;
        }
        println!(
            "criterion {} {:<30} {}  {}",
            i + 1,
            name,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
