//! Acceptance suite: end-to-end checks of the amplification accountant
//! against pinned reference values, independent oracles, and structural
//! properties. Each test prints a single `PASS`/`FAIL` line.

mod common;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shuffle_amp::accountant::delta_s;
use shuffle_amp::clone_count::poisson_binomial;
use shuffle_amp::clone_probability::{baseline_p_rr, p_neighbor, worst_case_p};
use shuffle_amp::mechanisms::{calibrate, MechanismKind, MechanismSpec};
use shuffle_amp::oracle::{exact_mixture, hockey_stick};
use shuffle_amp::pipeline::{
    resolve, run_bound_curve, run_inverse, EpsilonLaw, ExperimentConfig, PMode,
};

fn gaussian_config(n: usize, lo: f64, hi: f64, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        n,
        law: EpsilonLaw::Uniform { lo, hi },
        clip: Some((lo, hi)),
        delta_local: 1e-10,
        mechanism: MechanismKind::Gaussian,
        p_mode: PMode::HypothesisTest,
        seed,
        eps_grid: None,
        delta_target: None,
    }
}

fn verdict(name: &str, pass: bool, detail: &str) -> bool {
    println!(
        "ACCEPTANCE {name}: {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

/// The central bound on the uniform(0.5, 2) Gaussian population of 10^4
/// users must reproduce the pinned reference curve within a factor of 10
/// at each of five epsilon values.
#[test]
fn reference_curve_within_factor_ten() {
    let config = gaussian_config(10_000, 0.5, 2.0, 1);
    let run = resolve(&config).expect("resolve");
    let refs = [
        (0.01, 7e-4),
        (0.03, 2e-6),
        (0.05, 3e-10),
        (0.08, 1e-18),
        (0.1, 1e-25),
    ];
    let mut pass = true;
    let mut detail = String::new();
    for (eps, reference) in refs {
        let d = delta_s(&run.input, eps).expect("delta_s").delta;
        let ratio = d / reference;
        pass &= (0.1..=10.0).contains(&ratio);
        detail.push_str(&format!("eps={eps} ratio={ratio:.3} "));
    }
    assert!(verdict("reference_curve_within_factor_ten", pass, &detail));
}

/// The hypothesis-testing clone probabilities must dominate the
/// randomized-response reduction: at every grid point the bound in
/// `hypothesis-test` mode is no larger than in `rr-reduction` mode, on
/// both reference populations.
#[test]
fn hypothesis_test_dominates_rr_reduction() {
    let mut pass = true;
    let mut detail = String::new();
    for (name, lo, hi) in [("uniform(0.5,2)", 0.5, 2.0), ("uniform(0.05,1)", 0.05, 1.0)] {
        let mut hyp = gaussian_config(10_000, lo, hi, 1);
        hyp.eps_grid = Some((1e-3, 0.5, 32));
        let mut rr = hyp.clone();
        rr.p_mode = PMode::RrReduction;
        let th = run_bound_curve(&hyp).expect("curve");
        let tr = run_bound_curve(&rr).expect("curve");
        let ok = th
            .rows
            .iter()
            .zip(&tr.rows)
            .all(|(h, r)| h.delta_s <= r.delta_s + 1e-15);
        pass &= ok;
        detail.push_str(&format!("{name}: {} ", if ok { "ok" } else { "violated" }));
    }
    assert!(verdict("hypothesis_test_dominates_rr_reduction", pass, &detail));
}

/// Validity against the exact oracle: on 20 random small pure-Laplace
/// populations the closed-form bound must sit above the exactly enumerated
/// hockey-stick divergence (minus 1e-9 slack) at each epsilon checked.
#[test]
fn bound_validity_against_exact_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let eps_checks = [0.1, 0.5, 1.0, 2.0];
    let mut violations = vec![0usize; eps_checks.len()];
    let mut worst: f64 = 0.0;
    let mut cells = 0usize;
    for _ in 0..20 {
        let n = rng.random_range(3..=12usize);
        let epsilons: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..=3.0)).collect();
        let config = ExperimentConfig {
            n,
            law: EpsilonLaw::ExplicitList(epsilons),
            clip: None,
            delta_local: 0.0,
            mechanism: MechanismKind::Laplace,
            p_mode: PMode::HypothesisTest,
            seed: 0,
            eps_grid: None,
            delta_target: None,
        };
        let run = resolve(&config).expect("resolve");
        let (p, q) = exact_mixture(run.input.counts(), run.input.w()).expect("oracle");
        for (k, &eps) in eps_checks.iter().enumerate() {
            let bound = delta_s(&run.input, eps).expect("delta_s").delta;
            let exact = hockey_stick(&p, &q, eps);
            cells += 1;
            if bound < exact - 1e-9 {
                violations[k] += 1;
                worst = worst.max(exact - bound);
            }
        }
    }
    let total: usize = violations.iter().sum();
    let detail = format!(
        "violations {total}/{cells} (per-eps {:?}, worst gap {worst:.3e})",
        eps_checks
            .iter()
            .zip(&violations)
            .map(|(e, v)| format!("{e}:{v}"))
            .collect::<Vec<_>>()
    );
    assert!(verdict("bound_validity_against_exact_oracle", total == 0, &detail));
}

/// The worst-case clone probability between two pure Laplace users with the
/// same budget has the closed form `exp(-eps/2) / 2`; it must match that
/// form to 1e-12, match independent quadrature of the dominance-region mass
/// to 1e-9, and dominate the randomized-response baseline `1/(1+e^eps)`.
#[test]
fn laplace_neighbor_probability_closed_form() {
    let mut pass = true;
    let mut detail = String::new();
    for eps in [0.1, 0.5, 1.0, 2.0, 3.0] {
        let mech = calibrate(MechanismSpec::pure_laplace(eps).unwrap()).unwrap();
        let p = p_neighbor(&mech).expect("p_neighbor");
        let closed = 0.5 * (-eps / 2.0).exp();
        let b = mech.scale();
        let quad = common::adaptive_simpson(
            &|z| mech.density(0.0, z).unwrap(),
            0.5,
            0.5 + 60.0 * b,
            1e-14,
        );
        let ok = (p - closed).abs() <= 1e-12
            && (p - quad).abs() <= 1e-9
            && p >= baseline_p_rr(eps);
        pass &= ok;
        detail.push_str(&format!("eps={eps} err={:.1e} ", (p - closed).abs()));
    }
    assert!(verdict("laplace_neighbor_probability_closed_form", pass, &detail));
}

/// Against a fixed strongest user at budget 3, the worst-case clone
/// probability of a rest user is maximized at an interior budget: the
/// argmax over a fine grid must fall strictly inside [0.5, 1.5] and beat
/// both grid endpoints.
#[test]
fn worst_case_probability_interior_maximum() {
    let mech1 = calibrate(MechanismSpec::pure_laplace(3.0).unwrap()).unwrap();
    let points = 59;
    let (lo, hi) = (0.1, 3.0);
    let mut best = (f64::NEG_INFINITY, 0.0);
    let mut first = 0.0;
    let mut last = 0.0;
    for k in 0..points {
        let eps = lo + (hi - lo) * k as f64 / (points - 1) as f64;
        let mech = calibrate(MechanismSpec::pure_laplace(eps).unwrap()).unwrap();
        let p = worst_case_p(&mech, &mech1).expect("worst_case_p");
        if k == 0 {
            first = p;
        }
        if k == points - 1 {
            last = p;
        }
        if p > best.0 {
            best = (p, eps);
        }
    }
    let pass = (0.5..=1.5).contains(&best.1) && best.0 > first && best.0 > last;
    assert!(verdict(
        "worst_case_probability_interior_maximum",
        pass,
        &format!("argmax eps={:.3} p={:.6}", best.1, best.0)
    ));
}

/// The clone-count convolution must agree with brute-force subset
/// enumeration for small heterogeneous inputs (1e-12) and with the
/// closed-form Binomial pmf for a homogeneous population of 10^4 (1e-12,
/// max absolute error).
#[test]
fn poisson_binomial_equivalences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = 13usize;
    let q: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
    let counts = poisson_binomial(&q).expect("pb");
    let mut brute = vec![0.0f64; m + 1];
    for mask in 0u32..(1 << m) {
        let mut prob = 1.0;
        for (i, &qi) in q.iter().enumerate() {
            prob *= if mask >> i & 1 == 1 { qi } else { 1.0 - qi };
        }
        brute[mask.count_ones() as usize] += prob;
    }
    let err_hetero = brute
        .iter()
        .enumerate()
        .map(|(c, &b)| (counts.weight(c) - b).abs())
        .fold(0.0f64, f64::max);

    let n = 10_000usize;
    let qh = 0.3;
    let homog = poisson_binomial(&vec![qh; n]).expect("pb");
    let err_homog = (0..=n)
        .map(|c| {
            (homog.weight(c) - common::binomial_log_pmf(n as u64, c as u64, qh).exp()).abs()
        })
        .fold(0.0f64, f64::max);

    let pass = err_hetero <= 1e-12 && err_homog <= 1e-12;
    assert!(verdict(
        "poisson_binomial_equivalences",
        pass,
        &format!("hetero err={err_hetero:.2e} homog err={err_homog:.2e}")
    ));
}

/// Structural monotonicity: the bound curve is nonincreasing in epsilon;
/// the inverse `epsilon_s(1e-5)` is nonincreasing in the population size
/// across {10^3, 10^4, 10^5}; and at a fixed central epsilon the Gaussian
/// population is no worse than the pure-Laplace one.
#[test]
fn monotonicity_properties() {
    let mut base = gaussian_config(10_000, 0.05, 1.0, 1);
    let table = run_bound_curve(&base).expect("curve");
    let curve_ok = table
        .rows
        .windows(2)
        .all(|p| p[1].delta_s <= p[0].delta_s + 1e-15);

    let mut eps_values = Vec::new();
    for n in [1_000usize, 10_000, 100_000] {
        let mut c = gaussian_config(n, 0.05, 1.0, 1);
        c.delta_target = Some(1e-5);
        eps_values.push(run_inverse(&c).expect("inverse").result.epsilon);
    }
    let inverse_ok = eps_values.windows(2).all(|p| p[1] <= p[0] + 1e-12);

    base.delta_target = None;
    let gauss = delta_s(&resolve(&base).expect("resolve").input, 0.1)
        .expect("delta_s")
        .delta;
    let mut lap = base.clone();
    lap.mechanism = MechanismKind::Laplace;
    lap.delta_local = 0.0;
    let laplace = delta_s(&resolve(&lap).expect("resolve").input, 0.1)
        .expect("delta_s")
        .delta;
    let mech_ok = gauss <= laplace;

    let pass = curve_ok && inverse_ok && mech_ok;
    assert!(verdict(
        "monotonicity_properties",
        pass,
        &format!(
            "curve {curve_ok}, eps_s(n)={eps_values:?} {inverse_ok}, gauss {gauss:.3e} <= laplace {laplace:.3e} {mech_ok}"
        )
    ));
}

/// Two identical CLI `curve` invocations with a fixed seed must produce
/// byte-identical output files.
#[test]
fn cli_byte_determinism() {
    let bin = env!("CARGO_BIN_EXE_shuffle-amp");
    let dir = std::env::temp_dir().join(format!("shuffle-amp-acc-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.join(format!("curve-{run}.csv"));
        let status = std::process::Command::new(bin)
            .args([
                "curve",
                "--mechanism",
                "laplace",
                "--n",
                "500",
                "--eps-law",
                "uniform:0.2:1.5",
                "--clip",
                "0.2:1.5",
                "--p-mode",
                "hypothesis-test",
                "--seed",
                "42",
                "--eps-grid",
                "0.01:1:16",
                "--format",
                "csv",
                "--out",
            ])
            .arg(&out)
            .stderr(std::process::Stdio::null())
            .status()
            .expect("spawn CLI");
        assert!(status.success(), "curve run {run} failed");
        outputs.push(std::fs::read(&out).unwrap());
    }
    let pass = outputs[0] == outputs[1] && !outputs[0].is_empty();
    std::fs::remove_dir_all(&dir).ok();
    assert!(verdict(
        "cli_byte_determinism",
        pass,
        &format!("{} bytes", outputs[0].len())
    ));
}
