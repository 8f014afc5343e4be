//! End-to-end experiment pipeline and output emission.
//!
//! This layer ties the modules together the way the CLI consumes them:
//! sample personalized budgets from a population law, pick the worst-case
//! user, calibrate every mechanism, compute the clone probabilities in the
//! requested mode, convolve the clone count, and evaluate the central bound
//! over a grid (or invert it at a delta target). All randomness flows
//! through a ChaCha8 generator seeded with one `u64`, so outputs are
//! bit-identical across runs and platforms.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{
    delta_s, epsilon_s, select_worst_user, AmplificationInput, EpsilonResult,
};
use crate::clone_count::{poisson_binomial, poisson_binomial_truncated};
use crate::clone_probability::{baseline_p_rr, p_neighbor, worst_case_test, HypTestResult};
use crate::error::{Error, Result};
use crate::mechanisms::{calibrate, CalibratedMechanism, MechanismKind, MechanismSpec};

/// Above this population size the clone-count convolution switches to the
/// tail-truncated variant (floor 1e-18, dropped mass recorded).
const EXACT_CONVOLUTION_LIMIT: usize = 20_000;

/// How each user's clone probability is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PMode {
    /// Likelihood-ratio hypothesis testing against the worst-case user's
    /// two densities (the tight analysis).
    HypothesisTest,
    /// Reduction of every mechanism to binary randomized response (the
    /// baseline the tight analysis is compared against).
    RrReduction,
}

impl PMode {
    pub fn name(self) -> &'static str {
        match self {
            PMode::HypothesisTest => "hypothesis-test",
            PMode::RrReduction => "rr-reduction",
        }
    }
}

impl std::str::FromStr for PMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hypothesis-test" | "hypothesis_test" => Ok(PMode::HypothesisTest),
            "rr-reduction" | "rr_reduction" => Ok(PMode::RrReduction),
            other => Err(Error::config(format!("unknown p-mode `{other}`"))),
        }
    }
}

/// Population law for the personalized budgets `epsilon_i`.
#[derive(Debug, Clone, PartialEq)]
pub enum EpsilonLaw {
    Uniform { lo: f64, hi: f64 },
    GaussianClipped { mean: f64, std: f64 },
    ExplicitList(Vec<f64>),
}

impl EpsilonLaw {
    /// Parses the CLI/config syntax: `uniform:lo:hi`, `gauss:mean:std`, or
    /// `list:a,b,c`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("cannot parse eps-law `{s}`"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "uniform" => {
                let (lo, hi) = rest.split_once(':').ok_or_else(bad)?;
                let (lo, hi): (f64, f64) =
                    (lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?);
                if !(lo > 0.0 && lo < hi) {
                    return Err(Error::config(format!(
                        "uniform law needs 0 < lo < hi, got {lo}:{hi}"
                    )));
                }
                Ok(EpsilonLaw::Uniform { lo, hi })
            }
            "gauss" => {
                let (mean, std) = rest.split_once(':').ok_or_else(bad)?;
                let (mean, std): (f64, f64) = (
                    mean.parse().map_err(|_| bad())?,
                    std.parse().map_err(|_| bad())?,
                );
                if !(std > 0.0) {
                    return Err(Error::config(format!("gauss law needs std > 0, got {std}")));
                }
                Ok(EpsilonLaw::GaussianClipped { mean, std })
            }
            "list" => {
                let vals: Result<Vec<f64>> = rest
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
                    .collect();
                let vals = vals?;
                if vals.is_empty() || vals.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                    return Err(Error::config(
                        "explicit list entries must all be positive".to_string(),
                    ));
                }
                Ok(EpsilonLaw::ExplicitList(vals))
            }
            _ => Err(bad()),
        }
    }
}

/// A fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub law: EpsilonLaw,
    /// Clamp range applied after sampling; required for the Gaussian law.
    pub clip: Option<(f64, f64)>,
    pub delta_local: f64,
    pub mechanism: MechanismKind,
    pub p_mode: PMode,
    pub seed: u64,
    /// `(lo, hi, points)` logarithmic grid for `curve`.
    pub eps_grid: Option<(f64, f64, usize)>,
    /// Target for `inverse`.
    pub delta_target: Option<f64>,
}

impl ExperimentConfig {
    /// Cross-field validation, with messages naming the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n: must be at least 1".to_string()));
        }
        if !(self.delta_local.is_finite() && (0.0..1.0).contains(&self.delta_local)) {
            return Err(Error::config(format!(
                "delta-local: {} outside [0, 1)",
                self.delta_local
            )));
        }
        match self.mechanism {
            MechanismKind::Gaussian if self.delta_local == 0.0 => {
                return Err(Error::config(
                    "delta-local: gaussian mechanism requires a positive value".to_string(),
                ))
            }
            MechanismKind::Laplace | MechanismKind::RandomizedResponse
                if self.delta_local != 0.0 =>
            {
                return Err(Error::config(format!(
                    "delta-local: must be 0 for the pure {} mechanism",
                    self.mechanism.name()
                )))
            }
            _ => {}
        }
        if let Some((lo, hi)) = self.clip {
            if !(lo > 0.0 && lo <= hi) {
                return Err(Error::config(format!("clip: needs 0 < lo <= hi, got {lo}:{hi}")));
            }
        }
        if matches!(self.law, EpsilonLaw::GaussianClipped { .. }) && self.clip.is_none() {
            return Err(Error::config(
                "clip: required for the gaussian epsilon law".to_string(),
            ));
        }
        if let EpsilonLaw::ExplicitList(ref v) = self.law {
            if v.len() != self.n {
                return Err(Error::config(format!(
                    "eps-law: explicit list has {} entries but n = {}",
                    v.len(),
                    self.n
                )));
            }
        }
        if let Some((lo, hi, points)) = self.eps_grid {
            if !(lo > 0.0 && lo < hi && points >= 1) {
                return Err(Error::config(format!(
                    "eps-grid: needs 0 < lo < hi and points >= 1, got {lo}:{hi}:{points}"
                )));
            }
        }
        if let Some(d) = self.delta_target {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::config(format!("delta-target: {d} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Draws the `n` personalized budgets: law sample, then clamp into the clip
/// range (clamp-after-sample, preserving `n`). Deterministic for a fixed
/// seed: ChaCha8 seeded via `seed_from_u64`, one draw per user in index
/// order.
pub fn sample_epsilons(config: &ExperimentConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let clamp = |v: f64| match config.clip {
        Some((lo, hi)) => v.clamp(lo, hi),
        None => v,
    };
    Ok(match &config.law {
        EpsilonLaw::Uniform { lo, hi } => (0..config.n)
            .map(|_| clamp(rng.random_range(*lo..=*hi)))
            .collect(),
        EpsilonLaw::GaussianClipped { mean, std } => {
            let normal = Normal::new(*mean, *std)
                .map_err(|e| Error::config(format!("eps-law: {e}")))?;
            (0..config.n).map(|_| clamp(normal.sample(&mut rng))).collect()
        }
        EpsilonLaw::ExplicitList(v) => v.clone(),
    })
}

/// Everything resolved by the pipeline before bound evaluation; echoed into
/// output metadata so results are auditable.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub epsilons: Vec<f64>,
    pub worst_index: usize,
    pub eps1: f64,
    pub delta1: f64,
    pub p1: f64,
    pub rest: Vec<HypTestResult>,
    pub input: AmplificationInput,
}

fn build_spec(config: &ExperimentConfig, eps: f64) -> Result<MechanismSpec> {
    MechanismSpec::new(config.mechanism, eps, config.delta_local, 1.0)
}

fn calibrated(config: &ExperimentConfig, eps: f64) -> Result<CalibratedMechanism> {
    calibrate(build_spec(config, eps)?)
}

/// The probability that one rest user's report confounds both of the
/// worst-case values in the same shuffle round, i.e. the success rate of
/// that user's clone trial: the two one-sided test masses are independent
/// exclusion events, so the usable per-round rate is their product.
fn clone_trial_probability(r: &HypTestResult) -> f64 {
    (r.p0 * r.p1_side).clamp(0.0, 1.0)
}

/// Runs the front half of the pipeline: sampling, worst-user selection,
/// calibration, clone probabilities in the requested mode, clone-count
/// convolution.
pub fn resolve(config: &ExperimentConfig) -> Result<ResolvedRun> {
    config.validate()?;
    let epsilons = sample_epsilons(config)?;
    let specs: Vec<MechanismSpec> = epsilons
        .iter()
        .map(|&e| build_spec(config, e))
        .collect::<Result<_>>()?;
    let (worst_index, eps1, delta1) = select_worst_user(&specs)?;
    let mech1 = calibrated(config, eps1)?;

    let p1 = match config.p_mode {
        PMode::HypothesisTest => p_neighbor(&mech1)?,
        PMode::RrReduction => baseline_p_rr(eps1),
    };

    let rest: Vec<HypTestResult> = epsilons
        .par_iter()
        .enumerate()
        .filter(|&(i, _)| i != worst_index)
        .map(|(_, &eps)| -> Result<HypTestResult> {
            match config.p_mode {
                PMode::HypothesisTest => {
                    if config.mechanism == MechanismKind::RandomizedResponse {
                        // No continuous densities to test; fall back to the
                        // reduction value on both sides.
                        let p = baseline_p_rr(eps);
                        Ok(HypTestResult { p0: p, p1_side: p, p })
                    } else {
                        worst_case_test(&calibrated(config, eps)?, &mech1)
                    }
                }
                PMode::RrReduction => {
                    let p = baseline_p_rr(eps);
                    Ok(HypTestResult { p0: p, p1_side: p, p })
                }
            }
        })
        .collect::<Result<_>>()?;

    let q: Vec<f64> = rest.iter().map(clone_trial_probability).collect();
    let counts = if config.n <= EXACT_CONVOLUTION_LIMIT {
        poisson_binomial(&q)?
    } else {
        poisson_binomial_truncated(&q, 1e-18)?
    };
    let input = AmplificationInput::new(config.n, p1, delta1, counts)?;
    Ok(ResolvedRun {
        epsilons,
        worst_index,
        eps1,
        delta1,
        p1,
        rest,
        input,
    })
}

/// One row of a bound curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epsilon_s: f64,
    pub delta_s: f64,
}

/// A bound curve plus the resolved metadata it was computed under.
#[derive(Debug, Clone)]
pub struct CurveTable {
    pub rows: Vec<CurveRow>,
    pub meta: RunMeta,
}

/// Resolved-config echo attached to every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub p_mode: &'static str,
    pub mechanism: &'static str,
    pub n: usize,
    pub seed: u64,
    pub eps1: f64,
    pub delta1: f64,
    pub p1: f64,
}

impl RunMeta {
    fn from_run(config: &ExperimentConfig, run: &ResolvedRun) -> Self {
        RunMeta {
            p_mode: config.p_mode.name(),
            mechanism: config.mechanism.name(),
            n: config.n,
            seed: config.seed,
            eps1: run.eps1,
            delta1: run.delta1,
            p1: run.p1,
        }
    }
}

/// Evaluates the central bound over the configured (or default) log grid,
/// one row per grid point, ordered by epsilon. Grid points are evaluated
/// concurrently.
pub fn run_bound_curve(config: &ExperimentConfig) -> Result<CurveTable> {
    let run = resolve(config)?;
    let (lo, hi, points) = config.eps_grid.unwrap_or((1e-3, run.eps1, 64));
    let grid: Vec<f64> = if points == 1 {
        vec![lo]
    } else {
        let step = (hi / lo).ln() / (points - 1) as f64;
        (0..points).map(|k| lo * (k as f64 * step).exp()).collect()
    };
    let rows: Vec<CurveRow> = grid
        .par_iter()
        .map(|&eps| -> Result<CurveRow> {
            Ok(CurveRow {
                epsilon_s: eps,
                delta_s: delta_s(&run.input, eps)?.delta,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CurveTable {
        rows,
        meta: RunMeta::from_run(config, &run),
    })
}

/// Outcome of the fixed-delta inverse run.
#[derive(Debug, Clone)]
pub struct InverseOutcome {
    pub result: EpsilonResult,
    /// `epsilon_s / eps1`: below 1 means shuffling certifiably amplified.
    pub ratio: f64,
    pub meta: RunMeta,
}

/// Inverts the bound at the configured delta target.
pub fn run_inverse(config: &ExperimentConfig) -> Result<InverseOutcome> {
    let target = config
        .delta_target
        .ok_or_else(|| Error::config("delta-target: required for inverse".to_string()))?;
    let run = resolve(config)?;
    let result = epsilon_s(&run.input, target, run.eps1)?;
    Ok(InverseOutcome {
        result,
        ratio: result.epsilon / run.eps1,
        meta: RunMeta::from_run(config, &run),
    })
}

/// Output format for [`emit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::config(format!("unknown format `{other}`"))),
        }
    }
}

/// Serializes a curve table.
///
/// CSV: `#`-prefixed resolved-config echo, then the exact header
/// `epsilon_s,delta_s,p_mode,mechanism,n,seed` and one line-feed-terminated
/// row per grid point, floats in scientific notation. JSON: a plain array
/// of row objects with the same keys (no comment support in JSON, so the
/// config echo is the caller's job — the CLI prints it to stderr).
pub fn emit<W: Write>(table: &CurveTable, format: OutputFormat, out: &mut W) -> Result<()> {
    if table.rows.is_empty() {
        return Err(Error::config("refusing to emit an empty table".to_string()));
    }
    let m = &table.meta;
    match format {
        OutputFormat::Csv => {
            for line in meta_lines(m) {
                writeln!(out, "# {line}")?;
            }
            writeln!(out, "epsilon_s,delta_s,p_mode,mechanism,n,seed")?;
            for r in &table.rows {
                writeln!(
                    out,
                    "{:.12e},{:.12e},{},{},{},{}",
                    r.epsilon_s, r.delta_s, m.p_mode, m.mechanism, m.n, m.seed
                )?;
            }
        }
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct JsonRow<'a> {
                epsilon_s: f64,
                delta_s: f64,
                p_mode: &'a str,
                mechanism: &'a str,
                n: usize,
                seed: u64,
            }
            let rows: Vec<JsonRow> = table
                .rows
                .iter()
                .map(|r| JsonRow {
                    epsilon_s: r.epsilon_s,
                    delta_s: r.delta_s,
                    p_mode: m.p_mode,
                    mechanism: m.mechanism,
                    n: m.n,
                    seed: m.seed,
                })
                .collect();
            serde_json::to_writer_pretty(&mut *out, &rows)
                .map_err(|e| Error::Numeric(format!("json serialization failed: {e}")))?;
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Human-readable resolved-config echo, one `key = value` per line.
pub fn meta_lines(m: &RunMeta) -> Vec<String> {
    vec![
        format!("p_mode = {}", m.p_mode),
        format!("mechanism = {}", m.mechanism),
        format!("n = {}", m.n),
        format!("seed = {}", m.seed),
        format!("eps1 = {:.12e}", m.eps1),
        format!("delta1 = {:.12e}", m.delta1),
        format!("p1 = {:.12e}", m.p1),
    ]
}

/// Flat key-value config file schema (TOML syntax); every key is optional
/// so CLI flags can fill or override any of them.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub n: Option<usize>,
    pub mechanism: Option<String>,
    pub p_mode: Option<String>,
    pub seed: Option<u64>,
    pub delta_local: Option<f64>,
    pub eps_law: Option<String>,
    pub clip: Option<String>,
    pub eps_grid: Option<String>,
    pub delta_target: Option<f64>,
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("config file: {e}")))
    }

    /// Overlays `other` (CLI flags) on top of `self` (file values).
    pub fn overridden_by(mut self, other: RawConfig) -> RawConfig {
        macro_rules! take {
            ($f:ident) => {
                if other.$f.is_some() {
                    self.$f = other.$f;
                }
            };
        }
        take!(n);
        take!(mechanism);
        take!(p_mode);
        take!(seed);
        take!(delta_local);
        take!(eps_law);
        take!(clip);
        take!(eps_grid);
        take!(delta_target);
        self
    }

    /// Resolves the merged key-value view into a validated config.
    pub fn resolve(self) -> Result<ExperimentConfig> {
        let n = self
            .n
            .ok_or_else(|| Error::config("n: missing".to_string()))?;
        let law = EpsilonLaw::parse(
            self.eps_law
                .as_deref()
                .ok_or_else(|| Error::config("eps-law: missing".to_string()))?,
        )?;
        let mechanism: MechanismKind = self
            .mechanism
            .as_deref()
            .ok_or_else(|| Error::config("mechanism: missing".to_string()))?
            .parse()?;
        let p_mode: PMode = self
            .p_mode
            .as_deref()
            .unwrap_or("hypothesis-test")
            .parse()?;
        let clip = match self.clip.as_deref() {
            None => None,
            Some(s) => {
                let bad = || Error::config(format!("clip: cannot parse `{s}`"));
                let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
                Some((
                    lo.parse().map_err(|_| bad())?,
                    hi.parse().map_err(|_| bad())?,
                ))
            }
        };
        let eps_grid = match self.eps_grid.as_deref() {
            None => None,
            Some(s) => {
                let bad = || Error::config(format!("eps-grid: cannot parse `{s}`, want lo:hi:points"));
                let mut it = s.split(':');
                let lo: f64 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                let hi: f64 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                let points: usize = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                if it.next().is_some() {
                    return Err(bad());
                }
                Some((lo, hi, points))
            }
        };
        let config = ExperimentConfig {
            n,
            law,
            clip,
            delta_local: self.delta_local.unwrap_or(0.0),
            mechanism,
            p_mode,
            seed: self.seed.unwrap_or(0),
            eps_grid,
            delta_target: self.delta_target,
        };
        config.validate()?;
        Ok(config)
    }
}
