//! `shuffle-amp`: compute central privacy bounds for shuffled,
//! personalized local randomizers.
//!
//! Subcommands:
//! * `curve` — delta_s over an epsilon grid, as CSV or JSON;
//! * `inverse` — smallest epsilon_s meeting a delta target;
//! * `clone-prob` — per-user clone-probability diagnostics;
//! * `oracle-check` — small-n comparison of the bound against exact
//!   brute-force divergence.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric error.

use std::fs;
use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shuffle_amp::accountant::delta_s;
use shuffle_amp::error::Error;
use shuffle_amp::oracle::{exact_mixture, hockey_stick};
use shuffle_amp::pipeline::{
    emit, meta_lines, resolve, run_bound_curve, run_inverse, OutputFormat, RawConfig,
};

#[derive(Parser)]
#[command(name = "shuffle-amp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each overrides the matching config
/// file key.
#[derive(Args, Clone)]
struct CommonArgs {
    /// Flat TOML config file; flags below override its keys.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    /// laplace | gaussian | rr
    #[arg(long)]
    mechanism: Option<String>,
    /// Number of users.
    #[arg(long)]
    n: Option<usize>,
    /// uniform:lo:hi | gauss:mean:std | list:a,b,c
    #[arg(long)]
    eps_law: Option<String>,
    /// Clamp range lo:hi applied after sampling.
    #[arg(long)]
    clip: Option<String>,
    /// Shared local delta (0 for pure mechanisms).
    #[arg(long)]
    delta_local: Option<f64>,
    /// hypothesis-test | rr-reduction
    #[arg(long)]
    p_mode: Option<String>,
    /// RNG seed; fixed seed means bit-identical output.
    #[arg(long)]
    seed: Option<u64>,
    /// Epsilon grid lo:hi:points for `curve`.
    #[arg(long)]
    eps_grid: Option<String>,
    /// Delta target for `inverse`.
    #[arg(long)]
    delta_target: Option<f64>,
    /// csv | json
    #[arg(long, default_value = "csv")]
    format: String,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Central delta_s over an epsilon grid.
    Curve(CommonArgs),
    /// Smallest central epsilon_s meeting the delta target.
    Inverse(CommonArgs),
    /// Per-user clone probability diagnostics.
    CloneProb(CommonArgs),
    /// Small-n validity check against the brute-force oracle.
    OracleCheck(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Curve(a) => cmd_curve(a),
        Command::Inverse(a) => cmd_inverse(a),
        Command::CloneProb(a) => cmd_clone_prob(a),
        Command::OracleCheck(a) => cmd_oracle_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numeric(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

/// Merges config file and flag values into a resolved experiment config.
fn load_config(a: &CommonArgs) -> Result<shuffle_amp::pipeline::ExperimentConfig, Error> {
    let file = match &a.config {
        Some(path) => RawConfig::from_toml(&fs::read_to_string(path)?)?,
        None => RawConfig::default(),
    };
    let flags = RawConfig {
        n: a.n,
        mechanism: a.mechanism.clone(),
        p_mode: a.p_mode.clone(),
        seed: a.seed,
        delta_local: a.delta_local,
        eps_law: a.eps_law.clone(),
        clip: a.clip.clone(),
        eps_grid: a.eps_grid.clone(),
        delta_target: a.delta_target,
    };
    file.overridden_by(flags).resolve()
}

/// Writes `bytes` to `--out` or stdout.
fn write_output(a: &CommonArgs, bytes: &[u8]) -> Result<(), Error> {
    match &a.out {
        Some(path) => fs::write(path, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn cmd_curve(a: &CommonArgs) -> Result<(), Error> {
    let config = load_config(a)?;
    let format: OutputFormat = a.format.parse()?;
    let table = run_bound_curve(&config)?;
    if format == OutputFormat::Json {
        // JSON output stays a plain row array; echo the resolved config
        // where it cannot corrupt the payload.
        for line in meta_lines(&table.meta) {
            eprintln!("# {line}");
        }
    }
    let mut buf = Vec::new();
    emit(&table, format, &mut buf)?;
    write_output(a, &buf)
}

fn cmd_inverse(a: &CommonArgs) -> Result<(), Error> {
    let config = load_config(a)?;
    let out = run_inverse(&config)?;
    let mut buf = Vec::new();
    for line in meta_lines(&out.meta) {
        writeln!(buf, "# {line}")?;
    }
    writeln!(buf, "epsilon_s = {:.12e}", out.result.epsilon)?;
    writeln!(buf, "amplification_ratio = {:.12e}", out.ratio)?;
    writeln!(buf, "amplified = {}", out.result.amplified)?;
    write_output(a, &buf)
}

fn cmd_clone_prob(a: &CommonArgs) -> Result<(), Error> {
    let config = load_config(a)?;
    let run = resolve(&config)?;
    let mut buf = Vec::new();
    for line in meta_lines(&shuffle_amp::pipeline::RunMeta {
        p_mode: config.p_mode.name(),
        mechanism: config.mechanism.name(),
        n: config.n,
        seed: config.seed,
        eps1: run.eps1,
        delta1: run.delta1,
        p1: run.p1,
    }) {
        writeln!(buf, "# {line}")?;
    }
    writeln!(buf, "index,epsilon_i,p0,p1_side,p")?;
    let mut rest = run.rest.iter();
    for (i, eps) in run.epsilons.iter().enumerate() {
        if i == run.worst_index {
            writeln!(
                buf,
                "{},{:.12e},{:.12e},{:.12e},{:.12e}",
                i, eps, run.p1, run.p1, run.p1
            )?;
        } else {
            let r = rest.next().expect("one result per rest user");
            writeln!(
                buf,
                "{},{:.12e},{:.12e},{:.12e},{:.12e}",
                i, eps, r.p0, r.p1_side, r.p
            )?;
        }
    }
    write_output(a, &buf)
}

fn cmd_oracle_check(a: &CommonArgs) -> Result<(), Error> {
    let config = load_config(a)?;
    if config.n > 20 {
        return Err(Error::Config(
            "n: oracle-check enumerates exactly and is limited to n <= 20".to_string(),
        ));
    }
    if config.delta_local != 0.0 {
        return Err(Error::Config(
            "delta-local: oracle-check only supports pure mechanisms".to_string(),
        ));
    }
    let run = resolve(&config)?;
    let (p, q) = exact_mixture(run.input.counts(), run.input.w())?;
    let mut buf = Vec::new();
    writeln!(buf, "epsilon,delta_s,exact_divergence,valid")?;
    for eps in [0.1, 0.5, 1.0, 2.0] {
        let bound = delta_s(&run.input, eps)?.delta;
        let exact = hockey_stick(&p, &q, eps);
        let valid = bound >= exact - 1e-9;
        writeln!(
            buf,
            "{:.2},{:.12e},{:.12e},{}",
            eps,
            bound,
            exact,
            if valid { "ok" } else { "VIOLATION" }
        )?;
    }
    write_output(a, &buf)
}
