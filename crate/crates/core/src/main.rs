use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use samdp::bounds::{exp_inequality_bound, closed_form_bound, select_delta_with};
use samdp::config::{parse_with_overrides, ConfigErrors, Experiment, OutputFormat};
use samdp::engine::{envelope_bound, final_deviations_enveloped, simulate, Runner, Simulation};
use samdp::mdp::{exact_tail_enumeration, rate_curve, Target, MAX_ENUMERATION_HORIZON};
use samdp::output::{fmt_f64, fmt_opt};
use samdp::rng::derive_seed;
use samdp::stats::{binomial_acceptance, clopper_pearson};
use samdp::{selftest, Error};

#[derive(Parser)]
#[command(name = "samdp", version, about = "Stochastic approximation tail experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write results here instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Upper limit on worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Cross-check rate estimates against exact enumeration where possible.
    #[arg(long, global = true)]
    oracle: bool,
    /// Override a config field, e.g. `--set bound.epsilon=0.5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one path.
    Simulate,
    /// Compare the explicit tail bound with Monte Carlo frequencies.
    Bound,
    /// Estimate moderate-deviation rates along a horizon grid.
    Rate,
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn io(context: &str, e: io::Error) -> Failure {
        Failure {
            code: 1,
            message: format!("{context}: {e}"),
        }
    }
}

impl From<ConfigErrors> for Failure {
    fn from(e: ConfigErrors) -> Failure {
        Failure {
            code: 2,
            message: format!("invalid config:\n{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let code = match e {
            Error::InvalidParameter { .. } | Error::NotMdpRegime { .. } => 2,
            Error::Infeasible(_) => 3,
            Error::UnsupportedNoise(_) | Error::MalformedTrajectory(_) => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Command::Selftest = cli.command {
        return run_selftest();
    }
    let exp = load(cli)?;
    let runner = Runner::new(cli.workers).map_err(Failure::from)?;
    match cli.command {
        Command::Simulate => run_simulate(&exp),
        Command::Bound => run_bound(&exp, &runner),
        Command::Rate => run_rate(cli, &exp, &runner),
        Command::Selftest => unreachable!(),
    }
}

fn load(cli: &Cli) -> Result<Experiment, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure {
        code: 2,
        message: "--config is required".into(),
    })?;
    let text = fs::read_to_string(path).map_err(|e| Failure::io(&path.display().to_string(), e))?;
    let mut overrides = cli.overrides.clone();
    if let Some(out) = &cli.output {
        overrides.push(format!("output.path={}", json!(out.display().to_string())));
    }
    if let Some(format) = cli.format {
        let name = match format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        overrides.push(format!("output.format={name}"));
    }
    Ok(parse_with_overrides(&text, &overrides)?.validate()?)
}

/// Writes the finished document to the configured path or standard output.
fn emit(exp: &Experiment, body: &[u8]) -> Result<(), Failure> {
    match &exp.output_path {
        Some(path) => fs::write(path, body).map_err(|e| Failure::io(path, e)),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(body)
                .and_then(|_| out.flush())
                .map_err(|e| Failure::io("stdout", e))
        }
    }
}

fn json_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("values serialize");
    text.push('\n');
    text.into_bytes()
}

fn run_selftest() -> Result<(), Failure> {
    let report = selftest::run();
    println!("{report}");
    match report.first_failure() {
        None => Ok(()),
        Some(c) => Err(Failure {
            code: 1,
            message: format!("invariant {} failed: {}", c.name, c.detail),
        }),
    }
}

fn run_simulate(exp: &Experiment) -> Result<(), Failure> {
    let settings = exp.require_simulate()?;
    let spec = &exp.spec;
    let env = envelope_bound(spec, settings.n);
    let result = simulate(spec, settings.n, exp.seed, settings.record);
    let summary = format!(
        "final_deviation={} envelope_sup={}",
        fmt_f64(result.final_deviation()),
        fmt_f64(env.sup)
    );
    let Simulation::Path(traj) = result else {
        println!("{summary}");
        return Ok(());
    };
    let body = match exp.format {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            traj.write_csv(&mut buf).map_err(|e| Failure::io("csv", e))?;
            buf
        }
        OutputFormat::Json => json_bytes(&json!({
            "n": settings.n,
            "seed": exp.seed,
            "x": traj.xs,
            "u": traj.us,
            "final_deviation": traj.final_deviation(),
            "envelope_sup": env.sup,
        })),
    };
    emit(exp, &body)?;
    // keep standard output clean when it carries the trajectory
    if exp.output_path.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(())
}

const BOUND_CSV_HEADER: &str =
    "n,epsilon,delta,bound,empirical,replicas,hits,ci_low,ci_high,block_term,sum_term,closed_form,feasible_from,envelope_violations";

fn run_bound(exp: &Experiment, runner: &Runner) -> Result<(), Failure> {
    let s = exp.require_bound()?;
    let spec = &exp.spec;
    let choice = select_delta_with(spec, s.epsilon, s.n_probe, s.delta)?;
    let max_n = *s.n_grid.last().expect("validated non-empty");
    if choice.feasible_from > max_n {
        return Err(Failure::from(Error::Infeasible(format!(
            "margin condition first holds at n = {}, beyond the grid maximum {max_n}",
            choice.feasible_from
        ))));
    }

    let mut csv = format!("{BOUND_CSV_HEADER}\n");
    let mut rows = Vec::new();
    for &n in &s.n_grid {
        let bound = if n >= choice.feasible_from {
            Some(exp_inequality_bound(spec, s.epsilon, n, &choice)?)
        } else {
            None
        };
        let closed = s.c_const.map(|c| closed_form_bound(c, s.epsilon, choice.delta, n as f64));
        let (devs, violations) =
            final_deviations_enveloped(spec, n, derive_seed(exp.seed, n), s.replicas, runner);
        let hits = devs.iter().filter(|d| d.abs() >= s.epsilon).count() as u64;
        let empirical = hits as f64 / s.replicas as f64;
        let (ci_low, ci_high) = clopper_pearson(hits, s.replicas, 0.95);
        csv.push_str(&format!(
            "{n},{},{},{},{},{},{hits},{},{},{},{},{},{},{violations}\n",
            fmt_f64(s.epsilon),
            fmt_f64(choice.delta),
            fmt_opt(bound.map(|b| b.value)),
            fmt_f64(empirical),
            s.replicas,
            fmt_f64(ci_low),
            fmt_f64(ci_high),
            fmt_opt(bound.map(|b| b.block_term)),
            fmt_opt(bound.map(|b| b.sum_term)),
            fmt_opt(closed),
            choice.feasible_from,
        ));
        rows.push(json!({
            "n": n,
            "epsilon": s.epsilon,
            "delta": choice.delta,
            "bound": bound.map(|b| b.value),
            "empirical": empirical,
            "replicas": s.replicas,
            "hits": hits,
            "ci_low": ci_low,
            "ci_high": ci_high,
            "block_term": bound.map(|b| b.block_term),
            "sum_term": bound.map(|b| b.sum_term),
            "closed_form": closed,
            "feasible_from": choice.feasible_from,
            "envelope_violations": violations,
        }));
    }
    let body = match exp.format {
        OutputFormat::Csv => csv.into_bytes(),
        OutputFormat::Json => json_bytes(&json!({
            "delta": choice.delta,
            "delta_max": choice.delta_max,
            "envelope_sup": choice.f_sup,
            "feasible_from": choice.feasible_from,
            "rows": rows,
        })),
    };
    emit(exp, &body)
}

fn run_rate(cli: &Cli, exp: &Experiment, runner: &Runner) -> Result<(), Failure> {
    let s = exp.require_rate()?;
    let curve = rate_curve(s.target, &exp.spec, &s.schedule, s.replicas, exp.seed, runner)?;
    let body = match exp.format {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            curve.write_csv(&mut buf).map_err(|e| Failure::io("csv", e))?;
            buf
        }
        OutputFormat::Json => json_bytes(&curve.to_json()),
    };
    emit(exp, &body)?;
    if cli.oracle {
        oracle_check(exp, &curve.points, s.target)?;
    }
    Ok(())
}

/// Compares each enumerable grid point with its exact tail probability.
fn oracle_check(exp: &Experiment, points: &[samdp::mdp::TailEstimate], target: Target) -> Result<(), Failure> {
    if target != Target::WeightedSum || !exp.spec.noise.is_rademacher() {
        eprintln!("oracle: needs target weighted_sum with Rademacher noise; skipped");
        return Ok(());
    }
    let mut failed = Vec::new();
    for p in points.iter().filter(|p| p.n <= MAX_ENUMERATION_HORIZON) {
        let exact = exact_tail_enumeration(&exp.spec, p.n, p.threshold)?.to_f64();
        let (lo, hi) = binomial_acceptance(exact, p.replicas, 0.999);
        let ok = (lo..=hi).contains(&p.hits);
        eprintln!(
            "oracle: n={} exact={} hits={} band=[{lo},{hi}] {}",
            p.n,
            fmt_f64(exact),
            p.hits,
            if ok { "ok" } else { "OUTSIDE" }
        );
        if !ok {
            failed.push(p.n);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            message: format!("estimates outside the 99.9% band at n = {failed:?}"),
        })
    }
}
