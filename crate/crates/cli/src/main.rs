//! Batch front door: norm enclosures, exponent estimates, family sweeps,
//! named reproductions, and series-vs-dense oracle checks, emitted as CSV
//! or JSON.
//!
//! Exit codes: 0 success/pass, 1 usage error, 2 inconclusive estimate,
//! 3 invariant or reproduction failure.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use resolvent_lab::powerset::{
    enclosure_schedule, estimate_with_enclosures, EstimateStatus, ExponentEstimate,
    ExponentSample, FamilyTemplate, FitModel, PowersetOptions, RadiusSchedule,
};
use resolvent_lab::resolvent::{dense_truncated_resolvent, series_coefficients, EvalOptions};
use resolvent_lab::scenario::{run_scenario, ScenarioId, ScenarioOverrides, ALL_SCENARIOS};
use resolvent_lab::shift::{PNorm, ShiftOperator};
use resolvent_lab::vector::VectorSpec;

const CSV_HEADER: &str = "scenario,vector,r,ln_num,ln_den_lo,ln_den_hi,ratio_lo,ratio_hi";

#[derive(Parser)]
#[command(
    name = "resolvent-lab",
    about = "Resolvent norm enclosures and asymptotic exponent estimation for quasinilpotent weighted shifts",
    version
)]
struct Cli {
    /// JSON config file; command-line flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (default stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format: csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-radius operator-norm enclosure table.
    Bounds(CommonArgs),
    /// Exponent estimate for one (shift, vector, p).
    Estimate(EstimateArgs),
    /// Family sweep: one estimate per family parameter.
    Sweep(SweepArgs),
    /// Run a named reproduction scenario.
    Reproduce(ReproduceArgs),
    /// Compare series-route coefficients against the dense truncated solve.
    OracleCheck(OracleArgs),
    /// List available scenarios.
    Scenarios,
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Shift spec, e.g. backward:harmonic:c=1
    #[arg(long)]
    shift: Option<String>,
    /// Norm exponent p >= 1.
    #[arg(long)]
    p: Option<f64>,
    /// Radius schedule start,ratio,count (e.g. 0.1,0.5,8).
    #[arg(long)]
    schedule: Option<String>,
    /// Relative truncation tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Clone)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Vector spec, e.g. xr:r=0.5,m=3
    #[arg(long)]
    vector: Option<String>,
    /// Fit model: r_log_r, inverse_log, dual.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args, Clone)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Family template: xr:m=3 or stack-xr:m=5
    #[arg(long)]
    family: Option<String>,
    /// Comma-separated family parameters, e.g. 0.25,0.5,1
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args, Clone)]
struct ReproduceArgs {
    /// Scenario id, e.g. BACKWARD_FULL_INTERVAL
    scenario: String,
    #[command(flatten)]
    common: CommonArgs,
    /// Scale every row tolerance.
    #[arg(long)]
    tolerance_scale: Option<f64>,
    /// Family parameter m, where the scenario uses one.
    #[arg(long)]
    m: Option<u32>,
    /// Harmonic weight offset c.
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Args, Clone)]
struct OracleArgs {
    /// Number of random cases.
    #[arg(long, default_value_t = 20)]
    cases: u32,
    /// RNG seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Relative agreement threshold.
    #[arg(long, default_value_t = 1e-8)]
    threshold: f64,
}

/// JSON config mirror of the common flags; flags override file values.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    shift: Option<String>,
    vector: Option<String>,
    family: Option<String>,
    r: Option<String>,
    p: Option<f64>,
    schedule: Option<String>,
    model: Option<String>,
    tol: Option<f64>,
    format: Option<String>,
    out: Option<String>,
}

fn load_config(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn parse_schedule(s: &str) -> Result<RadiusSchedule> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        bail!("schedule must be start,ratio,count; got {s:?}");
    }
    Ok(RadiusSchedule::new(parts[0].parse()?, parts[1].parse()?, parts[2].parse()?)?)
}

fn thread_count() -> usize {
    match std::env::var("RESOLVENT_LAB_THREADS") {
        Ok(v) => v.parse::<usize>().unwrap_or(1).max(1),
        Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    }
}

struct Output {
    out: Option<PathBuf>,
    json: bool,
}

impl Output {
    fn write(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
            None => {
                std::io::stdout().write_all(text.as_bytes())?;
                Ok(())
            }
        }
    }
}

fn csv_sample_row(out: &mut String, scenario: &str, vector: &str, s: &ExponentSample) {
    out.push_str(&format!(
        "{scenario},{vector},{},{},{},{},{},{}\n",
        s.r, s.ln_num, s.ln_den_lo, s.ln_den_hi, s.ratio_lo, s.ratio_hi
    ));
}

fn estimate_summary(est: &ExponentEstimate) -> String {
    format!(
        "extrapolated = {:.6}  running_sup = {:.6}  residual = {:.2e}  status = {:?}  (dropped {})",
        est.extrapolated, est.running_sup, est.residual, est.status, est.dropped
    )
}

fn run() -> Result<u8> {
    let cli = Cli::parse();
    let file = load_config(&cli.config)?;
    let json = cli
        .format
        .clone()
        .or(file.format.clone())
        .map(|f| f == "json")
        .unwrap_or(false);
    let out = Output {
        out: cli.out.clone().or_else(|| file.out.clone().map(PathBuf::from)),
        json,
    };
    let threads = thread_count();

    let resolve_common = |c: &CommonArgs| -> Result<(ShiftOperator, PNorm, RadiusSchedule, PowersetOptions)> {
        let shift_spec = c
            .shift
            .clone()
            .or_else(|| file.shift.clone())
            .ok_or_else(|| anyhow!("--shift is required (or set \"shift\" in the config)"))?;
        let shift = ShiftOperator::parse(&shift_spec)?;
        let p = PNorm::new(c.p.or(file.p).unwrap_or(2.0))?;
        let schedule = match c.schedule.clone().or_else(|| file.schedule.clone()) {
            Some(s) => parse_schedule(&s)?,
            None => RadiusSchedule::default(),
        };
        let mut opts = PowersetOptions { threads, ..Default::default() };
        if let Some(tol) = c.tol.or(file.tol) {
            opts.eval.rel_tol = tol;
        }
        Ok((shift, p, schedule, opts))
    };

    match &cli.command {
        Command::Scenarios => {
            let mut text = String::new();
            for id in ALL_SCENARIOS {
                text.push_str(&format!("{:<26} {}\n", id.name(), id.description()));
            }
            out.write(&text)?;
            Ok(0)
        }
        Command::Bounds(c) => {
            let (shift, p, schedule, opts) = resolve_common(c)?;
            let encs = enclosure_schedule(&shift, p, &schedule, &opts)?;
            if out.json {
                let rows: Vec<serde_json::Value> = encs
                    .iter()
                    .map(|(r, e)| {
                        serde_json::json!({
                            "r": r,
                            "ln_lower": e.lower.ln_value(),
                            "ln_upper": e.upper.ln_value(),
                            "probe": e.probe,
                        })
                    })
                    .collect();
                out.write(&serde_json::to_string_pretty(&rows)?)?;
            } else {
                let mut text = format!("{CSV_HEADER}\n");
                for (r, e) in &encs {
                    text.push_str(&format!(
                        "bounds,{},{r},,{},{},,\n",
                        e.probe,
                        e.lower.ln_value(),
                        e.upper.ln_value()
                    ));
                }
                out.write(&text)?;
            }
            Ok(0)
        }
        Command::Estimate(a) => {
            let (shift, p, schedule, opts) = resolve_common(&a.common)?;
            let vector_spec = a
                .vector
                .clone()
                .or_else(|| file.vector.clone())
                .ok_or_else(|| anyhow!("--vector is required"))?;
            let x: VectorSpec = vector_spec.parse()?;
            let model: FitModel = match a.model.clone().or_else(|| file.model.clone()) {
                Some(m) => m.parse()?,
                None => FitModel::default(),
            };
            let encs = enclosure_schedule(&shift, p, &schedule, &opts)?;
            let est = estimate_with_enclosures(&shift, &x, p, &encs, model, &opts)?;
            if out.json {
                out.write(&serde_json::to_string_pretty(&est)?)?;
            } else {
                let mut text = format!("{CSV_HEADER}\n");
                for s in &est.samples {
                    csv_sample_row(&mut text, "estimate", &vector_spec, s);
                }
                out.write(&text)?;
                eprintln!("{}", estimate_summary(&est));
            }
            Ok(if est.status == EstimateStatus::Converged { 0 } else { 2 })
        }
        Command::Sweep(a) => {
            let (shift, p, schedule, opts) = resolve_common(&a.common)?;
            let family: FamilyTemplate = a
                .family
                .clone()
                .or_else(|| file.family.clone())
                .ok_or_else(|| anyhow!("--family is required"))?
                .parse()?;
            let r_values: Vec<f64> = a
                .r
                .clone()
                .or_else(|| file.r.clone())
                .ok_or_else(|| anyhow!("--r is required"))?
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(Into::into))
                .collect::<Result<_>>()?;
            let model: FitModel = match a.model.clone().or_else(|| file.model.clone()) {
                Some(m) => m.parse()?,
                None => FitModel::default(),
            };
            let table =
                resolvent_lab::powerset::sweep_family(&shift, family, &r_values, p, &schedule, model, &opts)?;
            if out.json {
                out.write(&serde_json::to_string_pretty(&table)?)?;
            } else {
                let mut text = format!("{CSV_HEADER}\n");
                for row in &table.rows {
                    for s in &row.estimate.samples {
                        csv_sample_row(&mut text, "sweep", &row.vector, s);
                    }
                }
                out.write(&text)?;
                for row in &table.rows {
                    eprintln!("r = {:<6} {}", row.r, estimate_summary(&row.estimate));
                }
                if !table.monotone_ok {
                    eprintln!("warning: extrapolated values not monotone in r");
                }
            }
            let ok = table.rows.iter().all(|r| r.estimate.status == EstimateStatus::Converged);
            Ok(if ok { 0 } else { 2 })
        }
        Command::Reproduce(a) => {
            let id: ScenarioId = a
                .scenario
                .parse()
                .map_err(|e| anyhow!("{e}; run `resolvent-lab scenarios` for the list"))?;
            let overrides = ScenarioOverrides {
                p: a.common.p.or(file.p),
                schedule: match a.common.schedule.clone().or_else(|| file.schedule.clone()) {
                    Some(s) => Some(parse_schedule(&s)?),
                    None => None,
                },
                tolerance_scale: a.tolerance_scale,
                harmonic_c: a.c,
                m: a.m,
                threads: Some(threads),
            };
            let report = run_scenario(id, &overrides)?;
            if out.json {
                out.write(&serde_json::to_string_pretty(&report)?)?;
            } else {
                let mut text = format!("{CSV_HEADER}\n");
                for (vector, s) in &report.sample_rows {
                    csv_sample_row(&mut text, &report.id, vector, s);
                }
                out.write(&text)?;
                eprintln!("scenario {}  shift {}  ({} ms)", report.id, report.shift, report.runtime_ms);
                for row in &report.rows {
                    eprintln!(
                        "  {:<28} p={:<4} target {:<6} estimated {:<9.5} tol {:<8} {}",
                        row.vector,
                        row.p,
                        row.target,
                        row.estimated,
                        row.tolerance,
                        if row.pass { "PASS" } else { "FAIL" }
                    );
                }
                for d in &report.diagnostics {
                    eprintln!("  note: {d}");
                }
            }
            if report.all_pass {
                Ok(0)
            } else if report.rows.iter().any(|r| !r.converged) {
                Ok(2)
            } else {
                Ok(3)
            }
        }
        Command::OracleCheck(a) => {
            let opts = EvalOptions::default();
            let mut failures = 0u32;
            let mut text = String::from("case,shift,vector,z,max_rel_err,pass\n");
            let mut state = a.seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let mut next = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64
            };
            for case in 0..a.cases {
                let kind = ["forward", "backward", "bilateral"][(next() * 3.0) as usize % 3];
                let c = 1.0 + (next() * 2.0).round() / 2.0;
                let shift = ShiftOperator::parse(&format!("{kind}:harmonic:c={c}"))?;
                let z = 0.3 + 1.7 * next();
                let x = match kind {
                    "forward" => {
                        let n = (next() * 4.0) as u64;
                        VectorSpec::Finite(vec![(n, 0.2 + next()), (n + 2, 0.2 + next())])
                    }
                    "backward" => {
                        if next() < 0.5 {
                            VectorSpec::XrFamily { r: 0.25 + 0.75 * next(), m: 3 }
                        } else {
                            VectorSpec::TailVector { m: 3 }
                        }
                    }
                    _ => VectorSpec::stack(
                        VectorSpec::XrFamily { r: 0.25 + 0.75 * next(), m: 5 },
                        if next() < 0.5 { VectorSpec::zero() } else { VectorSpec::Basis(1) },
                    )?,
                };
                let n_dim = 48usize;
                let dense = dense_truncated_resolvent(&shift, n_dim, z, &x)?;
                let series = series_coefficients(&shift, &x, z, n_dim, &opts)?;
                let mut max_rel: f64 = 0.0;
                for (i, &d) in dense.coeffs.iter().enumerate() {
                    if let Some(s) = series.coeffs.get(i) {
                        if d.abs() > 1e-200 {
                            max_rel = max_rel.max(((d - s.to_real()) / d).abs());
                        }
                    }
                }
                let pass = max_rel < a.threshold;
                if !pass {
                    failures += 1;
                }
                text.push_str(&format!(
                    "{case},{},{x},{z},{max_rel:.3e},{}\n",
                    shift.spec_string(),
                    if pass { "pass" } else { "FAIL" }
                ));
            }
            out.write(&text)?;
            if failures == 0 {
                Ok(0)
            } else {
                eprintln!("{failures} oracle disagreement(s)");
                Ok(3)
            }
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
