//! Argument parsing, dispatch and persistence of run records.

use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use hitchin_core::models::ProfileCache;

use crate::config::{merge, FileConfig, RunSettings};
use crate::error::{CliError, CliResult, EXIT_NUMERICAL, EXIT_PASS};
use crate::experiments::{self as ex, Context};
use crate::output::{fmt, write_artifacts, write_csv, write_record, Outcome, RunRecord, Table, TOOL, VERSION};
use crate::verify::{run_criterion, Tolerances, CRITERIA};

#[derive(Debug, Parser)]
#[command(name = "hitchin", version = VERSION, about = "Numerical checks for Higgs bundles near the ends of the moduli space")]
pub struct Cli {
    /// TOML config file with a [run] section and one section per experiment.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for run records, CSV tables and SVG plots.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Fiducial profile cache (also HITCHIN_CACHE_DIR).
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Residuals of model, fiducial or limiting pairs.
    Residual(ex::ResidualParams),
    /// Model solution gluing across a neck.
    Model(ex::ModelParams),
    /// Fiducial family over a list of t.
    Fiducial(ex::FiducialParams),
    /// Cutoff interpolation between fiducial and limiting pairs.
    Glue(ex::GlueParams),
    /// Twisted cohomology of the sign local system.
    Cohomology(ex::CohomologyParams),
    /// Fiber metric on the neck.
    Metric(ex::MetricParams),
    /// Near-kernel of the discretized b-operator family.
    Spectrum(ex::SpectrumParams),
    /// Graph projections and windowed continuity distances.
    Graphcont(ex::GraphcontParams),
    /// L² divergence of u*/z near a puncture.
    Divergence(ex::DivergenceParams),
    /// The full acceptance suite.
    VerifyAll(VerifyArgs),
    /// One experiment over a list of values of one parameter.
    Sweep(SweepArgs),
}

#[derive(Clone, Debug, Args)]
pub struct VerifyArgs {
    /// Subset of criteria, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub criteria: Option<Vec<u8>>,
    /// Tolerance override as key=value; repeatable.
    #[arg(long = "tolerance")]
    pub tolerances: Vec<String>,
}

#[derive(Clone, Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub experiment: String,
    #[arg(long)]
    pub param: String,
    /// Values of the parameter, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub values: Vec<String>,
}

pub const EXPERIMENTS: [&str; 9] = ["residual", "model", "fiducial", "glue", "cohomology", "metric", "spectrum", "graphcont", "divergence"];

fn call<P: Serialize + DeserializeOwned>(params: Value, ctx: &Context, f: fn(&P, &Context) -> CliResult<Outcome>) -> CliResult<(Value, Outcome)> {
    let p: P = serde_json::from_value(params).map_err(|e| CliError::Config(e.to_string()))?;
    let snapshot = serde_json::to_value(&p)?;
    Ok((snapshot, f(&p, ctx)?))
}

/// Runs experiment `name` on fully merged parameters.
pub fn dispatch(name: &str, params: Value, ctx: &Context) -> CliResult<(Value, Outcome)> {
    match name {
        "residual" => call(params, ctx, ex::residual),
        "model" => call(params, ctx, ex::model),
        "fiducial" => call(params, ctx, ex::fiducial),
        "glue" => call(params, ctx, ex::glue),
        "cohomology" => call(params, ctx, ex::cohomology),
        "metric" => call(params, ctx, ex::metric),
        "spectrum" => call(params, ctx, ex::spectrum),
        "graphcont" => call(params, ctx, ex::graphcont),
        "divergence" => call(params, ctx, ex::divergence),
        _ => Err(CliError::Config(format!("unknown experiment `{name}`; expected one of {}", EXPERIMENTS.join(", ")))),
    }
}

fn merged<P: Serialize + DeserializeOwned>(name: &str, file: &FileConfig, flags: &P) -> CliResult<Value> {
    Ok(serde_json::to_value(merge(name, file.section(name), flags)?)?)
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn strings(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

/// Runs one experiment and persists its record and artifacts under `dir`.
pub fn run_and_record(name: &str, stem: &str, params: Value, dir: &Path, ctx: &Context) -> CliResult<(RunRecord, Outcome)> {
    let started = now();
    let (config, outcome) = dispatch(name, params, ctx)?;
    let artifacts = write_artifacts(dir, stem, &outcome)?;
    let record = RunRecord {
        tool: TOOL.into(),
        version: VERSION.into(),
        command: name.into(),
        started,
        finished: now(),
        seed: Some(ctx.seed),
        config,
        passed: outcome.passed(),
        checks: outcome.checks.clone(),
        result: outcome.result.clone(),
        artifacts: strings(&artifacts),
    };
    write_record(&dir.join(format!("{stem}.json")), &record)?;
    Ok((record, outcome))
}

fn verify_all(args: &VerifyArgs, file: &FileConfig, settings: &RunSettings, ctx: &Context) -> CliResult<i32> {
    let tol = Tolerances::resolve(file.section("tolerances"), &args.tolerances)?;
    let ids: Vec<u8> = match &args.criteria {
        Some(v) if v.is_empty() => return Err(CliError::Config("empty criteria list".into())),
        Some(v) => v.clone(),
        None => CRITERIA.iter().map(|(i, _)| *i).collect(),
    };
    if let Some(bad) = ids.iter().find(|i| !CRITERIA.iter().any(|(c, _)| c == *i)) {
        return Err(CliError::Config(format!("no criterion {bad}; criteria are 1..=8")));
    }
    let started = now();
    let mut reports = Vec::new();
    for id in ids {
        let r = run_criterion(id, &tol, ctx)?;
        println!("{}", r.line());
        reports.push(r);
    }
    let passed = reports.iter().all(|r| r.passed);
    let mut table = Table::new("verify_all", &["criterion", "name", "passed", "seconds"]);
    for r in &reports {
        table.push(vec![r.id.to_string(), r.name.clone(), r.passed.to_string(), fmt(r.elapsed)]);
    }
    let csv = settings.out.join("verify_all.csv");
    write_csv(&csv, &table)?;
    let record = RunRecord {
        tool: TOOL.into(),
        version: VERSION.into(),
        command: "verify-all".into(),
        started,
        finished: now(),
        seed: Some(ctx.seed),
        config: serde_json::to_value(&tol)?,
        passed,
        checks: reports.iter().flat_map(|r| r.checks.clone()).collect(),
        result: json!({ "criteria": reports }),
        artifacts: vec![csv.display().to_string()],
    };
    write_record(&settings.out.join("verify_all.json"), &record)?;
    println!("{}", if passed { "ALL PASS" } else { "FAILED" });
    Ok(if passed { EXIT_PASS } else { EXIT_NUMERICAL })
}

/// Parses a sweep value as JSON when possible, otherwise as a string.
fn sweep_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn sweep_point(name: &str, base: &Value, param: &str, value: &Value, ctx: &Context, dir: &Path, index: usize) -> CliResult<(RunRecord, Outcome)> {
    let mut p = base.clone();
    p[param] = value.clone();
    let stem = format!("{name}_{param}_{index}");
    match dispatch(name, p.clone(), ctx) {
        // list-valued parameters take a singleton list
        Err(CliError::Config(_)) if !value.is_array() => {
            p[param] = Value::Array(vec![value.clone()]);
            run_and_record(name, &stem, p, dir, ctx)
        }
        Err(e) => Err(e),
        Ok(_) => run_and_record(name, &stem, p, dir, ctx),
    }
}

fn sweep(args: &SweepArgs, file: &FileConfig, settings: &RunSettings, ctx: &Context) -> CliResult<i32> {
    if !EXPERIMENTS.contains(&args.experiment.as_str()) {
        return Err(CliError::Config(format!("unknown experiment `{}`", args.experiment)));
    }
    if args.values.is_empty() {
        return Err(CliError::Config("empty sweep range".into()));
    }
    let base = match file.section(&args.experiment) {
        None => Value::Object(Default::default()),
        Some(v @ Value::Object(_)) => v.clone(),
        Some(_) => return Err(CliError::Config(format!("[{}] must be a table", args.experiment))),
    };
    let dir = settings.out.join("sweep");
    let values: Vec<Value> = args.values.iter().map(|v| sweep_value(v)).collect();
    let results: Vec<CliResult<(RunRecord, Outcome)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let (base, dir, name, param) = (&base, &dir, &args.experiment, &args.param);
                scope.spawn(move || sweep_point(name, base, param, v, ctx, dir, i))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(CliError::Numerical("sweep worker panicked".into())))).collect()
    });
    let mut done = Vec::new();
    for r in results {
        done.push(r?);
    }
    let keys: Vec<String> = done[0].1.summary.keys().cloned().collect();
    let mut header = vec![args.param.as_str(), "passed"];
    header.extend(keys.iter().map(String::as_str));
    let mut table = Table::new("sweep", &header);
    for (raw, (record, outcome)) in args.values.iter().zip(&done) {
        let mut row = vec![raw.clone(), record.passed.to_string()];
        row.extend(keys.iter().map(|k| outcome.summary.get(k).map_or(String::new(), |x| fmt(*x))));
        println!("{} = {raw}: {}", args.param, row[1..].join(", "));
        table.push(row);
    }
    for k in &keys {
        let col: Vec<f64> = done.iter().filter_map(|(_, o)| o.summary.get(k).copied()).collect();
        println!("{k}: {}", trend(&col));
    }
    write_csv(&settings.out.join(format!("sweep_{}_{}.csv", args.experiment, args.param)), &table)?;
    let passed = done.iter().all(|(r, _)| r.passed);
    Ok(if passed { EXIT_PASS } else { EXIT_NUMERICAL })
}

/// Qualitative shape of a summary column in sweep order.
pub fn trend(col: &[f64]) -> &'static str {
    if col.windows(2).all(|w| w[1] == w[0]) {
        "constant"
    } else if col.windows(2).all(|w| w[1] < w[0]) {
        "strictly decreasing"
    } else if col.windows(2).all(|w| w[1] > w[0]) {
        "strictly increasing"
    } else {
        "not monotone"
    }
}

fn single(name: &str, params: Value, settings: &RunSettings, ctx: &Context) -> CliResult<i32> {
    let (record, outcome) = run_and_record(name, name, params, &settings.out, ctx)?;
    for l in &outcome.lines {
        println!("{l}");
    }
    for c in outcome.checks.iter().filter(|c| !c.passed) {
        eprintln!("check failed: {} = {:.6e} (limit {:.1e})", c.name, c.value, c.limit);
    }
    Ok(if record.passed { EXIT_PASS } else { EXIT_NUMERICAL })
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> CliResult<i32> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let settings = RunSettings::resolve(&file.run, cli.out.clone(), cli.seed, cli.cache_dir.clone());
    let ctx = Context { seed: settings.seed, cache: ProfileCache::new(&settings.cache_dir) };
    match &cli.command {
        Command::Residual(p) => single("residual", merged("residual", &file, p)?, &settings, &ctx),
        Command::Model(p) => single("model", merged("model", &file, p)?, &settings, &ctx),
        Command::Fiducial(p) => single("fiducial", merged("fiducial", &file, p)?, &settings, &ctx),
        Command::Glue(p) => single("glue", merged("glue", &file, p)?, &settings, &ctx),
        Command::Cohomology(p) => single("cohomology", merged("cohomology", &file, p)?, &settings, &ctx),
        Command::Metric(p) => single("metric", merged("metric", &file, p)?, &settings, &ctx),
        Command::Spectrum(p) => single("spectrum", merged("spectrum", &file, p)?, &settings, &ctx),
        Command::Graphcont(p) => single("graphcont", merged("graphcont", &file, p)?, &settings, &ctx),
        Command::Divergence(p) => single("divergence", merged("divergence", &file, p)?, &settings, &ctx),
        Command::VerifyAll(a) => verify_all(a, &file, &settings, &ctx),
        Command::Sweep(a) => sweep(a, &file, &settings, &ctx),
    }
}

/// Parses `args`, runs, and maps errors to their exit codes.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("hitchin: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn sweep_values() {
        assert_eq!(sweep_value("2"), json!(2));
        assert_eq!(sweep_value("1e-4"), json!(1e-4));
        assert_eq!(sweep_value("aps"), json!("aps"));
        assert_eq!(trend(&[1.0, 1.0]), "constant");
        assert_eq!(trend(&[3.0, 2.0, 1.0]), "strictly decreasing");
        assert_eq!(trend(&[1.0, 3.0, 2.0]), "not monotone");
    }

    #[test]
    fn dispatch_rejects_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = Context { seed: 1, cache: ProfileCache::new(dir.path()) };
        assert!(matches!(dispatch("nope", json!({}), &ctx), Err(CliError::Config(_))));
        assert!(matches!(dispatch("cohomology", json!({"bogus": 1}), &ctx), Err(CliError::Config(_))));
    }
}
