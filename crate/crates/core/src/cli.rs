//! Command-line front end.
//!
//! Exit codes: 0 success, 1 theorem verdict failed, 2 bad arguments or
//! configuration, 3 initial condition outside `C ∪ D`, 4 certificate fields
//! missing for the requested theorem, 5 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::certificates::{
    evaluate_theorem, missing_fields, CertificateBundle, EntryStatus, GridSpec, LevelSetOutcome,
    TheoremCheckConfig, TheoremChecklist, TheoremId,
};
use crate::config::ConfigDocument;
use crate::error::Error;
use crate::executor::{solve, write_sidecar_json, write_trajectory_csv};
use crate::library::{make_example, EXAMPLE_NAMES};
use crate::montecarlo::{estimate_recurrence, level_set_outcome, sweep_epsilon, Empirical, SweepRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT_FAILED: i32 = 1;
pub const EXIT_BAD_INPUT: i32 = 2;
pub const EXIT_OUTSIDE_DOMAIN: i32 = 3;
pub const EXIT_MISSING_FIELDS: i32 = 4;
pub const EXIT_RUNTIME: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "spshds", version, about = "Simulate and certify singularly perturbed stochastic hybrid systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one random solution and write a trajectory CSV.
    Simulate(SimulateArgs),
    /// Evaluate a theorem checklist and write report.json.
    Verify(VerifyArgs),
    /// Checklist verdicts and empirical estimates over a list of epsilons.
    Sweep(SweepArgs),
    /// Estimate the recurrence probability from a ball of initial conditions.
    Recur(RecurArgs),
    /// List the built-in examples, or emit their config files with --out.
    Examples(ExamplesArgs),
}

#[derive(Debug, Args, Serialize)]
struct Source {
    /// JSON config document.
    #[arg(long, required_unless_present = "example")]
    config: Option<PathBuf>,
    /// Built-in example name, in place of --config.
    #[arg(long, conflicts_with = "config")]
    example: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct Common {
    /// Master seed.
    #[arg(long, env = "TOOLKIT_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses all cores. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct GridArgs {
    /// Grid points per axis, overriding the config.
    #[arg(long)]
    grid: Option<usize>,
    /// Violation tolerance, overriding the config.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    source: Source,
    /// Initial condition, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    y0: Vec<f64>,
    #[arg(long)]
    epsilon: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args, Serialize)]
struct VerifyArgs {
    #[command(flatten)]
    source: Source,
    /// T1, T2, T3 or T4.
    #[arg(long, value_parser = parse_theorem)]
    theorem: TheoremId,
    #[arg(long)]
    epsilon: f64,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_parser = parse_theorem)]
    theorem: TheoremId,
    /// Comma separated list.
    #[arg(long, value_delimiter = ',', required = true)]
    epsilon: Vec<f64>,
    /// Trials per epsilon, overriding the config.
    #[arg(long)]
    trials: Option<usize>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args, Serialize)]
struct RecurArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    trials: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args, Serialize)]
struct ExamplesArgs {
    /// Restrict to one example.
    #[arg(long)]
    name: Option<String>,
    /// Write `<name>.json` config files here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_theorem(s: &str) -> Result<TheoremId, String> {
    TheoremId::parse(s).ok_or_else(|| format!("unknown theorem `{s}` (expected T1..T4)"))
}

/// Written to the output directory before any computation.
#[derive(Serialize)]
struct RunManifest<'a, P: Serialize> {
    command: &'a str,
    config: Option<String>,
    example: Option<String>,
    parameters: &'a P,
    seed: u64,
    out: String,
    version: &'static str,
}

enum Failure {
    BadInput(String),
    Outside(String),
    Missing(Vec<String>),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Domain(_) | Error::Json(_) | Error::UnknownExample(_) => {
                Failure::BadInput(e.to_string())
            }
            Error::NoSolution { .. } => Failure::Outside(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type Outcome = std::result::Result<i32, Failure>;

fn load(source: &Source) -> std::result::Result<ConfigDocument, Failure> {
    match (&source.config, &source.example) {
        (Some(path), _) => ConfigDocument::load(path)
            .map_err(|e| Failure::BadInput(format!("cannot load {}: {e}", path.display()))),
        (None, Some(name)) => Ok(make_example(name)?.config),
        (None, None) => Err(Failure::BadInput("either --config or --example is required".into())),
    }
}

fn write_manifest<P: Serialize>(
    command: &str,
    source: &Source,
    common: &Common,
    parameters: &P,
) -> std::result::Result<(), Failure> {
    let manifest = RunManifest {
        command,
        config: source.config.as_ref().map(|p| p.display().to_string()),
        example: source.example.clone(),
        parameters,
        seed: common.seed,
        out: common.out.display().to_string(),
        version: env!("CARGO_PKG_VERSION"),
    };
    write_json(&common.out.join("manifest.json"), &manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::result::Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))? + "\n";
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn certificate(doc: &ConfigDocument, theorem: TheoremId) -> std::result::Result<CertificateBundle, Failure> {
    let cert = doc.build_certificate()?.unwrap_or_default();
    let missing = missing_fields(&cert, theorem);
    if missing.is_empty() {
        Ok(cert)
    } else {
        Err(Failure::Missing(missing))
    }
}

fn check_config(
    doc: &ConfigDocument,
    dim: usize,
    grid: &GridArgs,
    common: &Common,
) -> std::result::Result<TheoremCheckConfig, Failure> {
    let mut g: GridSpec = doc.verification.grid_or_default(dim);
    if let Some(n) = grid.grid {
        g.points = n;
    }
    g.validate(dim)?;
    let mut settings = doc.verification.checks.clone();
    if let Some(tol) = grid.tol {
        if !(tol >= 0.0) {
            return Err(Failure::BadInput(format!("--tol must be nonnegative, got {tol}")));
        }
        settings.tol = tol;
    }
    if common.workers > 0 {
        settings.workers = common.workers;
    }
    settings.seed = common.seed;
    Ok(TheoremCheckConfig {
        grid: g,
        settings,
        level_set: None,
    })
}

fn simulate(args: &SimulateArgs) -> Outcome {
    let doc = load(&args.source)?;
    let sys = doc.build_system()?;
    write_manifest("simulate", &args.source, &args.common, args)?;
    if args.y0.len() != sys.dim() {
        return Err(Failure::BadInput(format!(
            "y0 has {} components, the system has {}",
            args.y0.len(),
            sys.dim()
        )));
    }
    let tol = doc.verification.checks.membership_tol;
    if !(sys.in_flow_set(&args.y0, tol) || sys.in_jump_set(&args.y0, tol)) {
        return Err(Failure::Outside(format!("y0 = {:?} is outside C and D", args.y0)));
    }
    let rec = solve(&sys, &args.y0, args.epsilon, &doc.execution, args.common.seed)?;
    let out = &args.common.out;
    write_trajectory_csv(&rec, sys.n1, sys.n2, &out.join("trajectory.csv"))?;
    write_sidecar_json(&rec, args.epsilon, &out.join("trajectory.json"))?;
    let (end_time, end) = rec.arc.end().expect("solutions have at least one node");
    println!("stop reason  {:?}", rec.stop_reason);
    println!("jumps        {}", rec.n_jumps());
    println!("end          t = {}, j = {}, y = {:?}", end_time.t, end_time.j, end);
    Ok(EXIT_OK)
}

fn print_checklist(list: &TheoremChecklist) {
    println!("{} at epsilon = {}", list.theorem, list.epsilon);
    if let Some(t) = &list.thresholds {
        println!("eps* = {}, theta* = {}", t.epsilon_star, t.theta_star);
    }
    let width = list.entries.iter().map(|e| e.name.len()).max().unwrap_or(0);
    for e in &list.entries {
        let status = match e.status {
            EntryStatus::Pass => "pass",
            EntryStatus::Fail => "FAIL",
            EntryStatus::NotChecked => "n/c",
        };
        let marker = if e.required { "" } else { " (info)" };
        println!("  {:<width$}  {status:<4}  {}{marker}", e.name, e.detail);
    }
    println!("verdict: {}", if list.verdict { "PASS" } else { "FAIL" });
}

fn verify(args: &VerifyArgs) -> Outcome {
    let doc = load(&args.source)?;
    let sys = doc.build_system()?;
    let cert = certificate(&doc, args.theorem)?;
    let mut cfg = check_config(&doc, sys.dim(), &args.grid, &args.common)?;
    write_manifest("verify", &args.source, &args.common, args)?;
    if matches!(args.theorem, TheoremId::T2 | TheoremId::T4) {
        let outcome = level_set_outcome(
            &sys,
            &cert,
            args.theorem,
            args.epsilon,
            &cfg.grid,
            &doc.verification.level_set,
            &doc.execution,
            args.common.seed,
        )
        .map(|r| r.outcome())
        .unwrap_or_else(|e| LevelSetOutcome {
            passed: false,
            detail: e.to_string(),
        });
        cfg.level_set = Some(outcome);
    }
    let list = evaluate_theorem(&sys, &cert, args.epsilon, args.theorem, &cfg)?;
    write_json(&args.common.out.join("report.json"), &list)?;
    print_checklist(&list);
    Ok(if list.verdict { EXIT_OK } else { EXIT_VERDICT_FAILED })
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("epsilon,verdict,n_trials,n_success,point_estimate,lower_bound,failing\n");
    for r in rows {
        let e = &r.estimate;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.epsilon,
            r.verdict,
            e.n_trials,
            e.n_success,
            e.point_estimate,
            e.lower_bound,
            r.failing.join(";")
        ));
    }
    out
}

fn sweep(args: &SweepArgs) -> Outcome {
    let doc = load(&args.source)?;
    let sys = doc.build_system()?;
    let cert = certificate(&doc, args.theorem)?;
    let cfg = check_config(&doc, sys.dim(), &args.grid, &args.common)?;
    write_manifest("sweep", &args.source, &args.common, args)?;
    let v = &doc.verification;
    let empirical = match args.theorem {
        TheoremId::T1 | TheoremId::T2 => {
            let mut s = v.stability.clone();
            s.trials = args.trials.unwrap_or(s.trials);
            Empirical::Stability(s)
        }
        TheoremId::T3 | TheoremId::T4 => {
            let mut r = v.recurrence.clone();
            r.trials = args.trials.unwrap_or(r.trials);
            Empirical::Recurrence(r)
        }
    };
    let rows = sweep_epsilon(
        &sys,
        &cert,
        &args.epsilon,
        args.theorem,
        &cfg,
        &v.level_set,
        &empirical,
        &doc.execution,
        args.common.seed,
        args.common.workers,
    )?;
    write_json(&args.common.out.join("sweep.json"), &rows)?;
    let table = sweep_csv(&rows);
    fs::write(args.common.out.join("sweep.csv"), &table)
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{:>10}  {:<7}  {:>9}  {:>11}  failing", "epsilon", "verdict", "estimate", "lower bound");
    for r in &rows {
        println!(
            "{:>10}  {:<7}  {:>9.4}  {:>11.4}  {}",
            r.epsilon,
            if r.verdict { "pass" } else { "fail" },
            r.estimate.point_estimate,
            r.estimate.lower_bound,
            r.failing.join(", ")
        );
    }
    Ok(EXIT_OK)
}

fn recur(args: &RecurArgs) -> Outcome {
    let doc = load(&args.source)?;
    let sys = doc.build_system()?;
    let cert = doc.build_certificate()?;
    let mut cfg = doc.verification.recurrence.clone();
    cfg.trials = args.trials.unwrap_or(cfg.trials);
    if cfg.trials == 0 {
        return Err(Failure::BadInput("need at least one trial".into()));
    }
    write_manifest("recur", &args.source, &args.common, args)?;
    let result = estimate_recurrence(
        &sys,
        cert.as_ref(),
        &cfg,
        args.epsilon,
        &doc.execution,
        args.common.seed,
        args.common.workers,
    )?;
    result.write_trials_csv(&args.common.out.join("trials.csv"))?;
    result.write_summary_json(&args.common.out.join("summary.json"))?;
    let e = &result.estimate;
    println!("criterion    {}", e.criterion);
    println!("successes    {} / {}", e.n_success, e.n_trials);
    println!("lower bound  {:.6} at confidence {}", e.lower_bound, e.confidence);
    println!("blow-ups     {}", e.n_blow_up);
    Ok(EXIT_OK)
}

fn examples(args: &ExamplesArgs) -> Outcome {
    let names: Vec<&str> = match &args.name {
        Some(n) => vec![n.as_str()],
        None => EXAMPLE_NAMES.to_vec(),
    };
    for name in names {
        let ex = make_example(name)?;
        match &args.out {
            Some(dir) => {
                let path = dir.join(format!("{name}.json"));
                fs::create_dir_all(dir).map_err(|e| Failure::Runtime(e.to_string()))?;
                fs::write(&path, ex.config.to_json()?).map_err(|e| Failure::Runtime(e.to_string()))?;
                println!("{}", path.display());
            }
            None => {
                let summary = ex.description.lines().next().unwrap_or_default();
                println!("{name:<16} {summary}");
            }
        }
    }
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_BAD_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => verify(a),
        Command::Sweep(a) => sweep(a),
        Command::Recur(a) => recur(a),
        Command::Examples(a) => examples(a),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::BadInput(msg)) => {
            eprintln!("error: {msg}");
            EXIT_BAD_INPUT
        }
        Err(Failure::Outside(msg)) => {
            eprintln!("error: {msg}");
            EXIT_OUTSIDE_DOMAIN
        }
        Err(Failure::Missing(fields)) => {
            eprintln!("error: certificate is missing fields: {}", fields.join(", "));
            EXIT_MISSING_FIELDS
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}
