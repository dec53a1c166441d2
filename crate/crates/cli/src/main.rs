use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chaoslab::experiment::{self, ExperimentConfig};
use chaoslab::Error;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Mean-field limit experiments: particle simulations, Vlasov runs and
/// exact verification suites.
#[derive(Parser)]
#[command(name = "chaoslab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate particle replicas and record observables.
    Simulate(RunArgs),
    /// Compare particle marginals with the Vlasov solution over N.
    ChaosStudy(RunArgs),
    /// Monte-Carlo exponential moments against the closed-form bound.
    Expmoment(RunArgs),
    /// Exact counting identities and their bounds.
    CombinatoricsVerify(RunArgs),
    /// Cancellation identities by quadrature and Monte Carlo.
    CancellationVerify(RunArgs),
    /// Run the phase-space solver and record conservation diagnostics.
    VlasovRun(RunArgs),
    /// Relative entropy between two solver runs over time.
    Weakstrong(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; parameters not given take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: runs/<kind>-<hash prefix>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "CHAOSLAB_THREADS")]
    threads: Option<usize>,
}

impl Command {
    fn split(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::Simulate(a) => ("simulate", a),
            Command::ChaosStudy(a) => ("chaos_study", a),
            Command::Expmoment(a) => ("expmoment", a),
            Command::CombinatoricsVerify(a) => ("combinatorics_verify", a),
            Command::CancellationVerify(a) => ("cancellation_verify", a),
            Command::VlasovRun(a) => ("vlasov_run", a),
            Command::Weakstrong(a) => ("weakstrong", a),
        }
    }
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn load_config(kind: &str, args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut doc = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<Value>(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?
        }
        None => json!({}),
    };
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| config_error("config must be a JSON object"))?;
    if let Some(seed) = args.seed {
        obj.insert("seed".into(), json!(seed));
    }
    if !obj.contains_key("seed") {
        return Err(config_error("a seed is required (--seed or \"seed\" in the config)"));
    }
    let exp = obj.entry("experiment").or_insert_with(|| json!({}));
    let exp = exp
        .as_object_mut()
        .ok_or_else(|| config_error("\"experiment\" must be a JSON object"))?;
    match exp.get("kind").and_then(Value::as_str) {
        None => {
            exp.insert("kind".into(), json!(kind));
        }
        Some(k) if k == kind => {}
        Some(k) => return Err(config_error(format!("config describes {k:?} but the subcommand runs {kind:?}"))),
    }
    let mut cfg = ExperimentConfig::from_json(&doc.to_string())?;
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    if let Some(out) = &args.out {
        cfg.output = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output_dir(cfg: &ExperimentConfig, hash: &str) -> PathBuf {
    cfg.output
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(format!("{}-{}", cfg.experiment.kind(), &hash[..12])))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    let cfg = match load_config(kind, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let record = match experiment::run(&cfg) {
        Ok(r) => r,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            return ExitCode::from(EXIT_FAIL);
        }
    };
    let dir = output_dir(&cfg, &record.config_hash);
    if let Err(e) = record.write(&dir) {
        eprintln!("cannot write {}: {e}", dir.display());
        return ExitCode::from(EXIT_FAIL);
    }
    for c in record.checks.iter().filter(|c| !c.pass) {
        println!("FAIL {}: {}", c.name, c.detail);
    }
    println!(
        "{kind}: {} checks, {} failed, {:.1}s, config {} -> {}",
        record.checks.len(),
        record.failures(),
        record.wall_time,
        &record.config_hash[..12],
        dir.display()
    );
    if record.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}
