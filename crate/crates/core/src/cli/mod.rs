//! Command-line front end.
//!
//! Every subcommand writes its results plus a `manifest.json` into the
//! output directory. The manifest records the resolved parameters and input
//! digests, and `carshare replay <manifest>` runs the same computation again.

mod commands;
mod parse;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use commands::{
    exec_estimate, exec_gen_trace, exec_relocq, exec_simulate, exec_solve, EstimateParams, GenTraceParams, Outcome,
    RelocqParams, SimulateParams, SolveParams,
};
pub use parse::{parse_alpha_list, parse_rate_list, ListParseError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_ESTIMATION: i32 = 4;
pub const EXIT_INSTABILITY: i32 = 5;

/// Environment variable that sets the output directory when `--out-dir` is
/// not given.
pub const OUT_DIR_ENV: &str = "CARSHARE_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "carshare-out";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_NUMERIC,
            message: message.into(),
        }
    }

    pub fn estimation(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_ESTIMATION,
            message: message.into(),
        }
    }

    pub fn instability(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INSTABILITY,
            message: message.into(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "carshare", version, about = "Queueing models of one-way car-sharing systems")]
struct Cli {
    /// Where results go; defaults to $CARSHARE_OUT_DIR, then ./carshare-out.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Availability, throughput and mean cars per station for given fleet sizes.
    Solve(SolveArgs),
    /// Build a network from a pickup/dropoff log.
    Estimate(EstimateArgs),
    /// Simulate the network under one or more relocation policies.
    Simulate(SimulateArgs),
    /// Analyze a single relocation queue.
    Relocq(RelocqArgs),
    /// Produce a synthetic pickup/dropoff log from a network.
    GenTrace(GenTraceArgs),
    /// Run the command recorded in a manifest again.
    Replay(ReplayArgs),
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Args, Serialize)]
struct SolveArgs {
    /// Network spec (JSON).
    #[serde(skip_serializing_if = "Option::is_none")]
    spec: Option<PathBuf>,
    /// Comma-separated fleet sizes.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    fleet: Option<Vec<usize>>,
    /// JSON file with the same keys as the flags.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EstimateArgs {
    /// Event log (CSV).
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<PathBuf>,
    /// Comma-separated cell side lengths in meters.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    cell_side: Option<Vec<f64>>,
    /// Fleet size of the estimated network.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    fleet: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[serde(skip_serializing_if = "Option::is_none")]
    spec: Option<PathBuf>,
    /// Comma-separated: none, uniform:<alpha>, backpressure, perpair.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    policy: Option<Vec<String>>,
    /// Hours per replication.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
    /// Discarded hours; 20% of the horizon by default.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    warmup: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reps: Option<usize>,
    /// Override the network's fleet size.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    fleet: Option<usize>,
    /// Draw a separate travel time for each car of a train.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    independent_train_travel: bool,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct RelocqArgs {
    /// Car arrival rate.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    /// Per-destination customer rates, e.g. 1:0.2,2:0.8.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<String>,
    /// Relocation probabilities: 1:1,2:0 or uniform[:c].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<String>,
    /// States kept in the numerical chain solve.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    truncation: Option<usize>,
    /// Random parameter draws for the routing-gain check.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    bound_draws: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct GenTraceArgs {
    #[serde(skip_serializing_if = "Option::is_none")]
    spec: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Spacing of the synthetic station layout in meters.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    cell_side: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// What was run, on which inputs, producing which files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub params: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Merges a config file (if any) with the flags given on the command line,
/// flags winning, and deserializes the result.
fn resolve<P: DeserializeOwned>(config: Option<&Path>, flags: &impl Serialize) -> Result<P, CliError> {
    let mut merged = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
            match serde_json::from_str(&text) {
                Ok(serde_json::Value::Object(map)) => map,
                Ok(_) => return Err(CliError::input(format!("{}: expected a JSON object", path.display()))),
                Err(e) => return Err(CliError::input(format!("{}: {e}", path.display()))),
            }
        }
        None => serde_json::Map::new(),
    };
    if let serde_json::Value::Object(flags) = serde_json::to_value(flags).expect("flags serialize") {
        merged.extend(flags);
    }
    serde_json::from_value(serde_json::Value::Object(merged)).map_err(|e| CliError::input(format!("parameters: {e}")))
}

fn out_dir_from(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Runs a subcommand from resolved parameters and writes its outputs and
/// manifest into `out_dir`.
pub fn execute(subcommand: &str, params: serde_json::Value, out_dir: &Path) -> Result<(RunManifest, String), CliError> {
    fn typed<P: DeserializeOwned>(v: serde_json::Value) -> Result<P, CliError> {
        serde_json::from_value(v).map_err(|e| CliError::input(format!("parameters: {e}")))
    }
    let outcome = match subcommand {
        "solve" => exec_solve(&typed(params.clone())?)?,
        "estimate" => exec_estimate(&typed(params.clone())?)?,
        "simulate" => exec_simulate(&typed(params.clone())?)?,
        "relocq" => exec_relocq(&typed(params.clone())?)?,
        "gen-trace" => exec_gen_trace(&typed(params.clone())?)?,
        other => return Err(CliError::input(format!("unknown subcommand '{other}'"))),
    };
    let inputs = outcome
        .inputs
        .iter()
        .map(|p| {
            Ok(InputDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", out_dir.display())))?;
    for (name, body) in &outcome.files {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: subcommand.to_string(),
        params,
        inputs,
        seed: outcome.seed,
        outputs: outcome.files.iter().map(|(n, _)| n.clone()).collect(),
    };
    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
    Ok((manifest, outcome.summary))
}

/// Re-runs a manifest after checking that its inputs are unchanged.
pub fn replay(manifest_path: &Path, out_dir: &Path) -> Result<(RunManifest, String), CliError> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", manifest_path.display())))?;
    for input in &manifest.inputs {
        let now = sha256_file(Path::new(&input.path))?;
        if now != input.sha256 {
            return Err(CliError::input(format!(
                "{} changed since the manifest was written",
                input.path
            )));
        }
    }
    execute(&manifest.subcommand, manifest.params, out_dir)
}

fn to_value<P: Serialize>(p: &P) -> serde_json::Value {
    serde_json::to_value(p).expect("params serialize")
}

fn dispatch(cli: Cli) -> Result<(RunManifest, String), CliError> {
    let (name, params) = match cli.command {
        Command::Solve(a) => ("solve", to_value(&resolve::<SolveParams>(a.config.as_deref(), &a)?)),
        Command::Estimate(a) => (
            "estimate",
            to_value(&resolve::<EstimateParams>(a.config.as_deref(), &a)?),
        ),
        Command::Simulate(a) => (
            "simulate",
            to_value(&resolve::<SimulateParams>(a.config.as_deref(), &a)?),
        ),
        Command::Relocq(a) => ("relocq", to_value(&resolve::<RelocqParams>(a.config.as_deref(), &a)?)),
        Command::GenTrace(a) => (
            "gen-trace",
            to_value(&resolve::<GenTraceParams>(a.config.as_deref(), &a)?),
        ),
        Command::Replay(a) => {
            let out_dir = match &cli.out_dir {
                Some(_) => out_dir_from(cli.out_dir.clone()),
                None => std::env::var_os(OUT_DIR_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|| a.manifest.parent().map(Path::to_path_buf).unwrap_or_default()),
            };
            return replay(&a.manifest, &out_dir);
        }
    };
    execute(name, params, &out_dir_from(cli.out_dir))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Results go to stdout, diagnostics to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok((_, summary)) => {
            if !summary.is_empty() {
                println!("{summary}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
