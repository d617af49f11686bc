use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use serde_json::{json, Map, Value};

use rollball::report::{execute, RunConfig, Subcommand, EXIT_ERROR};

#[derive(Parser)]
#[command(
    name = "rollball",
    version,
    about = "Cost geometry audits and rolling-ball inclusion checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Sample the MTW contraction of a power cost and classify it.
    MtwAudit(Flags),
    /// Build a two-focus sub-level set and classify its convexity.
    Sublevel(Flags),
    /// Rolling-ball inclusion checks (circles, ellipse, perturbed, sweep, theorem2).
    Roll(Flags),
    /// Compare an internally tangent pair of paraboloids.
    Reflector(Flags),
}

#[derive(Args, Default)]
struct Flags {
    /// Cost exponent.
    #[arg(long, allow_hyphen_values = true)]
    p: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    /// First focus, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    y1: Option<Vec<f64>>,
    /// Second focus, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    y2: Option<Vec<f64>>,
    /// Level offset.
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    normals: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// MTW positivity tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Level-curve tracing step.
    #[arg(long)]
    step: Option<f64>,
    /// Roll scenario: circles, ellipse, perturbed, sweep, theorem2.
    #[arg(long)]
    scenario: Option<String>,
    /// Run data-parallel loops sequentially.
    #[arg(long)]
    sequential: bool,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Polyline CSV path for the traced level curve.
    #[arg(long)]
    trace_csv: Option<PathBuf>,
    /// TOML file whose keys override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Flags {
    fn to_layer(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("p", self.p.map(|v| json!(v)));
        put("dim", self.dim.map(|v| json!(v)));
        put("y1", self.y1.as_ref().map(|v| json!(v)));
        put("y2", self.y2.as_ref().map(|v| json!(v)));
        put("a", self.a.map(|v| json!(v)));
        put("samples", self.samples.map(|v| json!(v)));
        put("normals", self.normals.map(|v| json!(v)));
        put("seed", self.seed.map(|v| json!(v)));
        put("tol", self.tol.map(|v| json!(v)));
        put("step", self.step.map(|v| json!(v)));
        put("scenario", self.scenario.as_ref().map(|v| json!(v)));
        put("sequential", self.sequential.then_some(json!(true)));
        put("out", self.out.as_ref().map(|v| json!(v.display().to_string())));
        put(
            "trace_csv",
            self.trace_csv.as_ref().map(|v| json!(v.display().to_string())),
        );
        m
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (subcommand, flags) = match &cli.command {
        Command::MtwAudit(f) => (Subcommand::MtwAudit, f),
        Command::Sublevel(f) => (Subcommand::Sublevel, f),
        Command::Roll(f) => (Subcommand::Roll, f),
        Command::Reflector(f) => (Subcommand::Reflector, f),
    };
    let file = match flags.config.as_deref().map(RunConfig::from_toml_file).transpose() {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR as u8);
        }
    };
    let config = match RunConfig::resolve(&flags.to_layer(), file.as_ref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR as u8);
        }
    };
    let envelope = execute(subcommand, &config);
    if let Some(err) = envelope.result.get("error") {
        eprintln!("error: {}", err.as_str().unwrap_or_default());
    }
    if let Err(e) = envelope.write(config.out.as_deref()) {
        eprintln!("error: cannot write report: {e}");
        return ExitCode::from(EXIT_ERROR as u8);
    }
    ExitCode::from(envelope.exit_code as u8)
}
