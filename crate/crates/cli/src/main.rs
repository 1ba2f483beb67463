//! `matsense`: batch front end for the radar material pipeline.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use matsense::Stage;

/// Exit status for command-line usage errors.
pub const USAGE_EXIT: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "matsense", version, about = "Radar dielectric extraction and vision fusion")]
pub struct Cli {
    /// Calibration profile (TOML).
    #[arg(long, global = true)]
    pub profile: Option<PathBuf>,

    /// Material store (TOML); the built-in store is used otherwise.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,

    /// Overrides the seed of a scene file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Also write intermediate maps and records next to the output.
    #[arg(long, global = true)]
    pub debug: bool,

    /// Output file (stdout when omitted, except for binary cubes).
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a radar cube from a scene file.
    Simulate {
        scene: PathBuf,
    },
    /// Build a calibration profile from sphere, plate and noise captures.
    Calibrate(CalibrateArgs),
    /// Extract the feature record from one or more cubes.
    Extract(ExtractArgs),
    /// Match a feature record against the store, optionally pruning visual candidates.
    Identify(IdentifyArgs),
    /// Fuse a visual and a radar context into a decision.
    Fuse(FuseArgs),
    /// Run extraction, matching, the visual provider and fusion end to end.
    Pipeline(PipelineRun),
}

#[derive(Debug, Args)]
pub struct GateArg {
    /// Range gate as `near,far` in metres.
    #[arg(long, value_parser = parse_gate, default_value = "0.1,1.0")]
    pub gate: (f64, f64),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub sphere: PathBuf,
    #[arg(long)]
    pub plate: PathBuf,
    /// Empty-scene cube used to estimate the noise floor.
    #[arg(long, required_unless_present = "noise_power", conflicts_with = "noise_power")]
    pub empty: Option<PathBuf>,
    /// Per-sample noise power in W, instead of an empty-scene cube.
    #[arg(long)]
    pub noise_power: Option<f64>,
    /// Sphere diameter in metres.
    #[arg(long, default_value_t = 0.063)]
    pub diameter: f64,
    /// Known sphere centre as `x,y,z` in metres.
    #[arg(long, value_parser = parse_vec3)]
    pub sphere_position: Option<[f64; 3]>,
    #[command(flatten)]
    pub gate: GateArg,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Cubes to process; with more than one, `--output` names a directory.
    #[arg(required = true)]
    pub cubes: Vec<PathBuf>,
    #[command(flatten)]
    pub gate: GateArg,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    pub features: PathBuf,
    /// Visual context to prune against the radar estimate.
    #[arg(long, requires = "pruned_output")]
    pub visual: Option<PathBuf>,
    /// Where the pruned visual context is written.
    #[arg(long)]
    pub pruned_output: Option<PathBuf>,
    #[command(flatten)]
    pub radar: RadarArgs,
}

#[derive(Debug, Args)]
pub struct RadarArgs {
    /// Distance at which radar uncertainty reaches its range term's full weight.
    #[arg(long, default_value_t = 1.0)]
    pub max_distance: f64,
    /// Number of radar candidates kept.
    #[arg(long, default_value_t = 3)]
    pub top_k: usize,
    /// Prune tolerance in store standard deviations.
    #[arg(long, default_value_t = 1.0)]
    pub prune_tolerance: f64,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub visual: PathBuf,
    #[arg(long)]
    pub radar: PathBuf,
    /// Fusion coefficients (TOML).
    #[arg(long)]
    pub fusion: Option<PathBuf>,
}

/// One end-to-end run: exactly one of `--cube` or `--scene`.
#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["cube", "scene"]))]
pub struct PipelineRun {
    #[arg(long)]
    pub cube: Option<PathBuf>,
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Image handed to the visual provider.
    #[arg(long)]
    pub image: String,
    /// Provider configuration (TOML).
    #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
    pub provider: Option<PathBuf>,
    /// Shortcut for a mock provider reading this fixture.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    #[arg(long)]
    pub fusion: Option<PathBuf>,
    #[command(flatten)]
    pub gate: GateArg,
    #[command(flatten)]
    pub radar: RadarArgs,
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated numbers"));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("`{p}` is not a number"))?;
    }
    Ok(out)
}

fn parse_gate(s: &str) -> Result<(f64, f64), String> {
    let [near, far] = parse_floats::<2>(s)?;
    if !(near >= 0.0 && far > near) {
        return Err("gate needs 0 <= near < far".into());
    }
    Ok((near, far))
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    parse_floats::<3>(s)
}

fn exit_code_table() -> String {
    let mut s = String::from("Exit codes:\n  0   success\n");
    for stage in Stage::ALL {
        s.push_str(&format!("  {:<3} {} failure\n", stage.exit_code(), stage.label()));
    }
    s.push_str(&format!("  {USAGE_EXIT:<3} usage error\n"));
    s
}

fn main() -> ExitCode {
    let command = Cli::command().after_help(exit_code_table());
    let cli = match command.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(USAGE_EXIT),
            };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            for message in &failure.messages {
                eprintln!("matsense: {message}");
            }
            ExitCode::from(failure.code)
        }
    }
}
