//! `freqsplat` command-line entry point.
//!
//! Exit codes: 0 on success, 1 on bad input (one `error: ...` line on
//! stderr), 2 when an internal invariant fails.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use freqsplat::train::TrainConfig;
use serde::Serialize;

/// Environment variable that caps the worker thread count.
pub const THREADS_ENV: &str = "FREQSPLAT_THREADS";

#[derive(Parser, Debug, Serialize)]
#[command(name = "freqsplat", version, about = "Frequency-level Gaussian splatting on the CPU")]
pub struct Cli {
    /// Run every reduction sequentially on one thread.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic multi-level scene and its rendered dataset.
    Synth(SynthArgs),
    /// Train a model from random initialization on a dataset.
    Train(TrainArgs),
    /// Render one camera of a dataset at one level.
    Render(RenderArgs),
    /// Per-level PSNR and SSIM against a dataset.
    Eval(EvalArgs),
    /// Keep Gaussians near a gaze point, with narrower falloff at higher levels.
    Fovea(FoveaArgs),
    /// Keep Gaussians whose centres fall inside per-view masks.
    Focus(FocusArgs),
    /// Apply a per-level filter preset or JSON recipe.
    Filter(FilterArgs),
    /// Write a viewer bundle: model, manifest, index and JSON dump.
    ExportViewer(ExportArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub levels: u32,
    /// Gaussians per level, comma separated (default 200 each).
    #[arg(long, value_delimiter = ',')]
    pub per_level: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1.0)]
    pub extent: f64,
    #[arg(long, default_value_t = 24)]
    pub cameras: usize,
    /// Camera distance in multiples of the extent.
    #[arg(long, default_value_t = 3.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 128)]
    pub resolution: usize,
    /// Focal length in multiples of the image width.
    #[arg(long, default_value_t = 1.1)]
    pub focal_factor: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    /// Dataset directory or manifest file.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for model.fags, metrics.csv and config.txt.
    #[arg(long)]
    pub out: PathBuf,
    /// `key = value` config file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from the scaled-down benchmark defaults.
    #[arg(long)]
    pub benchmark: bool,
}

#[derive(Args, Debug, Serialize, Clone)]
pub struct ColorArgs {
    /// Scale opacity by the screen-space anti-aliasing factor.
    #[arg(long)]
    pub aa: bool,
    /// Treat every level's color as plain (residual-color ablation models).
    #[arg(long)]
    pub plain: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct RenderArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Index into the manifest camera list.
    #[arg(long, default_value_t = 0)]
    pub camera: usize,
    /// Accumulated level (default: the model's top level).
    #[arg(long)]
    pub level: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub color: ColorArgs,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Holdout,
    Train,
    All,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Holdout)]
    pub split: Split,
    /// Also write the report CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub color: ColorArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct FoveaArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub camera: usize,
    /// Gaze point `x,y` in pixels (default: image centre).
    #[arg(long, value_delimiter = ',')]
    pub gaze: Option<Vec<f64>>,
    /// Per-level falloff widths in pixels (default: half diagonal, halving per level).
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct FocusArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Directory with one PNG mask per manifest image, same file names.
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long, default_value_t = freqsplat::apps::DEFAULT_FOCUS_RATIO)]
    pub ratio: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct FilterArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// One of brush, xray, sharp.
    #[arg(long, conflicts_with = "recipe", required_unless_present = "recipe")]
    pub preset: Option<String>,
    /// JSON recipe file.
    #[arg(long)]
    pub recipe: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Camera used for the per-level reference renders.
    #[arg(long, default_value_t = 0)]
    pub camera: usize,
}

/// Train flags are generated from the config keys; `deterministic` is the
/// global flag.
fn train_keys() -> Vec<(String, String)> {
    let map = match serde_json::to_value(TrainConfig::default()) {
        Ok(serde_json::Value::Object(m)) => m,
        _ => unreachable!("config serializes to an object"),
    };
    map.into_iter()
        .filter(|(k, _)| k != "deterministic")
        .map(|(k, v)| (k, v.to_string()))
        .collect()
}

fn command() -> clap::Command {
    Cli::command().mut_subcommand("train", |mut c| {
        for (key, default) in train_keys() {
            c = c.arg(
                Arg::new(key.clone())
                    .long(key.replace('_', "-"))
                    .value_name("VALUE")
                    .help(format!("Config key `{key}` (default {default})")),
            );
        }
        c
    })
}

/// Config overrides given as train flags.
fn train_overrides(m: &ArgMatches) -> Vec<(String, String)> {
    let Some(("train", sub)) = m.subcommand() else {
        return Vec::new();
    };
    train_keys()
        .into_iter()
        .filter_map(|(k, _)| sub.get_one::<String>(&k).map(|v| (k, v.clone())))
        .collect()
}

pub enum Failure {
    Input(String),
    Invariant(String),
}

impl From<freqsplat::Error> for Failure {
    fn from(e: freqsplat::Error) -> Self {
        match e {
            freqsplat::Error::NonFiniteLoss { .. } => Failure::Invariant(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    std::panic::set_hook(Box::new(|info| {
        eprintln!("error: internal: {}", one_line(&info.to_string()));
    }));
    let matches = match command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", one_line(first));
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            return ExitCode::from(1);
        }
    };
    let overrides = train_overrides(&matches);
    let run = std::panic::catch_unwind(|| commands::run(&cli, &overrides));
    match run {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failure::Input(msg))) => {
            eprintln!("error: {}", one_line(&msg));
            ExitCode::from(1)
        }
        Ok(Err(Failure::Invariant(msg))) => {
            eprintln!("error: internal: {}", one_line(&msg));
            ExitCode::from(2)
        }
        Err(_) => ExitCode::from(2),
    }
}
