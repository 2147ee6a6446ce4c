//! `entangled`: metric evaluation, layer operations, manifest tooling,
//! pipeline runs and sweeps.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 no evaluable records or an
//! unusable manifest, 3 usage or configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use entangled_core::Error;

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_USAGE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "entangled", version, about = "Evaluate selective unlearning and build layered datasets")]
pub struct Cli {
    /// TOML config file [default: $ENTANGLED_CONFIG, else none]
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Parallel workers; 0 means one per logical core
    /// [default: config `workers`, else $ENTANGLED_WORKERS, else 0]
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,

    /// Log progress to stderr; repeat for more detail [default: warnings only]
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score unlearned images against masks (and originals) and write a report
    Eval(EvalArgs),
    /// Crop the masked foreground into an RGBA layer plus a position mask
    Extract(ExtractArgs),
    /// Composite a foreground layer onto a background at its position mask
    Merge(MergeArgs),
    /// Replace the masked region with a constant fill
    Maskout(MaskoutArgs),
    /// Dataset manifest tooling
    #[command(subcommand)]
    Manifest(ManifestCommand),
    /// Dataset construction pipeline
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Mean Entangled per dataset across variant sets or alpha values
    Sweep(SweepArgs),
    /// Generate seeded synthetic fixtures
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct MetricArgs {
    /// Similarity weight in [0, 1] [default: 0.5, or 1 - beta]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Consistency weight; must satisfy alpha + beta = 1 [default: 1 - alpha]
    #[arg(long)]
    pub beta: Option<f64>,
    /// Stabilizing constant in every ratio [default: 1e-6]
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Image the consistency term is measured on in paired mode
    /// (unlearned | original) [default: unlearned]
    #[arg(long, value_name = "SOURCE")]
    pub consistency_source: Option<String>,
    /// Score two flat regions as variance-consistent (V = 1) instead of V = 0
    /// [default: off]
    #[arg(long)]
    pub uniform_flat: bool,
    /// Average channels before scoring [default: off]
    #[arg(long)]
    pub grayscale: bool,
    /// Mask pixels at or above this normalized level are inner [default: 0.5]
    #[arg(long, value_name = "T")]
    pub mask_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Root holding original/, unlearned/ and mask/ [default: none]
    #[arg(long, value_name = "DIR", conflicts_with_all = ["manifest", "unlearned", "original", "masks"])]
    pub pairs: Option<PathBuf>,
    /// Dataset root (manifest.json, original/, background/, mask/); backgrounds
    /// are scored [default: none]
    #[arg(long, value_name = "DIR", conflicts_with_all = ["unlearned", "original", "masks"])]
    pub manifest: Option<PathBuf>,
    /// Directory of unlearned images [default: none]
    #[arg(long, value_name = "DIR", requires = "masks")]
    pub unlearned: Option<PathBuf>,
    /// Directory of masks, matched to images by file stem [default: none]
    #[arg(long, value_name = "DIR", requires = "unlearned")]
    pub masks: Option<PathBuf>,
    /// Directory of originals, needed for paired scores [default: none]
    #[arg(long, value_name = "DIR", requires = "unlearned")]
    pub original: Option<PathBuf>,
    /// paired (Entangled-D and -S), single (Entangled-S only) or both
    /// (Entangled-D where an original exists) [default: both]
    #[arg(long)]
    pub mode: Option<String>,
    #[command(flatten)]
    pub metric: MetricArgs,
    /// JSON report path; a .meta.json sidecar is written next to it
    #[arg(long, value_name = "FILE", default_value = "report.json")]
    pub out: PathBuf,
    /// Also write the per-record CSV projection here [default: none]
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long, value_name = "FILE")]
    pub image: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub mask: PathBuf,
    /// Output RGBA layer (bounding-box crop of the masked region)
    #[arg(long, value_name = "FILE")]
    pub layer: PathBuf,
    /// Output full-canvas position mask [default: none]
    #[arg(long, value_name = "FILE")]
    pub position: Option<PathBuf>,
    /// Mask binarization threshold [default: 0.5]
    #[arg(long, value_name = "T")]
    pub mask_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[arg(long, value_name = "FILE")]
    pub background: PathBuf,
    /// RGBA foreground layer
    #[arg(long, value_name = "FILE")]
    pub layer: PathBuf,
    /// Full-canvas position mask; its bounding box places the layer
    #[arg(long, value_name = "FILE")]
    pub position: PathBuf,
    /// Feather radius in pixels; 0 is a hard composite [default: 2]
    #[arg(long, value_name = "PX")]
    pub feather: Option<usize>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Position mask binarization threshold [default: 0.5]
    #[arg(long, value_name = "T")]
    pub mask_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MaskoutArgs {
    #[arg(long, value_name = "FILE")]
    pub image: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub mask: PathBuf,
    /// Normalized value written into the masked region [default: 0.0]
    #[arg(long, value_name = "V")]
    pub fill: Option<f64>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Mask binarization threshold [default: 0.5]
    #[arg(long, value_name = "T")]
    pub mask_threshold: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum ManifestCommand {
    /// Check manifest structure and record completeness
    Validate {
        /// Dataset root containing manifest.json
        root: PathBuf,
    },
    /// Print images, selected count and success rate
    Stats {
        root: PathBuf,
        /// Dataset name to print [default: the manifest's dataset name]
        #[arg(long)]
        name: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum PipelineCommand {
    /// Process every pending record under a dataset root
    Run(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Dataset root with manifest.json and original/
    pub root: PathBuf,
    /// mock, mock:<script.json> or an http(s) base URL [default: mock]
    #[arg(long, value_name = "BACKEND")]
    pub backend: Option<String>,
    /// Per-request timeout for remote backends, seconds [default: 120]
    #[arg(long, value_name = "SECS")]
    pub timeout: Option<u64>,
    /// Entangled-S acceptance threshold for reconstructed backgrounds [default: 0.7]
    #[arg(long, value_name = "T")]
    pub threshold: Option<f64>,
    /// Inpainting passes per record, including the first [default: 2]
    #[arg(long, value_name = "N")]
    pub max_passes: Option<usize>,
    /// Validate at most this many top-scored candidates [default: all]
    #[arg(long, value_name = "N")]
    pub max_candidates: Option<usize>,
    /// Grow the selected mask by this many pixels before inpainting [default: 0]
    #[arg(long, value_name = "PX")]
    pub dilate: Option<usize>,
    /// Do not refine the prompt between passes; low scorers go to manual review
    /// [default: refine]
    #[arg(long)]
    pub no_refine: bool,
    /// Inpainting prompt; {category} is replaced by the target
    /// [default: "empty background without a {category}"]
    #[arg(long, value_name = "TEXT")]
    pub inpaint_prompt: Option<String>,
    /// Reprocess records that already have a status [default: off]
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Reference dataset root (manifest.json, original/, mask/); repeatable
    /// [default: none]
    #[arg(long, value_name = "DIR", conflicts_with_all = ["alphas"])]
    pub reference: Vec<PathBuf>,
    /// Variant image set as LABEL=DIR; repeatable, in column order [default: none]
    #[arg(long, value_name = "LABEL=DIR", requires = "reference")]
    pub variant: Vec<String>,
    /// Axis name recorded in the report [default: variant, or alpha with --alphas]
    #[arg(long)]
    pub axis: Option<String>,
    /// Comma-separated alpha values to re-weight one evaluation with [default: none]
    #[arg(long, value_name = "A,B,..", value_delimiter = ',', requires = "pairs")]
    pub alphas: Vec<f64>,
    /// Pairs root for --alphas [default: none]
    #[arg(long, value_name = "DIR")]
    pub pairs: Option<PathBuf>,
    /// Dataset label for --alphas [default: the pairs directory name]
    #[arg(long)]
    pub dataset: Option<String>,
    #[command(flatten)]
    pub metric: MetricArgs,
    #[arg(long, value_name = "FILE", default_value = "sweep.json")]
    pub out: PathBuf,
    /// Also write the dataset x label CSV here [default: none]
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// pairs (original/, unlearned/, mask/) or pipeline (manifest.json + original/)
    pub kind: String,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Number of records [default: 8]
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    /// Image side length in pixels [default: 64]
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Generator seed [default: 0]
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset name for pipeline fixtures [default: synthetic]
    #[arg(long, default_value = "synthetic")]
    pub dataset: String,
    /// Dataset prompt for pipeline fixtures [default: <object>]
    #[arg(long, default_value = "<object>")]
    pub prompt: String,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidWeights(_) => EXIT_USAGE,
        Error::NoEvaluableRecords { .. } | Error::MissingManifest(_) | Error::MalformedManifest { .. } => EXIT_DATA,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                Error::MalformedManifest { path, reason } => {
                    eprintln!("error: malformed manifest {}", path.display());
                    for line in reason.split("; ") {
                        eprintln!("  {line}");
                    }
                }
                _ => eprintln!("error: {e}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
