//! `fundus-eval` command-line entry point.
//!
//! Exit codes: 0 success, 1 validation error, 2 I/O error, 64 usage error.
//! Diagnostics go to standard error; everything else is written to files.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fundus_eval::synth::Preset;
use fundus_eval::GradingSystem;

#[derive(Debug, Parser)]
#[command(name = "fundus-eval", version, about = "Diabetic retinopathy screening evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Patient-exclusive stratified split into train/tune/validation sets
    Split(SplitArgs),
    /// Crop the fundus disk and resize to square PNGs
    Preprocess(PreprocessArgs),
    /// Evaluate scores against a split
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Generate synthetic manifests, scores and images
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Re-render stored JSON reports
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct ManifestArgs {
    /// Manifest CSV (image_id,patient_id,eye,field,gradable,pirc,pimec[,disagreement])
    #[arg(long)]
    manifest: PathBuf,
    /// Skip rows with a nonempty disagreement cell
    #[arg(long)]
    drop_flagged: bool,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[command(flatten)]
    manifest: ManifestArgs,
    #[arg(long, value_parser = parse_system)]
    system: GradingSystem,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train, tune and validation image fractions
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.7, 0.1, 0.2])]
    fractions: Vec<f64>,
    /// Largest allowed pairwise gap in per-class proportions
    #[arg(long, default_value_t = 0.015)]
    tolerance: f64,
    /// Split CSV; the distribution table is written next to it
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[command(flatten)]
    manifest: ManifestArgs,
    /// Directory holding <image_id>.{png,jpg,jpeg}
    #[arg(long)]
    images: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [256, 299, 512, 1024, 2095])]
    sizes: Vec<u32>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Operating point on the tuning set, metrics with CIs on validation
    Binary(BinaryArgs),
    /// Macro AUC, confusion matrix, accuracy and kappa on validation
    Multi(MultiArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CiMethod {
    Proportion,
    Bootstrap,
}

#[derive(Debug, Args)]
struct EvalInputs {
    #[arg(long, value_parser = parse_system)]
    system: GradingSystem,
    /// Scores CSV (image_id,p0,...,p{K-1})
    #[arg(long)]
    scores: PathBuf,
    /// Split CSV (image_id,set)
    #[arg(long)]
    split: PathBuf,
    #[command(flatten)]
    manifest: ManifestArgs,
    /// Tag used in report file names, usually the input image side
    #[arg(long, default_value = "2095")]
    input_size: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct BinaryArgs {
    #[command(flatten)]
    inputs: EvalInputs,
    #[arg(long, conflicts_with = "target_spec")]
    target_sens: Option<f64>,
    #[arg(long)]
    target_spec: Option<f64>,
    #[arg(long, value_enum, default_value_t = CiMethod::Proportion)]
    ci_method: CiMethod,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 2000)]
    replicates: usize,
    /// Bootstrap seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct MultiArgs {
    #[command(flatten)]
    inputs: EvalInputs,
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    /// Synthetic population manifest with Table 1 class marginals
    Manifest(SynthManifestArgs),
    /// Synthetic scores for the records of a manifest
    Scores(SynthScoresArgs),
    /// Synthetic fundus photographs, one per manifest record
    Images(SynthImagesArgs),
}

#[derive(Debug, Args)]
struct SynthManifestArgs {
    #[arg(long, value_parser = parse_preset, default_value = "table1-rdr")]
    preset: Preset,
    #[arg(long, default_value_t = 14624)]
    patients: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthScoresArgs {
    #[command(flatten)]
    manifest: ManifestArgs,
    #[arg(long, value_parser = parse_system)]
    system: GradingSystem,
    /// Binormal scores with this expected AUC (binary systems)
    #[arg(long, conflicts_with = "quality", required_unless_present = "quality")]
    target_auc: Option<f64>,
    /// Ordinal model separation; 0 gives uniform probabilities
    #[arg(long)]
    quality: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthImagesArgs {
    #[command(flatten)]
    manifest: ManifestArgs,
    #[arg(long, default_value_t = 640)]
    width: u32,
    #[arg(long, default_value_t = 480)]
    height: u32,
    /// Disk radius as a fraction of the shorter side
    #[arg(long, default_value_t = 0.4)]
    radius: f64,
    /// Leave out the corner annotation block
    #[arg(long)]
    no_annotation: bool,
    /// Generate only the first N records
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// JSON reports, or directories searched for *.json
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_system(s: &str) -> Result<GradingSystem, String> {
    s.parse().map_err(|e: fundus_eval::GradingError| e.to_string())
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: fundus_eval::SynthError| e.to_string())
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("FUNDUS_EVAL_LOG", "warn");
    env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .format_target(false)
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
