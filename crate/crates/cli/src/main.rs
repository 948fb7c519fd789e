//! `ddt`: co-localize objects across a descriptor set, score the result,
//! draw it, and generate synthetic sets with known answers.

mod commands;
mod font;
mod viz;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "ddt", version, about = "Deep descriptor transforming co-localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Localize the common object in every image of a descriptor set.
    Run(RunArgs),
    /// CorLoc (and ROC when noisy images are annotated) against ground truth.
    Eval(EvalArgs),
    /// ROC curve and AUC of the noise scores.
    Roc(RocArgs),
    /// Draw predicted boxes or indicator-map heatmaps onto the images.
    Viz(VizArgs),
    /// Write a synthetic descriptor set with planted objects.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Ddt,
    Scda,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Directory holding the .ddtd files.
    #[arg(long)]
    descriptors: PathBuf,
    /// Tab-separated id/file list [default: <descriptors>/manifest.tsv]
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ddt")]
    method: MethodArg,
    /// Number of components to compute; boxes always come from the first.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    components: u32,
    #[arg(long, short)]
    output: PathBuf,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Keep going when the leading eigenvalues are not separated.
    #[arg(long)]
    allow_degenerate: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// Write the full report here as JSON.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RocArgs {
    #[arg(long)]
    results: PathBuf,
    /// JSON object mapping image id to "noisy" or "clean".
    #[arg(long, required_unless_present = "annotations", conflicts_with = "annotations")]
    labels: Option<PathBuf>,
    /// Take labels from annotations instead (no boxes = noisy).
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Use positive-cell fractions instead of counts.
    #[arg(long)]
    normalized: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum VizMode {
    Boxes,
    Heatmap,
}

#[derive(Args, Debug)]
struct VizArgs {
    #[arg(long)]
    results: PathBuf,
    /// Directory with <image_id>.png / .jpg files.
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "boxes")]
    mode: VizMode,
    /// Indicator map to draw in heatmap mode (1-based).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    component: u32,
    /// Heatmap opacity.
    #[arg(long, default_value_t = 0.5)]
    alpha: f32,
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    n_images: usize,
    #[arg(long, default_value_t = 30)]
    grid_h: usize,
    #[arg(long, default_value_t = 30)]
    grid_w: usize,
    #[arg(long, default_value_t = 64)]
    d: usize,
    /// Pixels per grid cell.
    #[arg(long, default_value_t = 8)]
    image_scale: usize,
    /// Background level σ_b.
    #[arg(long, default_value_t = 1.0)]
    noise_sigma: f64,
    /// Planted signal strength s.
    #[arg(long, default_value_t = 5.0)]
    signal_strength: f64,
    #[arg(long, default_value_t = 0)]
    n_noisy: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed of the shared signal direction [default: --seed]
    #[arg(long)]
    direction_seed: Option<u64>,
    #[arg(long, default_value_t = 0.10)]
    min_cover: f64,
    #[arg(long, default_value_t = 0.30)]
    max_cover: f64,
    #[arg(long, default_value_t = 0.125)]
    support_fraction: f64,
    /// Add a per-image distractor region of this strength.
    #[arg(long)]
    distractor_strength: Option<f64>,
    /// Split each object into halves along a second direction.
    #[arg(long)]
    part_strength: Option<f64>,
    /// Planted cell rectangle "row0,col0,row1,col1", one per clean image.
    #[arg(long, value_parser = commands::parse_cell_rect)]
    planted: Vec<ddt_core::synth::CellRect>,
    /// Also write a grayscale PNG per image into <out>/images.
    #[arg(long)]
    render_images: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Eval(a) => commands::eval(a),
        Command::Roc(a) => commands::roc(a),
        Command::Viz(a) => viz::viz(a),
        Command::Synth(a) => commands::synth(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
