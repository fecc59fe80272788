use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(
    name = "mvinpaint",
    version,
    about = "Reference-based multiview inpainting toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lift a depth map to a mesh and extrude its shadow volume.
    Mesh(MeshArgs),
    /// Render the cue sets references contribute to a target view.
    Cues(CuesArgs),
    /// Fuse per-reference estimates through the confidence hierarchy.
    Fuse(FuseArgs),
    /// Build the two-stage inpainting plan for a scene.
    Plan(PlanArgs),
    /// Synthesize training samples from images with depth.
    Synth(SynthArgs),
    /// Inpaint a whole scene.
    Run(RunArgs),
}

#[derive(Args, Debug)]
struct MeshArgs {
    /// Depth map (PFM).
    #[arg(long)]
    depth: PathBuf,
    /// Camera JSON.
    #[arg(long)]
    camera: PathBuf,
    /// Vertex colors (PNG); gray when omitted.
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long, default_value_t = mvinpaint::mesh::DEFAULT_EPS_EDGE)]
    eps_edge: f64,
    /// Shadow wall length; defaults to a multiple of the mesh extent.
    #[arg(long)]
    eps_d: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CuesArgs {
    /// Scene manifest JSON.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    target: usize,
    /// Reference views; all other views when omitted.
    #[arg(long, value_delimiter = ',')]
    refs: Vec<usize>,
    /// View whose image is attached as the hint.
    #[arg(long)]
    hint: Option<usize>,
    #[arg(long, default_value_t = mvinpaint::mesh::DEFAULT_EPS_EDGE)]
    eps_edge: f64,
    #[arg(long)]
    eps_d: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FuseArgs {
    /// Directory with `distances.json` and one `<ref>/` directory per reference.
    #[arg(long)]
    dir: PathBuf,
    /// Channels stacked in each `estimate.pfm`.
    #[arg(long, default_value_t = 4)]
    channels: usize,
    /// Binarization threshold for confidence images.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Narrow,
    Wide,
}

#[derive(Args, Debug)]
struct PlanOptions {
    /// First view; drawn from the seed when omitted.
    #[arg(long)]
    start: Option<usize>,
    /// Wide-baseline subset size; ceil(N/4) clamped to [3, N] when omitted.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_enum, default_value_t = Mode::Wide)]
    mode: Mode,
    /// Maximum references per target.
    #[arg(long, default_value_t = mvinpaint::schedule::DEFAULT_MAX_REFERENCES)]
    max_refs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[arg(long)]
    scene: PathBuf,
    #[command(flatten)]
    plan: PlanOptions,
    /// Output plan JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OccluderMode {
    Object,
    Scene,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Directory of PNG images.
    #[arg(long)]
    images: PathBuf,
    /// Directory of PFM depth maps named after the images.
    #[arg(long)]
    depths: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = OccluderMode::Object)]
    mode: OccluderMode,
    /// Synthesis parameters as JSON; `--seed` and `--mode` still apply.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Estimator {
    /// Use the geometry listed in the manifest.
    Gt,
    /// Read geometry from `--geometry DIR`.
    File,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StubKind {
    CopyConfident,
    ConstantFill,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    plan_options: PlanOptions,
    /// Precomputed plan JSON.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Estimator::Gt)]
    estimator: Estimator,
    #[arg(long)]
    geometry: Option<PathBuf>,
    /// Relative depth noise added by the ground-truth estimator.
    #[arg(long, default_value_t = 0.0)]
    perturb: f64,
    #[arg(long, value_enum, default_value_t = StubKind::CopyConfident)]
    stub: StubKind,
    /// Fill color for the stub denoiser, as `r,g,b` in [0, 1].
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.5, 0.5, 0.5])]
    fill: Vec<f64>,
    /// External denoiser executable, called with a request directory.
    #[arg(long)]
    denoiser_exec: Option<PathBuf>,
    #[arg(long, default_value_t = mvinpaint::mesh::DEFAULT_EPS_EDGE)]
    eps_edge: f64,
    #[arg(long)]
    eps_d: Option<f64>,
    /// Worker threads for the propagation stage.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Record wall-clock timings in the report.
    #[arg(long)]
    timings: bool,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<mvinpaint::Error>() {
        Some(e) if e.is_input_error() => 2,
        Some(_) => 1,
        None if err.downcast_ref::<commands::UsageError>().is_some() => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MVS_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Mesh(a) => commands::mesh(a),
        Command::Cues(a) => commands::cues(a),
        Command::Fuse(a) => commands::fuse(a),
        Command::Plan(a) => commands::plan(a),
        Command::Synth(a) => commands::synth(a),
        Command::Run(a) => commands::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
