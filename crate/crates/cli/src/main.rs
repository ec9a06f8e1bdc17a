use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fundus_cli::{run, JobManifest, Params, Task, EXIT_BAD_MANIFEST};

#[derive(Parser)]
#[command(name = "fundus", version, about = "Fundus image geometry, losses, masks and metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a JSON job manifest.
    Run {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Center-crop and resize PNG images; writes PNG, float raster and frame files.
    Prep(Job),
    /// Fit polar contour models to binary PNG masks.
    FitContour(Job),
    /// Rasterize contour models into masks.
    Rasterize(Job),
    /// Encode centers from an `image,x,y` CSV into grid rasters.
    EncodeGrid(Job),
    /// Decode grid rasters back into a centers CSV.
    DecodeGrid(Job),
    /// Boundary loss between predicted and true contour models.
    BoundaryLoss(Job),
    /// Fit contour models to point lists by gradient descent.
    FitDescent(Job),
    /// Detachment masks from an `image,score,height,width` CSV.
    DetachMask(Job),
    /// Merge original and flipped probability maps into masks.
    TtaMerge(Job),
    /// Score predictions against ground truth.
    Eval(Job),
}

#[derive(Args)]
struct Job {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    flipped: Option<PathBuf>,
    #[arg(long)]
    frames: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    n: u32,
    #[arg(long, default_value_t = 72)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    grid: usize,
    #[arg(long, default_value_t = 299)]
    frame: usize,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Output mask height for rasterize.
    #[arg(long, default_value_t = 224)]
    height: usize,
    /// Output mask width for rasterize.
    #[arg(long, default_value_t = 224)]
    width: usize,
    #[arg(long, default_value_t = 1e-3)]
    rate: f64,
    #[arg(long, default_value_t = 5000)]
    steps: usize,
    #[arg(long)]
    freeze_center: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl Job {
    fn into_manifest(self, task: Task) -> JobManifest {
        JobManifest {
            task,
            input: self.input,
            truth: self.truth,
            flipped: self.flipped,
            frames: self.frames,
            output: self.output,
            params: Params {
                n: self.n,
                k: self.k,
                grid: self.grid,
                frame: self.frame,
                threshold: self.threshold,
                height: self.height,
                width: self.width,
                rate: self.rate,
                steps: self.steps,
                freeze_center: self.freeze_center,
                workers: self.workers,
            },
        }
    }
}

fn manifest(command: Command) -> Result<JobManifest, fundus_cli::ManifestError> {
    let (task, job) = match command {
        Command::Run { manifest } => return JobManifest::load(manifest),
        Command::Prep(j) => (Task::Prep, j),
        Command::FitContour(j) => (Task::FitContour, j),
        Command::Rasterize(j) => (Task::Rasterize, j),
        Command::EncodeGrid(j) => (Task::EncodeGrid, j),
        Command::DecodeGrid(j) => (Task::DecodeGrid, j),
        Command::BoundaryLoss(j) => (Task::BoundaryLoss, j),
        Command::FitDescent(j) => (Task::FitDescent, j),
        Command::DetachMask(j) => (Task::DetachMask, j),
        Command::TtaMerge(j) => (Task::TtaMerge, j),
        Command::Eval(j) => (Task::Eval, j),
    };
    Ok(job.into_manifest(task))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let summary = manifest(cli.command).and_then(|m| run(&m));
    match summary {
        Ok(s) => {
            for line in s.lines() {
                println!("{line}");
            }
            ExitCode::from(s.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_BAD_MANIFEST as u8)
        }
    }
}
