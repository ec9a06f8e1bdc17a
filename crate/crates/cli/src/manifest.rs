//! Job manifests: which task to run, on which files, with which parameters.

use std::fs;
use std::path::{Path, PathBuf};

use fundus_core::imageprep::{NORMALIZED_SIZE, ROI_SIZE};
use fundus_core::lesionmasks::DETACHMENT_THRESHOLD;
use fundus_core::polarcontour::{DEFAULT_K, DEFAULT_N};
use fundus_core::gridloc::DEFAULT_GRID;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Prep,
    FitContour,
    Rasterize,
    EncodeGrid,
    DecodeGrid,
    BoundaryLoss,
    FitDescent,
    DetachMask,
    TtaMerge,
    Eval,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Prep => "prep",
            Task::FitContour => "fit-contour",
            Task::Rasterize => "rasterize",
            Task::EncodeGrid => "encode-grid",
            Task::DecodeGrid => "decode-grid",
            Task::BoundaryLoss => "boundary-loss",
            Task::FitDescent => "fit-descent",
            Task::DetachMask => "detach-mask",
            Task::TtaMerge => "tta-merge",
            Task::Eval => "eval",
        }
    }
}

/// Tunable parameters; every field has a default so manifests can omit them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Polynomial degree of the contour basis.
    pub n: u32,
    /// Number of reconstruction / loss angles.
    pub k: usize,
    /// Grid cells per side.
    pub grid: usize,
    /// Side of the normalized square frame.
    pub frame: usize,
    /// Detachment score threshold.
    pub threshold: f64,
    /// Output mask size for `rasterize`.
    pub height: usize,
    pub width: usize,
    /// Gradient descent settings for `fit-descent`.
    pub rate: f64,
    pub steps: usize,
    pub freeze_center: bool,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            n: DEFAULT_N,
            k: DEFAULT_K,
            grid: DEFAULT_GRID,
            frame: NORMALIZED_SIZE,
            threshold: DETACHMENT_THRESHOLD,
            height: ROI_SIZE,
            width: ROI_SIZE,
            rate: 1e-3,
            steps: 5000,
            freeze_center: false,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobManifest {
    pub task: Task,
    /// Input file or directory. For `eval` and `boundary-loss` these are the
    /// predictions; for `tta-merge` the maps predicted on the original images.
    pub input: PathBuf,
    /// Ground truth directory (`eval`, `boundary-loss`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    /// Maps predicted on flipped images (`tta-merge`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flipped: Option<PathBuf>,
    /// Frame files written by `prep`, used to map masks back (`tta-merge`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<PathBuf>,
    pub output: PathBuf,
    #[serde(default)]
    pub params: Params,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid manifest {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{0} does not exist")]
    Missing(PathBuf),
    #[error("task {task} needs `{field}`")]
    Required { task: &'static str, field: &'static str },
    #[error("parameter {name} = {value} outside {range}")]
    Range { name: &'static str, value: String, range: &'static str },
    #[error("output directory {0} is also an input")]
    OutputIsInput(PathBuf),
    #[error("cannot create output directory {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error("cannot list {path}: {source}")]
    List { path: PathBuf, source: std::io::Error },
}

fn check_range<T: PartialOrd + ToString>(name: &'static str, value: T, lo: T, hi: T, range: &'static str) -> Result<(), ManifestError> {
    if value < lo || value > hi {
        return Err(ManifestError::Range {
            name,
            value: value.to_string(),
            range,
        });
    }
    Ok(())
}

impl Params {
    pub fn validate(&self) -> Result<(), ManifestError> {
        check_range("n", self.n, 1, 12, "[1, 12]")?;
        check_range("k", self.k, 3, 100_000, "[3, 100000]")?;
        check_range("frame", self.frame, 2, 100_000, "[2, 100000]")?;
        check_range("grid", self.grid, 1, self.frame, "[1, frame]")?;
        check_range("height", self.height, 1, 100_000, "[1, 100000]")?;
        check_range("width", self.width, 1, 100_000, "[1, 100000]")?;
        check_range("steps", self.steps, 1, 10_000_000, "[1, 10000000]")?;
        check_range("workers", self.workers, 0, 1024, "[0, 1024]")?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ManifestError::Range {
                name: "threshold",
                value: self.threshold.to_string(),
                range: "[0, 1]",
            });
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(ManifestError::Range {
                name: "rate",
                value: self.rate.to_string(),
                range: "(0, inf)",
            });
        }
        Ok(())
    }
}

impl JobManifest {
    pub fn new(task: Task, input: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        Self {
            task,
            input: input.into(),
            truth: None,
            flipped: None,
            frames: None,
            output: output.into(),
            params: Params::default(),
        }
    }

    /// Reads a manifest; relative paths are taken relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ManifestError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut m: JobManifest = serde_json::from_str(&text).map_err(|source| ManifestError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut m.input);
        rebase(&mut m.output);
        for p in [&mut m.truth, &mut m.flipped, &mut m.frames].into_iter().flatten() {
            rebase(p);
        }
        Ok(m)
    }

    fn inputs(&self) -> impl Iterator<Item = &PathBuf> {
        std::iter::once(&self.input).chain(self.truth.iter()).chain(self.flipped.iter()).chain(self.frames.iter())
    }

    /// Checks parameters, required fields and that every input exists.
    pub fn validate(&self) -> Result<(), ManifestError> {
        self.params.validate()?;
        let task = self.task.name();
        match self.task {
            Task::Eval | Task::BoundaryLoss if self.truth.is_none() => {
                return Err(ManifestError::Required { task, field: "truth" });
            }
            Task::TtaMerge if self.flipped.is_none() => {
                return Err(ManifestError::Required { task, field: "flipped" });
            }
            _ => {}
        }
        for p in self.inputs() {
            if !p.exists() {
                return Err(ManifestError::Missing(p.clone()));
            }
        }
        if let Ok(out) = self.output.canonicalize() {
            for p in self.inputs() {
                if p.canonicalize().is_ok_and(|p| p == out) {
                    return Err(ManifestError::OutputIsInput(self.output.clone()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_kebab_task_names() {
        let m: JobManifest = serde_json::from_str(r#"{"task":"fit-contour","input":"a","output":"b"}"#).unwrap();
        assert_eq!(m.task, Task::FitContour);
        assert_eq!(m.params, Params::default());
        assert_eq!((m.params.n, m.params.k, m.params.grid, m.params.frame), (5, 72, 10, 299));
        let text = serde_json::to_string(&Task::TtaMerge).unwrap();
        assert_eq!(text, "\"tta-merge\"");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r: Result<JobManifest, _> = serde_json::from_str(r#"{"task":"eval","input":"a","output":"b","nope":1}"#);
        assert!(r.is_err());
        let r: Result<JobManifest, _> = serde_json::from_str(r#"{"task":"eval","input":"a","output":"b","params":{"kk":1}}"#);
        assert!(r.is_err());
    }

    #[test]
    fn parameter_ranges() {
        let ok = Params::default();
        assert!(ok.validate().is_ok());
        for bad in [
            Params { n: 0, ..ok.clone() },
            Params { k: 2, ..ok.clone() },
            Params { grid: 300, ..ok.clone() },
            Params { threshold: 1.5, ..ok.clone() },
            Params { rate: f64::NAN, ..ok.clone() },
            Params { rate: 0.0, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(ManifestError::Range { .. })), "{bad:?}");
        }
    }

    #[test]
    fn validation_checks_paths_and_required_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let m = JobManifest::new(Task::Eval, dir.path(), dir.path().join("out"));
        assert!(matches!(m.validate(), Err(ManifestError::Required { field: "truth", .. })));
        let mut m = JobManifest::new(Task::Prep, dir.path().join("missing"), dir.path().join("out"));
        assert!(matches!(m.validate(), Err(ManifestError::Missing(_))));
        m.input = dir.path().to_path_buf();
        assert!(m.validate().is_ok());
        m.output = dir.path().to_path_buf();
        assert!(matches!(m.validate(), Err(ManifestError::OutputIsInput(_))));
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("job.json");
        fs::write(&path, r#"{"task":"eval","input":"pred","truth":"/abs/truth","output":"out"}"#).unwrap();
        let m = JobManifest::load(&path).unwrap();
        assert_eq!(m.input, dir.path().join("pred"));
        assert_eq!(m.output, dir.path().join("out"));
        assert_eq!(m.truth.as_deref(), Some(Path::new("/abs/truth")));
    }
}
