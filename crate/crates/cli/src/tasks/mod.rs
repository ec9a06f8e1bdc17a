mod contour;
mod eval;
mod grid;
mod masks;
mod prep;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::manifest::{JobManifest, ManifestError, Task};
use crate::summary::{FileReport, FileStatus, RunSummary};

pub use prep::FrameFile;

/// Inputs for one unit of work; `Err` marks an item that failed before
/// processing started (duplicate name, unpaired file, bad CSV row).
pub(crate) type Items<T> = Vec<(String, Result<T, String>)>;

/// What a successfully processed item reports in the summary.
#[derive(Debug, Default)]
pub(crate) struct Outcome {
    pub values: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
    pub note: Option<String>,
}

impl Outcome {
    pub fn value(mut self, name: &str, v: f64) -> Self {
        self.values.insert(name.to_string(), v);
        self
    }

    pub fn output(mut self, name: impl Into<String>) -> Self {
        self.outputs.push(name.into());
        self
    }
}

pub(crate) fn dispatch(m: &JobManifest) -> Result<RunSummary, ManifestError> {
    match m.task {
        Task::Prep => prep::run(m),
        Task::FitContour => contour::fit(m),
        Task::Rasterize => contour::rasterize(m),
        Task::BoundaryLoss => contour::boundary_loss(m),
        Task::FitDescent => contour::fit_descent(m),
        Task::EncodeGrid => grid::encode(m),
        Task::DecodeGrid => grid::decode(m),
        Task::DetachMask => masks::detach(m),
        Task::TtaMerge => masks::tta_merge(m),
        Task::Eval => eval::run(m),
    }
}

/// File name up to its first dot: `a.contour.json` has stem `a`.
pub(crate) fn stem(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    let stem = name.split('.').next()?;
    (!stem.is_empty()).then(|| stem.to_string())
}

/// Files under `input` whose names end with one of `suffixes`, keyed by
/// stem. A single file is taken as is. Stems claimed twice are errors.
pub(crate) fn list(input: &Path, suffixes: &[&str]) -> Result<Items<PathBuf>, ManifestError> {
    let mut paths = Vec::new();
    if input.is_file() {
        paths.push(input.to_path_buf());
    } else {
        let entries = fs::read_dir(input).map_err(|source| ManifestError::List {
            path: input.to_path_buf(),
            source,
        })?;
        for entry in entries {
            let path = entry
                .map_err(|source| ManifestError::List {
                    path: input.to_path_buf(),
                    source,
                })?
                .path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            if path.is_file() && !name.starts_with('.') && suffixes.iter().any(|s| name.ends_with(s)) {
                paths.push(path);
            }
        }
    }
    paths.sort();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let keyed: Vec<(String, PathBuf)> = paths
        .into_iter()
        .filter_map(|p| stem(&p).map(|s| (s, p)))
        .inspect(|(s, _)| *seen.entry(s.clone()).or_default() += 1)
        .collect();
    Ok(keyed
        .into_iter()
        .map(|(s, p)| {
            let n = seen[&s];
            if n > 1 {
                let msg = format!("{n} input files share the name {s}");
                (format!("{s} [{}]", p.file_name().unwrap_or_default().to_string_lossy()), Err(msg))
            } else {
                (s, Ok(p))
            }
        })
        .collect())
}

/// Joins two item lists by name; names present on one side only fail.
pub(crate) fn pair<A, B>(left: Items<A>, right: Items<B>, left_label: &str, right_label: &str) -> Items<(A, B)> {
    let mut right: BTreeMap<String, Result<B, String>> = right.into_iter().collect();
    let mut out: Items<(A, B)> = Vec::new();
    let mut names = BTreeSet::new();
    for (name, a) in left {
        names.insert(name.clone());
        let joined = match (a, right.remove(&name)) {
            (Ok(a), Some(Ok(b))) => Ok((a, b)),
            (Err(e), _) | (_, Some(Err(e))) => Err(e),
            (Ok(_), None) => Err(format!("no matching {right_label} file")),
        };
        out.push((name, joined));
    }
    for (name, _) in right {
        if !names.contains(&name) {
            out.push((name, Err(format!("no matching {left_label} file"))));
        }
    }
    out
}

/// Rejects names that could escape the output directory.
pub(crate) fn check_name(name: &str) -> Result<(), String> {
    let bad = name.is_empty()
        || name.starts_with('.')
        || name.contains(['/', '\\', '\0'])
        || name.chars().any(char::is_control);
    if bad {
        return Err(format!("invalid image name {name:?}"));
    }
    Ok(())
}

/// Runs `f` over every item in parallel. Results keep the item order.
pub(crate) fn process<I, T, F>(items: Items<I>, f: F) -> Vec<(FileReport, Option<T>)>
where
    I: Send + Sync,
    T: Send,
    F: Fn(&str, &I) -> anyhow::Result<(Outcome, T)> + Sync + Send,
{
    items
        .into_par_iter()
        .map(|(name, item)| {
            let result = item.map_err(anyhow::Error::msg).and_then(|item| f(&name, &item));
            match result {
                Ok((o, payload)) => (
                    FileReport {
                        name,
                        status: FileStatus::Ok,
                        error: None,
                        note: o.note,
                        values: o.values,
                        outputs: o.outputs,
                    },
                    Some(payload),
                ),
                Err(e) => (FileReport::failed(name, format!("{e:#}")), None),
            }
        })
        .collect()
}

/// Summary for tasks without run-level aggregates.
pub(crate) fn plain<I, F>(task: Task, items: Items<I>, f: F) -> RunSummary
where
    I: Send + Sync,
    F: Fn(&str, &I) -> anyhow::Result<Outcome> + Sync + Send,
{
    let results = process(items, |name, item| f(name, item).map(|o| (o, ())));
    RunSummary::new(task, results.into_iter().map(|(r, _)| r).collect(), BTreeMap::new())
}

pub(crate) fn write_output(m: &JobManifest, name: &str, contents: impl AsRef<[u8]>) -> Result<(), ManifestError> {
    let path = m.output.join(name);
    fs::write(&path, contents).map_err(|source| ManifestError::Output { path, source })
}

/// Full-precision CSV cell.
pub(crate) fn cell(v: f64) -> String {
    v.to_string()
}
