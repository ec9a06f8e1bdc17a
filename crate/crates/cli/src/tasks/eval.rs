//! Pairs prediction and truth files by stem and scores them.
//!
//! - `.png` masks: Dice per image, pixel F1 over the whole set.
//! - `.csv` with header `x,y`: paired points, mean Euclidean distance.
//! - `.csv` with `image,score` (prediction) and `image,label` (truth):
//!   image-level AUC and binary cross entropy.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use fundus_core::evalsuite::{auc_roc, bce, dice, mean_euclidean, Confusion, EvalReport, LabeledScore};
use fundus_core::imageprep::load_png;
use fundus_core::PointSet;

use super::{list, pair, process, write_output, Outcome};
use crate::manifest::{JobManifest, ManifestError};
use crate::summary::RunSummary;

enum Scored {
    Mask { dice: f64, confusion: Confusion },
    Points { total: f64, n: usize },
    Scores(Vec<LabeledScore>),
}

fn headers(path: &Path) -> anyhow::Result<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    Ok(r.headers()?.iter().map(str::to_string).collect())
}

fn read_column<T>(path: &Path, column: &str, parse: impl Fn(&str) -> Option<T>) -> anyhow::Result<BTreeMap<String, T>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let h = r.headers()?.clone();
    let (Some(img), Some(col)) = (h.iter().position(|c| c == "image"), h.iter().position(|c| c == column)) else {
        bail!("{} needs columns image,{column}", path.display());
    };
    let mut out = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let (name, raw) = (rec.get(img).unwrap_or_default(), rec.get(col).unwrap_or_default());
        let v = parse(raw).ok_or_else(|| anyhow!("{}:{line}: bad {column} {raw:?}", path.display()))?;
        if out.insert(name.to_string(), v).is_some() {
            bail!("{}:{line}: {name} listed twice", path.display());
        }
    }
    Ok(out)
}

fn parse_label(s: &str) -> Option<bool> {
    match s {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

fn score_scores(pred: &Path, truth: &Path) -> anyhow::Result<(Outcome, Scored)> {
    let scores = read_column(pred, "score", |s| s.parse::<f64>().ok())?;
    let labels = read_column(truth, "label", parse_label)?;
    let mut joined = Vec::with_capacity(labels.len());
    for (image, &label) in &labels {
        let score = scores.get(image).ok_or_else(|| anyhow!("no score for {image}"))?;
        joined.push(LabeledScore::new(*score, label));
    }
    if let Some(extra) = scores.keys().find(|k| !labels.contains_key(*k)) {
        bail!("no label for {extra}");
    }
    let mut o = Outcome::default().value("bce", bce(&joined)?);
    match auc_roc(&joined) {
        Ok(auc) => o = o.value("auc", auc),
        Err(e) => o.note = Some(format!("no auc: {e}")),
    }
    Ok((o, Scored::Scores(joined)))
}

fn score_pair(pred: &Path, truth: &Path) -> anyhow::Result<(Outcome, Scored)> {
    let ext = |p: &Path| p.extension().and_then(|e| e.to_str()).unwrap_or_default().to_ascii_lowercase();
    if ext(pred) != ext(truth) {
        bail!("prediction and truth file types differ");
    }
    if ext(pred) == "png" {
        let (p, t) = (load_png(pred)?, load_png(truth)?);
        let d = dice(&t, &p)?;
        let confusion = Confusion::from_masks(&t, &p)?;
        return Ok((Outcome::default().value("dice", d), Scored::Mask { dice: d, confusion }));
    }
    let (hp, ht) = (headers(pred)?, headers(truth)?);
    if hp == ["x", "y"] && ht == ["x", "y"] {
        let (p, t) = (PointSet::load(pred)?, PointSet::load(truth)?);
        let ed = mean_euclidean(t.points(), p.points())?;
        return Ok((
            Outcome::default().value("ed", ed),
            Scored::Points {
                total: ed * t.len() as f64,
                n: t.len(),
            },
        ));
    }
    score_scores(pred, truth).context("expected x,y point files or image,score / image,label tables")
}

pub(super) fn run(m: &JobManifest) -> Result<RunSummary, ManifestError> {
    let truth = m.truth.as_ref().expect("validated");
    let suffixes = [".png", ".csv"];
    let items = pair(list(&m.input, &suffixes)?, list(truth, &suffixes)?, "prediction", "truth");
    let results = process(items, |_, (pred, truth)| score_pair(pred, truth));

    let mut dices = Vec::new();
    let mut confusion = Confusion::default();
    let (mut ed_total, mut ed_n) = (0.0, 0);
    let mut scores = Vec::new();
    let mut reports = Vec::new();
    for (report, scored) in results {
        match scored {
            Some(Scored::Mask { dice, confusion: c }) => {
                dices.push(dice);
                confusion += c;
            }
            Some(Scored::Points { total, n }) => {
                ed_total += total;
                ed_n += n;
            }
            Some(Scored::Scores(s)) => scores.extend(s),
            None => {}
        }
        reports.push(report);
    }

    let mut report = EvalReport::default();
    let put = |report: &mut EvalReport, name: &str, v: f64| {
        if let Err(e) = report.insert(name, v) {
            log::warn!("dropping {name}: {e}");
        }
    };
    if !dices.is_empty() {
        put(&mut report, "dice_mean", dices.iter().sum::<f64>() / dices.len() as f64);
        put(&mut report, "f1_pixel", confusion.f1());
        report.count("masks", dices.len());
    }
    if ed_n > 0 {
        put(&mut report, "ed_mean", ed_total / ed_n as f64);
        report.count("points", ed_n);
    }
    if !scores.is_empty() {
        match bce(&scores) {
            Ok(v) => put(&mut report, "bce", v),
            Err(e) => log::warn!("no bce: {e}"),
        }
        match auc_roc(&scores) {
            Ok(v) => put(&mut report, "auc", v),
            Err(e) => log::warn!("no auc: {e}"),
        }
        report.count("scores", scores.len());
    }
    report.count("failed", reports.iter().filter(|r| r.error.is_some()).count());
    write_output(m, "report.json", report.to_json() + "\n")?;
    write_output(m, "report.csv", report.to_csv())?;
    Ok(RunSummary::new(m.task, reports, report.metrics))
}
