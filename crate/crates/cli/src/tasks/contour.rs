use std::collections::BTreeMap;
use std::fs;

use anyhow::{bail, Context};
use fundus_core::boundaryloss::{boundary_loss_parts, fit_by_descent, theta_matrix, DescentConfig, DescentStatus};
use fundus_core::imageprep::{load_png, save_png};
use fundus_core::polarcontour::{
    contour_to_polar, extract_contour, rasterize_contour, reconstruct_contour, residual_sum_squares,
};
use fundus_core::{BasisSpec, ContourModel, PointSet};
use serde::Serialize;

use super::{list, pair, plain, process, write_output, Outcome};
use crate::manifest::{JobManifest, ManifestError};
use crate::summary::RunSummary;

const CONTOUR_SUFFIX: &str = ".contour.json";

fn load_model(path: &std::path::Path) -> anyhow::Result<ContourModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ContourModel::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn save_model(m: &JobManifest, stem: &str, model: &ContourModel) -> anyhow::Result<String> {
    let name = format!("{stem}{CONTOUR_SUFFIX}");
    fs::write(m.output.join(&name), model.to_json() + "\n")?;
    Ok(name)
}

pub(super) fn fit(m: &JobManifest) -> Result<RunSummary, ManifestError> {
    let basis = BasisSpec::new(m.params.n);
    let items = list(&m.input, &[".png"])?;
    Ok(plain(m.task, items, |stem, path| {
        let mask = load_png(path)?;
        let (points, center) = extract_contour(&mask)?;
        let model = ContourModel::fit(&points, center, basis.clone())?;
        let samples = contour_to_polar(&points, center)?;
        let rss = residual_sum_squares(&samples, model.basis(), model.beta());
        let rec = reconstruct_contour(&model, m.params.k)?;
        let contour = save_model(m, stem, &model)?;
        let csv = format!("{stem}.points.csv");
        rec.points.save(m.output.join(&csv))?;
        let mut o = Outcome::default()
            .value("boundary_points", points.len() as f64)
            .value("center_x", center.x)
            .value("center_y", center.y)
            .value("rms_residual", (rss / samples.len() as f64).sqrt())
            .output(contour)
            .output(csv);
        if rec.clamped {
            o.note = Some("negative radii clamped".into());
        }
        Ok(o)
    }))
}

pub(super) fn rasterize(m: &JobManifest) -> Result<RunSummary, ManifestError> {
    let items = list(&m.input, &[CONTOUR_SUFFIX])?;
    Ok(plain(m.task, items, |stem, path| {
        let model = load_model(path)?;
        let rec = reconstruct_contour(&model, m.params.k)?;
        let r = rasterize_contour(&rec.points, m.params.height, m.params.width)?;
        let png = format!("{stem}.png");
        save_png(m.output.join(&png), &r.mask)?;
        let mut o = Outcome::default().value("area", r.mask.foreground_count() as f64).output(png);
        o.note = match (r.degenerate, rec.clamped) {
            (true, _) => Some("degenerate contour".into()),
            (false, true) => Some("negative radii clamped".into()),
            _ => None,
        };
        Ok(o)
    }))
}

#[derive(Serialize)]
struct LossRow {
    f1: f64,
    f2: f64,
    loss: f64,
}

#[derive(Serialize)]
struct LossFile {
    pairs: BTreeMap<String, LossRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_loss: Option<f64>,
}

pub(super) fn boundary_loss(m: &JobManifest) -> Result<RunSummary, ManifestError> {
    let truth = m.truth.as_ref().expect("validated");
    let items = pair(
        list(&m.input, &[CONTOUR_SUFFIX])?,
        list(truth, &[CONTOUR_SUFFIX])?,
        "prediction",
        "truth",
    );
    let results = process(items, |_, (pred, truth)| {
        let (pred, truth) = (load_model(pred)?, load_model(truth)?);
        let theta = theta_matrix(m.params.k, truth.basis())?;
        let parts = boundary_loss_parts(&truth, &pred, &theta)?;
        let o = Outcome::default()
            .value("f1", parts.f1)
            .value("f2", parts.f2)
            .value("loss", parts.total());
        Ok((o, parts))
    });

    let mut file = LossFile {
        pairs: BTreeMap::new(),
        mean_loss: None,
    };
    let mut reports = Vec::new();
    for (report, parts) in results {
        if let Some(p) = parts {
            file.pairs.insert(
                report.name.clone(),
                LossRow {
                    f1: p.f1,
                    f2: p.f2,
                    loss: p.total(),
                },
            );
        }
        reports.push(report);
    }
    let mut totals = BTreeMap::new();
    if !file.pairs.is_empty() {
        let mean = file.pairs.values().map(|r| r.loss).sum::<f64>() / file.pairs.len() as f64;
        file.mean_loss = Some(mean);
        totals.insert("mean_loss".to_string(), mean);
    }
    let json = serde_json::to_string_pretty(&file).expect("loss file serializes") + "\n";
    write_output(m, "boundary_loss.json", json)?;
    Ok(RunSummary::new(m.task, reports, totals))
}

pub(super) fn fit_descent(m: &JobManifest) -> Result<RunSummary, ManifestError> {
    let basis = BasisSpec::new(m.params.n);
    let config = DescentConfig {
        steps: m.params.steps,
        rate: m.params.rate,
        k: m.params.k,
        freeze_center: m.params.freeze_center,
        ..DescentConfig::default()
    };
    let items = list(&m.input, &[".points.csv"])?;
    Ok(plain(m.task, items, |stem, path| {
        let target = PointSet::load(path)?;
        let Some(center) = target.centroid() else {
            bail!("no points in {}", path.display());
        };
        let fit = fit_by_descent(&target, center, &basis, &config)?;
        if fit.status == DescentStatus::Diverged {
            bail!("descent diverged after {} steps (best loss {})", fit.steps, fit.loss);
        }
        let contour = save_model(m, stem, &fit.model)?;
        let mut o = Outcome::default()
            .value("loss", fit.loss)
            .value("steps", fit.steps as f64)
            .output(contour);
        o.note = Some(
            match fit.status {
                DescentStatus::Converged => "converged",
                _ => "step limit reached",
            }
            .into(),
        );
        Ok(o)
    }))
}
