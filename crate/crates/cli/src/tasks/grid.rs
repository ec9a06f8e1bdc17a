use std::collections::BTreeMap;
use std::path::Path;

use fundus_core::gridloc::{decode_center, encode_center, GridTarget};
use fundus_core::imageprep::{load_float_raster, save_float_raster};
use fundus_core::Point;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::{cell, check_name, list, plain, process, write_output, Items, Outcome};
use crate::manifest::{JobManifest, ManifestError};
use crate::summary::RunSummary;

#[derive(Deserialize)]
struct CenterRow {
    image: String,
    x: f64,
    y: f64,
}

/// One item per CSV row, keyed by its `image` column. An unreadable file
/// becomes a single failed item; a bad row fails on its own.
pub(super) fn csv_rows<R: DeserializeOwned>(path: &Path, name_of: impl Fn(&R) -> &str) -> Items<R> {
    let file_name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
    let mut reader = match csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path) {
        Ok(r) => r,
        Err(e) => return vec![(file_name, Err(e.to_string()))],
    };
    let mut items: Items<R> = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, row) in reader.deserialize::<R>().enumerate() {
        let line = i + 2;
        match row {
            Ok(r) => {
                let name = name_of(&r).to_string();
                let checked = check_name(&name).and_then(|_| match seen.insert(name.clone(), line) {
                    Some(first) => Err(format!("{name} already listed on line {first}")),
                    None => Ok(r),
                });
                let key = if checked.is_err() { format!("{file_name}:{line}") } else { name };
                items.push((key, checked));
            }
            Err(e) => items.push((format!("{file_name}:{line}"), Err(e.to_string()))),
        }
    }
    items
}

pub(super) fn encode(m: &JobManifest) -> Result<RunSummary, ManifestError> {
    let (g, frame) = (m.params.grid, m.params.frame);
    let items = csv_rows::<CenterRow>(&m.input, |r| &r.image);
    Ok(plain(m.task, items, |name, row| {
        let grid = encode_center(Point::new(row.x, row.y), frame, frame, g)?;
        let out = format!("{name}.f32");
        save_float_raster(m.output.join(&out), &grid.to_raster())?;
        let hot = grid.cells().iter().position(|c| c.p == 1.0).unwrap_or_default();
        Ok(Outcome::default()
            .value("cell_row", (hot / g) as f64)
            .value("cell_col", (hot % g) as f64)
            .output(out)
            .output(format!("{name}.json")))
    }))
}

pub(super) fn decode(m: &JobManifest) -> Result<RunSummary, ManifestError> {
    let frame = m.params.frame;
    let items = list(&m.input, &[".f32"])?;
    let results = process(items, |_, path| {
        let raster = load_float_raster(path)?;
        let grid = GridTarget::from_raster(&raster, frame, frame)?;
        if grid.g() != m.params.grid {
            log::warn!("{} holds a {}x{} grid, expected {}", path.display(), grid.g(), grid.g(), m.params.grid);
        }
        let c = decode_center(&grid);
        Ok((Outcome::default().value("x", c.x).value("y", c.y), c))
    });
    let mut csv = String::from("image,x,y\n");
    let mut reports = Vec::new();
    for (report, center) in results {
        if let Some(c) = center {
            csv += &format!("{},{},{}\n", report.name, cell(c.x), cell(c.y));
        }
        reports.push(report);
    }
    write_output(m, "centers.csv", csv)?;
    Ok(RunSummary::new(m.task, reports, BTreeMap::new()))
}
