#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fundus_core::imageprep::{load_png, save_png};
use fundus_core::synthetic::Ellipse;
use fundus_core::{Point, Raster};

pub fn fundus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fundus"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("run fundus")
}

pub fn run_manifest(path: &Path) -> Output {
    fundus(&["run", "--manifest", path.to_str().unwrap()])
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

pub fn disk_mask(size: usize, center: Point, r: f64) -> Raster<u8> {
    Ellipse::circle(center, r).mask(size, size)
}

pub fn write_mask(dir: &Path, name: &str, mask: &Raster<u8>) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let p = dir.join(name);
    save_png(&p, mask).unwrap();
    p
}

pub fn read_mask(path: &Path) -> Raster<u8> {
    load_png(path).unwrap()
}

pub fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

/// Relative path and bytes of every file under `dir`, sorted.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
