//! Per-run summary written next to the task outputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::manifest::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileStatus {
    Ok,
    Error,
}

/// Outcome for one input item (a file, or a row of a CSV input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileReport {
    pub name: String,
    pub status: FileStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<String>,
}

impl FileReport {
    pub fn failed(name: impl Into<String>, error: impl ToString) -> Self {
        Self {
            name: name.into(),
            status: FileStatus::Error,
            error: Some(error.to_string()),
            note: None,
            values: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub task: Task,
    pub ok: usize,
    pub failed: usize,
    /// Run-level aggregates, e.g. mean losses or evaluation metrics.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub totals: BTreeMap<String, f64>,
    pub files: Vec<FileReport>,
}

impl RunSummary {
    pub fn new(task: Task, mut files: Vec<FileReport>, totals: BTreeMap<String, f64>) -> Self {
        files.sort_by(|a, b| a.name.cmp(&b.name));
        let failed = files.iter().filter(|f| f.status == FileStatus::Error).count();
        Self {
            task,
            ok: files.len() - failed,
            failed,
            totals,
            files,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    /// 0 when every item succeeded, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failed == 0 {
            0
        } else {
            1
        }
    }

    /// Human-readable lines, floats at 6 decimals.
    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for f in &self.files {
            let mut line = format!("{} {}", f.name, if f.status == FileStatus::Ok { "ok" } else { "error" });
            for (k, v) in &f.values {
                line += &format!(" {k}={v:.6}");
            }
            if let Some(note) = &f.note {
                line += &format!(" ({note})");
            }
            if let Some(e) = &f.error {
                line += &format!(": {e}");
            }
            out.push(line);
        }
        for (k, v) in &self.totals {
            out.push(format!("{k} {v:.6}"));
        }
        out.push(format!("{}: {} ok, {} failed", self.task.name(), self.ok, self.failed));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn files_are_sorted_and_counted() {
        let mut ok = FileReport::failed("b", "x");
        ok.status = FileStatus::Ok;
        ok.error = None;
        ok.values.insert("dice".into(), 0.123456789);
        let s = RunSummary::new(Task::Eval, vec![ok, FileReport::failed("a", "broken")], BTreeMap::new());
        assert_eq!(s.files[0].name, "a");
        assert_eq!((s.ok, s.failed, s.exit_code()), (1, 1, 1));
        let lines = s.lines();
        assert_eq!(lines[0], "a error: broken");
        assert_eq!(lines[1], "b ok dice=0.123457");
        assert!(s.to_json().contains("0.123456789"));
    }
}
