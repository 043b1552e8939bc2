use std::fmt::Write as _;
use std::path::Path;

use eigenloop_core::{Error as CoreError, LabeledSet, SampleId};

use crate::error::{AppError, AppResult};

/// Parses `id,classIndex` lines. With `classes = None` the class count is
/// one more than the largest index seen.
pub fn parse_labels(text: &str, classes: Option<usize>) -> Result<LabeledSet, String> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (id, class) = line
            .split_once(',')
            .ok_or_else(|| format!("line {}: expected `id,classIndex`", n + 1))?;
        let id: u64 = id.trim().parse().map_err(|_| format!("line {}: invalid id", n + 1))?;
        let class: usize = class
            .trim()
            .parse()
            .map_err(|_| format!("line {}: invalid class index", n + 1))?;
        pairs.push((SampleId(id), class));
    }
    let classes = classes.unwrap_or_else(|| pairs.iter().map(|p| p.1 + 1).max().unwrap_or(0));
    LabeledSet::from_pairs(classes, pairs).map_err(|e| e.to_string())
}

pub fn write_labels(labels: &LabeledSet) -> String {
    let mut out = String::new();
    for (id, c) in labels.iter() {
        writeln!(out, "{id},{c}").expect("writing to a String");
    }
    out
}

pub fn save_labels(path: impl AsRef<Path>, labels: &LabeledSet) -> AppResult<()> {
    let path = path.as_ref();
    std::fs::write(path, write_labels(labels)).map_err(|e| AppError::io(path, e))
}

pub fn load_labels(path: impl AsRef<Path>, classes: Option<usize>) -> AppResult<LabeledSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_labels(&text, classes)
        .map_err(|m| AppError::Core(CoreError::Data(format!("{}: {m}", path.display()))))
}
