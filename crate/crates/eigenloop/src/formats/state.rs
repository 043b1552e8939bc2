use std::path::Path;

use eigenloop_core::transfer::{LoopSnapshot, SNAPSHOT_VERSION};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::formats::write_text;

pub const STATE_FORMAT: &str = "eigenloop-loop-state";

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    snapshot: LoopSnapshot,
}

pub fn snapshot_to_json(snapshot: &LoopSnapshot) -> String {
    let doc = Document {
        format: STATE_FORMAT.into(),
        version: SNAPSHOT_VERSION,
        snapshot: snapshot.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("snapshot serializes");
    s.push('\n');
    s
}

pub fn snapshot_from_json(text: &str) -> Result<LoopSnapshot, String> {
    let doc: Document = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if doc.format != STATE_FORMAT {
        return Err(format!("not a loop-state document (format `{}`)", doc.format));
    }
    if doc.version != SNAPSHOT_VERSION || doc.snapshot.version != SNAPSHOT_VERSION {
        return Err(format!("unsupported state version {}", doc.version));
    }
    Ok(doc.snapshot)
}

pub fn save_snapshot(path: impl AsRef<Path>, snapshot: &LoopSnapshot) -> AppResult<()> {
    write_text(path, &snapshot_to_json(snapshot))
}

pub fn load_snapshot(path: impl AsRef<Path>) -> AppResult<LoopSnapshot> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    snapshot_from_json(&text).map_err(|m| AppError::format(path, m))
}
