//! Writers for the run artifacts. Every file carries the seed, the
//! configuration hash and a format version; nothing depends on wall-clock
//! time.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};
use ufo_core::Trajectory;

use crate::error::CliError;

pub const OUTPUT_FORMAT_VERSION: u32 = 1;

/// Provenance fields stamped on every artifact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stamp {
    pub seed: u64,
    pub config_hash: String,
}

impl Stamp {
    fn fields(&self) -> [(&'static str, Value); 3] {
        [
            ("format_version", json!(OUTPUT_FORMAT_VERSION)),
            ("seed", json!(self.seed)),
            ("config_hash", json!(self.config_hash)),
        ]
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<PathBuf, CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))?;
    Ok(path.to_path_buf())
}

/// Serializes `body` (which must be a JSON object) with the stamp merged in.
pub fn write_json(path: &Path, stamp: &Stamp, body: &impl Serialize) -> Result<PathBuf, CliError> {
    let mut value = serde_json::to_value(body).map_err(|e| io_err(path, e))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Io(format!("{}: artifact body is not an object", path.display())))?;
    for (k, v) in stamp.fields() {
        obj.insert(k.to_string(), v);
    }
    let text = serde_json::to_string_pretty(&value).map_err(|e| io_err(path, e))?;
    write_text(path, &(text + "\n"))
}

/// Native trajectory file plus the stamp; it still loads with
/// [`Trajectory::from_json`].
pub fn write_trajectory(path: &Path, stamp: &Stamp, traj: &Trajectory) -> Result<PathBuf, CliError> {
    let native: Map<String, Value> = serde_json::from_str(&traj.to_json()).map_err(|e| io_err(path, e))?;
    write_json(path, stamp, &native)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Trajectory::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// CSV with the stamp appended to every row.
pub fn write_csv<R: Serialize>(path: &Path, stamp: &Stamp, header: &[&str], rows: &[R]) -> Result<PathBuf, CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    let mut head: Vec<&str> = header.to_vec();
    head.extend(["seed", "config_hash", "format_version"]);
    w.write_record(&head).map_err(|e| io_err(path, e))?;
    let tail = [stamp.seed.to_string(), stamp.config_hash.clone(), OUTPUT_FORMAT_VERSION.to_string()];
    for row in rows {
        let fields = match serde_json::to_value(row).map_err(|e| io_err(path, e))? {
            Value::Array(a) => a,
            other => return Err(CliError::Io(format!("{}: row is not a sequence: {other}", path.display()))),
        };
        if fields.len() != header.len() {
            return Err(CliError::Io(format!("{}: row has {} fields, header {}", path.display(), fields.len(), header.len())));
        }
        let mut rec: Vec<String> = fields.iter().map(cell).collect();
        rec.extend(tail.iter().cloned());
        w.write_record(&rec).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(path.to_path_buf())
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}
