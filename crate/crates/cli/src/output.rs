use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Wraps a report with the schema version and, unless deterministic, a
/// generation timestamp in Unix seconds.
pub fn envelope<T: Serialize>(kind: &str, body: &T, deterministic: bool) -> Result<Value> {
    let mut obj = serde_json::Map::new();
    obj.insert("schema_version".into(), SCHEMA_VERSION.into());
    obj.insert("kind".into(), kind.into());
    if !deterministic {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        obj.insert("generated_at".into(), secs.into());
    }
    obj.insert("report".into(), serde_json::to_value(body)?);
    Ok(Value::Object(obj))
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Write rows of flat JSON objects as CSV. `prefix` columns come first, the
/// remaining keys follow in the first row's order.
pub fn write_csv(path: &Path, prefix: &[&str], rows: &[(Vec<String>, Value)]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let keys: Vec<String> = match rows.first() {
        Some((_, Value::Object(m))) => m.keys().cloned().collect(),
        _ => Vec::new(),
    };
    w.write_record(
        prefix
            .iter()
            .map(|s| s.to_string())
            .chain(keys.iter().cloned()),
    )?;
    for (lead, row) in rows {
        let rest = keys
            .iter()
            .map(|k| row.get(k).map(cell).unwrap_or_default());
        w.write_record(lead.iter().cloned().chain(rest))?;
    }
    w.flush()?;
    Ok(())
}
