//! Output files: a JSON summary of every effective parameter and result, and
//! a CSV of per-order data with round-trip-exact doubles.

use std::path::Path;

use anyhow::{Context, Result};
use serde_json::Value;

/// 17 significant digits: doubles survive a parse round trip.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_summary(prefix: &Path, summary: &Value) -> Result<()> {
    let path = summary_path(prefix);
    let body = serde_json::to_string_pretty(summary)?;
    std::fs::write(&path, body + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn write_orders(prefix: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let path = orders_path(prefix);
    let mut body = String::from(header);
    body.push('\n');
    for row in rows {
        body.push_str(&row.join(","));
        body.push('\n');
    }
    std::fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn summary_path(prefix: &Path) -> std::path::PathBuf {
    sibling(prefix, "_summary.json")
}

pub fn orders_path(prefix: &Path) -> std::path::PathBuf {
    sibling(prefix, "_orders.csv")
}

fn sibling(prefix: &Path, suffix: &str) -> std::path::PathBuf {
    let mut name = prefix.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    prefix.with_file_name(name)
}
