//! File formats and seeded synthetic generators.
//!
//! Every format is described in `FORMATS.md` at the repository root.

pub mod graphs;
pub mod multiview;
pub mod network;
pub mod sessions;
pub mod synth;

use std::path::Path;

use crate::error::Error;

pub use graphs::{load_graph_corpus, write_graph_corpus};
pub use multiview::{load_multiview, read_multiview_raw, write_multiview};
pub use network::{load_network_stack, write_network_stack, NetworkStack};
pub use sessions::{hdrs_label, load_sessions, read_session_records, write_sessions, LabelRule, SessionRecord};

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub(crate) fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

pub(crate) fn read_to_string(path: &Path) -> crate::Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub(crate) fn write_string(path: &Path, contents: &str) -> crate::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// Reads a headed numeric CSV into rows. Empty files and ragged or
/// non-finite rows are rejected with the offending line.
pub(crate) fn read_numeric_csv(path: &Path) -> crate::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::InvalidArgument(format!("{}: empty CSV", path.display())));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let mut row = Vec::with_capacity(header.len());
        for field in record.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("non-finite value {field:?}")));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub(crate) fn format_csv(header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
