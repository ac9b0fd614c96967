//! Typing sessions as line-delimited JSON.
//!
//! One object per line:
//!
//! ```text
//! {"id":"s1","label":9,"views":[{"name":"alnum","events":[[t, x1, x2], ...]}, ...]}
//! ```
//!
//! Each event is a timestamp followed by the view's features. Timestamps
//! must be non-decreasing within a view.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_err, read_to_string, write_string};
use crate::deepmood::{SessionDataset, SessionInstance};
use crate::error::{invalid, Result};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEvents {
    pub name: String,
    pub events: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRecord {
    pub id: String,
    pub label: f64,
    pub views: Vec<ViewEvents>,
}

/// How raw session labels become training targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelRule {
    /// Labels are already class indices.
    Class,
    /// Depression scores dichotomized by [`hdrs_label`].
    Hdrs,
    /// Raw scores kept as regression targets.
    Regression,
}

/// HDRS dichotomization: scores from 0 through 7 are class 0 (normal),
/// scores of 8 or more class 1. Scores strictly between 7 and 8 count as
/// class 0.
pub fn hdrs_label(score: f64) -> Result<f64> {
    if !score.is_finite() || score < 0.0 {
        return invalid(format!("HDRS score must be a non-negative number, got {score}"));
    }
    Ok(if score >= 8.0 { 1.0 } else { 0.0 })
}

/// Parses every record, validating shapes, finiteness and timestamp order.
pub fn read_session_records(path: &Path) -> Result<Vec<SessionRecord>> {
    let text = read_to_string(path)?;
    let mut out: Vec<SessionRecord> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: SessionRecord = serde_json::from_str(raw).map_err(|e| parse_err(path, line, e.to_string()))?;
        if !rec.label.is_finite() {
            return Err(parse_err(path, line, "non-finite label"));
        }
        if rec.views.is_empty() {
            return Err(parse_err(path, line, "session has no views"));
        }
        if let Some(first) = out.first() {
            let names = |r: &SessionRecord| r.views.iter().map(|v| v.name.clone()).collect::<Vec<_>>();
            if names(first) != names(&rec) {
                return Err(parse_err(path, line, "view names differ from the first session"));
            }
        }
        for (p, v) in rec.views.iter().enumerate() {
            let width = v.events.first().map_or(0, Vec::len);
            if width < 2 {
                return Err(parse_err(path, line, format!("view {:?} needs events of [t, features...]", v.name)));
            }
            if let Some(first) = out.first() {
                let want = first.views[p].events[0].len();
                if width != want {
                    return Err(parse_err(path, line, format!("view {:?} has {} features, expected {}", v.name, width - 1, want - 1)));
                }
            }
            let mut last_t = f64::NEG_INFINITY;
            for e in &v.events {
                if e.len() != width {
                    return Err(parse_err(path, line, format!("ragged events in view {:?}", v.name)));
                }
                if e.iter().any(|x| !x.is_finite()) {
                    return Err(parse_err(path, line, format!("non-finite value in view {:?}", v.name)));
                }
                if e[0] < last_t {
                    return Err(parse_err(path, line, format!("timestamps decrease in view {:?}", v.name)));
                }
                last_t = e[0];
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_sessions(path: &Path, records: &[SessionRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    write_string(path, &out)
}

/// Converts records to training instances: every view is truncated to its
/// first `max_len` events, and sessions with any view shorter than
/// `min_len` are dropped. Returns the dataset and the ids kept.
pub fn sessions_to_dataset(
    records: &[SessionRecord],
    min_len: usize,
    max_len: usize,
    rule: LabelRule,
) -> Result<(SessionDataset, Vec<String>)> {
    if min_len == 0 || min_len > max_len {
        return invalid(format!("need 1 <= min_len <= max_len, got {min_len}..{max_len}"));
    }
    let Some(first) = records.first() else {
        return invalid("no sessions");
    };
    let names: Vec<String> = first.views.iter().map(|v| v.name.clone()).collect();
    let dims: Vec<usize> = first.views.iter().map(|v| v.events[0].len() - 1).collect();
    let mut instances = Vec::new();
    let mut ids = Vec::new();
    for r in records {
        if r.views.iter().any(|v| v.events.len() < min_len) {
            continue;
        }
        let views = r
            .views
            .iter()
            .zip(&dims)
            .map(|(v, &d)| {
                let len = v.events.len().min(max_len);
                Matrix::from_fn(d, len, |f, k| v.events[k][f + 1])
            })
            .collect();
        let label = match rule {
            LabelRule::Class => r.label,
            LabelRule::Hdrs => hdrs_label(r.label)?,
            LabelRule::Regression => r.label,
        };
        instances.push(SessionInstance { views, label });
        ids.push(r.id.clone());
    }
    Ok((SessionDataset::new(instances, names, dims)?, ids))
}

pub fn load_sessions(path: &Path, min_len: usize, max_len: usize, rule: LabelRule) -> Result<(SessionDataset, Vec<String>)> {
    sessions_to_dataset(&read_session_records(path)?, min_len, max_len, rule)
}

/// Records for a dataset, with event index as the timestamp.
pub fn dataset_to_records(ds: &SessionDataset) -> Vec<SessionRecord> {
    ds.instances
        .iter()
        .enumerate()
        .map(|(i, s)| SessionRecord {
            id: format!("s{i}"),
            label: s.label,
            views: ds
                .view_names
                .iter()
                .zip(&s.views)
                .map(|(name, x)| ViewEvents {
                    name: name.clone(),
                    events: (0..x.ncols())
                        .map(|k| std::iter::once(k as f64).chain(x.column(k).iter().copied()).collect())
                        .collect(),
                })
                .collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::synth::{synth_sessions, SessionSpec};
    use crate::error::Error;

    #[test]
    fn hdrs_boundaries() {
        assert_eq!(hdrs_label(0.0).unwrap(), 0.0);
        assert_eq!(hdrs_label(7.0).unwrap(), 0.0);
        assert_eq!(hdrs_label(8.0).unwrap(), 1.0);
        assert_eq!(hdrs_label(30.0).unwrap(), 1.0);
        assert!(hdrs_label(-1.0).is_err());
    }

    #[test]
    fn round_trip_and_length_rules() {
        let ds = synth_sessions(2, &SessionSpec { sessions: 8, min_len: 3, max_len: 12, ..Default::default() });
        let records = dataset_to_records(&ds);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        write_sessions(&path, &records).unwrap();
        assert_eq!(read_session_records(&path).unwrap(), records);
        let (back, ids) = load_sessions(&path, 1, 100, LabelRule::Class).unwrap();
        assert_eq!(back, ds);
        assert_eq!(ids.len(), 8);

        let (cut, _) = load_sessions(&path, 1, 5, LabelRule::Class).unwrap();
        assert!(cut.instances.iter().flat_map(|s| &s.views).all(|x| x.ncols() <= 5));
        let (kept, _) = load_sessions(&path, 10, 100, LabelRule::Class).unwrap();
        let want = ds.instances.iter().filter(|s| s.views.iter().all(|x| x.ncols() >= 10)).count();
        assert_eq!(kept.len(), want);
    }

    #[test]
    fn bad_lines_are_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let good = r#"{"id":"a","label":3,"views":[{"name":"v","events":[[0,1],[1,2]]}]}"#;
        let back = r#"{"id":"b","label":3,"views":[{"name":"v","events":[[5,1],[1,2]]}]}"#;
        std::fs::write(&path, format!("{good}\n\n{back}\n")).unwrap();
        assert!(matches!(read_session_records(&path), Err(Error::Parse { line: 3, .. })));
        std::fs::write(&path, format!("{good}\n{{\"id\":1}}\n")).unwrap();
        assert!(matches!(read_session_records(&path), Err(Error::Parse { line: 2, .. })));
    }
}
