//! Graph corpora in the gSpan text format with side-view CSVs.
//!
//! A corpus directory holds `graphs.txt` and optionally `sideviews/`:
//!
//! ```text
//! t # <id> <label>      label is 1, -1 or ?
//! v <index> <node-label>
//! e <i> <j> <edge-label> [weight]
//! ```

use std::path::Path;

use super::{format_csv, io_err, parse_err, read_numeric_csv, read_to_string, write_string};
use crate::error::{invalid, Error, Result};
use crate::numkit::kernel::KernelSpec;
use crate::subgraph::{GraphCorpus, LabeledGraph, SideViewSet};
use crate::Matrix;

const GRAPHS: &str = "graphs.txt";
const SIDE_DIR: &str = "sideviews";
const SIDE_MANIFEST: &str = "views.txt";

struct Pending {
    id: String,
    label: Option<f64>,
    nodes: Vec<u32>,
    edges: Vec<(usize, usize, u32)>,
    line: usize,
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(path, line, format!("missing {what}")))?;
    tok.parse().map_err(|_| parse_err(path, line, format!("bad {what}: {tok:?}")))
}

/// Parses `graphs.txt`. Edges whose optional weight is below
/// `edge_threshold` are dropped.
pub fn parse_graph_file(path: &Path, edge_threshold: f64) -> Result<GraphCorpus> {
    if !(0.0..=1.0).contains(&edge_threshold) {
        return invalid(format!("edge threshold must lie in [0, 1], got {edge_threshold}"));
    }
    let text = read_to_string(path)?;
    let mut done: Vec<Pending> = Vec::new();
    let mut cur: Option<Pending> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut toks = raw.split_whitespace();
        let Some(kind) = toks.next() else { continue };
        match kind {
            "t" => {
                if toks.next() != Some("#") {
                    return Err(parse_err(path, line, "expected `t # <id> <label>`"));
                }
                let id: String = field(path, line, toks.next(), "graph id")?;
                let label = match toks.next() {
                    Some("?") => None,
                    Some("1") | Some("+1") => Some(1.0),
                    Some("-1") => Some(-1.0),
                    other => return Err(parse_err(path, line, format!("label must be 1, -1 or ?, got {other:?}"))),
                };
                done.extend(cur.take());
                cur = Some(Pending { id, label, nodes: Vec::new(), edges: Vec::new(), line });
            }
            "v" => {
                let g = cur.as_mut().ok_or_else(|| parse_err(path, line, "vertex before any `t` line"))?;
                let i: usize = field(path, line, toks.next(), "vertex index")?;
                if i != g.nodes.len() {
                    return Err(parse_err(path, line, format!("vertex {i} out of order, expected {}", g.nodes.len())));
                }
                g.nodes.push(field(path, line, toks.next(), "vertex label")?);
            }
            "e" => {
                let g = cur.as_mut().ok_or_else(|| parse_err(path, line, "edge before any `t` line"))?;
                let a: usize = field(path, line, toks.next(), "edge endpoint")?;
                let b: usize = field(path, line, toks.next(), "edge endpoint")?;
                let label: u32 = field(path, line, toks.next(), "edge label")?;
                let keep = match toks.next() {
                    Some(w) => {
                        let w: f64 = field(path, line, Some(w), "edge weight")?;
                        if !w.is_finite() {
                            return Err(parse_err(path, line, "non-finite edge weight"));
                        }
                        w >= edge_threshold
                    }
                    None => true,
                };
                if a >= g.nodes.len() || b >= g.nodes.len() {
                    return Err(parse_err(path, line, format!("edge ({a}, {b}) references an undeclared vertex")));
                }
                if keep {
                    g.edges.push((a, b, label));
                }
            }
            _ if kind.starts_with('#') => {}
            other => return Err(parse_err(path, line, format!("unknown record type {other:?}"))),
        }
        if toks.next().is_some() {
            return Err(parse_err(path, line, "trailing fields"));
        }
    }
    done.extend(cur);
    let mut graphs = Vec::with_capacity(done.len());
    let mut labels = Vec::with_capacity(done.len());
    let mut ids = Vec::with_capacity(done.len());
    for p in done {
        let g = LabeledGraph::new(p.nodes, p.edges).map_err(|e| parse_err(path, p.line, e.to_string()))?;
        graphs.push(g);
        labels.push(p.label);
        ids.push(p.id);
    }
    if graphs.is_empty() {
        return invalid(format!("{}: no graphs", path.display()));
    }
    GraphCorpus::new(graphs, labels, ids)
}

fn read_side_views(dir: &Path, n: usize) -> Result<SideViewSet> {
    if !dir.is_dir() {
        return SideViewSet::new(Vec::new(), Vec::new(), Vec::new(), KernelSpec::Rbf);
    }
    let manifest = dir.join(SIDE_MANIFEST);
    let mut entries: Vec<(String, f64)> = Vec::new();
    if manifest.exists() {
        for (idx, raw) in read_to_string(&manifest)?.lines().enumerate() {
            let mut toks = raw.split_whitespace();
            let Some(name) = toks.next() else { continue };
            let lambda = match toks.next() {
                Some(t) => t.parse().map_err(|_| parse_err(&manifest, idx + 1, format!("bad weight {t:?}")))?,
                None => 1.0,
            };
            entries.push((name.to_string(), lambda));
        }
    } else {
        for entry in std::fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
            let path = entry.map_err(|e| io_err(dir, e))?.path();
            if path.extension().is_some_and(|e| e == "csv") {
                if let Some(stem) = path.file_stem() {
                    entries.push((stem.to_string_lossy().into_owned(), 1.0));
                }
            }
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
    }
    let mut views = Vec::with_capacity(entries.len());
    for (name, _) in &entries {
        let path = dir.join(format!("{name}.csv"));
        let (header, rows) = read_numeric_csv(&path)?;
        if rows.len() != n {
            return Err(Error::InvalidArgument(format!("{}: {} rows for {n} graphs", path.display(), rows.len())));
        }
        views.push(Matrix::from_fn(n, header.len(), |i, j| rows[i][j]));
    }
    let (names, lambdas) = entries.into_iter().unzip();
    SideViewSet::new(views, lambdas, names, KernelSpec::Rbf)
}

/// Loads `dir/graphs.txt` and the side views under `dir/sideviews/`. Side
/// views are listed in `views.txt` as `<name> [weight]` (weight 1 by
/// default) or, without it, taken in file-name order.
pub fn load_graph_corpus(dir: &Path, edge_threshold: f64) -> Result<(GraphCorpus, SideViewSet)> {
    let corpus = parse_graph_file(&dir.join(GRAPHS), edge_threshold)?;
    let side = read_side_views(&dir.join(SIDE_DIR), corpus.len())?;
    Ok((corpus, side))
}

pub fn format_graph_file(corpus: &GraphCorpus) -> String {
    let mut out = String::new();
    for ((g, y), id) in corpus.graphs.iter().zip(&corpus.labels).zip(&corpus.ids) {
        let label = match y {
            Some(v) if *v > 0.0 => "1",
            Some(_) => "-1",
            None => "?",
        };
        out.push_str(&format!("t # {id} {label}\n"));
        for (i, l) in g.node_labels().iter().enumerate() {
            out.push_str(&format!("v {i} {l}\n"));
        }
        for e in g.edges() {
            out.push_str(&format!("e {} {} {}\n", e.a, e.b, e.label));
        }
    }
    out
}

pub fn write_graph_corpus(dir: &Path, corpus: &GraphCorpus, side: &SideViewSet) -> Result<()> {
    if corpus.ids.iter().any(|id| id.is_empty() || id.contains(char::is_whitespace)) {
        return invalid("graph ids must be non-empty and contain no whitespace");
    }
    write_string(&dir.join(GRAPHS), &format_graph_file(corpus))?;
    if side.views.is_empty() {
        return Ok(());
    }
    let sd = dir.join(SIDE_DIR);
    let manifest: String = side.names.iter().zip(&side.lambdas).map(|(n, l)| format!("{n} {l}\n")).collect();
    write_string(&sd.join(SIDE_MANIFEST), &manifest)?;
    for (name, z) in side.names.iter().zip(&side.views) {
        let header: Vec<String> = (0..z.ncols()).map(|j| format!("f{j}")).collect();
        let rows = (0..z.nrows()).map(|i| z.row(i).iter().copied().collect());
        write_string(&sd.join(format!("{name}.csv")), &format_csv(&header, rows))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::synth::{synth_graph_corpus, GraphCorpusSpec};

    const FIXTURE: &str = "\
t # g0 1
v 0 0
v 1 1
v 2 2
e 0 1 0
e 1 2 0 0.95
t # g1 -1
v 0 0
v 1 0
e 0 1 3 0.2
t # g2 ?
v 0 1
v 1 2
v 2 0
e 0 1 0
e 2 0 1
";

    #[test]
    fn hand_fixture_has_exact_edges() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(GRAPHS), FIXTURE).unwrap();
        let (c, side) = load_graph_corpus(dir.path(), 0.9).unwrap();
        assert_eq!(c.ids, vec!["g0", "g1", "g2"]);
        assert_eq!(c.labels, vec![Some(1.0), Some(-1.0), None]);
        let edges: Vec<Vec<(usize, usize, u32)>> =
            c.graphs.iter().map(|g| g.edges().iter().map(|e| (e.a, e.b, e.label)).collect()).collect();
        assert_eq!(edges, vec![vec![(0, 1, 0), (1, 2, 0)], vec![], vec![(0, 1, 0), (2, 0, 1)]]);
        assert!(side.views.is_empty());
        let (c0, _) = load_graph_corpus(dir.path(), 0.0).unwrap();
        assert_eq!(c0.graphs[1].edge_count(), 1);
        assert!(matches!(load_graph_corpus(dir.path(), 1.5), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn malformed_lines_report_location() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(GRAPHS), "t # a 1\nv 0 0\nv 1 0\ne 0 5 0\n").unwrap();
        match load_graph_corpus(dir.path(), 0.5) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(dir.path().join(GRAPHS), "t # a 1\nv 0 0\nv 1 0\ne 0 1 0 NaN\n").unwrap();
        assert!(matches!(load_graph_corpus(dir.path(), 0.5), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn round_trip() {
        let (corpus, side) = synth_graph_corpus(6, &GraphCorpusSpec::small());
        let dir = tempfile::tempdir().unwrap();
        write_graph_corpus(dir.path(), &corpus, &side).unwrap();
        let (c2, s2) = load_graph_corpus(dir.path(), 0.0).unwrap();
        assert_eq!(c2, corpus);
        assert_eq!(s2, side);
    }
}
