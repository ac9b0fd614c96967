//! gSpan: depth-first enumeration of connected frequent subgraphs by minimal
//! DFS codes with rightmost-path extension.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::LabeledGraph;
use crate::error::{invalid, Result};

/// One edge of a DFS code: discovery indices and labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DfsEdge {
    pub from: usize,
    pub to: usize,
    pub from_label: u32,
    pub edge_label: u32,
    pub to_label: u32,
}

impl DfsEdge {
    pub fn is_forward(&self) -> bool {
        self.from < self.to
    }
}

/// gSpan's DFS lexicographic order on edges.
impl Ord for DfsEdge {
    fn cmp(&self, other: &Self) -> Ordering {
        let (i1, j1, i2, j2) = (self.from, self.to, other.from, other.to);
        let structural = match (self.is_forward(), other.is_forward()) {
            (true, true) => j1.cmp(&j2).then(i2.cmp(&i1)),
            (false, false) => i1.cmp(&i2).then(j1.cmp(&j2)),
            (false, true) => {
                if i1 < j2 {
                    Ordering::Less
                } else {
                    Ordering::Greater
                }
            }
            (true, false) => {
                if j1 <= i2 {
                    Ordering::Less
                } else {
                    Ordering::Greater
                }
            }
        };
        structural
            .then(self.from_label.cmp(&other.from_label))
            .then(self.edge_label.cmp(&other.edge_label))
            .then(self.to_label.cmp(&other.to_label))
    }
}

impl PartialOrd for DfsEdge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DfsCode(pub Vec<DfsEdge>);

impl DfsCode {
    pub fn edges(&self) -> &[DfsEdge] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.0.iter().map(|e| e.from.max(e.to) + 1).max().unwrap_or(0)
    }

    /// Vertices from the root to the rightmost vertex.
    pub fn rightmost_path(&self) -> Vec<usize> {
        let Some(rightmost) = self.0.iter().filter(|e| e.is_forward()).map(|e| e.to).max() else {
            return Vec::new();
        };
        let mut path = vec![rightmost];
        let mut current = rightmost;
        for e in self.0.iter().rev() {
            if e.is_forward() && e.to == current {
                path.push(e.from);
                current = e.from;
            }
        }
        path.reverse();
        path
    }

    /// The pattern graph this code describes.
    pub fn to_graph(&self) -> Result<LabeledGraph> {
        let n = self.node_count();
        let mut labels: Vec<Option<u32>> = vec![None; n];
        let mut edges = Vec::with_capacity(self.0.len());
        for e in &self.0 {
            for (v, l) in [(e.from, e.from_label), (e.to, e.to_label)] {
                match labels[v] {
                    Some(prev) if prev != l => return invalid(format!("DFS code gives vertex {v} two labels")),
                    _ => labels[v] = Some(l),
                }
            }
            edges.push((e.from, e.to, e.edge_label));
        }
        let labels = labels.into_iter().map(|l| l.unwrap_or(0)).collect();
        LabeledGraph::new(labels, edges)
    }

    pub fn child(&self, e: DfsEdge) -> DfsCode {
        let mut edges = self.0.clone();
        edges.push(e);
        DfsCode(edges)
    }
}

/// Whether the callback wants the subtree below the current pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visit {
    Continue,
    Prune,
}

#[derive(Debug, Clone)]
struct Embedding {
    gid: usize,
    /// DFS vertex to graph node.
    map: Vec<usize>,
    used: Vec<bool>,
}

fn first_edges(graphs: &[&LabeledGraph]) -> BTreeMap<DfsEdge, Vec<Embedding>> {
    let mut out: BTreeMap<DfsEdge, Vec<Embedding>> = BTreeMap::new();
    for (gid, g) in graphs.iter().enumerate() {
        for (id, e) in g.edges().iter().enumerate() {
            for (x, y) in [(e.a, e.b), (e.b, e.a)] {
                let (lx, ly) = (g.node_label(x), g.node_label(y));
                if lx > ly {
                    continue;
                }
                let mut used = vec![false; g.edge_count()];
                used[id] = true;
                out.entry(DfsEdge {
                    from: 0,
                    to: 1,
                    from_label: lx,
                    edge_label: e.label,
                    to_label: ly,
                })
                .or_default()
                .push(Embedding {
                    gid,
                    map: vec![x, y],
                    used,
                });
            }
        }
    }
    out
}

/// All rightmost-path extensions of `code`, grouped by the new edge and
/// ordered by DFS lexicographic order.
fn extensions(code: &DfsCode, embs: &[Embedding], graphs: &[&LabeledGraph]) -> BTreeMap<DfsEdge, Vec<Embedding>> {
    let path = code.rightmost_path();
    let rightmost = *path.last().expect("non-empty code");
    let next = code.node_count();
    let mut out: BTreeMap<DfsEdge, Vec<Embedding>> = BTreeMap::new();
    for emb in embs {
        let g = graphs[emb.gid];
        let x = emb.map[rightmost];
        // backward: rightmost vertex to an earlier vertex on the path
        for &v in &path[..path.len() - 1] {
            if let Some((id, label)) = g.edge_between(x, emb.map[v]) {
                if !emb.used[id] {
                    let mut child = emb.clone();
                    child.used[id] = true;
                    out.entry(DfsEdge {
                        from: rightmost,
                        to: v,
                        from_label: g.node_label(x),
                        edge_label: label,
                        to_label: g.node_label(emb.map[v]),
                    })
                    .or_default()
                    .push(child);
                }
            }
        }
        // forward: any path vertex to a fresh node
        for &u in &path {
            let xu = emb.map[u];
            for &(y, id) in g.neighbors(xu) {
                if emb.map.contains(&y) {
                    continue;
                }
                let mut child = emb.clone();
                child.map.push(y);
                child.used[id] = true;
                out.entry(DfsEdge {
                    from: u,
                    to: next,
                    from_label: g.node_label(xu),
                    edge_label: g.edges()[id].label,
                    to_label: g.node_label(y),
                })
                .or_default()
                .push(child);
            }
        }
    }
    out
}

/// True when `code` is the minimum DFS code of the graph it describes.
pub fn is_min_code(code: &DfsCode) -> Result<bool> {
    if code.is_empty() {
        return Ok(true);
    }
    let g = code.to_graph()?;
    let graphs = [&g];
    let firsts = first_edges(&graphs);
    let (&min_first, embs) = firsts.iter().next().expect("graph has an edge");
    if min_first != code.0[0] {
        return Ok(false);
    }
    let mut embs = embs.clone();
    let mut prefix = DfsCode(vec![min_first]);
    for &target in &code.0[1..] {
        let ext = extensions(&prefix, &embs, &graphs);
        let Some((best, next)) = ext.into_iter().next() else {
            return Ok(false);
        };
        if best != target {
            return Ok(false);
        }
        embs = next;
        prefix.0.push(best);
    }
    Ok(true)
}

fn indicator(embs: &[Embedding], n: usize) -> Vec<bool> {
    let mut f = vec![false; n];
    for e in embs {
        f[e.gid] = true;
    }
    f
}

/// Visits every connected subgraph with at least `min_sup` supporting graphs
/// and at most `max_edges` edges exactly once, in pre-order with children in
/// DFS-code order. The callback receives the code, the indicator over
/// `graphs` and the support, and may prune the subtree below. Returns the
/// number of visited patterns.
pub fn gspan_enumerate<F>(graphs: &[LabeledGraph], min_sup: usize, max_edges: usize, mut visit: F) -> Result<usize>
where
    F: FnMut(&DfsCode, &[bool], usize) -> Visit,
{
    if min_sup == 0 {
        return invalid("min_sup must be at least 1");
    }
    if max_edges == 0 {
        return invalid("max_edges must be at least 1");
    }
    let refs: Vec<&LabeledGraph> = graphs.iter().collect();
    let mut visited = 0;
    for (edge, embs) in first_edges(&refs) {
        let f = indicator(&embs, graphs.len());
        if f.iter().filter(|&&b| b).count() < min_sup {
            continue;
        }
        let code = DfsCode(vec![edge]);
        grow(&code, &embs, f, &refs, min_sup, max_edges, &mut visit, &mut visited)?;
    }
    Ok(visited)
}

#[allow(clippy::too_many_arguments)]
fn grow<F>(
    code: &DfsCode,
    embs: &[Embedding],
    f: Vec<bool>,
    graphs: &[&LabeledGraph],
    min_sup: usize,
    max_edges: usize,
    visit: &mut F,
    visited: &mut usize,
) -> Result<()>
where
    F: FnMut(&DfsCode, &[bool], usize) -> Visit,
{
    let support = f.iter().filter(|&&b| b).count();
    *visited += 1;
    if visit(code, &f, support) == Visit::Prune || code.len() >= max_edges {
        return Ok(());
    }
    for (edge, child_embs) in extensions(code, embs, graphs) {
        let cf = indicator(&child_embs, f.len());
        if cf.iter().filter(|&&b| b).count() < min_sup {
            continue;
        }
        let child = code.child(edge);
        if !is_min_code(&child)? {
            continue;
        }
        grow(&child, &child_embs, cf, graphs, min_sup, max_edges, visit, visited)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> LabeledGraph {
        LabeledGraph::new(vec![0, 0, 0], vec![(0, 1, 0), (1, 2, 0), (0, 2, 0)]).unwrap()
    }

    fn collect(graphs: &[LabeledGraph], min_sup: usize, max_edges: usize) -> Vec<(DfsCode, Vec<bool>)> {
        let mut out = Vec::new();
        gspan_enumerate(graphs, min_sup, max_edges, |c, f, _| {
            out.push((c.clone(), f.to_vec()));
            Visit::Continue
        })
        .unwrap();
        out
    }

    #[test]
    fn two_triangles() {
        let pats = collect(&[triangle(), triangle()], 2, 3);
        let sizes: Vec<usize> = pats.iter().map(|(c, _)| c.len()).collect();
        assert_eq!(sizes, vec![1, 2, 3]);
        assert!(pats.iter().all(|(_, f)| f == &[true, true]));
        let tri = &pats[2].0;
        assert!(!tri.0[2].is_forward());
    }

    #[test]
    fn min_sup_above_corpus_size() {
        assert!(collect(&[triangle()], 2, 3).is_empty());
    }

    #[test]
    fn single_edge_graph() {
        let g = LabeledGraph::new(vec![1, 2], vec![(0, 1, 0)]).unwrap();
        let pats = collect(&[g], 1, 4);
        assert_eq!(pats.len(), 1);
        assert_eq!(pats[0].1, vec![true]);
    }

    #[test]
    fn non_minimal_code_detected() {
        // path a-b-a coded from the middle would be (0,1,b,a),(0,2,b,a): not minimal
        let bad = DfsCode(vec![
            DfsEdge { from: 0, to: 1, from_label: 1, edge_label: 0, to_label: 0 },
            DfsEdge { from: 0, to: 2, from_label: 1, edge_label: 0, to_label: 0 },
        ]);
        assert!(!is_min_code(&bad).unwrap());
        let good = DfsCode(vec![
            DfsEdge { from: 0, to: 1, from_label: 0, edge_label: 0, to_label: 1 },
            DfsEdge { from: 1, to: 2, from_label: 1, edge_label: 0, to_label: 0 },
        ]);
        assert!(is_min_code(&good).unwrap());
    }

    #[test]
    fn rightmost_path_follows_forward_edges() {
        let code = DfsCode(vec![
            DfsEdge { from: 0, to: 1, from_label: 0, edge_label: 0, to_label: 0 },
            DfsEdge { from: 1, to: 2, from_label: 0, edge_label: 0, to_label: 0 },
            DfsEdge { from: 2, to: 0, from_label: 0, edge_label: 0, to_label: 0 },
            DfsEdge { from: 0, to: 3, from_label: 0, edge_label: 0, to_label: 0 },
        ]);
        assert_eq!(code.rightmost_path(), vec![0, 3]);
    }
}
