//! Discriminative subgraph mining guided by side views.
//!
//! Connected subgraphs are enumerated with gSpan and scored by
//! `q(g) = fᵀ L f`, where `f` is the pattern's indicator over the corpus and
//! `L` is the Laplacian of a signed affinity built from label constraints and
//! side-view kernels. A branch-and-bound search keeps the `k` patterns with
//! the smallest score and cuts every subtree whose lower bound
//! `q̂(g) = fᵀ L̂ f` cannot beat the current threshold.

mod gside;
mod gspan;
mod mining;

pub use gside::{build_omega, build_phi, build_theta, gside_bound, gside_score, side_view_consistency, SignedLaplacian};
pub use gspan::{gspan_enumerate, is_min_code, DfsCode, DfsEdge, Visit};
pub use mining::{contains_subgraph, feature_matrix, gmsv_mine, signed_laplacian, MiningConfig, MiningResult, ScoredPattern};

use crate::error::{invalid, Result};
use crate::numkit::kernel::KernelSpec;
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub label: u32,
}

/// Undirected graph with integer node labels and optional edge labels
/// (0 when unlabeled).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledGraph {
    node_labels: Vec<u32>,
    edges: Vec<Edge>,
    /// Per node: `(neighbor, edge id)`, ascending by neighbor.
    adj: Vec<Vec<(usize, usize)>>,
}

impl LabeledGraph {
    pub fn new(node_labels: Vec<u32>, edges: Vec<(usize, usize, u32)>) -> Result<Self> {
        let n = node_labels.len();
        let mut adj = vec![Vec::new(); n];
        let mut out = Vec::with_capacity(edges.len());
        for (id, &(a, b, label)) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return invalid(format!("edge ({a}, {b}) references a node outside 0..{n}"));
            }
            if a == b {
                return invalid(format!("self-loop on node {a}"));
            }
            if adj[a].iter().any(|&(x, _)| x == b) {
                return invalid(format!("duplicate edge ({a}, {b})"));
            }
            adj[a].push((b, id));
            adj[b].push((a, id));
            out.push(Edge { a, b, label });
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(Self {
            node_labels,
            edges: out,
            adj,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_label(&self, v: usize) -> u32 {
        self.node_labels[v]
    }

    pub fn node_labels(&self) -> &[u32] {
        &self.node_labels
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[v]
    }

    /// Edge id and label between `a` and `b`, if adjacent.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<(usize, u32)> {
        self.adj[a]
            .binary_search_by(|&(x, _)| x.cmp(&b))
            .ok()
            .map(|pos| {
                let id = self.adj[a][pos].1;
                (id, self.edges[id].label)
            })
    }
}

/// Graphs with optional ±1 labels (`None` for unlabeled).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphCorpus {
    pub graphs: Vec<LabeledGraph>,
    pub labels: Vec<Option<f64>>,
    pub ids: Vec<String>,
}

impl GraphCorpus {
    pub fn new(graphs: Vec<LabeledGraph>, labels: Vec<Option<f64>>, ids: Vec<String>) -> Result<Self> {
        if graphs.len() != labels.len() || graphs.len() != ids.len() {
            return invalid("graphs, labels and ids must have equal length");
        }
        if labels.iter().flatten().any(|&y| y != 1.0 && y != -1.0) {
            return invalid("graph labels must be +1, -1 or unlabeled");
        }
        Ok(Self { graphs, labels, ids })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|y| y.is_some()).count()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            graphs: rows.iter().map(|&i| self.graphs[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }
}

/// Vector side information attached to each graph of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SideViewSet {
    /// One `n × d_p` matrix per side view.
    pub views: Vec<Matrix>,
    pub lambdas: Vec<f64>,
    pub names: Vec<String>,
    pub kernel: KernelSpec,
}

impl SideViewSet {
    pub fn new(views: Vec<Matrix>, lambdas: Vec<f64>, names: Vec<String>, kernel: KernelSpec) -> Result<Self> {
        if views.len() != lambdas.len() || views.len() != names.len() {
            return invalid("one weight and one name per side view required");
        }
        if let Some(&l) = lambdas.iter().find(|&&l| !(l >= 0.0) || !l.is_finite()) {
            return invalid(format!("side-view weights must be finite and non-negative, got {l}"));
        }
        if let Some(first) = views.first() {
            if views.iter().any(|z| z.nrows() != first.nrows()) {
                return invalid("side views disagree on the number of graphs");
            }
        }
        Ok(Self {
            views,
            lambdas,
            names,
            kernel,
        })
    }

    pub fn check_rows(&self, n: usize) -> Result<()> {
        match self.views.iter().find(|z| z.nrows() != n) {
            Some(z) => invalid(format!("side view has {} rows, corpus has {n} graphs", z.nrows())),
            None => Ok(()),
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            views: self
                .views
                .iter()
                .map(|z| Matrix::from_fn(rows.len(), z.ncols(), |i, j| z[(rows[i], j)]))
                .collect(),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_validation() {
        assert!(LabeledGraph::new(vec![0, 1], vec![(0, 0, 0)]).is_err());
        assert!(LabeledGraph::new(vec![0, 1], vec![(0, 1, 0), (1, 0, 0)]).is_err());
        assert!(LabeledGraph::new(vec![0, 1], vec![(0, 2, 0)]).is_err());
        let g = LabeledGraph::new(vec![0, 1, 2], vec![(0, 1, 5), (2, 1, 0)]).unwrap();
        assert_eq!(g.edge_between(1, 0), Some((0, 5)));
        assert_eq!(g.edge_between(0, 2), None);
    }
}
