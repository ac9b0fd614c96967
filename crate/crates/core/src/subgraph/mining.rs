//! Branch-and-bound top-k search over the gSpan tree.

use serde::{Deserialize, Serialize};

use super::gside::{build_omega, build_phi, build_theta, gside_bound, gside_score, SignedLaplacian};
use super::gspan::{gspan_enumerate, DfsCode, Visit};
use super::{GraphCorpus, LabeledGraph, SideViewSet};
use crate::error::{invalid, Result};
use crate::numkit::kernel::kernel_matrix;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MiningConfig {
    pub k: usize,
    pub min_sup: usize,
    pub max_edges: usize,
    /// Cut subtrees whose bound cannot beat the current top-k.
    pub prune: bool,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            k: 10,
            min_sup: 2,
            max_edges: 4,
            prune: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScoredPattern {
    pub code: DfsCode,
    pub indicator: Vec<bool>,
    pub support: usize,
    pub q: f64,
    pub q_hat: f64,
    /// Position in the search's visit order.
    pub visit: usize,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MiningResult {
    /// Ascending by score, ties by visit order.
    pub patterns: Vec<ScoredPattern>,
    pub nodes_visited: usize,
    pub subtrees_pruned: usize,
}

/// Builds `Φ`, `L` and `L̂` from the corpus labels and side views.
pub fn signed_laplacian(corpus: &GraphCorpus, side: &SideViewSet) -> Result<SignedLaplacian> {
    side.check_rows(corpus.len())?;
    let omega = build_omega(&corpus.labels)?;
    let thetas = side
        .views
        .iter()
        .map(|z| build_theta(&kernel_matrix(z, side.kernel)?))
        .collect::<Result<Vec<_>>>()?;
    build_phi(&omega, &thetas, &side.lambdas)
}

/// Top-k subgraphs by smallest gSide score.
///
/// Once `k` patterns are held, a new pattern is admitted only when its score
/// is strictly below the current maximum `θ`, and it displaces the held
/// pattern with maximal score that was visited last. This keeps exactly the
/// `k` smallest patterns under (score, visit order), so a subtree with
/// `q̂ ≥ θ` can be skipped without changing the result.
pub fn gmsv_mine(corpus: &GraphCorpus, side: &SideViewSet, cfg: &MiningConfig) -> Result<MiningResult> {
    if cfg.k == 0 {
        return invalid("k must be at least 1");
    }
    let lap = signed_laplacian(corpus, side)?;
    let mut top: Vec<ScoredPattern> = Vec::with_capacity(cfg.k + 1);
    let mut theta = f64::INFINITY;
    let mut pruned = 0;
    let mut order = 0;
    let visited = gspan_enumerate(&corpus.graphs, cfg.min_sup, cfg.max_edges, |code, f, support| {
        let q = gside_score(f, &lap.l);
        let q_hat = gside_bound(f, &lap.l_hat);
        let visit = order;
        order += 1;
        if top.len() < cfg.k || q < theta {
            if top.len() == cfg.k {
                let worst = (0..top.len())
                    .max_by(|&a, &b| top[a].q.total_cmp(&top[b].q).then(top[a].visit.cmp(&top[b].visit)))
                    .expect("top-k is full");
                top.swap_remove(worst);
            }
            top.push(ScoredPattern {
                code: code.clone(),
                indicator: f.to_vec(),
                support,
                q,
                q_hat,
                visit,
            });
            if top.len() == cfg.k {
                theta = top.iter().map(|p| p.q).fold(f64::NEG_INFINITY, f64::max);
            }
        }
        if cfg.prune && q_hat >= theta {
            pruned += 1;
            Visit::Prune
        } else {
            Visit::Continue
        }
    })?;
    top.sort_by(|a, b| a.q.total_cmp(&b.q).then(a.visit.cmp(&b.visit)));
    Ok(MiningResult {
        patterns: top,
        nodes_visited: visited,
        subtrees_pruned: pruned,
    })
}

/// Whether `pattern` maps injectively into `g` preserving node labels and
/// edge labels (non-induced).
pub fn contains_subgraph(pattern: &LabeledGraph, g: &LabeledGraph) -> bool {
    let n = pattern.node_count();
    if n == 0 {
        return true;
    }
    if n > g.node_count() || pattern.edge_count() > g.edge_count() {
        return false;
    }
    // vertices in BFS order so each one after the first of its component has
    // an already-mapped neighbor
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        order.push(root);
        let mut head = order.len() - 1;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for &(w, _) in pattern.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    order.push(w);
                }
            }
        }
    }
    let mut map = vec![usize::MAX; n];
    let mut taken = vec![false; g.node_count()];
    extend_match(pattern, g, &order, 0, &mut map, &mut taken)
}

fn extend_match(
    pattern: &LabeledGraph,
    g: &LabeledGraph,
    order: &[usize],
    depth: usize,
    map: &mut [usize],
    taken: &mut [bool],
) -> bool {
    if depth == order.len() {
        return true;
    }
    let v = order[depth];
    let anchor = pattern.neighbors(v).iter().find(|&&(w, _)| map[w] != usize::MAX).map(|&(w, _)| w);
    let candidates: Vec<usize> = match anchor {
        Some(w) => g.neighbors(map[w]).iter().map(|&(x, _)| x).collect(),
        None => (0..g.node_count()).collect(),
    };
    for x in candidates {
        if taken[x] || g.node_label(x) != pattern.node_label(v) {
            continue;
        }
        let consistent = pattern.neighbors(v).iter().all(|&(w, id)| {
            map[w] == usize::MAX
                || g
                    .edge_between(x, map[w])
                    .is_some_and(|(_, label)| label == pattern.edges()[id].label)
        });
        if !consistent {
            continue;
        }
        map[v] = x;
        taken[x] = true;
        if extend_match(pattern, g, order, depth + 1, map, taken) {
            return true;
        }
        map[v] = usize::MAX;
        taken[x] = false;
    }
    false
}

/// Row `i` is the indicator of pattern `i` over `graphs`, recomputed by
/// subgraph tests so it applies to graphs not seen during mining.
pub fn feature_matrix(patterns: &[DfsCode], graphs: &[LabeledGraph]) -> Result<Vec<Vec<bool>>> {
    patterns
        .iter()
        .map(|code| {
            let p = code.to_graph()?;
            Ok(graphs.iter().map(|g| contains_subgraph(&p, g)).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::synth::{synth_graph_corpus, GraphCorpusSpec};
    use crate::numkit::kernel::KernelSpec;
    use crate::Matrix;

    fn edge_graph(a: u32, b: u32) -> LabeledGraph {
        LabeledGraph::new(vec![a, b], vec![(0, 1, 0)]).unwrap()
    }

    #[test]
    fn contains_examples() {
        let g = LabeledGraph::new(vec![0, 1, 2], vec![(0, 1, 0), (1, 2, 0)]).unwrap();
        assert!(contains_subgraph(&edge_graph(0, 1), &g));
        assert!(contains_subgraph(&edge_graph(1, 0), &g));
        assert!(!contains_subgraph(&edge_graph(0, 2), &g));
        let big = LabeledGraph::new(vec![0; 4], vec![(0, 1, 0), (1, 2, 0), (2, 3, 0)]).unwrap();
        let small = LabeledGraph::new(vec![0; 2], vec![(0, 1, 0)]).unwrap();
        assert!(!contains_subgraph(&big, &small));
    }

    #[test]
    fn contains_matches_brute_force() {
        for seed in 0..20 {
            let (corpus, _) = synth_graph_corpus(seed, &GraphCorpusSpec::small());
            for p in &corpus.graphs[..3] {
                for g in &corpus.graphs {
                    assert_eq!(contains_subgraph(p, g), crate::oracle::contains_by_injection(p, g));
                }
            }
        }
    }

    #[test]
    fn feature_matrix_matches_mining_indicators() {
        let (corpus, side) = synth_graph_corpus(5, &GraphCorpusSpec::small());
        let cfg = MiningConfig { k: 8, ..Default::default() };
        let res = gmsv_mine(&corpus, &side, &cfg).unwrap();
        let codes: Vec<DfsCode> = res.patterns.iter().map(|p| p.code.clone()).collect();
        let fm = feature_matrix(&codes, &corpus.graphs).unwrap();
        for (row, p) in fm.iter().zip(&res.patterns) {
            assert_eq!(row, &p.indicator);
        }
    }

    #[test]
    fn large_k_returns_everything_sorted() {
        let (corpus, side) = synth_graph_corpus(2, &GraphCorpusSpec::small());
        let mut total = 0;
        gspan_enumerate(&corpus.graphs, 2, 4, |_, _, _| {
            total += 1;
            Visit::Continue
        })
        .unwrap();
        let res = gmsv_mine(&corpus, &side, &MiningConfig { k: total + 5, ..Default::default() }).unwrap();
        assert_eq!(res.patterns.len(), total);
        assert!(res.patterns.windows(2).all(|w| w[0].q <= w[1].q));
    }

    #[test]
    fn zero_affinity_keeps_first_patterns() {
        let (mut corpus, side) = synth_graph_corpus(3, &GraphCorpusSpec::small());
        corpus.labels = vec![None; corpus.len()];
        let side = SideViewSet::new(side.views, vec![0.0; side.lambdas.len()], side.names, KernelSpec::Rbf).unwrap();
        let res = gmsv_mine(&corpus, &side, &MiningConfig { k: 4, prune: false, ..Default::default() }).unwrap();
        let visits: Vec<usize> = res.patterns.iter().map(|p| p.visit).collect();
        assert_eq!(visits, vec![0, 1, 2, 3]);
        assert!(res.patterns.iter().all(|p| p.q == 0.0));
    }

    #[test]
    fn degenerate_labels_propagate() {
        let (mut corpus, side) = synth_graph_corpus(1, &GraphCorpusSpec::small());
        corpus.labels = vec![Some(1.0); corpus.len()];
        assert!(gmsv_mine(&corpus, &side, &MiningConfig::default()).is_err());
        let bad = SideViewSet::new(vec![Matrix::zeros(3, 1)], vec![1.0], vec!["z".into()], KernelSpec::Rbf).unwrap();
        assert!(gmsv_mine(&corpus, &bad, &MiningConfig::default()).is_err());
    }
}
