//! Brute-force reference computations.
//!
//! Everything here is written directly from the defining formulas, with no
//! reuse of the optimized code paths it is used to check: explicit index
//! loops instead of unfoldings, dense tensors instead of factorizations,
//! exhaustive enumeration instead of search, finite differences instead of
//! analytic gradients.

use std::collections::BTreeMap;

use crate::subgraph::LabeledGraph;
use crate::tensor::Tensor3;
use crate::Matrix;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mode unfolding built entry by entry from the column index rule
/// `j = Σ_{p≠k} i_p J_p`, `J_p = Π_{q<p, q≠k} I_q`.
pub fn matricize_by_index_rule(t: &Tensor3, axis: usize) -> Matrix {
    let dims = t.dims();
    let cols: usize = (0..3).filter(|&p| p != axis).map(|p| dims[p]).product();
    let mut m = Matrix::zeros(dims[axis], cols);
    for i0 in 0..dims[0] {
        for i1 in 0..dims[1] {
            for i2 in 0..dims[2] {
                let idx = [i0, i1, i2];
                let mut j = 0;
                let mut stride = 1;
                for p in 0..3 {
                    if p == axis {
                        continue;
                    }
                    j += idx[p] * stride;
                    stride *= dims[p];
                }
                m[(idx[axis], j)] = t.get(i0, i1, i2);
            }
        }
    }
    m
}

/// `Σ_f A(:,f) ∘ B(:,f) ∘ C(:,f)` by explicit summation.
pub fn cp_sum_of_outer(a: &Matrix, b: &Matrix, c: &Matrix) -> Tensor3 {
    let dims = [a.nrows(), b.nrows(), c.nrows()];
    let mut t = Tensor3::zeros(dims).expect("positive dims");
    for f in 0..a.ncols() {
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let v = t.get(i, j, k) + a[(i, f)] * b[(j, f)] * c[(k, f)];
                    t.set(i, j, k, v);
                }
            }
        }
    }
    t
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_difference(f: impl Fn(&Matrix) -> f64, x: &Matrix, h: f64) -> Matrix {
    let mut g = Matrix::zeros(x.nrows(), x.ncols());
    let mut probe = x.clone();
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            let orig = probe[(i, j)];
            probe[(i, j)] = orig + h;
            let up = f(&probe);
            probe[(i, j)] = orig - h;
            let down = f(&probe);
            probe[(i, j)] = orig;
            g[(i, j)] = (up - down) / (2.0 * h);
        }
    }
    g
}

/// Builds the dense order-m weight tensor `w⁽¹⁾ ∘ … ∘ w⁽ᵐ⁾` entry by entry
/// and sums the squares of every slice along `view`.
pub fn dense_slice_ranking(weights: &[Vec<f64>], view: usize) -> Vec<f64> {
    let dims: Vec<usize> = weights.iter().map(Vec::len).collect();
    let total: usize = dims.iter().product();
    let mut scores = vec![0.0; dims[view]];
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..total {
        let entry: f64 = idx.iter().zip(weights).map(|(&i, w)| w[i]).product();
        scores[idx[view]] += entry * entry;
        for (p, d) in dims.iter().enumerate() {
            idx[p] += 1;
            if idx[p] < *d {
                break;
            }
            idx[p] = 0;
        }
    }
    scores
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                rec(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Isomorphism-invariant signature: the lexicographically smallest
/// (node labels, upper-triangular adjacency) over all vertex orderings.
/// Adjacency entries are `edge label + 1`, or 0 for no edge.
pub fn canonical_form(g: &LabeledGraph) -> Vec<u32> {
    let n = g.node_count();
    let mut adj = vec![vec![0u32; n]; n];
    for e in g.edges() {
        adj[e.a][e.b] = e.label + 1;
        adj[e.b][e.a] = e.label + 1;
    }
    permutations(n)
        .into_iter()
        .map(|perm| {
            let mut sig: Vec<u32> = vec![n as u32];
            sig.extend(perm.iter().map(|&v| g.node_label(v)));
            for i in 0..n {
                for j in i + 1..n {
                    sig.push(adj[perm[i]][perm[j]]);
                }
            }
            sig
        })
        .min()
        .unwrap_or_default()
}

/// Whether some injective label-preserving map sends every pattern edge to
/// an equally labeled edge of `g`, by trying every injection.
pub fn contains_by_injection(pattern: &LabeledGraph, g: &LabeledGraph) -> bool {
    let (p, n) = (pattern.node_count(), g.node_count());
    if p > n {
        return false;
    }
    fn rec(pattern: &LabeledGraph, g: &LabeledGraph, map: &mut Vec<usize>, used: &mut [bool]) -> bool {
        if map.len() == pattern.node_count() {
            return pattern.edges().iter().all(|e| {
                g.edges().iter().any(|f| {
                    f.label == e.label
                        && ((f.a == map[e.a] && f.b == map[e.b]) || (f.a == map[e.b] && f.b == map[e.a]))
                })
            });
        }
        for x in 0..used.len() {
            if !used[x] && g.node_label(x) == pattern.node_label(map.len()) {
                used[x] = true;
                map.push(x);
                if rec(pattern, g, map, used) {
                    return true;
                }
                map.pop();
                used[x] = false;
            }
        }
        false
    }
    rec(pattern, g, &mut Vec::new(), &mut vec![false; n])
}

/// Every connected subgraph with 1..=`max_edges` edges and at least
/// `min_sup` supporting graphs, keyed by [`canonical_form`], found by
/// enumerating all edge subsets of every graph.
pub fn frequent_subgraphs_by_enumeration(
    graphs: &[LabeledGraph],
    min_sup: usize,
    max_edges: usize,
) -> BTreeMap<Vec<u32>, Vec<bool>> {
    let mut found: BTreeMap<Vec<u32>, Vec<bool>> = BTreeMap::new();
    for (gid, g) in graphs.iter().enumerate() {
        let mut subset = Vec::new();
        fn rec(
            g: &LabeledGraph,
            start: usize,
            max_edges: usize,
            subset: &mut Vec<usize>,
            visit: &mut dyn FnMut(&[usize]),
        ) {
            if !subset.is_empty() {
                visit(subset);
            }
            if subset.len() == max_edges {
                return;
            }
            for e in start..g.edge_count() {
                subset.push(e);
                rec(g, e + 1, max_edges, subset, visit);
                subset.pop();
            }
        }
        rec(g, 0, max_edges, &mut subset, &mut |edges: &[usize]| {
            let mut nodes: Vec<usize> = edges
                .iter()
                .flat_map(|&e| [g.edges()[e].a, g.edges()[e].b])
                .collect();
            nodes.sort_unstable();
            nodes.dedup();
            let local = |v: usize| nodes.binary_search(&v).expect("endpoint present");
            // connectivity by repeated relaxation
            let mut reached = vec![false; nodes.len()];
            reached[0] = true;
            let mut changed = true;
            while changed {
                changed = false;
                for &e in edges {
                    let (a, b) = (local(g.edges()[e].a), local(g.edges()[e].b));
                    if reached[a] != reached[b] {
                        reached[a] = true;
                        reached[b] = true;
                        changed = true;
                    }
                }
            }
            if reached.iter().any(|r| !r) {
                return;
            }
            let sub = LabeledGraph::new(
                nodes.iter().map(|&v| g.node_label(v)).collect(),
                edges
                    .iter()
                    .map(|&e| (local(g.edges()[e].a), local(g.edges()[e].b), g.edges()[e].label))
                    .collect(),
            )
            .expect("subgraph of a valid graph");
            found.entry(canonical_form(&sub)).or_insert_with(|| vec![false; graphs.len()])[gid] = true;
        });
    }
    found.retain(|_, f| f.iter().filter(|&&b| b).count() >= min_sup);
    found
}

/// GRU final state with every gate written as scalar loops.
pub fn gru_straight_line(p: &crate::deepmood::GruParams, seq: &Matrix, reverse: bool) -> Vec<f64> {
    let (d_h, d_p, len) = (p.u.nrows(), p.w.ncols(), seq.ncols());
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut h = vec![0.0; d_h];
    for step in 0..len {
        let t = if reverse { len - 1 - step } else { step };
        let x: Vec<f64> = (0..d_p).map(|i| seq[(i, t)]).collect();
        let mut r = vec![0.0; d_h];
        let mut z = vec![0.0; d_h];
        for a in 0..d_h {
            let mut sr = 0.0;
            let mut sz = 0.0;
            for i in 0..d_p {
                sr += p.w_r[(a, i)] * x[i];
                sz += p.w_z[(a, i)] * x[i];
            }
            for b in 0..d_h {
                sr += p.u_r[(a, b)] * h[b];
                sz += p.u_z[(a, b)] * h[b];
            }
            r[a] = sig(sr);
            z[a] = sig(sz);
        }
        let mut next = vec![0.0; d_h];
        for a in 0..d_h {
            let mut s = 0.0;
            for i in 0..d_p {
                s += p.w[(a, i)] * x[i];
            }
            for b in 0..d_h {
                s += p.u[(a, b)] * (r[b] * h[b]);
            }
            next[a] = z[a] * h[a] + (1.0 - z[a]) * s.tanh();
        }
        h = next;
    }
    h
}

/// `Σ_{i,j} ⟨U(:,i), U(:,j)⟩ h_i h_j + Σ_i w_i h̄_i` with `h̄ = [h; 1]`.
pub fn fm_expansion(u: &Matrix, w: &[f64], h: &[f64]) -> f64 {
    let dc = h.len();
    let mut total = 0.0;
    for i in 0..dc {
        for j in 0..dc {
            let inner: f64 = (0..u.nrows()).map(|f| u[(f, i)] * u[(f, j)]).sum();
            total += inner * h[i] * h[j];
        }
    }
    for i in 0..dc {
        total += w[i] * h[i];
    }
    total + w[dc]
}

/// `Σ_{i_1..i_m} (Σ_f Π_p U⁽ᵖ⁾(f, i_p)) Π_p h̄⁽ᵖ⁾(i_p)` by enumerating every
/// index tuple.
pub fn mvm_expansion(us: &[Matrix], hs: &[Vec<f64>]) -> f64 {
    let bars: Vec<Vec<f64>> = hs.iter().map(|h| h.iter().copied().chain([1.0]).collect()).collect();
    let dk = us[0].nrows();
    let mut idx = vec![0usize; us.len()];
    let mut total = 0.0;
    loop {
        let coef: f64 = (0..dk)
            .map(|f| idx.iter().enumerate().map(|(p, &i)| us[p][(f, i)]).product::<f64>())
            .sum();
        let hprod: f64 = idx.iter().enumerate().map(|(p, &i)| bars[p][i]).product();
        total += coef * hprod;
        let mut p = 0;
        loop {
            if p == idx.len() {
                return total;
            }
            idx[p] += 1;
            if idx[p] < bars[p].len() {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
    }
}
