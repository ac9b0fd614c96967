//! Seeded synthetic datasets with documented generative rules.
//!
//! All generators use `ChaCha8Rng`, so a seed fixes the output bytes on
//! every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rand_distr::{Distribution, Normal};

use crate::mvfs::MultiViewDataset;
use crate::numkit::kernel::KernelSpec;
use crate::subgraph::{contains_subgraph, GraphCorpus, LabeledGraph, SideViewSet};
use crate::Matrix;

/// Label rule for [`synth_multiview`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MultiviewRule {
    /// `y = sign(Π_v x⁽ᵛ⁾[informative] − threshold)`, `sign(0) = +1`.
    ProductSign { informative: usize, threshold: f64 },
}

impl Default for MultiviewRule {
    fn default() -> Self {
        MultiviewRule::ProductSign {
            informative: 0,
            threshold: 0.25,
        }
    }
}

/// Features drawn i.i.d. uniform on `[0, 1)`; view `v` has `dims[v]`
/// features.
pub fn synth_multiview(seed: u64, n: usize, dims: &[usize], rule: MultiviewRule) -> MultiViewDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut views: Vec<Matrix> = dims.iter().map(|&d| Matrix::zeros(d, n)).collect();
    // instance-major draw order keeps a prefix of instances stable across n
    for i in 0..n {
        for x in views.iter_mut() {
            for f in 0..x.nrows() {
                x[(f, i)] = rng.random::<f64>();
            }
        }
    }
    let labels = (0..n)
        .map(|i| match rule {
            MultiviewRule::ProductSign { informative, threshold } => {
                let prod: f64 = views.iter().map(|x| x[(informative, i)]).product();
                if prod - threshold >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        })
        .collect();
    let names = (0..dims.len()).map(|v| format!("view{v}")).collect();
    MultiViewDataset::new(views, labels, names).expect("generator produces valid data")
}

/// Parameters of [`synth_graph_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct GraphCorpusSpec {
    pub graphs: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub node_labels: u32,
    pub edge_prob: f64,
    /// Labeled path planted in the designated graphs.
    pub planted: Vec<u32>,
    /// Probability that a graph is designated to carry the planted path.
    pub plant_prob: f64,
    pub side_views: usize,
    pub side_dim: usize,
    /// Noise scale of the side views around the class signal.
    pub side_noise: f64,
}

impl GraphCorpusSpec {
    /// Eight graphs of 4 to 6 nodes, three node labels, two side views.
    pub fn small() -> Self {
        Self {
            graphs: 8,
            min_nodes: 4,
            max_nodes: 6,
            node_labels: 3,
            edge_prob: 0.6,
            planted: vec![0, 1, 2],
            plant_prob: 0.5,
            side_views: 2,
            side_dim: 2,
            side_noise: 0.5,
        }
    }
}

fn random_graph(rng: &mut ChaCha8Rng, spec: &GraphCorpusSpec, plant: bool) -> LabeledGraph {
    let n = rng.random_range(spec.min_nodes..=spec.max_nodes);
    let mut labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..spec.node_labels)).collect();
    let mut edges = Vec::new();
    let k = spec.planted.len();
    if plant {
        labels[..k].copy_from_slice(&spec.planted);
        edges.extend((1..k).map(|i| (i - 1, i, 0)));
    }
    for a in 0..n {
        for b in a + 1..n {
            let on_path = plant && b == a + 1 && b < k;
            if !on_path && rng.random::<f64>() < spec.edge_prob {
                edges.push((a, b, 0));
            }
        }
    }
    LabeledGraph::new(labels, edges).expect("generated graph is simple")
}

/// Random simple graphs; designated graphs contain the planted labeled path
/// and all others are resampled until they do not. Designated graphs are
/// labeled +1, the rest −1. Side view `p` is the label plus Gaussian noise
/// for `p = 0` and pure noise otherwise.
pub fn synth_graph_corpus(seed: u64, spec: &GraphCorpusSpec) -> (GraphCorpus, SideViewSet) {
    assert!(spec.planted.len() <= spec.min_nodes, "planted path longer than the smallest graph");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pattern = LabeledGraph::new(
        spec.planted.clone(),
        (1..spec.planted.len()).map(|i| (i - 1, i, 0)).collect(),
    )
    .expect("path is simple");
    let mut designated: Vec<bool> = (0..spec.graphs).map(|_| rng.random::<f64>() < spec.plant_prob).collect();
    // both classes are needed for the label constraints
    if spec.graphs >= 2 {
        designated[0] = true;
        designated[1] = false;
    }
    let mut graphs = Vec::with_capacity(spec.graphs);
    for &d in &designated {
        let g = loop {
            let g = random_graph(&mut rng, spec, d);
            if d || !contains_subgraph(&pattern, &g) {
                break g;
            }
        };
        graphs.push(g);
    }
    let labels: Vec<Option<f64>> = designated.iter().map(|&d| Some(if d { 1.0 } else { -1.0 })).collect();
    let normal = Normal::new(0.0, spec.side_noise).expect("valid noise scale");
    let views = (0..spec.side_views)
        .map(|p| {
            Matrix::from_fn(spec.graphs, spec.side_dim, |i, _| {
                let signal = if p == 0 { labels[i].unwrap_or(0.0) } else { 0.0 };
                signal + normal.sample(&mut rng)
            })
        })
        .collect();
    let ids = (0..spec.graphs).map(|i| format!("g{i}")).collect();
    let corpus = GraphCorpus::new(graphs, labels, ids).expect("generated corpus is valid");
    let names = (0..spec.side_views).map(|p| format!("side{p}")).collect();
    let side = SideViewSet::new(views, vec![1.0; spec.side_views], names, KernelSpec::Rbf).expect("valid side views");
    (corpus, side)
}

/// `X = [[B, B, S]] + E` with `B ∼ N(0,1)` (`m × k`), `S` the QR
/// orthonormalization of an `n × k` standard normal draw, and `E` symmetric
/// Gaussian noise of standard deviation `noise` per slice entry. Returns
/// `(X, S, B)`.
pub fn synth_planted_tensor(
    seed: u64,
    m: usize,
    n: usize,
    k: usize,
    noise: f64,
) -> (crate::tensor::PartiallySymmetricTensor3, Matrix, Matrix) {
    assert!(k <= n && m > 0, "planted rank must not exceed the number of subjects");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let b = Matrix::from_fn(m, k, |_, _| std.sample(&mut rng));
    let s = crate::bne::orthonormalize(Matrix::from_fn(n, k, |_, _| std.sample(&mut rng)));
    let mut t = crate::bne::reconstruct(&b, &s).expect("matching ranks");
    if noise > 0.0 {
        let eps = Normal::new(0.0, noise).expect("finite noise");
        for sl in 0..n {
            for j in 0..m {
                for i in 0..=j {
                    let v = t.get(i, j, sl) + eps.sample(&mut rng);
                    t.set(i, j, sl, v);
                    t.set(j, i, sl, v);
                }
            }
        }
    }
    let x = crate::tensor::PartiallySymmetricTensor3::new(t).expect("symmetric by construction");
    (x, s, b)
}

/// Parameters of [`synth_sessions`].
#[derive(Debug, Clone, PartialEq)]
pub struct SessionSpec {
    pub sessions: usize,
    /// Feature width per view.
    pub dims: Vec<usize>,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SessionSpec {
    fn default() -> Self {
        Self {
            sessions: 16,
            dims: vec![2, 3],
            min_len: 10,
            max_len: 20,
        }
    }
}

/// Sessions with independent view lengths drawn uniformly from
/// `min_len..=max_len`. View 0 entries are `o + u` with a per-session offset
/// `o ∼ U(−0.5, 0.5)` and `u ∼ U(0, 1)`; other views are `U(0, 1)` noise.
/// The label is class 1 when the mean of all view-0 entries is at least 0.5,
/// class 0 otherwise.
pub fn synth_sessions(seed: u64, spec: &SessionSpec) -> crate::deepmood::SessionDataset {
    assert!(!spec.dims.is_empty() && spec.min_len >= 1 && spec.min_len <= spec.max_len, "invalid session spec");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = (0..spec.sessions)
        .map(|_| {
            let offset = rng.random_range(-0.5..0.5);
            let views: Vec<Matrix> = spec
                .dims
                .iter()
                .enumerate()
                .map(|(p, &d)| {
                    let len = rng.random_range(spec.min_len..=spec.max_len);
                    let shift = if p == 0 { offset } else { 0.0 };
                    Matrix::from_fn(d, len, |_, _| shift + rng.random_range(0.0..1.0))
                })
                .collect();
            let label = if views[0].mean() >= 0.5 { 1.0 } else { 0.0 };
            crate::deepmood::SessionInstance { views, label }
        })
        .collect();
    let names = (0..spec.dims.len()).map(|p| format!("view{p}")).collect();
    crate::deepmood::SessionDataset::new(instances, names, spec.dims.clone()).expect("generated sessions are valid")
}
