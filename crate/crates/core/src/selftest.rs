//! Oracle and property checks behind the `selftest` command.
//!
//! Each check compares a library routine against an independent oracle from
//! [`crate::oracle`] or a seeded synthetic ground truth. [`Scale::Full`] runs
//! the complete seed counts; [`Scale::Quick`] runs a prefix of them with the
//! same pass fractions.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bne::{
    orthonormalize, relative_error, subject_gradient, tbne_fit, update_b, update_p, update_w, BneConfig,
    GuidanceKernel, SubjectTerms,
};
use crate::dataio::synth::{
    synth_graph_corpus, synth_multiview, synth_planted_tensor, synth_sessions, GraphCorpusSpec, MultiviewRule,
    SessionSpec,
};
use crate::deepmood::{
    fm_head, mvm_head, parameter_count, train, FusionHead, HeadKind, MoodModel, SessionInstance, TrainConfig,
};
use crate::mvfs::{rank_linear, ranking_order, tmvfs_select, SelectionConfig};
use crate::numkit::stiefel::feasibility_error;
use crate::oracle;
use crate::subgraph::{gmsv_mine, gside_bound, gside_score, gspan_enumerate, signed_laplacian, MiningConfig, Visit};
use crate::tensor::{
    inner_product, khatri_rao, matricize, outer_product, refold, Mode, PartiallySymmetricTensor3, Tensor3,
};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// A fixed prefix of the seeds, for a fast smoke run.
    Quick,
    #[default]
    Full,
}

impl Scale {
    fn seeds(self, full: u64) -> u64 {
        match self {
            Scale::Full => full,
            Scale::Quick => (full / 5).max(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(id: u32, name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { id, name, passed, detail }
}

/// Smallest count that reaches `fraction` of `n`.
fn required(fraction: f64, n: u64) -> u64 {
    (fraction * n as f64 - 1e-9).ceil() as u64
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn uniform_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Runs every check in id order.
pub fn run_all(scale: Scale) -> Vec<CheckOutcome> {
    vec![
        tensor_identities(scale),
        factorized_ranking(scale),
        planted_feature_recovery(scale),
        bound_soundness(scale),
        pruning_equivalence(scale),
        gspan_completeness(scale),
        planted_tensor_recovery(scale),
        bne_stationarity(scale),
        fusion_oracles(scale),
        mood_gradients_and_overfit(scale),
    ]
}

/// Rank-one inner product and Khatri–Rao Gram identities to 1e-12; exact
/// matricize/refold round trips.
pub fn tensor_identities(scale: Scale) -> CheckOutcome {
    let n = scale.seeds(100);
    let mut worst_inner = 0.0f64;
    let mut worst_gram = 0.0f64;
    let mut roundtrip_ok = true;
    for seed in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims: Vec<usize> = (0..3).map(|_| rng.random_range(1..6)).collect();
        let vecs: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..dims[i % 3]).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let a = outer_product(&vecs[0], &vecs[1], &vecs[2]).expect("positive dims");
        let b = outer_product(&vecs[3], &vecs[4], &vecs[5]).expect("positive dims");
        let lhs = inner_product(&a, &b).expect("same dims");
        let rhs = oracle::dot(&vecs[0], &vecs[3]) * oracle::dot(&vecs[1], &vecs[4]) * oracle::dot(&vecs[2], &vecs[5]);
        worst_inner = worst_inner.max(rel(lhs, rhs));

        let k = rng.random_range(1..5);
        let am = uniform_matrix(&mut rng, dims[0], k);
        let bm = uniform_matrix(&mut rng, dims[1], k);
        let kr = khatri_rao(&am, &bm).expect("same rank");
        let gram = kr.transpose() * &kr;
        let hadamard = (am.transpose() * &am).component_mul(&(bm.transpose() * &bm));
        worst_gram = worst_gram.max((&gram - &hadamard).norm() / hadamard.norm().max(f64::MIN_POSITIVE));

        let t = Tensor3::from_fn([dims[0], dims[1], dims[2]], |_, _, _| rng.random_range(-1.0..1.0)).expect("dims");
        for (axis, mode) in [Mode::One, Mode::Two, Mode::Three].into_iter().enumerate() {
            let m = matricize(&t, mode);
            let back = refold(&m, mode, t.dims()).expect("matching dims");
            roundtrip_ok &= back.data() == t.data() && m == oracle::matricize_by_index_rule(&t, axis);
        }
    }
    let passed = worst_inner <= 1e-12 && worst_gram <= 1e-12 && roundtrip_ok;
    outcome(
        1,
        "tensor algebra identities",
        passed,
        format!("{n} seeds: inner rel err {worst_inner:.2e}, gram rel err {worst_gram:.2e}, round trip exact {roundtrip_ok}"),
    )
}

/// Factorized ranking order equals the order from the dense weight tensor.
pub fn factorized_ranking(scale: Scale) -> CheckOutcome {
    let n = scale.seeds(50);
    let mut mismatches = 0;
    let mut cases = 0;
    for seed in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for m in [2usize, 3] {
            let ws: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..rng.random_range(1..=6)).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            for v in 0..m {
                cases += 1;
                let dense = oracle::dense_slice_ranking(&ws, v);
                if ranking_order(&rank_linear(&ws[v])) != ranking_order(&dense) {
                    mismatches += 1;
                }
            }
        }
    }
    outcome(
        2,
        "factorized ranking matches dense tensor",
        mismatches == 0,
        format!("{cases} view rankings over {n} seeds, {mismatches} mismatches"),
    )
}

/// The informative feature survives in both views of the product-sign rule.
pub fn planted_feature_recovery(scale: Scale) -> CheckOutcome {
    let n = scale.seeds(100);
    let cfg = SelectionConfig {
        targets: vec![1, 1],
        ..Default::default()
    };
    let mut hits = 0;
    let mut errors = 0;
    for seed in 0..n {
        let ds = synth_multiview(seed, 50, &[10, 10], MultiviewRule::default());
        match tmvfs_select(&ds, &cfg) {
            Ok(st) if st.selected[0] == [0] && st.selected[1] == [0] => hits += 1,
            Ok(_) => {}
            Err(_) => errors += 1,
        }
    }
    let need = required(0.95, n);
    outcome(
        3,
        "planted feature recovery",
        hits >= need,
        format!("{hits}/{n} runs kept the informative feature in both views (need {need}, {errors} errors)"),
    )
}

/// `q(g') ≥ q̂(g)` for every ancestor `g` of every visited pattern `g'`.
pub fn bound_soundness(scale: Scale) -> CheckOutcome {
    let n = scale.seeds(50);
    let mut pairs = 0usize;
    let mut violations = 0usize;
    let mut failures = 0usize;
    for seed in 0..n {
        let (corpus, side) = synth_graph_corpus(seed, &GraphCorpusSpec::small());
        let Ok(lap) = signed_laplacian(&corpus, &side) else {
            failures += 1;
            continue;
        };
        // (q, q̂) of the patterns on the current DFS path
        let mut path: Vec<(f64, f64)> = Vec::new();
        let res = gspan_enumerate(&corpus.graphs, 1, 4, |code, f, _| {
            path.truncate(code.len() - 1);
            let q = gside_score(f, &lap.l);
            for &(_, q_hat) in &path {
                pairs += 1;
                if q < q_hat {
                    violations += 1;
                }
            }
            path.push((q, gside_bound(f, &lap.l_hat)));
            Visit::Continue
        });
        if res.is_err() {
            failures += 1;
        }
    }
    outcome(
        4,
        "side-view bound soundness",
        violations == 0 && failures == 0 && pairs > 0,
        format!("{pairs} sub/supergraph pairs over {n} corpora, {violations} violations, {failures} failed corpora"),
    )
}

/// Pruned and exhaustive top-k agree; pruning visits fewer patterns.
pub fn pruning_equivalence(scale: Scale) -> CheckOutcome {
    let n = scale.seeds(50);
    let mut same = 0;
    let mut fewer = 0;
    for seed in 0..n {
        let (corpus, side) = synth_graph_corpus(seed, &GraphCorpusSpec::small());
        let run = |prune| gmsv_mine(&corpus, &side, &MiningConfig { k: 3, min_sup: 2, max_edges: 4, prune });
        let (Ok(a), Ok(b)) = (run(true), run(false)) else {
            continue;
        };
        let key = |r: &crate::subgraph::MiningResult| -> Vec<_> {
            r.patterns.iter().map(|p| (p.code.clone(), p.q.to_bits())).collect()
        };
        if key(&a) == key(&b) {
            same += 1;
        }
        if a.nodes_visited < b.nodes_visited {
            fewer += 1;
        }
    }
    let need = required(0.8, n);
    outcome(
        5,
        "pruned search equals exhaustive search",
        same == n && fewer >= need,
        format!("identical on {same}/{n} corpora, fewer nodes on {fewer}/{n} (need {need})"),
    )
}

/// gSpan's frequent patterns equal a brute-force enumeration.
pub fn gspan_completeness(scale: Scale) -> CheckOutcome {
    let n = scale.seeds(20);
    let mut ok = 0;
    for seed in 0..n {
        let (corpus, _) = synth_graph_corpus(seed, &GraphCorpusSpec::small());
        let mut got = BTreeMap::new();
        let mut duplicate = false;
        let res = gspan_enumerate(&corpus.graphs, 2, 4, |code, f, _| {
            let g = code.to_graph().expect("visited codes are valid");
            if got.insert(oracle::canonical_form(&g), f.to_vec()).is_some() {
                duplicate = true;
            }
            Visit::Continue
        });
        let want = oracle::frequent_subgraphs_by_enumeration(&corpus.graphs, 2, 4);
        if res.is_ok() && !duplicate && got == want {
            ok += 1;
        }
    }
    outcome(
        6,
        "frequent pattern completeness",
        ok == n,
        format!("{ok}/{n} corpora enumerate exactly the brute-force pattern set"),
    )
}

/// Noiseless planted factors are recovered; hand case of the B update.
pub fn planted_tensor_recovery(scale: Scale) -> CheckOutcome {
    let n = scale.seeds(20);
    let mut hits = 0;
    let mut worst = 0.0f64;
    for seed in 0..n {
        let (x, _, _) = synth_planted_tensor(seed, 8, 12, 3, 0.0);
        let cfg = BneConfig {
            rank: 3,
            alpha: 0.0,
            beta: 0.0,
            tol: 1e-12,
            seed,
            ..Default::default()
        };
        let Ok(model) = tbne_fit(&x, &GuidanceKernel::none(12), &Matrix::zeros(0, 1), &cfg) else {
            continue;
        };
        let err = relative_error(&model, &x).unwrap_or(f64::INFINITY);
        worst = worst.max(err);
        if err <= 1e-3 && feasibility_error(&model.s) <= 1e-6 {
            hits += 1;
        }
    }
    let scalar = PartiallySymmetricTensor3::new(Tensor3::from_vec([1, 1, 1], vec![6.0]).expect("one entry"))
        .expect("a scalar is symmetric");
    let one = |v: f64| Matrix::from_element(1, 1, v);
    let b = update_b(&scalar, &one(2.0), &one(3.0), &one(0.0), 2.0).map(|b| b[(0, 0)]);
    let hand_ok = matches!(b, Ok(v) if (v - 78.0 / 74.0).abs() <= 1e-12);
    let need = required(0.9, n);
    outcome(
        7,
        "planted network factorization recovery",
        hits >= need && hand_ok,
        format!("{hits}/{n} seeds within 1e-3 (need {need}, worst {worst:.2e}); scalar update case {hand_ok}"),
    )
}

/// Augmented Lagrangian of the split node copies, computed entry-wise.
fn split_lagrangian(x: &Tensor3, b: &Matrix, p: &Matrix, s: &Matrix, u: &Matrix, mu: f64) -> f64 {
    let fit = oracle::cp_sum_of_outer(b, p, s);
    let mut r = 0.0;
    for (a, c) in x.data().iter().zip(fit.data()) {
        r += (a - c) * (a - c);
    }
    r + u.component_mul(&(p - b)).sum() + 0.5 * mu * (p - b).norm_squared()
}

/// Subject gradient against finite differences of the entry-wise objective;
/// each closed-form block update is a stationary point of its subproblem.
pub fn bne_stationarity(scale: Scale) -> CheckOutcome {
    let n = scale.seeds(20);
    let mut worst_s = 0.0f64;
    let mut worst_block = 0.0f64;
    let mut failures = 0;
    for seed in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, nn, k, c, l) = (4, 6, 2, 2, 3);
        let mats: Vec<Matrix> = (0..nn)
            .map(|_| {
                let a = uniform_matrix(&mut rng, m, m);
                &a + a.transpose()
            })
            .collect();
        let x = crate::tensor::stack_networks(&mats).expect("symmetric slices");
        let s = orthonormalize(uniform_matrix(&mut rng, nn, k));
        let b0 = uniform_matrix(&mut rng, m, k);
        let p = uniform_matrix(&mut rng, m, k);
        let u = uniform_matrix(&mut rng, m, k);
        let w = uniform_matrix(&mut rng, k, c);
        let y = uniform_matrix(&mut rng, l, c);
        let z = uniform_matrix(&mut rng, nn, 3);
        let lz = GuidanceKernel::linear(&z).expect("finite features").laplacian;
        let (alpha, beta, gamma, mu) = (0.3, 0.7, 0.5, 0.8);
        let xt = x.tensor();

        let terms = SubjectTerms {
            x3: &matricize(xt, Mode::Three),
            g: &khatri_rao(&p, &b0).expect("same rank"),
            lz: &lz,
            w: &w,
            y: &y,
            alpha,
            beta,
        };
        let half = |s: &Matrix| {
            let fit = oracle::cp_sum_of_outer(&b0, &p, s);
            let r: f64 = xt.data().iter().zip(fit.data()).map(|(a, c)| (a - c) * (a - c)).sum();
            let guide = (s.transpose() * &lz * s).trace();
            let cls = (s.rows(0, l) * &w - &y).norm_squared();
            0.5 * (r + alpha * guide + beta * cls)
        };
        let an = subject_gradient(&s, &terms);
        let fd = oracle::finite_difference(half, &s, 1e-6);
        worst_s = worst_s.max((&fd - &an).norm() / an.norm().max(f64::MIN_POSITIVE));

        let (Ok(b), Ok(p_new), Ok(w_new)) = (
            update_b(&x, &s, &p, &u, mu),
            update_p(&x, &s, &b0, &u, mu),
            update_w(&s, &y, gamma),
        ) else {
            failures += 1;
            continue;
        };
        let gb = oracle::finite_difference(|b| split_lagrangian(xt, b, &p, &s, &u, mu), &b, 1e-5);
        let gp = oracle::finite_difference(|p| split_lagrangian(xt, &b0, p, &s, &u, mu), &p_new, 1e-5);
        let ls = s.rows(0, l).into_owned();
        let gw = oracle::finite_difference(|w| (&ls * w - &y).norm_squared() + gamma * w.norm_squared(), &w_new, 1e-5);
        for (g, v) in [(gb, &b), (gp, &p_new), (gw, &w_new)] {
            worst_block = worst_block.max(g.norm() / (1.0 + v.norm()));
        }
    }
    outcome(
        8,
        "network factorization gradients and stationarity",
        worst_s <= 1e-6 && worst_block <= 1e-6 && failures == 0,
        format!("{n} seeds: subject gradient rel err {worst_s:.2e}, worst scaled block gradient {worst_block:.2e}"),
    )
}

/// FM and MVM heads equal their brute-force expansions; parameter counts
/// follow the closed forms.
pub fn fusion_oracles(scale: Scale) -> CheckOutcome {
    let n = scale.seeds(100);
    let mut worst = 0.0f64;
    for seed in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(2..=3);
        let widths: Vec<usize> = (0..m).map(|_| rng.random_range(1..=4)).collect();
        let c = rng.random_range(1..=3);
        let d_k = rng.random_range(1..=4);
        let hs: Vec<Vector> = widths.iter().map(|&d| Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))).collect();
        let raw: Vec<Vec<f64>> = hs.iter().map(|h| h.iter().copied().collect()).collect();
        let mvm = FusionHead::new(HeadKind::Mvm, c, d_k, &widths, Some(&mut rng)).expect("valid head");
        let FusionHead::Mvm { u } = &mvm else { unreachable!() };
        for a in 0..c {
            let got = mvm_head(&hs, &mvm, a).expect("shapes match");
            worst = worst.max((got - oracle::mvm_expansion(&u[a], &raw)).abs());
        }
        let h = Vector::from_iterator(raw.iter().map(Vec::len).sum(), raw.iter().flatten().copied());
        let fm = FusionHead::new(HeadKind::Fm, c, d_k, &[h.len()], Some(&mut rng)).expect("valid head");
        let FusionHead::Fm { u, w } = &fm else { unreachable!() };
        for a in 0..c {
            let got = fm_head(&h, &fm, a).expect("shapes match");
            worst = worst.max((got - oracle::fm_expansion(&u[a], w[a].as_slice(), h.as_slice())).abs());
        }
    }
    let mut grid = 0;
    let mut count_errors = 0;
    for c in 1..=4 {
        for d_k in [1, 2, 4, 8, 16] {
            for m in 2..=4 {
                for width in [1, 3, 8] {
                    let widths = vec![width; m];
                    for kind in [HeadKind::Fc, HeadKind::Fm, HeadKind::Mvm] {
                        grid += 1;
                        let head = FusionHead::new(kind, c, d_k, &widths, None).expect("valid head");
                        if head.num_params() != parameter_count(kind, c, d_k, m * width, m) {
                            count_errors += 1;
                        }
                    }
                }
            }
        }
    }
    outcome(
        9,
        "fusion head oracles and parameter counts",
        worst <= 1e-10 && count_errors == 0,
        format!("{n} seeds: max abs deviation {worst:.2e}; {count_errors}/{grid} parameter count mismatches"),
    )
}

fn model_gradient_error(seed: u64) -> f64 {
    let head = [HeadKind::Fc, HeadKind::Fm, HeadKind::Mvm][seed as usize % 3];
    let classes = if seed % 4 == 3 { 1 } else { 2 };
    let cfg = TrainConfig {
        d_h: 2,
        d_k: 2,
        head,
        classes,
        dropout: 0.0,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = MoodModel::init(&[2, 3], &cfg, &mut rng).expect("valid config");
    for m in model.matrices_mut() {
        *m *= 1.5;
    }
    let s = SessionInstance {
        views: [2, 3]
            .iter()
            .map(|&d| uniform_matrix(&mut rng, d, 2 + seed as usize % 5))
            .collect(),
        label: if classes == 1 { 0.7 } else { (seed % 2) as f64 },
    };
    let (_, grad) = model.loss_and_gradient(&s, None).expect("valid instance");
    let loss = |m: &MoodModel| m.loss_and_gradient(&s, None).expect("valid instance").0;
    let h = 1e-5;
    let mut diff = 0.0;
    let mut norm = 0.0;
    let grads = grad.matrices();
    for (mi, g) in grads.iter().enumerate() {
        for idx in 0..g.len() {
            let mut plus = model.clone();
            plus.matrices_mut()[mi][idx] += h;
            let mut minus = model.clone();
            minus.matrices_mut()[mi][idx] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            diff += (g[idx] - numeric).powi(2);
            norm += g[idx] * g[idx];
        }
    }
    diff.sqrt() / norm.sqrt().max(f64::MIN_POSITIVE)
}

/// Whole-model finite differences, then overfitting a small synthetic set
/// with every fusion head.
pub fn mood_gradients_and_overfit(scale: Scale) -> CheckOutcome {
    let n_fd = scale.seeds(20);
    let worst = (0..n_fd).map(model_gradient_error).fold(0.0f64, f64::max);
    let n_fit = scale.seeds(20);
    let need = required(0.9, n_fit);
    let mut per_head = Vec::new();
    let mut fit_ok = true;
    for head in [HeadKind::Fc, HeadKind::Fm, HeadKind::Mvm] {
        let mut hits = 0;
        for seed in 0..n_fit {
            let ds = synth_sessions(seed, &SessionSpec::default());
            let cfg = TrainConfig {
                epochs: 200,
                batch_size: 4,
                head,
                seed,
                ..Default::default()
            };
            if let Ok(out) = train(&ds, None, &cfg) {
                if out.history.iter().any(|e| e.train_metric == 1.0) {
                    hits += 1;
                }
            }
        }
        fit_ok &= hits >= need;
        per_head.push(format!("{head} {hits}/{n_fit}"));
    }
    outcome(
        10,
        "sequence model gradients and overfit",
        worst <= 1e-4 && fit_ok,
        format!(
            "{n_fd} seeds: gradient rel err {worst:.2e}; training accuracy 1.0 within 200 epochs: {} (need {need})",
            per_head.join(", ")
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn required_counts() {
        assert_eq!(required(0.95, 100), 95);
        assert_eq!(required(0.9, 20), 18);
        assert_eq!(required(0.8, 10), 8);
        assert_eq!(required(0.9, 4), 4);
    }

    #[test]
    fn quick_scale_keeps_a_prefix() {
        assert_eq!(Scale::Quick.seeds(100), 20);
        assert_eq!(Scale::Quick.seeds(5), 2);
        assert_eq!(Scale::Full.seeds(50), 50);
    }

    #[test]
    fn cheap_checks_pass_quickly() {
        for c in [tensor_identities(Scale::Quick), factorized_ranking(Scale::Quick), fusion_oracles(Scale::Quick)] {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
