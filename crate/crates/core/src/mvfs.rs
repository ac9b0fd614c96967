//! Tensor-product multi-view feature selection.
//!
//! The weight tensor over the tensor-product space is kept in factorized form
//! `W = w⁽¹⁾ ∘ … ∘ w⁽ᵐ⁾`. Fixing all views but `v` turns the problem into a
//! standard linear SVM on the rescaled instances `x' = (Q_i / √P) x`, where
//! `P = Π_{j≠v} ‖w⁽ʲ⁾‖²` and `Q_i = Π_{j≠v} ⟨w⁽ʲ⁾, x_i⁽ʲ⁾⟩`. Features are then
//! eliminated one at a time by the smallest squared weight, which ranks
//! features exactly as the sum of squared slices of the dense weight tensor.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numkit::kernel::KernelSpec;
use crate::numkit::svm::{svm_train_kernel, SvmOptions};
use crate::{Matrix, Vector};

/// Labeled instances described by `m ≥ 2` views. Each view is stored
/// features × instances.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    pub views: Vec<Matrix>,
    pub labels: Vec<f64>,
    pub view_names: Vec<String>,
}

impl MultiViewDataset {
    pub fn new(views: Vec<Matrix>, labels: Vec<f64>, view_names: Vec<String>) -> Result<Self> {
        if views.len() < 2 {
            return invalid(format!("multi-view data needs at least 2 views, got {}", views.len()));
        }
        if view_names.len() != views.len() {
            return invalid("one name per view required");
        }
        let n = labels.len();
        if n == 0 {
            return invalid("dataset has no instances");
        }
        for (v, x) in views.iter().enumerate() {
            if x.ncols() != n {
                return invalid(format!("view {v} has {} instances, labels have {n}", x.ncols()));
            }
            if x.nrows() == 0 {
                return invalid(format!("view {v} has no features"));
            }
            if x.iter().any(|e| !e.is_finite()) {
                return invalid(format!("view {v} has non-finite entries"));
            }
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return invalid("labels must be +1 or -1");
        }
        Ok(Self {
            views,
            labels,
            view_names,
        })
    }

    pub fn n_instances(&self) -> usize {
        self.labels.len()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    /// Features of instance `i` in view `v`, restricted to `features`.
    fn point(&self, v: usize, i: usize, features: &[usize]) -> Vector {
        Vector::from_iterator(features.len(), features.iter().map(|&f| self.views[v][(f, i)]))
    }

    /// Keeps only the listed instances.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let views = self
            .views
            .iter()
            .map(|x| Matrix::from_fn(x.nrows(), rows.len(), |f, j| x[(f, rows[j])]))
            .collect();
        Self::new(views, rows.iter().map(|&i| self.labels[i]).collect(), self.view_names.clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    /// Number of features to keep per view.
    pub targets: Vec<usize>,
    pub c: f64,
    pub kernel: KernelSpec,
    /// Refinement rounds once every view has reached its target.
    pub alternations: usize,
    /// Features eliminated per step.
    pub chunk: usize,
    /// Retrain each view against the other views' latest weights. When off,
    /// every view is ranked against the initial weights of the others.
    pub round_robin: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            targets: Vec::new(),
            c: 1.0,
            kernel: KernelSpec::Linear,
            alternations: 3,
            chunk: 1,
            round_robin: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SelectionState {
    /// Surviving feature indices per view, ascending.
    pub selected: Vec<Vec<usize>>,
    /// Weights over the surviving features, aligned with `selected`.
    pub weights: Vec<Vec<f64>>,
    pub bias: f64,
    pub targets: Vec<usize>,
    /// Eliminated feature indices per view in elimination order.
    pub eliminated: Vec<Vec<usize>>,
}

impl SelectionState {
    fn initial(dataset: &MultiViewDataset, targets: Vec<usize>) -> Self {
        let selected: Vec<Vec<usize>> = dataset.views.iter().map(|x| (0..x.nrows()).collect()).collect();
        let weights = selected.iter().map(|s| uniform_unit(s.len())).collect();
        Self {
            eliminated: vec![Vec::new(); selected.len()],
            selected,
            weights,
            bias: 0.0,
            targets,
        }
    }
}

fn uniform_unit(d: usize) -> Vec<f64> {
    vec![1.0 / (d as f64).sqrt(); d]
}

/// Multiplies column `i` by `Q_i / √P`.
pub fn scale_view(x_v: &Matrix, q: &[f64], p: f64) -> Result<Matrix> {
    if !(p > 0.0) {
        return invalid(format!("P must be positive, got {p}"));
    }
    if q.len() != x_v.ncols() {
        return invalid(format!("{} scale factors for {} instances", q.len(), x_v.ncols()));
    }
    let root = p.sqrt();
    let mut out = x_v.clone();
    for (i, mut col) in out.column_iter_mut().enumerate() {
        col *= q[i] / root;
    }
    Ok(out)
}

/// `P = Π_{j≠v} ‖w⁽ʲ⁾‖²` and `Q_i = Π_{j≠v} ⟨w⁽ʲ⁾, x_i⁽ʲ⁾⟩`.
pub fn cross_view_constants(state: &SelectionState, dataset: &MultiViewDataset, v: usize) -> Result<(f64, Vec<f64>)> {
    let n = dataset.n_instances();
    let mut p = 1.0;
    let mut q = vec![1.0; n];
    for j in (0..dataset.n_views()).filter(|&j| j != v) {
        let w = Vector::from_column_slice(&state.weights[j]);
        let norm2 = w.norm_squared();
        if norm2 == 0.0 {
            return Err(Error::Degenerate(format!("weights of view {j} are all zero")));
        }
        p *= norm2;
        for (i, qi) in q.iter_mut().enumerate() {
            *qi *= w.dot(&dataset.point(j, i, &state.selected[j]));
        }
    }
    Ok((p, q))
}

/// `w⁽ᵛ⁾ = (1/P) Σ_i Q_i α_i y_i x_i⁽ᵛ⁾` with `x_v` stored features × instances.
pub fn view_weights(alphas: &[f64], y: &[f64], q: &[f64], p: f64, x_v: &Matrix) -> Result<Vector> {
    let n = x_v.ncols();
    if alphas.len() != n || y.len() != n || q.len() != n {
        return invalid("view_weights: inconsistent instance counts");
    }
    if !(p > 0.0) {
        return invalid(format!("P must be positive, got {p}"));
    }
    let coef = Vector::from_iterator(n, (0..n).map(|i| q[i] * alphas[i] * y[i] / p));
    Ok(x_v * coef)
}

/// Squared weights.
pub fn rank_linear(w_v: &[f64]) -> Vec<f64> {
    w_v.iter().map(|w| w * w).collect()
}

/// Change in `αᵀHα` when each feature is dropped from the kernel arguments,
/// `H(p,q) = y_p y_q κ(x_p', x_q')`, with `α` held fixed. `x_scaled` is
/// features × instances; the RBF width stays at the full feature count.
pub fn rank_kernel(alphas: &[f64], y: &[f64], x_scaled: &Matrix, spec: KernelSpec) -> Result<Vec<f64>> {
    let (d, n) = x_scaled.shape();
    if alphas.len() != n || y.len() != n {
        return invalid("rank_kernel: inconsistent instance counts");
    }
    let width = d as f64;
    let cols: Vec<Vec<f64>> = (0..n).map(|i| x_scaled.column(i).iter().copied().collect()).collect();
    let quad = |drop: Option<usize>| -> f64 {
        let mut total = 0.0;
        let mut a = vec![0.0; d];
        let mut b = vec![0.0; d];
        for p in 0..n {
            if alphas[p] == 0.0 {
                continue;
            }
            for q in 0..n {
                if alphas[q] == 0.0 {
                    continue;
                }
                a.copy_from_slice(&cols[p]);
                b.copy_from_slice(&cols[q]);
                if let Some(f) = drop {
                    a[f] = 0.0;
                    b[f] = 0.0;
                }
                total += alphas[p] * alphas[q] * y[p] * y[q] * spec.eval_with_width(&a, &b, width);
            }
        }
        total
    };
    let full = quad(None);
    Ok((0..d).map(|f| full - quad(Some(f))).collect())
}

/// Index of the smallest score; ties go to the smallest index.
pub fn argmin_score(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some(b) if scores[b] <= s => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Ranking order, lowest score first, ties by index.
pub fn ranking_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    idx
}

/// Trains view `v` against the other views' current weights and updates
/// `state.weights[v]` and `state.bias`. Returns the ranking scores over the
/// surviving features of `v`.
fn train_view(
    dataset: &MultiViewDataset,
    state: &mut SelectionState,
    weights_for_constants: Option<&SelectionState>,
    v: usize,
    cfg: &SelectionConfig,
) -> Result<Vec<f64>> {
    let reference = weights_for_constants.unwrap_or(state);
    let (p, q) = match cross_view_constants(reference, dataset, v) {
        Ok(pq) => pq,
        Err(Error::Degenerate(_)) => {
            // re-initialize the collapsed views and retry once
            for j in (0..dataset.n_views()).filter(|&j| j != v) {
                if state.weights[j].iter().all(|&w| w == 0.0) {
                    state.weights[j] = uniform_unit(state.selected[j].len());
                }
            }
            cross_view_constants(state, dataset, v)?
        }
        Err(e) => return Err(e),
    };
    let sel = &state.selected[v];
    let x_v = Matrix::from_fn(sel.len(), dataset.n_instances(), |f, i| dataset.views[v][(sel[f], i)]);
    let scaled = scale_view(&x_v, &q, p)?;
    let gram = match cfg.kernel {
        KernelSpec::Linear => scaled.transpose() * &scaled,
        KernelSpec::Rbf => crate::numkit::kernel::kernel_matrix(&scaled.transpose(), KernelSpec::Rbf)?,
    };
    let sol = svm_train_kernel(&gram, &dataset.labels, cfg.c, SvmOptions::default())?;
    let alphas: Vec<f64> = sol.alphas.iter().copied().collect();
    let w = view_weights(&alphas, &dataset.labels, &q, p, &x_v)?;
    state.weights[v] = w.iter().copied().collect();
    state.bias = sol.b;
    match cfg.kernel {
        KernelSpec::Linear => Ok(rank_linear(&state.weights[v])),
        KernelSpec::Rbf => rank_kernel(&alphas, &dataset.labels, &scaled, KernelSpec::Rbf),
    }
}

/// Recursive feature elimination over all views.
///
/// Views are visited round-robin; each visit retrains the view's SVM against
/// the other views' latest weights and, while the view is above its target,
/// eliminates the `chunk` lowest-ranked features. Once all views are at
/// target, up to `alternations` refinement rounds retrain every view, stopping
/// early when no view's ranking order changes.
pub fn tmvfs_select(dataset: &MultiViewDataset, cfg: &SelectionConfig) -> Result<SelectionState> {
    let m = dataset.n_views();
    let targets = if cfg.targets.is_empty() {
        dataset.views.iter().map(|x| x.nrows().div_ceil(2)).collect()
    } else {
        cfg.targets.clone()
    };
    if targets.len() != m {
        return invalid(format!("{} targets for {m} views", targets.len()));
    }
    for (v, (&t, x)) in targets.iter().zip(&dataset.views).enumerate() {
        if t == 0 || t > x.nrows() {
            return invalid(format!("target {t} for view {v} outside 1..={}", x.nrows()));
        }
    }
    if !(cfg.c > 0.0) {
        return invalid(format!("C must be positive, got {}", cfg.c));
    }
    if cfg.chunk == 0 {
        return invalid("chunk size must be at least 1");
    }
    let labels = &dataset.labels;
    if !labels.contains(&1.0) || !labels.contains(&-1.0) {
        return invalid("feature selection needs both classes");
    }

    let mut state = SelectionState::initial(dataset, targets);
    let frozen = (!cfg.round_robin).then(|| state.clone());

    let above = |s: &SelectionState| (0..m).any(|v| s.selected[v].len() > s.targets[v]);
    while above(&state) {
        for v in 0..m {
            let scores = train_view(dataset, &mut state, frozen.as_ref(), v, cfg)?;
            let excess = state.selected[v].len().saturating_sub(state.targets[v]);
            if excess == 0 {
                continue;
            }
            let order = ranking_order(&scores);
            let mut drop: Vec<usize> = order.into_iter().take(excess.min(cfg.chunk)).collect();
            drop.sort_unstable_by(|a, b| b.cmp(a));
            for pos in drop {
                let feature = state.selected[v].remove(pos);
                state.weights[v].remove(pos);
                state.eliminated[v].push(feature);
            }
        }
    }

    let mut last_orders: Option<Vec<Vec<usize>>> = None;
    for _ in 0..cfg.alternations {
        let mut orders = Vec::with_capacity(m);
        for v in 0..m {
            let scores = train_view(dataset, &mut state, frozen.as_ref(), v, cfg)?;
            orders.push(ranking_order(&scores));
        }
        if last_orders.as_ref() == Some(&orders) {
            break;
        }
        last_orders = Some(orders);
    }
    if cfg.alternations == 0 {
        // weights must match the surviving features for prediction
        for v in 0..m {
            train_view(dataset, &mut state, frozen.as_ref(), v, cfg)?;
        }
    }
    Ok(state)
}

/// `sign(Π_v ⟨w⁽ᵛ⁾, x⁽ᵛ⁾⟩ + b)` with `sign(0) = +1`. `x` holds one vector
/// per view restricted to the selected features.
pub fn mv_decision(state: &SelectionState, x: &[Vec<f64>]) -> Result<f64> {
    Ok(if mv_score(state, x)? >= 0.0 { 1.0 } else { -1.0 })
}

pub fn mv_score(state: &SelectionState, x: &[Vec<f64>]) -> Result<f64> {
    if x.len() != state.weights.len() {
        return invalid(format!("{} views given, model has {}", x.len(), state.weights.len()));
    }
    let mut prod = 1.0;
    for (v, (w, xv)) in state.weights.iter().zip(x).enumerate() {
        if w.len() != xv.len() {
            return invalid(format!("view {v}: {} features given, {} selected", xv.len(), w.len()));
        }
        prod *= w.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(prod + state.bias)
}

/// Predicts every instance of `dataset` with the selected features.
pub fn predict(state: &SelectionState, dataset: &MultiViewDataset) -> Result<Vec<f64>> {
    (0..dataset.n_instances())
        .map(|i| {
            let x: Vec<Vec<f64>> = (0..dataset.n_views())
                .map(|v| state.selected[v].iter().map(|&f| dataset.views[v][(f, i)]).collect())
                .collect();
            mv_decision(state, &x)
        })
        .collect()
}
