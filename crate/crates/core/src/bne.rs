//! Brain network embedding by partially symmetric CP factorization.
//!
//! Stacked symmetric networks `X ∈ ℝ^{m×m×n}` are fitted by
//! `X ≈ Σ_f b_f ∘ b_f ∘ s_f` with orthonormal subject factors `S`. The
//! symmetric node factor is split into two copies `B` and `P` tied by an
//! augmented Lagrangian, the subject factors are guided by a side-information
//! Laplacian `L_Z`, and a ridge classifier `W` is trained on the labeled
//! prefix of subjects jointly with the embedding.

use std::io::{Read as _, Write as _};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::io_err;
use crate::error::{invalid, Error, Result};
use crate::numkit::kernel::KernelSpec;
use crate::numkit::linalg::{laplacian, ridge_solve, spd_right_solve};
use crate::numkit::stiefel::{feasibility_error, stiefel_minimize, StiefelOptions, StiefelProblem};
use crate::tensor::{khatri_rao, matricize, Mode, PartiallySymmetricTensor3, Tensor3};
use crate::Matrix;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BneConfig {
    pub rank: usize,
    /// Weight of the side-information guidance.
    pub alpha: f64,
    /// Weight of the classification loss.
    pub beta: f64,
    /// Ridge penalty on `W`.
    pub gamma: f64,
    pub mu0: f64,
    pub rho: f64,
    pub mu_max: f64,
    /// Stop when the explained variation changes by less than this between
    /// consecutive iterations (and the split copies agree).
    pub tol: f64,
    /// Required `‖P − B‖ / ‖B‖` at convergence.
    pub consensus_tol: f64,
    pub max_iters: usize,
    /// Curvilinear-search iterations per subject update.
    pub s_max_iters: usize,
    pub s_tol: f64,
    pub seed: u64,
}

impl Default for BneConfig {
    fn default() -> Self {
        Self {
            rank: 5,
            alpha: 0.1,
            beta: 0.1,
            gamma: 1.0,
            mu0: 1e-6,
            rho: 1.15,
            mu_max: 1e6,
            tol: 1e-4,
            consensus_tol: 1e-3,
            max_iters: 500,
            s_max_iters: 100,
            s_tol: 1e-8,
            seed: 0,
        }
    }
}

impl BneConfig {
    fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return invalid("rank must be at least 1");
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v >= 0.0) || !v.is_finite() {
                return invalid(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(self.rho > 1.0) {
            return invalid(format!("rho must exceed 1, got {}", self.rho));
        }
        if !(self.mu0 > 0.0) || !(self.mu_max >= self.mu0) {
            return invalid("penalty schedule needs 0 < mu0 <= mu_max");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BneModel {
    pub b: Matrix,
    pub p: Matrix,
    pub s: Matrix,
    pub w: Matrix,
    pub u: Matrix,
    pub mu: f64,
    pub iterations: usize,
    pub converged: bool,
    pub explained_variation: f64,
}

impl BneModel {
    /// Node factor used for reporting: the average of the two split copies.
    pub fn node_factor(&self) -> Matrix {
        (&self.b + &self.p) * 0.5
    }

    pub fn consensus_gap(&self) -> f64 {
        let nb = self.b.norm();
        if nb == 0.0 {
            (&self.p - &self.b).norm()
        } else {
            (&self.p - &self.b).norm() / nb
        }
    }
}

/// Side-information similarity between subjects and its Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceKernel {
    pub similarity: Matrix,
    pub laplacian: Matrix,
}

impl GuidanceKernel {
    /// `K = Z Zᵀ` for side features `Z` (`n × d`).
    pub fn linear(z: &Matrix) -> Result<Self> {
        Self::from_features(z, KernelSpec::Linear)
    }

    pub fn from_features(z: &Matrix, spec: KernelSpec) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return invalid("side features contain non-finite values");
        }
        let k = match spec {
            KernelSpec::Linear => {
                let k = z * z.transpose();
                // exact symmetry
                Matrix::from_fn(k.nrows(), k.ncols(), |i, j| if i <= j { k[(i, j)] } else { k[(j, i)] })
            }
            KernelSpec::Rbf => crate::numkit::kernel::kernel_matrix(z, spec)?,
        };
        Self::from_similarity(k)
    }

    pub fn from_similarity(k: Matrix) -> Result<Self> {
        let l = laplacian(&k)?;
        Ok(Self {
            similarity: k,
            laplacian: l,
        })
    }

    /// No side information.
    pub fn none(n: usize) -> Self {
        Self {
            similarity: Matrix::zeros(n, n),
            laplacian: Matrix::zeros(n, n),
        }
    }
}

/// `[[B, B, S]]` with the product `B_if B_jf` formed first so every frontal
/// slice is exactly symmetric.
pub fn reconstruct(b: &Matrix, s: &Matrix) -> Result<Tensor3> {
    if b.ncols() != s.ncols() {
        return invalid(format!("rank mismatch: B has {} columns, S has {}", b.ncols(), s.ncols()));
    }
    let k = b.ncols();
    Tensor3::from_fn([b.nrows(), b.nrows(), s.nrows()], |i, j, t| {
        (0..k).map(|f| (b[(i, f)] * b[(j, f)]) * s[(t, f)]).sum()
    })
}

fn check_shapes(x: &PartiallySymmetricTensor3, s: &Matrix, other: &Matrix, u: &Matrix) -> Result<()> {
    let (m, n) = (x.nodes(), x.subjects());
    let k = s.ncols();
    if s.nrows() != n || other.shape() != (m, k) || u.shape() != (m, k) {
        return invalid(format!(
            "factor shapes S {:?}, node factor {:?}, multiplier {:?} do not fit a {m}×{m}×{n} tensor",
            s.shape(),
            other.shape(),
            u.shape()
        ));
    }
    Ok(())
}

fn hadamard_gram(a: &Matrix, b: &Matrix) -> Matrix {
    (a.transpose() * a).component_mul(&(b.transpose() * b))
}

/// `B = (2 X₍₁₎ E + μP + U)(2 EᵀE + μI)⁻¹` with `E = S ⊙ P` and
/// `EᵀE = SᵀS ∗ PᵀP`.
pub fn update_b(x: &PartiallySymmetricTensor3, s: &Matrix, p: &Matrix, u: &Matrix, mu: f64) -> Result<Matrix> {
    check_shapes(x, s, p, u)?;
    if !(mu > 0.0) {
        return invalid(format!("penalty must be positive, got {mu}"));
    }
    let e = khatri_rao(s, p)?;
    let x1 = matricize(x.tensor(), Mode::One);
    let lhs = x1 * e * 2.0 + p * mu + u;
    let mut gram = hadamard_gram(s, p) * 2.0;
    for i in 0..gram.nrows() {
        gram[(i, i)] += mu;
    }
    spd_right_solve(&lhs, gram)
}

/// `P = (2 X₍₂₎ F + μB − U)(2 FᵀF + μI)⁻¹` with `F = S ⊙ B`.
pub fn update_p(x: &PartiallySymmetricTensor3, s: &Matrix, b: &Matrix, u: &Matrix, mu: f64) -> Result<Matrix> {
    check_shapes(x, s, b, u)?;
    if !(mu > 0.0) {
        return invalid(format!("penalty must be positive, got {mu}"));
    }
    let f = khatri_rao(s, b)?;
    let x2 = matricize(x.tensor(), Mode::Two);
    let lhs = x2 * f * 2.0 + b * mu - u;
    let mut gram = hadamard_gram(s, b) * 2.0;
    for i in 0..gram.nrows() {
        gram[(i, i)] += mu;
    }
    spd_right_solve(&lhs, gram)
}

/// `U + μ(P − B)`.
pub fn update_u(u: &Matrix, p: &Matrix, b: &Matrix, mu: f64) -> Matrix {
    u + (p - b) * mu
}

/// `Dᵀ M` for the labeled-prefix selector `D`: pads `M` with zero rows.
fn pad_rows(m: &Matrix, n: usize) -> Matrix {
    let mut out = Matrix::zeros(n, m.ncols());
    out.rows_mut(0, m.nrows()).copy_from(m);
    out
}

/// Fixed data of the subject subproblem.
pub struct SubjectTerms<'a> {
    /// `X₍₃₎` (`n × m²`).
    pub x3: &'a Matrix,
    /// `G = P ⊙ B`.
    pub g: &'a Matrix,
    pub lz: &'a Matrix,
    pub w: &'a Matrix,
    /// Targets of the labeled prefix (`l × c`).
    pub y: &'a Matrix,
    pub alpha: f64,
    pub beta: f64,
}

/// `S GᵀG − X₍₃₎ G + α L_Z S + β Dᵀ(D S W − Y) Wᵀ`.
pub fn subject_gradient(s: &Matrix, t: &SubjectTerms) -> Matrix {
    let gtg = t.g.transpose() * t.g;
    let xg = t.x3 * t.g;
    subject_gradient_pre(s, &gtg, &xg, t)
}

fn subject_gradient_pre(s: &Matrix, gtg: &Matrix, xg: &Matrix, t: &SubjectTerms) -> Matrix {
    let mut grad = s * gtg - xg + t.lz * s * t.alpha;
    let l = t.y.nrows();
    if l > 0 && t.beta != 0.0 {
        let resid = s.rows(0, l) * t.w - t.y;
        grad += pad_rows(&(resid * t.w.transpose()), s.nrows()) * t.beta;
    }
    grad
}

/// The subject objective scaled by one half, whose exact gradient is
/// [`subject_gradient`].
pub fn subject_objective_half(s: &Matrix, t: &SubjectTerms) -> f64 {
    let fit = (s * t.g.transpose() - t.x3).norm_squared();
    let guide = (s.transpose() * t.lz * s).trace();
    let l = t.y.nrows();
    let cls = if l > 0 {
        (s.rows(0, l) * t.w - t.y).norm_squared()
    } else {
        0.0
    };
    0.5 * (fit + t.alpha * guide + t.beta * cls)
}

/// `W = (SᵀDᵀDS + γI)⁻¹ SᵀDᵀY` on the labeled prefix of `S`.
pub fn update_w(s: &Matrix, y: &Matrix, gamma: f64) -> Result<Matrix> {
    let l = y.nrows();
    if l > s.nrows() {
        return invalid(format!("{l} labeled rows but only {} subjects", s.nrows()));
    }
    if !(gamma > 0.0) {
        return invalid(format!("gamma must be positive, got {gamma}"));
    }
    if l == 0 {
        return Ok(Matrix::zeros(s.ncols(), y.ncols()));
    }
    ridge_solve(&s.rows(0, l).into_owned(), y, gamma)
}

/// Full objective with `B` on both symmetric modes.
pub fn objective(
    model: &BneModel,
    x: &PartiallySymmetricTensor3,
    guidance: &GuidanceKernel,
    y: &Matrix,
    cfg: &BneConfig,
) -> Result<f64> {
    let (m, n) = (x.nodes(), x.subjects());
    let k = model.s.ncols();
    if model.b.shape() != (m, k) || model.s.nrows() != n || guidance.laplacian.shape() != (n, n) {
        return invalid("objective: factor shapes do not match the tensor");
    }
    let l = y.nrows();
    if l > n || (l > 0 && model.w.shape() != (k, y.ncols())) {
        return invalid("objective: label block does not match the classifier");
    }
    let xhat = reconstruct(&model.b, &model.s)?;
    let fit = crate::tensor::frobenius_norm_sq(&x.tensor().sub(&xhat)?);
    let guide = (model.s.transpose() * &guidance.laplacian * &model.s).trace();
    let cls = if l > 0 {
        (model.s.rows(0, l) * &model.w - y).norm_squared()
    } else {
        0.0
    };
    Ok(fit + cfg.alpha * guide + cfg.beta * cls + cfg.gamma * model.w.norm_squared())
}

/// `1 − ‖X − X̂‖² / ‖X‖²`.
pub fn explained_variation(x: &PartiallySymmetricTensor3, b: &Matrix, s: &Matrix) -> Result<f64> {
    let xhat = reconstruct(b, s)?;
    let total = crate::tensor::frobenius_norm_sq(x.tensor());
    let resid = crate::tensor::frobenius_norm_sq(&x.tensor().sub(&xhat)?);
    Ok(if total == 0.0 { 1.0 - resid } else { 1.0 - resid / total })
}

/// `‖X − X̂‖ / ‖X‖` with the reported node factor.
pub fn relative_error(model: &BneModel, x: &PartiallySymmetricTensor3) -> Result<f64> {
    let xhat = reconstruct(&model.node_factor(), &model.s)?;
    let total = crate::tensor::frobenius_norm(x.tensor());
    let resid = crate::tensor::frobenius_norm(&x.tensor().sub(&xhat)?);
    Ok(if total == 0.0 { resid } else { resid / total })
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Orthonormal columns by QR with non-negative diagonal of `R`.
pub(crate) fn orthonormalize(a: Matrix) -> Matrix {
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `b_f ∘ p_f ∘ s_f = (−b_f) ∘ p_f ∘ (−s_f)`: when a column of `B` points
/// away from its copy in `P`, flip it together with `s_f`, row `f` of `W`
/// and reset the multiplier column. Fit, guidance and label terms are
/// unchanged; the copies agree again.
fn align_signs(b: &mut Matrix, p: &Matrix, s: &mut Matrix, w: &mut Matrix, u: &mut Matrix) {
    for f in 0..b.ncols() {
        if b.column(f).dot(&p.column(f)) < 0.0 {
            b.column_mut(f).neg_mut();
            s.column_mut(f).neg_mut();
            if f < w.nrows() {
                w.row_mut(f).neg_mut();
            }
            u.column_mut(f).fill(0.0);
        }
    }
}

/// ChaCha stream used for the initial factors.
const INIT_STREAM: u64 = 0x7462_6e65;

/// Alternating fit. `y` holds targets for the first `y.nrows()` subjects.
/// Runs until the explained variation settles and the split copies agree,
/// or `max_iters` is reached (`converged = false`).
pub fn tbne_fit(x: &PartiallySymmetricTensor3, guidance: &GuidanceKernel, y: &Matrix, cfg: &BneConfig) -> Result<BneModel> {
    cfg.validate()?;
    let (m, n, k) = (x.nodes(), x.subjects(), cfg.rank);
    if k > n {
        return invalid(format!("rank {k} exceeds the number of subjects {n}"));
    }
    if guidance.laplacian.shape() != (n, n) {
        return invalid(format!("guidance is {:?}, expected {n}×{n}", guidance.laplacian.shape()));
    }
    if y.nrows() > n {
        return invalid(format!("{} labeled subjects but only {n} networks", y.nrows()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return invalid("labels contain non-finite values");
    }
    if y.nrows() > 0 && !(cfg.gamma > 0.0) {
        return invalid("gamma must be positive when labels are given");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // separate stream so equal seeds do not reproduce generator draws
    rng.set_stream(INIT_STREAM);
    let mut b = normal_matrix(&mut rng, m, k);
    let mut s = orthonormalize(normal_matrix(&mut rng, n, k));
    let mut w = normal_matrix(&mut rng, k, y.ncols());
    let mut p = b.clone();
    let mut u = Matrix::zeros(m, k);
    let mut mu = cfg.mu0;
    let x3 = matricize(x.tensor(), Mode::Three);
    let s_opts = StiefelOptions {
        max_iters: cfg.s_max_iters,
        tol: cfg.s_tol,
        ..Default::default()
    };

    let mut prev_ev: Option<f64> = None;
    let mut ev = f64::NAN;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        b = update_b(x, &s, &p, &u, mu)?;
        p = update_p(x, &s, &b, &u, mu)?;
        align_signs(&mut b, &p, &mut s, &mut w, &mut u);
        u = update_u(&u, &p, &b, mu);
        mu = (cfg.rho * mu).min(cfg.mu_max);

        let g = khatri_rao(&p, &b)?;
        let gtg = g.transpose() * &g;
        let xg = &x3 * &g;
        let terms = SubjectTerms {
            x3: &x3,
            g: &g,
            lz: &guidance.laplacian,
            w: &w,
            y,
            alpha: cfg.alpha,
            beta: cfg.beta,
        };
        let res = stiefel_minimize(
            &StiefelProblem {
                objective: |s: &Matrix| subject_objective_half(s, &terms),
                gradient: |s: &Matrix| subject_gradient_pre(s, &gtg, &xg, &terms),
                initial: s.clone(),
            },
            s_opts,
        )?;
        s = res.s;
        if y.nrows() > 0 {
            w = update_w(&s, y, cfg.gamma)?;
        }

        ev = explained_variation(x, &((&b + &p) * 0.5), &s)?;
        let gap = (&p - &b).norm() / b.norm().max(f64::MIN_POSITIVE);
        if let Some(prev) = prev_ev {
            if (ev - prev).abs() < cfg.tol && gap <= cfg.consensus_tol {
                converged = true;
                break;
            }
        }
        prev_ev = Some(ev);
    }
    if y.nrows() == 0 {
        w = Matrix::zeros(k, y.ncols());
    }
    debug_assert!(feasibility_error(&s) <= 1e-6);
    Ok(BneModel {
        b,
        p,
        s,
        w,
        u,
        mu,
        iterations,
        converged,
        explained_variation: ev,
    })
}

/// Class scores `S(rows, :) W` and predictions: the 0-based argmax for
/// `c ≥ 2` (ties to the lower class), or the sign (`±1`, `sign(0) = +1`) for
/// `c = 1`.
pub fn tbne_embed_predict(model: &BneModel, rows: &[usize]) -> Result<(Matrix, Vec<f64>)> {
    let c = model.w.ncols();
    if c == 0 {
        return Err(Error::State("model has no classifier; fit it with labels first".into()));
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= model.s.nrows()) {
        return invalid(format!("subject {r} out of range 0..{}", model.s.nrows()));
    }
    let emb = Matrix::from_fn(rows.len(), model.s.ncols(), |i, f| model.s[(rows[i], f)]);
    let scores = emb * &model.w;
    let pred = (0..rows.len())
        .map(|i| {
            if c == 1 {
                if scores[(i, 0)] >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                let row = scores.row(i);
                let mut best = 0;
                for a in 1..c {
                    if row[a] > row[best] {
                        best = a;
                    }
                }
                best as f64
            }
        })
        .collect();
    Ok((scores, pred))
}

/// One-hot targets from 0-based class indices.
pub fn one_hot(classes: &[usize], c: usize) -> Result<Matrix> {
    if let Some(&a) = classes.iter().find(|&&a| a >= c) {
        return invalid(format!("class {a} outside 0..{c}"));
    }
    Ok(Matrix::from_fn(classes.len(), c, |i, a| if classes[i] == a { 1.0 } else { 0.0 }))
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    version: u32,
    blocks: Vec<BlockInfo>,
    mu: f64,
    iterations: usize,
    converged: bool,
    explained_variation: f64,
}

#[derive(Serialize, Deserialize)]
struct BlockInfo {
    name: String,
    rows: usize,
    cols: usize,
}

const MODEL_FORMAT: &str = "mvkit-bne";

/// JSON header line, then each factor as little-endian `f64` in column-major
/// order: B, P, S, W, U.
pub fn write_model(path: &Path, model: &BneModel) -> Result<()> {
    let blocks = [("B", &model.b), ("P", &model.p), ("S", &model.s), ("W", &model.w), ("U", &model.u)];
    let header = ModelHeader {
        format: MODEL_FORMAT.into(),
        version: 1,
        blocks: blocks
            .iter()
            .map(|(name, m)| BlockInfo {
                name: name.to_string(),
                rows: m.nrows(),
                cols: m.ncols(),
            })
            .collect(),
        mu: model.mu,
        iterations: model.iterations,
        converged: model.converged,
        explained_variation: model.explained_variation,
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    for (_, m) in blocks {
        for v in m.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&bytes).map_err(|e| io_err(path, e))
}

pub fn read_model(path: &Path) -> Result<BneModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    let bad = |msg: &str| crate::dataio::parse_err(path, 1, msg);
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header line"))?;
    let header: ModelHeader = serde_json::from_slice(&bytes[..nl]).map_err(|e| bad(&e.to_string()))?;
    if header.format != MODEL_FORMAT || header.version != 1 {
        return Err(bad("not a version 1 embedding model"));
    }
    let mut offset = nl + 1;
    let mut mats = Vec::new();
    for blk in &header.blocks {
        let len = blk.rows * blk.cols * 8;
        let chunk = bytes.get(offset..offset + len).ok_or_else(|| bad("truncated factor block"))?;
        let data = chunk
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect::<Vec<_>>();
        mats.push(Matrix::from_vec(blk.rows, blk.cols, data));
        offset += len;
    }
    if offset != bytes.len() || mats.len() != 5 {
        return Err(bad("unexpected trailing data or block count"));
    }
    let mut it = mats.into_iter();
    let mut next = || it.next().expect("five blocks");
    Ok(BneModel {
        b: next(),
        p: next(),
        s: next(),
        w: next(),
        u: next(),
        mu: header.mu,
        iterations: header.iterations,
        converged: header.converged,
        explained_variation: header.explained_variation,
    })
}

/// Subject embedding `S` as CSV with columns `f0..f{k-1}`.
pub fn write_embedding_csv(path: &Path, model: &BneModel) -> Result<()> {
    let header: Vec<String> = (0..model.s.ncols()).map(|f| format!("f{f}")).collect();
    let rows = (0..model.s.nrows()).map(|i| model.s.row(i).iter().copied().collect());
    crate::dataio::write_string(path, &crate::dataio::format_csv(&header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::synth::synth_planted_tensor;
    use crate::oracle::finite_difference;
    use crate::tensor::stack_networks;
    use rand::Rng;

    fn random_sym_tensor(rng: &mut ChaCha8Rng, m: usize, n: usize) -> PartiallySymmetricTensor3 {
        let mats: Vec<Matrix> = (0..n)
            .map(|_| {
                let a = Matrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
                &a + a.transpose()
            })
            .collect();
        stack_networks(&mats).unwrap()
    }

    #[test]
    fn update_b_scalar_case() {
        let x = PartiallySymmetricTensor3::new(Tensor3::from_vec([1, 1, 1], vec![6.0]).unwrap()).unwrap();
        let one = |v: f64| Matrix::from_element(1, 1, v);
        let b = update_b(&x, &one(2.0), &one(3.0), &one(0.0), 2.0).unwrap();
        assert!((b[(0, 0)] - 78.0 / 74.0).abs() <= 1e-12);
    }

    #[test]
    fn update_b_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_sym_tensor(&mut rng, 4, 5);
        let s = orthonormalize(normal_matrix(&mut rng, 5, 2));
        let p = normal_matrix(&mut rng, 4, 2);
        let u = normal_matrix(&mut rng, 4, 2);
        let mu = 0.7;
        let b = update_b(&x, &s, &p, &u, mu).unwrap();
        let x1 = matricize(x.tensor(), Mode::One);
        let e = khatri_rao(&s, &p).unwrap();
        let f = |b: &Matrix| {
            (b * e.transpose() - &x1).norm_squared() + (u.transpose() * (&p - b)).trace() + 0.5 * mu * (&p - b).norm_squared()
        };
        let g = finite_difference(f, &b, 1e-5);
        assert!(g.norm() <= 1e-6 * (1.0 + b.norm()), "grad {}", g.norm());
    }

    #[test]
    fn update_p_mirrors_update_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_sym_tensor(&mut rng, 4, 3);
        let s = normal_matrix(&mut rng, 3, 2);
        let q = normal_matrix(&mut rng, 4, 2);
        let u = normal_matrix(&mut rng, 4, 2);
        let via_p = update_p(&x, &s, &q, &u, 0.5).unwrap();
        let via_b = update_b(&x, &s, &q, &(-&u), 0.5).unwrap();
        assert!((via_p - via_b).abs().max() <= 1e-12);
    }

    #[test]
    fn penalty_dominance_pulls_copies_together() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_sym_tensor(&mut rng, 4, 3);
        let s = orthonormalize(normal_matrix(&mut rng, 3, 2));
        let p = normal_matrix(&mut rng, 4, 2);
        let u = Matrix::zeros(4, 2);
        let gaps: Vec<f64> = [1.0, 1e3, 1e6]
            .iter()
            .map(|&mu| (update_b(&x, &s, &p, &u, mu).unwrap() - &p).norm())
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2] && gaps[2] < 1e-4);
        let gaps_p: Vec<f64> = [1.0, 1e6]
            .iter()
            .map(|&mu| (update_p(&x, &s, &p, &u, mu).unwrap() - &p).norm())
            .collect();
        assert!(gaps_p[1] < gaps_p[0]);
    }

    #[test]
    fn update_u_examples() {
        let u = Matrix::from_element(2, 2, 0.3);
        let b = Matrix::from_element(2, 2, 1.0);
        assert_eq!(update_u(&u, &b, &b, 5.0), u);
        let z = Matrix::zeros(2, 2);
        assert_eq!(update_u(&z, &(&b * 2.0), &b, 2.0), Matrix::from_element(2, 2, 2.0));
        let once = update_u(&update_u(&z, &b, &z, 1.0), &b, &z, 2.0);
        assert_eq!(once, Matrix::from_element(2, 2, 3.0));
    }

    #[test]
    fn subject_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (m, n, k, c, l) = (3, 5, 2, 2, 3);
        let x = random_sym_tensor(&mut rng, m, n);
        let x3 = matricize(x.tensor(), Mode::Three);
        let g = khatri_rao(&normal_matrix(&mut rng, m, k), &normal_matrix(&mut rng, m, k)).unwrap();
        let z = normal_matrix(&mut rng, n, 3);
        let lz = GuidanceKernel::linear(&z).unwrap().laplacian;
        let w = normal_matrix(&mut rng, k, c);
        let y = normal_matrix(&mut rng, l, c);
        let terms = SubjectTerms { x3: &x3, g: &g, lz: &lz, w: &w, y: &y, alpha: 0.3, beta: 0.7 };
        let s = normal_matrix(&mut rng, n, k);
        let fd = finite_difference(|s| subject_objective_half(s, &terms), &s, 1e-6);
        let an = subject_gradient(&s, &terms);
        assert!((&fd - &an).norm() <= 1e-6 * an.norm());
    }

    #[test]
    fn subject_gradient_trivial_cases() {
        let x3 = Matrix::zeros(3, 4);
        let g = Matrix::from_element(4, 2, 0.5);
        let lz = Matrix::zeros(3, 3);
        let w = Matrix::zeros(2, 1);
        let y = Matrix::from_element(2, 1, 1.0);
        let terms = SubjectTerms { x3: &x3, g: &g, lz: &lz, w: &w, y: &y, alpha: 0.0, beta: 0.0 };
        assert_eq!(subject_gradient(&Matrix::zeros(3, 2), &terms), Matrix::zeros(3, 2));
        // W = 0 removes the label term even with beta > 0
        let with_beta = SubjectTerms { beta: 2.0, ..terms };
        let s = Matrix::from_element(3, 2, 0.1);
        let plain = SubjectTerms { x3: &x3, g: &g, lz: &lz, w: &w, y: &y, alpha: 0.0, beta: 0.0 };
        assert_eq!(subject_gradient(&s, &with_beta), subject_gradient(&s, &plain));
    }

    #[test]
    fn update_w_examples() {
        let w = update_w(&Matrix::identity(2, 2), &Matrix::from_row_slice(2, 1, &[1.0, 0.0]), 1.0).unwrap();
        assert!((w - Matrix::from_row_slice(2, 1, &[0.5, 0.0])).abs().max() <= 1e-15);
        let w = update_w(&Matrix::identity(3, 2), &Matrix::zeros(2, 1), 1.0).unwrap();
        assert_eq!(w, Matrix::zeros(2, 1));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = normal_matrix(&mut rng, 6, 3);
        let y = normal_matrix(&mut rng, 4, 2);
        let w = update_w(&s, &y, 0.5).unwrap();
        let ds = s.rows(0, 4).into_owned();
        let g = finite_difference(|w| (&ds * w - &y).norm_squared() + 0.5 * w.norm_squared(), &w, 1e-5);
        assert!(g.norm() <= 1e-8 * (1.0 + w.norm()) * 100.0);
    }

    #[test]
    fn objective_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let b = normal_matrix(&mut rng, 3, 2);
        let s = orthonormalize(normal_matrix(&mut rng, 4, 2));
        let x = PartiallySymmetricTensor3::new(reconstruct(&b, &s).unwrap()).unwrap();
        let model = BneModel {
            b: b.clone(),
            p: b.clone(),
            s: s.clone(),
            w: Matrix::zeros(2, 1),
            u: Matrix::zeros(3, 2),
            mu: 1.0,
            iterations: 0,
            converged: true,
            explained_variation: 1.0,
        };
        let zero_cfg = BneConfig { alpha: 0.0, beta: 0.0, gamma: 0.0, ..Default::default() };
        let g = GuidanceKernel::none(4);
        let y = Matrix::zeros(0, 1);
        assert!(objective(&model, &x, &g, &y, &zero_cfg).unwrap() <= 1e-10);

        let zeros = BneModel { b: Matrix::zeros(3, 2), s: Matrix::zeros(4, 2), ..model.clone() };
        let norm2 = crate::tensor::frobenius_norm_sq(x.tensor());
        assert!((objective(&zeros, &x, &g, &y, &zero_cfg).unwrap() - norm2).abs() <= 1e-12 * norm2);

        // term-by-term against literal sums
        let xr = random_sym_tensor(&mut rng, 3, 4);
        let z = normal_matrix(&mut rng, 4, 2);
        let guide = GuidanceKernel::linear(&z).unwrap();
        let w = normal_matrix(&mut rng, 2, 2);
        let y = normal_matrix(&mut rng, 2, 2);
        let cfg = BneConfig { alpha: 0.2, beta: 0.3, gamma: 0.4, ..Default::default() };
        let model = BneModel { w: w.clone(), ..model };
        let mut fit = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for t in 0..4 {
                    let v: f64 = (0..2).map(|f| b[(i, f)] * b[(j, f)] * s[(t, f)]).sum();
                    fit += (xr.tensor().get(i, j, t) - v).powi(2);
                }
            }
        }
        let mut trace = 0.0;
        for f in 0..2 {
            for i in 0..4 {
                for j in 0..4 {
                    trace += s[(i, f)] * guide.laplacian[(i, j)] * s[(j, f)];
                }
            }
        }
        let mut cls = 0.0;
        for i in 0..2 {
            for a in 0..2 {
                let pred: f64 = (0..2).map(|f| s[(i, f)] * w[(f, a)]).sum();
                cls += (pred - y[(i, a)]).powi(2);
            }
        }
        let reg: f64 = w.iter().map(|v| v * v).sum();
        let want = fit + 0.2 * trace + 0.3 * cls + 0.4 * reg;
        let got = objective(&model, &xr, &guide, &y, &cfg).unwrap();
        assert!((got - want).abs() <= 1e-10 * want.abs());
    }

    #[test]
    fn guidance_laplacian_rows_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = GuidanceKernel::linear(&normal_matrix(&mut rng, 7, 3)).unwrap();
        for i in 0..7 {
            assert!(g.laplacian.row(i).sum().abs() <= 1e-10);
        }
    }

    #[test]
    fn rank_one_planted_is_exact() {
        let (x, _, _) = synth_planted_tensor(2, 6, 8, 1, 0.0);
        let cfg = BneConfig { rank: 1, alpha: 0.0, beta: 0.0, tol: 1e-14, seed: 1, ..Default::default() };
        let model = tbne_fit(&x, &GuidanceKernel::none(8), &Matrix::zeros(0, 1), &cfg).unwrap();
        let err = relative_error(&model, &x).unwrap();
        assert!(err <= 1e-6, "relative error {err} iters {} conv {} ev {} gap {}", model.iterations, model.converged, model.explained_variation, model.consensus_gap());
        assert!(feasibility_error(&model.s) <= 1e-6);
    }

    #[test]
    fn prediction_cases() {
        let model = BneModel {
            b: Matrix::zeros(2, 2),
            p: Matrix::zeros(2, 2),
            s: Matrix::identity(3, 2),
            w: Matrix::zeros(2, 2),
            u: Matrix::zeros(2, 2),
            mu: 1.0,
            iterations: 1,
            converged: true,
            explained_variation: 0.0,
        };
        let (scores, pred) = tbne_embed_predict(&model, &[0, 1, 2]).unwrap();
        assert_eq!(scores, Matrix::zeros(3, 2));
        assert_eq!(pred, vec![0.0; 3]);
        let copy = BneModel { w: Matrix::identity(2, 2), ..model.clone() };
        let (scores, _) = tbne_embed_predict(&copy, &[1]).unwrap();
        assert_eq!(scores, Matrix::from_row_slice(1, 2, &[0.0, 1.0]));
        let unfitted = BneModel { w: Matrix::zeros(2, 0), ..model };
        assert!(matches!(tbne_embed_predict(&unfitted, &[0]), Err(Error::State(_))));
    }

    #[test]
    fn predictions_match_external_ridge() {
        let (x, s_true, _) = synth_planted_tensor(8, 5, 12, 2, 0.0);
        let classes: Vec<usize> = (0..12).map(|i| usize::from(s_true[(i, 0)] > 0.0)).collect();
        let y = one_hot(&classes[..8], 2).unwrap();
        let cfg = BneConfig { rank: 2, max_iters: 50, seed: 2, ..Default::default() };
        let model = tbne_fit(&x, &GuidanceKernel::none(12), &y, &cfg).unwrap();
        let w = ridge_solve(&model.s.rows(0, 8).into_owned(), &y, cfg.gamma).unwrap();
        assert!((&w - &model.w).abs().max() <= 1e-12);
        let (scores, _) = tbne_embed_predict(&model, &[9, 10]).unwrap();
        let want = Matrix::from_fn(2, 2, |i, a| (0..2).map(|f| model.s[(9 + i, f)] * w[(f, a)]).sum());
        assert!((scores - want).abs().max() <= 1e-12);
    }

    #[test]
    fn model_file_round_trip() {
        let (x, _, _) = synth_planted_tensor(1, 4, 5, 2, 0.0);
        let cfg = BneConfig { rank: 2, max_iters: 5, ..Default::default() };
        let y = one_hot(&[0, 1, 0], 2).unwrap();
        let model = tbne_fit(&x, &GuidanceKernel::none(5), &y, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        write_model(&path, &model).unwrap();
        assert_eq!(read_model(&path).unwrap(), model);
    }

    #[test]
    fn fit_is_deterministic() {
        let (x, _, _) = synth_planted_tensor(3, 5, 6, 2, 0.1);
        let cfg = BneConfig { rank: 2, max_iters: 20, seed: 9, ..Default::default() };
        let a = tbne_fit(&x, &GuidanceKernel::none(6), &Matrix::zeros(0, 1), &cfg).unwrap();
        let b = tbne_fit(&x, &GuidanceKernel::none(6), &Matrix::zeros(0, 1), &cfg).unwrap();
        assert_eq!(a, b);
    }
}
