//! Multi-view sequence classification with per-view GRU encoders and
//! late fusion.
//!
//! Each view of a session is encoded by its own (bidirectional) GRU; the
//! final states are concatenated forward-then-backward per view, in view
//! order, passed through inverted dropout during training, and fused by an
//! FC, FM or MVM head. Gradients are computed by hand and applied with
//! RMSProp.

mod checkpoint;
mod gru;
mod heads;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, write_metrics_csv};
pub use gru::{gru_backward, gru_forward, Direction, GruCache, GruParams};
pub use heads::{fc_head, fm_head, mvm_head, parameter_count, FusionHead, HeadKind};
pub use train::{evaluate, predict, train, EpochMetrics, TrainOutcome};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::{Matrix, Vector};

/// One session: `views[p]` is `d_p × l_p` with one column per event in
/// chronological order. `label` is a class index for classification or the
/// target value for regression.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionInstance {
    pub views: Vec<Matrix>,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionDataset {
    pub instances: Vec<SessionInstance>,
    pub view_names: Vec<String>,
    pub dims: Vec<usize>,
}

impl SessionDataset {
    pub fn new(instances: Vec<SessionInstance>, view_names: Vec<String>, dims: Vec<usize>) -> Result<Self> {
        if view_names.len() != dims.len() || dims.is_empty() {
            return invalid("one name and one feature width per view required");
        }
        for (i, s) in instances.iter().enumerate() {
            if s.views.len() != dims.len() {
                return invalid(format!("session {i} has {} views, expected {}", s.views.len(), dims.len()));
            }
            for (p, (x, &d)) in s.views.iter().zip(&dims).enumerate() {
                if x.nrows() != d || x.ncols() == 0 {
                    return invalid(format!("session {i} view {p} is {:?}, expected {d} features and at least one event", x.shape()));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return invalid(format!("session {i} view {p} has non-finite values"));
                }
            }
            if !s.label.is_finite() {
                return invalid(format!("session {i} has a non-finite label"));
            }
        }
        Ok(Self { instances, view_names, dims })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            instances: rows.iter().map(|&i| self.instances[i].clone()).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Recurrent units per direction.
    pub d_h: usize,
    /// FM/MVM factor width; the FC head uses `classes · d_k` hidden units.
    pub d_k: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub max_len: usize,
    pub min_len: usize,
    pub seed: u64,
    pub rms_decay: f64,
    pub rms_epsilon: f64,
    pub bidirectional: bool,
    pub head: HeadKind,
    /// Number of classes; 1 means regression.
    pub classes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d_h: 8,
            d_k: 8,
            epochs: 500,
            batch_size: 256,
            learning_rate: 0.001,
            dropout: 0.1,
            max_len: 100,
            min_len: 10,
            seed: 0,
            rms_decay: 0.9,
            rms_epsilon: 1e-8,
            bidirectional: true,
            head: HeadKind::Mvm,
            classes: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_h == 0 || self.d_k == 0 || self.batch_size == 0 || self.classes == 0 {
            return invalid("d_h, d_k, batch_size and classes must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return invalid(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return invalid(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(0.0..1.0).contains(&self.rms_decay) || !(self.rms_epsilon > 0.0) {
            return invalid("RMSProp needs decay in [0, 1) and a positive epsilon");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return invalid(format!("need 1 <= min_len <= max_len, got {}..{}", self.min_len, self.max_len));
        }
        Ok(())
    }

    pub fn is_regression(&self) -> bool {
        self.classes == 1
    }
}

/// Encoder for one view: a forward GRU and, when bidirectional, a second
/// GRU over the reversed sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub forward: GruParams,
    pub backward: Option<GruParams>,
}

impl Encoder {
    pub fn width(&self) -> usize {
        self.forward.d_h() * if self.backward.is_some() { 2 } else { 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoodModel {
    pub encoders: Vec<Encoder>,
    pub head: FusionHead,
    pub config: TrainConfig,
    pub dims: Vec<usize>,
    /// Epochs of training applied; zero for a fresh model.
    pub trained_epochs: usize,
}

/// Activations of one instance kept for backpropagation.
pub struct ForwardPass {
    caches: Vec<(GruCache, Option<GruCache>)>,
    /// Encoder outputs after dropout.
    pub encoded: Vec<Vector>,
    pub scores: Vector,
}

impl MoodModel {
    /// All parameters zero.
    pub fn zeros(dims: &[usize], cfg: &TrainConfig) -> Result<Self> {
        Self::build(dims, cfg, None)
    }

    /// Glorot-uniform initialization from `rng`.
    pub fn init(dims: &[usize], cfg: &TrainConfig, rng: &mut dyn rand::RngCore) -> Result<Self> {
        Self::build(dims, cfg, Some(rng))
    }

    fn build(dims: &[usize], cfg: &TrainConfig, mut rng: Option<&mut dyn rand::RngCore>) -> Result<Self> {
        cfg.validate()?;
        if dims.is_empty() || dims.contains(&0) {
            return invalid("every view needs at least one feature");
        }
        let mut gru = |d_p: usize| match rng.as_deref_mut() {
            Some(mut g) => GruParams::glorot(d_p, cfg.d_h, &mut g),
            None => GruParams::zeros(d_p, cfg.d_h),
        };
        let encoders: Vec<Encoder> = dims
            .iter()
            .map(|&d| {
                let forward = gru(d);
                let backward = cfg.bidirectional.then(|| gru(d));
                Encoder { forward, backward }
            })
            .collect();
        let widths: Vec<usize> = encoders.iter().map(Encoder::width).collect();
        let head = FusionHead::new(cfg.head, cfg.classes, cfg.d_k, &widths, rng)?;
        Ok(Self {
            encoders,
            head,
            config: cfg.clone(),
            dims: dims.to_vec(),
            trained_epochs: 0,
        })
    }

    /// Parameters in a fixed order: per view the forward then backward GRU
    /// matrices, then the head.
    pub fn matrices(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for e in &self.encoders {
            out.extend(e.forward.matrices());
            if let Some(b) = &e.backward {
                out.extend(b.matrices());
            }
        }
        out.extend(self.head.matrices());
        out
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for e in &mut self.encoders {
            out.extend(e.forward.matrices_mut());
            if let Some(b) = &mut e.backward {
                out.extend(b.matrices_mut());
            }
        }
        out.extend(self.head.matrices_mut());
        out
    }

    pub fn num_params(&self) -> usize {
        self.matrices().iter().map(|m| m.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for m in z.matrices_mut() {
            m.fill(0.0);
        }
        z
    }

    fn check_instance(&self, s: &SessionInstance) -> Result<()> {
        if s.views.len() != self.dims.len() || s.views.iter().zip(&self.dims).any(|(x, &d)| x.nrows() != d) {
            return invalid("session views do not match the model's view widths");
        }
        Ok(())
    }

    /// Forward pass; `masks` (one per view, already scaled) multiplies the
    /// encoder outputs when given.
    pub fn forward(&self, s: &SessionInstance, masks: Option<&[Vector]>) -> Result<ForwardPass> {
        self.check_instance(s)?;
        let mut caches = Vec::with_capacity(self.encoders.len());
        let mut encoded = Vec::with_capacity(self.encoders.len());
        for (p, (e, x)) in self.encoders.iter().zip(&s.views).enumerate() {
            let f = gru_forward(&e.forward, x, Direction::Forward)?;
            let b = match &e.backward {
                Some(bp) => Some(gru_forward(bp, x, Direction::Backward)?),
                None => None,
            };
            let mut out: Vec<f64> = f.final_state().iter().copied().collect();
            if let Some(b) = &b {
                out.extend(b.final_state().iter());
            }
            let mut h = Vector::from_vec(out);
            if let Some(m) = masks {
                h.component_mul_assign(&m[p]);
            }
            encoded.push(h);
            caches.push((f, b));
        }
        let scores = self.head.forward(&encoded)?;
        Ok(ForwardPass { caches, encoded, scores })
    }

    /// Class scores without dropout.
    pub fn scores(&self, s: &SessionInstance) -> Result<Vector> {
        Ok(self.forward(s, None)?.scores)
    }

    /// Loss of one instance and `∂loss/∂ŷ`.
    pub fn loss_from_scores(&self, scores: &Vector, label: f64) -> Result<(f64, Vector)> {
        if self.config.is_regression() {
            let d = scores[0] - label;
            return Ok((d * d, Vector::from_element(1, 2.0 * d)));
        }
        let c = scores.len();
        if label < 0.0 || label.fract() != 0.0 || label as usize >= c {
            return invalid(format!("label {label} is not a class index in 0..{c}"));
        }
        let y = label as usize;
        let max = scores.max();
        let exps = scores.map(|v| (v - max).exp());
        let z = exps.sum();
        let loss = z.ln() - (scores[y] - max);
        let mut grad = exps / z;
        grad[y] -= 1.0;
        Ok((loss, grad))
    }

    /// Loss of one instance and the gradient of every parameter.
    pub fn loss_and_gradient(&self, s: &SessionInstance, masks: Option<&[Vector]>) -> Result<(f64, MoodModel)> {
        let pass = self.forward(s, masks)?;
        let (loss, dy) = self.loss_from_scores(&pass.scores, s.label)?;
        let mut grad = self.zeros_like();
        let (gh, dviews) = self.head.backward(&pass.encoded, &dy);
        grad.head = gh;
        let d_h = self.config.d_h;
        for (p, ((e, x), (fc, bc))) in self.encoders.iter().zip(&s.views).zip(&pass.caches).enumerate() {
            let mut dv = dviews[p].clone();
            if let Some(m) = masks {
                dv.component_mul_assign(&m[p]);
            }
            let df = dv.rows(0, d_h).into_owned();
            grad.encoders[p].forward = gru_backward(&e.forward, x, fc, &df);
            if let (Some(bp), Some(bc)) = (&e.backward, bc) {
                let db = dv.rows(d_h, d_h).into_owned();
                grad.encoders[p].backward = Some(gru_backward(bp, x, bc, &db));
            }
        }
        Ok((loss, grad))
    }

    /// Inverted-dropout masks for one instance.
    pub(crate) fn dropout_masks(&self, rate: f64, rng: &mut impl Rng) -> Option<Vec<Vector>> {
        if rate == 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - rate);
        Some(
            self.encoders
                .iter()
                .map(|e| Vector::from_fn(e.width(), |_, _| if rng.random::<f64>() < rate { 0.0 } else { keep }))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::synth::{synth_sessions, SessionSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg(head: HeadKind, classes: usize) -> TrainConfig {
        TrainConfig { d_h: 2, d_k: 2, head, classes, dropout: 0.0, ..Default::default() }
    }

    #[test]
    fn whole_model_gradient_matches_finite_differences() {
        for seed in 0..20u64 {
            let head = [HeadKind::Fc, HeadKind::Fm, HeadKind::Mvm][seed as usize % 3];
            let classes = if seed % 4 == 3 { 1 } else { 2 };
            let cfg = tiny_cfg(head, classes);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut model = MoodModel::init(&[2, 2], &cfg, &mut rng).unwrap();
            for m in model.matrices_mut() {
                *m *= 1.5;
            }
            let s = SessionInstance {
                views: (0..2).map(|_| Matrix::from_fn(2, 2 + (seed as usize % 5), |_, _| rng.random_range(-1.0..1.0))).collect(),
                label: if classes == 1 { 0.7 } else { (seed % 2) as f64 },
            };
            let (_, grad) = model.loss_and_gradient(&s, None).unwrap();
            let loss = |m: &MoodModel| m.loss_and_gradient(&s, None).unwrap().0;
            let analytic: Vec<f64> = grad.matrices().iter().flat_map(|m| m.iter().copied()).collect();
            let mut numeric = Vec::with_capacity(analytic.len());
            let count = model.matrices().len();
            for mi in 0..count {
                for idx in 0..model.matrices()[mi].len() {
                    let h = 1e-5;
                    let mut plus = model.clone();
                    plus.matrices_mut()[mi][idx] += h;
                    let mut minus = model.clone();
                    minus.matrices_mut()[mi][idx] -= h;
                    numeric.push((loss(&plus) - loss(&minus)) / (2.0 * h));
                }
            }
            let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(diff <= 1e-4 * norm, "seed {seed} {head}: rel err {}", diff / norm);
        }
    }

    #[test]
    fn zero_model_predicts_constants() {
        let ds = synth_sessions(1, &SessionSpec { sessions: 6, ..Default::default() });
        for head in [HeadKind::Fc, HeadKind::Fm, HeadKind::Mvm] {
            let model = MoodModel::zeros(&ds.dims, &TrainConfig { head, ..Default::default() }).unwrap();
            let first = model.scores(&ds.instances[0]).unwrap();
            for s in &ds.instances {
                assert_eq!(model.scores(s).unwrap(), first);
            }
        }
    }

    #[test]
    fn zero_rate_dropout_is_identity() {
        let cfg = TrainConfig::default();
        let model = MoodModel::zeros(&[2, 3], &cfg).unwrap();
        assert!(model.dropout_masks(0.0, &mut ChaCha8Rng::seed_from_u64(0)).is_none());
        let masks = model.dropout_masks(0.5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(masks.iter().flatten().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn fc_width_is_c_times_dk() {
        let cfg = TrainConfig { head: HeadKind::Fc, classes: 3, d_k: 4, ..Default::default() };
        let model = MoodModel::zeros(&[2, 2], &cfg).unwrap();
        let FusionHead::Fc { w1, .. } = &model.head else { unreachable!() };
        assert_eq!(w1.nrows(), 12);
    }
}
