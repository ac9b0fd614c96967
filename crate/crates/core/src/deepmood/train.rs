//! Mini-batch training with RMSProp, evaluation and prediction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{MoodModel, SessionDataset, SessionInstance, TrainConfig};
use crate::error::{invalid, Error, Result};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean loss over the training set, evaluated without dropout after the
    /// epoch.
    pub train_loss: f64,
    /// Accuracy (classification) or RMSE (regression).
    pub train_metric: f64,
    pub valid_loss: Option<f64>,
    pub valid_metric: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_model: MoodModel,
    /// Weights from the epoch with the best validation metric (earliest on
    /// ties), or the final weights without a validation set.
    pub best_model: MoodModel,
    pub best_epoch: usize,
    pub history: Vec<EpochMetrics>,
}

/// Mean loss and metric over a dataset, without dropout.
pub fn evaluate(model: &MoodModel, ds: &SessionDataset) -> Result<(f64, f64)> {
    if ds.is_empty() {
        return invalid("cannot evaluate on an empty dataset");
    }
    let mut loss = 0.0;
    let mut hits = 0usize;
    let mut sq = 0.0;
    for s in &ds.instances {
        let scores = model.scores(s)?;
        loss += model.loss_from_scores(&scores, s.label)?.0;
        if model.config.is_regression() {
            sq += (scores[0] - s.label).powi(2);
        } else if argmax(scores.as_slice()) as f64 == s.label {
            hits += 1;
        }
    }
    let n = ds.len() as f64;
    let metric = if model.config.is_regression() { (sq / n).sqrt() } else { hits as f64 / n };
    Ok((loss / n, metric))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Class index (argmax, ties to the lower index) or the raw regression score
/// per instance. Inference never applies dropout.
pub fn predict(model: &MoodModel, instances: &[SessionInstance]) -> Result<Vec<f64>> {
    if model.trained_epochs == 0 {
        return Err(Error::State("model has not been trained".into()));
    }
    instances
        .iter()
        .map(|s| {
            let scores = model.scores(s)?;
            Ok(if model.config.is_regression() { scores[0] } else { argmax(scores.as_slice()) as f64 })
        })
        .collect()
}

fn check_labels(ds: &SessionDataset, cfg: &TrainConfig) -> Result<()> {
    if cfg.is_regression() {
        return Ok(());
    }
    for (i, s) in ds.instances.iter().enumerate() {
        if s.label < 0.0 || s.label.fract() != 0.0 || s.label as usize >= cfg.classes {
            return invalid(format!("session {i}: label {} is not a class in 0..{}", s.label, cfg.classes));
        }
    }
    Ok(())
}

/// End-to-end training from a Glorot initialization seeded by `cfg.seed`.
pub fn train(train_set: &SessionDataset, valid: Option<&SessionDataset>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return invalid("empty training set");
    }
    check_labels(train_set, cfg)?;
    if let Some(v) = valid {
        if v.dims != train_set.dims {
            return invalid("validation views differ from the training views");
        }
        check_labels(v, cfg)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = MoodModel::init(&train_set.dims, cfg, &mut rng)?;
    let mut cache: Vec<Matrix> = model.matrices().iter().map(|m| Matrix::zeros(m.nrows(), m.ncols())).collect();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, MoodModel)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad: Option<MoodModel> = None;
            for &i in batch {
                let s = &train_set.instances[i];
                let masks = model.dropout_masks(cfg.dropout, &mut rng);
                let (_, g) = model.loss_and_gradient(s, masks.as_deref())?;
                match grad.as_mut() {
                    None => grad = Some(g),
                    Some(acc) => {
                        for (a, b) in acc.matrices_mut().into_iter().zip(g.matrices()) {
                            *a += b;
                        }
                    }
                }
            }
            let grad = grad.expect("chunks are non-empty");
            let scale = 1.0 / batch.len() as f64;
            for ((param, g), v) in model.matrices_mut().into_iter().zip(grad.matrices()).zip(cache.iter_mut()) {
                for ((p, &gi), vi) in param.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                    let gi = gi * scale;
                    *vi = cfg.rms_decay * *vi + (1.0 - cfg.rms_decay) * gi * gi;
                    *p -= cfg.learning_rate * gi / (vi.sqrt() + cfg.rms_epsilon);
                }
            }
        }
        model.trained_epochs = epoch;
        let (train_loss, train_metric) = evaluate(&model, train_set)?;
        let (valid_loss, valid_metric) = match valid {
            Some(v) if !v.is_empty() => {
                let (l, m) = evaluate(&model, v)?;
                (Some(l), Some(m))
            }
            _ => (None, None),
        };
        if let Some(m) = valid_metric {
            let key = if cfg.is_regression() { -m } else { m };
            if best.as_ref().is_none_or(|(k, _, _)| key > *k) {
                best = Some((key, epoch, model.clone()));
            }
        }
        history.push(EpochMetrics { epoch, train_loss, train_metric, valid_loss, valid_metric });
    }
    let (best_epoch, best_model) = match best {
        Some((_, e, m)) => (e, m),
        None => (cfg.epochs, model.clone()),
    };
    Ok(TrainOutcome { final_model: model, best_model, best_epoch, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::synth::{synth_sessions, SessionSpec};
    use crate::deepmood::HeadKind;

    fn small() -> SessionDataset {
        synth_sessions(4, &SessionSpec { sessions: 16, ..Default::default() })
    }

    #[test]
    fn empty_dataset_rejected() {
        let ds = SessionDataset { instances: vec![], ..small() };
        assert!(train(&ds, None, &TrainConfig::default()).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let ds = small();
        let cfg = TrainConfig { epochs: 3, batch_size: 4, ..Default::default() };
        let a = train(&ds, Some(&ds), &cfg).unwrap();
        let b = train(&ds, Some(&ds), &cfg).unwrap();
        assert_eq!(a.final_model, b.final_model);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn loss_decreases_over_first_epochs() {
        let ds = small();
        for head in [HeadKind::Fc, HeadKind::Fm, HeadKind::Mvm] {
            let cfg = TrainConfig { epochs: 10, batch_size: 4, head, ..Default::default() };
            let out = train(&ds, None, &cfg).unwrap();
            let first = out.history.first().unwrap().train_loss;
            let last = out.history.last().unwrap().train_loss;
            assert!(last < first, "{head}: {first} -> {last}");
        }
    }

    #[test]
    fn prediction_is_per_instance() {
        let ds = small();
        let cfg = TrainConfig { epochs: 2, batch_size: 8, ..Default::default() };
        let model = train(&ds, None, &cfg).unwrap().final_model;
        let all = predict(&model, &ds.instances).unwrap();
        let mut rev = ds.instances.clone();
        rev.reverse();
        let mut back = predict(&model, &rev).unwrap();
        back.reverse();
        assert_eq!(all, back);
        for (i, s) in ds.instances.iter().enumerate() {
            assert_eq!(predict(&model, std::slice::from_ref(s)).unwrap()[0], all[i]);
        }
        let fresh = MoodModel::zeros(&ds.dims, &cfg).unwrap();
        assert!(matches!(predict(&fresh, &ds.instances), Err(Error::State(_))));
    }

    #[test]
    fn batch_gradient_is_additive() {
        let ds = small();
        let cfg = TrainConfig { d_h: 2, d_k: 2, ..Default::default() };
        let model = MoodModel::init(&ds.dims, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let s = &ds.instances[0];
        let (_, g) = model.loss_and_gradient(s, None).unwrap();
        let mut acc = g.clone();
        for (a, b) in acc.matrices_mut().into_iter().zip(g.matrices()) {
            *a += b;
        }
        for (a, b) in acc.matrices().iter().zip(g.matrices()) {
            assert_eq!(**a, b * 2.0);
        }
    }
}
