use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{cosine_lr, AdamW, AdamWConfig};
use crate::autodiff::{DropoutKey, Mode, Tape};
use crate::data::N_CLASSES;
use crate::error::{Error, Result};
use crate::model::{GateHooks, IntegratedModel};
use crate::signal::Prepared;
use crate::tensor::Tensor;

/// Optimisation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Cosine horizon in epochs; `None` anneals over all epochs.
    pub t_max: Option<usize>,
    pub eta_min: f64,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            lr: 0.002,
            weight_decay: 0.075,
            epochs: 300,
            t_max: None,
            eta_min: 0.0,
            betas: (0.9, 0.999),
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr > 0.0)
            || self.weight_decay < 0.0
            || self.eta_min < 0.0
            || !(self.adam_eps > 0.0)
        {
            return bad("lr and adam_eps must be positive, weight_decay and eta_min non-negative");
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad("betas must lie in [0, 1)");
        }
        if self.t_max == Some(0) {
            return bad("t_max must be positive");
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.betas.0,
            beta2: self.betas.1,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    /// Learning rate used throughout `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        cosine_lr(
            epoch,
            self.t_max.unwrap_or(self.epochs).max(1),
            self.lr,
            self.eta_min,
        )
    }
}

/// What [`fit`] observed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
    pub lr_history: Vec<f64>,
    /// Subject ids of every trial that entered a batch.
    pub subjects_seen: BTreeSet<u32>,
}

/// Stacks the rest and MI windows of `indices` into `[B, C, T]` tensors.
pub fn batch_tensors(data: &Prepared, indices: &[usize]) -> Result<(Tensor, Tensor)> {
    let b = indices.len();
    let c = data.n_channels;
    let mut rest = Vec::with_capacity(b * c * data.rest_len);
    let mut mi = Vec::with_capacity(b * c * data.mi_len);
    for &i in indices {
        rest.extend_from_slice(data.rest_trial(i));
        mi.extend_from_slice(data.mi_trial(i));
    }
    Ok((
        Tensor::new(vec![b, c, data.rest_len], rest)?,
        Tensor::new(vec![b, c, data.mi_len], mi)?,
    ))
}

fn check_labels(data: &Prepared) -> Result<()> {
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= N_CLASSES) {
        return Err(Error::Domain(format!(
            "label {bad} outside [0, {N_CLASSES})"
        )));
    }
    Ok(())
}

/// Mini-batch AdamW on softmax cross-entropy with a per-epoch cosine rate.
/// Batch order is drawn from `seed` and the epoch number only.
pub fn fit(model: &mut IntegratedModel, data: &Prepared, cfg: &TrainConfig) -> Result<FitReport> {
    cfg.validate()?;
    if data.n_trials() == 0 {
        return Err(Error::Domain("cannot train on an empty dataset".into()));
    }
    check_labels(data)?;
    let mut opt = AdamW::new(cfg.adamw());
    let mut report = FitReport::default();
    let hooks = GateHooks::default();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let mut order: Vec<usize> = (0..data.n_trials()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            report
                .subjects_seen
                .extend(idx.iter().map(|&i| data.subject_ids[i]));
            let (rest, mi) = batch_tensors(data, idx)?;
            let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let (r, m) = (tape.constant(rest), tape.constant(mi));
            let key = DropoutKey::new(cfg.seed, epoch as u64, bi as u64, 0);
            let out = model.forward(&mut tape, &vars, r, m, Mode::Train, key, &hooks)?;
            let loss = tape.softmax_cross_entropy(out.logits, &labels)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {bi}"
                )));
            }
            total += value * idx.len() as f64;
            tape.backward(loss)?;
            let vars = IntegratedModel::var_list(&vars);
            let grads: Vec<Option<Tensor>> = vars.iter().map(|&v| tape.grad(v).cloned()).collect();
            drop(tape);
            let grads: Vec<Option<&Tensor>> = grads.iter().map(Option::as_ref).collect();
            opt.step(&mut model.trainable_params_mut(), &grads, lr)?;
        }
        report.loss_history.push(total / data.n_trials() as f64);
        report.lr_history.push(lr);
    }
    Ok(report)
}

/// Argmax per row; ties go to the lowest class index.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let k = *logits.shape().last().unwrap_or(&1);
    logits
        .data()
        .chunks_exact(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Eval-mode class predictions, in trial order.
pub fn predict(
    model: &mut IntegratedModel,
    data: &Prepared,
    batch_size: usize,
) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(data.n_trials());
    let all: Vec<usize> = (0..data.n_trials()).collect();
    for idx in all.chunks(batch_size.max(1)) {
        let (rest, mi) = batch_tensors(data, idx)?;
        out.extend(argmax_rows(&model.predict_logits(&rest, &mi)?));
    }
    Ok(out)
}

/// Fraction of trials whose predicted class matches the label.
pub fn evaluate(model: &mut IntegratedModel, data: &Prepared) -> Result<f64> {
    if data.n_trials() == 0 {
        return Err(Error::Domain("cannot evaluate on an empty dataset".into()));
    }
    let pred = predict(model, data, 64)?;
    Ok(accuracy(&pred, &data.labels))
}

pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_low() {
        let t = Tensor::new(vec![2, 4], vec![1.0, 3.0, 3.0, 0.0, 2.0, 2.0, 2.0, 2.0]).unwrap();
        assert_eq!(argmax_rows(&t), vec![1, 0]);
    }

    #[test]
    fn lr_follows_schedule() {
        let cfg = TrainConfig {
            epochs: 4,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.lr_at(0), 0.002);
        assert_eq!(cfg.lr_at(4), 0.0);
    }
}
