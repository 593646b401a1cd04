//! Compact shallow classifier: temporal conv → spatial conv → batch norm →
//! square → average pool → log → dropout → dense.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init_uniform;
use crate::autodiff::{ActivationKind, DropoutKey, Mode, Padding, RunningStats, Tape, Var};
use crate::data::N_CLASSES;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub n_filters: usize,
    pub temporal_len: usize,
    pub pool_window: usize,
    pub pool_stride: usize,
    pub dropout: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            n_filters: 8,
            temporal_len: 25,
            pool_window: 75,
            pool_stride: 15,
            dropout: 0.5,
        }
    }
}

impl ClassifierConfig {
    /// Shortest input the conv and pooling chain accepts.
    pub fn min_len(&self) -> usize {
        self.temporal_len + self.pool_window - 1
    }

    /// Pooled time steps for an input of `t` samples.
    pub fn pooled_len(&self, t: usize) -> Result<usize> {
        if t < self.min_len() {
            return Err(Error::Length(format!(
                "classifier needs at least {} samples, got {t}",
                self.min_len()
            )));
        }
        Ok((t - self.temporal_len + 1 - self.pool_window) / self.pool_stride + 1)
    }

    /// Width of the dense layer input.
    pub fn feature_len(&self, t: usize) -> Result<usize> {
        Ok(self.n_filters * self.pooled_len(t)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    pub config: ClassifierConfig,
    pub n_channels: usize,
    pub input_len: usize,
    /// `[F, 1, 1, k]`.
    pub temporal: Tensor,
    /// `[F, F, C, 1]`.
    pub spatial: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub bn: RunningStats,
    /// `[features, classes]`.
    pub dense_w: Tensor,
    pub dense_b: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct ClassifierVars {
    pub temporal: Var,
    pub spatial: Var,
    pub gamma: Var,
    pub beta: Var,
    pub dense_w: Var,
    pub dense_b: Var,
}

impl ClassifierParams {
    pub fn new(
        config: ClassifierConfig,
        n_channels: usize,
        input_len: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let f = config.n_filters;
        if f == 0 || config.temporal_len == 0 || config.pool_window == 0 || config.pool_stride == 0
        {
            return Err(Error::Config("classifier sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::Config(format!(
                "classifier dropout {} outside [0, 1)",
                config.dropout
            )));
        }
        let feats = config.feature_len(input_len)?;
        Ok(ClassifierParams {
            temporal: init_uniform(vec![f, 1, 1, config.temporal_len], config.temporal_len, rng),
            spatial: init_uniform(vec![f, f, n_channels, 1], f * n_channels, rng),
            gamma: Tensor::full(vec![f], 1.0),
            beta: Tensor::zeros(vec![f]),
            bn: RunningStats::new(f),
            dense_w: init_uniform(vec![feats, N_CLASSES], feats, rng),
            dense_b: init_uniform(vec![N_CLASSES], feats, rng),
            config,
            n_channels,
            input_len,
        })
    }

    pub fn named_params(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("temporal", &self.temporal),
            ("spatial", &self.spatial),
            ("gamma", &self.gamma),
            ("beta", &self.beta),
            ("dense_w", &self.dense_w),
            ("dense_b", &self.dense_b),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.temporal,
            &mut self.spatial,
            &mut self.gamma,
            &mut self.beta,
            &mut self.dense_w,
            &mut self.dense_b,
        ]
    }

    pub fn bind(&self, tape: &mut Tape) -> ClassifierVars {
        ClassifierVars {
            temporal: tape.param(self.temporal.clone()),
            spatial: tape.param(self.spatial.clone()),
            gamma: tape.param(self.gamma.clone()),
            beta: tape.param(self.beta.clone()),
            dense_w: tape.param(self.dense_w.clone()),
            dense_b: tape.param(self.dense_b.clone()),
        }
    }
}

/// Penultimate activations `[B, features]` for `x: [B, 1, C, T]`.
pub fn classifier_features(
    tape: &mut Tape,
    x: Var,
    params: &mut ClassifierParams,
    vars: &ClassifierVars,
    mode: Mode,
) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 4 || shape[1] != 1 || shape[2] != params.n_channels {
        return Err(Error::Dimension(format!(
            "classifier expects [B, 1, {}, T], got {shape:?}",
            params.n_channels
        )));
    }
    if shape[3] != params.input_len {
        return Err(Error::Length(format!(
            "classifier built for {} samples, got {}",
            params.input_len, shape[3]
        )));
    }
    let cfg = &params.config;
    let feats = cfg.feature_len(shape[3])?;
    let y = tape.conv2d(x, vars.temporal, Padding::Valid)?;
    let y = tape.conv2d(y, vars.spatial, Padding::Valid)?;
    let y = tape.batch_norm(y, vars.gamma, vars.beta, &mut params.bn, mode)?;
    let y = tape.activation(ActivationKind::Square, y)?;
    let y = tape.avg_pool(y, cfg.pool_window, cfg.pool_stride)?;
    let y = tape.activation(ActivationKind::LogClamped, y)?;
    tape.reshape(y, &[shape[0], feats])
}

/// Logits `[B, classes]` for `x: [B, 1, C, T]`.
pub fn classifier_forward(
    tape: &mut Tape,
    x: Var,
    params: &mut ClassifierParams,
    vars: &ClassifierVars,
    mode: Mode,
    key: DropoutKey,
) -> Result<Var> {
    let f = classifier_features(tape, x, params, vars, mode)?;
    let f = tape.dropout(f, params.config.dropout, mode, key)?;
    tape.dense(f, vars.dense_w, vars.dense_b)
}
