//! Exponential moving standardization.

use crate::error::{Error, Result};

pub const DEFAULT_EMS_ALPHA: f64 = 1e-3;
pub const DEFAULT_EMS_EPS: f64 = 1e-4;

/// Streaming per-channel state. A channel's first sample seeds its mean.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardizerState {
    pub alpha: f64,
    pub eps: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    started: Vec<bool>,
}

impl StandardizerState {
    pub fn new(n_channels: usize, alpha: f64, eps: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!(
                "standardizer alpha {alpha} outside (0, 1)"
            )));
        }
        if !(eps > 0.0) {
            return Err(Error::Domain(format!(
                "standardizer eps {eps} must be positive"
            )));
        }
        Ok(StandardizerState {
            alpha,
            eps,
            mean: vec![0.0; n_channels],
            var: vec![0.0; n_channels],
            started: vec![false; n_channels],
        })
    }

    /// Standardizes one sample of channel `ch`.
    pub fn step(&mut self, ch: usize, x: f64) -> f64 {
        let a = self.alpha;
        if !self.started[ch] {
            self.started[ch] = true;
            self.mean[ch] = x;
            self.var[ch] = 0.0;
        } else {
            self.mean[ch] = (1.0 - a) * self.mean[ch] + a * x;
            let d = x - self.mean[ch];
            self.var[ch] = (1.0 - a) * self.var[ch] + a * d * d;
        }
        (x - self.mean[ch]) / self.var[ch].sqrt().max(self.eps)
    }

    /// Standardizes a block of consecutive samples of channel `ch` in place.
    pub fn process(&mut self, ch: usize, x: &mut [f64]) {
        for v in x.iter_mut() {
            *v = self.step(ch, *v);
        }
    }
}

/// One-shot standardization of a single channel.
pub fn exp_moving_standardize(x: &[f64], alpha: f64, eps: f64) -> Result<Vec<f64>> {
    let mut state = StandardizerState::new(1, alpha, eps)?;
    let mut y = x.to_vec();
    state.process(0, &mut y);
    Ok(y)
}
