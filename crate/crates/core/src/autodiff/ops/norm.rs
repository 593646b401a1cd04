//! Per-channel batch normalisation over `[B, C, H, W]`.

use crate::autodiff::tape::{GradBuffers, Op, Tape, Var};
use crate::autodiff::Mode;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_BN_EPS: f64 = 1e-5;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.1;

/// Running statistics of one batch-norm layer.
///
/// The affine scale/shift are ordinary parameters and live outside this struct.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub momentum: f64,
    /// Floor on the variance used for normalisation.
    pub eps: f64,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            momentum: DEFAULT_BN_MOMENTUM,
            eps: DEFAULT_BN_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

impl Tape {
    /// Normalises each channel of `x: [B, C, H, W]` and applies `gamma * x̂ + beta`.
    ///
    /// Train mode uses batch statistics (biased variance) and folds them into
    /// `stats` with its momentum, storing the unbiased variance. Eval mode uses
    /// `stats` as-is. The standard deviation is `sqrt(max(var, eps))`.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut RunningStats,
        mode: Mode,
    ) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 4 {
            return Err(Error::Dimension(format!(
                "batch_norm expects [B,C,H,W], got {shape:?}"
            )));
        }
        let (b, c, plane) = (shape[0], shape[1], shape[2] * shape[3]);
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(v) != [c] {
                return Err(Error::Dimension(format!(
                    "batch_norm {name} has shape {:?}, expected [{c}]",
                    self.shape(v)
                )));
            }
        }
        if stats.channels() != c {
            return Err(Error::Dimension(format!(
                "batch_norm state has {} channels, input has {c}",
                stats.channels()
            )));
        }
        let n = b * plane;
        if mode == Mode::Train && n < 2 {
            return Err(Error::Length(format!(
                "batch_norm in train mode needs at least 2 values per channel, got {n}"
            )));
        }

        let xv = self.value(x).data();
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        match mode {
            Mode::Train => {
                for ch in 0..c {
                    let mut s = 0.0;
                    for bi in 0..b {
                        s += xv[(bi * c + ch) * plane..][..plane].iter().sum::<f64>();
                    }
                    let m = s / n as f64;
                    let mut ss = 0.0;
                    for bi in 0..b {
                        ss += xv[(bi * c + ch) * plane..][..plane]
                            .iter()
                            .map(|v| (v - m) * (v - m))
                            .sum::<f64>();
                    }
                    mean[ch] = m;
                    var[ch] = ss / n as f64;
                }
            }
            Mode::Eval => {
                mean.copy_from_slice(&stats.mean);
                var.copy_from_slice(&stats.var);
            }
        }

        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / v.max(stats.eps).sqrt()).collect();
        let floored: Vec<bool> = var.iter().map(|&v| v < stats.eps).collect();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut out = vec![0.0; xv.len()];
        for bi in 0..b {
            for ch in 0..c {
                let off = (bi * c + ch) * plane;
                for j in off..off + plane {
                    let h = (xv[j] - mean[ch]) * inv_std[ch];
                    out[j] = gv[ch] * h + bv[ch];
                }
            }
        }

        if mode == Mode::Train {
            let m = stats.momentum;
            let unbias = n as f64 / (n as f64 - 1.0);
            for ch in 0..c {
                stats.mean[ch] = (1.0 - m) * stats.mean[ch] + m * mean[ch];
                stats.var[ch] = (1.0 - m) * stats.var[ch] + m * var[ch] * unbias;
            }
        }

        let out = Tensor::new(shape, out)?;
        self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
                train: mode == Mode::Train,
                floored,
            },
            &[x, gamma, beta],
        )
    }
}

pub(crate) fn backward(
    tape: &Tape,
    (x, gamma, beta): (Var, Var, Var),
    mean: &[f64],
    inv_std: &[f64],
    train: bool,
    floored: &[bool],
    gout: &[f64],
    g: &mut GradBuffers,
) {
    let shape = tape.shape(x);
    let (b, c, plane) = (shape[0], shape[1], shape[2] * shape[3]);
    let n = (b * plane) as f64;
    let xv = tape.value(x).data();
    let xhat = |j: usize, ch: usize| (xv[j] - mean[ch]) * inv_std[ch];
    let mut sum_g = vec![0.0; c];
    let mut sum_g_xhat = vec![0.0; c];
    for bi in 0..b {
        for ch in 0..c {
            let off = (bi * c + ch) * plane;
            for j in off..off + plane {
                sum_g[ch] += gout[j];
                sum_g_xhat[ch] += gout[j] * xhat(j, ch);
            }
        }
    }
    if tape.requires_grad(gamma) {
        for (d, s) in g.slot(gamma).iter_mut().zip(&sum_g_xhat) {
            *d += s;
        }
    }
    if tape.requires_grad(beta) {
        for (d, s) in g.slot(beta).iter_mut().zip(&sum_g) {
            *d += s;
        }
    }
    if tape.requires_grad(x) {
        let gv = tape.value(gamma).data();
        let gx = g.slot(x);
        for bi in 0..b {
            for ch in 0..c {
                let off = (bi * c + ch) * plane;
                let scale = gv[ch] * inv_std[ch];
                if !train {
                    for j in off..off + plane {
                        gx[j] += scale * gout[j];
                    }
                } else if !floored[ch] {
                    let mg = sum_g[ch] / n;
                    let mgx = sum_g_xhat[ch] / n;
                    for j in off..off + plane {
                        gx[j] += scale * (gout[j] - mg - xhat(j, ch) * mgx);
                    }
                } else {
                    // variance under the floor: only the mean subtraction depends on x
                    let mg = sum_g[ch] / n;
                    for j in off..off + plane {
                        gx[j] += scale * (gout[j] - mg);
                    }
                }
            }
        }
    }
}
