use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::tape::{GradBuffers, Op, Tape, Var};
use crate::autodiff::Mode;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Identifies one dropout draw. The mask depends only on this key and the
/// tensor size, so reruns reproduce it regardless of evaluation order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct DropoutKey {
    pub seed: u64,
    pub epoch: u64,
    pub batch: u64,
    pub layer: u64,
}

impl DropoutKey {
    pub fn new(seed: u64, epoch: u64, batch: u64, layer: u64) -> Self {
        DropoutKey {
            seed,
            epoch,
            batch,
            layer,
        }
    }

    pub fn with_layer(self, layer: u64) -> Self {
        DropoutKey { layer, ..self }
    }

    fn rng(self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        for (chunk, v) in seed
            .chunks_exact_mut(8)
            .zip([self.seed, self.epoch, self.batch, self.layer])
        {
            chunk.copy_from_slice(&v.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }

    /// Multiplicative mask: 0 with probability `p`, `1 / (1 - p)` otherwise.
    pub fn mask(self, len: usize, p: f64) -> Vec<f64> {
        let keep = 1.0 / (1.0 - p);
        let mut rng = self.rng();
        (0..len)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect()
    }
}

impl Tape {
    /// Mean pooling along the last axis with the given window and stride.
    pub fn avg_pool(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let w = *shape
            .last()
            .ok_or_else(|| Error::Dimension("avg_pool of a scalar".into()))?;
        if window == 0 || stride == 0 {
            return Err(Error::Domain(
                "avg_pool window and stride must be positive".into(),
            ));
        }
        if window > w {
            return Err(Error::Length(format!(
                "avg_pool window {window} exceeds length {w}"
            )));
        }
        let pooled = (w - window) / stride + 1;
        let rows = self.value(x).len() / w;
        let xv = self.value(x).data();
        let inv = 1.0 / window as f64;
        let mut out = Vec::with_capacity(rows * pooled);
        for r in 0..rows {
            let row = &xv[r * w..][..w];
            for p in 0..pooled {
                out.push(row[p * stride..][..window].iter().sum::<f64>() * inv);
            }
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = pooled;
        let out = Tensor::new(out_shape, out)?;
        self.push(out, Op::AvgPool { x, window, stride }, &[x])
    }

    /// Inverted dropout. Eval mode and `p == 0` pass `x` through untouched.
    pub fn dropout(&mut self, x: Var, p: f64, mode: Mode, key: DropoutKey) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Domain(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let mask = key.mask(self.value(x).len(), p);
        let xv = self.value(x);
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(out, Op::Dropout { x, mask }, &[x])
    }

    /// Mean softmax cross-entropy of `logits: [B, K]` against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(Error::Dimension(format!(
                "softmax_cross_entropy: logits {shape:?} vs {} labels",
                labels.len()
            )));
        }
        let (b, k) = (shape[0], shape[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Domain(format!(
                "label {bad} out of range for {k} classes"
            )));
        }
        let lv = self.value(logits).data();
        let mut probs = vec![0.0; b * k];
        let mut loss = 0.0;
        for r in 0..b {
            let row = &lv[r * k..][..k];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_denom = denom.ln();
            for c in 0..k {
                probs[r * k + c] = (row[c] - max).exp() / denom;
            }
            loss += log_denom - (row[labels[r]] - max);
        }
        let out = Tensor::scalar(loss / b as f64);
        self.push(
            out,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        )
    }
}

/// Row-wise softmax of plain `[B, K]` logits.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let k = *logits.shape().last().expect("2-d logits");
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

pub(crate) fn avg_pool_backward(
    tape: &Tape,
    x: Var,
    window: usize,
    stride: usize,
    out: &Tensor,
    gout: &[f64],
    g: &mut GradBuffers,
) {
    if !tape.requires_grad(x) {
        return;
    }
    let w = *tape.shape(x).last().unwrap();
    let pooled = *out.shape().last().unwrap();
    let inv = 1.0 / window as f64;
    let gx = g.slot(x);
    let rows = gx.len() / w;
    for r in 0..rows {
        let dst = &mut gx[r * w..][..w];
        for p in 0..pooled {
            let go = gout[r * pooled + p] * inv;
            dst[p * stride..][..window]
                .iter_mut()
                .for_each(|d| *d += go);
        }
    }
}

pub(crate) fn softmax_ce_backward(
    tape: &Tape,
    logits: Var,
    labels: &[usize],
    probs: &[f64],
    gout: &[f64],
    g: &mut GradBuffers,
) {
    if !tape.requires_grad(logits) {
        return;
    }
    let k = tape.shape(logits)[1];
    let scale = gout[0] / labels.len() as f64;
    let gl = g.slot(logits);
    for (r, &label) in labels.iter().enumerate() {
        for c in 0..k {
            let target = if c == label { 1.0 } else { 0.0 };
            gl[r * k + c] += scale * (probs[r * k + c] - target);
        }
    }
}
