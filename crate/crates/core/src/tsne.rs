//! Exact t-SNE for feature inspection.
//!
//! O(N²) in time and memory, which is fine for a few thousand points.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iters: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum: f64,
    pub final_momentum: f64,
    /// Standard deviation of the Gaussian initial layout.
    pub init_std: f64,
    /// Allowed absolute error of each row's perplexity.
    pub perplexity_tol: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iters: 1000,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum: 0.5,
            final_momentum: 0.8,
            init_std: 1e-4,
            perplexity_tol: 1e-4,
            seed: 0,
        }
    }
}

/// Row-normalised conditional affinities `p(j|i)` and the perplexity each
/// row actually reached.
#[derive(Clone, Debug, PartialEq)]
pub struct Affinities {
    pub n: usize,
    /// `n × n`, zero diagonal, rows sum to 1.
    pub conditional: Vec<f64>,
    pub perplexities: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TsneResult {
    /// `[N, 2]`.
    pub embedding: Tensor,
    /// KL(P‖Q) against the unexaggerated P after every iteration.
    pub kl_trace: Vec<f64>,
    pub affinities: Affinities,
}

fn squared_distances(x: &Tensor) -> Result<(usize, Vec<f64>)> {
    if x.shape().len() != 2 {
        return Err(Error::Dimension(format!(
            "t-SNE expects [N, D] features, got {:?}",
            x.shape()
        )));
    }
    let (n, d) = (x.shape()[0], x.shape()[1]);
    let v = x.data();
    if v.iter().any(|a| !a.is_finite()) {
        return Err(Error::Domain(
            "t-SNE input contains non-finite values".into(),
        ));
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = (0..d).map(|k| (v[i * d + k] - v[j * d + k]).powi(2)).sum();
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    Ok((n, out))
}

/// Fills `row` with `exp(-beta (d - d_min))` normalised, and returns the
/// Shannon entropy in nats.
fn row_entropy(dist: &[f64], i: usize, beta: f64, row: &mut [f64]) -> f64 {
    let d_min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (p, &d)) in row.iter_mut().zip(dist).enumerate() {
        *p = if j == i {
            0.0
        } else {
            (-beta * (d - d_min)).exp()
        };
        sum += *p;
    }
    let mut h = 0.0;
    for p in row.iter_mut() {
        *p /= sum;
        if *p > 0.0 {
            h -= *p * p.ln();
        }
    }
    h
}

/// Per-point Gaussian bandwidths found by bisection on the precision so that
/// each row's perplexity `exp(H)` matches the target within `tol`.
pub fn conditional_affinities(x: &Tensor, perplexity: f64, tol: f64) -> Result<Affinities> {
    let (n, dist) = squared_distances(x)?;
    if !(perplexity > 0.0) || n < 2 || perplexity > (n - 1) as f64 {
        return Err(Error::Domain(format!(
            "perplexity {perplexity} unreachable with {n} points"
        )));
    }
    let target = perplexity.ln();
    let mut conditional = vec![0.0; n * n];
    let mut perplexities = vec![0.0; n];
    for i in 0..n {
        let d = &dist[i * n..][..n];
        let row = &mut conditional[i * n..][..n];
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut beta = 1.0;
        let mut h = row_entropy(d, i, beta, row);
        for _ in 0..200 {
            if (h.exp() - perplexity).abs() <= tol {
                break;
            }
            // entropy falls as beta grows
            if h > target {
                lo = beta;
                beta = if hi.is_finite() {
                    (lo + hi) / 2.0
                } else {
                    beta * 2.0
                };
            } else {
                hi = beta;
                beta = (lo + hi) / 2.0;
            }
            h = row_entropy(d, i, beta, row);
        }
        perplexities[i] = h.exp();
    }
    Ok(Affinities {
        n,
        conditional,
        perplexities,
    })
}

fn kl_divergence(p: &[f64], num: &[f64], z: f64) -> f64 {
    p.iter()
        .zip(num)
        .filter(|(&pij, _)| pij > 0.0)
        .map(|(&pij, &nij)| pij * (pij / (nij / z).max(1e-300)).ln())
        .sum()
}

/// Projects `features: [N, D]` to two dimensions.
pub fn tsne_project(features: &Tensor, cfg: &TsneConfig) -> Result<TsneResult> {
    let n = features.shape().first().copied().unwrap_or(0);
    if (n as f64) < 3.0 * cfg.perplexity {
        return Err(Error::Domain(format!(
            "t-SNE needs at least 3·perplexity = {} points, got {n}",
            3.0 * cfg.perplexity
        )));
    }
    let aff = conditional_affinities(features, cfg.perplexity, cfg.perplexity_tol)?;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((aff.conditional[i * n + j] + aff.conditional[j * n + i])
                    / (2.0 * n as f64))
                    .max(1e-300);
            }
        }
    }

    let normal = Normal::new(0.0, cfg.init_std).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut y: Vec<f64> = (0..2 * n).map(|_| normal.sample(&mut rng)).collect();
    let mut update = vec![0.0; 2 * n];
    let mut gains = vec![1.0f64; 2 * n];
    let mut num = vec![0.0; n * n];
    let mut grad = vec![0.0; 2 * n];
    let mut kl_trace = Vec::with_capacity(cfg.iters);

    for it in 0..cfg.iters {
        let exaggerate = if it < cfg.exaggeration_iters {
            cfg.exaggeration
        } else {
            1.0
        };
        let momentum = if it < cfg.exaggeration_iters {
            cfg.momentum
        } else {
            cfg.final_momentum
        };

        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dx = y[2 * i] - y[2 * j];
                let dy = y[2 * i + 1] - y[2 * j + 1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = q;
                num[j * n + i] = q;
                z += 2.0 * q;
            }
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            let (mut gx, mut gy) = (0.0, 0.0);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = num[i * n + j];
                let m = (exaggerate * p[i * n + j] - q / z) * q;
                gx += m * (y[2 * i] - y[2 * j]);
                gy += m * (y[2 * i + 1] - y[2 * j + 1]);
            }
            grad[2 * i] = 4.0 * gx;
            grad[2 * i + 1] = 4.0 * gy;
        }
        for k in 0..2 * n {
            // delta-bar-delta: grow the step while the direction holds
            gains[k] = if (grad[k] > 0.0) != (update[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(0.01)
            };
            update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * grad[k];
            y[k] += update[k];
        }
        let (mx, my) = (0..n).fold((0.0, 0.0), |(a, b), i| (a + y[2 * i], b + y[2 * i + 1]));
        for i in 0..n {
            y[2 * i] -= mx / n as f64;
            y[2 * i + 1] -= my / n as f64;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("t-SNE diverged at iteration {it}")));
        }

        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dx = y[2 * i] - y[2 * j];
                let dy = y[2 * i + 1] - y[2 * j + 1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = q;
                num[j * n + i] = q;
                z += 2.0 * q;
            }
        }
        kl_trace.push(kl_divergence(&p, &num, z));
    }

    Ok(TsneResult {
        embedding: Tensor::new(vec![n, 2], y)?,
        kl_trace,
        affinities: aff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_few_points_is_domain_error() {
        let x = Tensor::zeros(vec![89, 3]);
        assert!(matches!(
            tsne_project(&x, &TsneConfig::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn rows_normalised_and_perplexity_met() {
        let x = Tensor::from_fn(vec![40, 3], |i| {
            ((i * 37) % 17) as f64 * 0.3 + (i % 5) as f64
        });
        let a = conditional_affinities(&x, 10.0, 1e-4).unwrap();
        for i in 0..40 {
            let s: f64 = a.conditional[i * 40..][..40].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert_eq!(a.conditional[i * 40 + i], 0.0);
            assert!(
                (a.perplexities[i] - 10.0).abs() <= 1e-4,
                "{}",
                a.perplexities[i]
            );
        }
    }
}
