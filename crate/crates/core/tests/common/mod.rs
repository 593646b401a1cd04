#![allow(dead_code)]

use migate::model::InputShape;
use migate::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform entries in [-1, 1).
pub fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Small geometry that still runs every stage of the gate and classifier.
pub fn tiny_input() -> InputShape {
    InputShape {
        n_channels: 3,
        fs: 64.0,
        rest_len: 40,
        mi_len: 120,
    }
}

/// Mean silhouette with Euclidean distances; written from the definition.
pub fn silhouette(points: &[[f64; 2]], labels: &[usize]) -> f64 {
    let n = points.len();
    let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let k = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if i != j {
                sums[labels[j]] += dist(points[i], points[j]);
                counts[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

/// Separable toy data at [`tiny_input`] geometry: class `k < 3` adds a
/// strong 8 Hz oscillation on channel `k`, class 3 adds none.
pub fn toy_prepared(n_subjects: u32, per_class: usize, seed: u64) -> migate::signal::Prepared {
    let input = tiny_input();
    let (c, rl, ml) = (input.n_channels, input.rest_len, input.mi_len);
    let mut r = rng(seed);
    let (mut rest, mut mi, mut labels, mut subject_ids) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for s in 1..=n_subjects {
        for k in 0..4 {
            for _ in 0..per_class {
                let phase = r.random_range(0.0..6.3);
                for _ in 0..c * rl {
                    rest.push(r.random_range(-0.5..0.5));
                }
                for ch in 0..c {
                    for t in 0..ml {
                        let tone = if ch == k {
                            2.0 * (2.0 * std::f64::consts::PI * 8.0 * t as f64 / input.fs + phase)
                                .sin()
                        } else {
                            0.0
                        };
                        mi.push(r.random_range(-0.5..0.5) + tone);
                    }
                }
                labels.push(k);
                subject_ids.push(s);
            }
        }
    }
    migate::signal::Prepared {
        fs: input.fs,
        n_channels: c,
        rest_len: rl,
        mi_len: ml,
        rest,
        mi,
        labels,
        subject_ids,
        probe_masks: None,
    }
}
