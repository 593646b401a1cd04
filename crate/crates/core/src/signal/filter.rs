//! Applying a [`BiquadCascade`] to sampled signals.

use serde::{Deserialize, Serialize};

use super::butterworth::BiquadCascade;

/// Causal (online-capable) or forward-backward zero-phase filtering.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterPhase {
    #[default]
    Causal,
    ZeroPhase,
}

/// Causal direct-form-II-transposed cascade with zero initial conditions.
pub fn apply_filter(f: &BiquadCascade, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    filter_in_place(f, &mut y);
    y
}

/// In-place variant of [`apply_filter`].
pub fn filter_in_place(f: &BiquadCascade, x: &mut [f64]) {
    for s in &f.sections {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let out = s.b0 * input + z1;
            z1 = s.b1 * input - s.a1 * out + z2;
            z2 = s.b2 * input - s.a2 * out;
            *v = out;
        }
    }
}

/// Filters each channel of a channel-major buffer (`n_samples` per channel).
pub fn filter_channels(f: &BiquadCascade, data: &mut [f64], n_samples: usize, phase: FilterPhase) {
    for ch in data.chunks_exact_mut(n_samples) {
        filter_in_place(f, ch);
        if phase == FilterPhase::ZeroPhase {
            ch.reverse();
            filter_in_place(f, ch);
            ch.reverse();
        }
    }
}
