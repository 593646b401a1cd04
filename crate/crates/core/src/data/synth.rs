//! Synthetic motor-imagery EEG with known structure.
//!
//! Every channel carries pink background noise plus a common 10 Hz rhythm,
//! mixed per subject through `I + s·G/√C`. During the MI window the channels
//! of the trial's class group lose a fraction `erd_depth` of their mu-band
//! amplitude.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::trialset::{TrialSet, N_CLASSES};
use crate::error::{Error, Result};
use crate::signal::{MI_SECONDS, REST_SECONDS};

/// Generator settings. Defaults mirror a 22-electrode, 250 Hz, nine-subject
/// recording with 72 trials per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub trials_per_class: usize,
    pub n_channels: usize,
    pub fs: f64,
    pub trial_seconds: f64,
    /// Disjoint channel sets, one per class, that show the ERD.
    pub class_groups: Vec<Vec<usize>>,
    pub mu_band: (f64, f64),
    pub rhythm_hz: f64,
    pub rhythm_amplitude: f64,
    pub erd_depth: f64,
    pub noise_level: f64,
    pub mixing_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 9,
            trials_per_class: 72,
            n_channels: 22,
            fs: 250.0,
            trial_seconds: 6.0,
            // 10-20 layout order Fz FC3 FC1 FCz FC2 FC4 C5 C3 C1 Cz C2 C4 C6
            // CP3 CP1 CPz CP2 CP4 P1 Pz P2 POz: left hand over the right
            // hemisphere, right hand over the left, feet at the vertex.
            class_groups: vec![
                vec![5, 10, 11, 17],
                vec![1, 7, 8, 13],
                vec![3, 9, 15],
                vec![6, 12],
            ],
            mu_band: (8.0, 12.0),
            rhythm_hz: 10.0,
            rhythm_amplitude: 1.0,
            erd_depth: 0.5,
            noise_level: 1.0,
            mixing_scale: 0.2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn n_samples(&self) -> usize {
        (self.trial_seconds * self.fs).round() as usize
    }

    pub fn n_rest(&self) -> usize {
        (REST_SECONDS * self.fs).round() as usize
    }

    pub fn n_mi(&self) -> usize {
        (MI_SECONDS * self.fs).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_subjects == 0 || self.trials_per_class == 0 || self.n_channels == 0 {
            return bad("subject, trial and channel counts must be positive".into());
        }
        if !(self.fs > 0.0) {
            return bad(format!("fs {} must be positive", self.fs));
        }
        if self.n_samples() < self.n_rest() + self.n_mi() {
            return bad(format!(
                "trial_seconds {} too short for the rest and MI windows",
                self.trial_seconds
            ));
        }
        if self.class_groups.len() != N_CLASSES {
            return bad(format!(
                "need {N_CLASSES} class groups, got {}",
                self.class_groups.len()
            ));
        }
        let mut used = vec![false; self.n_channels];
        for g in &self.class_groups {
            if g.is_empty() {
                return bad("class groups must be non-empty".into());
            }
            for &c in g {
                if c >= self.n_channels {
                    return bad(format!("channel {c} outside [0, {})", self.n_channels));
                }
                if used[c] {
                    return bad(format!("channel {c} appears in two class groups"));
                }
                used[c] = true;
            }
        }
        if !(0.0..=1.0).contains(&self.erd_depth) {
            return bad(format!("erd_depth {} outside [0, 1]", self.erd_depth));
        }
        let (lo, hi) = self.mu_band;
        if !(lo > 0.0 && lo < hi && hi < self.fs / 2.0) {
            return bad(format!("mu band ({lo}, {hi}) invalid"));
        }
        if self.noise_level < 0.0 || self.mixing_scale < 0.0 || self.rhythm_amplitude < 0.0 {
            return bad("noise, mixing and rhythm scales must be non-negative".into());
        }
        Ok(())
    }
}

const STREAM_MIXING: u64 = 1;
const STREAM_TRIALS: u64 = 2;

/// Independent generator for one (seed, subject, purpose) triple.
pub(crate) fn substream(seed: u64, subject: u32, tag: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, v) in key
        .chunks_exact_mut(8)
        .zip([seed, subject as u64, tag, 0x5eed])
    {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Paul Kellet's refined pink-noise filter: six leaky integrators plus a
/// direct path and a one-sample-delayed path.
const PINK_POLES: [f64; 6] = [0.99886, 0.99332, 0.96900, 0.86650, 0.55000, -0.7616];
const PINK_GAINS: [f64; 6] = [
    0.0555179, 0.0750759, 0.1538520, 0.3104856, 0.5329522, -0.0168980,
];
const PINK_DIRECT: f64 = 0.5362;
const PINK_DELAYED: f64 = 0.115926;

/// Stationary standard deviation of the filter output for unit white input.
fn pink_std() -> f64 {
    let mut var = PINK_DIRECT * PINK_DIRECT + PINK_DELAYED * PINK_DELAYED;
    for i in 0..6 {
        for j in 0..6 {
            var += PINK_GAINS[i] * PINK_GAINS[j] / (1.0 - PINK_POLES[i] * PINK_POLES[j]);
        }
        var +=
            2.0 * PINK_DIRECT * PINK_GAINS[i] + 2.0 * PINK_DELAYED * PINK_POLES[i] * PINK_GAINS[i];
    }
    var.sqrt()
}

/// Unit-variance pink noise of length `n` after a burn-in period.
fn pink_noise(rng: &mut impl Rng, n: usize, burn_in: usize) -> Vec<f64> {
    let scale = 1.0 / pink_std();
    let mut b = [0.0f64; 6];
    let mut delayed = 0.0;
    let mut out = Vec::with_capacity(n);
    for t in 0..burn_in + n {
        let w: f64 = rng.sample(StandardNormal);
        let mut y = delayed + PINK_DIRECT * w;
        for k in 0..6 {
            b[k] = PINK_POLES[k] * b[k] + PINK_GAINS[k] * w;
            y += b[k];
        }
        delayed = PINK_DELAYED * w;
        if t >= burn_in {
            out.push(y * scale);
        }
    }
    out
}

/// Subject mixing matrix `I + s·G/√C`, row-major.
pub(crate) fn mixing_matrix(cfg: &SynthConfig, subject: u32) -> Vec<f64> {
    let c = cfg.n_channels;
    let mut rng = substream(cfg.seed, subject, STREAM_MIXING);
    let scale = cfg.mixing_scale / (c as f64).sqrt();
    let mut m = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..c {
            let g: f64 = rng.sample(StandardNormal);
            m[i * c + j] = scale * g + if i == j { 1.0 } else { 0.0 };
        }
    }
    m
}

/// Mixed background (noise plus rhythm) for one trial, channel-major.
pub(crate) fn background(cfg: &SynthConfig, mixing: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let (c, n) = (cfg.n_channels, cfg.n_samples());
    let burn_in = (4.0 * cfg.fs).round() as usize;
    let phase = rng.random::<f64>() * 2.0 * PI;
    let rhythm: Vec<f64> = (0..n)
        .map(|t| {
            cfg.rhythm_amplitude * (2.0 * PI * cfg.rhythm_hz * t as f64 / cfg.fs + phase).sin()
        })
        .collect();
    let mut sources = Vec::with_capacity(c * n);
    for _ in 0..c {
        let noise = pink_noise(rng, n, burn_in);
        sources.extend(
            noise
                .iter()
                .zip(&rhythm)
                .map(|(w, r)| cfg.noise_level * w + r),
        );
    }
    let mut out = vec![0.0; c * n];
    for i in 0..c {
        let dst = &mut out[i * n..][..n];
        for j in 0..c {
            let w = mixing[i * c + j];
            if w != 0.0 {
                crate::tensor::axpy_slice(dst, w, &sources[j * n..][..n]);
            }
        }
    }
    out
}

/// Band-limited part of `x` within `band` Hz via an FFT mask.
fn band_component(
    fft: &(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>),
    x: &[f64],
    fs: f64,
    band: (f64, f64),
) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.0.process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        let f = bin as f64 * fs / n as f64;
        if !(f >= band.0 && f <= band.1) {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    fft.1.process(&mut buf);
    buf.iter().map(|v| v.re / n as f64).collect()
}

/// Generates the full synthetic dataset. Subject ids run from 1.
pub fn synth_generate(cfg: &SynthConfig) -> Result<TrialSet> {
    cfg.validate()?;
    let (c, n) = (cfg.n_channels, cfg.n_samples());
    let n_rest = cfg.n_rest();
    let mut planner = FftPlanner::new();
    let fft = (planner.plan_fft_forward(n), planner.plan_fft_inverse(n));
    let per_subject: Vec<(Vec<f32>, Vec<usize>)> = (1..=cfg.n_subjects as u32)
        .into_iter()
        .map(|subject| {
            let mixing = mixing_matrix(cfg, subject);
            let mut rng = substream(cfg.seed, subject, STREAM_TRIALS);
            let mut labels: Vec<usize> = (0..N_CLASSES)
                .flat_map(|k| vec![k; cfg.trials_per_class])
                .collect();
            labels.shuffle(&mut rng);
            let mut data = Vec::with_capacity(labels.len() * c * n);
            for &label in &labels {
                let mut x = background(cfg, &mixing, &mut rng);
                if cfg.erd_depth > 0.0 {
                    for &ch in &cfg.class_groups[label] {
                        let row = &mut x[ch * n..][..n];
                        let mu = band_component(&fft, row, cfg.fs, cfg.mu_band);
                        for t in n_rest..n {
                            row[t] -= cfg.erd_depth * mu[t];
                        }
                    }
                }
                data.extend(x.iter().map(|&v| v as f32));
            }
            (data, labels)
        })
        .collect();
    let mut ts = TrialSet {
        fs: cfg.fs,
        n_channels: c,
        n_samples: n,
        data: Vec::new(),
        labels: Vec::new(),
        subject_ids: Vec::new(),
        probe_masks: None,
    };
    for (subject, (data, labels)) in (1u32..).zip(per_subject) {
        ts.subject_ids
            .extend(std::iter::repeat_n(subject, labels.len()));
        ts.data.extend(data);
        ts.labels.extend(labels);
    }
    Ok(ts)
}

/// Replaces a random `probe_seconds` window inside each trial's MI segment
/// with freshly generated rest-statistics signal and records it in the
/// probe masks. `cfg` supplies the subject mixing and signal statistics.
pub fn splice_rest_probe(
    ts: &TrialSet,
    cfg: &SynthConfig,
    probe_seconds: f64,
    rng: &mut impl Rng,
) -> Result<TrialSet> {
    if !(0.0..MI_SECONDS).contains(&probe_seconds) {
        return Err(Error::Domain(format!(
            "probe length {probe_seconds} s must lie in [0, {MI_SECONDS})"
        )));
    }
    if ts.n_channels != cfg.n_channels || ts.n_samples != cfg.n_samples() || ts.fs != cfg.fs {
        return Err(Error::Dimension(
            "trial geometry does not match the synthetic config".into(),
        ));
    }
    let n = ts.n_samples;
    let (n_rest, n_mi) = (cfg.n_rest(), cfg.n_mi());
    let len = (probe_seconds * ts.fs).round() as usize;
    let mut out = ts.clone();
    let mut masks = vec![false; ts.n_trials() * n];
    if len > 0 {
        let mut cache: Vec<(u32, Vec<f64>)> = Vec::new();
        for i in 0..ts.n_trials() {
            let subject = ts.subject_ids[i];
            if !cache.iter().any(|(s, _)| *s == subject) {
                cache.push((subject, mixing_matrix(cfg, subject)));
            }
            let mixing = &cache.iter().find(|(s, _)| *s == subject).unwrap().1;
            let fresh = background(cfg, mixing, rng);
            let start = n_rest + rng.random_range(0..=n_mi - len);
            let trial = out.trial_mut(i);
            for ch in 0..ts.n_channels {
                for t in start..start + len {
                    trial[ch * n + t] = fresh[ch * n + t] as f32;
                }
            }
            masks[i * n + start..][..len]
                .iter_mut()
                .for_each(|m| *m = true);
        }
    }
    out.probe_masks = Some(masks);
    Ok(out)
}
