//! Recording-level preprocessing: bandpass, standardize, then cut each trial
//! into its rest and MI windows.

use serde::{Deserialize, Serialize};

use super::{design_butterworth_bandpass, filter_channels, FilterPhase, StandardizerState};
use super::{DEFAULT_EMS_ALPHA, DEFAULT_EMS_EPS};
use crate::data::TrialSet;
use crate::error::{Error, Result};

/// Rest window length, from trial onset.
pub const REST_SECONDS: f64 = 2.0;
/// MI window length, directly after the rest window.
pub const MI_SECONDS: f64 = 4.0;

/// Splits one channel-major trial into its rest `[0, 2fs)` and MI
/// `[2fs, 6fs)` windows.
pub fn segment_trial(trial: &[f64], n_channels: usize, fs: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n_channels == 0 || trial.len() % n_channels != 0 {
        return Err(Error::Dimension(format!(
            "{} samples do not split into {n_channels} channels",
            trial.len()
        )));
    }
    let n = trial.len() / n_channels;
    let n_rest = (REST_SECONDS * fs).round() as usize;
    let n_mi = (MI_SECONDS * fs).round() as usize;
    if n < n_rest + n_mi {
        return Err(Error::Length(format!(
            "trial of {n} samples shorter than {} needed at {fs} Hz",
            n_rest + n_mi
        )));
    }
    let mut rest = Vec::with_capacity(n_channels * n_rest);
    let mut mi = Vec::with_capacity(n_channels * n_mi);
    for ch in trial.chunks_exact(n) {
        rest.extend_from_slice(&ch[..n_rest]);
        mi.extend_from_slice(&ch[n_rest..n_rest + n_mi]);
    }
    Ok((rest, mi))
}

/// Filter and standardizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub filter_order: usize,
    pub f_lo: f64,
    pub f_hi: f64,
    pub phase: FilterPhase,
    pub ems_alpha: f64,
    pub ems_eps: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            filter_order: 4,
            f_lo: 0.5,
            f_hi: 38.0,
            phase: FilterPhase::Causal,
            ems_alpha: DEFAULT_EMS_ALPHA,
            ems_eps: DEFAULT_EMS_EPS,
        }
    }
}

/// Preprocessed trials split into rest and MI windows.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub fs: f64,
    pub n_channels: usize,
    pub rest_len: usize,
    pub mi_len: usize,
    /// `n_trials × n_channels × rest_len`.
    pub rest: Vec<f64>,
    /// `n_trials × n_channels × mi_len`.
    pub mi: Vec<f64>,
    pub labels: Vec<usize>,
    pub subject_ids: Vec<u32>,
    /// `n_trials × mi_len`, MI-window part of the probe masks.
    pub probe_masks: Option<Vec<bool>>,
}

impl Prepared {
    pub fn n_trials(&self) -> usize {
        self.labels.len()
    }

    pub fn rest_trial(&self, i: usize) -> &[f64] {
        let n = self.n_channels * self.rest_len;
        &self.rest[i * n..][..n]
    }

    pub fn mi_trial(&self, i: usize) -> &[f64] {
        let n = self.n_channels * self.mi_len;
        &self.mi[i * n..][..n]
    }

    pub fn mask(&self, i: usize) -> Option<&[bool]> {
        self.probe_masks
            .as_ref()
            .map(|m| &m[i * self.mi_len..][..self.mi_len])
    }

    /// Keeps the trials at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Prepared {
        Prepared {
            fs: self.fs,
            n_channels: self.n_channels,
            rest_len: self.rest_len,
            mi_len: self.mi_len,
            rest: indices
                .iter()
                .flat_map(|&i| self.rest_trial(i).iter().copied())
                .collect(),
            mi: indices
                .iter()
                .flat_map(|&i| self.mi_trial(i).iter().copied())
                .collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            subject_ids: indices.iter().map(|&i| self.subject_ids[i]).collect(),
            probe_masks: self.probe_masks.as_ref().map(|_| {
                indices
                    .iter()
                    .flat_map(|&i| self.mask(i).unwrap().iter().copied())
                    .collect()
            }),
        }
    }

    pub fn input_shape(&self) -> crate::model::InputShape {
        crate::model::InputShape {
            n_channels: self.n_channels,
            fs: self.fs,
            rest_len: self.rest_len,
            mi_len: self.mi_len,
        }
    }

    /// Distinct subject ids in ascending order.
    pub fn subjects(&self) -> Vec<u32> {
        let mut s = self.subject_ids.clone();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Indices of trials whose subject satisfies `keep`.
    pub fn indices_where(&self, keep: impl Fn(u32) -> bool) -> Vec<usize> {
        (0..self.n_trials())
            .filter(|&i| keep(self.subject_ids[i]))
            .collect()
    }
}

impl PreprocessConfig {
    /// Filters and standardizes each subject's trials as one continuous
    /// recording (in trial order), then segments every trial.
    pub fn apply(&self, ts: &TrialSet) -> Result<Prepared> {
        ts.validate()?;
        let filter = design_butterworth_bandpass(self.filter_order, self.f_lo, self.f_hi, ts.fs)?;
        StandardizerState::new(1, self.ems_alpha, self.ems_eps)?;
        let (c, n) = (ts.n_channels, ts.n_samples);
        let n_rest = (REST_SECONDS * ts.fs).round() as usize;
        let n_mi = (MI_SECONDS * ts.fs).round() as usize;
        if n < n_rest + n_mi {
            return Err(Error::Length(format!(
                "trials of {n} samples are too short at {} Hz",
                ts.fs
            )));
        }
        let subjects = ts.subjects();
        let processed: Vec<(Vec<usize>, Vec<f64>)> = subjects
            .iter()
            .map(|&s| {
                let idx: Vec<usize> = (0..ts.n_trials())
                    .filter(|&i| ts.subject_ids[i] == s)
                    .collect();
                let len = idx.len() * n;
                // channel-major continuous recording
                let mut rec = vec![0.0; c * len];
                for (k, &i) in idx.iter().enumerate() {
                    let trial = ts.trial(i);
                    for ch in 0..c {
                        for (d, &v) in rec[ch * len + k * n..][..n]
                            .iter_mut()
                            .zip(&trial[ch * n..][..n])
                        {
                            *d = v as f64;
                        }
                    }
                }
                filter_channels(&filter, &mut rec, len, self.phase);
                let mut ems =
                    StandardizerState::new(c, self.ems_alpha, self.ems_eps).expect("checked above");
                for (ch, row) in rec.chunks_exact_mut(len).enumerate() {
                    ems.process(ch, row);
                }
                (idx, rec)
            })
            .collect();

        let total = ts.n_trials();
        let mut rest = vec![0.0; total * c * n_rest];
        let mut mi = vec![0.0; total * c * n_mi];
        for (idx, rec) in &processed {
            let len = idx.len() * n;
            for (k, &i) in idx.iter().enumerate() {
                for ch in 0..c {
                    let src = &rec[ch * len + k * n..][..n];
                    rest[(i * c + ch) * n_rest..][..n_rest].copy_from_slice(&src[..n_rest]);
                    mi[(i * c + ch) * n_mi..][..n_mi].copy_from_slice(&src[n_rest..n_rest + n_mi]);
                }
            }
        }
        let probe_masks = ts.probe_masks.as_ref().map(|m| {
            (0..total)
                .flat_map(|i| m[i * n + n_rest..][..n_mi].iter().copied())
                .collect()
        });
        Ok(Prepared {
            fs: ts.fs,
            n_channels: c,
            rest_len: n_rest,
            mi_len: n_mi,
            rest,
            mi,
            labels: ts.labels.clone(),
            subject_ids: ts.subject_ids.clone(),
            probe_masks,
        })
    }
}
