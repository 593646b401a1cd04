use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatErrorKind, Result};
use crate::fsio::write_atomic;

/// Magic bytes opening every trial container.
pub const TRIALSET_MAGIC: &[u8; 8] = b"EEGTRLS1";

/// Number of motor-imagery classes (left hand, right hand, feet, tongue).
pub const N_CLASSES: usize = 4;

/// Labelled multi-channel trials, trial-major then channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialSet {
    pub fs: f64,
    pub n_channels: usize,
    pub n_samples: usize,
    /// `n_trials × n_channels × n_samples`.
    pub data: Vec<f32>,
    pub labels: Vec<usize>,
    pub subject_ids: Vec<u32>,
    /// `n_trials × n_samples`; true where a sample was spliced in.
    pub probe_masks: Option<Vec<bool>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    fs: f64,
    n_trials: usize,
    n_channels: usize,
    n_samples: usize,
    labels: Vec<usize>,
    subject_ids: Vec<u32>,
    has_probe_masks: bool,
}

impl TrialSet {
    pub fn n_trials(&self) -> usize {
        self.labels.len()
    }

    pub fn trial_len(&self) -> usize {
        self.n_channels * self.n_samples
    }

    pub fn trial(&self, i: usize) -> &[f32] {
        let n = self.trial_len();
        &self.data[i * n..][..n]
    }

    pub fn trial_mut(&mut self, i: usize) -> &mut [f32] {
        let n = self.trial_len();
        &mut self.data[i * n..][..n]
    }

    pub fn mask(&self, i: usize) -> Option<&[bool]> {
        self.probe_masks
            .as_ref()
            .map(|m| &m[i * self.n_samples..][..self.n_samples])
    }

    /// Distinct subject ids in ascending order.
    pub fn subjects(&self) -> Vec<u32> {
        let mut s = self.subject_ids.clone();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_trials();
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(Error::Domain(format!(
                "sampling rate {} must be positive",
                self.fs
            )));
        }
        if self.n_channels == 0 || self.n_samples == 0 {
            return Err(Error::Dimension(
                "trials need at least one channel and one sample".into(),
            ));
        }
        if self.subject_ids.len() != n || self.data.len() != n * self.trial_len() {
            return Err(Error::Dimension(format!(
                "{} labels, {} subject ids and {} values do not describe {n} trials of {}x{}",
                n,
                self.subject_ids.len(),
                self.data.len(),
                self.n_channels,
                self.n_samples
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= N_CLASSES) {
            return Err(Error::Domain(format!(
                "label {bad} outside [0, {N_CLASSES})"
            )));
        }
        if let Some(m) = &self.probe_masks {
            if m.len() != n * self.n_samples {
                return Err(Error::Dimension(
                    "probe mask length does not match trials".into(),
                ));
            }
        }
        Ok(())
    }

    /// Keeps the trials at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> TrialSet {
        let mut data = Vec::with_capacity(indices.len() * self.trial_len());
        for &i in indices {
            data.extend_from_slice(self.trial(i));
        }
        TrialSet {
            fs: self.fs,
            n_channels: self.n_channels,
            n_samples: self.n_samples,
            data,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            subject_ids: indices.iter().map(|&i| self.subject_ids[i]).collect(),
            probe_masks: self.probe_masks.as_ref().map(|m| {
                indices
                    .iter()
                    .flat_map(|&i| m[i * self.n_samples..][..self.n_samples].iter().copied())
                    .collect()
            }),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let header = Header {
            fs: self.fs,
            n_trials: self.n_trials(),
            n_channels: self.n_channels,
            n_samples: self.n_samples,
            labels: self.labels.clone(),
            subject_ids: self.subject_ids.clone(),
            has_probe_masks: self.probe_masks.is_some(),
        };
        let header = serde_json::to_vec(&header)
            .map_err(|e| Error::format(FormatErrorKind::Header, e.to_string()))?;
        let mut out = Vec::with_capacity(12 + header.len() + 4 * self.data.len());
        out.extend_from_slice(TRIALSET_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(m) = &self.probe_masks {
            out.extend(pack_bits(m));
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TrialSet> {
        if bytes.len() < 8 || &bytes[..8] != TRIALSET_MAGIC {
            return Err(Error::format(
                FormatErrorKind::BadMagic,
                "not a trial container",
            ));
        }
        if bytes.len() < 12 {
            return Err(Error::format(
                FormatErrorKind::Truncated,
                "missing header length",
            ));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let rest = &bytes[12..];
        if rest.len() < hlen {
            return Err(Error::format(
                FormatErrorKind::Truncated,
                "header cut short",
            ));
        }
        let header: Header = serde_json::from_slice(&rest[..hlen])
            .map_err(|e| Error::format(FormatErrorKind::Header, e.to_string()))?;
        let payload = &rest[hlen..];
        if header.labels.len() != header.n_trials || header.subject_ids.len() != header.n_trials {
            return Err(Error::format(
                FormatErrorKind::SizeMismatch,
                "label or subject count disagrees with n_trials",
            ));
        }
        let n_values = header
            .n_trials
            .checked_mul(header.n_channels)
            .and_then(|v| v.checked_mul(header.n_samples))
            .ok_or_else(|| {
                Error::format(FormatErrorKind::SizeMismatch, "declared size overflows")
            })?;
        let mask_bits = header.n_trials * header.n_samples;
        let mask_bytes = if header.has_probe_masks {
            mask_bits.div_ceil(8)
        } else {
            0
        };
        let expected = 4 * n_values + mask_bytes;
        if payload.len() < expected {
            return Err(Error::format(
                FormatErrorKind::Truncated,
                format!(
                    "payload has {} bytes, header declares {expected}",
                    payload.len()
                ),
            ));
        }
        if payload.len() > expected {
            return Err(Error::format(
                FormatErrorKind::SizeMismatch,
                format!(
                    "payload has {} bytes, header declares {expected}",
                    payload.len()
                ),
            ));
        }
        let data = payload[..4 * n_values]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let probe_masks = header
            .has_probe_masks
            .then(|| unpack_bits(&payload[4 * n_values..], mask_bits));
        let ts = TrialSet {
            fs: header.fs,
            n_channels: header.n_channels,
            n_samples: header.n_samples,
            data,
            labels: header.labels,
            subject_ids: header.subject_ids,
            probe_masks,
        };
        ts.validate()
            .map_err(|e| Error::format(FormatErrorKind::SizeMismatch, e.to_string()))?;
        Ok(ts)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<TrialSet> {
        TrialSet::from_bytes(&std::fs::read(path)?)
    }
}

/// LSB-first bit packing.
fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

fn unpack_bits(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrialSet {
        TrialSet {
            fs: 10.0,
            n_channels: 2,
            n_samples: 5,
            data: (0..30).map(|i| i as f32 * 0.5 - 3.0).collect(),
            labels: vec![0, 3, 1],
            subject_ids: vec![1, 1, 2],
            probe_masks: Some((0..15).map(|i| i % 3 == 0).collect()),
        }
    }

    #[test]
    fn bytes_round_trip() {
        let ts = tiny();
        let back = TrialSet::from_bytes(&ts.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ts);
    }

    #[test]
    fn bit_packing_is_lsb_first() {
        assert_eq!(
            pack_bits(&[true, false, false, false, false, false, false, false, true]),
            vec![1, 1]
        );
        assert_eq!(unpack_bits(&[0b101], 3), vec![true, false, true]);
    }

    #[test]
    fn format_errors_are_distinct() {
        let bytes = tiny().to_bytes().unwrap();
        let kind = |b: &[u8]| match TrialSet::from_bytes(b) {
            Err(Error::Format { kind, .. }) => kind,
            other => panic!("expected a format error, got {other:?}"),
        };
        let mut bad = bytes.clone();
        bad[0] ^= 0xff;
        assert_eq!(kind(&bad), FormatErrorKind::BadMagic);
        assert_eq!(kind(&bytes[..bytes.len() - 1]), FormatErrorKind::Truncated);
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(kind(&long), FormatErrorKind::SizeMismatch);
        assert_eq!(kind(&bytes[..20]), FormatErrorKind::Truncated);
    }

    #[test]
    fn select_keeps_order_and_masks() {
        let ts = tiny();
        let s = ts.select(&[2, 0]);
        assert_eq!(s.labels, vec![1, 0]);
        assert_eq!(s.trial(0), ts.trial(2));
        assert_eq!(s.mask(1), ts.mask(0));
    }
}
