use serde::{Deserialize, Serialize};

use super::fit::batch_tensors;
use crate::error::{Error, Result};
use crate::model::IntegratedModel;
use crate::signal::Prepared;

/// Per-trial comparison of the trained gate over spliced rest probes
/// against the genuine MI samples of the same trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub masked_mean: Vec<f64>,
    pub unmasked_mean: Vec<f64>,
    /// Share of trials whose probe mean is strictly below the MI mean.
    pub fraction_lower: f64,
}

/// Evaluates the eval-mode gate on every trial carrying a non-trivial probe
/// mask. Trials whose mask is all false or all true are skipped.
pub fn probe_attenuation(
    model: &mut IntegratedModel,
    data: &Prepared,
    batch_size: usize,
) -> Result<ProbeReport> {
    if !model.use_gate {
        return Err(Error::Contract(
            "probe attenuation needs a model with a gate".into(),
        ));
    }
    if data.probe_masks.is_none() {
        return Err(Error::Domain("dataset carries no probe masks".into()));
    }
    let usable: Vec<usize> = (0..data.n_trials())
        .filter(|&i| {
            let m = data.mask(i).unwrap();
            m.iter().any(|&v| v) && !m.iter().all(|&v| v)
        })
        .collect();
    if usable.is_empty() {
        return Err(Error::Domain("no trial has a partial probe mask".into()));
    }
    let mut masked_mean = Vec::with_capacity(usable.len());
    let mut unmasked_mean = Vec::with_capacity(usable.len());
    for chunk in usable.chunks(batch_size.max(1)) {
        let (rest, mi) = batch_tensors(data, chunk)?;
        let out = model.gate_output(&rest, &mi)?.expect("gate present");
        let t = data.mi_len;
        for (row, &i) in out.upsampled_gate.data().chunks_exact(t).zip(chunk) {
            let mask = data.mask(i).unwrap();
            let (mut s_in, mut n_in, mut s_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
            for (&g, &m) in row.iter().zip(mask) {
                if m {
                    s_in += g;
                    n_in += 1;
                } else {
                    s_out += g;
                    n_out += 1;
                }
            }
            masked_mean.push(s_in / n_in as f64);
            unmasked_mean.push(s_out / n_out as f64);
        }
    }
    let lower = masked_mean
        .iter()
        .zip(&unmasked_mean)
        .filter(|(a, b)| a < b)
        .count();
    Ok(ProbeReport {
        fraction_lower: lower as f64 / masked_mean.len() as f64,
        masked_mean,
        unmasked_mean,
    })
}
