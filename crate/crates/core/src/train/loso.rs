use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{evaluate, fit, FitReport, TrainConfig};
use super::metrics::Metrics;
use crate::error::{Error, Result};
use crate::model::{IntegratedModel, ModelConfig};
use crate::signal::Prepared;

/// Leave-one-subject-out settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LosoConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
    /// Which variants to run; both by default.
    pub with_gate: bool,
    pub without_gate: bool,
    /// Folds trained concurrently.
    pub jobs: usize,
}

impl Default for LosoConfig {
    fn default() -> Self {
        LosoConfig {
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            with_gate: true,
            without_gate: true,
            jobs: 1,
        }
    }
}

/// One trained fold.
#[derive(Clone, Debug)]
pub struct FoldResult {
    pub holdout: u32,
    pub use_gate: bool,
    pub accuracy: f64,
    pub fit: FitReport,
    pub model: IntegratedModel,
}

/// Trains on every subject except `holdout` and tests on `holdout`.
pub fn run_fold(
    data: &Prepared,
    holdout: u32,
    use_gate: bool,
    model_cfg: &ModelConfig,
    train: &TrainConfig,
) -> Result<FoldResult> {
    let train_set = data.select(&data.indices_where(|s| s != holdout));
    let test_set = data.select(&data.indices_where(|s| s == holdout));
    if train_set.n_trials() == 0 || test_set.n_trials() == 0 {
        return Err(Error::Domain(format!(
            "subject {holdout} leaves an empty train or test split"
        )));
    }
    let mut model =
        IntegratedModel::new(model_cfg.clone(), data.input_shape(), use_gate, train.seed)?;
    let fit = fit(&mut model, &train_set, train)?;
    if fit.subjects_seen.contains(&holdout) {
        return Err(Error::Contract(format!(
            "held-out subject {holdout} reached a training batch"
        )));
    }
    let accuracy = evaluate(&mut model, &test_set)?;
    Ok(FoldResult {
        holdout,
        use_gate,
        accuracy,
        fit,
        model,
    })
}

/// All folds for the requested variants, ordered by variant (without gate
/// first) and then by subject.
pub fn loso_folds(data: &Prepared, cfg: &LosoConfig) -> Result<Vec<FoldResult>> {
    let subjects = data.subjects();
    if subjects.len() < 2 {
        return Err(Error::Domain(format!(
            "leave-one-subject-out needs at least 2 subjects, got {}",
            subjects.len()
        )));
    }
    cfg.train.validate()?;
    let mut jobs_list = Vec::new();
    for (enabled, use_gate) in [(cfg.without_gate, false), (cfg.with_gate, true)] {
        if enabled {
            jobs_list.extend(subjects.iter().map(|&s| (s, use_gate)));
        }
    }
    if jobs_list.is_empty() {
        return Err(Error::Config("neither variant selected".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        jobs_list
            .par_iter()
            .map(|&(s, g)| run_fold(data, s, g, &cfg.model, &cfg.train))
            .collect()
    })
}

/// Table-style summary: one row per variant plus their difference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LosoReport {
    pub subjects: Vec<u32>,
    pub without_gate: Option<Metrics>,
    pub with_gate: Option<Metrics>,
    /// `with_gate − without_gate`, per subject and for avg/std, in percent.
    pub diff: Option<DiffRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffRow {
    pub per_subject: Vec<f64>,
    pub avg: f64,
    pub std: f64,
}

impl LosoReport {
    pub fn from_folds(folds: &[FoldResult]) -> LosoReport {
        let mut subjects: Vec<u32> = folds.iter().map(|f| f.holdout).collect();
        subjects.sort_unstable();
        subjects.dedup();
        let row = |g: bool| -> Option<Metrics> {
            let acc: Vec<f64> = subjects
                .iter()
                .filter_map(|s| folds.iter().find(|f| f.holdout == *s && f.use_gate == g))
                .map(|f| f.accuracy)
                .collect();
            (acc.len() == subjects.len()).then(|| Metrics::new(subjects.clone(), acc))
        };
        let (without_gate, with_gate) = (row(false), row(true));
        let diff = match (&without_gate, &with_gate) {
            (Some(a), Some(b)) => Some(DiffRow {
                per_subject: a
                    .per_subject_accuracy
                    .iter()
                    .zip(&b.per_subject_accuracy)
                    .map(|(x, y)| 100.0 * (y - x))
                    .collect(),
                avg: b.avg - a.avg,
                std: b.std - a.std,
            }),
            _ => None,
        };
        LosoReport {
            subjects,
            without_gate,
            with_gate,
            diff,
        }
    }

    /// Structured text report: one `[[subject]]` table per held-out subject,
    /// then a `[summary]` with one row per variant.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.subjects.iter().enumerate() {
            out.push_str("[[subject]]\n");
            out.push_str(&format!("id = {s}\n"));
            if let Some(m) = &self.without_gate {
                out.push_str(&format!(
                    "without_gate = {}\n",
                    fmt_pct(100.0 * m.per_subject_accuracy[i])
                ));
            }
            if let Some(m) = &self.with_gate {
                out.push_str(&format!(
                    "with_gate = {}\n",
                    fmt_pct(100.0 * m.per_subject_accuracy[i])
                ));
            }
            if let Some(d) = &self.diff {
                out.push_str(&format!("diff = {}\n", fmt_pct(d.per_subject[i])));
            }
            out.push('\n');
        }
        for (name, m) in [
            ("without_gate", &self.without_gate),
            ("with_gate", &self.with_gate),
        ] {
            if let Some(m) = m {
                out.push_str(&format!(
                    "[summary.{name}]\navg = {}\nstd = {}\n\n",
                    fmt_pct(m.avg),
                    fmt_pct(m.std)
                ));
            }
        }
        if let Some(d) = &self.diff {
            out.push_str(&format!(
                "[summary.diff]\navg = {}\nstd = {}\n",
                fmt_pct(d.avg),
                fmt_pct(d.std)
            ));
        }
        out
    }
}

/// Percentages with four decimals, always a valid TOML float.
fn fmt_pct(v: f64) -> String {
    format!("{v:.4}")
}

/// Runs the folds and summarises them.
pub fn loso_evaluate(data: &Prepared, cfg: &LosoConfig) -> Result<LosoReport> {
    Ok(LosoReport::from_folds(&loso_folds(data, cfg)?))
}
