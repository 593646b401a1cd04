use serde::{Deserialize, Serialize};

/// Per-subject accuracies with their mean and population standard
/// deviation, both in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub subjects: Vec<u32>,
    /// Fractions in `[0, 1]`, aligned with `subjects`.
    pub per_subject_accuracy: Vec<f64>,
    pub avg: f64,
    pub std: f64,
}

impl Metrics {
    pub fn new(subjects: Vec<u32>, per_subject_accuracy: Vec<f64>) -> Self {
        let (avg, std) = mean_and_population_std(&per_subject_accuracy);
        Metrics {
            subjects,
            per_subject_accuracy,
            avg: 100.0 * avg,
            std: 100.0 * std,
        }
    }

    pub fn from_accuracies(acc: &[f64]) -> Self {
        Metrics::new((1..=acc.len() as u32).collect(), acc.to_vec())
    }
}

pub fn mean_and_population_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_style_arithmetic() {
        let m = Metrics::from_accuracies(&[0.6, 0.7, 0.8]);
        assert!((m.avg - 70.0).abs() < 1e-9);
        assert!((m.std - 8.164966).abs() < 1e-6);
    }
}
