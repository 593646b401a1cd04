//! Optimiser, schedule, metrics, training loop and the LOSO harness.

mod common;

use common::{rng, tiny_input, toy_prepared};
use migate::model::{IntegratedModel, ModelConfig, ModelMeta};
use migate::train::{
    accuracy, argmax_rows, cosine_lr, evaluate, fit, loso_evaluate, loso_folds,
    mean_and_population_std, run_fold, AdamW, AdamWConfig, LosoConfig, LosoReport, Metrics,
    TrainConfig,
};
use migate::{Error, Tensor};
use rand::Rng;

#[test]
pub fn adamw_single_step_closed_form() {
    let (lr, wd, b1, b2, eps) = (0.002, 0.075, 0.9, 0.999, 1e-8);
    // t = 1: m̂ = g, v̂ = g²
    let (theta, g) = (1.0f64, 1.0f64);
    let m_hat = (1.0 - b1) * g / (1.0 - b1);
    let v_hat = (1.0 - b2) * g * g / (1.0 - b2);
    let expect = theta - lr * m_hat / (v_hat.sqrt() + eps) - lr * wd * theta;
    assert!((expect - 0.997850).abs() < 1e-5);

    let mut p = Tensor::from_vec(vec![theta]);
    let grad = Tensor::from_vec(vec![g]);
    let mut opt = AdamW::new(AdamWConfig::default());
    opt.step(&mut [&mut p], &[Some(&grad)], lr).unwrap();
    assert!((p.data()[0] - 0.997850).abs() < 1e-5);
    assert!((p.data()[0] - expect).abs() < 1e-15);
}

#[test]
pub fn zero_gradient_without_decay_keeps_parameter() {
    let mut p = Tensor::from_vec(vec![0.7, -3.0]);
    let g = Tensor::zeros(vec![2]);
    let mut opt = AdamW::new(AdamWConfig {
        weight_decay: 0.0,
        ..AdamWConfig::default()
    });
    opt.step(&mut [&mut p], &[Some(&g)], 0.002).unwrap();
    assert_eq!(p.data(), &[0.7, -3.0]);
}

/// Plain Adam written from the textbook update.
struct RefAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl RefAdam {
    fn step(&mut self, x: &mut [f64], g: &[f64], lr: f64) {
        self.t += 1;
        for i in 0..x.len() {
            self.m[i] = 0.9 * self.m[i] + 0.1 * g[i];
            self.v[i] = 0.999 * self.v[i] + 0.001 * g[i] * g[i];
            let mh = self.m[i] / (1.0 - 0.9f64.powi(self.t));
            let vh = self.v[i] / (1.0 - 0.999f64.powi(self.t));
            x[i] -= lr * mh / (vh.sqrt() + 1e-8);
        }
    }
}

#[test]
pub fn adamw_without_decay_matches_reference_adam() {
    let mut r = rng(77);
    let n = 10;
    let mut p = Tensor::from_fn(vec![n], |_| r.random_range(-1.0..1.0));
    let mut x = p.data().to_vec();
    let mut opt = AdamW::new(AdamWConfig {
        weight_decay: 0.0,
        ..AdamWConfig::default()
    });
    let mut reference = RefAdam {
        m: vec![0.0; n],
        v: vec![0.0; n],
        t: 0,
    };
    for step in 0..100 {
        let g = Tensor::from_fn(vec![n], |_| r.random_range(-2.0..2.0));
        let lr = cosine_lr(step, 100, 0.002, 0.0);
        opt.step(&mut [&mut p], &[Some(&g)], lr).unwrap();
        reference.step(&mut x, g.data(), lr);
    }
    for (a, b) in p.data().iter().zip(&x) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
pub fn adamw_rejects_shape_mismatch() {
    let mut p = Tensor::zeros(vec![3]);
    let g = Tensor::zeros(vec![4]);
    let mut opt = AdamW::new(AdamWConfig::default());
    assert!(matches!(
        opt.step(&mut [&mut p], &[Some(&g)], 0.1),
        Err(Error::Dimension(_))
    ));
}

#[test]
pub fn cosine_schedule_endpoints_and_monotone() {
    assert_eq!(cosine_lr(0, 300, 0.002, 0.0), 0.002);
    assert_eq!(cosine_lr(300, 300, 0.002, 0.0), 0.0);
    assert!((cosine_lr(150, 300, 0.002, 0.0) - 0.001).abs() < 1e-18);
    assert_eq!(cosine_lr(301, 300, 0.002, 0.0), 0.0);
    let cfg = TrainConfig::default();
    let seq: Vec<f64> = (0..=300).map(|e| cfg.lr_at(e)).collect();
    assert!(seq.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(seq[0], 0.002);
    assert_eq!(seq[300], 0.0);
}

#[test]
pub fn metrics_hand_case() {
    let m = Metrics::from_accuracies(&[0.6, 0.7, 0.8]);
    assert!((m.avg - 70.0).abs() < 1e-6);
    assert!((m.std - 8.1650).abs() < 1e-4);
    let exact = 100.0 * (0.02f64 / 3.0).sqrt();
    assert!((m.std - exact).abs() < 1e-9);
    let (avg, std) = mean_and_population_std(&m.per_subject_accuracy);
    assert!((100.0 * avg - m.avg).abs() < 1e-9 && (100.0 * std - m.std).abs() < 1e-9);
}

#[test]
pub fn argmax_ties_and_constant_predictor() {
    let logits = Tensor::new(vec![2, 4], vec![1.0, 3.0, 3.0, 0.0, 2.0, 2.0, 2.0, 2.0]).unwrap();
    assert_eq!(argmax_rows(&logits), vec![1, 0]);
    assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]), 1.0);
    let mut r = rng(1);
    let labels: Vec<usize> = (0..1000).map(|_| r.random_range(0..4)).collect();
    let acc = accuracy(&vec![0; 1000], &labels);
    assert!((acc - 0.25).abs() < 0.05, "{acc}");
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        lr: 0.01,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
pub fn separable_toy_set_is_learned() {
    let data = toy_prepared(1, 16, 4);
    let mut m = IntegratedModel::new(ModelConfig::default(), tiny_input(), false, 3).unwrap();
    let report = fit(&mut m, &data, &quick(50)).unwrap();
    assert_eq!(report.loss_history.len(), 50);
    assert!(evaluate(&mut m, &data).unwrap() >= 0.99);
}

#[test]
pub fn zero_epochs_leave_parameters_and_same_seed_is_bit_identical() {
    let data = toy_prepared(2, 4, 9);
    let fresh = IntegratedModel::new(ModelConfig::default(), tiny_input(), true, 3).unwrap();
    let mut m = fresh.clone();
    fit(&mut m, &data, &quick(0)).unwrap();
    assert_eq!(m, fresh);

    let run = || {
        let mut m = fresh.clone();
        fit(&mut m, &data, &quick(3)).unwrap();
        m.to_bytes(&ModelMeta::default()).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
pub fn empty_dataset_is_domain_error() {
    let data = toy_prepared(1, 1, 0).select(&[]);
    let mut m = IntegratedModel::new(ModelConfig::default(), tiny_input(), false, 0).unwrap();
    assert!(matches!(
        fit(&mut m, &data, &quick(1)),
        Err(Error::Domain(_))
    ));
}

fn loso_cfg(epochs: usize, with_gate: bool) -> LosoConfig {
    LosoConfig {
        train: quick(epochs),
        with_gate,
        without_gate: true,
        ..LosoConfig::default()
    }
}

#[test]
pub fn single_subject_is_domain_error() {
    let data = toy_prepared(1, 2, 0);
    assert!(matches!(
        loso_evaluate(&data, &loso_cfg(1, false)),
        Err(Error::Domain(_))
    ));
}

#[test]
pub fn two_easy_subjects_are_both_solved() {
    let data = toy_prepared(2, 12, 5);
    let report = loso_evaluate(&data, &loso_cfg(40, false)).unwrap();
    let m = report.without_gate.unwrap();
    assert_eq!(m.per_subject_accuracy.len(), 2);
    assert!(
        m.per_subject_accuracy.iter().all(|&a| a >= 0.95),
        "{:?}",
        m.per_subject_accuracy
    );
}

#[test]
pub fn nine_subjects_nine_folds_and_provenance() {
    let data = toy_prepared(9, 2, 6);
    let folds = loso_folds(
        &data,
        &LosoConfig {
            jobs: 2,
            ..loso_cfg(1, true)
        },
    )
    .unwrap();
    assert_eq!(folds.len(), 18);
    for f in &folds {
        assert!(!f.fit.subjects_seen.contains(&f.holdout));
        assert_eq!(f.fit.subjects_seen.len(), 8);
    }
    let report = LosoReport::from_folds(&folds);
    assert_eq!(report.subjects, (1..=9).collect::<Vec<u32>>());
    let (a, b, d) = (
        report.without_gate.unwrap(),
        report.with_gate.unwrap(),
        report.diff.unwrap(),
    );
    for i in 0..9 {
        assert!(
            (d.per_subject[i] - 100.0 * (b.per_subject_accuracy[i] - a.per_subject_accuracy[i]))
                .abs()
                < 1e-12
        );
    }
    assert!((d.avg - (b.avg - a.avg)).abs() < 1e-12);
}

#[test]
pub fn report_is_valid_toml_with_table_rows() {
    let data = toy_prepared(3, 2, 7);
    let report = loso_evaluate(&data, &loso_cfg(1, true)).unwrap();
    let doc: toml::Table = report.to_toml().parse().unwrap();
    assert_eq!(doc["subject"].as_array().unwrap().len(), 3);
    let s = doc["summary"].as_table().unwrap();
    for k in ["without_gate", "with_gate", "diff"] {
        assert!(s[k]["avg"].is_float() && s[k]["std"].is_float());
    }
}

#[test]
pub fn fold_results_do_not_depend_on_subject_labels() {
    let data = toy_prepared(3, 3, 8);
    let cfg = loso_cfg(2, false);
    let base = loso_evaluate(&data, &cfg).unwrap().without_gate.unwrap();
    // relabel subjects 1,2,3 as 3,2,1
    let mut permuted = data.clone();
    permuted.subject_ids.iter_mut().for_each(|s| *s = 4 - *s);
    let other = loso_evaluate(&permuted, &cfg)
        .unwrap()
        .without_gate
        .unwrap();
    let sort = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    assert_eq!(
        sort(&base.per_subject_accuracy),
        sort(&other.per_subject_accuracy)
    );
    let single = run_fold(&data, 2, false, &cfg.model, &cfg.train).unwrap();
    assert_eq!(single.accuracy, base.per_subject_accuracy[1]);
}
