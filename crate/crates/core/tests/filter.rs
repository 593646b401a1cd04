//! Bandpass design and filtering against transfer-function evaluation.

use migate::signal::{
    apply_filter, design_butterworth_bandpass, exp_moving_standardize, segment_trial, BiquadCascade,
};
use num_complex::Complex64;

fn default_filter() -> BiquadCascade {
    design_butterworth_bandpass(4, 0.5, 38.0, 250.0).unwrap()
}

/// `|H(e^{jω})|` from the section coefficients, written out longhand.
fn magnitude(f: &BiquadCascade, hz: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * hz / f.fs;
    let z1 = Complex64::new(w.cos(), -w.sin());
    let z2 = z1 * z1;
    f.sections
        .iter()
        .map(|s| ((s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2)).norm())
        .product()
}

fn db(m: f64) -> f64 {
    20.0 * m.log10()
}

#[test]
pub fn corners_midband_and_dc() {
    let f = default_filter();
    assert_eq!(f.order(), 8);
    assert!((db(magnitude(&f, 0.5)) + 3.0103).abs() < 0.5);
    assert!((db(magnitude(&f, 38.0)) + 3.0103).abs() < 0.5);
    let centre = (0.5f64 * 38.0).sqrt();
    assert!(db(magnitude(&f, centre)).abs() < 0.1);
    assert!(magnitude(&f, 0.0) < 1e-9);
    assert!((f.magnitude(10.0) - magnitude(&f, 10.0)).abs() < 1e-12);
}

#[test]
pub fn poles_strictly_inside_unit_circle() {
    for (order, lo, hi) in [
        (4, 0.5, 38.0),
        (2, 8.0, 30.0),
        (6, 1.0, 100.0),
        (1, 4.0, 40.0),
    ] {
        let f = design_butterworth_bandpass(order, lo, hi, 250.0).unwrap();
        assert!(
            f.poles().iter().all(|p| p.norm() < 1.0 - 1e-9),
            "{order} {lo} {hi}"
        );
    }
}

#[test]
pub fn constant_input_is_rejected() {
    let y = apply_filter(&default_filter(), &vec![5.0; 5000]);
    assert_eq!(y.len(), 5000);
    assert!(y[4900..].iter().all(|v| v.abs() < 1e-3));
}

#[test]
pub fn ten_hertz_sine_passes_at_unit_gain() {
    let fs = 250.0;
    let x: Vec<f64> = (0..3000)
        .map(|n| (2.0 * std::f64::consts::PI * 10.0 * n as f64 / fs).sin())
        .collect();
    let y = apply_filter(&default_filter(), &x);
    let amp = y[1000..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!((amp - 1.0).abs() < 0.02, "{amp}");
}

#[test]
pub fn impulse_response_decays() {
    let mut x = vec![0.0; 4000];
    x[0] = 1.0;
    let h = apply_filter(&default_filter(), &x);
    assert!(h[2501..].iter().all(|v| v.abs() < 1e-6));
    assert!(h.iter().map(|v| v * v).sum::<f64>().is_finite());
}

#[test]
pub fn linear_and_time_invariant() {
    let f = default_filter();
    let x: Vec<f64> = (0..800)
        .map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0)
        .collect();
    let y: Vec<f64> = (0..800)
        .map(|i| ((i * 53) % 97) as f64 / 48.0 - 1.0)
        .collect();
    let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 2.5 * a - 0.75 * b).collect();
    let (fx, fy, fm) = (
        apply_filter(&f, &x),
        apply_filter(&f, &y),
        apply_filter(&f, &mix),
    );
    for i in 0..800 {
        assert!((fm[i] - (2.5 * fx[i] - 0.75 * fy[i])).abs() < 1e-10);
    }
    let k = 37;
    let mut delayed = vec![0.0; k];
    delayed.extend_from_slice(&x[..800 - k]);
    let fd = apply_filter(&f, &delayed);
    for i in k..800 {
        assert_eq!(fd[i], fx[i - k]);
    }
}

#[test]
pub fn bounded_input_bounded_output() {
    let f = default_filter();
    let x: Vec<f64> = (0..1_000_000u64)
        .map(|i| {
            if (i.wrapping_mul(2654435761) >> 7) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    let y = apply_filter(&f, &x);
    assert!(y.iter().all(|v| v.abs() <= 100.0));
}

#[test]
pub fn standardizer_recurrence_and_scale_invariance() {
    let out = exp_moving_standardize(&[0.0, 1.0, 1.0], 0.5, 1e-4).unwrap();
    assert_eq!(out[0], 0.0);
    assert!((out[1] - 0.5 / 0.125f64.sqrt()).abs() < 1e-12);
    assert!((out[1] - std::f64::consts::SQRT_2).abs() < 1e-6);
    assert!(exp_moving_standardize(&vec![3.0; 100], 1e-3, 1e-4)
        .unwrap()
        .iter()
        .all(|&v| v == 0.0));

    let x: Vec<f64> = (0..5000)
        .map(|i| ((i as f64) * 0.37).sin() + 0.1 * ((i * 13 % 7) as f64))
        .collect();
    let big: Vec<f64> = x.iter().map(|v| v * 1e6).collect();
    let (a, b) = (
        exp_moving_standardize(&x, 1e-3, 1e-4).unwrap(),
        exp_moving_standardize(&big, 1e-3, 1e-4).unwrap(),
    );
    for i in 100..5000 {
        assert!((a[i] - b[i]).abs() < 1e-9, "{i}");
    }
    assert!(exp_moving_standardize(&x, 1.0, 1e-4).is_err());
}

#[test]
pub fn segmentation_partitions_the_trial() {
    let c = 2;
    let trial: Vec<f64> = (0..c * 1500).map(|i| i as f64).collect();
    let (rest, mi) = segment_trial(&trial, c, 250.0).unwrap();
    assert_eq!((rest.len(), mi.len()), (c * 500, c * 1000));
    for ch in 0..c {
        let mut joined = rest[ch * 500..][..500].to_vec();
        joined.extend_from_slice(&mi[ch * 1000..][..1000]);
        assert_eq!(joined, trial[ch * 1500..][..1500]);
    }
    assert!(matches!(
        segment_trial(&vec![0.0; c * 1499], c, 250.0),
        Err(migate::Error::Length(_))
    ));
}
