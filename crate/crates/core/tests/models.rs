mod common;

use common::{rng, uniform};
use migate::autodiff::softmax_rows;
use migate::cli::{exit_code, EXIT_DATA};
use migate::model::{InputShape, IntegratedModel, ModelConfig, ModelMeta};
use migate::Error;

fn paper() -> InputShape {
    InputShape::standard(22, 250.0)
}

#[test]
pub fn parameter_counts() {
    let plain = IntegratedModel::new(ModelConfig::default(), paper(), false, 0).unwrap();
    let gated = IntegratedModel::new(ModelConfig::default(), paper(), true, 0).unwrap();
    assert_eq!(plain.param_count(), 3580);
    assert_eq!(gated.param_count(), 9888);
}

#[test]
pub fn gate_initialisation_does_not_disturb_the_classifier() {
    let mut plain = IntegratedModel::new(ModelConfig::default(), paper(), false, 7).unwrap();
    let mut gated = IntegratedModel::new(ModelConfig::default(), paper(), true, 7).unwrap();
    assert_eq!(plain.classifier, gated.classifier);
    let mut r = rng(1);
    let (rest, mi) = (
        uniform(&[3, 22, 500], &mut r),
        uniform(&[3, 22, 1000], &mut r),
    );
    gated.use_gate = false;
    assert_eq!(
        gated.predict_logits(&rest, &mi).unwrap(),
        plain.predict_logits(&rest, &mi).unwrap()
    );
}

#[test]
pub fn eval_outputs_are_well_formed() {
    let mut m = IntegratedModel::new(ModelConfig::default(), paper(), true, 3).unwrap();
    let mut r = rng(2);
    let (rest, mi) = (
        uniform(&[2, 22, 500], &mut r),
        uniform(&[2, 22, 1000], &mut r),
    );
    // two identical trials
    let rest = migate::Tensor::new(
        vec![2, 22, 500],
        [&rest.data()[..11000], &rest.data()[..11000]].concat(),
    )
    .unwrap();
    let mi = migate::Tensor::new(
        vec![2, 22, 1000],
        [&mi.data()[..22000], &mi.data()[..22000]].concat(),
    )
    .unwrap();
    let logits = m.predict_logits(&rest, &mi).unwrap();
    assert_eq!(logits.shape(), &[2, 4]);
    assert_eq!(logits.data()[..4], logits.data()[4..]);
    let p = softmax_rows(&logits);
    for row in p.data().chunks_exact(4) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|&v| v > 0.0));
    }
    let f = m.extract_features(&rest, &mi).unwrap();
    assert_eq!(f.shape(), &[2, 488]);
    assert_eq!(f.data()[..488], f.data()[488..]);
}

#[test]
pub fn model_files_round_trip_bit_exact() {
    let m = IntegratedModel::new(ModelConfig::default(), paper(), true, 11).unwrap();
    let meta = ModelMeta {
        train_config: serde_json::json!({"epochs": 3}),
        holdout_subject: Some(4),
    };
    let bytes = m.to_bytes(&meta).unwrap();
    let (back, header) = IntegratedModel::from_bytes(&bytes).unwrap();
    assert_eq!(back, m);
    assert_eq!(header.meta, meta);
    assert_eq!(header.param_count, 9888);
    assert_eq!(back.to_bytes(&meta).unwrap(), bytes);
}

#[test]
pub fn damaged_model_files_are_format_errors() {
    let m = IntegratedModel::new(ModelConfig::default(), paper(), false, 0).unwrap();
    let bytes = m.to_bytes(&ModelMeta::default()).unwrap();
    for cut in [4, 11, 40, bytes.len() - 3] {
        let err = IntegratedModel::from_bytes(&bytes[..cut]).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
        assert_eq!(exit_code(&err), EXIT_DATA);
    }
    let mut extra = bytes.clone();
    extra.extend_from_slice(&[0; 8]);
    assert!(matches!(
        IntegratedModel::from_bytes(&extra),
        Err(Error::Format { .. })
    ));
}
