//! Runs an untrained gate on one synthetic trial at full geometry and plots
//! the per-sample gate next to the probe mask.

use migate::data::{splice_rest_probe, synth_generate, SynthConfig};
use migate::model::{InputShape, IntegratedModel, ModelConfig};
use migate::plot::{emit_plot, PlotKind, Table};
use migate::signal::PreprocessConfig;
use migate::train::batch_tensors;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> migate::Result<()> {
    let cfg = SynthConfig {
        n_subjects: 1,
        trials_per_class: 1,
        ..SynthConfig::default()
    };
    let ts = synth_generate(&cfg)?;
    let probed = splice_rest_probe(&ts, &cfg, 1.0, &mut ChaCha8Rng::seed_from_u64(3))?;
    let data = PreprocessConfig::default().apply(&probed)?;

    let mut model = IntegratedModel::new(
        ModelConfig::default(),
        InputShape::standard(22, 250.0),
        true,
        0,
    )?;
    let (rest, mi) = batch_tensors(&data, &[0])?;
    let out = model.gate_output(&rest, &mi)?.expect("gated model");
    println!(
        "gate {:?}, upsampled {:?}, rest centre {:?}",
        out.gate.shape(),
        out.upsampled_gate.shape(),
        out.center.shape()
    );

    let mask = data.mask(0).unwrap();
    let g = out.upsampled_gate.data();
    let mean = |sel: bool| {
        let v: Vec<f64> = g
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m == sel)
            .map(|(v, _)| *v)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    println!(
        "mean gate over the probe {:.4}, over genuine MI {:.4}",
        mean(true),
        mean(false)
    );

    let mut table = Table::new(&["sample_index", "gate_value"]);
    for (i, v) in out.gate.data().iter().enumerate() {
        table.push(vec![i as f64, *v]);
    }
    let dir = std::env::temp_dir().join("migate-examples");
    std::fs::create_dir_all(&dir)?;
    let (svg, csv) = emit_plot(PlotKind::GateTrace, &table, &dir.join("gate"))?;
    println!("wrote {} and {}", svg.display(), csv.display());
    Ok(())
}
