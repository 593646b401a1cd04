//! Trains both variants on all subjects but one, then measures whether the
//! gate drops over spliced rest probes in the held-out subject.
//! Arguments: trials per class, epochs, subjects.

use std::time::Instant;

use migate::data::{splice_rest_probe, synth_generate, SynthConfig};
use migate::model::{IntegratedModel, ModelConfig};
use migate::signal::PreprocessConfig;
use migate::train::{evaluate, fit, probe_attenuation, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arg(i: usize, d: f64) -> f64 {
    std::env::args().nth(i).map_or(d, |s| s.parse().unwrap())
}

fn main() -> migate::Result<()> {
    let tpc = arg(1, 12.0) as usize;
    let epochs = arg(2, 20.0) as usize;
    let subjects = arg(3, 9.0) as usize;
    let synth = SynthConfig {
        trials_per_class: tpc,
        n_subjects: subjects,
        ..SynthConfig::default()
    };
    let ts = synth_generate(&synth)?;
    let pre = PreprocessConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let probed = splice_rest_probe(&ts, &synth, 1.0, &mut rng)?;
    let data = pre.apply(&ts)?;
    let pdata = pre.apply(&probed)?;
    let train = data.select(&data.indices_where(|s| s != 1));
    let test = data.select(&data.indices_where(|s| s == 1));
    let ptest = pdata.select(&pdata.indices_where(|s| s == 1));
    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    for use_gate in [false, true] {
        let t0 = Instant::now();
        let mut m = IntegratedModel::new(ModelConfig::default(), data.input_shape(), use_gate, 0)?;
        if use_gate {
            let r = probe_attenuation(&mut m, &ptest, 64)?;
            println!("untrained probe fraction {:.3}", r.fraction_lower);
        }
        let rep = fit(&mut m, &train, &cfg)?;
        let acc = evaluate(&mut m, &test)?;
        println!(
            "gate={use_gate} acc={acc:.3} loss {:?} in {:.1?}",
            rep.loss_history
                .iter()
                .map(|l| (l * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>(),
            t0.elapsed()
        );
        if use_gate {
            let r = probe_attenuation(&mut m, &ptest, 64)?;
            let mi: f64 = r.masked_mean.iter().sum::<f64>() / r.masked_mean.len() as f64;
            let mu: f64 = r.unmasked_mean.iter().sum::<f64>() / r.unmasked_mean.len() as f64;
            println!(
                "probe fraction {:.3} masked {mi:.4} unmasked {mu:.4}",
                r.fraction_lower
            );
        }
    }
    Ok(())
}
