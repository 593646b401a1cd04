//! Generates a small synthetic set, stores and reloads it, then runs the
//! preprocessing chain and reports the mu-band drop on each class's channels.

use migate::data::{splice_rest_probe, synth_generate, SynthConfig, TrialSet};
use migate::signal::PreprocessConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> migate::Result<()> {
    let cfg = SynthConfig {
        n_subjects: 2,
        trials_per_class: 6,
        ..SynthConfig::default()
    };
    let ts = synth_generate(&cfg)?;
    println!(
        "{} trials, {} channels, {} samples at {} Hz",
        ts.n_trials(),
        ts.n_channels,
        ts.n_samples,
        ts.fs
    );

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("synthetic.eegt");
    ts.save(&path)?;
    let back = TrialSet::load(&path)?;
    println!(
        "container: {} bytes, reload identical: {}",
        std::fs::metadata(&path)?.len(),
        back == ts
    );

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let probed = splice_rest_probe(&ts, &cfg, 1.0, &mut rng)?;
    let prepared = PreprocessConfig::default().apply(&probed)?;
    println!(
        "rest window {} samples, MI window {} samples, {} probe samples per trial",
        prepared.rest_len,
        prepared.mi_len,
        prepared.mask(0).unwrap().iter().filter(|&&m| m).count()
    );

    // MI-window variance on each class group, own class against the others
    let n = prepared.mi_len;
    for (k, group) in cfg.class_groups.iter().enumerate() {
        let (mut own, mut other, mut n_own, mut n_other) = (0.0, 0.0, 0, 0);
        for i in 0..prepared.n_trials() {
            let trial = prepared.mi_trial(i);
            for &ch in group {
                let v = trial[ch * n..][..n].iter().map(|x| x * x).sum::<f64>() / n as f64;
                if prepared.labels[i] == k {
                    own += v;
                    n_own += 1;
                } else {
                    other += v;
                    n_other += 1;
                }
            }
        }
        println!(
            "class {k}: power on its channels {:.3} vs {:.3} elsewhere",
            own / n_own as f64,
            other / n_other as f64
        );
    }
    Ok(())
}
