//! Leave-one-subject-out comparison with and without the gate on a reduced
//! synthetic set. Pass `epochs` and `trials_per_class` to scale it up.

use migate::data::{synth_generate, SynthConfig};
use migate::signal::PreprocessConfig;
use migate::train::{loso_evaluate, LosoConfig, TrainConfig};

fn arg(i: usize, default: usize) -> usize {
    std::env::args()
        .nth(i)
        .map_or(default, |s| s.parse().expect("integer argument"))
}

fn main() -> migate::Result<()> {
    let synth = SynthConfig {
        n_subjects: 3,
        trials_per_class: arg(2, 6),
        ..SynthConfig::default()
    };
    let data = PreprocessConfig::default().apply(&synth_generate(&synth)?)?;
    let cfg = LosoConfig {
        train: TrainConfig {
            epochs: arg(1, 15),
            ..TrainConfig::default()
        },
        ..LosoConfig::default()
    };
    let t0 = std::time::Instant::now();
    let report = loso_evaluate(&data, &cfg)?;
    print!("{}", report.to_toml());
    println!("# {:.1?}", t0.elapsed());
    Ok(())
}
