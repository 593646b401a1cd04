//! Designs the default 0.5–38 Hz bandpass and prints its sections, its gain
//! at a few frequencies and the effect on a mixed test signal.

use std::f64::consts::PI;

use migate::signal::{apply_filter, design_butterworth_bandpass};

fn main() -> migate::Result<()> {
    let fs = 250.0;
    let f = design_butterworth_bandpass(4, 0.5, 38.0, fs)?;
    println!(
        "{} second-order sections, order {}",
        f.sections.len(),
        f.order()
    );
    for (i, s) in f.sections.iter().enumerate() {
        println!(
            "  [{i}] b = ({:+.6}, {:+.6}, {:+.6})  a = (1, {:+.6}, {:+.6})",
            s.b0, s.b1, s.b2, s.a1, s.a2
        );
    }
    let max_pole = f.poles().iter().map(|p| p.norm()).fold(0.0, f64::max);
    println!("largest pole radius {max_pole:.6}");
    for hz in [0.0, 0.1, 0.5, 2.0, 10.0, 38.0, 60.0, 100.0] {
        println!("  {hz:>6.1} Hz  {:>9.3} dB", f.gain_db(hz));
    }

    // offset + 10 Hz rhythm + 60 Hz mains
    let x: Vec<f64> = (0..10 * fs as usize)
        .map(|t| {
            let s = t as f64 / fs;
            3.0 + (2.0 * PI * 10.0 * s).sin() + 0.5 * (2.0 * PI * 60.0 * s).sin()
        })
        .collect();
    let y = apply_filter(&f, &x);
    let tail = &y[5 * fs as usize..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let rms = (tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / tail.len() as f64).sqrt();
    println!(
        "after filtering: mean {mean:.2e}, rms {rms:.4} (10 Hz alone would be {:.4})",
        0.5f64.sqrt()
    );
    Ok(())
}
