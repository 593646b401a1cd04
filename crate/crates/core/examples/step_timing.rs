//! Times one training step (forward and backward) at full geometry, with
//! and without the gate. The batch size is the optional first argument.

use std::time::Instant;

use migate::autodiff::{DropoutKey, Mode, Tape};
use migate::model::{GateHooks, InputShape, IntegratedModel, ModelConfig};
use migate::Tensor;

fn main() -> migate::Result<()> {
    let b: usize = std::env::args().nth(1).map_or(64, |s| s.parse().unwrap());
    let input = InputShape::standard(22, 250.0);
    for use_gate in [false, true] {
        let mut model = IntegratedModel::new(ModelConfig::default(), input, use_gate, 7)?;
        let rest = Tensor::from_fn(vec![b, 22, 500], |i| {
            ((i * 7919) % 1000) as f64 / 500.0 - 1.0
        });
        let mi = Tensor::from_fn(vec![b, 22, 1000], |i| {
            ((i * 104729) % 1000) as f64 / 500.0 - 1.0
        });
        let labels: Vec<usize> = (0..b).map(|i| i % 4).collect();
        let t0 = Instant::now();
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let r = tape.constant(rest);
        let m = tape.constant(mi);
        let out = model.forward(
            &mut tape,
            &vars,
            r,
            m,
            Mode::Train,
            DropoutKey::new(1, 0, 0, 0),
            &GateHooks::default(),
        )?;
        let loss = tape.softmax_cross_entropy(out.logits, &labels)?;
        let t1 = Instant::now();
        tape.backward(loss)?;
        let t2 = Instant::now();
        println!(
            "use_gate={use_gate} params={} forward {:.2?} backward {:.2?} loss {:.4}",
            model.param_count(),
            t1 - t0,
            t2 - t1,
            tape.value(loss).item()
        );
    }
    Ok(())
}
