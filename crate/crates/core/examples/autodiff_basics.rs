//! Builds a small two-layer network on the tape, checks its gradients
//! against finite differences and takes a few AdamW steps.

use migate::autodiff::{check_gradients, Tape};
use migate::train::{cosine_lr, AdamW, AdamWConfig};
use migate::Tensor;

fn loss_of(w: &Tensor, x: &Tensor, labels: &[usize]) -> migate::Result<(f64, Tensor)> {
    let mut tape = Tape::new();
    let wv = tape.param(w.clone());
    let xv = tape.constant(x.clone());
    let h = tape.matmul(xv, wv)?;
    let h = tape.elu(h)?;
    let loss = tape.softmax_cross_entropy(h, labels)?;
    tape.backward(loss)?;
    Ok((tape.value(loss).item(), tape.grad(wv).unwrap().clone()))
}

fn main() -> migate::Result<()> {
    let x = Tensor::from_fn(vec![8, 3], |i| ((i * 37) % 11) as f64 / 5.0 - 1.0);
    let labels: Vec<usize> = (0..8).map(|i| i % 4).collect();
    let mut w = Tensor::from_fn(vec![3, 4], |i| 0.1 * (i as f64 - 6.0));

    let err = check_gradients(
        |t: &mut Tape, w| {
            let xv = t.constant(x.clone());
            let h = t.matmul(xv, w)?;
            let h = t.elu(h)?;
            t.softmax_cross_entropy(h, &labels)
        },
        &w,
        1e-6,
    )?;
    println!("max relative gradient error {err:.2e}");

    let mut opt = AdamW::new(AdamWConfig::default());
    for step in 0..=50 {
        let (loss, grad) = loss_of(&w, &x, &labels)?;
        if step % 10 == 0 {
            println!("step {step:>2}  loss {loss:.4}");
        }
        opt.step(
            &mut [&mut w],
            &[Some(&grad)],
            cosine_lr(step, 50, 0.05, 0.0),
        )?;
    }
    Ok(())
}
