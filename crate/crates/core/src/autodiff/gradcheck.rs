use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{Tape, Var};

fn eval_scalar<F>(f: &F, x: Tensor) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let v = tape.constant(x);
    let out = f(&mut tape, v)?;
    let value = tape.value(out);
    if value.len() != 1 {
        return Err(Error::Contract(format!(
            "gradient check needs a scalar function, got shape {:?}",
            value.shape()
        )));
    }
    Ok(value.item())
}

/// Central difference of `f` along coordinate `i` of `x0`.
pub fn finite_difference<F>(f: &F, x0: &Tensor, step: f64, i: usize) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut plus = x0.clone();
    plus.data_mut()[i] += step;
    let mut minus = x0.clone();
    minus.data_mut()[i] -= step;
    Ok((eval_scalar(f, plus)? - eval_scalar(f, minus)?) / (2.0 * step))
}

/// Max over all coordinates of `|analytic - central difference| / max(1, |analytic|)`.
pub fn check_gradients<F>(f: F, x0: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let coords: Vec<usize> = (0..x0.len()).collect();
    check_gradients_at(f, x0, step, &coords)
}

/// Same as [`check_gradients`] restricted to the listed coordinates.
pub fn check_gradients_at<F>(f: F, x0: &Tensor, step: f64, coords: &[usize]) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.param(x0.clone());
    let out = f(&mut tape, x)?;
    tape.backward(out)?;
    let analytic = tape
        .grad(x)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x0.shape().to_vec()));
    let mut worst = 0.0f64;
    for &i in coords {
        let numeric = finite_difference(&f, x0, step, i)?;
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let w = Tensor::from_vec(vec![0.5, -1.5, 2.0]);
        let err = check_gradients(
            |t, x| {
                let w = t.constant(w.clone());
                let p = t.mul(x, w)?;
                t.sum(p)
            },
            &Tensor::from_vec(vec![0.3, 0.1, -0.7]),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn non_scalar_function_is_rejected() {
        let r = check_gradients(|_, x| Ok(x), &Tensor::from_vec(vec![1.0, 2.0]), 1e-5);
        assert!(matches!(r, Err(Error::Contract(_))));
    }
}
