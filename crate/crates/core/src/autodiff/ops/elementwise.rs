use crate::autodiff::tape::{GradBuffers, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{strides_of, Tensor};

/// Floor applied before the logarithm in [`ActivationKind::LogClamped`].
pub const LOG_FLOOR: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivationKind {
    /// `x` for `x >= 0`, `exp(x) - 1` otherwise (alpha = 1).
    Elu,
    Sigmoid,
    /// `ln(1 + exp(x))`.
    Softplus,
    Square,
    /// `ln(max(x, 1e-7))`.
    LogClamped,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl ActivationKind {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Elu => {
                if x >= 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Softplus => softplus(x),
            ActivationKind::Square => x * x,
            ActivationKind::LogClamped => x.max(LOG_FLOOR).ln(),
        }
    }

    /// Derivative given the input `x` and the already computed output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            ActivationKind::Elu => {
                if x >= 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            ActivationKind::Sigmoid => y * (1.0 - y),
            ActivationKind::Softplus => sigmoid(x),
            ActivationKind::Square => 2.0 * x,
            ActivationKind::LogClamped => {
                if x > LOG_FLOOR {
                    1.0 / x
                } else {
                    0.0
                }
            }
        }
    }
}

/// Output shape and per-operand strides (0 on broadcast axes), numpy rules.
fn broadcast(a: &[usize], b: &[usize]) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let nd = a.len().max(b.len());
    let pad = |s: &[usize]| {
        let mut v = vec![1; nd - s.len()];
        v.extend_from_slice(s);
        v
    };
    let (pa, pb) = (pad(a), pad(b));
    let mut out = Vec::with_capacity(nd);
    for (&x, &y) in pa.iter().zip(&pb) {
        if x != y && x != 1 && y != 1 {
            return Err(Error::Dimension(format!(
                "cannot broadcast {a:?} with {b:?}"
            )));
        }
        out.push(x.max(y));
    }
    let eff = |p: &[usize]| {
        let st = strides_of(p);
        p.iter()
            .zip(st)
            .map(|(&d, s)| if d == 1 { 0 } else { s })
            .collect::<Vec<_>>()
    };
    let (sa, sb) = (eff(&pa), eff(&pb));
    Ok((out, sa, sb))
}

/// Calls `f(out_index, a_index, b_index)` for every output element in order.
fn for_each_broadcast(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let n: usize = out.iter().product();
    let nd = out.len();
    let mut idx = vec![0usize; nd];
    let (mut ia, mut ib) = (0usize, 0usize);
    for o in 0..n {
        f(o, ia, ib);
        for d in (0..nd).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out[d] {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

impl Tape {
    pub fn activation(&mut self, kind: ActivationKind, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| kind.apply(v));
        self.push(out, Op::Activation { x, kind }, &[x])
    }

    pub fn elu(&mut self, x: Var) -> Result<Var> {
        self.activation(ActivationKind::Elu, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activation(ActivationKind::Sigmoid, x)
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.activation(ActivationKind::Softplus, x)
    }

    /// Elementwise sum with numpy-style broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, |a, b| Op::Add { a, b })
    }

    /// Elementwise product with numpy-style broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: impl FnOnce(Var, Var) -> Op,
    ) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let data = if av.shape() == bv.shape() {
            let d: Vec<f64> = av
                .data()
                .iter()
                .zip(bv.data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Tensor::new(av.shape().to_vec(), d)?
        } else {
            let (shape, sa, sb) = broadcast(av.shape(), bv.shape())?;
            let mut d = vec![0.0; shape.iter().product()];
            let (ad, bd) = (av.data(), bv.data());
            for_each_broadcast(&shape, &sa, &sb, |o, i, j| d[o] = f(ad[i], bd[j]));
            Tensor::new(shape, d)?
        };
        self.push(data, op(a, b), &[a, b])
    }

    /// `scale * x + shift` with scalar constants.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let out = self.value(x).map(|v| scale * v + shift);
        self.push(out, Op::Affine { x, scale }, &[x])
    }

    /// Elementwise `x^p`; `x` must be positive when `p` is not an integer.
    pub fn powf(&mut self, x: Var, p: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v.powf(p));
        self.push(out, Op::Powf { x, p }, &[x])
    }
}

pub(crate) fn activation_backward(
    tape: &Tape,
    x: Var,
    kind: ActivationKind,
    out: &Tensor,
    gout: &[f64],
    g: &mut GradBuffers,
) {
    if !tape.requires_grad(x) {
        return;
    }
    let xv = tape.value(x).data();
    let yv = out.data();
    for (((d, &xi), &yi), &go) in g.slot(x).iter_mut().zip(xv).zip(yv).zip(gout) {
        *d += go * kind.derivative(xi, yi);
    }
}

pub(crate) fn add_backward(
    tape: &Tape,
    a: Var,
    b: Var,
    out: &Tensor,
    gout: &[f64],
    g: &mut GradBuffers,
) {
    binary_backward(tape, a, b, out, gout, g, |go, _, _| (go, go));
}

pub(crate) fn mul_backward(
    tape: &Tape,
    a: Var,
    b: Var,
    out: &Tensor,
    gout: &[f64],
    g: &mut GradBuffers,
) {
    binary_backward(tape, a, b, out, gout, g, |go, x, y| (go * y, go * x));
}

fn binary_backward(
    tape: &Tape,
    a: Var,
    b: Var,
    out: &Tensor,
    gout: &[f64],
    g: &mut GradBuffers,
    partials: impl Fn(f64, f64, f64) -> (f64, f64),
) {
    let (ra, rb) = (tape.requires_grad(a), tape.requires_grad(b));
    let (av, bv) = (tape.value(a).data(), tape.value(b).data());
    let mut ga = ra.then(|| vec![0.0; av.len()]);
    let mut gb = rb.then(|| vec![0.0; bv.len()]);
    let (_, sa, sb) = broadcast(tape.shape(a), tape.shape(b)).expect("checked in forward");
    for_each_broadcast(out.shape(), &sa, &sb, |o, i, j| {
        let (da, db) = partials(gout[o], av[i], bv[j]);
        if let Some(ga) = ga.as_mut() {
            ga[i] += da;
        }
        if let Some(gb) = gb.as_mut() {
            gb[j] += db;
        }
    });
    if let Some(ga) = ga {
        crate::tensor::axpy_slice(g.slot(a), 1.0, &ga);
    }
    if let Some(gb) = gb {
        crate::tensor::axpy_slice(g.slot(b), 1.0, &gb);
    }
}

pub(crate) fn powf_backward(tape: &Tape, x: Var, p: f64, gout: &[f64], g: &mut GradBuffers) {
    if !tape.requires_grad(x) {
        return;
    }
    let xv = tape.value(x).data();
    for ((d, &xi), &go) in g.slot(x).iter_mut().zip(xv).zip(gout) {
        *d += go * p * xi.powf(p - 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_symmetry_point_and_saturation() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((ActivationKind::Elu.apply(-1e9) + 1.0).abs() < 1e-12);
        assert_eq!(ActivationKind::Elu.apply(2.5), 2.5);
        assert_eq!(ActivationKind::LogClamped.apply(0.0), LOG_FLOOR.ln());
    }

    #[test]
    fn sigmoid_at_one_matches_series_oracle() {
        // e^{-1} from its Taylor series, independent of f64::exp
        let mut term = 1.0f64;
        let mut e_inv = 1.0f64;
        for k in 1..30 {
            term *= -1.0 / k as f64;
            e_inv += term;
        }
        let oracle = 1.0 / (1.0 + e_inv);
        assert!((sigmoid(1.0) - oracle).abs() < 1e-15);
        assert!((sigmoid(1.0) - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn softplus_is_stable_for_large_inputs() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn broadcast_add_row_vector() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::new(vec![2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap());
        let b = tape.constant(Tensor::from_vec(vec![10.0, 20.0, 30.0]));
        let c = tape.add(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[10.0, 21.0, 32.0, 13.0, 24.0, 35.0]);
        let bad = tape.constant(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(tape.add(a, bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn broadcast_mul_gradient_reduces_over_broadcast_axis() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = tape.param(Tensor::new(vec![2, 1], vec![10.0, 100.0]).unwrap());
        let c = tape.mul(a, b).unwrap();
        let s = tape.sum(c).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).unwrap().data(), &[10.0, 10.0, 100.0, 100.0]);
        assert_eq!(tape.grad(b).unwrap().data(), &[3.0, 7.0]);
    }
}
