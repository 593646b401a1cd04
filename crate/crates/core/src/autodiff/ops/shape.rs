use crate::autodiff::tape::{GradBuffers, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Interpolation weights for resampling `m` points onto `len` points.
///
/// Output `i` sits at source position `i (m-1) / (len-1)`; endpoints map onto
/// endpoints exactly. Degenerate sizes (`m == 1` or `len == 1`) repeat the
/// first sample.
pub(crate) fn resample_taps(m: usize, len: usize) -> Vec<(usize, f64)> {
    (0..len)
        .map(|i| {
            if m == 1 || len == 1 {
                return (0, 0.0);
            }
            let pos = (i * (m - 1)) as f64 / (len - 1) as f64;
            let lo = (pos.floor() as usize).min(m - 2);
            (lo, pos - lo as f64)
        })
        .collect()
}

/// Linear interpolation of `v` onto `len` evenly spaced points (plain slices).
pub fn linear_resample(v: &[f64], len: usize) -> Vec<f64> {
    assert!(!v.is_empty() && len > 0);
    resample_taps(v.len(), len)
        .into_iter()
        .map(|(lo, f)| {
            if f == 0.0 {
                v[lo]
            } else {
                (1.0 - f) * v[lo] + f * v[lo + 1]
            }
        })
        .collect()
}

impl Tape {
    /// Resamples the last axis of `x` to `len` points by linear interpolation.
    pub fn linear_resample(&mut self, x: Var, len: usize) -> Result<Var> {
        if len == 0 {
            return Err(Error::Domain("resample length must be positive".into()));
        }
        let shape = self.shape(x).to_vec();
        let m = *shape
            .last()
            .ok_or_else(|| Error::Dimension("resample of a scalar".into()))?;
        let rows = self.value(x).len() / m;
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend(linear_resample(&xv[r * m..][..m], len));
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = len;
        let out = Tensor::new(out_shape, out)?;
        self.push(out, Op::Resample { x }, &[x])
    }

    /// Transpose of a 2-d tensor.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 {
            return Err(Error::Dimension(format!(
                "transpose expects 2-d, got {shape:?}"
            )));
        }
        let (r, c) = (shape[0], shape[1]);
        let xv = self.value(x).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xv[i * c + j];
            }
        }
        let out = Tensor::new(vec![c, r], out)?;
        self.push(out, Op::Transpose { x }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape.to_vec())?;
        self.push(out, Op::Reshape { x }, &[x])
    }

    /// Concatenates along the last axis; all leading axes must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self
            .shape(
                *parts
                    .first()
                    .ok_or_else(|| Error::Domain("concat of nothing".into()))?,
            )
            .to_vec();
        let lead = &first[..first.len() - 1];
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len() || &s[..s.len() - 1] != lead {
                return Err(Error::Dimension(format!(
                    "concat: {s:?} does not match {first:?}"
                )));
            }
            total += s[s.len() - 1];
        }
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                let w = *self.shape(p).last().unwrap();
                out.extend_from_slice(&self.value(p).data()[r * w..][..w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let out = Tensor::new(shape, out)?;
        self.push(
            out,
            Op::ConcatLast {
                parts: parts.to_vec(),
            },
            parts,
        )
    }

    /// `x[..., start .. start + len]`.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let w = *shape
            .last()
            .ok_or_else(|| Error::Dimension("slice of a scalar".into()))?;
        if len == 0 || start + len > w {
            return Err(Error::Length(format!(
                "slice {start}..{} out of range 0..{w}",
                start + len
            )));
        }
        let rows = self.value(x).len() / w;
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&xv[r * w + start..][..len]);
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = len;
        let out = Tensor::new(out_shape, out)?;
        self.push(out, Op::SliceLast { x, start }, &[x])
    }
}

pub(crate) fn resample_backward(
    tape: &Tape,
    x: Var,
    out: &Tensor,
    gout: &[f64],
    g: &mut GradBuffers,
) {
    if !tape.requires_grad(x) {
        return;
    }
    let m = *tape.shape(x).last().unwrap();
    let len = *out.shape().last().unwrap();
    let taps = resample_taps(m, len);
    let gx = g.slot(x);
    let rows = gx.len() / m;
    for r in 0..rows {
        let dst = &mut gx[r * m..][..m];
        let src = &gout[r * len..][..len];
        for (&(lo, f), &go) in taps.iter().zip(src) {
            dst[lo] += (1.0 - f) * go;
            if f != 0.0 {
                dst[lo + 1] += f * go;
            }
        }
    }
}

pub(crate) fn transpose_backward(tape: &Tape, x: Var, gout: &[f64], g: &mut GradBuffers) {
    if !tape.requires_grad(x) {
        return;
    }
    let (r, c) = (tape.shape(x)[0], tape.shape(x)[1]);
    let gx = g.slot(x);
    for i in 0..r {
        for j in 0..c {
            gx[i * c + j] += gout[j * r + i];
        }
    }
}

pub(crate) fn concat_backward(
    tape: &Tape,
    parts: &[Var],
    out: &Tensor,
    gout: &[f64],
    g: &mut GradBuffers,
) {
    let total = *out.shape().last().unwrap();
    let rows = out.len() / total;
    let mut offset = 0;
    for &p in parts {
        let w = *tape.shape(p).last().unwrap();
        if tape.requires_grad(p) {
            let gp = g.slot(p);
            for r in 0..rows {
                crate::tensor::axpy_slice(
                    &mut gp[r * w..][..w],
                    1.0,
                    &gout[r * total + offset..][..w],
                );
            }
        }
        offset += w;
    }
}

pub(crate) fn slice_backward(
    tape: &Tape,
    x: Var,
    start: usize,
    out: &Tensor,
    gout: &[f64],
    g: &mut GradBuffers,
) {
    if !tape.requires_grad(x) {
        return;
    }
    let w = *tape.shape(x).last().unwrap();
    let len = *out.shape().last().unwrap();
    let gx = g.slot(x);
    let rows = gx.len() / w;
    for r in 0..rows {
        crate::tensor::axpy_slice(
            &mut gx[r * w + start..][..len],
            1.0,
            &gout[r * len..][..len],
        );
    }
}
