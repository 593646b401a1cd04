//! Stride-1 2-D convolution (cross-correlation, as in every deep-learning framework).

use crate::autodiff::tape::{GradBuffers, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{axpy_slice, dot_slice, Tensor};

/// Zero-padding policy for [`Tape::conv2d`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// No padding; each spatial extent shrinks by `kernel - 1`.
    Valid,
    /// Output keeps the input extents. For even kernels the extra zero goes on
    /// the trailing side.
    Same,
}

struct Geometry {
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    pad_top: usize,
    pad_left: usize,
    /// Row length of the output buffer, which may hold several inputs side by side.
    wo_total: usize,
    /// First output column belonging to this input.
    col_off: usize,
}

impl Geometry {
    /// Output columns `ow` whose input column `ow + kx - pad_left` is in range.
    #[inline]
    fn col_range(&self, kx: usize) -> (usize, usize) {
        let lo = self.pad_left.saturating_sub(kx);
        let hi = (self.w + self.pad_left).saturating_sub(kx).min(self.wo);
        (lo, hi.max(lo))
    }

    #[inline]
    fn input_row(&self, oh: usize, ky: usize) -> Option<usize> {
        let ih = (oh + ky).checked_sub(self.pad_top)?;
        (ih < self.h).then_some(ih)
    }

    #[inline]
    fn out_row(&self, b: usize, o: usize, oh: usize) -> usize {
        ((b * self.cout + o) * self.ho + oh) * self.wo_total + self.col_off
    }
}

fn pads(padding: Padding, kh: usize, kw: usize) -> (usize, usize) {
    match padding {
        Padding::Valid => (0, 0),
        Padding::Same => (kh - 1, kw - 1),
    }
}

impl Tape {
    /// `x: [B, Cin, H, W]`, `k: [Cout, Cin, kh, kw]`.
    pub fn conv2d(&mut self, x: Var, k: Var, padding: Padding) -> Result<Var> {
        self.conv2d_cat(&[x], k, padding)
    }

    /// Convolves every input with the same kernel and joins the outputs
    /// along the last axis. Inputs may differ in width only.
    pub fn conv2d_cat(&mut self, xs: &[Var], k: Var, padding: Padding) -> Result<Var> {
        let ks = self.shape(k).to_vec();
        if ks.len() != 4 {
            return Err(Error::Dimension(format!(
                "conv2d expects a 4-d kernel, got {ks:?}"
            )));
        }
        let first = self
            .shape(
                *xs.first()
                    .ok_or_else(|| Error::Domain("conv2d of no inputs".into()))?,
            )
            .to_vec();
        let (pad_h, pad_w) = pads(padding, ks[2], ks[3]);
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            if s.len() != 4 {
                return Err(Error::Dimension(format!(
                    "conv2d expects 4-d input, got {s:?}"
                )));
            }
            if s[1] != ks[1] {
                return Err(Error::Dimension(format!(
                    "conv2d input has {} channels but kernel expects {}",
                    s[1], ks[1]
                )));
            }
            if s[0] != first[0] || s[2] != first[2] {
                return Err(Error::Dimension(format!(
                    "conv2d inputs {s:?} and {first:?} differ"
                )));
            }
            if ks[2] > s[2] + pad_h || ks[3] > s[3] + pad_w {
                return Err(Error::Length(format!(
                    "conv2d kernel {}x{} larger than padded input {}x{}",
                    ks[2],
                    ks[3],
                    s[2] + pad_h,
                    s[3] + pad_w
                )));
            }
            widths.push(s[3] + pad_w + 1 - ks[3]);
        }
        let wo_total: usize = widths.iter().sum();
        let ho = first[2] + pad_h + 1 - ks[2];
        let mut out = vec![0.0; first[0] * ks[0] * ho * wo_total];
        let mut col_off = 0;
        for (&x, &wo) in xs.iter().zip(&widths) {
            let geo = geometry(
                self.shape(x),
                &ks,
                pad_h / 2,
                pad_w / 2,
                ho,
                wo,
                wo_total,
                col_off,
            );
            forward(&geo, self.value(x).data(), self.value(k).data(), &mut out);
            col_off += wo;
        }
        let out = Tensor::new(vec![first[0], ks[0], ho, wo_total], out)?;
        self.push(
            out,
            Op::Conv2d {
                xs: xs.to_vec(),
                widths,
                k,
                pad_top: pad_h / 2,
                pad_left: pad_w / 2,
            },
            &[xs, &[k]].concat(),
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn geometry(
    x: &[usize],
    k: &[usize],
    pad_top: usize,
    pad_left: usize,
    ho: usize,
    wo: usize,
    wo_total: usize,
    col_off: usize,
) -> Geometry {
    Geometry {
        batch: x[0],
        cin: x[1],
        h: x[2],
        w: x[3],
        cout: k[0],
        kh: k[2],
        kw: k[3],
        ho,
        wo,
        pad_top,
        pad_left,
        wo_total,
        col_off,
    }
}

fn forward(geo: &Geometry, x: &[f64], k: &[f64], out: &mut [f64]) {
    let plane_in = geo.h * geo.w;
    for b in 0..geo.batch {
        for o in 0..geo.cout {
            for i in 0..geo.cin {
                let src = &x[(b * geo.cin + i) * plane_in..][..plane_in];
                for ky in 0..geo.kh {
                    for kx in 0..geo.kw {
                        let wv = k[((o * geo.cin + i) * geo.kh + ky) * geo.kw + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (lo, hi) = geo.col_range(kx);
                        for oh in 0..geo.ho {
                            let Some(ih) = geo.input_row(oh, ky) else {
                                continue;
                            };
                            let in_lo = lo + kx - geo.pad_left;
                            let in_row = &src[ih * geo.w + in_lo..][..hi - lo];
                            let row = geo.out_row(b, o, oh);
                            axpy_slice(&mut out[row + lo..row + hi], wv, in_row);
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn backward(
    tape: &Tape,
    xs: &[Var],
    widths: &[usize],
    k: Var,
    (pad_top, pad_left): (usize, usize),
    out: &Tensor,
    gout: &[f64],
    g: &mut GradBuffers,
) {
    let ks = tape.shape(k).to_vec();
    let (ho, wo_total) = (out.shape()[2], out.shape()[3]);
    let mut col_off = 0;
    for (&x, &wo) in xs.iter().zip(widths) {
        let geo = geometry(
            tape.shape(x),
            &ks,
            pad_top,
            pad_left,
            ho,
            wo,
            wo_total,
            col_off,
        );
        backward_one(tape, x, k, &geo, gout, g);
        col_off += wo;
    }
}

fn backward_one(tape: &Tape, x: Var, k: Var, geo: &Geometry, gout: &[f64], g: &mut GradBuffers) {
    let xv = tape.value(x).data();
    let kv = tape.value(k).data();
    let plane_in = geo.h * geo.w;

    if tape.requires_grad(k) {
        let gk = g.slot(k);
        for b in 0..geo.batch {
            for o in 0..geo.cout {
                for i in 0..geo.cin {
                    let src = &xv[(b * geo.cin + i) * plane_in..][..plane_in];
                    for ky in 0..geo.kh {
                        for kx in 0..geo.kw {
                            let (lo, hi) = geo.col_range(kx);
                            let mut acc = 0.0;
                            for oh in 0..geo.ho {
                                let Some(ih) = geo.input_row(oh, ky) else {
                                    continue;
                                };
                                let in_lo = lo + kx - geo.pad_left;
                                let row = geo.out_row(b, o, oh);
                                acc += dot_slice(
                                    &gout[row + lo..row + hi],
                                    &src[ih * geo.w + in_lo..][..hi - lo],
                                );
                            }
                            gk[((o * geo.cin + i) * geo.kh + ky) * geo.kw + kx] += acc;
                        }
                    }
                }
            }
        }
    }

    if tape.requires_grad(x) {
        let gx = g.slot(x);
        for b in 0..geo.batch {
            for o in 0..geo.cout {
                for i in 0..geo.cin {
                    let dst = &mut gx[(b * geo.cin + i) * plane_in..][..plane_in];
                    for ky in 0..geo.kh {
                        for kx in 0..geo.kw {
                            let wv = kv[((o * geo.cin + i) * geo.kh + ky) * geo.kw + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            let (lo, hi) = geo.col_range(kx);
                            for oh in 0..geo.ho {
                                let Some(ih) = geo.input_row(oh, ky) else {
                                    continue;
                                };
                                let in_lo = lo + kx - geo.pad_left;
                                let row = geo.out_row(b, o, oh);
                                axpy_slice(
                                    &mut dst[ih * geo.w + in_lo..][..hi - lo],
                                    wv,
                                    &gout[row + lo..row + hi],
                                );
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_valid_convolution() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1, 1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap());
        let k = tape.constant(Tensor::new(vec![1, 1, 1, 2], vec![1.0, 1.0]).unwrap());
        let y = tape.conv2d(x, k, Padding::Valid).unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 1, 2]);
        assert_eq!(tape.value(y).data(), &[3.0, 5.0]);
    }

    #[test]
    fn same_padding_puts_extra_zero_on_trailing_side() {
        // kernel [1, 10]: out[t] = x[t + kx - pad_left] weighted; pad_left = 0 for kw = 2
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1, 1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap());
        let k = tape.constant(Tensor::new(vec![1, 1, 1, 2], vec![1.0, 10.0]).unwrap());
        let y = tape.conv2d(x, k, Padding::Same).unwrap();
        assert_eq!(tape.value(y).data(), &[21.0, 32.0, 3.0]);
    }

    #[test]
    fn same_padding_odd_kernel_is_centred() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1, 1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap());
        let k = tape.constant(Tensor::new(vec![1, 1, 3, 1], vec![1.0, 1.0, 1.0]).unwrap());
        let y = tape.conv2d(x, k, Padding::Same).unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 3, 1]);
        assert_eq!(tape.value(y).data(), &[3.0, 6.0, 5.0]);
    }

    #[test]
    fn cat_matches_separate_convolutions() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::from_fn(vec![2, 1, 3, 6], |i| {
            (i as f64 * 0.7).sin()
        }));
        let b = tape.constant(Tensor::from_fn(vec![2, 1, 3, 9], |i| {
            (i as f64 * 0.3).cos()
        }));
        let k = tape.constant(Tensor::from_fn(vec![4, 1, 2, 3], |i| i as f64 - 5.0));
        let ya = tape.conv2d(a, k, Padding::Valid).unwrap();
        let yb = tape.conv2d(b, k, Padding::Valid).unwrap();
        let joined = tape.concat_last(&[ya, yb]).unwrap();
        let cat = tape.conv2d_cat(&[a, b], k, Padding::Valid).unwrap();
        assert_eq!(tape.value(cat), tape.value(joined));
    }

    #[test]
    fn channel_mismatch_is_dimension_error() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(vec![1, 2, 3, 3]));
        let k = tape.constant(Tensor::zeros(vec![1, 3, 1, 1]));
        assert!(matches!(
            tape.conv2d(x, k, Padding::Valid),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn oversized_kernel_is_length_error() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(vec![1, 1, 1, 3]));
        let k = tape.constant(Tensor::zeros(vec![1, 1, 1, 4]));
        assert!(matches!(
            tape.conv2d(x, k, Padding::Valid),
            Err(Error::Length(_))
        ));
    }
}
