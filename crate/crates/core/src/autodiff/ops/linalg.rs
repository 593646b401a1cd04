use crate::autodiff::tape::{GradBuffers, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{axpy_slice, dot_slice, Tensor};

/// `out[n, m] += a[n, k] * b[k, m]` on raw row-major slices.
fn gemm_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let row = &mut out[i * m..][..m];
        for j in 0..k {
            let w = a[i * k + j];
            if w != 0.0 {
                axpy_slice(row, w, &b[j * m..][..m]);
            }
        }
    }
}

impl Tape {
    /// Matrix product. `a: [n, k]` with `b: [k, m]` gives `[n, m]`;
    /// `b: [batch, k, m]` applies `a` to every batch item and gives `[batch, n, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || !(sb.len() == 2 || sb.len() == 3) {
            return Err(Error::Dimension(format!(
                "matmul: unsupported shapes {sa:?} x {sb:?}"
            )));
        }
        let (batch, k, m) = if sb.len() == 2 {
            (1, sb[0], sb[1])
        } else {
            (sb[0], sb[1], sb[2])
        };
        let n = sa[0];
        if sa[1] != k {
            return Err(Error::Dimension(format!(
                "matmul: inner extents differ in {sa:?} x {sb:?}"
            )));
        }
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; batch * n * m];
        for bi in 0..batch {
            gemm_acc(
                av,
                &bv[bi * k * m..][..k * m],
                &mut out[bi * n * m..][..n * m],
                n,
                k,
                m,
            );
        }
        let shape = if sb.len() == 2 {
            vec![n, m]
        } else {
            vec![batch, n, m]
        };
        let out = Tensor::new(shape, out)?;
        self.push(out, Op::Matmul { a, b }, &[a, b])
    }

    /// Fully connected layer: `x: [B, F]`, `w: [F, O]`, `b: [O]` gives `x w + b`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (
            self.shape(x).to_vec(),
            self.shape(w).to_vec(),
            self.shape(b).to_vec(),
        );
        if sx.len() != 2 || sw.len() != 2 || sb.len() != 1 || sx[1] != sw[0] || sw[1] != sb[0] {
            return Err(Error::Dimension(format!(
                "dense: incompatible shapes x {sx:?}, w {sw:?}, b {sb:?}"
            )));
        }
        let (batch, f, o) = (sx[0], sx[1], sw[1]);
        let bias = self.value(b).data();
        let mut out = Vec::with_capacity(batch * o);
        for _ in 0..batch {
            out.extend_from_slice(bias);
        }
        gemm_acc(
            self.value(x).data(),
            self.value(w).data(),
            &mut out,
            batch,
            f,
            o,
        );
        let out = Tensor::new(vec![batch, o], out)?;
        self.push(out, Op::Dense { x, w, b }, &[x, w, b])
    }
}

impl Tape {
    /// Mixes the node axis of `x: [B, F, C, T]` with `s: [C, C]` on the time
    /// columns `start .. start + len`; every other column passes through.
    /// Per batch item, feature map and mixed column: `y[:, t] = s · x[:, t]`.
    pub fn mix_nodes(&mut self, s: Var, x: Var, start: usize, len: usize) -> Result<Var> {
        let (ss, xs) = (self.shape(s).to_vec(), self.shape(x).to_vec());
        if xs.len() != 4 || ss != [xs[2], xs[2]] {
            return Err(Error::Dimension(format!(
                "mix_nodes: matrix {ss:?} does not act on the node axis of {xs:?}"
            )));
        }
        let (c, t) = (xs[2], xs[3]);
        if start + len > t {
            return Err(Error::Length(format!(
                "mix_nodes: columns {start}..{} exceed {t}",
                start + len
            )));
        }
        let (sv, xv) = (self.value(s).data(), self.value(x).data());
        let mut out = xv.to_vec();
        if len > 0 {
            for (dst, src) in out.chunks_exact_mut(c * t).zip(xv.chunks_exact(c * t)) {
                for i in 0..c {
                    let row = &mut dst[i * t + start..][..len];
                    row.iter_mut().for_each(|v| *v = 0.0);
                    for j in 0..c {
                        axpy_slice(row, sv[i * c + j], &src[j * t + start..][..len]);
                    }
                }
            }
        }
        let out = Tensor::new(xs, out)?;
        self.push(out, Op::MixNodes { s, x, start, len }, &[s, x])
    }
}

pub(crate) fn mix_nodes_backward(
    tape: &Tape,
    s: Var,
    x: Var,
    (start, len): (usize, usize),
    gout: &[f64],
    g: &mut GradBuffers,
) {
    let xs = tape.shape(x);
    let (c, t) = (xs[2], xs[3]);
    let (sv, xv) = (tape.value(s).data(), tape.value(x).data());
    if tape.requires_grad(s) {
        let gs = g.slot(s);
        for (go, src) in gout.chunks_exact(c * t).zip(xv.chunks_exact(c * t)) {
            for i in 0..c {
                for j in 0..c {
                    gs[i * c + j] +=
                        dot_slice(&go[i * t + start..][..len], &src[j * t + start..][..len]);
                }
            }
        }
    }
    if tape.requires_grad(x) {
        let gx = g.slot(x);
        for (dst, go) in gx.chunks_exact_mut(c * t).zip(gout.chunks_exact(c * t)) {
            for j in 0..c {
                let row = &mut dst[j * t..][..t];
                axpy_slice(&mut row[..start], 1.0, &go[j * t..][..start]);
                axpy_slice(
                    &mut row[start + len..],
                    1.0,
                    &go[j * t + start + len..][..t - start - len],
                );
                for i in 0..c {
                    axpy_slice(
                        &mut row[start..start + len],
                        sv[i * c + j],
                        &go[i * t + start..][..len],
                    );
                }
            }
        }
    }
}

pub(crate) fn matmul_backward(tape: &Tape, a: Var, b: Var, gout: &[f64], g: &mut GradBuffers) {
    let (sa, sb) = (tape.shape(a), tape.shape(b));
    let (batch, k, m) = if sb.len() == 2 {
        (1, sb[0], sb[1])
    } else {
        (sb[0], sb[1], sb[2])
    };
    let n = sa[0];
    let (av, bv) = (tape.value(a).data(), tape.value(b).data());
    if tape.requires_grad(a) {
        let ga = g.slot(a);
        for bi in 0..batch {
            let bb = &bv[bi * k * m..][..k * m];
            let go = &gout[bi * n * m..][..n * m];
            for i in 0..n {
                for j in 0..k {
                    ga[i * k + j] += dot_slice(&go[i * m..][..m], &bb[j * m..][..m]);
                }
            }
        }
    }
    if tape.requires_grad(b) {
        let gb = g.slot(b);
        for bi in 0..batch {
            let go = &gout[bi * n * m..][..n * m];
            let dst = &mut gb[bi * k * m..][..k * m];
            for i in 0..n {
                for j in 0..k {
                    let w = av[i * k + j];
                    axpy_slice(&mut dst[j * m..][..m], w, &go[i * m..][..m]);
                }
            }
        }
    }
}

pub(crate) fn dense_backward(
    tape: &Tape,
    x: Var,
    w: Var,
    b: Var,
    gout: &[f64],
    g: &mut GradBuffers,
) {
    let (batch, f) = (tape.shape(x)[0], tape.shape(x)[1]);
    let o = tape.shape(w)[1];
    let (xv, wv) = (tape.value(x).data(), tape.value(w).data());
    if tape.requires_grad(b) {
        let gb = g.slot(b);
        for r in 0..batch {
            axpy_slice(gb, 1.0, &gout[r * o..][..o]);
        }
    }
    if tape.requires_grad(w) {
        let gw = g.slot(w);
        for r in 0..batch {
            for i in 0..f {
                axpy_slice(&mut gw[i * o..][..o], xv[r * f + i], &gout[r * o..][..o]);
            }
        }
    }
    if tape.requires_grad(x) {
        let gx = g.slot(x);
        for r in 0..batch {
            for i in 0..f {
                gx[r * f + i] += dot_slice(&wv[i * o..][..o], &gout[r * o..][..o]);
            }
        }
    }
}
