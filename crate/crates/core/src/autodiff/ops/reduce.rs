use crate::autodiff::tape::{GradBuffers, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{strides_of, Tensor};

pub const DEFAULT_COSINE_EPS: f64 = 1e-8;

/// For every input element, the flat index of the output element it reduces into.
fn reduction_map(shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let out_shape: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter(|(i, _)| !axes.contains(i))
        .map(|(_, &d)| d)
        .collect();
    let out_strides = strides_of(&out_shape);
    // stride of each input axis within the output (0 for reduced axes)
    let mut per_axis = vec![0usize; shape.len()];
    let mut k = 0;
    for (i, s) in per_axis.iter_mut().enumerate() {
        if !axes.contains(&i) {
            *s = out_strides[k];
            k += 1;
        }
    }
    let n: usize = shape.iter().product();
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; shape.len()];
    let mut o = 0usize;
    for _ in 0..n {
        map.push(o);
        for d in (0..shape.len()).rev() {
            idx[d] += 1;
            o += per_axis[d];
            if idx[d] < shape[d] {
                break;
            }
            o -= per_axis[d] * shape[d];
            idx[d] = 0;
        }
    }
    (out_shape, map)
}

impl Tape {
    /// Arithmetic mean over `axes`; the reduced axes are removed from the shape.
    pub fn reduce_mean(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        self.reduce(x, axes, true)
    }

    /// Sum over `axes`; the reduced axes are removed from the shape.
    pub fn reduce_sum(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        self.reduce(x, axes, false)
    }

    /// Sum of every element, as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let axes: Vec<usize> = (0..self.shape(x).len()).collect();
        self.reduce(x, &axes, false)
    }

    fn reduce(&mut self, x: Var, axes: &[usize], mean: bool) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if self.value(x).is_empty() {
            return Err(Error::Domain("reduction of an empty tensor".into()));
        }
        let mut axes: Vec<usize> = axes.to_vec();
        axes.sort_unstable();
        axes.dedup();
        if let Some(&bad) = axes.iter().find(|&&a| a >= shape.len()) {
            return Err(Error::Dimension(format!(
                "axis {bad} out of range for {shape:?}"
            )));
        }
        if axes.is_empty() {
            let out = self.value(x).clone();
            return self.push(out, Op::Reshape { x }, &[x]);
        }
        let (out_shape, map) = reduction_map(&shape, &axes);
        let count: usize = axes.iter().map(|&a| shape[a]).product();
        let mut out = vec![0.0; out_shape.iter().product::<usize>().max(1)];
        for (v, &o) in self.value(x).data().iter().zip(&map) {
            out[o] += v;
        }
        if mean {
            let inv = 1.0 / count as f64;
            out.iter_mut().for_each(|v| *v *= inv);
        }
        let out = Tensor::new(out_shape, out)?;
        self.push(out, Op::Reduce { x, axes, mean }, &[x])
    }

    /// Cosine similarity `a·b / (max(|a|, eps) max(|b|, eps))`, clamped to `[-1, 1]`.
    ///
    /// Shapes: `a: [D]`, `b: [D]` gives a scalar; `a: [B, D]`, `b: [B, D, M]`
    /// compares `a[i]` with every column `b[i, :, m]` and gives `[B, M]`.
    pub fn cosine_similarity(&mut self, a: Var, b: Var, eps: f64) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (batch, dim, cols, out_shape) = match (sa.len(), sb.len()) {
            (1, 1) if sa == sb => (1, sa[0], 1, vec![]),
            (2, 3) if sa[0] == sb[0] && sa[1] == sb[1] => (sa[0], sa[1], sb[2], vec![sb[0], sb[2]]),
            _ => {
                return Err(Error::Dimension(format!(
                    "cosine_similarity: incompatible shapes {sa:?} and {sb:?}"
                )))
            }
        };
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; batch * cols];
        for i in 0..batch {
            let ai = &av[i * dim..][..dim];
            let na2 = ai.iter().map(|v| v * v).sum::<f64>();
            let bi = &bv[i * dim * cols..][..dim * cols];
            for m in 0..cols {
                let (mut dot, mut nb2) = (0.0, 0.0);
                for d in 0..dim {
                    let y = bi[d * cols + m];
                    dot += ai[d] * y;
                    nb2 += y * y;
                }
                out[i * cols + m] = cosine_from_parts(dot, na2, nb2, eps);
            }
        }
        let out = Tensor::new(out_shape, out)?;
        self.push(out, Op::Cosine { a, b, eps }, &[a, b])
    }
}

/// Cosine similarity of two plain vectors, same conventions as the tape op.
pub fn cosine_similarity(a: &[f64], b: &[f64], eps: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na2 = a.iter().map(|v| v * v).sum::<f64>();
    let nb2 = b.iter().map(|v| v * v).sum::<f64>();
    cosine_from_parts(dot, na2, nb2, eps)
}

/// One square root over the product of squared norms, so that `b = a` and
/// power-of-two multiples of `a` give exactly ±1.
fn cosine_from_parts(dot: f64, na2: f64, nb2: f64, eps: f64) -> f64 {
    let floor = eps * eps;
    (dot / (na2.max(floor) * nb2.max(floor)).sqrt()).clamp(-1.0, 1.0)
}

pub(crate) fn backward(
    tape: &Tape,
    x: Var,
    axes: &[usize],
    mean: bool,
    gout: &[f64],
    g: &mut GradBuffers,
) {
    if !tape.requires_grad(x) {
        return;
    }
    let shape = tape.shape(x);
    let (_, map) = reduction_map(shape, axes);
    let scale = if mean {
        1.0 / axes.iter().map(|&a| shape[a]).product::<usize>() as f64
    } else {
        1.0
    };
    for (d, &o) in g.slot(x).iter_mut().zip(&map) {
        *d += scale * gout[o];
    }
}

pub(crate) fn cosine_backward(
    tape: &Tape,
    a: Var,
    b: Var,
    eps: f64,
    gout: &[f64],
    g: &mut GradBuffers,
) {
    let (sa, sb) = (tape.shape(a), tape.shape(b));
    let (batch, dim, cols) = if sa.len() == 1 {
        (1, sa[0], 1)
    } else {
        (sb[0], sb[1], sb[2])
    };
    let (av, bv) = (tape.value(a).data(), tape.value(b).data());
    let mut ga = tape.requires_grad(a).then(|| vec![0.0; av.len()]);
    let mut gb = tape.requires_grad(b).then(|| vec![0.0; bv.len()]);
    for i in 0..batch {
        let ai = &av[i * dim..][..dim];
        let raw_na = ai.iter().map(|v| v * v).sum::<f64>().sqrt();
        let na = raw_na.max(eps);
        let bi = &bv[i * dim * cols..][..dim * cols];
        for m in 0..cols {
            let go = gout[i * cols + m];
            if go == 0.0 {
                continue;
            }
            let (mut dot, mut nb2) = (0.0, 0.0);
            for d in 0..dim {
                let y = bi[d * cols + m];
                dot += ai[d] * y;
                nb2 += y * y;
            }
            let raw_nb = nb2.sqrt();
            let nb = raw_nb.max(eps);
            let cos = dot / (na * nb);
            // norms under the floor are constants
            let ka = if raw_na >= eps { cos / (na * na) } else { 0.0 };
            let kb = if raw_nb >= eps { cos / (nb * nb) } else { 0.0 };
            let inv = 1.0 / (na * nb);
            if let Some(ga) = ga.as_mut() {
                for d in 0..dim {
                    ga[i * dim + d] += go * (bi[d * cols + m] * inv - ai[d] * ka);
                }
            }
            if let Some(gb) = gb.as_mut() {
                for d in 0..dim {
                    let idx = i * dim * cols + d * cols + m;
                    gb[idx] += go * (ai[d] * inv - bv[idx] * kb);
                }
            }
        }
    }
    if let Some(ga) = ga {
        crate::tensor::axpy_slice(g.slot(a), 1.0, &ga);
    }
    if let Some(gb) = gb {
        crate::tensor::axpy_slice(g.slot(b), 1.0, &gb);
    }
}
