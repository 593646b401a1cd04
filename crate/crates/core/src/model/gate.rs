//! The rest-similarity gate: temporal block → graph attention (rest branch
//! only) → spatial block → cosine similarity to the rest center → a [0, 1]
//! weight per MI time step that multiplies the raw MI signal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init_uniform;
use crate::autodiff::{DropoutKey, Mode, Padding, RunningStats, Tape, Var, DEFAULT_COSINE_EPS};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Where the rest center vector and the MI feature vectors are compared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterMode {
    /// After the spatial block: `D = n_kernels` features per time step.
    #[default]
    PostSpatial,
    /// Straight after graph attention: `n_kernels × C` features per time step.
    PreSpatial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub n_kernels: usize,
    /// Temporal kernel length; `None` means `round(fs / 32)`.
    pub temporal_len: Option<usize>,
    pub dropout: f64,
    pub center: CenterMode,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            n_kernels: 16,
            temporal_len: None,
            dropout: 0.25,
            center: CenterMode::PostSpatial,
        }
    }
}

impl GateConfig {
    pub fn kernel_len(&self, fs: f64) -> usize {
        self.temporal_len
            .unwrap_or_else(|| (fs / 32.0).round().max(1.0) as usize)
    }
}

/// Learnable state of the gate.
#[derive(Clone, Debug, PartialEq)]
pub struct GateParams {
    pub config: GateConfig,
    pub n_channels: usize,
    /// `[K, 1, 1, k_t]`.
    pub temporal: Tensor,
    pub temporal_gamma: Tensor,
    pub temporal_beta: Tensor,
    pub temporal_bn: RunningStats,
    /// Raw adjacency `W: [C, C]`.
    pub adjacency: Tensor,
    /// `[K, K, C, 1]`.
    pub spatial: Tensor,
    pub spatial_gamma: Tensor,
    pub spatial_beta: Tensor,
    pub spatial_bn: RunningStats,
}

/// Tape handles for the trainable tensors of [`GateParams`].
#[derive(Clone, Copy, Debug)]
pub struct GateVars {
    pub temporal: Var,
    pub temporal_gamma: Var,
    pub temporal_beta: Var,
    pub adjacency: Var,
    pub spatial: Var,
    pub spatial_gamma: Var,
    pub spatial_beta: Var,
}

/// Test hooks that replace parts of the forward pass.
#[derive(Clone, Debug, Default)]
pub struct GateHooks {
    /// Use this effective adjacency `A` instead of `softplus` of `W`.
    pub adjacency: Option<Tensor>,
    /// Replace every gate value by this constant.
    pub gate: Option<f64>,
}

/// Tape handles for the intermediate results of one gate pass.
#[derive(Clone, Copy, Debug)]
pub struct GateTrace {
    /// `[B, M]`.
    pub gate: Var,
    /// `[B, M]`.
    pub cosine: Var,
    /// `[B, D]`.
    pub center: Var,
    /// `[B, T_mi]`.
    pub upsampled: Var,
    /// `[B, C, T_mi]`.
    pub gated: Var,
}

/// Plain-tensor result of [`GateParams::forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct GateOutput {
    pub gate: Tensor,
    pub upsampled_gate: Tensor,
    pub gated_mi: Tensor,
    pub center: Tensor,
    pub cosine: Tensor,
}

impl GateParams {
    /// Kernels uniform in `±1/√fan_in`, `W = 0`, batch-norm affine 1/0.
    pub fn new(config: GateConfig, n_channels: usize, fs: f64, rng: &mut impl Rng) -> Result<Self> {
        let k = config.n_kernels;
        let kt = config.kernel_len(fs);
        if k == 0 || n_channels == 0 || kt == 0 {
            return Err(Error::Config(
                "gate needs kernels, channels and a positive kernel length".into(),
            ));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::Config(format!(
                "gate dropout {} outside [0, 1)",
                config.dropout
            )));
        }
        Ok(GateParams {
            temporal: init_uniform(vec![k, 1, 1, kt], kt, rng),
            temporal_gamma: Tensor::full(vec![k], 1.0),
            temporal_beta: Tensor::zeros(vec![k]),
            temporal_bn: RunningStats::new(k),
            adjacency: Tensor::zeros(vec![n_channels, n_channels]),
            spatial: init_uniform(vec![k, k, n_channels, 1], k * n_channels, rng),
            spatial_gamma: Tensor::full(vec![k], 1.0),
            spatial_beta: Tensor::zeros(vec![k]),
            spatial_bn: RunningStats::new(k),
            config,
            n_channels,
        })
    }

    pub fn kernel_len(&self) -> usize {
        self.temporal.shape()[3]
    }

    pub fn named_params(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("temporal", &self.temporal),
            ("temporal_gamma", &self.temporal_gamma),
            ("temporal_beta", &self.temporal_beta),
            ("adjacency", &self.adjacency),
            ("spatial", &self.spatial),
            ("spatial_gamma", &self.spatial_gamma),
            ("spatial_beta", &self.spatial_beta),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.temporal,
            &mut self.temporal_gamma,
            &mut self.temporal_beta,
            &mut self.adjacency,
            &mut self.spatial,
            &mut self.spatial_gamma,
            &mut self.spatial_beta,
        ]
    }

    pub fn bind(&self, tape: &mut Tape) -> GateVars {
        GateVars {
            temporal: tape.param(self.temporal.clone()),
            temporal_gamma: tape.param(self.temporal_gamma.clone()),
            temporal_beta: tape.param(self.temporal_beta.clone()),
            adjacency: tape.param(self.adjacency.clone()),
            spatial: tape.param(self.spatial.clone()),
            spatial_gamma: tape.param(self.spatial_gamma.clone()),
            spatial_beta: tape.param(self.spatial_beta.clone()),
        }
    }

    /// Runs the gate on plain tensors `rest: [B, C, T_rest]`, `mi: [B, C, T_mi]`.
    pub fn forward(
        &mut self,
        rest: &Tensor,
        mi: &Tensor,
        mode: Mode,
        key: DropoutKey,
    ) -> Result<GateOutput> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let r = tape.constant(rest.clone());
        let m = tape.constant(mi.clone());
        let trace = gate_block_forward(
            &mut tape,
            r,
            m,
            self,
            &vars,
            mode,
            key,
            &GateHooks::default(),
        )?;
        Ok(GateOutput {
            gate: tape.value(trace.gate).clone(),
            upsampled_gate: tape.value(trace.upsampled).clone(),
            gated_mi: tape.value(trace.gated).clone(),
            center: tape.value(trace.center).clone(),
            cosine: tape.value(trace.cosine).clone(),
        })
    }
}

/// Valid temporal convolution of every input with the shared kernels, then
/// one batch norm over all inputs jointly. Inputs are `[B, 1, C, T_i]`; the
/// output holds the branches side by side along time.
pub fn temporal_block(
    tape: &mut Tape,
    xs: &[Var],
    vars: &GateVars,
    bn: &mut RunningStats,
    mode: Mode,
) -> Result<Var> {
    let y = tape.conv2d_cat(xs, vars.temporal, Padding::Valid)?;
    tape.batch_norm(y, vars.temporal_gamma, vars.temporal_beta, bn, mode)
}

/// `A = softplus((W + Wᵀ)/2)` with a zero diagonal.
pub fn effective_adjacency(tape: &mut Tape, w: Var) -> Result<Var> {
    let c = tape.shape(w)[0];
    let wt = tape.transpose(w)?;
    let sum = tape.add(w, wt)?;
    let sym = tape.affine(sum, 0.5, 0.0)?;
    let a = tape.softplus(sym)?;
    let off = tape.constant(Tensor::from_fn(vec![c, c], |i| {
        if i / c == i % c {
            0.0
        } else {
            1.0
        }
    }));
    tape.mul(a, off)
}

/// `S = σ(D̃ Ã D̃)` with `Ã = A + I` and `D̃ = diag(rowsum(Ã))^(-1/2)`.
pub fn attention_from_adjacency(tape: &mut Tape, a: Var) -> Result<Var> {
    let n = normalized_adjacency(tape, a)?;
    tape.sigmoid(n)
}

/// `D̃ Ã D̃` for a nonnegative symmetric `A`.
pub fn normalized_adjacency(tape: &mut Tape, a: Var) -> Result<Var> {
    let shape = tape.shape(a).to_vec();
    if shape.len() != 2 || shape[0] != shape[1] || shape[0] == 0 {
        return Err(Error::Dimension(format!(
            "adjacency must be square, got {shape:?}"
        )));
    }
    let c = shape[0];
    let eye = tape.constant(Tensor::from_fn(vec![c, c], |i| {
        if i / c == i % c {
            1.0
        } else {
            0.0
        }
    }));
    let a_tilde = tape.add(a, eye)?;
    let deg = tape.reduce_sum(a_tilde, &[1])?;
    let d = tape.powf(deg, -0.5)?;
    let d_col = tape.reshape(d, &[c, 1])?;
    let d_row = tape.reshape(d, &[1, c])?;
    let left = tape.mul(a_tilde, d_col)?;
    tape.mul(left, d_row)
}

/// Attention matrix derived from the raw adjacency `W`.
pub fn attention_matrix(tape: &mut Tape, w: Var) -> Result<Var> {
    let a = effective_adjacency(tape, w)?;
    attention_from_adjacency(tape, a)
}

/// Plain-tensor versions of the graph construction, for inspection.
pub fn attention_matrix_of(w: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let w = tape.constant(w.clone());
    let s = attention_matrix(&mut tape, w)?;
    Ok(tape.value(s).clone())
}

pub fn normalized_adjacency_of(a: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let a = tape.constant(a.clone());
    let n = normalized_adjacency(&mut tape, a)?;
    Ok(tape.value(n).clone())
}

/// `X' = S·X` per batch item, feature map and time step, over the time
/// columns `start .. start + len` of `x: [B, F, C, T]`.
pub fn graph_attention(tape: &mut Tape, s: Var, x: Var, start: usize, len: usize) -> Result<Var> {
    tape.mix_nodes(s, x, start, len)
}

/// `C×1` convolution collapsing the electrodes, batch norm, ELU, dropout.
pub fn spatial_block(
    tape: &mut Tape,
    x: Var,
    vars: &GateVars,
    bn: &mut RunningStats,
    p: f64,
    mode: Mode,
    key: DropoutKey,
) -> Result<Var> {
    let c = tape.shape(vars.spatial)[2];
    let h = tape.shape(x).get(2).copied().unwrap_or(0);
    if h != c {
        return Err(Error::Dimension(format!(
            "spatial block expects {c} electrodes, got {h}"
        )));
    }
    let y = tape.conv2d(x, vars.spatial, Padding::Valid)?;
    let y = tape.batch_norm(y, vars.spatial_gamma, vars.spatial_beta, bn, mode)?;
    let y = tape.elu(y)?;
    tape.dropout(y, p, mode, key)
}

/// Center = time mean of `rest: [B, D, R]`; `gate_t = (1 - cos(center, mi_t)) / 2`
/// for `mi: [B, D, M]`. Returns `(gate, cosine, center)`.
pub fn similarity_gate(tape: &mut Tape, rest: Var, mi: Var) -> Result<(Var, Var, Var)> {
    let center = tape.reduce_mean(rest, &[2])?;
    let cos = tape.cosine_similarity(center, mi, DEFAULT_COSINE_EPS)?;
    let gate = tape.affine(cos, -0.5, 0.5)?;
    Ok((gate, cos, center))
}

/// Resamples `gate: [B, M]` to the MI length and multiplies every channel of
/// `raw: [B, C, T_mi]`. Returns `(upsampled, gated)`.
pub fn apply_gate_on_tape(tape: &mut Tape, raw: Var, gate: Var) -> Result<(Var, Var)> {
    let rs = tape.shape(raw).to_vec();
    let gs = tape.shape(gate).to_vec();
    if rs.len() != 3 || gs.len() != 2 || rs[0] != gs[0] {
        return Err(Error::Dimension(format!(
            "apply_gate: raw {rs:?} vs gate {gs:?}"
        )));
    }
    let up = tape.linear_resample(gate, rs[2])?;
    let up3 = tape.reshape(up, &[rs[0], 1, rs[2]])?;
    let gated = tape.mul(raw, up3)?;
    Ok((up, gated))
}

/// Plain-tensor gate application with the range check.
pub fn apply_gate(raw: &Tensor, gate: &Tensor) -> Result<Tensor> {
    if let Some(&bad) = gate.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Contract(format!("gate value {bad} outside [0, 1]")));
    }
    let mut tape = Tape::new();
    let r = tape.constant(raw.clone());
    let g = tape.constant(gate.clone());
    let (_, gated) = apply_gate_on_tape(&mut tape, r, g)?;
    Ok(tape.value(gated).clone())
}

/// The full gate on `rest: [B, C, T_rest]` and `mi: [B, C, T_mi]`.
#[allow(clippy::too_many_arguments)]
pub fn gate_block_forward(
    tape: &mut Tape,
    rest: Var,
    mi: Var,
    params: &mut GateParams,
    vars: &GateVars,
    mode: Mode,
    key: DropoutKey,
    hooks: &GateHooks,
) -> Result<GateTrace> {
    let (rs, ms) = (tape.shape(rest).to_vec(), tape.shape(mi).to_vec());
    if rs.len() != 3 || ms.len() != 3 || rs[0] != ms[0] || rs[1] != ms[1] {
        return Err(Error::Dimension(format!(
            "gate inputs {rs:?} and {ms:?} do not pair up"
        )));
    }
    let (b, c) = (rs[0], rs[1]);
    if c != params.n_channels {
        return Err(Error::Dimension(format!(
            "gate built for {} channels, got {c}",
            params.n_channels
        )));
    }
    let kt = params.kernel_len();
    if rs[2] < kt || ms[2] < kt {
        return Err(Error::Length(format!(
            "temporal kernel {kt} longer than input ({} rest, {} MI samples)",
            rs[2], ms[2]
        )));
    }
    let (r_len, m_len) = (rs[2] - kt + 1, ms[2] - kt + 1);
    let k = params.config.n_kernels;

    let rest4 = tape.reshape(rest, &[b, 1, c, rs[2]])?;
    let mi4 = tape.reshape(mi, &[b, 1, c, ms[2]])?;
    let t = temporal_block(tape, &[rest4, mi4], vars, &mut params.temporal_bn, mode)?;

    let s = match &hooks.adjacency {
        Some(a) => {
            let a = tape.constant(a.clone());
            attention_from_adjacency(tape, a)?
        }
        None => attention_matrix(tape, vars.adjacency)?,
    };
    let g = graph_attention(tape, s, t, 0, r_len)?;

    let (rest_feats, mi_feats) = match params.config.center {
        CenterMode::PostSpatial => {
            let p = params.config.dropout;
            let f = spatial_block(tape, g, vars, &mut params.spatial_bn, p, mode, key)?;
            let f = tape.reshape(f, &[b, k, r_len + m_len])?;
            (
                tape.slice_last(f, 0, r_len)?,
                tape.slice_last(f, r_len, m_len)?,
            )
        }
        CenterMode::PreSpatial => {
            let f = tape.reshape(g, &[b, k * c, r_len + m_len])?;
            (
                tape.slice_last(f, 0, r_len)?,
                tape.slice_last(f, r_len, m_len)?,
            )
        }
    };
    let (mut gate, cosine, center) = similarity_gate(tape, rest_feats, mi_feats)?;
    if let Some(v) = hooks.gate {
        gate = tape.constant(Tensor::full(vec![b, m_len], v));
    }
    let (upsampled, gated) = apply_gate_on_tape(tape, mi, gate)?;
    Ok(GateTrace {
        gate,
        cosine,
        center,
        upsampled,
        gated,
    })
}
