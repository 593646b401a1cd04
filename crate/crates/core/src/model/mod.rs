//! The gate block, the downstream classifier and the model that joins them.

mod classifier;
mod gate;
mod io;

pub use classifier::{
    classifier_features, classifier_forward, ClassifierConfig, ClassifierParams, ClassifierVars,
};
pub use gate::{
    apply_gate, apply_gate_on_tape, attention_from_adjacency, attention_matrix,
    attention_matrix_of, effective_adjacency, gate_block_forward, graph_attention,
    normalized_adjacency, normalized_adjacency_of, similarity_gate, spatial_block, temporal_block,
    CenterMode, GateConfig, GateHooks, GateOutput, GateParams, GateTrace, GateVars,
};
pub use io::{ModelHeader, ModelMeta, ParamEntry, MODEL_MAGIC};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    DropoutKey, Mode, RunningStats, Tape, Var, DEFAULT_BN_EPS, DEFAULT_BN_MOMENTUM,
};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Dropout layer ids within one [`DropoutKey`].
pub const GATE_DROPOUT_LAYER: u64 = 0;
pub const CLASSIFIER_DROPOUT_LAYER: u64 = 1;

/// Uniform in `±1/√fan_in`.
pub(crate) fn init_uniform(shape: Vec<usize>, fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub gate: GateConfig,
    pub classifier: ClassifierConfig,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            gate: GateConfig::default(),
            classifier: ClassifierConfig::default(),
            bn_eps: DEFAULT_BN_EPS,
            bn_momentum: DEFAULT_BN_MOMENTUM,
        }
    }
}

/// Input geometry the model is built for.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputShape {
    pub n_channels: usize,
    pub fs: f64,
    pub rest_len: usize,
    pub mi_len: usize,
}

impl InputShape {
    /// Rest 2 s and MI 4 s at `fs`.
    pub fn standard(n_channels: usize, fs: f64) -> Self {
        InputShape {
            n_channels,
            fs,
            rest_len: (crate::signal::REST_SECONDS * fs).round() as usize,
            mi_len: (crate::signal::MI_SECONDS * fs).round() as usize,
        }
    }
}

/// Gate plus classifier. With `use_gate == false` the classifier sees the raw
/// MI window and the gate parameters are left untouched.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegratedModel {
    pub config: ModelConfig,
    pub input: InputShape,
    pub use_gate: bool,
    pub gate: GateParams,
    pub classifier: ClassifierParams,
}

#[derive(Clone, Copy, Debug)]
pub struct ModelVars {
    pub gate: Option<GateVars>,
    pub classifier: ClassifierVars,
}

/// Result of [`IntegratedModel::forward`].
#[derive(Clone, Copy, Debug)]
pub struct ForwardTrace {
    pub logits: Var,
    pub gate: Option<GateTrace>,
}

impl IntegratedModel {
    /// Gate and classifier draw from separate streams of `seed`, so both
    /// variants start from the same classifier weights.
    pub fn new(config: ModelConfig, input: InputShape, use_gate: bool, seed: u64) -> Result<Self> {
        if input.n_channels == 0 || input.rest_len == 0 || input.mi_len == 0 || !(input.fs > 0.0) {
            return Err(Error::Config(format!("invalid input geometry {input:?}")));
        }
        if !(config.bn_eps > 0.0) || !(0.0..=1.0).contains(&config.bn_momentum) {
            return Err(Error::Config(
                "bn_eps must be positive and bn_momentum in [0, 1]".into(),
            ));
        }
        let mut gate_rng = ChaCha8Rng::seed_from_u64(seed);
        gate_rng.set_stream(1);
        let mut cls_rng = ChaCha8Rng::seed_from_u64(seed);
        cls_rng.set_stream(2);
        let mut gate = GateParams::new(
            config.gate.clone(),
            input.n_channels,
            input.fs,
            &mut gate_rng,
        )?;
        let kt = gate.kernel_len();
        if input.rest_len < kt || input.mi_len < kt {
            return Err(Error::Length(format!(
                "temporal kernel {kt} longer than the input windows"
            )));
        }
        let mut classifier = ClassifierParams::new(
            config.classifier.clone(),
            input.n_channels,
            input.mi_len,
            &mut cls_rng,
        )?;
        for bn in [
            &mut gate.temporal_bn,
            &mut gate.spatial_bn,
            &mut classifier.bn,
        ] {
            bn.eps = config.bn_eps;
            bn.momentum = config.bn_momentum;
        }
        Ok(IntegratedModel {
            config,
            input,
            use_gate,
            gate,
            classifier,
        })
    }

    /// Every stored parameter, gate first, with dotted names.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self
            .gate
            .named_params()
            .into_iter()
            .map(|(n, t)| (format!("gate.{n}"), t))
            .collect();
        out.extend(
            self.classifier
                .named_params()
                .into_iter()
                .map(|(n, t)| (format!("classifier.{n}"), t)),
        );
        out
    }

    /// Parameters the optimizer updates, in [`Self::bind`] order.
    pub fn trainable_params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = if self.use_gate {
            self.gate.params_mut()
        } else {
            Vec::new()
        };
        out.extend(self.classifier.params_mut());
        out
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        let gate: usize = self.gate.named_params().iter().map(|(_, t)| t.len()).sum();
        let cls: usize = self
            .classifier
            .named_params()
            .iter()
            .map(|(_, t)| t.len())
            .sum();
        cls + if self.use_gate { gate } else { 0 }
    }

    pub(crate) fn running_stats(&self) -> [(&'static str, &RunningStats); 3] {
        [
            ("gate.temporal_bn", &self.gate.temporal_bn),
            ("gate.spatial_bn", &self.gate.spatial_bn),
            ("classifier.bn", &self.classifier.bn),
        ]
    }

    pub(crate) fn running_stats_mut(&mut self) -> [&mut RunningStats; 3] {
        [
            &mut self.gate.temporal_bn,
            &mut self.gate.spatial_bn,
            &mut self.classifier.bn,
        ]
    }

    /// Records the trainable parameters on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            gate: self.use_gate.then(|| self.gate.bind(tape)),
            classifier: self.classifier.bind(tape),
        }
    }

    /// Trainable handles in the order of [`Self::trainable_params_mut`].
    pub fn var_list(vars: &ModelVars) -> Vec<Var> {
        let mut out = Vec::new();
        if let Some(g) = vars.gate {
            out.extend([
                g.temporal,
                g.temporal_gamma,
                g.temporal_beta,
                g.adjacency,
                g.spatial,
                g.spatial_gamma,
                g.spatial_beta,
            ]);
        }
        let c = vars.classifier;
        out.extend([c.temporal, c.spatial, c.gamma, c.beta, c.dense_w, c.dense_b]);
        out
    }

    fn check_inputs(&self, tape: &Tape, rest: Var, mi: Var) -> Result<usize> {
        let (rs, ms) = (tape.shape(rest), tape.shape(mi));
        let i = &self.input;
        if rs.len() != 3 || ms.len() != 3 || rs[0] != ms[0] {
            return Err(Error::Dimension(format!(
                "model inputs {rs:?} and {ms:?} do not pair up"
            )));
        }
        if rs[1..] != [i.n_channels, i.rest_len] || ms[1..] != [i.n_channels, i.mi_len] {
            return Err(Error::Dimension(format!(
                "model built for rest [{}, {}] and MI [{}, {}], got {rs:?} and {ms:?}",
                i.n_channels, i.rest_len, i.n_channels, i.mi_len
            )));
        }
        Ok(rs[0])
    }

    /// The MI tensor the classifier sees, `[B, 1, C, T_mi]`.
    fn classifier_input(
        &mut self,
        tape: &mut Tape,
        vars: &ModelVars,
        rest: Var,
        mi: Var,
        mode: Mode,
        key: DropoutKey,
        hooks: &GateHooks,
    ) -> Result<(Var, Option<GateTrace>)> {
        let b = self.check_inputs(tape, rest, mi)?;
        let (c, t) = (self.input.n_channels, self.input.mi_len);
        let (x, trace) = match (self.use_gate, vars.gate) {
            (true, Some(gv)) => {
                let key = key.with_layer(GATE_DROPOUT_LAYER);
                let tr = gate_block_forward(tape, rest, mi, &mut self.gate, &gv, mode, key, hooks)?;
                (tr.gated, Some(tr))
            }
            (true, None) => return Err(Error::Contract("gate parameters were not bound".into())),
            (false, _) => (mi, None),
        };
        Ok((tape.reshape(x, &[b, 1, c, t])?, trace))
    }

    /// Logits for `rest: [B, C, T_rest]`, `mi: [B, C, T_mi]`.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &mut self,
        tape: &mut Tape,
        vars: &ModelVars,
        rest: Var,
        mi: Var,
        mode: Mode,
        key: DropoutKey,
        hooks: &GateHooks,
    ) -> Result<ForwardTrace> {
        let (x, gate) = self.classifier_input(tape, vars, rest, mi, mode, key, hooks)?;
        let key = key.with_layer(CLASSIFIER_DROPOUT_LAYER);
        let logits =
            classifier_forward(tape, x, &mut self.classifier, &vars.classifier, mode, key)?;
        Ok(ForwardTrace { logits, gate })
    }

    /// Eval-mode logits on plain tensors.
    pub fn predict_logits(&mut self, rest: &Tensor, mi: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let (r, m) = (tape.constant(rest.clone()), tape.constant(mi.clone()));
        let out = self.forward(
            &mut tape,
            &vars,
            r,
            m,
            Mode::Eval,
            DropoutKey::default(),
            &GateHooks::default(),
        )?;
        Ok(tape.value(out.logits).clone())
    }

    /// Eval-mode penultimate classifier activations `[B, features]`.
    pub fn extract_features(&mut self, rest: &Tensor, mi: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let (r, m) = (tape.constant(rest.clone()), tape.constant(mi.clone()));
        let hooks = GateHooks::default();
        let (x, _) = self.classifier_input(
            &mut tape,
            &vars,
            r,
            m,
            Mode::Eval,
            DropoutKey::default(),
            &hooks,
        )?;
        let f = classifier_features(
            &mut tape,
            x,
            &mut self.classifier,
            &vars.classifier,
            Mode::Eval,
        )?;
        Ok(tape.value(f).clone())
    }

    /// Eval-mode gate output; `None` when the model has no gate.
    pub fn gate_output(&mut self, rest: &Tensor, mi: &Tensor) -> Result<Option<GateOutput>> {
        if !self.use_gate {
            return Ok(None);
        }
        self.gate
            .forward(rest, mi, Mode::Eval, DropoutKey::default())
            .map(Some)
    }
}
