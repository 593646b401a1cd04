//! Analytic gradients against central differences on random inputs.

mod common;

use common::{rng, tiny_input, uniform};
use migate::autodiff::{
    check_gradients, ActivationKind, DropoutKey, Mode, Padding, RunningStats, Tape, Var,
};
use migate::model::{GateHooks, IntegratedModel, ModelConfig};
use migate::{Result, Tensor};
use rand::Rng;

const SEEDS: u64 = 20;
const STEP: f64 = 1e-5;
const SMOOTH: f64 = 1e-6;
const COMPOSITE: f64 = 1e-4;

/// `sum(y ⊙ r)` with fixed random weights, so no coordinate cancels out.
fn weighted_sum(t: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let shape = t.shape(y).to_vec();
    let w = t.constant(uniform(&shape, &mut rng(seed ^ 0xabcd)));
    let p = t.mul(y, w)?;
    t.sum(p)
}

fn check<F>(name: &str, tol: f64, x0: impl Fn(u64) -> Tensor, f: F)
where
    F: Fn(&mut Tape, Var, u64) -> Result<Var>,
{
    for seed in 0..SEEDS {
        let x = x0(seed);
        let err = check_gradients(|t, v| f(t, v, seed), &x, STEP).unwrap();
        assert!(err < tol, "{name} seed {seed}: relative error {err:e}");
    }
}

#[test]
pub fn smooth_activations() {
    for kind in [ActivationKind::Sigmoid, ActivationKind::Softplus] {
        check(
            &format!("{kind:?}"),
            SMOOTH,
            |s| uniform(&[3, 4], &mut rng(s)),
            |t, x, s| {
                let y = t.activation(kind, x)?;
                weighted_sum(t, y, s)
            },
        );
    }
}

#[test]
pub fn kinked_and_clamped_activations() {
    check(
        "elu",
        COMPOSITE,
        |s| uniform(&[3, 4], &mut rng(s)),
        |t, x, s| {
            let y = t.elu(x)?;
            weighted_sum(t, y, s)
        },
    );
    check(
        "square",
        SMOOTH,
        |s| uniform(&[3, 4], &mut rng(s)),
        |t, x, s| {
            let y = t.activation(ActivationKind::Square, x)?;
            weighted_sum(t, y, s)
        },
    );
    // strictly above the clamp floor
    check(
        "log",
        COMPOSITE,
        |s| uniform(&[3, 4], &mut rng(s)).map(|v| 1.5 + v),
        |t, x, s| {
            let y = t.activation(ActivationKind::LogClamped, x)?;
            weighted_sum(t, y, s)
        },
    );
}

#[test]
pub fn dense_in_every_argument() {
    for arg in 0..3 {
        check(
            "dense",
            SMOOTH,
            |s| match arg {
                0 => uniform(&[4, 5], &mut rng(s)),
                1 => uniform(&[5, 3], &mut rng(s)),
                _ => uniform(&[3], &mut rng(s)),
            },
            |t, v, s| {
                let mut r = rng(s + 100);
                let x = if arg == 0 {
                    v
                } else {
                    t.constant(uniform(&[4, 5], &mut r))
                };
                let w = if arg == 1 {
                    v
                } else {
                    t.constant(uniform(&[5, 3], &mut r))
                };
                let b = if arg == 2 {
                    v
                } else {
                    t.constant(uniform(&[3], &mut r))
                };
                let y = t.dense(x, w, b)?;
                weighted_sum(t, y, s)
            },
        );
    }
}

#[test]
pub fn matmul_plain_and_batched() {
    for batched in [false, true] {
        for left in [true, false] {
            let bshape: &[usize] = if batched { &[2, 4, 3] } else { &[4, 3] };
            check(
                "matmul",
                SMOOTH,
                |s| {
                    if left {
                        uniform(&[5, 4], &mut rng(s))
                    } else {
                        uniform(bshape, &mut rng(s))
                    }
                },
                |t, v, s| {
                    let mut r = rng(s + 7);
                    let a = if left {
                        v
                    } else {
                        t.constant(uniform(&[5, 4], &mut r))
                    };
                    let b = if left {
                        t.constant(uniform(bshape, &mut r))
                    } else {
                        v
                    };
                    let y = t.matmul(a, b)?;
                    weighted_sum(t, y, s)
                },
            );
        }
    }
}

#[test]
pub fn elementwise_reduce_and_shape_ops() {
    check(
        "mul-broadcast",
        SMOOTH,
        |s| uniform(&[2, 3, 4], &mut rng(s)),
        |t, x, s| {
            let g = t.constant(uniform(&[2, 1, 4], &mut rng(s + 1)));
            let y = t.mul(x, g)?;
            let z = t.add(y, x)?;
            weighted_sum(t, z, s)
        },
    );
    check(
        "self-product",
        SMOOTH,
        |s| uniform(&[6], &mut rng(s)),
        |t, x, _| {
            let y = t.mul(x, x)?;
            t.sum(y)
        },
    );
    check(
        "reduce_mean",
        SMOOTH,
        |s| uniform(&[2, 3, 4], &mut rng(s)),
        |t, x, s| {
            let y = t.reduce_mean(x, &[0, 2])?;
            weighted_sum(t, y, s)
        },
    );
    check(
        "affine+powf",
        SMOOTH,
        |s| uniform(&[5], &mut rng(s)).map(|v| 2.0 + v),
        |t, x, s| {
            let y = t.affine(x, 0.7, 0.1)?;
            let y = t.powf(y, -0.5)?;
            weighted_sum(t, y, s)
        },
    );
    check(
        "transpose/reshape",
        SMOOTH,
        |s| uniform(&[3, 4], &mut rng(s)),
        |t, x, s| {
            let y = t.transpose(x)?;
            let y = t.reshape(y, &[2, 6])?;
            weighted_sum(t, y, s)
        },
    );
    check(
        "concat/slice",
        SMOOTH,
        |s| uniform(&[2, 3], &mut rng(s)),
        |t, x, s| {
            let other = t.constant(uniform(&[2, 2], &mut rng(s + 3)));
            let c = t.concat_last(&[x, other, x])?;
            let y = t.slice_last(c, 1, 5)?;
            weighted_sum(t, y, s)
        },
    );
    check(
        "linear_resample",
        SMOOTH,
        |s| uniform(&[2, 7], &mut rng(s)),
        |t, x, s| {
            let y = t.linear_resample(x, 19)?;
            weighted_sum(t, y, s)
        },
    );
}

#[test]
pub fn cosine_and_cross_entropy() {
    for arg in 0..2 {
        check(
            "cosine",
            SMOOTH,
            |s| uniform(if arg == 0 { &[2, 5] } else { &[2, 5, 6] }, &mut rng(s)),
            |t, v, s| {
                let mut r = rng(s + 11);
                let a = if arg == 0 {
                    v
                } else {
                    t.constant(uniform(&[2, 5], &mut r))
                };
                let b = if arg == 1 {
                    v
                } else {
                    t.constant(uniform(&[2, 5, 6], &mut r))
                };
                let y = t.cosine_similarity(a, b, 1e-8)?;
                weighted_sum(t, y, s)
            },
        );
    }
    check(
        "softmax_ce",
        SMOOTH,
        |s| uniform(&[5, 4], &mut rng(s)).map(|v| 3.0 * v),
        |t, x, s| {
            let labels: Vec<usize> = (0..5).map(|i| (i + s as usize) % 4).collect();
            t.softmax_cross_entropy(x, &labels)
        },
    );
}

#[test]
pub fn conv_pool_dropout() {
    for padding in [Padding::Valid, Padding::Same] {
        for arg in 0..2 {
            check(
                "conv2d",
                SMOOTH,
                |s| {
                    if arg == 0 {
                        uniform(&[2, 2, 3, 6], &mut rng(s))
                    } else {
                        uniform(&[3, 2, 2, 3], &mut rng(s))
                    }
                },
                |t, v, s| {
                    let mut r = rng(s + 5);
                    let x = if arg == 0 {
                        v
                    } else {
                        t.constant(uniform(&[2, 2, 3, 6], &mut r))
                    };
                    let k = if arg == 1 {
                        v
                    } else {
                        t.constant(uniform(&[3, 2, 2, 3], &mut r))
                    };
                    let y = t.conv2d(x, k, padding)?;
                    weighted_sum(t, y, s)
                },
            );
        }
    }
    check(
        "conv2d_cat",
        SMOOTH,
        |s| uniform(&[2, 1, 2, 5], &mut rng(s)),
        |t, x, s| {
            let other = t.constant(uniform(&[2, 1, 2, 8], &mut rng(s + 1)));
            let k = t.constant(uniform(&[3, 1, 1, 2], &mut rng(s + 2)));
            let y = t.conv2d_cat(&[x, other, x], k, Padding::Valid)?;
            weighted_sum(t, y, s)
        },
    );
    check(
        "avg_pool",
        SMOOTH,
        |s| uniform(&[2, 3, 17], &mut rng(s)),
        |t, x, s| {
            let y = t.avg_pool(x, 5, 3)?;
            weighted_sum(t, y, s)
        },
    );
    check(
        "dropout",
        SMOOTH,
        |s| uniform(&[4, 6], &mut rng(s)),
        |t, x, s| {
            let y = t.dropout(x, 0.3, Mode::Train, DropoutKey::new(s, 1, 2, 3))?;
            weighted_sum(t, y, s)
        },
    );
}

#[test]
pub fn batch_norm_input_and_affine() {
    for arg in 0..3 {
        check(
            "batch_norm",
            SMOOTH,
            |s| match arg {
                0 => uniform(&[3, 2, 2, 4], &mut rng(s)),
                _ => uniform(&[2], &mut rng(s)),
            },
            |t, v, s| {
                let mut r = rng(s + 9);
                let x = if arg == 0 {
                    v
                } else {
                    t.constant(uniform(&[3, 2, 2, 4], &mut r))
                };
                let g = if arg == 1 {
                    v
                } else {
                    t.constant(uniform(&[2], &mut r))
                };
                let b = if arg == 2 {
                    v
                } else {
                    t.constant(uniform(&[2], &mut r))
                };
                let mut stats = RunningStats::new(2);
                let y = t.batch_norm(x, g, b, &mut stats, Mode::Train)?;
                weighted_sum(t, y, s)
            },
        );
    }
}

#[test]
pub fn mix_nodes_both_arguments() {
    for arg in 0..2 {
        check(
            "mix_nodes",
            SMOOTH,
            |s| {
                if arg == 0 {
                    uniform(&[3, 3], &mut rng(s))
                } else {
                    uniform(&[2, 2, 3, 7], &mut rng(s))
                }
            },
            |t, v, s| {
                let mut r = rng(s + 21);
                let m = if arg == 0 {
                    v
                } else {
                    t.constant(uniform(&[3, 3], &mut r))
                };
                let x = if arg == 1 {
                    v
                } else {
                    t.constant(uniform(&[2, 2, 3, 7], &mut r))
                };
                let y = t.mix_nodes(m, x, 2, 4)?;
                weighted_sum(t, y, s)
            },
        );
    }
}

#[test]
pub fn graph_attention_through_raw_adjacency() {
    check(
        "attention(W)",
        COMPOSITE,
        |s| uniform(&[4, 4], &mut rng(s)),
        |t, w, s| {
            let sm = migate::model::attention_matrix(t, w)?;
            let x = t.constant(uniform(&[1, 2, 4, 3], &mut rng(s + 4)));
            let y = migate::model::graph_attention(t, sm, x, 0, 3)?;
            weighted_sum(t, y, s)
        },
    );
}

/// Relative-error check of every trainable tensor of the integrated model
/// on a 2-trial batch, against central differences of the training loss.
fn model_gradient_error(use_gate: bool, seed: u64) -> f64 {
    let input = tiny_input();
    let mut model = IntegratedModel::new(ModelConfig::default(), input, use_gate, seed).unwrap();
    let mut r = rng(seed + 1000);
    let rest = uniform(&[2, input.n_channels, input.rest_len], &mut r);
    let mi = uniform(&[2, input.n_channels, input.mi_len], &mut r);
    let labels = [seed as usize % 4, (seed as usize + 1) % 4];
    let key = DropoutKey::new(seed, 0, 0, 0);

    let loss_of = |m: &mut IntegratedModel| -> (f64, Vec<Option<Tensor>>) {
        let mut t = Tape::new();
        let vars = m.bind(&mut t);
        let (rv, mv) = (t.constant(rest.clone()), t.constant(mi.clone()));
        let out = m
            .forward(
                &mut t,
                &vars,
                rv,
                mv,
                Mode::Train,
                key,
                &GateHooks::default(),
            )
            .unwrap();
        let loss = t.softmax_cross_entropy(out.logits, &labels).unwrap();
        t.backward(loss).unwrap();
        let grads = IntegratedModel::var_list(&vars)
            .into_iter()
            .map(|v| t.grad(v).cloned())
            .collect();
        (t.value(loss).item(), grads)
    };

    let (_, grads) = loss_of(&mut model);
    let n_params = model.trainable_params_mut().len();
    let mut worst = 0.0f64;
    let mut pick = rng(seed + 2000);
    for p in 0..n_params {
        let len = model.trainable_params_mut()[p].len();
        let coords: Vec<usize> = if len <= 12 {
            (0..len).collect()
        } else {
            (0..12).map(|_| pick.random_range(0..len)).collect()
        };
        for i in coords {
            let orig = model.trainable_params_mut()[p].data()[i];
            model.trainable_params_mut()[p].data_mut()[i] = orig + STEP;
            let (up, _) = loss_of(&mut model);
            model.trainable_params_mut()[p].data_mut()[i] = orig - STEP;
            let (down, _) = loss_of(&mut model);
            model.trainable_params_mut()[p].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let analytic = grads[p].as_ref().map_or(0.0, |g| g.data()[i]);
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(1.0));
        }
    }
    worst
}

#[test]
pub fn full_model_with_gate() {
    for seed in 0..SEEDS {
        let err = model_gradient_error(true, seed);
        assert!(err < COMPOSITE, "seed {seed}: {err:e}");
    }
}

#[test]
pub fn full_model_without_gate() {
    for seed in 0..SEEDS {
        let err = model_gradient_error(false, seed);
        assert!(err < COMPOSITE, "seed {seed}: {err:e}");
    }
}
