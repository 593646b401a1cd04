//! One PASS/FAIL line per acceptance criterion.
//!
//! Each criterion calls the tests of the matching integration-test file,
//! which are included here as modules, and checks its runtime budget. Those
//! tests are also registered in this binary and run once more on their own.
//! The end-to-end gate criterion runs at reduced scale by default; set
//! `MIGATE_ACCEPTANCE_FULL=1` for the full protocol, and
//! `MIGATE_ACCEPTANCE_STRICT=1` to fail the test when any line fails.
//! Lines go straight to stdout so they show without `--nocapture`.

#[path = "filter.rs"]
mod filter;
#[path = "gradients.rs"]
mod gradients;
#[path = "models.rs"]
mod models;
#[path = "training.rs"]
mod training;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use migate::data::{splice_rest_probe, synth_generate, SynthConfig};
use migate::signal::PreprocessConfig;
use migate::train::{loso_folds, probe_attenuation, LosoConfig, LosoReport, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Check = (&'static str, fn());

/// Runs `checks` in order; the first panic fails the criterion.
fn suite(checks: &[Check], budget: Duration) -> Result<String, String> {
    let start = Instant::now();
    for (name, f) in checks {
        if let Err(e) = catch_unwind(AssertUnwindSafe(f)) {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            return Err(format!("{name}: {msg}"));
        }
    }
    let took = start.elapsed();
    if took > budget {
        return Err(format!(
            "{} checks took {took:.1?}, budget {budget:?}",
            checks.len()
        ));
    }
    Ok(format!("{} checks in {took:.1?}", checks.len()))
}

fn gradient_suite() -> Result<String, String> {
    use gradients::*;
    suite(
        &[
            ("smooth activations", smooth_activations),
            ("kinked activations", kinked_and_clamped_activations),
            ("dense", dense_in_every_argument),
            ("matmul", matmul_plain_and_batched),
            ("elementwise/reduce/shape", elementwise_reduce_and_shape_ops),
            ("cosine and cross-entropy", cosine_and_cross_entropy),
            ("conv/pool/dropout", conv_pool_dropout),
            ("batch norm", batch_norm_input_and_affine),
            ("mix_nodes", mix_nodes_both_arguments),
            ("graph attention", graph_attention_through_raw_adjacency),
            ("model with gate", full_model_with_gate),
            ("model without gate", full_model_without_gate),
        ],
        Duration::from_secs(120),
    )
}

fn graph_invariants() -> Result<String, String> {
    use graph::*;
    suite(
        &[
            ("1000 random W", random_adjacencies_keep_spectrum_and_range),
            ("zero adjacency", zero_adjacency_gives_sigmoid_of_identity),
            ("complete graph", complete_graph_gives_uniform_quarter),
        ],
        Duration::from_secs(30),
    )
}

fn filter_design() -> Result<String, String> {
    use filter::*;
    suite(
        &[
            ("corners, mid-band, DC", corners_midband_and_dc),
            ("poles", poles_strictly_inside_unit_circle),
        ],
        Duration::from_secs(5),
    )
}

fn gate_semantics() -> Result<String, String> {
    use gate::*;
    suite(
        &[
            ("exact cases", exact_parallel_antiparallel_orthogonal),
            ("range", gate_in_unit_interval_and_decreasing_in_cosine),
            ("all-ones gate", apply_gate_cases),
            ("identity gate", identity_gate_matches_bypass),
            ("paper geometry", paper_geometry_shape_contract),
        ],
        Duration::from_secs(10),
    )
}

fn optimizer() -> Result<String, String> {
    use training::*;
    suite(
        &[
            ("closed form", adamw_single_step_closed_form),
            ("reference Adam", adamw_without_decay_matches_reference_adam),
            ("cosine endpoints", cosine_schedule_endpoints_and_monotone),
        ],
        Duration::from_secs(10),
    )
}

fn metrics() -> Result<String, String> {
    suite(
        &[("hand case", training::metrics_hand_case)],
        Duration::from_secs(1),
    )
}

fn tsne_checks() -> Result<String, String> {
    use tsne::*;
    suite(
        &[
            (
                "affinities",
                affinity_rows_are_distributions_at_the_target_perplexity,
            ),
            ("clusters", separated_clusters_stay_separated),
        ],
        Duration::from_secs(60),
    )
}

fn reproducibility() -> Result<String, String> {
    suite(
        &[
            ("pipeline bytes", cli::pipeline_is_byte_reproducible),
            ("trial container", data::trialset_round_trip_is_bit_exact),
            (
                "container corruption",
                data::corrupted_containers_get_distinct_codes,
            ),
            ("model files", models::model_files_round_trip_bit_exact),
            (
                "damaged models",
                models::damaged_model_files_are_format_errors,
            ),
            (
                "exit codes",
                cli::corrupted_inputs_exit_two_with_format_codes,
            ),
        ],
        Duration::from_secs(120),
    )
}

/// Scale of the end-to-end comparison.
struct Protocol {
    label: &'static str,
    synth: SynthConfig,
    epochs: usize,
    seeds: Vec<u64>,
}

impl Protocol {
    fn from_env() -> Protocol {
        if std::env::var("MIGATE_ACCEPTANCE_FULL").is_ok_and(|v| v == "1") {
            Protocol {
                label: "full",
                synth: SynthConfig::default(),
                epochs: 60,
                seeds: vec![0, 1, 2],
            }
        } else {
            Protocol {
                label: "reduced: 3 subjects, 12 trials/class, 30 epochs, 1 seed",
                synth: SynthConfig {
                    n_subjects: 3,
                    trials_per_class: 12,
                    ..SynthConfig::default()
                },
                epochs: 30,
                seeds: vec![0],
            }
        }
    }
}

fn end_to_end() -> Result<String, String> {
    let p = Protocol::from_env();
    let start = Instant::now();
    let pre = PreprocessConfig::default();
    let mut margins = Vec::new();
    let (mut lower, mut total) = (0usize, 0usize);
    let mut detail = Vec::new();
    for &seed in &p.seeds {
        let synth = SynthConfig {
            seed,
            ..p.synth.clone()
        };
        let ts = synth_generate(&synth).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let probed = splice_rest_probe(&ts, &synth, 1.0, &mut rng).map_err(|e| e.to_string())?;
        let data = pre.apply(&ts).map_err(|e| e.to_string())?;
        let pdata = pre.apply(&probed).map_err(|e| e.to_string())?;
        let cfg = LosoConfig {
            train: TrainConfig {
                epochs: p.epochs,
                seed,
                ..TrainConfig::default()
            },
            ..LosoConfig::default()
        };
        let folds = loso_folds(&data, &cfg).map_err(|e| e.to_string())?;
        let report = LosoReport::from_folds(&folds);
        let (a, b) = (report.without_gate.unwrap(), report.with_gate.unwrap());
        margins.push(b.avg - a.avg);
        detail.push(format!("seed {seed}: w/o {:.2}% w/ {:.2}%", a.avg, b.avg));
        if seed == p.seeds[0] {
            for fold in folds.into_iter().filter(|f| f.use_gate) {
                let held = pdata.select(&pdata.indices_where(|s| s == fold.holdout));
                let mut model = fold.model;
                let r = probe_attenuation(&mut model, &held, 64).map_err(|e| e.to_string())?;
                lower += r
                    .masked_mean
                    .iter()
                    .zip(&r.unmasked_mean)
                    .filter(|(m, u)| m < u)
                    .count();
                total += r.masked_mean.len();
            }
        }
    }
    let margin = margins.iter().sum::<f64>() / margins.len() as f64;
    let fraction = lower as f64 / total as f64;
    let margin_ok = margin >= 2.0;
    let probe_ok = fraction >= 0.9;
    let verdict = |ok: bool| if ok { "met" } else { "not met" };
    let summary = format!(
        "[{}] gate margin {margin:+.2} pp, needs >= +2: {}; probe attenuation {lower}/{total} = {:.1}%, needs >= 90%: {} ({}; {:.0?})",
        p.label,
        verdict(margin_ok),
        100.0 * fraction,
        verdict(probe_ok),
        detail.join(", "),
        start.elapsed(),
    );
    if margin_ok || probe_ok {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn line(s: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{s}");
    let _ = out.flush();
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Result<String, String>); 9] = [
        ("gradient suite", gradient_suite),
        ("graph invariants", graph_invariants),
        ("filter design", filter_design),
        ("gate semantics", gate_semantics),
        ("synthetic end-to-end effect", end_to_end),
        ("optimizer and scheduler", optimizer),
        ("metrics arithmetic", metrics),
        ("t-SNE", tsne_checks),
        ("reproducibility and formats", reproducibility),
    ];
    // start on a fresh line after libtest's "test acceptance ..."
    line("");
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => line(&format!("PASS {} {name}: {detail}", i + 1)),
            Err(detail) => {
                failed += 1;
                line(&format!("FAIL {} {name}: {detail}", i + 1));
            }
        }
    }
    line(&format!(
        "acceptance: {} of {} criteria pass",
        criteria.len() - failed,
        criteria.len()
    ));
    if std::env::var("MIGATE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        assert_eq!(failed, 0, "{failed} acceptance criteria failed");
    }
}
