//! The `migate` command line: `synth`, `filter`, `train`, `eval`, `loso`,
//! `gate` and `tsne`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data, format or
//! IO error, 3 numeric failure. Errors go to standard error as
//! `error[CODE]: message`.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{config_help, config_keys, LosoOptions, Paths, RunConfig};

use crate::data::{splice_rest_probe, synth_generate, TrialSet};
use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::model::{IntegratedModel, ModelMeta};
use crate::plot::{emit_plot, PlotKind, Table};
use crate::signal::{design_butterworth_bandpass, Prepared};
use crate::train::{evaluate, fit, loso_evaluate, LosoConfig};
use crate::tsne::tsne_project;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "migate",
    version,
    about = "Rest-similarity gating for motor-imagery EEG: synthesis, filtering, training and evaluation",
    color = clap::ColorChoice::Never,
    after_help = config_help()
)]
struct Cli {
    /// TOML config file; every key is optional.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set train.epochs=60`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for synth.seed, train.seed and tsne.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct GateChoice {
    /// Only the variant with the gate.
    #[arg(long, conflicts_with = "no_gate")]
    with_gate: bool,
    /// Only the variant without the gate.
    #[arg(long)]
    no_gate: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic trial set.
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Splice rest-statistics probes of this length (seconds) into every MI window.
        #[arg(long, value_name = "SECONDS")]
        probe_seconds: Option<f64>,
    },
    /// Design the bandpass and write its sections and magnitude response.
    Filter {
        /// Output stem: `<stem>.csv`, `<stem>.svg` and `<stem>.sections.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        points: usize,
        /// Sampling rate; defaults to synth.fs.
        #[arg(long)]
        fs: Option<f64>,
    },
    /// Train one model, optionally holding a subject out.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        holdout_subject: Option<u32>,
        #[command(flatten)]
        gate: GateChoice,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Also write the per-epoch learning rate and loss as `<stem>.csv`/`.svg`.
        #[arg(long, value_name = "STEM")]
        history: Option<PathBuf>,
    },
    /// Accuracy of a saved model.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Subject to score; defaults to the model's held-out subject, else all trials.
        #[arg(long)]
        subject: Option<u32>,
    },
    /// Leave-one-subject-out comparison with and without the gate.
    Loso {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Also write the report here; it is always printed.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        gate: GateChoice,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Gate trace of one trial as CSV and SVG.
    Gate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        trial: usize,
        /// Output stem.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// t-SNE of the classifier features.
    Tsne {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output stem.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Restrict to one subject.
        #[arg(long)]
        subject: Option<u32>,
    },
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Runs the command line with `argv` (program name first) and returns the
/// exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                eprint!("{e}");
                return EXIT_USAGE;
            }
            let msg = e.to_string();
            let msg = msg.strip_prefix("error: ").unwrap_or(&msg);
            eprintln!("error[U001]: {}", msg.trim_end());
            return EXIT_USAGE;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            exit_code(&e)
        }
    }
}

fn require(p: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    p.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("missing --{what} (or paths.{what} in the config)")))
}

fn load_prepared(path: &Path, cfg: &RunConfig) -> Result<Prepared> {
    cfg.preprocess.apply(&TrialSet::load(path)?)
}

fn out_line(s: &str) {
    let mut o = std::io::stdout().lock();
    let _ = writeln!(o, "{s}");
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.set)?;
    if let Some(s) = cli.seed {
        cfg.synth.seed = s;
        cfg.train.seed = s;
        cfg.tsne.seed = s;
    }
    let paths = cfg.paths.clone();
    match cli.cmd {
        Cmd::Synth { out, probe_seconds } => {
            let out = require(out, &paths.data, "out")?;
            let mut ts = synth_generate(&cfg.synth)?;
            if let Some(p) = probe_seconds {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.synth.seed);
                rng.set_stream(u64::MAX);
                ts = splice_rest_probe(&ts, &cfg.synth, p, &mut rng)?;
            }
            ts.save(&out)?;
            out_line(&format!(
                "wrote {} trials x {} channels x {} samples to {}",
                ts.n_trials(),
                ts.n_channels,
                ts.n_samples,
                out.display()
            ));
        }
        Cmd::Filter { out, points, fs } => {
            let out = require(out, &paths.out, "out")?;
            if points == 0 {
                return Err(Error::Config("--points must be positive".into()));
            }
            let p = &cfg.preprocess;
            let fs = fs.unwrap_or(cfg.synth.fs);
            let f = design_butterworth_bandpass(p.filter_order, p.f_lo, p.f_hi, fs)?;
            let mut sections = Table::new(&["b0", "b1", "b2", "a1", "a2"]);
            for s in &f.sections {
                sections.push(vec![s.b0, s.b1, s.b2, s.a1, s.a2]);
            }
            let mut resp = Table::new(&["freq_hz", "gain_db"]);
            // open interval: the response is exactly zero at DC and Nyquist
            for i in 0..points {
                let hz = (i + 1) as f64 * fs / 2.0 / (points + 1) as f64;
                resp.push(vec![hz, f.gain_db(hz)]);
            }
            let sections_path = out.with_extension("sections.csv");
            let csv = sections.to_csv()?;
            emit_plot(PlotKind::FilterResponse, &resp, &out)?;
            write_atomic(&sections_path, &csv)?;
            out_line(&format!(
                "{} sections, order {}",
                f.sections.len(),
                f.order()
            ));
        }
        Cmd::Train {
            data,
            holdout_subject,
            gate,
            out,
            epochs,
            history,
        } => {
            let data = require(data, &paths.data, "data")?;
            let out = require(out, &paths.model, "out")?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let prepared = load_prepared(&data, &cfg)?;
            let train = match holdout_subject {
                Some(s) => {
                    if !prepared.subject_ids.contains(&s) {
                        return Err(Error::Domain(format!("subject {s} not in the data")));
                    }
                    prepared.select(&prepared.indices_where(|x| x != s))
                }
                None => prepared,
            };
            let use_gate = !gate.no_gate;
            let mut model = IntegratedModel::new(
                cfg.model.clone(),
                train.input_shape(),
                use_gate,
                cfg.train.seed,
            )?;
            let report = fit(&mut model, &train, &cfg.train)?;
            let meta = ModelMeta {
                train_config: serde_json::json!({
                    "train": cfg.train,
                    "preprocess": cfg.preprocess,
                }),
                holdout_subject,
            };
            if let Some(stem) = history {
                let mut t = Table::new(&["epoch", "lr", "loss"]);
                for (i, (lr, loss)) in report
                    .lr_history
                    .iter()
                    .zip(&report.loss_history)
                    .enumerate()
                {
                    t.push(vec![i as f64, *lr, *loss]);
                }
                emit_plot(PlotKind::LrSchedule, &t, &stem)?;
            }
            model.save(&out, &meta)?;
            out_line(&format!(
                "trained {} epochs, final loss {:.6}, {} parameters",
                report.loss_history.len(),
                report.loss_history.last().copied().unwrap_or(f64::NAN),
                model.param_count()
            ));
        }
        Cmd::Eval {
            data,
            model,
            subject,
        } => {
            let data = require(data, &paths.data, "data")?;
            let model_path = require(model, &paths.model, "model")?;
            let (mut model, header) = IntegratedModel::load(&model_path)?;
            let prepared = load_prepared(&data, &cfg)?;
            let subset = match subject.or(header.meta.holdout_subject) {
                Some(s) => prepared.select(&prepared.indices_where(|x| x == s)),
                None => prepared,
            };
            if subset.n_trials() == 0 {
                return Err(Error::Domain("no trials to evaluate".into()));
            }
            let acc = evaluate(&mut model, &subset)?;
            out_line(&format!(
                "trials = {}\naccuracy = {acc:.6}",
                subset.n_trials()
            ));
        }
        Cmd::Loso {
            data,
            report,
            gate,
            jobs,
            epochs,
        } => {
            let data = require(data, &paths.data, "data")?;
            let report_path = report.or(paths.report);
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let (mut with_gate, mut without_gate) = (cfg.loso.with_gate, cfg.loso.without_gate);
            if gate.with_gate {
                (with_gate, without_gate) = (true, false);
            }
            if gate.no_gate {
                (with_gate, without_gate) = (false, true);
            }
            let lc = LosoConfig {
                train: cfg.train.clone(),
                model: cfg.model.clone(),
                with_gate,
                without_gate,
                jobs: jobs.unwrap_or(cfg.loso.jobs),
            };
            let prepared = load_prepared(&data, &cfg)?;
            let report = loso_evaluate(&prepared, &lc)?;
            let text = report.to_toml();
            if let Some(p) = report_path {
                write_atomic(&p, text.as_bytes())?;
            }
            out_line(&text);
        }
        Cmd::Gate {
            data,
            model,
            trial,
            out,
        } => {
            let data = require(data, &paths.data, "data")?;
            let model_path = require(model, &paths.model, "model")?;
            let out = require(out, &paths.out, "out")?;
            let (mut model, _) = IntegratedModel::load(&model_path)?;
            let prepared = load_prepared(&data, &cfg)?;
            if trial >= prepared.n_trials() {
                return Err(Error::Domain(format!(
                    "trial {trial} out of range for {} trials",
                    prepared.n_trials()
                )));
            }
            let (rest, mi) = crate::train::batch_tensors(&prepared, &[trial])?;
            let g = model
                .gate_output(&rest, &mi)?
                .ok_or_else(|| Error::Contract("model was trained without the gate".into()))?;
            let mut t = Table::new(&["sample_index", "gate_value", "cosine"]);
            for (i, (v, c)) in g.gate.data().iter().zip(g.cosine.data()).enumerate() {
                t.push(vec![i as f64, *v, *c]);
            }
            emit_plot(PlotKind::GateTrace, &t, &out)?;
            out_line(&format!("gate length {}", g.gate.len()));
        }
        Cmd::Tsne {
            data,
            model,
            out,
            subject,
        } => {
            let data = require(data, &paths.data, "data")?;
            let model_path = require(model, &paths.model, "model")?;
            let out = require(out, &paths.out, "out")?;
            let (mut model, _) = IntegratedModel::load(&model_path)?;
            let prepared = load_prepared(&data, &cfg)?;
            let subset = match subject {
                Some(s) => prepared.select(&prepared.indices_where(|x| x == s)),
                None => prepared,
            };
            let idx: Vec<usize> = (0..subset.n_trials()).collect();
            let mut rows = Vec::new();
            let mut width = 0;
            for chunk in idx.chunks(cfg.train.batch_size.max(1)) {
                let (rest, mi) = crate::train::batch_tensors(&subset, chunk)?;
                let f = model.extract_features(&rest, &mi)?;
                width = f.shape()[1];
                rows.extend_from_slice(f.data());
            }
            let features = crate::Tensor::new(vec![subset.n_trials(), width], rows)?;
            let res = tsne_project(&features, &cfg.tsne)?;
            let mut t = Table::new(&["x", "y", "label"]);
            for (p, &l) in res.embedding.data().chunks_exact(2).zip(&subset.labels) {
                t.push(vec![p[0], p[1], l as f64]);
            }
            emit_plot(PlotKind::Scatter, &t, &out)?;
            out_line(&format!(
                "{} points, final KL {:.6}",
                subset.n_trials(),
                res.kl_trace.last().copied().unwrap_or(f64::NAN)
            ));
        }
    }
    Ok(())
}
