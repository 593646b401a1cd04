//! Embeds classifier features of synthetic trials with t-SNE and scores how
//! well the classes separate in the plane.

use migate::data::{synth_generate, SynthConfig};
use migate::model::{IntegratedModel, ModelConfig};
use migate::plot::{emit_plot, PlotKind, Table};
use migate::signal::PreprocessConfig;
use migate::train::{batch_tensors, fit, TrainConfig};
use migate::tsne::{tsne_project, TsneConfig};

fn main() -> migate::Result<()> {
    let synth = SynthConfig {
        n_subjects: 1,
        trials_per_class: 16,
        ..SynthConfig::default()
    };
    let data = PreprocessConfig::default().apply(&synth_generate(&synth)?)?;
    let mut model = IntegratedModel::new(ModelConfig::default(), data.input_shape(), false, 0)?;
    fit(
        &mut model,
        &data,
        &TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        },
    )?;

    let all: Vec<usize> = (0..data.n_trials()).collect();
    let (rest, mi) = batch_tensors(&data, &all)?;
    let features = model.extract_features(&rest, &mi)?;
    println!("features {:?}", features.shape());

    let res = tsne_project(
        &features,
        &TsneConfig {
            perplexity: 15.0,
            ..TsneConfig::default()
        },
    )?;
    println!(
        "KL after exaggeration {:.4}, final {:.4}",
        res.kl_trace[250],
        res.kl_trace.last().unwrap()
    );

    // ratio of mean between-class to mean within-class distance
    let p = res.embedding.data();
    let dist = |i: usize, j: usize| {
        ((p[2 * i] - p[2 * j]).powi(2) + (p[2 * i + 1] - p[2 * j + 1]).powi(2)).sqrt()
    };
    let (mut within, mut between, mut nw, mut nb) = (0.0, 0.0, 0, 0);
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            if data.labels[i] == data.labels[j] {
                within += dist(i, j);
                nw += 1;
            } else {
                between += dist(i, j);
                nb += 1;
            }
        }
    }
    println!(
        "between/within distance ratio {:.3}",
        (between / nb as f64) / (within / nw as f64)
    );

    let mut table = Table::new(&["x", "y", "label"]);
    for (xy, &l) in p.chunks_exact(2).zip(&data.labels) {
        table.push(vec![xy[0], xy[1], l as f64]);
    }
    let dir = std::env::temp_dir().join("migate-examples");
    std::fs::create_dir_all(&dir)?;
    let (svg, _) = emit_plot(PlotKind::Scatter, &table, &dir.join("tsne"))?;
    println!("wrote {}", svg.display());
    Ok(())
}
