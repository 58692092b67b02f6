use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use stylus_core::classifier::{fit_indexed, random_search, top_k_accuracy, write_trial_log, LrConfig, SearchSpace};
use stylus_core::{Error, Result};

use crate::run::{write_json, RunContext};
use crate::workspace::{class_indices, manifest_records, model_for, subset_rows, FeatureTable, Subset, MODEL_FILE};

/// Sorted performer names of `rows` and each row's index among them.
fn labels_of(records: &[stylus_core::corpus::ManifestRecord], rows: &[usize]) -> (Vec<String>, Vec<usize>) {
    let names: Vec<String> = rows.iter().map(|&i| records[i].performer.clone()).collect();
    stylus_core::classifier::encode_labels(&names)
}

pub fn train(ctx: &mut RunContext) -> Result<()> {
    let cfg: LrConfig = ctx.params()?;
    let records = manifest_records(ctx)?;
    let table = FeatureTable::load(ctx, &records)?;
    let rows = subset_rows(ctx, &records, Subset::Train)?;
    let (classes, y) = labels_of(&records, &rows);
    let model = fit_indexed(table.rows(&rows).view(), &y, classes, &cfg)?;
    if let Some(t) = model.termination.filter(|t| !t.converged) {
        ctx.note(format!(
            "solver stopped after {} iterations with gradient norm {:.3e}",
            t.iterations, t.gradient_norm
        ));
    }
    model.save(&ctx.artifact(MODEL_FILE), &table.vocab.content_hash())?;
    let probs = model.predict_proba(table.rows(&rows).view())?;
    println!(
        "{} classes, {} features, training top-1 {:.4}",
        model.n_classes(),
        model.n_features(),
        top_k_accuracy(probs.view(), &y, 1)
    );
    Ok(())
}

pub fn search(ctx: &mut RunContext) -> Result<()> {
    let mut space: SearchSpace = ctx.params()?;
    space.seed = ctx.seed();
    ctx.set_param("seed", space.seed)?;
    let records = manifest_records(ctx)?;
    let table = FeatureTable::load(ctx, &records)?;
    let train_rows = subset_rows(ctx, &records, Subset::Train)?;
    let val_rows = subset_rows(ctx, &records, Subset::Validation)?;
    let (classes, y_train) = labels_of(&records, &train_rows);
    let y_val: Vec<usize> = val_rows
        .iter()
        .map(|&i| {
            let p = &records[i].performer;
            classes
                .binary_search(p)
                .map_err(|_| Error::validation(format!("validation performer {p:?} has no training recordings")))
        })
        .collect::<Result<_>>()?;
    let result = random_search(
        table.rows(&train_rows).view(),
        &y_train,
        table.rows(&val_rows).view(),
        &y_val,
        &classes,
        &space,
    )?;
    ctx.write_table("trials", |path| write_trial_log(path, &result.trials))?;
    result.model.save(&ctx.artifact(MODEL_FILE), &table.vocab.content_hash())?;
    let best = &result.trials[result.best];
    write_json(&ctx.artifact("best.json"), best)?;
    println!(
        "best of {} trials: #{} C={} class_weight={} penalty={} validation top-1 {:.4}",
        result.trials.len(),
        best.trial,
        best.config.c,
        best.config.class_weight,
        best.config.penalty,
        best.val_top1
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EvaluateParams {
    /// Defaults to the model written by `train`.
    model: Option<PathBuf>,
    split: Subset,
}

impl Default for EvaluateParams {
    fn default() -> Self {
        EvaluateParams {
            model: None,
            split: Subset::Test,
        }
    }
}

#[derive(Serialize)]
struct Prediction<'a> {
    recording_id: &'a str,
    performer: &'a str,
    predicted: &'a str,
    probability: f64,
    rank_of_true: usize,
}

pub fn evaluate(ctx: &mut RunContext) -> Result<()> {
    let p: EvaluateParams = ctx.params()?;
    let records = manifest_records(ctx)?;
    let table = FeatureTable::load(ctx, &records)?;
    let model = model_for(ctx, p.model.as_deref(), &table.vocab)?;
    let rows = subset_rows(ctx, &records, p.split)?;
    let y = class_indices(&model, &records, &rows)?;
    let probs = model.predict_proba(table.rows(&rows).view())?;
    let top1 = top_k_accuracy(probs.view(), &y, 1);
    let top5 = top_k_accuracy(probs.view(), &y, 5);
    ctx.write_table("metrics", |path| {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["metric", "value", "n"])?;
        for (name, v) in [("top1", top1), ("top5", top5)] {
            w.write_record([name.to_string(), v.to_string(), rows.len().to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    })?;
    ctx.write_table("predictions", |path| {
        let mut w = csv::Writer::from_path(path)?;
        for (r, (&i, &t)) in rows.iter().zip(&y).enumerate() {
            let row = probs.row(r);
            let best = stylus_core::classifier::argmax_rows(probs.slice(ndarray::s![r..r + 1, ..]))[0];
            let target = row[t];
            let rank = row
                .iter()
                .enumerate()
                .filter(|(j, v)| **v > target || (**v == target && *j < t))
                .count();
            w.serialize(Prediction {
                recording_id: &records[i].recording_id,
                performer: &records[i].performer,
                predicted: &model.class_labels[best],
                probability: row[best],
                rank_of_true: rank + 1,
            })?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    })?;
    println!("{} recordings: top-1 {top1:.4}, top-5 {top5:.4}", rows.len());
    Ok(())
}
