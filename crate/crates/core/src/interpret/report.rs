use std::path::Path;

use ndarray::{Array2, ArrayView2};

use super::{CorrelationReport, ImportanceReport, PcaModel};
use crate::classifier::LrModel;
use crate::error::{Error, Result};
use crate::features::FeatureVocabulary;

fn finish<W: std::io::Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// `group,baseline_accuracy,mean_accuracy_loss,sd,iterations`
pub fn write_importance_csv(path: &Path, reports: &[ImportanceReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in reports {
        w.serialize(r)?;
    }
    finish(w, path)
}

/// `group,performer,r,p,p_corrected,valid_permutations`
pub fn write_correlations_csv(path: &Path, reports: &[CorrelationReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["group", "performer", "r", "p", "p_corrected", "valid_permutations"])?;
    for rep in reports {
        for p in &rep.performers {
            w.write_record([
                rep.group.clone(),
                p.performer.clone(),
                p.r.to_string(),
                p.p.to_string(),
                p.p_corrected.to_string(),
                p.valid_permutations.to_string(),
            ])?;
        }
    }
    finish(w, path)
}

/// One row per (component, feature) with the component's explained variance.
pub fn write_pca_components_csv(path: &Path, model: &PcaModel, feature_names: &[String], n_components: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["component", "explained_variance", "feature", "loading"])?;
    let ratio = model.explained_variance_ratio();
    for c in 0..n_components.min(model.components.nrows()) {
        for (j, name) in feature_names.iter().enumerate() {
            w.write_record([
                c.to_string(),
                ratio[c].to_string(),
                name.clone(),
                model.components[[c, j]].to_string(),
            ])?;
        }
    }
    finish(w, path)
}

/// `entity,pc0,pc1,...`
pub fn write_pca_projection_csv(path: &Path, names: &[String], coords: ArrayView2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["entity".to_string()];
    header.extend((0..coords.ncols()).map(|c| format!("pc{c}")));
    w.write_record(&header)?;
    for (name, row) in names.iter().zip(coords.rows()) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    finish(w, path)
}

/// The `n` highest and lowest weighted features per class, with bootstrap
/// standard deviations when supplied.
pub fn write_weights_topbottom_csv(
    path: &Path,
    model: &LrModel,
    vocab: &FeatureVocabulary,
    sd: Option<&Array2<f64>>,
    n: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["performer", "end", "rank", "feature_kind", "feature", "weight", "sd"])?;
    for (c, label) in model.class_labels.iter().enumerate() {
        let row = model.weights.row(c);
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        let take = n.min(order.len());
        let top = order[..take].iter().map(|&j| ("top", j));
        let bottom = order.iter().rev().take(take).map(|&j| ("bottom", j));
        for (rank, (end, j)) in top.enumerate().chain(bottom.enumerate().map(|(r, x)| (r, x))) {
            let f = vocab.feature(j);
            w.write_record([
                label.clone(),
                end.to_string(),
                rank.to_string(),
                f.kind.to_string(),
                f.interval_string(),
                row[j].to_string(),
                sd.map(|s| s[[c, j]].to_string()).unwrap_or_default(),
            ])?;
        }
    }
    finish(w, path)
}
