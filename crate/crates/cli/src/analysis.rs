use std::path::PathBuf;

use ndarray::Axis;
use serde::{Deserialize, Serialize};
use stylus_core::features::FeatureKind;
use stylus_core::interpret::{
    bootstrap_weight_sd, dataset_weight_correlation, pca_fit, performer_projection, permutation_importance,
    subset_importance, write_correlations_csv, write_importance_csv, write_pca_components_csv,
    write_pca_projection_csv, write_weights_topbottom_csv, CorrelationConfig,
};
use stylus_core::seed;
use stylus_core::{Error, Result};

use crate::run::RunContext;
use crate::workspace::{class_indices, manifest_records, model_for, subset_rows, FeatureTable, Subset};

const GROUPS: [FeatureKind; 2] = [FeatureKind::Melody, FeatureKind::Harmony];

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ImportanceParams {
    model: Option<PathBuf>,
    split: Subset,
    iterations: usize,
    /// Sizes of the random feature subsets permuted within each group.
    subset_k: Vec<usize>,
}

impl Default for ImportanceParams {
    fn default() -> Self {
        ImportanceParams {
            model: None,
            split: Subset::Test,
            iterations: 1000,
            subset_k: vec![2000],
        }
    }
}

pub fn importance(ctx: &mut RunContext) -> Result<()> {
    let p: ImportanceParams = ctx.params()?;
    let records = manifest_records(ctx)?;
    let table = FeatureTable::load(ctx, &records)?;
    let model = model_for(ctx, p.model.as_deref(), &table.vocab)?;
    let rows = subset_rows(ctx, &records, p.split)?;
    let y = class_indices(&model, &records, &rows)?;
    let x = table.rows(&rows);
    let mut reports = Vec::new();
    for kind in GROUPS {
        let columns = table.vocab.columns_of_kind(kind);
        let label = kind.as_str();
        reports.push(permutation_importance(
            &model,
            x.view(),
            &y,
            &columns,
            p.iterations,
            seed::derive(ctx.seed(), label, 0),
            label,
        )?);
        for &k in &p.subset_k {
            if k > columns.len() {
                ctx.note(format!(
                    "skipped {label} subsets of {k}: only {} {label} features exist",
                    columns.len()
                ));
                continue;
            }
            reports.push(subset_importance(
                &model,
                x.view(),
                &y,
                &columns,
                k,
                p.iterations,
                seed::derive(ctx.seed(), label, k as u64),
                label,
            )?);
        }
    }
    ctx.write_table("importance", |path| write_importance_csv(path, &reports))?;
    for r in &reports {
        println!(
            "{}: baseline {:.4}, mean loss {:.4} (sd {:.4})",
            r.group, r.baseline_accuracy, r.mean_accuracy_loss, r.sd
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CorrelateParams {
    model: Option<PathBuf>,
    split: Subset,
    k: usize,
    n_permutations: usize,
}

impl Default for CorrelateParams {
    fn default() -> Self {
        let c = CorrelationConfig::default();
        CorrelateParams {
            model: None,
            split: Subset::Train,
            k: c.k,
            n_permutations: c.n_permutations,
        }
    }
}

pub fn correlate(ctx: &mut RunContext) -> Result<()> {
    let p: CorrelateParams = ctx.params()?;
    let records = manifest_records(ctx)?;
    let table = FeatureTable::load(ctx, &records)?;
    let model = model_for(ctx, p.model.as_deref(), &table.vocab)?;
    let rows = subset_rows(ctx, &records, p.split)?;
    let x = table.rows(&rows);
    let performers: Vec<String> = rows.iter().map(|&i| records[i].performer.clone()).collect();
    let tags: Vec<_> = rows.iter().map(|&i| records[i].dataset_tag).collect();
    let cfg = CorrelationConfig {
        k: p.k,
        n_permutations: p.n_permutations,
        seed: ctx.seed(),
    };
    let mut reports = Vec::new();
    for kind in GROUPS {
        let columns = table.vocab.columns_of_kind(kind);
        let rep = dataset_weight_correlation(&model, x.view(), &performers, &tags, &columns, kind.as_str(), &cfg)?;
        for name in &rep.excluded {
            ctx.note(format!("{name} lacks solo or trio recordings; excluded from the {kind} correlation"));
        }
        println!(
            "{kind}: mean r {:.4} (sd {:.4}) over {} performers, {} columns",
            rep.mean_r,
            rep.sd_r,
            rep.performers.len(),
            rep.columns.len()
        );
        reports.push(rep);
    }
    ctx.write_table("correlations", |path| write_correlations_csv(path, &reports))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PcaParams {
    split: Subset,
    /// Melody n-gram length analysed.
    ngram_length: usize,
    n_components: usize,
}

impl Default for PcaParams {
    fn default() -> Self {
        PcaParams {
            split: Subset::All,
            ngram_length: 4,
            n_components: 10,
        }
    }
}

pub fn pca(ctx: &mut RunContext) -> Result<()> {
    let p: PcaParams = ctx.params()?;
    let records = manifest_records(ctx)?;
    let table = FeatureTable::load(ctx, &records)?;
    let columns = table
        .vocab
        .columns_where(|f| f.kind == FeatureKind::Melody && f.len() == p.ngram_length);
    if columns.is_empty() {
        return Err(Error::validation(format!(
            "the vocabulary has no melody n-grams of length {}",
            p.ngram_length
        )));
    }
    let rows = subset_rows(ctx, &records, p.split)?;
    let x = table.rows(&rows).select(Axis(1), &columns);
    let model = pca_fit(x.view())?;
    let names: Vec<String> = columns.iter().map(|&j| table.vocab.feature(j).interval_string()).collect();
    let groups: Vec<String> = rows.iter().map(|&i| records[i].performer.clone()).collect();
    let (performers, coords) = performer_projection(&model, x.view(), &groups);
    let keep = p.n_components.min(coords.ncols());
    let coords = coords.slice(ndarray::s![.., ..keep]);
    ctx.write_table("pca_components", |path| write_pca_components_csv(path, &model, &names, p.n_components))?;
    ctx.write_table("pca_projection", |path| write_pca_projection_csv(path, &performers, coords))?;
    let ratio = model.explained_variance_ratio();
    let shown: Vec<String> = ratio.iter().take(3).map(|r| format!("{r:.4}")).collect();
    println!(
        "{} recordings, {} features; leading explained variance {}",
        rows.len(),
        columns.len(),
        shown.join(", ")
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReportParams {
    model: Option<PathBuf>,
    split: Subset,
    /// Features listed at each end.
    n: usize,
    /// Bootstrap refits for the weight SDs; 0 leaves them out.
    bootstrap: usize,
}

impl Default for ReportParams {
    fn default() -> Self {
        ReportParams {
            model: None,
            split: Subset::Train,
            n: 5,
            bootstrap: 1000,
        }
    }
}

pub fn report(ctx: &mut RunContext) -> Result<()> {
    let p: ReportParams = ctx.params()?;
    let records = manifest_records(ctx)?;
    let table = FeatureTable::load(ctx, &records)?;
    let model = model_for(ctx, p.model.as_deref(), &table.vocab)?;
    let sd = if p.bootstrap == 0 {
        None
    } else {
        let rows = subset_rows(ctx, &records, p.split)?;
        let y = class_indices(&model, &records, &rows)?;
        Some(bootstrap_weight_sd(
            table.rows(&rows).view(),
            &y,
            &model.class_labels,
            &model.config,
            p.bootstrap,
            ctx.seed(),
        )?)
    };
    ctx.write_table("weights_topbottom", |path| {
        write_weights_topbottom_csv(path, &model, &table.vocab, sd.as_ref(), p.n)
    })?;
    println!("{} performers, {} features each end", model.n_classes(), p.n.min(model.n_features()));
    Ok(())
}
