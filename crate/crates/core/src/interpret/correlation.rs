use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{left_tailed_p, mean_sd, pearson, top_k_features};
use crate::classifier::{fit_indexed, LrConfig, LrModel};
use crate::corpus::DatasetTag;
use crate::error::{Error, Result};
use crate::seed;

/// Two feature sets (melody and harmony) are tested.
pub const BONFERRONI_FEATURE_SETS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    /// Number of top-weighted columns kept, capped at those available.
    pub k: usize,
    pub n_permutations: usize,
    pub seed: u64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig {
            k: 2000,
            n_permutations: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformerCorrelation {
    pub performer: String,
    pub r: f64,
    pub p: f64,
    pub p_corrected: f64,
    /// Permutations in which `r` was defined for this performer.
    pub valid_permutations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub group: String,
    pub columns: Vec<usize>,
    pub performers: Vec<PerformerCorrelation>,
    pub mean_r: f64,
    pub sd_r: f64,
    pub corrected_alpha_factor: usize,
    pub excluded: Vec<String>,
}

/// Per-performer r between weight rows of two models fitted separately on
/// the rows tagged solo and trio. `None` for a performer absent from either
/// side or with a constant weight row.
fn tag_correlations(
    x: ArrayView2<f64>,
    y: &[usize],
    tags: &[DatasetTag],
    classes: &[String],
    config: &LrConfig,
) -> Result<Vec<Option<f64>>> {
    let mut weights = Vec::with_capacity(2);
    let mut present = Vec::with_capacity(2);
    for tag in DatasetTag::ALL {
        let rows: Vec<usize> = (0..y.len()).filter(|&i| tags[i] == tag).collect();
        let ys: Vec<usize> = rows.iter().map(|&i| y[i]).collect();
        let seen: BTreeSet<usize> = ys.iter().copied().collect();
        if seen.len() < 2 {
            return Ok(vec![None; classes.len()]);
        }
        let xs = x.select(Axis(0), &rows);
        weights.push(fit_indexed(xs.view(), &ys, classes.to_vec(), config)?.weights);
        present.push(seen);
    }
    Ok((0..classes.len())
        .map(|c| {
            if !present[0].contains(&c) || !present[1].contains(&c) {
                return None;
            }
            let a = weights[0].row(c).to_vec();
            let b = weights[1].row(c).to_vec();
            pearson(&a, &b)
        })
        .collect())
}

/// Correlates each performer's solo and trio weights on the full model's
/// top-K columns among `candidates`, with a left-tailed permutation test
/// that shuffles the dataset tag over recordings.
///
/// `x` holds one row per recording; `performers` and `tags` align with it.
/// Performers missing from either tag are excluded with a warning. The
/// per-tag models reuse the full model's configuration.
pub fn dataset_weight_correlation(
    full_model: &LrModel,
    x: ArrayView2<f64>,
    performers: &[String],
    tags: &[DatasetTag],
    candidates: &[usize],
    group: &str,
    cfg: &CorrelationConfig,
) -> Result<CorrelationReport> {
    if performers.len() != x.nrows() || tags.len() != x.nrows() {
        return Err(Error::Dimension {
            expected: x.nrows(),
            found: performers.len().min(tags.len()),
        });
    }
    if candidates.is_empty() {
        return Err(Error::validation(format!("no {group} features to correlate")));
    }
    let sub_w = full_model.weights.select(Axis(1), candidates);
    let columns: Vec<usize> = top_k_features(sub_w.view(), cfg.k)
        .into_iter()
        .map(|j| candidates[j])
        .collect();

    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    let names: BTreeSet<&String> = performers.iter().collect();
    for name in names {
        let has = |t: DatasetTag| (0..tags.len()).any(|i| &performers[i] == name && tags[i] == t);
        if has(DatasetTag::Solo) && has(DatasetTag::Trio) {
            kept.push(name.clone());
        } else {
            log::warn!("performer {name} lacks recordings under one dataset tag; excluded");
            excluded.push(name.clone());
        }
    }
    if kept.len() < 2 {
        return Err(Error::validation(format!(
            "need at least two performers with both dataset tags, found {}",
            kept.len()
        )));
    }
    let rows: Vec<usize> = (0..performers.len())
        .filter(|&i| kept.binary_search(&performers[i]).is_ok())
        .collect();
    let xk: Array2<f64> = x.select(Axis(0), &rows).select(Axis(1), &columns);
    let y: Vec<usize> = rows
        .iter()
        .map(|&i| kept.binary_search(&performers[i]).unwrap())
        .collect();
    let tag_rows: Vec<DatasetTag> = rows.iter().map(|&i| tags[i]).collect();

    let observed = tag_correlations(xk.view(), &y, &tag_rows, &kept, &full_model.config)?;
    let null = (0..cfg.n_permutations)
        .into_par_iter()
        .map(|i| {
            let mut shuffled = tag_rows.clone();
            shuffled.shuffle(&mut seed::rng(cfg.seed, "tag-shuffle", i as u64));
            tag_correlations(xk.view(), &y, &shuffled, &kept, &full_model.config)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::new();
    for (c, name) in kept.iter().enumerate() {
        let Some(r) = observed[c] else {
            log::warn!("weights for {name} are constant; correlation undefined");
            excluded.push(name.clone());
            continue;
        };
        let draws: Vec<f64> = null.iter().filter_map(|rs| rs[c]).collect();
        let p = left_tailed_p(r, &draws);
        out.push(PerformerCorrelation {
            performer: name.clone(),
            r,
            p,
            p_corrected: (p * BONFERRONI_FEATURE_SETS as f64).min(1.0),
            valid_permutations: draws.len(),
        });
    }
    let rs: Vec<f64> = out.iter().map(|p| p.r).collect();
    let (mean_r, sd_r) = if rs.is_empty() { (f64::NAN, 0.0) } else { mean_sd(&rs) };
    Ok(CorrelationReport {
        group: group.to_string(),
        columns,
        performers: out,
        mean_r,
        sd_r,
        corrected_alpha_factor: BONFERRONI_FEATURE_SETS,
        excluded,
    })
}
