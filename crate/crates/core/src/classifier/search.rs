use std::path::Path;

use ndarray::ArrayView2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_indexed, top_k_accuracy, ClassWeight, LrConfig, LrModel, Penalty};
use crate::error::{Error, Result};
use crate::seed;

/// Ranges for random search. `C` is log-uniform on `[c_min, c_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub c_min: f64,
    pub c_max: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            c_min: 1e-3,
            c_max: 1e3,
            iterations: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial: usize,
    pub config: LrConfig,
    pub val_top1: f64,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub trials: Vec<Trial>,
    pub best: usize,
    pub model: LrModel,
}

/// Draws the configuration for trial `index`. Depends only on the space's
/// seed and the index.
pub fn sample_config(space: &SearchSpace, index: usize) -> LrConfig {
    let mut rng = seed::rng(space.seed, "search", index as u64);
    let (lo, hi) = (space.c_min.log10(), space.c_max.log10());
    let c = 10f64.powf(rng.gen_range(lo..=hi));
    let class_weight = if rng.gen_bool(0.5) {
        ClassWeight::Balanced
    } else {
        ClassWeight::None
    };
    let penalty = if rng.gen_bool(0.5) { Penalty::L2 } else { Penalty::None };
    LrConfig::new(c, class_weight, penalty)
}

/// Fits one model per sampled configuration on the training rows and keeps
/// the one with the best validation top-1 accuracy. Ties go to the earliest
/// trial. The winner is not refit on validation data.
pub fn random_search(
    x_train: ArrayView2<f64>,
    y_train: &[usize],
    x_val: ArrayView2<f64>,
    y_val: &[usize],
    class_labels: &[String],
    space: &SearchSpace,
) -> Result<SearchResult> {
    if space.iterations == 0 {
        return Err(Error::validation("search needs at least one iteration"));
    }
    if !(space.c_min > 0.0 && space.c_max >= space.c_min) {
        return Err(Error::validation(format!(
            "invalid C range [{}, {}]",
            space.c_min, space.c_max
        )));
    }
    let fitted: Vec<Result<(Trial, LrModel)>> = (0..space.iterations)
        .into_par_iter()
        .map(|i| {
            let config = sample_config(space, i);
            let model = fit_indexed(x_train, y_train, class_labels.to_vec(), &config)?;
            let probs = model.predict_proba(x_val)?;
            let val_top1 = top_k_accuracy(probs.view(), y_val, 1);
            log::debug!("trial {i}: C={:.4} {} {} val_top1={val_top1:.4}", config.c, config.class_weight, config.penalty);
            Ok((
                Trial {
                    trial: i,
                    config,
                    val_top1,
                },
                model,
            ))
        })
        .collect();

    let mut trials = Vec::with_capacity(fitted.len());
    let mut best: Option<(usize, LrModel)> = None;
    for item in fitted {
        let (trial, model) = item?;
        let better = match &best {
            None => true,
            Some((b, _)) => trial.val_top1 > trials.get(*b).map(|t: &Trial| t.val_top1).unwrap_or(f64::MIN),
        };
        if better {
            best = Some((trials.len(), model));
        }
        trials.push(trial);
    }
    let (best, model) = best.expect("at least one trial");
    Ok(SearchResult { trials, best, model })
}

/// Writes `trial,C,class_weight,penalty,val_top1`.
pub fn write_trial_log(path: &Path, trials: &[Trial]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trial", "C", "class_weight", "penalty", "val_top1"])?;
    for t in trials {
        w.write_record([
            t.trial.to_string(),
            t.config.c.to_string(),
            t.config.class_weight.to_string(),
            t.config.penalty.to_string(),
            t.val_top1.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
