//! Multinomial logistic regression with optional L2 penalty, random
//! hyperparameter search and clip-to-track probability averaging.

mod lbfgs;
mod objective;
mod search;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lbfgs::{minimize, Termination};
pub use objective::Objective;
pub use search::{random_search, sample_config, write_trial_log, SearchResult, SearchSpace, Trial};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeight {
    None,
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Penalty {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "l2")]
    L2,
}

impl fmt::Display for ClassWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassWeight::None => "none",
            ClassWeight::Balanced => "balanced",
        })
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Penalty::None => "none",
            Penalty::L2 => "l2",
        })
    }
}

/// Hyperparameters and solver limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrConfig {
    /// Inverse regularisation strength.
    pub c: f64,
    pub class_weight: ClassWeight,
    pub penalty: Penalty,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tolerance() -> f64 {
    1e-5
}

fn default_max_iter() -> usize {
    5000
}

impl LrConfig {
    pub fn new(c: f64, class_weight: ClassWeight, penalty: Penalty) -> Self {
        LrConfig {
            c,
            class_weight,
            penalty,
            tolerance: default_tolerance(),
            max_iter: default_max_iter(),
        }
    }

    fn lambda(&self) -> f64 {
        match self.penalty {
            Penalty::L2 => 1.0 / self.c,
            Penalty::None => 0.0,
        }
    }
}

impl Default for LrConfig {
    /// The configuration selected by the published search.
    fn default() -> Self {
        LrConfig::new(37.017, ClassWeight::Balanced, Penalty::L2)
    }
}

/// Fitted class-by-feature weights, biases and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LrModel {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub class_labels: Vec<String>,
    pub config: LrConfig,
    pub termination: Option<Termination>,
}

/// Per-sample weights: 1, or `N / (K * count(class))` when balanced.
pub fn sample_weights(y: &[usize], n_classes: usize, mode: ClassWeight) -> Array1<f64> {
    match mode {
        ClassWeight::None => Array1::ones(y.len()),
        ClassWeight::Balanced => {
            let mut counts = vec![0usize; n_classes];
            for &c in y {
                counts[c] += 1;
            }
            let present = counts.iter().filter(|c| **c > 0).count().max(1);
            let n = y.len() as f64;
            y.iter()
                .map(|&c| n / (present as f64 * counts[c] as f64))
                .collect()
        }
    }
}

/// Sorted distinct labels and the index of each input label.
pub fn encode_labels(labels: &[String]) -> (Vec<String>, Vec<usize>) {
    let classes: Vec<String> = labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let y = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label present"))
        .collect();
    (classes, y)
}

/// Fits a model on string labels; classes are the sorted distinct labels.
pub fn fit(x: ArrayView2<f64>, labels: &[String], config: &LrConfig) -> Result<LrModel> {
    let (classes, y) = encode_labels(labels);
    fit_indexed(x, &y, classes, config)
}

/// Fits a model on class indices into `class_labels`. Classes without
/// samples are allowed, but at least two must be present.
pub fn fit_indexed(
    x: ArrayView2<f64>,
    y: &[usize],
    class_labels: Vec<String>,
    config: &LrConfig,
) -> Result<LrModel> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    let k = class_labels.len();
    if let Some(bad) = y.iter().find(|&&c| c >= k) {
        return Err(Error::validation(format!("class index {bad} out of range {k}")));
    }
    let present: BTreeSet<usize> = y.iter().copied().collect();
    if present.len() < 2 {
        return Err(Error::validation(format!(
            "need at least two classes to fit, found {}",
            present.len()
        )));
    }
    if config.penalty == Penalty::L2 && !(config.c > 0.0) {
        return Err(Error::validation(format!("C must be positive, got {}", config.c)));
    }
    let v = x.ncols();
    let weights = sample_weights(y, k, config.class_weight);
    let objective = Objective::new(x, y, weights, k, config.lambda());
    let mut params = vec![0.0; objective.n_params()];
    let termination = minimize(
        |p| objective.value_and_gradient(p),
        &mut params,
        config.tolerance,
        config.max_iter,
    );
    if !termination.converged {
        log::debug!(
            "solver stopped after {} iterations with gradient norm {:.3e}",
            termination.iterations,
            termination.gradient_norm
        );
    }
    let bias = Array1::from(params.split_off(k * v));
    let weights = Array2::from_shape_vec((k, v), params).expect("packed weights");
    Ok(LrModel {
        weights,
        bias,
        class_labels,
        config: *config,
        termination: Some(termination),
    })
}

impl LrModel {
    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.class_labels.iter().position(|l| l == label)
    }

    fn check_width(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.n_features() {
            return Err(Error::Dimension {
                expected: self.n_features(),
                found: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(&x)?;
        let mut z = x.dot(&self.weights.t());
        z += &self.bias;
        Ok(z)
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(softmax_rows(self.logits(x)?))
    }

    /// Most probable class per row; ties go to the lowest index.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(self.logits(x)?.view()))
    }
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows(mut z: Array2<f64>) -> Array2<f64> {
    for mut row in z.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    z
}

/// Index of the largest entry per row, lowest index on ties.
pub fn argmax_rows(z: ArrayView2<f64>) -> Vec<usize> {
    z.axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Fraction of rows whose true class is among the `k` largest scores.
/// Equal scores rank the lower class index first.
pub fn top_k_accuracy(scores: ArrayView2<f64>, y: &[usize], k: usize) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let hits = scores
        .axis_iter(Axis(0))
        .zip(y)
        .filter(|(row, &t)| {
            let target = row[t];
            let ahead = row
                .iter()
                .enumerate()
                .filter(|(j, v)| **v > target || (**v == target && *j < t))
                .count();
            ahead < k
        })
        .count();
    hits as f64 / y.len() as f64
}

/// Averages clip probabilities per parent. Groups are returned in order of
/// first appearance.
pub fn aggregate_track_probs(clip_probs: ArrayView2<f64>, parents: &[String]) -> (Vec<String>, Array2<f64>) {
    assert_eq!(clip_probs.nrows(), parents.len());
    let mut order: Vec<String> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, p) in parents.iter().enumerate() {
        match order.iter().position(|o| o == p) {
            Some(g) => members[g].push(i),
            None => {
                order.push(p.clone());
                members.push(vec![i]);
            }
        }
    }
    let mut out = Array2::zeros((order.len(), clip_probs.ncols()));
    for (g, rows) in members.iter().enumerate() {
        let mut acc = out.row_mut(g);
        for &r in rows {
            acc += &clip_probs.row(r);
        }
        acc /= rows.len() as f64;
    }
    (order, out)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    class_labels: Vec<String>,
    config: LrConfig,
    b: Vec<f64>,
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    vocabulary_hash: String,
}

impl LrModel {
    /// Serialises as `{class_labels, config, b, W, vocabulary_hash}` with `W`
    /// a list of class rows.
    pub fn to_json(&self, vocabulary_hash: &str) -> Result<String> {
        let file = ModelFile {
            class_labels: self.class_labels.clone(),
            config: self.config,
            b: self.bias.to_vec(),
            w: self.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
            vocabulary_hash: vocabulary_hash.to_string(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parses a model file, returning it with its vocabulary hash.
    pub fn from_json(text: &str) -> Result<(LrModel, String)> {
        let f: ModelFile = serde_json::from_str(text)?;
        let k = f.class_labels.len();
        let v = f.w.first().map(|r| r.len()).unwrap_or(0);
        if f.w.len() != k || f.b.len() != k || f.w.iter().any(|r| r.len() != v) {
            return Err(Error::validation("model file has inconsistent shapes"));
        }
        let weights = Array2::from_shape_vec((k, v), f.w.into_iter().flatten().collect())
            .map_err(|e| Error::validation(e.to_string()))?;
        Ok((
            LrModel {
                weights,
                bias: Array1::from(f.b),
                class_labels: f.class_labels,
                config: f.config,
                termination: None,
            },
            f.vocabulary_hash,
        ))
    }

    pub fn save(&self, path: &Path, vocabulary_hash: &str) -> Result<()> {
        std::fs::write(path, self.to_json(vocabulary_hash)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(LrModel, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
