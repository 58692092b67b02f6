//! Reading a fitted model: permutation importance, max-abs feature
//! selection, cross-dataset weight correlations, bootstrap weight spread and
//! a PCA style space.

mod correlation;
mod pca;
mod report;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{argmax_rows, fit_indexed, LrConfig, LrModel};
use crate::error::{Error, Result};
use crate::seed;

pub use correlation::{
    dataset_weight_correlation, CorrelationConfig, CorrelationReport, PerformerCorrelation, BONFERRONI_FEATURE_SETS,
};
pub use pca::{pca_fit, performer_projection, principal_components, scale_to_unit, PcaModel, Preprocessor};
pub use report::{
    write_correlations_csv, write_importance_csv, write_pca_components_csv, write_pca_projection_csv,
    write_weights_topbottom_csv,
};

/// Mean and spread of the accuracy lost when a column group is permuted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub group: String,
    pub baseline_accuracy: f64,
    pub mean_accuracy_loss: f64,
    pub sd: f64,
    pub iterations: usize,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Logits split into the part read from `columns` and the rest, so that a
/// row permutation of the group costs one pass over the logits.
struct SplitLogits {
    rest: Array2<f64>,
    group: Array2<f64>,
}

impl SplitLogits {
    fn new(model: &LrModel, x: ArrayView2<f64>, columns: &[usize]) -> Result<Self> {
        let full = model.logits(x)?;
        let xs = x.select(Axis(1), columns);
        let ws = model.weights.select(Axis(1), columns);
        let group = xs.dot(&ws.t());
        let rest = full - &group;
        Ok(SplitLogits { rest, group })
    }

    fn accuracy(&self, perm: &[usize], y: &[usize]) -> f64 {
        let mut z = self.rest.clone();
        for (i, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
            row += &self.group.row(perm[i]);
        }
        let pred = argmax_rows(z.view());
        pred.iter().zip(y).filter(|(p, t)| p == t).count() as f64 / y.len().max(1) as f64
    }
}

fn check_rows(x: &ArrayView2<f64>, y: &[usize]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::validation("no test rows"));
    }
    Ok(())
}

/// Top-1 accuracy after moving the values of `columns` from row `perm[i]`
/// into row `i`. The identity permutation reproduces the baseline exactly.
pub fn permuted_accuracy(
    model: &LrModel,
    x: ArrayView2<f64>,
    y: &[usize],
    columns: &[usize],
    perm: &[usize],
) -> Result<f64> {
    check_rows(&x, y)?;
    Ok(SplitLogits::new(model, x, columns)?.accuracy(perm, y))
}

/// Permutes the rows of `columns` together, `n_iter` times, and reports the
/// accuracy lost against the unpermuted data.
pub fn permutation_importance(
    model: &LrModel,
    x: ArrayView2<f64>,
    y: &[usize],
    columns: &[usize],
    n_iter: usize,
    seed: u64,
    group: &str,
) -> Result<ImportanceReport> {
    check_rows(&x, y)?;
    if n_iter == 0 {
        return Err(Error::validation("permutation importance needs at least one iteration"));
    }
    let n = y.len();
    let split = SplitLogits::new(model, x, columns)?;
    let identity: Vec<usize> = (0..n).collect();
    let baseline = split.accuracy(&identity, y);
    let losses: Vec<f64> = (0..n_iter)
        .into_par_iter()
        .map(|i| {
            let mut perm = identity.clone();
            perm.shuffle(&mut seed::rng(seed, "importance", i as u64));
            baseline - split.accuracy(&perm, y)
        })
        .collect();
    let (mean, sd) = mean_sd(&losses);
    Ok(ImportanceReport {
        group: group.to_string(),
        baseline_accuracy: baseline,
        mean_accuracy_loss: mean,
        sd,
        iterations: n_iter,
    })
}

/// Like [`permutation_importance`], but each iteration permutes a fresh
/// random subset of `k` columns drawn from `candidates`.
pub fn subset_importance(
    model: &LrModel,
    x: ArrayView2<f64>,
    y: &[usize],
    candidates: &[usize],
    k: usize,
    n_iter: usize,
    seed: u64,
    group: &str,
) -> Result<ImportanceReport> {
    check_rows(&x, y)?;
    if k > candidates.len() {
        return Err(Error::validation(format!(
            "subset size {k} exceeds the {} available {group} features",
            candidates.len()
        )));
    }
    if n_iter == 0 {
        return Err(Error::validation("subset importance needs at least one iteration"));
    }
    let n = y.len();
    let identity: Vec<usize> = (0..n).collect();
    let baseline = SplitLogits::new(model, x, &[])?.accuracy(&identity, y);
    let losses = (0..n_iter)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(seed, "subset-importance", i as u64);
            let cols: Vec<usize> = sample(&mut rng, candidates.len(), k)
                .into_iter()
                .map(|j| candidates[j])
                .collect();
            let mut perm = identity.clone();
            perm.shuffle(&mut rng);
            let split = SplitLogits::new(model, x, &cols)?;
            Ok(baseline - split.accuracy(&perm, y))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, sd) = mean_sd(&losses);
    Ok(ImportanceReport {
        group: format!("{group}[k={k}]"),
        baseline_accuracy: baseline,
        mean_accuracy_loss: mean,
        sd,
        iterations: n_iter,
    })
}

/// Columns ranked by their largest absolute weight over classes; the first
/// `k` are returned (capped at the column count). Ties keep the lower index.
pub fn top_k_features(w: ArrayView2<f64>, k: usize) -> Vec<usize> {
    let score: Vec<f64> = w
        .axis_iter(Axis(1))
        .map(|col| col.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect();
    let mut order: Vec<usize> = (0..score.len()).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    order.truncate(k.min(score.len()));
    order
}

/// Pearson correlation, or `None` when either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if a.len() < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Left-tailed Monte Carlo p-value `(#{null <= observed} + 1) / (N + 1)`.
pub fn left_tailed_p(observed: f64, null: &[f64]) -> f64 {
    let count = null.iter().filter(|v| **v <= observed).count();
    (count + 1) as f64 / (null.len() + 1) as f64
}

/// Shuffles `labels` `n_permutations` times and returns the left-tailed
/// p-value of `statistic(labels)` against the shuffled values.
pub fn permutation_test<T, F>(labels: &[T], n_permutations: usize, seed: u64, statistic: F) -> f64
where
    T: Clone + Send + Sync,
    F: Fn(&[T]) -> f64 + Sync,
{
    let observed = statistic(labels);
    let null: Vec<f64> = (0..n_permutations)
        .into_par_iter()
        .map(|i| {
            let mut shuffled = labels.to_vec();
            shuffled.shuffle(&mut seed::rng(seed, "permutation-test", i as u64));
            statistic(&shuffled)
        })
        .collect();
    left_tailed_p(observed, &null)
}

/// Standard deviation of each weight over `n_boot` refits on bootstrap
/// resamples of the rows. Resamples containing a single class are redrawn.
pub fn bootstrap_weight_sd(
    x: ArrayView2<f64>,
    y: &[usize],
    class_labels: &[String],
    config: &LrConfig,
    n_boot: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    let n = y.len();
    bootstrap_weight_sd_with(x, y, class_labels, config, n_boot, |b| {
        let mut rng = seed::rng(seed, "bootstrap", b as u64);
        // redraw resamples that hold a single class, since they cannot be fit
        loop {
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            if rows.iter().any(|&r| y[r] != y[rows[0]]) || y.iter().all(|&c| c == y[0]) {
                return rows;
            }
        }
    })
}

/// Bootstrap with a caller-supplied resampler mapping a replicate index to
/// the row indices it uses.
pub fn bootstrap_weight_sd_with<R>(
    x: ArrayView2<f64>,
    y: &[usize],
    class_labels: &[String],
    config: &LrConfig,
    n_boot: usize,
    resample: R,
) -> Result<Array2<f64>>
where
    R: Fn(usize) -> Vec<usize> + Sync,
{
    if n_boot < 2 {
        return Err(Error::validation("bootstrap needs at least two replicates"));
    }
    let fits = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let rows = resample(b);
            let xb = x.select(Axis(0), &rows);
            let yb: Vec<usize> = rows.iter().map(|&r| y[r]).collect();
            Ok(fit_indexed(xb.view(), &yb, class_labels.to_vec(), config)?.weights)
        })
        .collect::<Result<Vec<Array2<f64>>>>()?;
    let m = n_boot as f64;
    let mut mean = Array2::<f64>::zeros(fits[0].raw_dim());
    for w in &fits {
        mean += w;
    }
    mean /= m;
    let mut var = Array2::<f64>::zeros(mean.raw_dim());
    for w in &fits {
        let d = w - &mean;
        var += &(&d * &d);
    }
    Ok((var / (m - 1.0)).mapv(f64::sqrt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{ClassWeight, Penalty};
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    fn model(w: Array2<f64>) -> LrModel {
        let k = w.nrows();
        LrModel {
            weights: w,
            bias: Array1::zeros(k),
            class_labels: (0..k).map(|i| i.to_string()).collect(),
            config: LrConfig::default(),
            termination: None,
        }
    }

    #[test]
    fn top_k_hand_case() {
        let w = array![[1.0, -3.0], [2.0, 0.0]];
        assert_eq!(top_k_features(w.view(), 1), vec![1]);
        assert_eq!(top_k_features(w.view(), 2), vec![1, 0]);
        assert_eq!(top_k_features(Array2::zeros((2, 4)).view(), 3), vec![0, 1, 2]);
        assert_eq!(top_k_features(w.view(), 10).len(), 2);
    }

    proptest! {
        #[test]
        fn top_k_ignores_positive_scale(vals in prop::collection::vec(-5i32..5, 12), s in 0.1f64..10.0, k in 0usize..6) {
            let w = Array2::from_shape_vec((2, 6), vals.iter().map(|v| *v as f64).collect()).unwrap();
            prop_assert_eq!(top_k_features(w.view(), k), top_k_features((&w * s).view(), k));
        }

        #[test]
        fn pearson_symmetric_and_affine(a in prop::collection::vec(-10.0f64..10.0, 5), b in prop::collection::vec(-10.0f64..10.0, 5), s in 0.5f64..3.0, c in -4.0f64..4.0) {
            if let Some(r) = pearson(&a, &b) {
                prop_assert!((r - pearson(&b, &a).unwrap()).abs() < 1e-12);
                let scaled: Vec<f64> = a.iter().map(|v| v * s + c).collect();
                if let Some(r2) = pearson(&scaled, &b) {
                    prop_assert!((r - r2).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn identity_permutation_is_exactly_baseline() {
        let m = model(array![[1.0, -0.5, 0.2], [-0.3, 0.8, 0.1]]);
        let x = array![[1.0, 0.2, 0.3], [0.1, 1.0, 0.7], [0.4, 0.5, 0.9]];
        let y = [0, 1, 0];
        let identity = [0, 1, 2];
        let base = permuted_accuracy(&m, x.view(), &y, &[], &identity).unwrap();
        for cols in [vec![0], vec![1, 2], vec![0, 1, 2]] {
            assert_eq!(permuted_accuracy(&m, x.view(), &y, &cols, &identity).unwrap(), base);
        }
        let r = permutation_importance(&m, x.view(), &y, &[], 5, 1, "none").unwrap();
        assert_eq!(r.mean_accuracy_loss, 0.0);
        assert_eq!(r.sd, 0.0);
    }

    #[test]
    fn permuting_the_read_feature_costs_accuracy() {
        // class 1 iff feature 0 is positive; feature 1 is ignored
        let m = model(array![[-1.0, 0.0], [1.0, 0.0]]);
        let x = array![[1.0, 5.0], [-1.0, 5.0], [1.0, -5.0], [-1.0, -5.0]];
        let y = [1, 0, 1, 0];
        let hit = permutation_importance(&m, x.view(), &y, &[0], 50, 3, "f0").unwrap();
        let miss = permutation_importance(&m, x.view(), &y, &[1], 50, 3, "f1").unwrap();
        assert_eq!(hit.baseline_accuracy, 1.0);
        assert!(hit.mean_accuracy_loss > 0.2);
        assert_eq!(miss.mean_accuracy_loss, 0.0);
    }

    #[test]
    fn subset_k_too_large_is_an_error() {
        let m = model(array![[1.0, 0.0], [0.0, 1.0]]);
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(subset_importance(&m, x.view(), &[0, 1], &[0], 2, 3, 0, "melody").is_err());
        assert!(subset_importance(&m, x.view(), &[0, 1], &[0, 1], 2, 3, 0, "melody").is_ok());
    }

    #[test]
    fn single_feature_subset_matches_expectation() {
        // one informative column among V; K=1 hits it with probability 1/V
        let v = 5;
        let mut w = Array2::zeros((2, v));
        w[[0, 0]] = -1.0;
        w[[1, 0]] = 1.0;
        let m = model(w);
        let n = 40;
        let mut x = Array2::zeros((n, v));
        let mut y = vec![0; n];
        for i in 0..n {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            x[[i, 0]] = s;
            y[i] = (s > 0.0) as usize;
            for j in 1..v {
                x[[i, j]] = ((i * 7 + j * 3) % 5) as f64;
            }
        }
        let all: Vec<usize> = (0..v).collect();
        let full = permutation_importance(&m, x.view(), &y, &[0], 2000, 4, "f").unwrap();
        let sub = subset_importance(&m, x.view(), &y, &all, 1, 4000, 4, "f").unwrap();
        let expected = full.mean_accuracy_loss / v as f64;
        assert!((sub.mean_accuracy_loss - expected).abs() < 0.02, "{} vs {expected}", sub.mean_accuracy_loss);
    }

    #[test]
    fn p_values_use_plus_one_estimator() {
        assert_eq!(left_tailed_p(-10.0, &[0.0, 1.0, 2.0]), 0.25);
        assert_eq!(left_tailed_p(10.0, &[0.0, 1.0, 2.0]), 1.0);
        let p = permutation_test(&[1.0, 2.0, 3.0, 4.0], 9, 2, |v| v[0]);
        assert!(p >= 0.1 && p <= 1.0);
    }

    #[test]
    fn bootstrap_sd() {
        let x = array![[1.0, 0.0], [0.0, 1.0], [0.8, 0.3], [0.2, 0.9], [0.6, 0.4], [0.3, 0.5]];
        let y = [0, 1, 0, 1, 0, 1];
        let labels = vec!["a".to_string(), "b".to_string()];
        let cfg = LrConfig::new(1.0, ClassWeight::Balanced, Penalty::L2);
        let same = bootstrap_weight_sd_with(x.view(), &y, &labels, &cfg, 4, |_| (0..6).collect()).unwrap();
        assert!(same.iter().all(|v| *v == 0.0));
        let sd = bootstrap_weight_sd(x.view(), &y, &labels, &cfg, 20, 1).unwrap();
        assert!(sd.iter().all(|v| *v >= 0.0));
        assert!(sd.iter().any(|v| *v > 0.0));
        assert!(bootstrap_weight_sd(x.view(), &y, &labels, &cfg, 1, 1).is_err());
    }
}
