use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature z-score followed by min-max scaling of the z-scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Preprocessor {
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).expect("non-empty").to_vec();
        let sd: Vec<f64> = x
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(col, m)| (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        let mut min = vec![f64::INFINITY; mean.len()];
        let mut max = vec![f64::NEG_INFINITY; mean.len()];
        for row in x.rows() {
            for (j, v) in row.iter().enumerate() {
                let z = zscore(*v, mean[j], sd[j]);
                min[j] = min[j].min(z);
                max[j] = max[j].max(z);
            }
        }
        Preprocessor { mean, sd, min, max }
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                let z = zscore(*v, self.mean[j], self.sd[j]);
                let range = self.max[j] - self.min[j];
                *v = if range > 0.0 { (z - self.min[j]) / range } else { 0.0 };
            }
        }
        out
    }
}

fn zscore(v: f64, mean: f64, sd: f64) -> f64 {
    if sd > 0.0 {
        (v - mean) / sd
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// Component-by-feature, orthonormal rows.
    pub components: Array2<f64>,
    /// Non-increasing.
    pub explained_variance: Array1<f64>,
    pub preprocessing: Preprocessor,
}

/// Principal axes of already-preprocessed data, via SVD of the centred
/// matrix. Variances use the `n - 1` denominator. Each component's largest
/// absolute entry is made positive so signs are reproducible.
pub fn principal_components(z: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let (n, f) = z.dim();
    if n < 2 {
        return Err(Error::validation("PCA needs at least two rows"));
    }
    let mean = z.mean_axis(Axis(0)).expect("non-empty");
    let centred = &z - &mean;
    let m = DMatrix::from_fn(n, f, |i, j| centred[[i, j]]);
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

    let mut components = Array2::zeros((order.len(), f));
    let mut variance = Array1::zeros(order.len());
    for (out, &k) in order.iter().enumerate() {
        let s = svd.singular_values[k];
        variance[out] = s * s / (n as f64 - 1.0);
        let mut pivot = 0;
        for j in 0..f {
            if vt[(k, j)].abs() > vt[(k, pivot)].abs() {
                pivot = j;
            }
        }
        let sign = if vt[(k, pivot)] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..f {
            components[[out, j]] = sign * vt[(k, j)];
        }
    }
    Ok((components, variance))
}

/// Preprocesses `x` (rows are recordings, typically TF-IDF of length-4
/// n-grams) and fits all principal components.
pub fn pca_fit(x: ArrayView2<f64>) -> Result<PcaModel> {
    if x.nrows() < 2 {
        return Err(Error::validation("PCA needs at least two rows"));
    }
    let preprocessing = Preprocessor::fit(x);
    let z = preprocessing.transform(x);
    let (components, explained_variance) = principal_components(z.view())?;
    Ok(PcaModel {
        components,
        explained_variance,
        preprocessing,
    })
}

impl PcaModel {
    pub fn explained_variance_ratio(&self) -> Array1<f64> {
        let total = self.explained_variance.sum();
        if total > 0.0 {
            &self.explained_variance / total
        } else {
            Array1::zeros(self.explained_variance.len())
        }
    }

    /// Dot products of already-preprocessed vectors with each component.
    pub fn project(&self, preprocessed: ArrayView2<f64>) -> Array2<f64> {
        preprocessed.dot(&self.components.t())
    }
}

/// Averages the preprocessed rows of each group and projects the means.
/// Groups come out in order of first appearance.
pub fn performer_projection(model: &PcaModel, x: ArrayView2<f64>, groups: &[String]) -> (Vec<String>, Array2<f64>) {
    let z = model.preprocessing.transform(x);
    let mut names: Vec<String> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        match names.iter().position(|n| n == g) {
            Some(k) => members[k].push(i),
            None => {
                names.push(g.clone());
                members.push(vec![i]);
            }
        }
    }
    let mut means = Array2::zeros((names.len(), z.ncols()));
    for (k, rows) in members.iter().enumerate() {
        let m = z.select(Axis(0), rows).mean_axis(Axis(0)).expect("non-empty group");
        means.row_mut(k).assign(&m);
    }
    (names, model.project(means.view()))
}

/// Divides each column by its largest absolute value, mapping into [-1, 1].
pub fn scale_to_unit(coords: &Array2<f64>) -> Array2<f64> {
    let mut out = coords.clone();
    for mut col in out.columns_mut() {
        let m = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if m > 0.0 {
            col /= m;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn collinear_data_has_one_component() {
        let x = array![[0.0, 0.0], [1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let (_, var) = principal_components(x.view()).unwrap();
        let ratio = var[0] / var.sum();
        assert!((ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn components_are_orthonormal_and_variance_is_preserved() {
        let x = Array2::from_shape_fn((12, 5), |(i, j)| ((i * 31 + j * 17) % 11) as f64 * 0.1 + (i * j) as f64 * 0.01);
        let m = pca_fit(x.view()).unwrap();
        let gram = m.components.dot(&m.components.t());
        for ((i, j), v) in gram.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.0 };
            assert!((v - target).abs() < 1e-8);
        }
        let z = m.preprocessing.transform(x.view());
        let total: f64 = z
            .axis_iter(Axis(1))
            .map(|c| {
                let mu = c.mean().unwrap();
                c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 11.0
            })
            .sum();
        assert!((m.explained_variance.sum() - total).abs() < 1e-8);
        for w in m.explained_variance.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn preprocessing_bounds() {
        let x = array![[1.0, 5.0, 2.0], [3.0, 5.0, 0.0], [2.0, 5.0, 1.0]];
        let p = Preprocessor::fit(x.view());
        let z = p.transform(x.view());
        assert!(z.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(z.column(1).iter().all(|v| *v == 0.0));
        assert_eq!(z.column(0).to_vec(), vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn projection_of_groups() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [0.5, 0.5], [0.2, 0.8]];
        let m = pca_fit(x.view()).unwrap();
        let groups: Vec<String> = ["a", "b", "a", "b"].iter().map(|s| s.to_string()).collect();
        let (names, coords) = performer_projection(&m, x.view(), &groups);
        assert_eq!(names, vec!["a", "b"]);
        assert_eq!(coords.dim(), (2, m.components.nrows()));
        let unit = scale_to_unit(&coords);
        assert!(unit.iter().all(|v| v.abs() <= 1.0));
    }
}
