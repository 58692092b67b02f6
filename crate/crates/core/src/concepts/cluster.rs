use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpret::pearson;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Cluster ids: leaves are `0..n`, merge `k` creates cluster `n + k`.
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// `1 - r` between every pair of rows. Rows with zero variance are an error
/// naming the entity.
pub fn correlation_distance(rows: ArrayView2<f64>, labels: &[String]) -> Result<Array2<f64>> {
    let n = rows.nrows();
    let data: Vec<Vec<f64>> = rows.rows().into_iter().map(|r| r.to_vec()).collect();
    for (i, r) in data.iter().enumerate() {
        let first = r.first().copied().unwrap_or(0.0);
        if r.len() < 2 || r.iter().all(|v| *v == first) {
            return Err(Error::validation(format!(
                "entity {:?} has zero variance; correlation distance undefined",
                labels.get(i).cloned().unwrap_or_else(|| i.to_string())
            )));
        }
    }
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let r = pearson(&data[i], &data[j]).expect("variance checked");
            d[[i, j]] = 1.0 - r;
            d[[j, i]] = 1.0 - r;
        }
    }
    Ok(d)
}

/// Average-linkage agglomeration of a symmetric distance matrix.
///
/// Each step merges the closest pair of clusters. Equal distances are broken
/// by the smallest leaf index in either cluster, then by the other cluster's
/// smallest leaf.
pub fn upgma(distances: ArrayView2<f64>, labels: Vec<String>) -> Result<Dendrogram> {
    let n = distances.nrows();
    if n < 2 || distances.ncols() != n || labels.len() != n {
        return Err(Error::validation("clustering needs a square matrix of at least two entities"));
    }
    // (cluster id, smallest leaf, leaves)
    let mut active: Vec<(usize, usize, Vec<usize>)> = (0..n).map(|i| (i, i, vec![i])).collect();
    let mut merges = Vec::with_capacity(n - 1);
    let avg = |a: &[usize], b: &[usize]| {
        let mut s = 0.0;
        for &i in a {
            for &j in b {
                s += distances[[i, j]];
            }
        }
        s / (a.len() * b.len()) as f64
    };
    while active.len() > 1 {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for x in 0..active.len() {
            for y in x + 1..active.len() {
                let d = avg(&active[x].2, &active[y].2);
                let (lo, hi) = {
                    let (p, q) = (active[x].1, active[y].1);
                    (p.min(q), p.max(q))
                };
                let better = match best {
                    None => true,
                    Some((bd, key, _, _)) => d < bd || (d == bd && (lo, hi) < key),
                };
                if better {
                    best = Some((d, (lo, hi), x, y));
                }
            }
        }
        let (height, _, x, y) = best.expect("two active clusters");
        let (cy, ly, mut leaves_y) = active.remove(y);
        let (cx, lx, mut leaves_x) = active.remove(x);
        leaves_x.append(&mut leaves_y);
        merges.push(Merge {
            a: cx.min(cy),
            b: cx.max(cy),
            height,
            size: leaves_x.len(),
        });
        active.push((n + merges.len() - 1, lx.min(ly), leaves_x));
    }
    Ok(Dendrogram { labels, merges })
}

/// Pearson `1 - r` distances between rows, then average linkage.
pub fn cluster(rows: ArrayView2<f64>, labels: Vec<String>) -> Result<Dendrogram> {
    let d = correlation_distance(rows, &labels)?;
    upgma(d.view(), labels)
}
