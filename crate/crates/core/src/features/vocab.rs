use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Feature, FeatureCounts, FeatureKind};
use crate::error::{Error, Result};

/// Features retained after document-frequency pruning, in column order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVocabulary {
    features: Vec<Feature>,
    document_frequency: Vec<usize>,
    index: HashMap<Feature, usize>,
}

impl FeatureVocabulary {
    /// Builds a vocabulary from features already in column order.
    pub fn from_parts(features: Vec<Feature>, document_frequency: Vec<usize>) -> Result<Self> {
        if features.len() != document_frequency.len() {
            return Err(Error::Dimension {
                expected: features.len(),
                found: document_frequency.len(),
            });
        }
        let index: HashMap<Feature, usize> = features
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, f)| (f, i))
            .collect();
        if index.len() != features.len() {
            return Err(Error::validation("vocabulary contains duplicate features"));
        }
        Ok(FeatureVocabulary {
            features,
            document_frequency,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, column: usize) -> &Feature {
        &self.features[column]
    }

    pub fn document_frequency(&self) -> &[usize] {
        &self.document_frequency
    }

    pub fn column(&self, f: &Feature) -> Option<usize> {
        self.index.get(f).copied()
    }

    /// Columns whose feature satisfies `pred`, ascending.
    pub fn columns_where(&self, pred: impl Fn(&Feature) -> bool) -> Vec<usize> {
        (0..self.len()).filter(|&i| pred(&self.features[i])).collect()
    }

    pub fn columns_of_kind(&self, kind: FeatureKind) -> Vec<usize> {
        self.columns_where(|f| f.kind == kind)
    }

    /// SHA-256 over the ordered feature list, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.features {
            h.update(f.kind.as_str().as_bytes());
            h.update(b":");
            h.update(f.interval_string().as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Keeps features whose document frequency lies in `[min_df, max_df]`.
///
/// The result is independent of the order of `per_recording`.
pub fn build_vocabulary(per_recording: &[FeatureCounts], min_df: usize, max_df: usize) -> FeatureVocabulary {
    let mut df: BTreeMap<&Feature, usize> = BTreeMap::new();
    for counts in per_recording {
        for (f, c) in counts {
            if *c > 0 {
                *df.entry(f).or_insert(0) += 1;
            }
        }
    }
    let (features, freq): (Vec<Feature>, Vec<usize>) = df
        .into_iter()
        .filter(|(_, d)| (min_df..=max_df).contains(d))
        .map(|(f, d)| (f.clone(), d))
        .unzip();
    if features.is_empty() {
        log::warn!("vocabulary is empty after document-frequency pruning [{min_df}, {max_df}]");
    }
    FeatureVocabulary::from_parts(features, freq).expect("BTreeMap keys are unique")
}

/// Dense recording-by-feature count matrix; out-of-vocabulary features are
/// ignored.
pub fn count_matrix(per_recording: &[FeatureCounts], vocab: &FeatureVocabulary) -> Array2<f64> {
    let mut m = Array2::zeros((per_recording.len(), vocab.len()));
    for (row, counts) in per_recording.iter().enumerate() {
        for (f, c) in counts {
            if let Some(col) = vocab.column(f) {
                m[[row, col]] = *c as f64;
            }
        }
    }
    m
}

/// Smoothed inverse document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdf {
    pub idf: Vec<f64>,
}

impl TfIdf {
    /// `idf = ln((1 + N) / (1 + df)) + 1` with `N` the number of rows.
    pub fn fit(counts: ArrayView2<f64>) -> Self {
        let n = counts.nrows() as f64;
        let idf = counts
            .axis_iter(Axis(1))
            .map(|col| {
                let df = col.iter().filter(|v| **v > 0.0).count() as f64;
                ((1.0 + n) / (1.0 + df)).ln() + 1.0
            })
            .collect();
        TfIdf { idf }
    }

    /// Scales counts by idf and L2-normalises every non-zero row.
    pub fn transform(&self, counts: ArrayView2<f64>) -> Array2<f64> {
        let idf = Array1::from(self.idf.clone());
        let mut out = &counts * &idf;
        for mut row in out.rows_mut() {
            let norm = row.dot(&row).sqrt();
            if norm > 0.0 {
                row /= norm;
            }
        }
        out
    }
}

/// Fits idf on `counts` and transforms it.
pub fn tfidf(counts: ArrayView2<f64>) -> Array2<f64> {
    TfIdf::fit(counts).transform(counts)
}

/// TF-IDF rows keyed by recording id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub recording_ids: Vec<String>,
    pub values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.recording_ids.iter().position(|r| r == id)
    }
}

#[derive(Serialize, Deserialize)]
struct DumpRow {
    recording_id: String,
    feature_kind: FeatureKind,
    feature_string: String,
    count: u32,
}

/// Writes `recording_id,feature_kind,feature_string,count`, recordings in the
/// given order and features in vocabulary order.
pub fn write_feature_dump(path: &Path, rows: &[(String, FeatureCounts)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (id, counts) in rows {
        let mut sorted: Vec<(&Feature, &u32)> = counts.iter().collect();
        sorted.sort();
        for (f, c) in sorted {
            w.serialize(DumpRow {
                recording_id: id.clone(),
                feature_kind: f.kind,
                feature_string: f.interval_string(),
                count: *c,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a feature dump into per-recording counts keyed by id.
pub fn read_feature_dump(path: &Path) -> Result<HashMap<String, FeatureCounts>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out: HashMap<String, FeatureCounts> = HashMap::new();
    for row in r.deserialize() {
        let row: DumpRow = row?;
        let f = Feature::parse(row.feature_kind, &row.feature_string)?;
        *out.entry(row.recording_id).or_default().entry(f).or_insert(0) += row.count;
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct VocabRow {
    index: usize,
    kind: FeatureKind,
    feature_string: String,
    document_frequency: usize,
}

pub fn write_vocabulary(path: &Path, vocab: &FeatureVocabulary) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (i, f) in vocab.features().iter().enumerate() {
        w.serialize(VocabRow {
            index: i,
            kind: f.kind,
            feature_string: f.interval_string(),
            document_frequency: vocab.document_frequency()[i],
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_vocabulary(path: &Path) -> Result<FeatureVocabulary> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows: Vec<VocabRow> = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    rows.sort_by_key(|r| r.index);
    if rows.iter().enumerate().any(|(i, r)| r.index != i) {
        return Err(Error::validation(format!(
            "{}: vocabulary indices are not dense",
            path.display()
        )));
    }
    let mut features = Vec::with_capacity(rows.len());
    let mut df = Vec::with_capacity(rows.len());
    for r in rows {
        features.push(Feature::parse(r.kind, &r.feature_string)?);
        df.push(r.document_frequency);
    }
    FeatureVocabulary::from_parts(features, df)
}
