//! Loading what earlier stages left under the output root.

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use stylus_core::classifier::LrModel;
use stylus_core::corpus::{load_transcription, read_manifest, read_split_file, ManifestRecord, Split, Transcription};
use stylus_core::features::{count_matrix, read_feature_dump, read_vocabulary, FeatureCounts, FeatureVocabulary, TfIdf};
use stylus_core::{Error, Result};

use crate::run::RunContext;
use crate::Command;

pub const FEATURES_FILE: &str = "features.csv";
pub const VOCABULARY_FILE: &str = "vocabulary.csv";
pub const IDF_FILE: &str = "tfidf.json";
pub const SPLITS_FILE: &str = "splits.csv";
pub const MODEL_FILE: &str = "model.json";

/// Which recordings a stage works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    #[default]
    All,
    Train,
    Validation,
    Test,
}

impl Subset {
    fn split(self) -> Option<Split> {
        match self {
            Subset::All => None,
            Subset::Train => Some(Split::Train),
            Subset::Validation => Some(Split::Validation),
            Subset::Test => Some(Split::Test),
        }
    }
}

pub fn manifest_records(ctx: &RunContext) -> Result<Vec<ManifestRecord>> {
    let records = read_manifest(ctx.manifest()?)?;
    if records.is_empty() {
        return Err(Error::validation("manifest is empty"));
    }
    let mut seen = HashSet::new();
    if let Some(r) = records.iter().find(|r| !seen.insert(r.recording_id.as_str())) {
        return Err(Error::validation(format!("duplicate recording id {:?} in manifest", r.recording_id)));
    }
    Ok(records)
}

pub fn load_corpus(records: &[ManifestRecord]) -> Result<Vec<Transcription>> {
    records.iter().map(load_transcription).collect()
}

/// Indices of `records` in `subset`, in manifest order.
pub fn subset_rows(ctx: &RunContext, records: &[ManifestRecord], subset: Subset) -> Result<Vec<usize>> {
    let Some(want) = subset.split() else {
        return Ok((0..records.len()).collect());
    };
    let splits = read_split_file(&ctx.input(Command::Split, SPLITS_FILE)?)?;
    let mut rows = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match splits.get(&r.recording_id) {
            Some(s) if *s == want => rows.push(i),
            Some(_) => {}
            None => {
                return Err(Error::validation(format!(
                    "recording {:?} has no split; rerun `stylus split`",
                    r.recording_id
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::validation(format!("the {want} split is empty")));
    }
    Ok(rows)
}

/// TF-IDF rows for every manifest recording plus the vocabulary they index.
pub struct FeatureTable {
    pub vocab: FeatureVocabulary,
    pub x: Array2<f64>,
}

impl FeatureTable {
    pub fn load(ctx: &RunContext, records: &[ManifestRecord]) -> Result<Self> {
        let vocab = read_vocabulary(&ctx.input(Command::Extract, VOCABULARY_FILE)?)?;
        let dump = read_feature_dump(&ctx.input(Command::Extract, FEATURES_FILE)?)?;
        let idf_path = ctx.input(Command::Extract, IDF_FILE)?;
        let text = std::fs::read_to_string(&idf_path).map_err(|e| Error::io(&idf_path, e))?;
        let idf: TfIdf = serde_json::from_str(&text)?;
        if idf.idf.len() != vocab.len() {
            return Err(Error::Dimension {
                expected: vocab.len(),
                found: idf.idf.len(),
            });
        }
        let rows: Vec<FeatureCounts> = records
            .iter()
            .map(|r| dump.get(&r.recording_id).cloned().unwrap_or_default())
            .collect();
        let x = idf.transform(count_matrix(&rows, &vocab).view());
        Ok(FeatureTable { vocab, x })
    }

    pub fn rows(&self, rows: &[usize]) -> Array2<f64> {
        self.x.select(Axis(0), rows)
    }
}

/// Loads a model and checks it was trained on this vocabulary.
pub fn load_model(path: &Path, vocab: &FeatureVocabulary) -> Result<LrModel> {
    let (model, hash) = LrModel::load(path)?;
    if hash != vocab.content_hash() {
        return Err(Error::validation(format!(
            "{} was trained on a different vocabulary; rerun `stylus train`",
            path.display()
        )));
    }
    Ok(model)
}

/// The model named in the stage parameters, or the trained one.
pub fn model_for(ctx: &RunContext, explicit: Option<&Path>, vocab: &FeatureVocabulary) -> Result<LrModel> {
    match explicit {
        Some(p) => load_model(p, vocab),
        None => load_model(&ctx.input(Command::Train, MODEL_FILE)?, vocab),
    }
}

/// Class index of every row's performer; unknown performers are an error.
pub fn class_indices(model: &LrModel, records: &[ManifestRecord], rows: &[usize]) -> Result<Vec<usize>> {
    rows.iter()
        .map(|&i| {
            let p = &records[i].performer;
            model
                .class_index(p)
                .ok_or_else(|| Error::validation(format!("performer {p:?} is not a class of the model")))
        })
        .collect()
}

/// File-name-safe form of an identifier.
pub fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}
