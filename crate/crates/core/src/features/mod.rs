//! Transposition-invariant melodic n-grams, chord voicings, vocabulary
//! pruning by document frequency and TF-IDF weighting.

mod extract;
mod vocab;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use extract::{
    extract_all, extract_features, extract_ngrams, extract_voicings, ngram_of, quantise, quantise_index, skyline,
    voicing_of, ExtractConfig, FeatureCounts, MelodyNote, QuantisedFrame,
};
pub use vocab::{
    build_vocabulary, count_matrix, read_feature_dump, read_vocabulary, tfidf, write_feature_dump,
    write_vocabulary, FeatureMatrix, FeatureVocabulary, TfIdf,
};

/// Whether a feature comes from the skyline melody or from a chord.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Melody,
    Harmony,
}

impl FeatureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::Melody => "melody",
            FeatureKind::Harmony => "harmony",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "melody" => Ok(FeatureKind::Melody),
            "harmony" => Ok(FeatureKind::Harmony),
            other => Err(Error::validation(format!("unknown feature kind {other:?}"))),
        }
    }
}

/// A melodic n-gram (semitones from the first note) or a chord voicing
/// (semitones above the lowest note). Both start with 0.
///
/// Ordering is melody before harmony, then lexicographic on the intervals.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Feature {
    pub kind: FeatureKind,
    pub intervals: Vec<i8>,
}

impl Feature {
    pub fn new(kind: FeatureKind, intervals: Vec<i8>) -> Self {
        Feature { kind, intervals }
    }

    /// Number of notes.
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Comma-separated intervals, e.g. `"0,-1,-2,-3"`.
    pub fn interval_string(&self) -> String {
        self.intervals
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse(kind: FeatureKind, s: &str) -> Result<Self> {
        let intervals = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<i8>()
                    .map_err(|e| Error::validation(format!("bad feature string {s:?}: {e}")))
            })
            .collect::<Result<Vec<i8>>>()?;
        Ok(Feature { kind, intervals })
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind, self.interval_string())
    }
}
