use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DatasetTag, ManifestRecord};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::validation(format!("unknown split {other:?}"))),
        }
    }
}

/// Relative sizes of the train, validation and test subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: u32,
    pub validation: u32,
    pub test: u32,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 8,
            validation: 1,
            test: 1,
        }
    }
}

impl SplitRatios {
    /// `(train, validation, test)` counts for a stratum of `n` recordings.
    ///
    /// Validation and test get `floor(n * share)` each, at least one when
    /// `n >= 3` and the share is non-zero; train takes the remainder.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let total = (self.train + self.validation + self.test).max(1) as usize;
        let portion = |share: u32| {
            let k = n * share as usize / total;
            if n >= 3 && share > 0 {
                k.max(1)
            } else {
                k
            }
        };
        let val = portion(self.validation);
        let test = portion(self.test);
        (n - val - test, val, test)
    }
}

/// Mapping from recording id to split, ordered by id.
pub type SplitAssignment = BTreeMap<String, Split>;

/// Stratified random split by dataset tag, reproducible from `seed`.
pub fn assign_splits(records: &[ManifestRecord], ratios: SplitRatios, seed: u64) -> Result<SplitAssignment> {
    if records.is_empty() {
        return Err(Error::validation("manifest is empty"));
    }
    let mut strata: BTreeMap<DatasetTag, BTreeSet<&str>> = BTreeMap::new();
    for r in records {
        if !strata.entry(r.dataset_tag).or_default().insert(&r.recording_id) {
            return Err(Error::validation(format!(
                "duplicate recording_id {}",
                r.recording_id
            )));
        }
    }
    let mut out = SplitAssignment::new();
    for (tag, ids) in strata {
        if ids.len() < 10 {
            log::warn!(
                "only {} {tag} recordings; stratified split is coarse",
                ids.len()
            );
        }
        let mut ids: Vec<&str> = ids.into_iter().collect();
        let mut rng = seed::rng(seed, "split", tag as u64);
        ids.shuffle(&mut rng);
        let (_, n_val, n_test) = ratios.counts(ids.len());
        for (i, id) in ids.into_iter().enumerate() {
            let split = if i < n_test {
                Split::Test
            } else if i < n_test + n_val {
                Split::Validation
            } else {
                Split::Train
            };
            if out.insert(id.to_string(), split).is_some() {
                return Err(Error::validation(format!("duplicate recording_id {id}")));
            }
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct SplitRow {
    recording_id: String,
    split: Split,
}

/// Writes `recording_id,split` rows in id order.
pub fn write_split_file(path: &Path, splits: &SplitAssignment) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (id, split) in splits {
        w.serialize(SplitRow {
            recording_id: id.clone(),
            split: *split,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_split_file(path: &Path) -> Result<SplitAssignment> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = SplitAssignment::new();
    for row in r.deserialize() {
        let row: SplitRow = row?;
        out.insert(row.recording_id, row.split);
    }
    Ok(out)
}
