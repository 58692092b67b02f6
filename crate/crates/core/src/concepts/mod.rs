//! Concept-activation analysis.
//!
//! Textbook chord exercises are expanded into concept datasets, embedded,
//! and separated from random datasets by a binary logistic regression whose
//! weight difference is the concept vector. A clip's concept score is its
//! embedding dotted with that vector; the share of a performer's clips with a
//! positive score is the sign-count ratio, compared against random-vs-random
//! vectors with a Wilcoxon signed-rank test.

mod cluster;
mod sensitivity;
mod wilcoxon;

use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{fit_indexed, ClassWeight, LrConfig, Penalty};
use crate::corpus::{read_matrix, PianoRoll, MAX_PITCH, MIN_PITCH};
use crate::error::{Error, Result};
use crate::representations::{render_chords, MIN_CHORD_NOTES};
use crate::seed;

pub use cluster::{cluster, correlation_distance, upgma, Dendrogram, Merge};
pub use sensitivity::{interpolate, kernel_origins, masked_sensitivity, MaskMode, SensitivityMap, KERNEL, STRIDE};
pub use wilcoxon::{bonferroni, mid_ranks, wilcoxon_signed_rank, WilcoxonResult, EXACT_LIMIT};

/// Default number of concept vectors per concept.
pub const ITERATIONS: usize = 10;
/// Default number of hypotheses for the Bonferroni correction.
pub const BONFERRONI_CONCEPTS: usize = 20;
/// Transpositions span `-MAX_TRANSPOSE..=MAX_TRANSPOSE` semitones.
pub const MAX_TRANSPOSE: i8 = 6;

/// One exercise: a chord sequence illustrating a concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptExercise {
    pub concept_id: u32,
    pub chords: Vec<Vec<u8>>,
}

impl ConceptExercise {
    pub fn validate(&self) -> Result<()> {
        if self.chords.is_empty() || self.chords.iter().any(|c| c.is_empty()) {
            return Err(Error::validation(format!(
                "concept {} has an empty exercise or chord",
                self.concept_id
            )));
        }
        if let Some(p) = self.chords.iter().flatten().find(|p| !(MIN_PITCH..=MAX_PITCH).contains(*p)) {
            return Err(Error::validation(format!(
                "concept {} has pitch {p} outside {MIN_PITCH}..={MAX_PITCH}",
                self.concept_id
            )));
        }
        Ok(())
    }
}

/// Reads one exercise per line: `{"concept_id": 3, "chords": [[60,64,67], ...]}`.
pub fn read_exercises(path: &Path) -> Result<Vec<ConceptExercise>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: ConceptExercise = serde_json::from_str(&line).map_err(|err| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: err.to_string(),
        })?;
        e.validate()?;
        out.push(e);
    }
    Ok(out)
}

/// An expanded exercise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptVariant {
    pub concept_id: u32,
    pub transposition: i8,
    pub inversion: usize,
    pub rootless: bool,
    pub chords: Vec<Vec<u8>>,
}

impl ConceptVariant {
    /// Chords at equal spacing, as in the harmony roll.
    pub fn render(&self) -> PianoRoll {
        render_chords(&self.chords)
    }
}

/// Sorted distinct pitches with the lowest moved up an octave `k` times.
pub fn invert(chord: &[u8], k: usize) -> Vec<u16> {
    let mut p: Vec<u16> = chord.iter().map(|&v| v as u16).collect();
    p.sort_unstable();
    p.dedup();
    for _ in 0..k {
        let low = p.remove(0);
        p.push(low + 12);
    }
    p
}

/// Every transposition in `-6..=6`, every inversion up to the largest chord
/// size (applied modulo each chord's size) and both the root and rootless
/// forms. Variants leaving the piano range are dropped, as are rootless
/// variants with a chord of fewer than three notes.
pub fn expand_concept(e: &ConceptExercise) -> Vec<ConceptVariant> {
    let max_card = e.chords.iter().map(|c| invert(c, 0).len()).max().unwrap_or(0);
    let mut out = Vec::new();
    for t in -MAX_TRANSPOSE..=MAX_TRANSPOSE {
        for inv in 0..max_card {
            'form: for rootless in [false, true] {
                let mut chords = Vec::with_capacity(e.chords.len());
                for c in &e.chords {
                    let mut p = invert(c, inv % invert(c, 0).len());
                    if rootless {
                        p.remove(0);
                        if p.len() < MIN_CHORD_NOTES {
                            continue 'form;
                        }
                    }
                    let mut shifted = Vec::with_capacity(p.len());
                    for v in p {
                        let v = v as i16 + t as i16;
                        if v < MIN_PITCH as i16 || v > MAX_PITCH as i16 {
                            continue 'form;
                        }
                        shifted.push(v as u8);
                    }
                    chords.push(shifted);
                }
                out.push(ConceptVariant {
                    concept_id: e.concept_id,
                    transposition: t,
                    inversion: inv,
                    rootless,
                    chords,
                });
            }
        }
    }
    out
}

/// Maps a piano roll to a fixed-length vector.
pub trait Embedder: Sync {
    fn dim(&self) -> usize;
    fn embed(&self, roll: &PianoRoll) -> Vec<f64>;
}

/// Mean over an 8x8 grid of 11x375-cell windows, flattened row-major.
#[derive(Debug, Clone, Copy, Default)]
pub struct PoolEmbedder;

impl PoolEmbedder {
    pub const ROWS: usize = 8;
    pub const COLS: usize = 8;
}

impl Embedder for PoolEmbedder {
    fn dim(&self) -> usize {
        Self::ROWS * Self::COLS
    }

    fn embed(&self, roll: &PianoRoll) -> Vec<f64> {
        let v = roll.values();
        let (h, w) = (v.nrows() / Self::ROWS, v.ncols() / Self::COLS);
        let mut out = vec![0.0; self.dim()];
        for (r, row) in v.rows().into_iter().enumerate() {
            let base = (r / h) * Self::COLS;
            for (c, x) in row.iter().enumerate() {
                out[base + c / w] += *x as f64;
            }
        }
        let cells = (h * w) as f64;
        out.iter_mut().for_each(|x| *x /= cells);
        out
    }
}

/// Embeds each roll into one row of a matrix.
pub fn embed_all(rolls: &[PianoRoll], embedder: &dyn Embedder) -> Array2<f64> {
    let rows: Vec<Vec<f64>> = rolls.par_iter().map(|r| embedder.embed(r)).collect();
    let d = embedder.dim();
    Array2::from_shape_vec((rows.len(), d), rows.concat()).expect("embedder dimension")
}

/// Activations computed elsewhere: a `PROL` matrix plus a CSV sidecar with a
/// `clip_id` column giving the row order.
pub fn read_activations(matrix: &Path, ids: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let values = read_matrix(matrix)?.mapv(|v| v as f64);
    let mut r = csv::Reader::from_path(ids)?;
    let mut names = Vec::new();
    for rec in r.records() {
        names.push(rec?.get(0).unwrap_or_default().to_string());
    }
    if names.len() != values.nrows() {
        return Err(Error::Dimension {
            expected: values.nrows(),
            found: names.len(),
        });
    }
    Ok((names, values))
}

/// Direction in embedding space pointing towards a concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptVector {
    pub concept_id: u32,
    pub y: Vec<f64>,
    pub random_seed: u64,
}

fn cav_config() -> LrConfig {
    LrConfig::new(1.0, ClassWeight::None, Penalty::L2)
}

/// Fits concept (class 0) against random (class 1) activations and returns
/// the weight difference, positive towards the concept.
pub fn train_cav(
    concept: ArrayView2<f64>,
    random: ArrayView2<f64>,
    concept_id: u32,
    random_seed: u64,
) -> Result<ConceptVector> {
    if concept.nrows() == 0 || random.nrows() == 0 {
        return Err(Error::validation(format!("concept {concept_id}: empty activation set")));
    }
    if concept.ncols() != random.ncols() {
        return Err(Error::Dimension {
            expected: concept.ncols(),
            found: random.ncols(),
        });
    }
    let x = concatenate(Axis(0), &[concept, random]).expect("equal widths");
    let mut y = vec![0; concept.nrows()];
    y.extend(vec![1; random.nrows()]);
    let model = fit_indexed(x.view(), &y, vec!["concept".into(), "random".into()], &cav_config())?;
    let dir = &model.weights.row(0) - &model.weights.row(1);
    Ok(ConceptVector {
        concept_id,
        y: dir.to_vec(),
        random_seed,
    })
}

/// Embedding dotted with the concept vector.
pub fn concept_score(embedding: &[f64], cav: &ConceptVector) -> Result<f64> {
    if embedding.len() != cav.y.len() {
        return Err(Error::Dimension {
            expected: cav.y.len(),
            found: embedding.len(),
        });
    }
    Ok(embedding.iter().zip(&cav.y).map(|(a, b)| a * b).sum())
}

/// Share of strictly positive scores.
pub fn sign_count_ratio(scores: &[f64]) -> f64 {
    assert!(!scores.is_empty(), "sign count of no scores");
    scores.iter().filter(|s| **s > 0.0).count() as f64 / scores.len() as f64
}

/// Index of the highest score, earliest on ties.
pub fn most_distinctive_clip<T>(clips: &[T], scorer: impl Fn(&T) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in clips.iter().enumerate() {
        let s = scorer(c);
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Activations of one concept's expanded variants.
#[derive(Debug, Clone)]
pub struct ConceptActivations {
    pub concept_id: u32,
    pub acts: Array2<f64>,
}

/// Activations of one performer's held-out clips.
#[derive(Debug, Clone)]
pub struct PerformerActivations {
    pub performer: String,
    pub acts: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignCountRow {
    pub performer: String,
    pub concept: u32,
    pub iteration: usize,
    pub ratio: f64,
    pub null_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignCountTest {
    pub performer: String,
    pub concept: u32,
    pub mean_ratio: f64,
    pub mean_null_ratio: f64,
    pub p: f64,
    pub p_corrected: f64,
}

fn ratios(cav: &ConceptVector, performers: &[PerformerActivations]) -> Vec<f64> {
    let y = ndarray::ArrayView1::from(&cav.y);
    performers
        .iter()
        .map(|p| {
            let scores = p.acts.dot(&y);
            sign_count_ratio(scores.as_slice().expect("contiguous"))
        })
        .collect()
}

/// For each concept and iteration, trains one concept vector against a fresh
/// random set and one null vector between two disjoint random sets, each the
/// size of the concept set and drawn from the other concepts' variants, then
/// records every performer's sign-count ratio under both.
pub fn sign_count_experiment(
    concepts: &[ConceptActivations],
    performers: &[PerformerActivations],
    iterations: usize,
    seed: u64,
) -> Result<Vec<SignCountRow>> {
    if iterations == 0 || concepts.len() < 2 || performers.is_empty() {
        return Err(Error::validation(
            "sign counts need at least one iteration, two concepts and one performer",
        ));
    }
    let dim = concepts[0].acts.ncols();
    if concepts.iter().any(|c| c.acts.ncols() != dim) || performers.iter().any(|p| p.acts.ncols() != dim) {
        return Err(Error::validation("activation dimensions differ"));
    }
    if let Some(p) = performers.iter().find(|p| p.acts.nrows() == 0) {
        return Err(Error::validation(format!("performer {} has no clips", p.performer)));
    }
    let mut pools = Vec::with_capacity(concepts.len());
    for (ci, c) in concepts.iter().enumerate() {
        let others: Vec<ArrayView2<f64>> = concepts
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != ci)
            .map(|(_, o)| o.acts.view())
            .collect();
        let pool = concatenate(Axis(0), &others).expect("equal widths");
        let n = c.acts.nrows();
        if n == 0 || pool.nrows() < 2 * n {
            return Err(Error::validation(format!(
                "concept {}: {} random variants cannot supply two disjoint sets of {n}",
                c.concept_id,
                pool.nrows()
            )));
        }
        pools.push(pool);
    }

    let jobs: Vec<(usize, usize)> = (0..concepts.len())
        .flat_map(|c| (0..iterations).map(move |i| (c, i)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(ci, it)| {
            let c = &concepts[ci];
            let n = c.acts.nrows();
            let pool = &pools[ci];
            let job_seed = seed::derive(seed::derive(seed, "sign-count", c.concept_id as u64), "iteration", it as u64);
            let mut rng = seed::rng(job_seed, "random-set", 0);
            let random: Vec<usize> = sample(&mut rng, pool.nrows(), n).into_vec();
            let cav = train_cav(c.acts.view(), pool.select(Axis(0), &random).view(), c.concept_id, job_seed)?;
            let pair: Vec<usize> = sample(&mut rng, pool.nrows(), 2 * n).into_vec();
            let null = train_cav(
                pool.select(Axis(0), &pair[..n]).view(),
                pool.select(Axis(0), &pair[n..]).view(),
                c.concept_id,
                job_seed,
            )?;
            Ok((ratios(&cav, performers), ratios(&null, performers)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(jobs.len() * performers.len());
    for (pi, p) in performers.iter().enumerate() {
        for (&(ci, it), (obs, null)) in jobs.iter().zip(&results) {
            rows.push(SignCountRow {
                performer: p.performer.clone(),
                concept: concepts[ci].concept_id,
                iteration: it,
                ratio: obs[pi],
                null_ratio: null[pi],
            });
        }
    }
    Ok(rows)
}

/// Wilcoxon test of observed against null ratios per performer and concept,
/// Bonferroni-corrected over `m` hypotheses. Groups keep first-appearance order.
pub fn test_sign_counts(rows: &[SignCountRow], m: usize) -> Vec<SignCountTest> {
    let mut keys: Vec<(String, u32)> = Vec::new();
    for r in rows {
        let k = (r.performer.clone(), r.concept);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(performer, concept)| {
            let group: Vec<&SignCountRow> = rows
                .iter()
                .filter(|r| r.performer == performer && r.concept == concept)
                .collect();
            let obs: Vec<f64> = group.iter().map(|r| r.ratio).collect();
            let null: Vec<f64> = group.iter().map(|r| r.null_ratio).collect();
            let p = wilcoxon_signed_rank(&obs, &null).p;
            let n = obs.len() as f64;
            SignCountTest {
                performer,
                concept,
                mean_ratio: obs.iter().sum::<f64>() / n,
                mean_null_ratio: null.iter().sum::<f64>() / n,
                p,
                p_corrected: bonferroni(p, m),
            }
        })
        .collect()
}

/// Performer-by-concept matrix of mean ratios, in the given orders.
pub fn ratio_matrix(tests: &[SignCountTest], performers: &[String], concepts: &[u32]) -> Array2<f64> {
    let mut m = Array2::zeros((performers.len(), concepts.len()));
    for t in tests {
        let i = performers.iter().position(|p| *p == t.performer);
        let j = concepts.iter().position(|c| *c == t.concept);
        if let (Some(i), Some(j)) = (i, j) {
            m[[i, j]] = t.mean_ratio;
        }
    }
    m
}

pub fn write_sign_counts_csv(path: &Path, rows: &[SignCountRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_sign_count_tests_csv(path: &Path, tests: &[SignCountTest]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for t in tests {
        w.serialize(t)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn four_note_chord_expansion() {
        let e = ConceptExercise {
            concept_id: 1,
            chords: vec![vec![48, 52, 55, 59]],
        };
        let v = expand_concept(&e);
        assert_eq!(v.len(), 13 * 4 * 2);
        let identity = v
            .iter()
            .find(|v| v.transposition == 0 && v.inversion == 0 && !v.rootless)
            .unwrap();
        assert_eq!(identity.chords, e.chords);
        let r = v.iter().find(|v| v.transposition == 0 && v.inversion == 1 && v.rootless).unwrap();
        assert_eq!(r.chords, vec![vec![55, 59, 60]]);
    }

    #[test]
    fn range_and_rootless_guards() {
        let high = ConceptExercise {
            concept_id: 2,
            chords: vec![vec![97, 101, 105]],
        };
        let v = expand_concept(&high);
        assert!(v.iter().all(|v| v.chords.iter().flatten().all(|p| *p <= MAX_PITCH)));
        assert!(!v.iter().any(|v| v.transposition == 6 && v.inversion == 0));
        // rootless triads fall to two notes
        assert!(v.iter().all(|v| !v.rootless));
    }

    #[test]
    fn scores_and_ratios() {
        let cav = ConceptVector {
            concept_id: 0,
            y: vec![1.0, 0.0, -1.0],
            random_seed: 0,
        };
        assert_eq!(concept_score(&[1.0, 2.0, 3.0], &cav).unwrap(), -2.0);
        assert!(concept_score(&[1.0], &cav).is_err());
        assert_eq!(sign_count_ratio(&[1.0, -1.0, 2.0, -3.0]), 0.5);
        assert_eq!(sign_count_ratio(&[0.0, 0.0]), 0.0);
        assert_eq!(sign_count_ratio(&[0.1, 3.0]), 1.0);
    }

    #[test]
    fn identical_sets_give_zero_cav() {
        let a = array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]];
        let cav = train_cav(a.view(), a.view(), 1, 0).unwrap();
        assert!(cav.y.iter().all(|v| v.abs() < 1e-6), "{:?}", cav.y);
        assert!(train_cav(a.view(), array![[1.0]].view(), 1, 0).is_err());
    }

    #[test]
    fn pool_embedder_averages_windows() {
        let mut roll = PianoRoll::zeros();
        roll.paint(0, 0, 375, 1.0);
        let e = PoolEmbedder.embed(&roll);
        assert_eq!(e.len(), 64);
        assert!((e[0] - 1.0 / 11.0).abs() < 1e-12);
        assert!(e[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn distinctive_clip() {
        assert_eq!(most_distinctive_clip(&[3.0], |v| *v), Some(0));
        assert_eq!(most_distinctive_clip(&[1.0, 2.0, 3.0], |v| *v), Some(2));
        assert_eq!(most_distinctive_clip(&[2.0, 1.0, 2.0], |v| *v), Some(0));
    }

    #[test]
    fn insufficient_pool_names_the_concept() {
        let big = ConceptActivations {
            concept_id: 7,
            acts: Array2::ones((5, 2)),
        };
        let small = ConceptActivations {
            concept_id: 8,
            acts: Array2::ones((1, 2)),
        };
        let perf = PerformerActivations {
            performer: "p".into(),
            acts: Array2::ones((2, 2)),
        };
        let err = sign_count_experiment(&[big, small], &[perf], 1, 0).unwrap_err().to_string();
        assert!(err.contains("concept 7"), "{err}");
    }
}
