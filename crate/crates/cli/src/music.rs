use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use ndarray::{concatenate, Array2, Axis};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stylus_core::augment::{augment as augment_clip, AugmentConfig};
use stylus_core::concepts::{
    cluster, concept_score, expand_concept, masked_sensitivity, most_distinctive_clip, ratio_matrix, read_activations,
    read_exercises, sign_count_experiment, test_sign_counts, train_cav, write_sign_count_tests_csv,
    write_sign_counts_csv, ConceptActivations, Embedder, MaskMode, PerformerActivations, PoolEmbedder,
    BONFERRONI_CONCEPTS, ITERATIONS,
};
use stylus_core::corpus::{segment_clips, write_matrix, write_note_file, Clip, CLIP_SECONDS};
use stylus_core::representations::{factorise, harmony_roll};
use stylus_core::seed;
use stylus_core::{Error, Result};

use crate::run::{write_json, RunContext};
use crate::workspace::{file_stem, load_corpus, manifest_records, subset_rows, Subset};

const SIGNIFICANCE: f64 = 0.05;

/// Clips of the recordings in `subset`, with each clip's parent index.
fn subset_clips(ctx: &RunContext, subset: Subset, hop: f64) -> Result<(Vec<stylus_core::corpus::Transcription>, Vec<(usize, Clip)>)> {
    if !(hop > 0.0) {
        return Err(Error::validation(format!("hop must be positive, got {hop}")));
    }
    let records = manifest_records(ctx)?;
    let rows = subset_rows(ctx, &records, subset)?;
    let chosen: Vec<_> = rows.iter().map(|&i| records[i].clone()).collect();
    let corpus = load_corpus(&chosen)?;
    let clips = corpus
        .iter()
        .enumerate()
        .flat_map(|(i, t)| segment_clips(t, hop).into_iter().map(move |c| (i, c)))
        .collect();
    Ok((corpus, clips))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RollParams {
    split: Subset,
    /// Seconds between clip starts, clamped to [15, 30].
    hop: f64,
}

impl Default for RollParams {
    fn default() -> Self {
        RollParams {
            split: Subset::All,
            hop: CLIP_SECONDS,
        }
    }
}

#[derive(Serialize)]
struct RollEntry {
    clip_id: String,
    performer: String,
    melody: PathBuf,
    harmony: PathBuf,
    rhythm: PathBuf,
    dynamics: PathBuf,
}

fn relative(path: &Path, dir: &Path) -> PathBuf {
    path.strip_prefix(dir).unwrap_or(path).to_path_buf()
}

pub fn rolls(ctx: &mut RunContext) -> Result<()> {
    let p: RollParams = ctx.params()?;
    let (_, clips) = subset_clips(ctx, p.split, p.hop)?;
    let dir = ctx.dir().to_path_buf();
    let root = ctx.seed();
    let entries = clips
        .par_iter()
        .map(|(_, c)| {
            let id = c.id();
            let rolls = factorise(c, seed::derive(root, &format!("rolls/{id}"), 0));
            let files = rolls.write(&dir, &file_stem(&id))?;
            Ok(RollEntry {
                clip_id: id,
                performer: c.performer.clone(),
                melody: relative(&files.melody, &dir),
                harmony: relative(&files.harmony, &dir),
                rhythm: relative(&files.rhythm, &dir),
                dynamics: relative(&files.dynamics, &dir),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut stems: HashMap<&Path, &str> = HashMap::new();
    for e in &entries {
        if let Some(other) = stems.insert(&e.melody, &e.clip_id) {
            return Err(Error::validation(format!(
                "clips {other:?} and {:?} map to the same file name",
                e.clip_id
            )));
        }
        ctx.artifact(&e.melody);
        ctx.artifact(&e.harmony);
        ctx.artifact(&e.rhythm);
        ctx.artifact(&e.dynamics);
    }
    write_json(&ctx.artifact("rolls.json"), &entries)?;
    println!("{} clips, {} roll files", entries.len(), 4 * entries.len());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AugmentParams {
    split: Subset,
    hop: f64,
    /// Clips previewed, taken in manifest order.
    clips: usize,
    #[serde(flatten)]
    augment: AugmentConfig,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            split: Subset::Train,
            hop: CLIP_SECONDS,
            clips: 10,
            augment: AugmentConfig::default(),
        }
    }
}

#[derive(Serialize)]
struct AugmentRow {
    clip_id: String,
    applied: bool,
    shift: i8,
    dilation: f64,
    refill_missing: bool,
    notes_before: usize,
    notes_after: usize,
    before: PathBuf,
    after: PathBuf,
}

pub fn augment(ctx: &mut RunContext) -> Result<()> {
    let p: AugmentParams = ctx.params()?;
    p.augment.validate()?;
    let (corpus, clips) = subset_clips(ctx, p.split, p.hop)?;
    let root = ctx.seed();
    let mut rows = Vec::new();
    for (parent, c) in clips.iter().take(p.clips) {
        let id = c.id();
        let (out, outcome) = augment_clip(c, Some(corpus[*parent].notes()), &p.augment, seed::derive(root, &format!("augment/{id}"), 0));
        if outcome.refill_missing {
            ctx.note(format!("{id}: compressed without parent notes to refill"));
        }
        let stem = file_stem(&id);
        let before = PathBuf::from(format!("{stem}.before.jsonl"));
        let after = PathBuf::from(format!("{stem}.after.jsonl"));
        write_note_file(&ctx.artifact(&before), &c.notes)?;
        write_note_file(&ctx.artifact(&after), &out.notes)?;
        rows.push(AugmentRow {
            clip_id: id,
            applied: outcome.applied,
            shift: outcome.shift,
            dilation: outcome.dilation,
            refill_missing: outcome.refill_missing,
            notes_before: c.notes.len(),
            notes_after: out.notes.len(),
            before,
            after,
        });
    }
    ctx.write_table("augmentations", |path| {
        let mut w = csv::Writer::from_path(path)?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    })?;
    let applied = rows.iter().filter(|r| r.applied).count();
    println!("{} clips previewed, augmentation applied to {applied}", rows.len());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConceptParams {
    /// JSONL exercises, one `{"concept_id", "chords"}` object per line.
    exercises: Option<PathBuf>,
    split: Subset,
    hop: f64,
    iterations: usize,
    /// Hypotheses in the Bonferroni correction.
    bonferroni: usize,
    /// External activations replacing the pooled embedding. Sidecar ids are
    /// clip ids, and `concept/<id>/<variant>` for concept variants.
    activations: Option<PathBuf>,
    activation_ids: Option<PathBuf>,
    heatmaps: bool,
    max_heatmaps: usize,
    mask: MaskMode,
}

impl Default for ConceptParams {
    fn default() -> Self {
        ConceptParams {
            exercises: None,
            split: Subset::Test,
            hop: CLIP_SECONDS,
            iterations: ITERATIONS,
            bonferroni: BONFERRONI_CONCEPTS,
            activations: None,
            activation_ids: None,
            heatmaps: true,
            max_heatmaps: 20,
            mask: MaskMode::default(),
        }
    }
}

/// Looks up rows of an external activation matrix by id.
struct External {
    rows: HashMap<String, usize>,
    values: Array2<f64>,
}

impl External {
    fn select(&self, ids: &[String]) -> Result<Array2<f64>> {
        let idx = ids
            .iter()
            .map(|id| {
                self.rows
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::validation(format!("no external activation for {id:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.values.select(Axis(0), &idx))
    }
}

fn embed_clips(clips: &[&Clip]) -> Array2<f64> {
    let e = PoolEmbedder;
    let rows: Vec<Vec<f64>> = clips.par_iter().map(|c| e.embed(&harmony_roll(c))).collect();
    Array2::from_shape_vec((rows.len(), e.dim()), rows.concat()).expect("embedder dimension")
}

#[derive(Serialize)]
struct HeatmapRow {
    performer: String,
    concept: u32,
    clip_id: String,
    score: f64,
    file: PathBuf,
}

pub fn concepts(ctx: &mut RunContext) -> Result<()> {
    let p: ConceptParams = ctx.params()?;
    let Some(exercise_path) = p.exercises.clone() else {
        return Err(Error::validation("concepts needs an `exercises` file in --config"));
    };
    let external = match (&p.activations, &p.activation_ids) {
        (Some(m), Some(ids)) => {
            let (names, values) = read_activations(m, ids)?;
            let rows = names.into_iter().enumerate().map(|(i, n)| (n, i)).collect();
            Some(External { rows, values })
        }
        (None, None) => None,
        _ => return Err(Error::validation("`activations` and `activation_ids` must be given together")),
    };

    let mut variants: BTreeMap<u32, Vec<_>> = BTreeMap::new();
    for e in read_exercises(&exercise_path)? {
        variants.entry(e.concept_id).or_default().extend(expand_concept(&e));
    }
    let concept_acts = variants
        .iter()
        .map(|(&id, vs)| {
            let acts = match &external {
                Some(ext) => {
                    let ids: Vec<String> = (0..vs.len()).map(|k| format!("concept/{id}/{k}")).collect();
                    ext.select(&ids)?
                }
                None => {
                    let e = PoolEmbedder;
                    let rows: Vec<Vec<f64>> = vs.par_iter().map(|v| e.embed(&v.render())).collect();
                    Array2::from_shape_vec((rows.len(), e.dim()), rows.concat()).expect("embedder dimension")
                }
            };
            Ok(ConceptActivations { concept_id: id, acts })
        })
        .collect::<Result<Vec<_>>>()?;

    let (_, clips) = subset_clips(ctx, p.split, p.hop)?;
    let mut by_performer: BTreeMap<String, Vec<&Clip>> = BTreeMap::new();
    for (_, c) in &clips {
        by_performer.entry(c.performer.clone()).or_default().push(c);
    }
    let performer_acts = by_performer
        .iter()
        .map(|(name, cs)| {
            let acts = match &external {
                Some(ext) => ext.select(&cs.iter().map(|c| c.id()).collect::<Vec<_>>())?,
                None => embed_clips(cs),
            };
            Ok(PerformerActivations {
                performer: name.clone(),
                acts,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = sign_count_experiment(&concept_acts, &performer_acts, p.iterations, ctx.seed())?;
    let tests = test_sign_counts(&rows, p.bonferroni);
    ctx.write_table("sign_counts", |path| write_sign_counts_csv(path, &rows))?;
    ctx.write_table("sign_counts_tested", |path| write_sign_count_tests_csv(path, &tests))?;

    let performers: Vec<String> = by_performer.keys().cloned().collect();
    let concept_ids: Vec<u32> = variants.keys().copied().collect();
    let ratios = ratio_matrix(&tests, &performers, &concept_ids);
    let concept_names: Vec<String> = concept_ids.iter().map(|c| c.to_string()).collect();
    for (file, m, labels) in [
        ("dendrogram.json", ratios.clone(), performers.clone()),
        ("dendrogram_concepts.json", ratios.t().to_owned(), concept_names),
    ] {
        match cluster(m.view(), labels) {
            Ok(d) => d.write_json(&ctx.artifact(file))?,
            Err(e) if !e.is_io() => ctx.note(format!("{file} skipped: {e}")),
            Err(e) => return Err(e),
        }
    }

    let significant: Vec<_> = tests.iter().filter(|t| t.p_corrected < SIGNIFICANCE).collect();
    println!(
        "{} performers x {} concepts, {} significant after correction",
        performers.len(),
        concept_ids.len(),
        significant.len()
    );
    if !p.heatmaps || significant.is_empty() {
        return Ok(());
    }
    if external.is_some() {
        ctx.note("heatmaps need the built-in embedder and were skipped for external activations");
        return Ok(());
    }
    if significant.len() > p.max_heatmaps {
        ctx.note(format!(
            "{} significant pairs; heatmaps limited to the first {}",
            significant.len(),
            p.max_heatmaps
        ));
    }
    let embedder = PoolEmbedder;
    let mut index = Vec::new();
    for t in significant.into_iter().take(p.max_heatmaps) {
        let ci = concept_ids.iter().position(|c| *c == t.concept).expect("tested concept");
        let concept = &concept_acts[ci];
        let others: Vec<_> = concept_acts
            .iter()
            .filter(|c| c.concept_id != t.concept)
            .map(|c| c.acts.view())
            .collect();
        let pool = concatenate(Axis(0), &others).expect("equal widths");
        let cav_seed = seed::derive(ctx.seed(), "heatmap-cav", t.concept as u64);
        let n = concept.acts.nrows().min(pool.nrows());
        let pick = sample(&mut seed::rng(cav_seed, "random-set", 0), pool.nrows(), n).into_vec();
        let cav = train_cav(concept.acts.view(), pool.select(Axis(0), &pick).view(), t.concept, cav_seed)?;
        let cs = &by_performer[&t.performer];
        let best = most_distinctive_clip(cs, |c| {
            concept_score(&embedder.embed(&harmony_roll(c)), &cav).unwrap_or(f64::NEG_INFINITY)
        })
        .expect("performer has clips");
        let clip = cs[best];
        let map = match masked_sensitivity(clip, harmony_roll, &embedder, &cav, p.mask) {
            Ok(m) => m,
            Err(e) if !e.is_io() => {
                ctx.note(format!("{} / concept {}: {e}", t.performer, t.concept));
                continue;
            }
            Err(e) => return Err(e),
        };
        let file = PathBuf::from(format!("heatmap_{}_{}.roll", file_stem(&t.performer), t.concept));
        write_matrix(&ctx.artifact(&file), &map.heatmap)?;
        index.push(HeatmapRow {
            performer: t.performer.clone(),
            concept: t.concept,
            clip_id: clip.id(),
            score: map.score,
            file,
        });
    }
    ctx.write_table("heatmaps", |path| {
        let mut w = csv::Writer::from_path(path)?;
        for r in &index {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    })?;
    Ok(())
}
