use serde::{Deserialize, Serialize};
use stylus_core::corpus::{assign_splits, segment_clips, write_split_file, Split, SplitRatios, CLIP_SECONDS};
use stylus_core::features::{build_vocabulary, count_matrix, extract_all, write_feature_dump, write_vocabulary, ExtractConfig, TfIdf};
use stylus_core::synthetic::{generate, write_corpus, SyntheticConfig};
use stylus_core::{Error, Result};

use crate::run::{write_json, RunContext};
use crate::workspace::{load_corpus, manifest_records, FEATURES_FILE, IDF_FILE, SPLITS_FILE, VOCABULARY_FILE};

pub fn gen_synthetic(ctx: &mut RunContext) -> Result<()> {
    let mut cfg: SyntheticConfig = ctx.params()?;
    cfg.seed = ctx.seed();
    ctx.set_param("seed", cfg.seed)?;
    let corpus = generate(&cfg)?;
    let manifest = write_corpus(ctx.dir(), &corpus)?;
    ctx.artifact("manifest.csv");
    ctx.artifact("notes");
    println!("wrote {} recordings to {}", corpus.len(), manifest.display());
    Ok(())
}

#[derive(Serialize)]
struct RecordingSummary {
    recording_id: String,
    performer: String,
    dataset_tag: String,
    notes: usize,
    duration_seconds: f64,
    clips: usize,
}

/// Loads every note file, reporting all invalid recordings at once.
pub fn ingest(ctx: &mut RunContext) -> Result<()> {
    let records = manifest_records(ctx)?;
    let mut rows = Vec::with_capacity(records.len());
    let mut problems = Vec::new();
    for r in &records {
        match load_corpus(std::slice::from_ref(r)) {
            Ok(mut t) => {
                let t = t.remove(0);
                rows.push(RecordingSummary {
                    recording_id: t.recording_id.clone(),
                    performer: t.performer.clone(),
                    dataset_tag: t.dataset_tag.to_string(),
                    notes: t.notes().len(),
                    duration_seconds: t.duration(),
                    clips: segment_clips(&t, CLIP_SECONDS).len(),
                });
            }
            Err(e) if e.is_io() => return Err(e),
            Err(e) => problems.push(format!("{}: {e}", r.recording_id)),
        }
    }
    if !problems.is_empty() {
        return Err(Error::validation(format!(
            "{} invalid recording(s):\n  {}",
            problems.len(),
            problems.join("\n  ")
        )));
    }
    ctx.write_table("recordings", |path| {
        let mut w = csv::Writer::from_path(path)?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    })?;
    let performers: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.performer.as_str()).collect();
    println!("{} recordings by {} performers are valid", rows.len(), performers.len());
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct SplitParams {
    train: u32,
    validation: u32,
    test: u32,
}

impl Default for SplitParams {
    fn default() -> Self {
        let r = SplitRatios::default();
        SplitParams {
            train: r.train,
            validation: r.validation,
            test: r.test,
        }
    }
}

pub fn split(ctx: &mut RunContext) -> Result<()> {
    let p: SplitParams = ctx.params()?;
    if p.train == 0 {
        return Err(Error::validation("the training share must be positive"));
    }
    let records = manifest_records(ctx)?;
    let ratios = SplitRatios {
        train: p.train,
        validation: p.validation,
        test: p.test,
    };
    let splits = assign_splits(&records, ratios, ctx.seed())?;
    write_split_file(&ctx.artifact(SPLITS_FILE), &splits)?;
    let count = |s: Split| splits.values().filter(|v| **v == s).count();
    println!(
        "train {}, validation {}, test {}",
        count(Split::Train),
        count(Split::Validation),
        count(Split::Test)
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct ExtractParams {
    #[serde(flatten)]
    extract: ExtractConfig,
    min_df: usize,
    max_df: usize,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams {
            extract: ExtractConfig::default(),
            min_df: 10,
            max_df: 1000,
        }
    }
}

/// Features of every recording; the vocabulary and idf weights are fitted
/// on the whole corpus, which uses no labels.
pub fn extract(ctx: &mut RunContext) -> Result<()> {
    let p: ExtractParams = ctx.params()?;
    let e = &p.extract;
    if !(e.grid > 0.0) || e.n_min < 2 || e.n_min > e.n_max || p.min_df > p.max_df {
        return Err(Error::validation(
            "extraction needs grid > 0, 2 <= n_min <= n_max and min_df <= max_df",
        ));
    }
    let records = manifest_records(ctx)?;
    let corpus = load_corpus(&records)?;
    let feats = extract_all(&corpus, e);
    let vocab = build_vocabulary(&feats, p.min_df, p.max_df);
    if vocab.is_empty() {
        ctx.note(format!(
            "no feature occurs in {} to {} recordings; the vocabulary is empty",
            p.min_df, p.max_df
        ));
    }
    let counts = count_matrix(&feats, &vocab);
    let idf = TfIdf::fit(counts.view());
    let dump: Vec<(String, _)> = records.iter().map(|r| r.recording_id.clone()).zip(feats).collect();
    write_feature_dump(&ctx.artifact(FEATURES_FILE), &dump)?;
    write_vocabulary(&ctx.artifact(VOCABULARY_FILE), &vocab)?;
    write_json(&ctx.artifact(IDF_FILE), &idf)?;
    let melody = vocab.features().iter().filter(|f| f.kind == stylus_core::features::FeatureKind::Melody).count();
    println!(
        "{} recordings, {} features kept ({melody} melody, {} harmony)",
        records.len(),
        vocab.len(),
        vocab.len() - melody
    );
    Ok(())
}
