//! A synthetic corpus with planted performer signatures.
//!
//! Every recording is a sequence of short segments separated by silences
//! longer than the n-gram gap limit, so each segment yields features on its
//! own. A segment is a melodic phrase, a single chord or a random-walk noise
//! phrase. Phrases and chords come from a pool shared by every performer
//! plus a handful of patterns private to each performer, which are drawn
//! `signature_weight` times as often as any shared one.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_manifest, write_note_file, DatasetTag, ManifestRecord, NoteEvent, Transcription};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub performers: usize,
    pub recordings_per_performer: usize,
    pub signature_ngrams: usize,
    pub signature_voicings: usize,
    /// Draw weight of a signature pattern relative to a shared one.
    pub signature_weight: f64,
    pub common_ngrams: usize,
    pub common_voicings: usize,
    pub segments_per_recording: usize,
    /// Share of segments that are random-walk noise.
    pub noise: f64,
    /// Share of non-noise segments that are chords.
    pub chord_share: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            performers: 10,
            recordings_per_performer: 40,
            signature_ngrams: 5,
            signature_voicings: 3,
            signature_weight: 3.0,
            common_ngrams: 20,
            common_voicings: 10,
            segments_per_recording: 40,
            noise: 0.2,
            chord_share: 0.3,
            seed: 0,
        }
    }
}

const PHRASE_LEN: usize = 5;
const NOTE_STEP: f64 = 0.25;
const NOTE_LENGTH: f64 = 0.2;
const SEGMENT_GAP: f64 = 2.5;

/// The patterns planted for one performer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformerStyle {
    pub name: String,
    pub ngrams: Vec<Vec<i8>>,
    pub voicings: Vec<Vec<i8>>,
}

fn random_phrase(rng: &mut ChaCha8Rng) -> Vec<i8> {
    loop {
        let mut p = vec![0i8];
        for _ in 1..PHRASE_LEN {
            let step = rng.gen_range(-5i8..=5);
            p.push(p.last().unwrap() + step);
        }
        let lo = *p.iter().min().unwrap();
        let hi = *p.iter().max().unwrap();
        if hi - lo <= 12 && hi != lo {
            return p;
        }
    }
}

fn random_voicing(rng: &mut ChaCha8Rng) -> Vec<i8> {
    let size = rng.gen_range(3..=5);
    let mut v = vec![0i8];
    for _ in 1..size {
        v.push(v.last().unwrap() + rng.gen_range(2i8..=7));
    }
    v
}

/// Shared pools plus one style per performer, all distinct.
pub fn styles(cfg: &SyntheticConfig) -> (Vec<Vec<i8>>, Vec<Vec<i8>>, Vec<PerformerStyle>) {
    let mut rng = seed::rng(cfg.seed, "synthetic-styles", 0);
    let mut phrases = HashSet::new();
    let mut chords = HashSet::new();
    let common_ngrams = {
        let mut v = Vec::new();
        while v.len() < cfg.common_ngrams {
            let p = random_phrase(&mut rng);
            if phrases.insert(p.clone()) {
                v.push(p);
            }
        }
        v
    };
    let common_voicings = {
        let mut v = Vec::new();
        while v.len() < cfg.common_voicings {
            let p = random_voicing(&mut rng);
            if chords.insert(p.clone()) {
                v.push(p);
            }
        }
        v
    };
    let styles = (0..cfg.performers)
        .map(|i| {
            let mut ngrams = Vec::new();
            while ngrams.len() < cfg.signature_ngrams {
                let p = random_phrase(&mut rng);
                if phrases.insert(p.clone()) {
                    ngrams.push(p);
                }
            }
            let mut voicings = Vec::new();
            while voicings.len() < cfg.signature_voicings {
                let p = random_voicing(&mut rng);
                if chords.insert(p.clone()) {
                    voicings.push(p);
                }
            }
            PerformerStyle {
                name: format!("performer_{i:02}"),
                ngrams,
                voicings,
            }
        })
        .collect();
    (common_ngrams, common_voicings, styles)
}

fn pick<'a>(rng: &mut ChaCha8Rng, common: &'a [Vec<i8>], signature: &'a [Vec<i8>], weight: f64) -> &'a [i8] {
    let total = common.len() as f64 + weight * signature.len() as f64;
    let mut u = rng.gen_range(0.0..total);
    for s in signature {
        if u < weight {
            return s;
        }
        u -= weight;
    }
    let k = (u as usize).min(common.len() - 1);
    &common[k]
}

fn recording(
    cfg: &SyntheticConfig,
    common: &(Vec<Vec<i8>>, Vec<Vec<i8>>),
    style: &PerformerStyle,
    rng: &mut ChaCha8Rng,
) -> Vec<NoteEvent> {
    let mut notes = Vec::new();
    let mut t = 0.0;
    for _ in 0..cfg.segments_per_recording {
        let root: i16 = rng.gen_range(45..=75);
        let u: f64 = rng.gen();
        let velocity = |rng: &mut ChaCha8Rng| rng.gen_range(40u8..=110);
        if u < cfg.noise {
            let phrase = random_phrase(rng);
            for (k, p) in phrase.iter().enumerate() {
                let on = t + k as f64 * NOTE_STEP;
                notes.push(NoteEvent::new(on, on + NOTE_LENGTH, (root + *p as i16) as u8, velocity(rng)));
            }
            t += PHRASE_LEN as f64 * NOTE_STEP;
        } else if rng.gen_bool(cfg.chord_share) {
            let v = pick(rng, &common.1, &style.voicings, cfg.signature_weight);
            let root = root - 12;
            let v_rng = velocity(rng);
            for p in v {
                notes.push(NoteEvent::new(t, t + 0.8, (root + *p as i16) as u8, v_rng));
            }
            t += 0.8;
        } else {
            let phrase = pick(rng, &common.0, &style.ngrams, cfg.signature_weight);
            for (k, p) in phrase.iter().enumerate() {
                let on = t + k as f64 * NOTE_STEP;
                notes.push(NoteEvent::new(on, on + NOTE_LENGTH, (root + *p as i16) as u8, velocity(rng)));
            }
            t += PHRASE_LEN as f64 * NOTE_STEP;
        }
        t += SEGMENT_GAP;
    }
    notes
}

/// Generates the corpus. Recording `k` of a performer is tagged solo when
/// `k` is even and trio otherwise.
pub fn generate(cfg: &SyntheticConfig) -> Result<Vec<Transcription>> {
    if cfg.performers < 2 || cfg.recordings_per_performer == 0 || cfg.segments_per_recording == 0 {
        return Err(Error::validation("synthetic corpus needs two performers and non-empty recordings"));
    }
    let (cn, cv, styles) = styles(cfg);
    if cn.is_empty() || cv.is_empty() {
        return Err(Error::validation("synthetic corpus needs shared phrases and chords"));
    }
    let common = (cn, cv);
    let mut out = Vec::with_capacity(cfg.performers * cfg.recordings_per_performer);
    for (pi, style) in styles.iter().enumerate() {
        for k in 0..cfg.recordings_per_performer {
            let index = (pi * cfg.recordings_per_performer + k) as u64;
            let mut rng = seed::rng(cfg.seed, "synthetic-recording", index);
            let notes = recording(cfg, &common, style, &mut rng);
            let tag = if k % 2 == 0 { DatasetTag::Solo } else { DatasetTag::Trio };
            out.push(Transcription::new(format!("{}_{k:03}", style.name), style.name.clone(), tag, notes)?);
        }
    }
    Ok(out)
}

/// Writes `notes/<id>.jsonl` files and `manifest.csv` into `dir` and returns
/// the manifest path.
pub fn write_corpus(dir: &Path, corpus: &[Transcription]) -> Result<PathBuf> {
    let notes_dir = dir.join("notes");
    std::fs::create_dir_all(&notes_dir).map_err(|e| Error::io(&notes_dir, e))?;
    let mut records = Vec::with_capacity(corpus.len());
    for t in corpus {
        let rel = PathBuf::from("notes").join(format!("{}.jsonl", t.recording_id));
        write_note_file(&dir.join(&rel), t.notes())?;
        records.push(ManifestRecord {
            recording_id: t.recording_id.clone(),
            performer: t.performer.clone(),
            dataset_tag: t.dataset_tag,
            path: rel,
        });
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &records)?;
    Ok(manifest)
}
