use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Feature, FeatureKind};
use crate::corpus::{NoteEvent, Transcription};

/// Per-recording multiset of features.
pub type FeatureCounts = HashMap<Feature, u32>;

/// Extraction parameters. Defaults are the published settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    /// Onset quantisation grid, seconds.
    pub grid: f64,
    pub n_min: usize,
    pub n_max: usize,
    /// Largest allowed pitch range inside one n-gram, semitones.
    pub max_span: i32,
    /// Largest allowed silence between successive melody notes, seconds.
    pub max_gap: f64,
    /// Adjacent-pitch gap in a chord counted as a leap, semitones.
    pub leap: i32,
    /// Chords with this many leaps or more are discarded.
    pub discard_leaps: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            grid: 0.1,
            n_min: 3,
            n_max: 7,
            max_span: 12,
            max_gap: 2.0,
            leap: 15,
            discard_leaps: 2,
        }
    }
}

/// Notes whose onsets snap to the same grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantisedFrame {
    /// Grid index; the frame time is `index * grid`.
    pub index: i64,
    /// Sorted by pitch ascending, then by onset.
    pub notes: Vec<NoteEvent>,
}

impl QuantisedFrame {
    pub fn time(&self, grid: f64) -> f64 {
        self.index as f64 * grid
    }

    /// Distinct pitches in ascending order.
    pub fn distinct_pitches(&self) -> Vec<u8> {
        let mut p: Vec<u8> = self.notes.iter().map(|n| n.pitch).collect();
        p.dedup();
        p
    }
}

/// Highest note of a frame, with its unquantised timing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelodyNote {
    pub pitch: u8,
    pub raw_onset: f64,
    pub raw_offset: f64,
}

/// Grid index nearest to `onset`; exact halves round away from zero.
pub fn quantise_index(onset: f64, grid: f64) -> i64 {
    let x = onset / grid;
    // absorb representation error so that 0.35 / 0.1 counts as a tie
    (x + x.signum() * 1e-9).round() as i64
}

/// Groups notes by onset snapped to the nearest multiple of `grid`.
pub fn quantise(notes: &[NoteEvent], grid: f64) -> Vec<QuantisedFrame> {
    assert!(grid > 0.0, "quantisation grid must be positive");
    let mut keyed: Vec<(i64, NoteEvent)> = notes
        .iter()
        .map(|n| (quantise_index(n.onset, grid), *n))
        .collect();
    keyed.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.pitch.cmp(&b.1.pitch))
            .then(a.1.onset.total_cmp(&b.1.onset))
    });
    let mut frames: Vec<QuantisedFrame> = Vec::new();
    for (index, note) in keyed {
        match frames.last_mut() {
            Some(f) if f.index == index => f.notes.push(note),
            _ => frames.push(QuantisedFrame {
                index,
                notes: vec![note],
            }),
        }
    }
    frames
}

/// One melody note per frame: the highest pitch.
pub fn skyline(frames: &[QuantisedFrame]) -> Vec<MelodyNote> {
    frames
        .iter()
        .filter_map(|f| {
            let top = f.notes.iter().map(|n| n.pitch).max()?;
            // several notes on the top pitch collapse to the earliest one
            let n = f.notes.iter().find(|n| n.pitch == top)?;
            Some(MelodyNote {
                pitch: n.pitch,
                raw_onset: n.onset,
                raw_offset: n.offset,
            })
        })
        .collect()
}

/// Interval pattern of a melodic window, or `None` if a filter rejects it.
pub fn ngram_of(window: &[MelodyNote], cfg: &ExtractConfig) -> Option<Vec<i8>> {
    let first = window.first()?.pitch as i32;
    let (lo, hi) = window.iter().fold((i32::MAX, i32::MIN), |(lo, hi), m| {
        (lo.min(m.pitch as i32), hi.max(m.pitch as i32))
    });
    if hi - lo > cfg.max_span {
        return None;
    }
    if window
        .windows(2)
        // the epsilon keeps a gap of exactly `max_gap` admissible despite rounding
        .any(|w| w[1].raw_onset - w[0].raw_offset > cfg.max_gap + 1e-9)
    {
        return None;
    }
    Some(window.iter().map(|m| (m.pitch as i32 - first) as i8).collect())
}

/// Counts every admissible n-gram for `n` in `n_min..=n_max`.
pub fn extract_ngrams(melody: &[MelodyNote], cfg: &ExtractConfig) -> FeatureCounts {
    let mut counts = FeatureCounts::new();
    for n in cfg.n_min..=cfg.n_max {
        if n == 0 || n > melody.len() {
            continue;
        }
        for window in melody.windows(n) {
            if let Some(intervals) = ngram_of(window, cfg) {
                *counts.entry(Feature::new(FeatureKind::Melody, intervals)).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Voicing of a set of distinct ascending pitches, or `None` if rejected by
/// the size or leap filters.
pub fn voicing_of(pitches: &[u8], cfg: &ExtractConfig) -> Option<Vec<i8>> {
    if pitches.len() < cfg.n_min || pitches.len() > cfg.n_max {
        return None;
    }
    let leaps = pitches
        .windows(2)
        .filter(|w| (w[1] as i32 - w[0] as i32) > cfg.leap)
        .count();
    if leaps >= cfg.discard_leaps {
        return None;
    }
    let bass = pitches[0] as i32;
    Some(pitches.iter().map(|p| (*p as i32 - bass) as i8).collect())
}

/// Counts the chord voicings of every frame with an admissible size.
pub fn extract_voicings(frames: &[QuantisedFrame], cfg: &ExtractConfig) -> FeatureCounts {
    let mut counts = FeatureCounts::new();
    for f in frames {
        if let Some(offsets) = voicing_of(&f.distinct_pitches(), cfg) {
            *counts.entry(Feature::new(FeatureKind::Harmony, offsets)).or_insert(0) += 1;
        }
    }
    counts
}

/// Melody n-grams and chord voicings of one recording.
pub fn extract_features(notes: &[NoteEvent], cfg: &ExtractConfig) -> FeatureCounts {
    let frames = quantise(notes, cfg.grid);
    let mut counts = extract_ngrams(&skyline(&frames), cfg);
    counts.extend(extract_voicings(&frames, cfg));
    counts
}

/// Features of every transcription, in input order.
pub fn extract_all(corpus: &[Transcription], cfg: &ExtractConfig) -> Vec<FeatureCounts> {
    corpus.par_iter().map(|t| extract_features(t.notes(), cfg)).collect()
}
