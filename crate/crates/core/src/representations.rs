//! The four factorised piano rolls of a clip.
//!
//! * melody: skyline notes laid out at equal spacing, binary.
//! * harmony: chords of at least three distinct pitches at equal spacing, binary.
//! * rhythm: original timing with every note moved to a random pitch, binary.
//! * dynamics: onset bins at equal spacing on random pitches, valued `velocity / 127`.
//!
//! Equal spacing divides the 3000 columns among the items by largest
//! remainder: every span is `3000 / m` columns and the first `3000 % m` spans
//! get one extra.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::roll::{note_columns, pitch_row};
use crate::corpus::{Clip, PianoRoll, MAX_PITCH, MIN_PITCH, ROLL_HEIGHT, ROLL_WIDTH};
use crate::error::Result;
use crate::features::{quantise, skyline};
use crate::seed;

/// Onset bin width for melody, harmony and dynamics rolls, seconds.
pub const BIN_SECONDS: f64 = 0.1;
/// Default minimum number of distinct pitches for a harmony bin.
pub const MIN_CHORD_NOTES: usize = 3;
const MAX_REDRAWS: usize = 10_000;

/// Splits `total` columns into `m` contiguous spans whose widths differ by at
/// most one and sum to `total`.
pub fn equal_spans(m: usize, total: usize) -> Vec<(usize, usize)> {
    if m == 0 {
        return Vec::new();
    }
    let (base, extra) = (total / m, total % m);
    let mut start = 0;
    (0..m)
        .map(|i| {
            let w = base + usize::from(i < extra);
            let span = (start, start + w);
            start += w;
            span
        })
        .collect()
}

/// Skyline melody at equal inter-onset spacing.
pub fn melody_roll(c: &Clip) -> PianoRoll {
    let melody = skyline(&quantise(&c.notes, BIN_SECONDS));
    let mut roll = PianoRoll::zeros();
    for (m, (a, b)) in melody.iter().zip(equal_spans(melody.len(), ROLL_WIDTH)) {
        roll.paint(pitch_row(m.pitch), a, b, 1.0);
    }
    roll
}

/// Lays out pitch sets left to right at equal spacing, one span per chord.
pub fn render_chords(chords: &[Vec<u8>]) -> PianoRoll {
    let mut roll = PianoRoll::zeros();
    for (chord, (a, b)) in chords.iter().zip(equal_spans(chords.len(), ROLL_WIDTH)) {
        for &p in chord {
            roll.paint(pitch_row(p), a, b, 1.0);
        }
    }
    roll
}

/// Distinct-pitch sets of the onset bins holding at least `min_notes` of them.
pub fn chord_bins(c: &Clip, min_notes: usize) -> Vec<Vec<u8>> {
    quantise(&c.notes, BIN_SECONDS)
        .iter()
        .map(|f| f.distinct_pitches())
        .filter(|p| p.len() >= min_notes)
        .collect()
}

pub fn harmony_roll(c: &Clip) -> PianoRoll {
    harmony_roll_with(c, MIN_CHORD_NOTES)
}

pub fn harmony_roll_with(c: &Clip, min_notes: usize) -> PianoRoll {
    render_chords(&chord_bins(c, min_notes))
}

/// Column spans painted by the unified roll, one per row segment. Notes on
/// the same pitch whose spans overlap form one segment, because the unified
/// roll cannot tell them apart either.
fn timing_segments(c: &Clip) -> Vec<(usize, usize)> {
    // notes arrive sorted by onset, so only a row's latest segment can overlap
    let mut segments: Vec<(usize, usize)> = Vec::new();
    let mut latest: Vec<Option<usize>> = vec![None; ROLL_HEIGHT];
    for n in &c.notes {
        let Some((a, b)) = note_columns(n) else { continue };
        let row = pitch_row(n.pitch);
        match latest[row] {
            Some(i) if a < segments[i].1 => segments[i].1 = segments[i].1.max(b),
            _ => {
                latest[row] = Some(segments.len());
                segments.push((a, b));
            }
        }
    }
    segments
}

/// Source timing with random pitches. A drawn row that is already painted
/// anywhere in the segment's span is redrawn, so no two notes merge.
pub fn rhythm_roll(c: &Clip, seed: u64) -> PianoRoll {
    let mut rng = seed::rng(seed, "rhythm", 0);
    let mut roll = PianoRoll::zeros();
    for (a, b) in timing_segments(c) {
        let mut row = 0;
        for _ in 0..MAX_REDRAWS {
            row = pitch_row(rng.gen_range(MIN_PITCH..=MAX_PITCH));
            if (a..b).all(|col| roll.get(row, col) == 0.0) {
                break;
            }
        }
        roll.paint(row, a, b, 1.0);
    }
    roll
}

/// Onset bins at equal spacing; each note of a bin gets a distinct random
/// row and the value `velocity / 127`.
pub fn dynamics_roll(c: &Clip, seed: u64) -> PianoRoll {
    let mut rng = seed::rng(seed, "dynamics", 0);
    let frames = quantise(&c.notes, BIN_SECONDS);
    let mut roll = PianoRoll::zeros();
    for (f, (a, b)) in frames.iter().zip(equal_spans(frames.len(), ROLL_WIDTH)) {
        let rows = sample(&mut rng, ROLL_HEIGHT, f.notes.len().min(ROLL_HEIGHT));
        for (n, row) in f.notes.iter().zip(rows) {
            roll.paint(row, a, b, n.velocity as f32 / 127.0);
        }
    }
    roll
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorisedRolls {
    pub clip_id: String,
    pub melody: PianoRoll,
    pub harmony: PianoRoll,
    pub rhythm: PianoRoll,
    pub dynamics: PianoRoll,
}

pub fn factorise(c: &Clip, seed: u64) -> FactorisedRolls {
    FactorisedRolls {
        clip_id: c.id(),
        melody: melody_roll(c),
        harmony: harmony_roll(c),
        rhythm: rhythm_roll(c, seed),
        dynamics: dynamics_roll(c, seed),
    }
}

/// Where the four rolls of one clip were written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollFiles {
    pub clip_id: String,
    pub melody: PathBuf,
    pub harmony: PathBuf,
    pub rhythm: PathBuf,
    pub dynamics: PathBuf,
}

impl FactorisedRolls {
    /// Writes `<stem>.<kind>.roll` files into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<RollFiles> {
        let path = |kind: &str| dir.join(format!("{stem}.{kind}.roll"));
        let files = RollFiles {
            clip_id: self.clip_id.clone(),
            melody: path("melody"),
            harmony: path("harmony"),
            rhythm: path("rhythm"),
            dynamics: path("dynamics"),
        };
        self.melody.write(&files.melody)?;
        self.harmony.write(&files.harmony)?;
        self.rhythm.write(&files.rhythm)?;
        self.dynamics.write(&files.dynamics)?;
        Ok(files)
    }
}
