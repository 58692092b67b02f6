//! Clip augmentation: bounded pitch shift, time dilation with right-edge
//! refill from the parent recording, and per-note velocity jitter, all
//! behind a single apply gate.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{sort_notes, Clip, NoteEvent, CLIP_SECONDS, MAX_PITCH, MIN_PITCH};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Largest transposition, semitones.
    pub max_shift: u8,
    pub dilation_range: (f64, f64),
    pub velocity_delta: u8,
    pub apply_probability: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            max_shift: 6,
            dilation_range: (0.8, 1.2),
            velocity_delta: 12,
            apply_probability: 0.5,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.dilation_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::validation(format!("invalid dilation range ({lo}, {hi})")));
        }
        if !(0.0..=1.0).contains(&self.apply_probability) {
            return Err(Error::validation(format!(
                "apply probability {} outside [0, 1]",
                self.apply_probability
            )));
        }
        Ok(())
    }
}

/// The augmented clip and the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentOutcome {
    #[serde(skip)]
    pub notes: Vec<NoteEvent>,
    pub applied: bool,
    pub shift: i8,
    pub dilation: f64,
    /// The clip was compressed but no parent notes were available to refill
    /// its right edge.
    pub refill_missing: bool,
}

fn with_notes(c: &Clip, mut notes: Vec<NoteEvent>) -> Clip {
    sort_notes(&mut notes);
    Clip {
        notes,
        ..c.clone()
    }
}

/// Largest shift keeping every pitch in range, capped at `max_shift`.
pub fn shift_bound(c: &Clip, max_shift: u8) -> u8 {
    let lo = c.notes.iter().map(|n| n.pitch).min().unwrap_or(MIN_PITCH);
    let hi = c.notes.iter().map(|n| n.pitch).max().unwrap_or(MAX_PITCH);
    max_shift.min(lo - MIN_PITCH).min(MAX_PITCH - hi)
}

/// Transposes every note by `s`. The caller keeps `s` within bounds.
pub fn shift_pitches(c: &Clip, s: i8) -> Clip {
    let notes = c
        .notes
        .iter()
        .map(|n| NoteEvent {
            pitch: (n.pitch as i16 + s as i16) as u8,
            ..*n
        })
        .collect();
    with_notes(c, notes)
}

/// Draws `s` uniformly from `[-S, S]` and transposes.
pub fn pitch_shift(c: &Clip, max_shift: u8, rng: &mut ChaCha8Rng) -> (Clip, i8) {
    let bound = shift_bound(c, max_shift) as i8;
    let s = rng.gen_range(-bound..=bound);
    (shift_pitches(c, s), s)
}

/// Scales times by `t`.
///
/// Stretching (`t > 1`) removes notes whose scaled onset reaches 30 s or
/// whose scaled offset passes it. Compressing (`t < 1`) appends the
/// `parent` notes that begin after the clip but whose scaled onset lands
/// inside it. `parent` is in recording time; its notes are transposed by
/// `shift` so they match an already shifted clip, and dropped if that takes
/// them out of range. Returns the flag for a compression without parent.
pub fn dilate(c: &Clip, parent: Option<&[NoteEvent]>, t: f64, shift: i8) -> (Clip, bool) {
    let scale = |n: &NoteEvent| NoteEvent {
        onset: n.onset * t,
        offset: n.offset * t,
        ..*n
    };
    let mut notes: Vec<NoteEvent> = c.notes.iter().map(scale).collect();
    if t > 1.0 {
        notes.retain(|n| n.onset < CLIP_SECONDS && n.offset <= CLIP_SECONDS);
    }
    let mut missing = false;
    if t < 1.0 {
        match parent {
            Some(parent) => {
                for p in parent {
                    let local = p.onset - c.start;
                    if local < CLIP_SECONDS || local * t >= CLIP_SECONDS {
                        continue;
                    }
                    let pitch = p.pitch as i16 + shift as i16;
                    if !(MIN_PITCH as i16..=MAX_PITCH as i16).contains(&pitch) {
                        continue;
                    }
                    notes.push(NoteEvent {
                        onset: local * t,
                        offset: (p.offset - c.start) * t,
                        pitch: pitch as u8,
                        velocity: p.velocity,
                    });
                }
            }
            None => missing = true,
        }
    }
    (with_notes(c, notes), missing)
}

/// Draws `t` uniformly from `range` and dilates.
pub fn time_dilate(
    c: &Clip,
    parent: Option<&[NoteEvent]>,
    range: (f64, f64),
    shift: i8,
    rng: &mut ChaCha8Rng,
) -> (Clip, f64, bool) {
    let t = if range.0 == range.1 {
        range.0
    } else {
        rng.gen_range(range.0..=range.1)
    };
    let (clip, missing) = dilate(c, parent, t, shift);
    (clip, t, missing)
}

/// Adds an independent integer in `[-delta, delta]` to each velocity and
/// clamps to `[1, 127]`.
pub fn velocity_jitter(c: &Clip, delta: u8, rng: &mut ChaCha8Rng) -> Clip {
    let d = delta as i16;
    let notes = c
        .notes
        .iter()
        .map(|n| NoteEvent {
            velocity: (n.velocity as i16 + rng.gen_range(-d..=d)).clamp(1, 127) as u8,
            ..*n
        })
        .collect();
    with_notes(c, notes)
}

/// One gate draw, then pitch shift, time dilation and velocity jitter in
/// that order. A pure function of its arguments.
pub fn augment(c: &Clip, parent: Option<&[NoteEvent]>, cfg: &AugmentConfig, seed: u64) -> (Clip, AugmentOutcome) {
    let mut rng = seed::rng(seed, "augment", 0);
    if !rng.gen_bool(cfg.apply_probability) {
        let outcome = AugmentOutcome {
            notes: c.notes.clone(),
            applied: false,
            shift: 0,
            dilation: 1.0,
            refill_missing: false,
        };
        return (c.clone(), outcome);
    }
    let (shifted, s) = pitch_shift(c, cfg.max_shift, &mut rng);
    let (dilated, t, missing) = time_dilate(&shifted, parent, cfg.dilation_range, s, &mut rng);
    let out = velocity_jitter(&dilated, cfg.velocity_delta, &mut rng);
    let outcome = AugmentOutcome {
        notes: out.notes.clone(),
        applied: true,
        shift: s,
        dilation: t,
        refill_missing: missing,
    };
    (out, outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(pitches: &[(f64, u8)]) -> Clip {
        Clip::from_notes("r", "p", pitches.iter().map(|&(t, p)| NoteEvent::new(t, t + 0.5, p, 64)).collect())
    }

    #[test]
    fn shift_bounds() {
        assert_eq!(shift_bound(&clip(&[(0.0, 30), (1.0, 100)]), 6), 6);
        assert_eq!(shift_bound(&clip(&[(0.0, 23), (1.0, 107)]), 6), 1);
        let pinned = clip(&[(0.0, 21), (1.0, 60)]);
        assert_eq!(shift_bound(&pinned, 6), 0);
        let mut rng = seed::rng(0, "t", 0);
        assert_eq!(pitch_shift(&pinned, 6, &mut rng).0, pinned);
    }

    #[test]
    fn stretch_drops_notes_past_the_end() {
        let c = clip(&[(1.0, 60), (29.0, 62)]);
        let (d, missing) = dilate(&c, None, 1.1, 0);
        assert!(!missing);
        assert_eq!(d.notes.len(), 1);
        assert!((d.notes[0].onset - 1.1).abs() < 1e-12);
        assert_eq!(dilate(&c, None, 1.0, 0).0, c);
    }

    #[test]
    fn compression_refills_from_parent() {
        let c = clip(&[(1.0, 60)]);
        let parent = vec![NoteEvent::new(1.0, 1.5, 60, 64), NoteEvent::new(31.0, 31.5, 70, 64), NoteEvent::new(34.0, 35.0, 72, 64)];
        let (d, missing) = dilate(&c, Some(&parent), 0.9, 2);
        assert!(!missing);
        assert_eq!(d.notes.len(), 2);
        let refill = d.notes[1];
        assert!((refill.onset - 27.9).abs() < 1e-9);
        assert_eq!(refill.pitch, 72);
        let (_, missing) = dilate(&c, None, 0.9, 0);
        assert!(missing);
    }

    #[test]
    fn velocity_clamps() {
        let mut rng = seed::rng(1, "t", 0);
        let loud = Clip::from_notes("r", "p", vec![NoteEvent::new(0.0, 1.0, 60, 127); 200]);
        let quiet = Clip::from_notes("r", "p", vec![NoteEvent::new(0.0, 1.0, 60, 1); 200]);
        assert!(velocity_jitter(&loud, 12, &mut rng).notes.iter().all(|n| (115..=127).contains(&n.velocity)));
        assert!(velocity_jitter(&quiet, 12, &mut rng).notes.iter().all(|n| (1..=13).contains(&n.velocity)));
    }

    #[test]
    fn gate_off_is_identity() {
        let c = clip(&[(1.0, 60), (2.0, 64)]);
        let cfg = AugmentConfig {
            apply_probability: 0.0,
            ..Default::default()
        };
        let (out, o) = augment(&c, None, &cfg, 3);
        assert_eq!(out, c);
        assert!(!o.applied);
        let always = AugmentConfig {
            apply_probability: 1.0,
            ..Default::default()
        };
        assert_eq!(augment(&c, None, &always, 3), augment(&c, None, &always, 3));
        assert!(augment(&c, None, &always, 3).1.applied);
    }
}
