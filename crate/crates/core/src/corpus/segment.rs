use super::{Clip, NoteEvent, Transcription};

/// Length of every clip, seconds.
pub const CLIP_SECONDS: f64 = 30.0;

const EPS: f64 = 1e-9;

/// Cuts a recording into 30 s clips starting every `hop` seconds.
///
/// Windows start at `k * hop` while they fit inside the recording. If notes
/// remain past the last full window (or the recording is shorter than one
/// window) a single trailing partial window is added. A note belongs to the
/// window that contains its onset; its times are re-based to the window start
/// and its offset is left untouched.
///
/// `hop` is clamped to `[15, 30]`.
pub fn segment_clips(t: &Transcription, hop: f64) -> Vec<Clip> {
    let hop = hop.clamp(15.0, CLIP_SECONDS);
    let duration = t.duration();
    let last_onset = t.notes().iter().map(|n| n.onset).fold(0.0, f64::max);

    let mut starts = Vec::new();
    let mut k = 0usize;
    loop {
        let start = k as f64 * hop;
        if start + CLIP_SECONDS > duration + EPS {
            break;
        }
        starts.push(start);
        k += 1;
    }
    let covered = starts.last().map(|s| s + CLIP_SECONDS).unwrap_or(0.0);
    if starts.is_empty() || last_onset >= covered - EPS {
        starts.push(k as f64 * hop);
    }

    starts
        .into_iter()
        .enumerate()
        .map(|(index, start)| {
            let end = start + CLIP_SECONDS;
            let notes: Vec<NoteEvent> = t
                .notes()
                .iter()
                .filter(|n| n.onset >= start - EPS && n.onset < end - EPS)
                .map(|n| NoteEvent {
                    onset: (n.onset - start).max(0.0),
                    offset: n.offset - start,
                    ..*n
                })
                .collect();
            Clip {
                parent_id: t.recording_id.clone(),
                performer: t.performer.clone(),
                index,
                start,
                notes,
            }
        })
        .collect()
}
