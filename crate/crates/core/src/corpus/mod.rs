//! Note-event ingestion, stratified splits, clip segmentation and piano rolls.

pub(crate) mod roll;
mod segment;
mod split;

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use roll::{
    read_matrix, time_to_column, to_piano_roll, write_matrix, PianoRoll, FRAMES_PER_SECOND,
    ROLL_HEIGHT, ROLL_WIDTH,
};
pub use segment::{segment_clips, CLIP_SECONDS};
pub use split::{assign_splits, read_split_file, write_split_file, Split, SplitAssignment, SplitRatios};

/// Lowest MIDI pitch on an 88-key piano (A0).
pub const MIN_PITCH: u8 = 21;
/// Highest MIDI pitch on an 88-key piano (C8).
pub const MAX_PITCH: u8 = 108;

/// A single timed note.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub onset: f64,
    pub offset: f64,
    pub pitch: u8,
    pub velocity: u8,
}

impl NoteEvent {
    pub fn new(onset: f64, offset: f64, pitch: u8, velocity: u8) -> Self {
        NoteEvent {
            onset,
            offset,
            pitch,
            velocity,
        }
    }

    /// Checks the note invariants, returning a description of the first
    /// violation.
    pub fn check(&self) -> std::result::Result<(), String> {
        if !self.onset.is_finite() || self.onset < 0.0 {
            return Err(format!("onset {} must be finite and non-negative", self.onset));
        }
        if !self.offset.is_finite() || self.offset <= self.onset {
            return Err(format!(
                "offset {} must be greater than onset {}",
                self.offset, self.onset
            ));
        }
        if !(MIN_PITCH..=MAX_PITCH).contains(&self.pitch) {
            return Err(format!("pitch {} outside {MIN_PITCH}..={MAX_PITCH}", self.pitch));
        }
        if !(1..=127).contains(&self.velocity) {
            return Err(format!("velocity {} outside 1..=127", self.velocity));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }
}

/// Sorts notes by `(onset, pitch)`.
pub fn sort_notes(notes: &mut [NoteEvent]) {
    notes.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.pitch.cmp(&b.pitch)));
}

/// Source database of a recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetTag {
    Solo,
    Trio,
}

impl DatasetTag {
    pub const ALL: [DatasetTag; 2] = [DatasetTag::Solo, DatasetTag::Trio];

    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetTag::Solo => "solo",
            DatasetTag::Trio => "trio",
        }
    }
}

impl fmt::Display for DatasetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "solo" => Ok(DatasetTag::Solo),
            "trio" => Ok(DatasetTag::Trio),
            other => Err(Error::validation(format!(
                "unknown dataset_tag {other:?} (expected solo or trio)"
            ))),
        }
    }
}

/// A full recording: its notes plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcription {
    pub recording_id: String,
    pub performer: String,
    pub dataset_tag: DatasetTag,
    notes: Vec<NoteEvent>,
}

impl Transcription {
    /// Validates and sorts `notes`. Fails on an empty list or any invalid note.
    pub fn new(
        recording_id: impl Into<String>,
        performer: impl Into<String>,
        dataset_tag: DatasetTag,
        mut notes: Vec<NoteEvent>,
    ) -> Result<Self> {
        let recording_id = recording_id.into();
        if notes.is_empty() {
            return Err(Error::validation(format!(
                "recording {recording_id} has no notes"
            )));
        }
        let bad: Vec<String> = notes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.check().err().map(|e| format!("note {i}: {e}")))
            .collect();
        if !bad.is_empty() {
            return Err(Error::validation(format!(
                "recording {recording_id}: {}",
                bad.join("; ")
            )));
        }
        sort_notes(&mut notes);
        Ok(Transcription {
            recording_id,
            performer: performer.into(),
            dataset_tag,
            notes,
        })
    }

    pub fn notes(&self) -> &[NoteEvent] {
        &self.notes
    }

    /// Time of the last note offset.
    pub fn duration(&self) -> f64 {
        self.notes.iter().map(|n| n.offset).fold(0.0, f64::max)
    }

    /// Applies `f` to every note, then re-validates and re-sorts.
    pub fn map_notes(&self, f: impl FnMut(&NoteEvent) -> NoteEvent) -> Result<Self> {
        Transcription::new(
            self.recording_id.clone(),
            self.performer.clone(),
            self.dataset_tag,
            self.notes.iter().map(f).collect(),
        )
    }
}

/// A fixed-length excerpt of a recording with onsets re-based to its start.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub parent_id: String,
    pub performer: String,
    pub index: usize,
    /// Start time within the parent recording, seconds.
    pub start: f64,
    pub notes: Vec<NoteEvent>,
}

impl Clip {
    pub fn duration(&self) -> f64 {
        CLIP_SECONDS
    }

    /// Identifier of the form `<parent_id>#<index>`.
    pub fn id(&self) -> String {
        format!("{}#{}", self.parent_id, self.index)
    }

    /// Builds a standalone clip from notes already expressed in clip time.
    pub fn from_notes(id: impl Into<String>, performer: impl Into<String>, mut notes: Vec<NoteEvent>) -> Self {
        sort_notes(&mut notes);
        Clip {
            parent_id: id.into(),
            performer: performer.into(),
            index: 0,
            start: 0.0,
            notes,
        }
    }
}

#[derive(Deserialize)]
struct RawNote {
    onset: f64,
    offset: f64,
    pitch: i64,
    velocity: i64,
}

/// Parses a JSONL note-event stream.
///
/// Malformed lines fail immediately with their line number. Range violations
/// are collected so the error lists every offending value.
pub fn parse_note_events<R: BufRead>(reader: R, source: &Path) -> Result<Vec<NoteEvent>> {
    let mut notes = Vec::new();
    let mut violations = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawNote = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: source.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let mut problems = Vec::new();
        if !(MIN_PITCH as i64..=MAX_PITCH as i64).contains(&raw.pitch) {
            problems.push(format!("pitch {}", raw.pitch));
        }
        if !(1..=127).contains(&raw.velocity) {
            problems.push(format!("velocity {}", raw.velocity));
        }
        if !raw.onset.is_finite() || raw.onset < 0.0 {
            problems.push(format!("onset {}", raw.onset));
        }
        if !raw.offset.is_finite() || raw.offset <= raw.onset {
            problems.push(format!("offset {} (onset {})", raw.offset, raw.onset));
        }
        if problems.is_empty() {
            notes.push(NoteEvent::new(
                raw.onset,
                raw.offset,
                raw.pitch as u8,
                raw.velocity as u8,
            ));
        } else {
            violations.push(format!("line {line_no}: {}", problems.join(", ")));
        }
    }
    if !violations.is_empty() {
        return Err(Error::validation(format!(
            "{}: invalid notes: {}",
            source.display(),
            violations.join("; ")
        )));
    }
    sort_notes(&mut notes);
    Ok(notes)
}

/// Reads a JSONL note file from disk.
pub fn read_note_file(path: &Path) -> Result<Vec<NoteEvent>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_note_events(BufReader::new(file), path)
}

/// Writes notes as JSONL, one object per line.
pub fn write_note_file(path: &Path, notes: &[NoteEvent]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for n in notes {
        serde_json::to_writer(&mut w, n)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub recording_id: String,
    pub performer: String,
    pub dataset_tag: DatasetTag,
    pub path: PathBuf,
}

/// Reads a manifest CSV. Relative note-file paths resolve against the
/// manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let mut rec: ManifestRecord = row?;
        if rec.path.is_relative() {
            rec.path = base.join(&rec.path);
        }
        out.push(rec);
    }
    Ok(out)
}

/// Writes a manifest CSV with paths exactly as given.
pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads the transcription behind one manifest record.
pub fn load_transcription(record: &ManifestRecord) -> Result<Transcription> {
    let notes = read_note_file(&record.path)?;
    Transcription::new(
        record.recording_id.clone(),
        record.performer.clone(),
        record.dataset_tag,
        notes,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<NoteEvent>> {
        parse_note_events(text.as_bytes(), Path::new("test.jsonl"))
    }

    #[test]
    fn minimal_file() {
        let notes = parse(r#"{"onset":0.0,"offset":0.5,"pitch":60,"velocity":80}"#).unwrap();
        assert_eq!(notes, vec![NoteEvent::new(0.0, 0.5, 60, 80)]);
        let t = Transcription::new("r", "p", DatasetTag::Solo, notes).unwrap();
        assert_eq!(t.notes().len(), 1);
    }

    #[test]
    fn out_of_range_pitch_is_reported() {
        let err = parse(
            "{\"onset\":0.0,\"offset\":0.5,\"pitch\":120,\"velocity\":80}\n\
             {\"onset\":0.0,\"offset\":0.5,\"pitch\":60,\"velocity\":0}\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Validation(_)));
        assert!(msg.contains("pitch 120"), "{msg}");
        assert!(msg.contains("line 2: velocity 0"), "{msg}");
    }

    #[test]
    fn malformed_line_carries_line_number() {
        let err = parse("{\"onset\":0.0,\"offset\":0.5,\"pitch\":60,\"velocity\":80}\n{oops}\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let notes = parse(
            "{\"onset\":1.0,\"offset\":1.5,\"pitch\":60,\"velocity\":80}\n\
             {\"onset\":0.0,\"offset\":0.5,\"pitch\":64,\"velocity\":80}\n\
             {\"onset\":0.0,\"offset\":0.5,\"pitch\":62,\"velocity\":80}\n",
        )
        .unwrap();
        let key: Vec<(f64, u8)> = notes.iter().map(|n| (n.onset, n.pitch)).collect();
        assert_eq!(key, vec![(0.0, 62), (0.0, 64), (1.0, 60)]);
    }

    #[test]
    fn empty_transcription_rejected() {
        assert!(Transcription::new("r", "p", DatasetTag::Trio, vec![]).is_err());
    }

    #[test]
    fn offset_before_onset_rejected() {
        let err = parse(r#"{"onset":1.0,"offset":0.5,"pitch":60,"velocity":80}"#).unwrap_err();
        assert!(err.to_string().contains("offset 0.5"));
    }

    #[test]
    fn manifest_round_trip_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![ManifestRecord {
            recording_id: "a".into(),
            performer: "p".into(),
            dataset_tag: DatasetTag::Trio,
            path: PathBuf::from("notes/a.jsonl"),
        }];
        let path = dir.path().join("manifest.csv");
        write_manifest(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("recording_id,performer,dataset_tag,path\n"));
        let back = read_manifest(&path).unwrap();
        assert_eq!(back[0].path, dir.path().join("notes/a.jsonl"));
        assert_eq!(back[0].dataset_tag, DatasetTag::Trio);
    }
}
