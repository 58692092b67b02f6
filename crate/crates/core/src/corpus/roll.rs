use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{Clip, NoteEvent, MIN_PITCH};
use crate::error::{Error, Result};

/// One row per piano key.
pub const ROLL_HEIGHT: usize = 88;
/// 30 s at 10 ms per column.
pub const ROLL_WIDTH: usize = 3000;
pub const FRAMES_PER_SECOND: f64 = 100.0;

const MAGIC: &[u8; 4] = b"PROL";

/// Column containing time `t` (seconds). A small epsilon absorbs binary
/// representation error so that e.g. 0.29 s maps to column 29.
pub fn time_to_column(t: f64) -> i64 {
    (t * FRAMES_PER_SECOND + 1e-9).floor() as i64
}

/// An 88x3000 pitch-by-time matrix with values in `[0, 1]`.
///
/// Row `r` is MIDI pitch `21 + r`; column `c` covers `[c, c+1) * 10 ms`.
#[derive(Debug, Clone, PartialEq)]
pub struct PianoRoll {
    values: Array2<f32>,
}

impl Default for PianoRoll {
    fn default() -> Self {
        Self::zeros()
    }
}

impl PianoRoll {
    pub fn zeros() -> Self {
        PianoRoll {
            values: Array2::zeros((ROLL_HEIGHT, ROLL_WIDTH)),
        }
    }

    /// Wraps a matrix, checking its shape and value range.
    pub fn from_array(values: Array2<f32>) -> Result<Self> {
        if values.dim() != (ROLL_HEIGHT, ROLL_WIDTH) {
            return Err(Error::validation(format!(
                "piano roll must be {ROLL_HEIGHT}x{ROLL_WIDTH}, got {:?}",
                values.dim()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::validation("piano roll values must lie in [0, 1]"));
        }
        Ok(PianoRoll { values })
    }

    pub fn values(&self) -> &Array2<f32> {
        &self.values
    }

    pub fn into_array(self) -> Array2<f32> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[[row, col]]
    }

    /// Paints `[start, end)` of `row` with `value`, keeping the larger value
    /// where notes overlap. Columns are clipped to the roll.
    pub fn paint(&mut self, row: usize, start: usize, end: usize, value: f32) {
        let end = end.min(ROLL_WIDTH);
        let value = value.clamp(0.0, 1.0);
        for c in start..end {
            let cell = &mut self.values[[row, c]];
            if value > *cell {
                *cell = value;
            }
        }
    }

    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }

    /// Number of non-zero cells in each column.
    pub fn column_profile(&self) -> Vec<usize> {
        self.values
            .columns()
            .into_iter()
            .map(|col| col.iter().filter(|v| **v > 0.0).count())
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_matrix(path, &self.values)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_array(read_matrix(path)?)
    }
}

/// Column span `[start, end)` a note occupies on the unified roll, or `None`
/// when it starts after the roll. Notes shorter than a column still get one.
pub(crate) fn note_columns(n: &NoteEvent) -> Option<(usize, usize)> {
    let start = time_to_column(n.onset).max(0);
    if start >= ROLL_WIDTH as i64 {
        return None;
    }
    let end = time_to_column(n.offset).clamp(start + 1, ROLL_WIDTH as i64);
    Some((start as usize, end as usize))
}

pub(crate) fn pitch_row(pitch: u8) -> usize {
    (pitch - MIN_PITCH) as usize
}

/// Renders a clip with each note scaled by the loudest velocity in the clip.
pub fn to_piano_roll(c: &Clip) -> PianoRoll {
    let mut roll = PianoRoll::zeros();
    let max_velocity = c.notes.iter().map(|n| n.velocity).max().unwrap_or(0);
    if max_velocity == 0 {
        return roll;
    }
    for n in &c.notes {
        if let Some((start, end)) = note_columns(n) {
            let value = n.velocity as f32 / max_velocity as f32;
            roll.paint(pitch_row(n.pitch), start, end, value);
        }
    }
    roll
}

/// Writes a float32 matrix in the `PROL` binary layout: 4-byte magic, u32
/// height, u32 width, u32 reserved (0), then row-major little-endian values.
pub fn write_matrix(path: &Path, m: &Array2<f32>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let (h, wd) = m.dim();
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(h as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(wd as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&0u32.to_le_bytes()).map_err(io)?;
    for v in m.iter() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_matrix(path: &Path) -> Result<Array2<f32>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; 16];
    r.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
    if &header[..4] != MAGIC {
        return Err(Error::validation(format!("{}: bad magic", path.display())));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap()) as usize;
    let (h, w) = (word(4), word(8));
    let mut bytes = vec![0u8; h * w * 4];
    r.read_exact(&mut bytes).map_err(|e| Error::io(path, e))?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((h, w), data).map_err(|e| Error::validation(e.to_string()))
}
