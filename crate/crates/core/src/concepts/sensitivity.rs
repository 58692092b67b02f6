use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{concept_score, ConceptVector, Embedder};
use crate::corpus::roll::pitch_row;
use crate::corpus::{time_to_column, Clip, PianoRoll, ROLL_HEIGHT, ROLL_WIDTH};
use crate::error::{Error, Result};

pub const KERNEL: (usize, usize) = (24, 250);
pub const STRIDE: (usize, usize) = (2, 200);

/// Which notes a kernel position removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// Onset column inside the kernel's time span and pitch row inside its
    /// pitch span.
    #[default]
    PitchAndTime,
    /// Onset column inside the kernel's time span, any pitch.
    OnsetOnly,
}

/// Kernel origins along one axis.
pub fn kernel_origins(extent: usize, kernel: usize, stride: usize) -> Vec<usize> {
    (0..=(extent - kernel) / stride).map(|k| k * stride).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMap {
    /// Relative score change per kernel position, pitch origin by time origin.
    pub grid: Array2<f64>,
    /// The grid interpolated to roll size.
    pub heatmap: Array2<f32>,
    pub score: f64,
}

/// Relative concept-score change `(S - S') / S` when the notes under each
/// kernel position are removed and the clip is re-rendered.
///
/// `render` turns a clip into the roll the embedder reads. Positions that
/// remove nothing score exactly 0. `S = 0` is an error, since the ratio is
/// undefined; use the unnormalised difference instead.
pub fn masked_sensitivity<R>(
    clip: &Clip,
    render: R,
    embedder: &dyn Embedder,
    cav: &ConceptVector,
    mode: MaskMode,
) -> Result<SensitivityMap>
where
    R: Fn(&Clip) -> PianoRoll,
{
    let score = concept_score(&embedder.embed(&render(clip)), cav)?;
    if score == 0.0 {
        return Err(Error::validation(
            "concept score is zero, so relative sensitivity is undefined; use the unnormalised S - S' instead",
        ));
    }
    let rows = kernel_origins(ROLL_HEIGHT, KERNEL.0, STRIDE.0);
    let cols = kernel_origins(ROLL_WIDTH, KERNEL.1, STRIDE.1);
    let placed: Vec<(usize, i64)> = clip
        .notes
        .iter()
        .map(|n| (pitch_row(n.pitch), time_to_column(n.onset)))
        .collect();
    let mut grid = Array2::zeros((rows.len(), cols.len()));
    for (i, &r0) in rows.iter().enumerate() {
        for (j, &c0) in cols.iter().enumerate() {
            let inside = |&(row, col): &(usize, i64)| {
                let in_time = col >= c0 as i64 && col < (c0 + KERNEL.1) as i64;
                let in_pitch = row >= r0 && row < r0 + KERNEL.0;
                in_time && (mode == MaskMode::OnsetOnly || in_pitch)
            };
            if !placed.iter().any(inside) {
                continue;
            }
            let kept: Vec<_> = clip
                .notes
                .iter()
                .zip(&placed)
                .filter(|(_, p)| !inside(p))
                .map(|(n, _)| *n)
                .collect();
            let masked = Clip {
                notes: kept,
                ..clip.clone()
            };
            let s2 = concept_score(&embedder.embed(&render(&masked)), cav)?;
            grid[[i, j]] = (score - s2) / score;
        }
    }
    let heatmap = interpolate(grid.view(), &rows, &cols);
    Ok(SensitivityMap { grid, heatmap, score })
}

fn axis_weights(x: f64, centres: &[f64]) -> (usize, usize, f64) {
    let last = centres.len() - 1;
    if x <= centres[0] {
        return (0, 0, 0.0);
    }
    if x >= centres[last] {
        return (last, last, 0.0);
    }
    let k = centres.partition_point(|c| *c <= x) - 1;
    let t = (x - centres[k]) / (centres[k + 1] - centres[k]);
    (k, k + 1, t)
}

/// Bilinear interpolation from kernel centres to every cell, replicating
/// edge values beyond the outermost centres.
pub fn interpolate(grid: ArrayView2<f64>, rows: &[usize], cols: &[usize]) -> Array2<f32> {
    let rc: Vec<f64> = rows.iter().map(|r| *r as f64 + (KERNEL.0 as f64 - 1.0) / 2.0).collect();
    let cc: Vec<f64> = cols.iter().map(|c| *c as f64 + (KERNEL.1 as f64 - 1.0) / 2.0).collect();
    let col_w: Vec<(usize, usize, f64)> = (0..ROLL_WIDTH).map(|x| axis_weights(x as f64, &cc)).collect();
    let mut out = Array2::zeros((ROLL_HEIGHT, ROLL_WIDTH));
    for y in 0..ROLL_HEIGHT {
        let (r0, r1, ty) = axis_weights(y as f64, &rc);
        for (x, &(c0, c1, tx)) in col_w.iter().enumerate() {
            let top = grid[[r0, c0]] * (1.0 - tx) + grid[[r0, c1]] * tx;
            let bottom = grid[[r1, c0]] * (1.0 - tx) + grid[[r1, c1]] * tx;
            out[[y, x]] = (top * (1.0 - ty) + bottom * ty) as f32;
        }
    }
    out
}
