//! Average per-frame pixel error and labelling precision, and the report
//! that carries them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Mask;

fn check(fg: &[Mask], gt: &[Mask]) -> Result<()> {
    if fg.len() != gt.len() {
        return Err(Error::LengthMismatch {
            predicted: fg.len(),
            truth: gt.len(),
        });
    }
    if fg.is_empty() {
        return Err(Error::EmptyInput);
    }
    let dims = gt[0].dims();
    for m in fg.iter().chain(gt) {
        if m.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: m.dims(),
            });
        }
    }
    Ok(())
}

pub fn xor_count(a: &Mask, b: &Mask) -> usize {
    a.iter().zip(b.iter()).filter(|(x, y)| x != y).count()
}

/// Mismatching pixels per frame.
pub fn frame_errors(fg: &[Mask], gt: &[Mask]) -> Result<Vec<usize>> {
    check(fg, gt)?;
    Ok(fg.iter().zip(gt).map(|(a, b)| xor_count(a, b)).collect())
}

/// Total XOR count over the number of frames.
pub fn pixel_error(fg: &[Mask], gt: &[Mask]) -> Result<f64> {
    let e = frame_errors(fg, gt)?;
    Ok(e.iter().sum::<usize>() as f64 / e.len() as f64)
}

/// `1 - XOR / (K * N0)` with `N0` the frame size.
pub fn precision(fg: &[Mask], gt: &[Mask]) -> Result<f64> {
    let e = frame_errors(fg, gt)?;
    let n0 = gt[0].len() as f64;
    Ok(1.0 - e.iter().sum::<usize>() as f64 / (e.len() as f64 * n0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScores {
    pub avg_pixel_error: f64,
    pub avg_precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sequence: String,
    pub frames: usize,
    pub frame_pixels: usize,
    pub per_video: VideoScores,
    pub per_frame: Vec<usize>,
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn evaluate(sequence: &str, fg: &[Mask], gt: &[Mask], config: serde_json::Value) -> Result<Self> {
        let per_frame = frame_errors(fg, gt)?;
        Ok(Self {
            sequence: sequence.to_string(),
            frames: per_frame.len(),
            frame_pixels: gt[0].len(),
            per_video: VideoScores {
                avg_pixel_error: pixel_error(fg, gt)?,
                avg_precision: precision(fg, gt)?,
            },
            per_frame,
            config,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("frame,error\n");
        for (i, e) in self.per_frame.iter().enumerate() {
            text.push_str(&format!("{i},{e}\n"));
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
