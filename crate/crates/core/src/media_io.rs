//! Loading and storing frames, `.flo` flow files, binary masks, proposal
//! masks and grey-scale debug rasters.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::grid::{Grid, Mask, ScalarMap};
use crate::proposals::{Proposal, ProposalSet};

/// Middlebury `.flo` sanity constant.
pub const FLO_MAGIC: f32 = 202021.25;

/// One video: ordered RGB frames plus optional aligned ground truth.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub name: String,
    pub frames: Vec<RgbImage>,
    /// File stems of the frames, used to name outputs.
    pub frame_names: Vec<String>,
    pub gt_masks: Option<Vec<Mask>>,
}

impl FrameSequence {
    pub fn new(name: impl Into<String>, frames: Vec<RgbImage>) -> Result<Self> {
        let frame_names = (0..frames.len()).map(|i| format!("{i:05}")).collect();
        let seq = Self {
            name: name.into(),
            frames,
            frame_names,
            gt_masks: None,
        };
        seq.validate(Path::new("<memory>"))?;
        Ok(seq)
    }

    pub fn with_ground_truth(mut self, gt: Vec<Mask>) -> Result<Self> {
        if gt.len() != self.frames.len() {
            return Err(Error::LengthMismatch {
                predicted: self.frames.len(),
                truth: gt.len(),
            });
        }
        let dims = self.dims();
        if let Some(m) = gt.iter().find(|m| m.dims() != dims) {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: m.dims(),
            });
        }
        self.gt_masks = Some(gt);
        Ok(self)
    }

    fn validate(&self, dir: &Path) -> Result<()> {
        if self.frames.len() < 2 {
            return Err(Error::MissingFrames {
                dir: dir.to_path_buf(),
                found: self.frames.len(),
            });
        }
        let first = self.frames[0].dimensions();
        if let Some(f) = self.frames.iter().find(|f| f.dimensions() != first) {
            return Err(Error::DimensionMismatch {
                expected: (first.0 as usize, first.1 as usize),
                found: (f.width() as usize, f.height() as usize),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width() as usize
    }

    pub fn height(&self) -> usize {
        self.frames[0].height() as usize
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width(), self.height())
    }
}

/// Files in `dir` whose names match `pattern`, sorted lexicographically.
pub fn list_matching(dir: &Path, pattern: &str) -> Result<Vec<PathBuf>> {
    let pat = glob::Pattern::new(pattern)
        .map_err(|e| Error::InvalidConfig(format!("bad file pattern '{pattern}': {e}")))?;
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() && path.file_name().and_then(|n| n.to_str()).is_some_and(|n| pat.matches(n)) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn decode_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path).map_err(|e| decode_error(path, e))?.to_rgb8())
}

/// Frames in `dir` matching `pattern` (e.g. `*.png`), in filename order.
pub fn load_frame_sequence(dir: &Path, pattern: &str) -> Result<FrameSequence> {
    if !dir.is_dir() {
        return Err(Error::MissingFrames {
            dir: dir.to_path_buf(),
            found: 0,
        });
    }
    let files = list_matching(dir, pattern)?;
    if files.len() < 2 {
        return Err(Error::MissingFrames {
            dir: dir.to_path_buf(),
            found: files.len(),
        });
    }
    let frames = files.iter().map(|p| read_rgb(p)).collect::<Result<Vec<_>>>()?;
    let frame_names = files
        .iter()
        .map(|p| p.file_stem().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());
    let seq = FrameSequence {
        name,
        frames,
        frame_names,
        gt_masks: None,
    };
    seq.validate(dir)?;
    Ok(seq)
}

/// Images in a directory, frames first; used for `.png` and `.ppm`.
pub const FRAME_PATTERNS: [&str; 2] = ["*.png", "*.ppm"];

/// Loads every PNG/PPM frame in `dir`.
pub fn load_frames_any(dir: &Path) -> Result<FrameSequence> {
    for pat in FRAME_PATTERNS {
        if dir.is_dir() && list_matching(dir, pat)?.len() >= 2 {
            return load_frame_sequence(dir, pat);
        }
    }
    load_frame_sequence(dir, "*.png")
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_flo(path, &bytes)
}

fn parse_flo(path: &Path, bytes: &[u8]) -> Result<FlowField> {
    let truncated = |expected| Error::TruncatedFile {
        path: path.to_path_buf(),
        expected,
        found: bytes.len(),
    };
    if bytes.len() < 12 {
        return Err(truncated(12));
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    let magic = f32::from_le_bytes(word(0));
    if magic != FLO_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: magic,
        });
    }
    let w = i32::from_le_bytes(word(4));
    let h = i32::from_le_bytes(word(8));
    if w < 0 || h < 0 {
        return Err(decode_error(path, format!("negative size {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = 12 + 8 * w * h;
    if bytes.len() < expected {
        return Err(truncated(expected));
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let off = 12 + 8 * i;
        u.push(f32::from_le_bytes(word(off)));
        v.push(f32::from_le_bytes(word(off + 4)));
    }
    FlowField::new(Grid::from_vec(w, h, u)?, Grid::from_vec(w, h, v)?)
}

pub fn write_flo(flow: &FlowField, path: &Path) -> Result<()> {
    if let Some((x, y)) = flow.first_non_finite() {
        return Err(Error::NonFiniteValue { x, y });
    }
    let (w, h) = flow.dims();
    let mut buf = Vec::with_capacity(12 + 8 * w * h);
    buf.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    buf.extend_from_slice(&(w as i32).to_le_bytes());
    buf.extend_from_slice(&(h as i32).to_le_bytes());
    for (a, b) in flow.u.iter().zip(flow.v.iter()) {
        buf.extend_from_slice(&a.to_le_bytes());
        buf.extend_from_slice(&b.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Grey-scale PNG to a binary mask, foreground where the value is >= 128.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let img = image::open(path).map_err(|e| decode_error(path, e))?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Grid::from_fn(w, h, |x, y| img.get_pixel(x as u32, y as u32)[0] >= 128))
}

pub fn mask_to_image(mask: &Mask) -> GrayImage {
    GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Luma([if *mask.get(x as usize, y as usize) { 255 } else { 0 }])
    })
}

/// Writes 0/255 grey-scale PNG.
pub fn write_mask(mask: &Mask, path: &Path) -> Result<()> {
    mask_to_image(mask).save(path).map_err(|e| decode_error(path, e))
}

/// Writes a scalar raster as an 8-bit heat map, min-max stretched.
pub fn write_scalar_png(map: &ScalarMap, path: &Path) -> Result<()> {
    let n = map.normalized(0.0);
    let img = GrayImage::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        Luma([(n.get(x as usize, y as usize) * 255.0).round() as u8])
    });
    img.save(path).map_err(|e| decode_error(path, e))
}

/// Writes a scalar raster already in [0, 1] without stretching.
pub fn write_unit_png(map: &ScalarMap, path: &Path) -> Result<()> {
    let img = GrayImage::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        Luma([(map.get(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8])
    });
    img.save(path).map_err(|e| decode_error(path, e))
}

/// Writes an integer label raster as 16-bit grey-scale PNG.
pub fn write_labels_png(labels: &Grid<u32>, path: &Path) -> Result<()> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(labels.width() as u32, labels.height() as u32, |x, y| {
            Luma([(*labels.get(x as usize, y as usize)).min(u16::MAX as u32) as u16])
        });
    img.save(path).map_err(|e| decode_error(path, e))
}

/// Grey-scale PNG in [0, 255] to a raster in [0, 1].
pub fn read_unit_png(path: &Path) -> Result<ScalarMap> {
    let img = image::open(path).map_err(|e| decode_error(path, e))?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Grid::from_fn(w, h, |x, y| img.get_pixel(x as u32, y as u32)[0] as f64 / 255.0))
}

/// Frame with the mask outline drawn in green.
pub fn overlay_contour(frame: &RgbImage, mask: &Mask) -> RgbImage {
    let mut out = frame.clone();
    let boundary = crate::proposals::interior_boundary(mask);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if *boundary.get(x, y) {
                out.put_pixel(x as u32, y as u32, Rgb([0, 255, 0]));
            }
        }
    }
    out
}

/// Proposal masks for one frame from `dir/<frame_index:05>/*.png`. A missing
/// or empty directory yields an empty set.
pub fn load_proposals(dir: &Path, frame_index: usize, frame_dims: (usize, usize)) -> Result<ProposalSet> {
    let sub = dir.join(format!("{frame_index:05}"));
    if !sub.is_dir() {
        return Ok(ProposalSet::empty(frame_dims));
    }
    let mut proposals = Vec::new();
    for path in list_matching(&sub, "*.png")? {
        let mask = read_mask(&path)?;
        if mask.dims() != frame_dims {
            return Err(Error::DimensionMismatch {
                expected: frame_dims,
                found: mask.dims(),
            });
        }
        if mask.count() > 0 {
            proposals.push(Proposal::from_mask(mask)?);
        }
    }
    Ok(ProposalSet::new(frame_dims, proposals))
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
