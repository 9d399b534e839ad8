//! Procedural test sequences with exact ground truth.

use image::{Rgb, RgbImage};

use crate::grid::{Grid, Mask};
use crate::media_io::FrameSequence;

/// Deterministic hash of a lattice point to `[0, 1)`.
pub fn hash_noise(x: i64, y: i64, seed: u64) -> f64 {
    let mut z = (x as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ seed.wrapping_mul(0x1656_67B1_9E37_79F9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn jitter(base: f64, amp: f64, n: f64) -> u8 {
    (base + amp * (n - 0.5)).round().clamp(0.0, 255.0) as u8
}

/// Static green/blue texture: coarse 4 px cells plus fine grain.
fn background_pixel(x: i64, y: i64) -> Rgb<u8> {
    let coarse = hash_noise(x.div_euclid(4), y.div_euclid(4), 101);
    let fine = hash_noise(x, y, 102);
    Rgb([
        jitter(40.0, 30.0, fine),
        jitter(110.0 + 50.0 * coarse, 20.0, fine),
        jitter(120.0 - 40.0 * coarse, 20.0, hash_noise(x, y, 103)),
    ])
}

/// Object texture addressed in object-local coordinates so it moves rigidly.
fn object_pixel(u: i64, v: i64, palette: [f64; 3], seed: u64) -> Rgb<u8> {
    let coarse = hash_noise(u.div_euclid(3), v.div_euclid(3), seed);
    let fine = hash_noise(u, v, seed + 1);
    Rgb([
        jitter(palette[0] + 40.0 * (coarse - 0.5), 20.0, fine),
        jitter(palette[1] + 30.0 * (coarse - 0.5), 16.0, fine),
        jitter(palette[2] + 30.0 * (coarse - 0.5), 16.0, hash_noise(u, v, seed + 2)),
    ])
}

#[derive(Debug, Clone, Copy)]
struct Square {
    x: i64,
    y: i64,
    side: i64,
}

impl Square {
    fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x && x < self.x + self.side && y >= self.y && y < self.y + self.side
    }
}

/// A textured red square translating over a static textured background.
/// Ground truth masks are attached.
pub fn moving_square(frames: usize, width: usize, height: usize) -> FrameSequence {
    let side = ((width.min(height) as f64) * 0.3).round().max(4.0) as usize;
    moving_square_with_side(frames, width, height, side)
}

pub fn moving_square_with_side(frames: usize, width: usize, height: usize, side: usize) -> FrameSequence {
    let side = side.max(1) as i64;
    let (w, h) = (width as i64, height as i64);
    let span = (w - side - 2 * (w / 10)).max(0);
    let step = if frames > 1 { (span / (frames as i64 - 1)).min(3) } else { 0 };
    let x0 = w / 10;
    let y0 = (h - side) / 2 - (frames as i64 - 1) / 4;
    let mut imgs = Vec::with_capacity(frames);
    let mut gts = Vec::with_capacity(frames);
    for t in 0..frames as i64 {
        let sq = Square {
            x: x0 + step * t,
            y: (y0 + t / 2).clamp(0, h - side),
            side,
        };
        imgs.push(RgbImage::from_fn(width as u32, height as u32, |x, y| {
            let (x, y) = (x as i64, y as i64);
            if sq.contains(x, y) {
                object_pixel(x - sq.x, y - sq.y, [200.0, 50.0, 45.0], 7)
            } else {
                background_pixel(x, y)
            }
        }));
        gts.push(Mask::from_fn(width, height, |x, y| sq.contains(x as i64, y as i64)));
    }
    FrameSequence::new("moving-square", imgs)
        .and_then(|s| s.with_ground_truth(gts))
        .expect("generated sequence is well formed")
}

/// Two textured squares on one row moving towards each other, crossing, and
/// separating again. Square A (id 1) passes in front of square B (id 2).
pub struct CrossingSquares {
    pub sequence: FrameSequence,
    /// Visible object id per pixel: 0 background, 1 for A, 2 for B.
    pub ids: Vec<Grid<u8>>,
}

pub fn crossing_squares(frames: usize, width: usize, height: usize) -> CrossingSquares {
    let side = ((width.min(height) as f64) * 0.3).round().max(4.0) as usize;
    crossing_squares_with(frames, width, height, side, 6)
}

/// As [`crossing_squares`] with an explicit side and a per-frame speed cap.
pub fn crossing_squares_with(frames: usize, width: usize, height: usize, side: usize, max_step: usize) -> CrossingSquares {
    let side = side.max(4) as i64;
    let (w, h) = (width as i64, height as i64);
    let margin = w / 16;
    let travel = w - 2 * margin - side;
    let step = if frames > 1 {
        ((travel as f64) / (frames as f64 - 1.0)).floor().min(max_step as f64) as i64
    } else {
        0
    };
    let mid = (travel - step * (frames as i64 - 1)) / 2;
    let y = (h - side) / 2;
    let mut imgs = Vec::with_capacity(frames);
    let mut gts = Vec::with_capacity(frames);
    let mut ids = Vec::with_capacity(frames);
    for t in 0..frames as i64 {
        let a = Square {
            x: margin + mid + step * t,
            y: y - side / 5,
            side,
        };
        let b = Square {
            x: w - margin - mid - side - step * t,
            y: y + side / 5,
            side,
        };
        let id = Grid::from_fn(width, height, |x, y| {
            let (x, y) = (x as i64, y as i64);
            if a.contains(x, y) {
                1u8
            } else if b.contains(x, y) {
                2
            } else {
                0
            }
        });
        imgs.push(RgbImage::from_fn(width as u32, height as u32, |x, y| {
            let (x, y) = (x as i64, y as i64);
            match *id.get(x as usize, y as usize) {
                1 => object_pixel(x - a.x, y - a.y, [210.0, 60.0, 50.0], 7),
                2 => object_pixel(x - b.x, y - b.y, [220.0, 200.0, 60.0], 21),
                _ => background_pixel(x, y),
            }
        }));
        gts.push(id.map(|&v| v > 0));
        ids.push(id);
    }
    let sequence = FrameSequence::new("crossing-squares", imgs)
        .and_then(|s| s.with_ground_truth(gts))
        .expect("generated sequence is well formed");
    CrossingSquares { sequence, ids }
}
