//! Flash extraction from shielded-camera frames.
//!
//! A volunteer shields the camera so that only ionizing particles light
//! pixels up. Extraction thresholds the luma plane, drops known hot pixels,
//! and groups the survivors by 8-connectivity (particle tracks cross pixel
//! boundaries diagonally). One flash per connected component; its magnitude
//! is the component's pixel count.
//!
//! Defaults: luma threshold 40 on the 0-255 scale, hot-pixel occupancy 0.5.
//! The upstream capture stack is expected to hand over single-channel luma;
//! color conversion is the caller's concern.

pub mod pgm;

use crate::par;
use thiserror::Error;

/// Default luma threshold for bright-pixel selection.
pub const DEFAULT_LUMA_THRESHOLD: u8 = 40;
/// Default fraction of frames a pixel may be bright in before it is
/// considered hot.
pub const DEFAULT_HOT_OCCUPANCY: f64 = 0.5;
/// Minimum number of frames needed to build a hot-pixel mask.
pub const MIN_MASK_FRAMES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlashError {
    #[error("frame is {got_w}x{got_h} but expected {want_w}x{want_h}")]
    DimensionMismatch { want_w: u32, want_h: u32, got_w: u32, got_h: u32 },
    #[error("need at least {MIN_MASK_FRAMES} frames to build a hot-pixel mask, got {0}")]
    TooFewFrames(usize),
    #[error("luma buffer length {got} does not match {w}x{h}")]
    BadLumaLength { w: u32, h: u32, got: usize },
}

/// A single grayscale frame with capture time.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: u32,
    height: u32,
    luma: Vec<u8>,
    pub t_utc_ms: i64,
}

impl Frame {
    pub fn new(width: u32, height: u32, luma: Vec<u8>, t_utc_ms: i64) -> Result<Self, FlashError> {
        if luma.len() != (width as usize) * (height as usize) {
            return Err(FlashError::BadLumaLength { w: width, h: height, got: luma.len() });
        }
        Ok(Self { width, height, luma, t_utc_ms })
    }

    /// Parse a binary PGM (P5, maxval 255) image.
    pub fn from_pgm(bytes: &[u8], t_utc_ms: i64) -> Result<Self, pgm::PgmError> {
        let (width, height, luma) = pgm::read_pgm(bytes)?;
        Ok(Self { width, height, luma, t_utc_ms })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn luma(&self) -> &[u8] {
        &self.luma
    }

    #[inline]
    fn at(&self, x: u32, y: u32) -> u8 {
        self.luma[y as usize * self.width as usize + x as usize]
    }
}

/// Sensor-defect mask: pixels excluded from flash extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct HotPixelMask {
    width: u32,
    height: u32,
    excluded: Vec<bool>,
}

impl HotPixelMask {
    /// An empty mask (nothing excluded).
    pub fn empty(width: u32, height: u32) -> Self {
        Self { width, height, excluded: vec![false; width as usize * height as usize] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn is_excluded(&self, x: u32, y: u32) -> bool {
        self.excluded[y as usize * self.width as usize + x as usize]
    }

    pub fn excluded_count(&self) -> usize {
        self.excluded.iter().filter(|&&e| e).count()
    }

    /// Coordinates of all excluded pixels, row-major order.
    pub fn excluded_pixels(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.is_excluded(x, y) {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

/// One extracted flash: component pixel count and centroid in pixel
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Flash {
    pub size: usize,
    pub centroid: (f64, f64),
}

/// Build a hot-pixel mask from a stack of dark frames: a pixel is excluded
/// when it reads at or above `threshold` in strictly more than `occupancy`
/// of the frames.
pub fn build_hot_pixel_mask(
    frames: &[Frame],
    threshold: u8,
    occupancy: f64,
) -> Result<HotPixelMask, FlashError> {
    build_mask_impl(frames, threshold, occupancy, true)
}

/// Sequential twin of [`build_hot_pixel_mask`]; same output.
pub fn build_hot_pixel_mask_seq(
    frames: &[Frame],
    threshold: u8,
    occupancy: f64,
) -> Result<HotPixelMask, FlashError> {
    build_mask_impl(frames, threshold, occupancy, false)
}

fn build_mask_impl(
    frames: &[Frame],
    threshold: u8,
    occupancy: f64,
    parallel: bool,
) -> Result<HotPixelMask, FlashError> {
    if frames.len() < MIN_MASK_FRAMES {
        return Err(FlashError::TooFewFrames(frames.len()));
    }
    let (w, h) = (frames[0].width, frames[0].height);
    for f in frames {
        if f.width != w || f.height != h {
            return Err(FlashError::DimensionMismatch {
                want_w: w,
                want_h: h,
                got_w: f.width,
                got_h: f.height,
            });
        }
    }
    let limit = occupancy * frames.len() as f64;
    let rows = par::map_range(h as usize, parallel, |y| {
        let mut row = vec![false; w as usize];
        for (x, out) in row.iter_mut().enumerate() {
            let idx = y * w as usize + x;
            let hits = frames.iter().filter(|f| f.luma[idx] >= threshold).count();
            *out = hits as f64 > limit;
        }
        row
    });
    Ok(HotPixelMask { width: w, height: h, excluded: rows.concat() })
}

/// Extract flashes from one frame: bright unmasked pixels grouped by
/// 8-connectivity, one output per component, ordered by the component's
/// smallest row-major pixel index.
pub fn extract_flashes(
    frame: &Frame,
    mask: &HotPixelMask,
    threshold: u8,
) -> Result<Vec<Flash>, FlashError> {
    if mask.width != frame.width || mask.height != frame.height {
        return Err(FlashError::DimensionMismatch {
            want_w: frame.width,
            want_h: frame.height,
            got_w: mask.width,
            got_h: mask.height,
        });
    }
    let (w, h) = (frame.width as i64, frame.height as i64);
    let bright = |x: i64, y: i64| -> bool {
        frame.at(x as u32, y as u32) >= threshold && !mask.is_excluded(x as u32, y as u32)
    };
    let mut visited = vec![false; (w * h) as usize];
    let mut flashes = Vec::new();
    let mut stack = Vec::new();
    for seed_y in 0..h {
        for seed_x in 0..w {
            let seed_idx = (seed_y * w + seed_x) as usize;
            if visited[seed_idx] || !bright(seed_x, seed_y) {
                continue;
            }
            // Flood fill; the seed is the component's minimum pixel index
            // because the scan is row-major.
            let mut size = 0usize;
            let (mut sum_x, mut sum_y) = (0f64, 0f64);
            visited[seed_idx] = true;
            stack.push((seed_x, seed_y));
            while let Some((x, y)) = stack.pop() {
                size += 1;
                sum_x += x as f64;
                sum_y += y as f64;
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let nidx = (ny * w + nx) as usize;
                        if !visited[nidx] && bright(nx, ny) {
                            visited[nidx] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            flashes.push(Flash {
                size,
                centroid: (sum_x / size as f64, sum_y / size as f64),
            });
        }
    }
    Ok(flashes)
}
