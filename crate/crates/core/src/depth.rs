//! Depth map and image containers.

use crate::error::{Error, Result};

/// Sentinel for unbounded depth (sky, no return). Stored as IEEE `+inf` so
/// that the far-channel taper maps it to exactly 0 without special cases.
pub const INFINITE_DEPTH: f64 = f64::INFINITY;

/// A single-channel metric depth map in meters, row-major, with a per-pixel
/// validity mask (`false` where no ground truth / no reading exists).
///
/// Every stored value is either finite and `>= 0`, or [`INFINITE_DEPTH`].
/// Values at invalid pixels are kept (so round trips preserve them) but no
/// loss or metric ever reads them.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Build a map, checking the shape and that every value is either
    /// non-negative finite or [`INFINITE_DEPTH`].
    pub fn new(width: usize, height: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "depth map dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height || valid.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "depth map {}x{} needs {} pixels, got {} values / {} validity flags",
                width,
                height,
                width * height,
                values.len(),
                valid.len()
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if v.is_nan() || v < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "depth value at pixel {} must be >= 0 or infinite, got {v}",
                    i
                )));
            }
        }
        Ok(Self { width, height, values, valid })
    }

    /// An all-valid map filled with one value.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], vec![true; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    /// Row-major flat index of `(x, y)`.
    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[self.idx(x, y)]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[self.idx(x, y)]
    }

    /// Number of pixels that are valid.
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Mirror left-right (used by flip-averaged evaluation).
    pub fn flip_horizontal(&self) -> DepthMap {
        let mut values = vec![0.0; self.values.len()];
        let mut valid = vec![false; self.valid.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                let src = y * self.width + x;
                let dst = y * self.width + (self.width - 1 - x);
                values[dst] = self.values[src];
                valid[dst] = self.valid[src];
            }
        }
        DepthMap { width: self.width, height: self.height, values, valid }
    }
}

/// A planar multi-channel image, `f64` in `[0, 1]`, laid out `[c][y][x]`.
///
/// Scene renderings are quantized to the 8-bit grid (`n / 255`) at generation
/// time so that the in-memory pipeline and the PNG-on-disk pipeline feed the
/// model bit-identical data.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuf {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "image {}x{}x{} needs {} samples, got {}",
                channels,
                height,
                width,
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    /// An all-zero image.
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn idx(&self, c: usize, x: usize, y: usize) -> usize {
        debug_assert!(c < self.channels && x < self.width && y < self.height);
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[self.idx(c, x, y)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f64) {
        let i = self.idx(c, x, y);
        self.data[i] = v;
    }

    /// One channel plane as a contiguous slice.
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> ImageBuf {
        let mut out = self.clone();
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    let i = self.idx(c, self.width - 1 - x, y);
                    out.data[i] = self.get(c, x, y);
                }
            }
        }
        out
    }
}
