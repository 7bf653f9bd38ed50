//! Pinhole back-projection of depth maps to 3-D point clouds, and ASCII PLY
//! export.
//!
//! Conventions: pixel `(u, v)` has its center at integer coordinates (no
//! half-pixel offset), depth is the camera-frame Z coordinate, and axes
//! follow the image (x right, y down, z forward — no Y flip):
//!
//! ```text
//! X = (u - cx) * z / fx,   Y = (v - cy) * z / fy,   Z = z
//! ```

use crate::depth::{DepthMap, ImageBuf};
use crate::error::{Error, Result};
use crate::io::atomic_write;
use std::fmt::Write as _;
use std::path::Path;

/// Pinhole intrinsics in pixels. Focal lengths must be finite and positive;
/// the principal point must be finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be finite and > 0, got fx={fx}, fy={fy}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "principal point must be finite, got cx={cx}, cy={cy}"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Square-pixel intrinsics for a given resolution: focal length equal to
    /// the image height, principal point at the pixel-grid center.
    pub fn default_for(width: usize, height: usize) -> Self {
        Self {
            fx: height as f64,
            fy: height as f64,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    /// Project a camera-frame point (z > 0) back to pixel coordinates.
    pub fn project(&self, x: f64, y: f64, z: f64) -> (f64, f64) {
        (self.cx + self.fx * x / z, self.cy + self.fy * y / z)
    }
}

/// A 3-D point cloud with optional per-point RGB.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Back-project every valid, finite depth pixel. Pixels that are invalid or
/// at [`crate::depth::INFINITE_DEPTH`] produce no point. With a 3-channel
/// image of matching size, per-point colors are sampled from it.
pub fn backproject(
    depth: &DepthMap,
    intrinsics: &CameraIntrinsics,
    image: Option<&ImageBuf>,
) -> Result<PointCloud> {
    if let Some(img) = image {
        if img.width() != depth.width() || img.height() != depth.height() {
            return Err(Error::ShapeMismatch(format!(
                "color image {}x{} vs depth {}x{}",
                img.width(),
                img.height(),
                depth.width(),
                depth.height()
            )));
        }
        if img.channels() != 3 {
            return Err(Error::InvalidArgument(format!(
                "point colors need a 3-channel image, got {}",
                img.channels()
            )));
        }
    }
    let mut points = Vec::new();
    let mut colors = image.map(|_| Vec::new());
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            if !depth.is_valid(u, v) {
                continue;
            }
            let z = depth.get(u, v);
            if !z.is_finite() {
                continue;
            }
            let x = (u as f64 - intrinsics.cx) * z / intrinsics.fx;
            let y = (v as f64 - intrinsics.cy) * z / intrinsics.fy;
            points.push([x, y, z]);
            if let (Some(colors), Some(img)) = (colors.as_mut(), image) {
                let to_u8 = |val: f64| (val.clamp(0.0, 1.0) * 255.0).round() as u8;
                colors.push([
                    to_u8(img.get(0, u, v)),
                    to_u8(img.get(1, u, v)),
                    to_u8(img.get(2, u, v)),
                ]);
            }
        }
    }
    Ok(PointCloud { points, colors })
}

/// Write a point cloud as ASCII PLY (atomically: temp file + rename).
pub fn write_ply(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut text = String::new();
    text.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(text, "element vertex {}", cloud.len());
    text.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.colors.is_some() {
        text.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    text.push_str("end_header\n");
    for (i, p) in cloud.points.iter().enumerate() {
        let _ = write!(text, "{} {} {}", p[0], p[1], p[2]);
        if let Some(colors) = &cloud.colors {
            let c = colors[i];
            let _ = write!(text, " {} {} {}", c[0], c[1], c[2]);
        }
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}
