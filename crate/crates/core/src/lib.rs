//! Sliding-anchor metric depth toolkit.
//!
//! A metric depth map is re-expressed relative to a per-image *anchor depth*
//! `a` so that a bounded-output network can regress unbounded ranges:
//!
//! 1. pixels at or inside the anchor (`d <= a`) go to a **near** channel,
//!    linearly normalized as `d / a` in `[0, 1]`;
//! 2. pixels beyond the anchor go to a **far** channel, exponentially tapered
//!    as `exp(-k * (d - a))` in `(0, 1]`, so that "very far" compresses
//!    smoothly toward 0 and unbounded depth maps to exactly 0;
//! 3. a binary **mask** records which branch owns each pixel, and fusing the
//!    two re-projected channels through the mask reconstructs metric depth.
//!
//! Crate layout, in pipeline order:
//!
//! - [`depth`]: the [`depth::DepthMap`] / [`depth::ImageBuf`] containers and
//!   the [`depth::INFINITE_DEPTH`] sentinel.
//! - [`repr`]: the representation itself — normalize, re-project, fuse.
//! - [`pool`]: the anchor pool, per-image anchor sampling, and the learned
//!   anchor embedding table.
//! - [`loss`]: masked branch losses, mask BCE, weighted total, and their
//!   analytic gradients.
//! - [`scene`]: deterministic synthetic scene generation (indoor rooms /
//!   outdoor grounds with primitives and sky).
//! - [`model`]: a small anchor-conditioned two-branch encoder/decoder with
//!   hand-written backprop, momentum SGD training, and checkpoint I/O.
//! - [`metrics`]: standard depth evaluation (REL, RMSE, log10, delta
//!   thresholds) with depth caps and optional flip averaging.
//! - [`io`]: PFM and 16-bit PNG depth files, RGB scene images, and the
//!   line-oriented dataset manifest.
//! - [`recon`]: pinhole back-projection to point clouds and ASCII PLY export.
//!
//! All numeric work is `f64`; file formats use their native widths (PFM
//! stores f32, PNG16 stores u16) and document the quantization they imply.

pub mod depth;
pub mod error;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod pool;
pub mod recon;
pub mod repr;
pub mod scene;

pub use depth::{DepthMap, ImageBuf, INFINITE_DEPTH};
pub use error::{Error, Result};
