//! The anchor pool: candidate anchor depths plus their learned embeddings.
//!
//! Training draws one anchor per image uniformly at random from the pool;
//! inference selects the pool anchor nearest a requested working depth.
//! Each anchor owns a small learned embedding vector that conditions the
//! model's decoder stages, so the same weights serve every anchor.

use crate::error::{Error, Result};
use crate::repr::AnchorDepth;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Default anchor depths in meters, ascending.
pub const DEFAULT_ANCHORS: [f64; 8] = [2.0, 4.0, 6.0, 10.0, 20.0, 40.0, 80.0, 120.0];

/// Default anchor-embedding width.
pub const DEFAULT_EMBED_DIM: usize = 16;

/// Zero-mean Gaussian init scale for embeddings.
pub const EMBED_INIT_STD: f64 = 0.02;

/// One chosen anchor: its pool index and validated depth. The matching
/// embedding row lives in the pool (`pool.embedding(draw.index)`).
#[derive(Debug, Clone, Copy)]
pub struct AnchorDraw {
    pub index: usize,
    pub anchor: AnchorDepth,
}

/// A set of candidate anchors (sorted ascending, unique) with one embedding
/// row per anchor, stored flat `[len * embed_dim]` for the optimizer.
#[derive(Debug, Clone)]
pub struct AnchorPool {
    depths: Vec<AnchorDepth>,
    embed_dim: usize,
    embeddings: Vec<f64>,
}

impl AnchorPool {
    fn validated_depths(depths_m: &[f64], embed_dim: usize) -> Result<Vec<AnchorDepth>> {
        if depths_m.is_empty() {
            return Err(Error::Empty("anchor pool needs at least one depth".into()));
        }
        if embed_dim == 0 {
            return Err(Error::InvalidArgument("embedding width must be > 0".into()));
        }
        let mut depths = depths_m
            .iter()
            .map(|&m| AnchorDepth::new(m))
            .collect::<Result<Vec<_>>>()?;
        depths.sort_by(|a, b| a.meters().total_cmp(&b.meters()));
        for pair in depths.windows(2) {
            if pair[0].meters() == pair[1].meters() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate anchor depth {} m in pool",
                    pair[0].meters()
                )));
            }
        }
        Ok(depths)
    }

    /// Build a pool from depths in meters, initializing embeddings from
    /// `N(0, `[`EMBED_INIT_STD`]`^2)` with the caller's RNG. Depths are
    /// sorted ascending; empty pools, non-positive or non-finite depths,
    /// duplicates, and a zero embedding width are rejected.
    pub fn new(depths_m: &[f64], embed_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let depths = Self::validated_depths(depths_m, embed_dim)?;
        let normal = Normal::new(0.0, EMBED_INIT_STD).expect("std is positive");
        let embeddings = (0..depths.len() * embed_dim).map(|_| normal.sample(rng)).collect();
        Ok(Self { depths, embed_dim, embeddings })
    }

    /// The default eight-anchor pool at the default embedding width.
    pub fn with_defaults(rng: &mut impl Rng) -> Self {
        Self::new(&DEFAULT_ANCHORS, DEFAULT_EMBED_DIM, rng).expect("defaults are valid")
    }

    /// Rebuild a pool from checkpointed state (depths + embedding rows).
    pub fn from_parts(depths_m: &[f64], embed_dim: usize, embeddings: Vec<f64>) -> Result<Self> {
        let depths = Self::validated_depths(depths_m, embed_dim)?;
        if embeddings.len() != depths.len() * embed_dim {
            return Err(Error::ShapeMismatch(format!(
                "embedding table needs {} values for {} anchors x {}, got {}",
                depths.len() * embed_dim,
                depths.len(),
                embed_dim,
                embeddings.len()
            )));
        }
        Ok(Self { depths, embed_dim, embeddings })
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn anchor(&self, index: usize) -> AnchorDepth {
        self.depths[index]
    }

    /// Anchor depths in meters, ascending.
    pub fn depths_m(&self) -> Vec<f64> {
        self.depths.iter().map(|a| a.meters()).collect()
    }

    /// Embedding row of one anchor.
    pub fn embedding(&self, index: usize) -> &[f64] {
        &self.embeddings[index * self.embed_dim..(index + 1) * self.embed_dim]
    }

    /// Whole table, flat, for the optimizer and checkpoints.
    pub fn embeddings_flat(&self) -> &[f64] {
        &self.embeddings
    }

    pub fn embeddings_flat_mut(&mut self) -> &mut [f64] {
        &mut self.embeddings
    }

    /// Uniform draw over the pool (training-time per-image sampling).
    pub fn sample(&self, rng: &mut impl Rng) -> AnchorDraw {
        let index = rng.gen_range(0..self.depths.len());
        AnchorDraw { index, anchor: self.depths[index] }
    }

    /// Nearest pool anchor to a requested working depth in meters; exact
    /// midpoints resolve to the smaller anchor.
    pub fn select(&self, requested_m: f64) -> Result<AnchorDraw> {
        if !requested_m.is_finite() || requested_m <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "requested anchor depth must be finite and > 0, got {requested_m}"
            )));
        }
        // Ascending order plus strict `<` keeps ties on the smaller anchor.
        let mut best = 0usize;
        let mut best_dist = (self.depths[0].meters() - requested_m).abs();
        for (i, a) in self.depths.iter().enumerate().skip(1) {
            let dist = (a.meters() - requested_m).abs();
            if dist < best_dist {
                best = i;
                best_dist = dist;
            }
        }
        Ok(AnchorDraw { index: best, anchor: self.depths[best] })
    }
}
