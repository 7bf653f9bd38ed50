//! The sliding-anchor depth representation.
//!
//! Given an anchor depth `a` (meters) and a taper rate `k` (1/meters), a
//! metric depth `d` is split across two bounded channels plus a routing mask:
//!
//! ```text
//! near(d) = d / a                   for d <= a        (linear, in [0, 1])
//! far(d)  = exp(-k * (d - a))      for d >= a        (taper,  in (0, 1])
//! mask(d) = 1 if d <= a else 0                       (ties go near)
//! ```
//!
//! Both channels equal 1 exactly at `d = a`, so the representation is
//! continuous across the boundary, and `far` maps unbounded depth
//! ([`INFINITE_DEPTH`]) to exactly 0. Re-projection inverts each channel
//! (`near * a` and `-ln(far) / k + a`) and [`fuse`] stitches the metric
//! channels back together through the mask.

use crate::depth::{DepthMap, INFINITE_DEPTH};
use crate::error::{Error, Result};

/// Default far-channel taper rate, 1/meters.
pub const DEFAULT_TAPER_RATE: f64 = 0.025;

/// Far-channel values are floored here before the logarithm, which bounds
/// re-projected far depth at [`far_ceiling`]. Keeps `far = 0` (unbounded
/// depth) finite on the way back instead of producing `+inf`.
pub const FAR_VALUE_FLOOR: f64 = 1e-8;

/// Mask values at or above this are routed to the near branch by [`fuse`].
pub const MASK_THRESHOLD: f64 = 0.5;

/// Normalized channel values may overshoot `[0, 1]` by at most this much
/// (saturating activations plus float noise); anything further is rejected.
pub const CHANNEL_SLACK: f64 = 1e-6;

/// A validated anchor depth in meters (finite, strictly positive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorDepth(f64);

impl AnchorDepth {
    pub fn new(meters: f64) -> Result<Self> {
        if !meters.is_finite() || meters <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "anchor depth must be finite and > 0, got {meters}"
            )));
        }
        Ok(Self(meters))
    }

    #[inline]
    pub fn meters(self) -> f64 {
        self.0
    }
}

/// A validated taper rate in 1/meters (finite, strictly positive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaperRate(f64);

impl TaperRate {
    pub fn new(per_meter: f64) -> Result<Self> {
        if !per_meter.is_finite() || per_meter <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "taper rate must be finite and > 0, got {per_meter}"
            )));
        }
        Ok(Self(per_meter))
    }

    #[inline]
    pub fn per_meter(self) -> f64 {
        self.0
    }
}

impl Default for TaperRate {
    fn default() -> Self {
        TaperRate(DEFAULT_TAPER_RATE)
    }
}

/// A single per-pixel `f64` channel with the validity mask carried along.
/// Used for normalized channels, masks, and re-projected metric channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl Field {
    pub fn new(width: usize, height: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if values.len() != width * height || valid.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "field {}x{} needs {} pixels, got {} values / {} validity flags",
                width,
                height,
                width * height,
                values.len(),
                valid.len()
            )));
        }
        Ok(Self { width, height, values, valid })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    fn same_shape(&self, other: &Field) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Ground-truth targets for one image at one anchor: the two normalized
/// channels and the branch-routing mask, all sharing one validity mask.
///
/// Out-of-branch target values (a far pixel's `near` entry and vice versa)
/// are clamped to 1.0; they carry no information and every consumer gates on
/// `mask` (and validity) before reading them.
#[derive(Debug, Clone)]
pub struct NormalizedDepthPair {
    pub near: Field,
    pub far: Field,
    pub mask: Field,
}

/// Ceiling of re-projected far depth: where the floored far value lands.
#[inline]
pub fn far_ceiling(anchor: AnchorDepth, k: TaperRate) -> f64 {
    -FAR_VALUE_FLOOR.ln() / k.per_meter() + anchor.meters()
}

/// Scalar near normalization `d / a`. Callers route by `d <= a`; values
/// beyond the anchor are the caller's to clamp.
#[inline]
pub fn normalize_near_value(depth: f64, anchor: AnchorDepth) -> f64 {
    debug_assert!(depth >= 0.0);
    depth / anchor.meters()
}

/// Scalar far normalization `exp(-k (d - a))`; [`INFINITE_DEPTH`] gives 0.
#[inline]
pub fn normalize_far_value(depth: f64, anchor: AnchorDepth, k: TaperRate) -> f64 {
    debug_assert!(depth >= 0.0 || depth == INFINITE_DEPTH);
    (-k.per_meter() * (depth - anchor.meters())).exp()
}

/// Scalar near re-projection `v * a`.
#[inline]
pub fn reproject_near_value(value: f64, anchor: AnchorDepth) -> f64 {
    value * anchor.meters()
}

/// Scalar far re-projection `-ln(v) / k + a`, with `v` floored at
/// [`FAR_VALUE_FLOOR`] so the result never exceeds [`far_ceiling`].
#[inline]
pub fn reproject_far_value(value: f64, anchor: AnchorDepth, k: TaperRate) -> f64 {
    let v = value.max(FAR_VALUE_FLOOR);
    -v.ln() / k.per_meter() + anchor.meters()
}

/// Near channel of a ground-truth map: `d / a` where `d <= a`, clamped to
/// 1.0 beyond the anchor (out-of-branch, excluded from losses by the mask).
///
/// Negative depths cannot occur ([`DepthMap`] rejects them at construction)
/// and anchors are positive by [`AnchorDepth`] construction.
pub fn normalize_near(depth: &DepthMap, anchor: AnchorDepth) -> Field {
    let values = depth
        .values()
        .iter()
        .map(|&d| if d <= anchor.meters() { d / anchor.meters() } else { 1.0 })
        .collect();
    Field {
        width: depth.width(),
        height: depth.height(),
        values,
        valid: depth.valid().to_vec(),
    }
}

/// Far channel of a ground-truth map: `exp(-k (d - a))` where `d >= a`
/// (0 exactly at [`INFINITE_DEPTH`]), clamped to 1.0 inside the anchor.
pub fn normalize_far(depth: &DepthMap, anchor: AnchorDepth, k: TaperRate) -> Field {
    let values = depth
        .values()
        .iter()
        .map(|&d| {
            if d >= anchor.meters() {
                (-k.per_meter() * (d - anchor.meters())).exp()
            } else {
                1.0
            }
        })
        .collect();
    Field {
        width: depth.width(),
        height: depth.height(),
        values,
        valid: depth.valid().to_vec(),
    }
}

/// Ground-truth routing mask: 1.0 where `d <= a` (boundary ties included),
/// 0.0 beyond and at [`INFINITE_DEPTH`].
pub fn gt_near_mask(depth: &DepthMap, anchor: AnchorDepth) -> Field {
    let values = depth
        .values()
        .iter()
        .map(|&d| if d <= anchor.meters() { 1.0 } else { 0.0 })
        .collect();
    Field {
        width: depth.width(),
        height: depth.height(),
        values,
        valid: depth.valid().to_vec(),
    }
}

/// All three ground-truth targets at once.
pub fn normalize(depth: &DepthMap, anchor: AnchorDepth, k: TaperRate) -> NormalizedDepthPair {
    NormalizedDepthPair {
        near: normalize_near(depth, anchor),
        far: normalize_far(depth, anchor, k),
        mask: gt_near_mask(depth, anchor),
    }
}

/// Re-project a near channel to metric depth (`v * a`). Values must lie in
/// `[0, 1]` up to [`CHANNEL_SLACK`]; tiny overshoot is clamped, more is an
/// error naming the offending pixel.
pub fn reproject_near(near: &Field, anchor: AnchorDepth) -> Result<Field> {
    let mut values = Vec::with_capacity(near.values.len());
    for (i, &v) in near.values.iter().enumerate() {
        if !(-CHANNEL_SLACK..=1.0 + CHANNEL_SLACK).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "near channel value at pixel {i} is {v}, outside [0, 1] beyond slack"
            )));
        }
        values.push(v.clamp(0.0, 1.0) * anchor.meters());
    }
    Ok(Field { width: near.width, height: near.height, values, valid: near.valid.clone() })
}

/// Re-project a far channel to metric depth (`-ln(v) / k + a`). Values must
/// lie in `[0, 1]` up to [`CHANNEL_SLACK`]; 0 (and anything under
/// [`FAR_VALUE_FLOOR`]) lands on [`far_ceiling`].
pub fn reproject_far(far: &Field, anchor: AnchorDepth, k: TaperRate) -> Result<Field> {
    let mut values = Vec::with_capacity(far.values.len());
    for (i, &v) in far.values.iter().enumerate() {
        if !(-CHANNEL_SLACK..=1.0 + CHANNEL_SLACK).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "far channel value at pixel {i} is {v}, outside [0, 1] beyond slack"
            )));
        }
        values.push(reproject_far_value(v.clamp(0.0, 1.0), anchor, k));
    }
    Ok(Field { width: far.width, height: far.height, values, valid: far.valid.clone() })
}

/// Fuse re-projected metric channels through a mask: pixels with
/// `mask >= `[`MASK_THRESHOLD`] take the near value, the rest the far value.
/// All three fields must share one shape; validity is their conjunction.
pub fn fuse(near_metric: &Field, far_metric: &Field, mask: &Field) -> Result<DepthMap> {
    if !near_metric.same_shape(far_metric) || !near_metric.same_shape(mask) {
        return Err(Error::ShapeMismatch(format!(
            "fuse inputs disagree: near {}x{}, far {}x{}, mask {}x{}",
            near_metric.width,
            near_metric.height,
            far_metric.width,
            far_metric.height,
            mask.width,
            mask.height
        )));
    }
    let n = near_metric.values.len();
    let mut values = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for i in 0..n {
        let v = if mask.values[i] >= MASK_THRESHOLD {
            near_metric.values[i]
        } else {
            far_metric.values[i]
        };
        values.push(v);
        valid.push(near_metric.valid[i] && far_metric.valid[i] && mask.valid[i]);
    }
    DepthMap::new(near_metric.width, near_metric.height, values, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // exp(-1) and exp(-0.5) frozen to their IEEE doubles.
    const EXP_NEG_1: f64 = 0.367_879_441_171_442_33;
    const EXP_NEG_HALF: f64 = 0.606_530_659_712_633_4;

    fn anchor(m: f64) -> AnchorDepth {
        AnchorDepth::new(m).unwrap()
    }

    fn rate(k: f64) -> TaperRate {
        TaperRate::new(k).unwrap()
    }

    #[test]
    fn near_normalization_is_linear_in_depth() {
        let a = anchor(4.0);
        assert_eq!(normalize_near_value(2.0, a), 0.5);
        assert_eq!(normalize_near_value(0.0, a), 0.0);
        assert_eq!(normalize_near_value(4.0, a), 1.0);
    }

    #[test]
    fn far_channel_equals_one_at_anchor_and_tapers() {
        let a = anchor(10.0);
        let k = rate(0.5);
        assert_eq!(normalize_far_value(10.0, a, k), 1.0);
        assert!((normalize_far_value(11.0, a, k) - EXP_NEG_HALF).abs() < 1e-15);
        assert!((normalize_far_value(12.0, a, k) - EXP_NEG_1).abs() < 1e-15);
        assert_eq!(normalize_far_value(INFINITE_DEPTH, a, k), 0.0);
    }

    #[test]
    fn default_rate_pinned_values() {
        // 120 m against an 80 m anchor at the default rate lands on exp(-1),
        // and the inverse recovers 120 m.
        let a = anchor(80.0);
        let k = TaperRate::default();
        assert_eq!(DEFAULT_TAPER_RATE, 0.025);
        let tapered = normalize_far_value(120.0, a, k);
        assert!((tapered - EXP_NEG_1).abs() < 1e-12);
        let back = reproject_far_value(tapered, a, k);
        assert!((back - 120.0).abs() / 120.0 < 1e-12);
    }

    #[test]
    fn far_channel_is_tiny_ten_efolds_out() {
        for &km in &[0.025, 0.1, 1.0] {
            let a = anchor(5.0);
            let k = rate(km);
            let v = normalize_far_value(5.0 + 10.0 / km, a, k);
            assert!(v < 5e-5, "far value {v} at 10 e-folds should be < 5e-5");
        }
    }

    #[test]
    fn scalar_round_trips_are_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20_000 {
            let a = anchor(10f64.powf(rng.gen_range(-1.0..2.5)));
            let k = rate(10f64.powf(rng.gen_range(-3.0..0.0)));
            // Near side: d in [0, a].
            let d_near = rng.gen_range(0.0..=1.0) * a.meters();
            let rt = reproject_near_value(normalize_near_value(d_near, a), a);
            assert!((rt - d_near).abs() <= 1e-9 * d_near.max(1e-12));
            // Far side: d in [a, a + 10/k].
            let d_far = a.meters() + rng.gen_range(0.0..=1.0) * 10.0 / k.per_meter();
            let rt = reproject_far_value(normalize_far_value(d_far, a, k), a, k);
            assert!(
                (rt - d_far).abs() <= 1e-9 * d_far,
                "far round trip {rt} vs {d_far} (a={}, k={})",
                a.meters(),
                k.per_meter()
            );
        }
    }

    #[test]
    fn monotonicity_of_both_channels() {
        let a = anchor(7.0);
        let k = rate(0.07);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5_000 {
            let d1 = rng.gen_range(0.0..7.0);
            let d2 = rng.gen_range(0.0..7.0);
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            if lo < hi {
                assert!(normalize_near_value(lo, a) < normalize_near_value(hi, a));
            }
            let f1 = 7.0 + rng.gen_range(0.0..400.0);
            let f2 = 7.0 + rng.gen_range(0.0..400.0);
            let (lo, hi) = if f1 < f2 { (f1, f2) } else { (f2, f1) };
            if lo < hi {
                // Strictly decreasing in depth beyond the anchor.
                assert!(normalize_far_value(lo, a, k) > normalize_far_value(hi, a, k));
            }
        }
    }

    #[test]
    fn mask_partitions_valid_pixels() {
        let a = anchor(3.0);
        let d = DepthMap::new(
            2,
            3,
            vec![0.0, 1.5, 3.0, 4.5, INFINITE_DEPTH, 2.999],
            vec![true, true, true, true, true, false],
        )
        .unwrap();
        let m = gt_near_mask(&d, a);
        assert_eq!(m.values(), &[1.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        // Boundary tie at d == a goes near.
        assert_eq!(m.values()[2], 1.0);
        // Every pixel is claimed by exactly one branch.
        for &v in m.values() {
            assert!(v == 0.0 || v == 1.0);
        }
        assert_eq!(m.valid(), d.valid());
    }

    #[test]
    fn infinite_depth_targets() {
        let a = anchor(10.0);
        let k = TaperRate::default();
        let d = DepthMap::new(1, 1, vec![INFINITE_DEPTH], vec![true]).unwrap();
        let pair = normalize(&d, a, k);
        assert_eq!(pair.far.values()[0], 0.0);
        assert_eq!(pair.mask.values()[0], 0.0);
    }

    #[test]
    fn out_of_branch_targets_are_clamped_to_one() {
        let a = anchor(2.0);
        let k = rate(0.1);
        let d = DepthMap::new(2, 1, vec![1.0, 8.0], vec![true, true]).unwrap();
        let pair = normalize(&d, a, k);
        // Far pixel's near entry and near pixel's far entry are both 1.0.
        assert_eq!(pair.near.values()[1], 1.0);
        assert_eq!(pair.far.values()[0], 1.0);
    }

    #[test]
    fn reproject_rejects_out_of_range_but_clamps_slack() {
        let a = anchor(5.0);
        let k = TaperRate::default();
        let f = |v| Field::new(1, 1, vec![v], vec![true]).unwrap();
        assert!(reproject_near(&f(1.1), a).is_err());
        assert!(reproject_near(&f(-0.01), a).is_err());
        // Half-slack overshoot clamps to the boundary value.
        let r = reproject_near(&f(1.0 + 0.5e-6), a).unwrap();
        assert_eq!(r.values()[0], 5.0);
        assert!(reproject_far(&f(1.5), a, k).is_err());
        let r = reproject_far(&f(0.0), a, k).unwrap();
        assert_eq!(r.values()[0], far_ceiling(a, k));
        assert!(r.values()[0].is_finite());
    }

    #[test]
    fn far_reprojection_never_exceeds_ceiling() {
        let a = anchor(3.0);
        let k = rate(0.04);
        let ceil = far_ceiling(a, k);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..5_000 {
            let v = rng.gen_range(0.0..=1.0);
            let d = reproject_far_value(v, a, k);
            assert!(d <= ceil);
            assert!(d >= a.meters() - 1e-12);
        }
    }

    #[test]
    fn fuse_at_anchor_is_exact_for_both_mask_values() {
        let a = anchor(6.0);
        let k = TaperRate::default();
        let near = reproject_near(&Field::new(1, 1, vec![1.0], vec![true]).unwrap(), a).unwrap();
        let far =
            reproject_far(&Field::new(1, 1, vec![1.0], vec![true]).unwrap(), a, k).unwrap();
        for mask_value in [0.0, 1.0] {
            let mask = Field::new(1, 1, vec![mask_value], vec![true]).unwrap();
            let fused = fuse(&near, &far, &mask).unwrap();
            assert_eq!(fused.get(0, 0), 6.0, "mask={mask_value}");
        }
    }

    #[test]
    fn fuse_routes_by_threshold() {
        let near = Field::new(2, 1, vec![1.0, 2.0], vec![true, true]).unwrap();
        let far = Field::new(2, 1, vec![30.0, 40.0], vec![true, true]).unwrap();
        let mask = Field::new(2, 1, vec![0.5, 0.49], vec![true, true]).unwrap();
        let fused = fuse(&near, &far, &mask).unwrap();
        // 0.5 is routed near (boundary convention), 0.49 far.
        assert_eq!(fused.values(), &[1.0, 40.0]);
    }

    #[test]
    fn fuse_rejects_shape_mismatch() {
        let a = Field::new(2, 1, vec![0.0; 2], vec![true; 2]).unwrap();
        let b = Field::new(1, 2, vec![0.0; 2], vec![true; 2]).unwrap();
        assert!(fuse(&a, &a, &b).is_err());
    }

    #[test]
    fn full_map_round_trip_through_fuse() {
        let a = anchor(8.0);
        let k = rate(0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let values: Vec<f64> = (0..256)
            .map(|i| {
                if i % 17 == 0 {
                    INFINITE_DEPTH
                } else {
                    rng.gen_range(0.0..60.0)
                }
            })
            .collect();
        let d = DepthMap::new(16, 16, values, vec![true; 256]).unwrap();
        let pair = normalize(&d, a, k);
        let near = reproject_near(&pair.near, a).unwrap();
        let far = reproject_far(&pair.far, a, k).unwrap();
        let fused = fuse(&near, &far, &pair.mask).unwrap();
        for i in 0..256 {
            let orig = d.values()[i];
            let got = fused.values()[i];
            if orig == INFINITE_DEPTH {
                // Unbounded depth comes back at the finite ceiling.
                assert_eq!(got, far_ceiling(a, k));
            } else {
                assert!((got - orig).abs() <= 1e-9 * orig.max(1.0));
            }
        }
    }

    #[test]
    fn validates_anchor_and_rate() {
        assert!(AnchorDepth::new(0.0).is_err());
        assert!(AnchorDepth::new(-2.0).is_err());
        assert!(AnchorDepth::new(f64::NAN).is_err());
        assert!(AnchorDepth::new(f64::INFINITY).is_err());
        assert!(TaperRate::new(0.0).is_err());
        assert!(TaperRate::new(-0.025).is_err());
    }
}
