//! Deterministic synthetic scene generation.
//!
//! Scenes are tiny ray-traced worlds: an indoor room (floor, ceiling, side
//! walls, back wall) or an outdoor ground with a distant backdrop and open
//! sky, scattered with axis-aligned boxes and spheres. Depth at each pixel
//! is the camera-frame Z of the nearest surface along that pixel's ray
//! (occlusion by z-minimum), or [`INFINITE_DEPTH`] for sky.
//!
//! The paired 3-channel image is built so metric depth is recoverable from
//! appearance alone:
//!
//! - channel 0: per-surface albedo times Lambertian shading from a fixed
//!   directional light (structure and edges);
//! - channel 1: atmospheric transmittance `exp(-0.12 d)` (resolves near
//!   range);
//! - channel 2: transmittance `exp(-0.015 d)` (resolves far range);
//!
//! plus small seeded noise. All channels are quantized to the 8-bit grid
//! (`n / 255`) and depth to the f32 grid at generation time, so the
//! in-memory pipeline and the files-on-disk pipeline are bit-identical.
//! Everything is drawn from one per-scene seed in a fixed order: equal spec
//! implies equal output.

use crate::depth::{DepthMap, ImageBuf, INFINITE_DEPTH};
use crate::error::{Error, Result};
use crate::recon::CameraIntrinsics;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Transmittance rate of image channel 1, 1/meters (near-range cue).
pub const NEAR_ATTENUATION: f64 = 0.12;

/// Transmittance rate of image channel 2, 1/meters (far-range cue).
pub const FAR_ATTENUATION: f64 = 0.015;

/// Default indoor metric depth range, meters.
pub const INDOOR_DEPTH_RANGE: (f64, f64) = (0.5, 10.0);

/// Default outdoor metric depth range, meters.
pub const OUTDOOR_DEPTH_RANGE: (f64, f64) = (2.0, 150.0);

/// Default fraction of outdoor pixels left as open sky.
pub const DEFAULT_SKY_FRACTION: f64 = 0.15;

/// Default camera height above the floor, meters, per regime.
pub const INDOOR_CAMERA_HEIGHT: f64 = 0.8;
pub const OUTDOOR_CAMERA_HEIGHT: f64 = 1.5;

/// Default per-scene primitive count range (inclusive).
pub const PRIMITIVES_MIN: usize = 3;
pub const PRIMITIVES_MAX: usize = 12;

/// Default square scene resolution.
pub const DEFAULT_RESOLUTION: usize = 64;

const NOISE_AMPLITUDE: f64 = 0.012;
const AMBIENT: f64 = 0.35;
const SKY_BRIGHTNESS: f64 = 0.85;
/// Unnormalized direction from surfaces toward the light (x right, y down,
/// z forward): up, left of, and behind the camera.
const LIGHT_TOWARD: [f64; 3] = [-0.4, -0.8, -0.45];

/// Indoor or outdoor world layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Indoor,
    Outdoor,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Indoor => "indoor",
            Regime::Outdoor => "outdoor",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "indoor" => Ok(Regime::Indoor),
            "outdoor" => Ok(Regime::Outdoor),
            other => Err(Error::InvalidArgument(format!(
                "unknown regime '{other}' (expected 'indoor' or 'outdoor')"
            ))),
        }
    }
}

/// Everything needed to regenerate one scene deterministically.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub regime: Regime,
    pub width: usize,
    pub height: usize,
    /// Bounds every finite depth must respect, meters.
    pub depth_min: f64,
    pub depth_max: f64,
    /// Approximate fraction of pixels left at [`INFINITE_DEPTH`]. Must be 0
    /// indoors; at exactly 0 no pixel is infinite.
    pub sky_fraction: f64,
    pub primitive_count: usize,
    pub seed: u64,
    /// Camera height above the floor plane, meters.
    pub camera_height: f64,
    pub intrinsics: CameraIntrinsics,
}

impl SceneSpec {
    /// Indoor room with default geometry (`[0.5, 10]` m, no sky).
    pub fn indoor(resolution: usize, primitive_count: usize, seed: u64) -> Result<Self> {
        Self::new(
            Regime::Indoor,
            resolution,
            resolution,
            INDOOR_DEPTH_RANGE.0,
            INDOOR_DEPTH_RANGE.1,
            0.0,
            primitive_count,
            seed,
            INDOOR_CAMERA_HEIGHT,
            CameraIntrinsics::default_for(resolution, resolution),
        )
    }

    /// Outdoor ground with default geometry (`[2, 150]` m, 15% sky).
    pub fn outdoor(resolution: usize, primitive_count: usize, seed: u64) -> Result<Self> {
        Self::new(
            Regime::Outdoor,
            resolution,
            resolution,
            OUTDOOR_DEPTH_RANGE.0,
            OUTDOOR_DEPTH_RANGE.1,
            DEFAULT_SKY_FRACTION,
            primitive_count,
            seed,
            OUTDOOR_CAMERA_HEIGHT,
            CameraIntrinsics::default_for(resolution, resolution),
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        regime: Regime,
        width: usize,
        height: usize,
        depth_min: f64,
        depth_max: f64,
        sky_fraction: f64,
        primitive_count: usize,
        seed: u64,
        camera_height: f64,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "scene resolution must be positive, got {width}x{height}"
            )));
        }
        if !(depth_min.is_finite() && depth_max.is_finite() && 0.0 < depth_min) {
            return Err(Error::InvalidArgument(format!(
                "depth range bounds must be finite with min > 0, got [{depth_min}, {depth_max}]"
            )));
        }
        if depth_min + 1.0 >= depth_max {
            return Err(Error::InvalidArgument(format!(
                "depth range [{depth_min}, {depth_max}] is too narrow to place a backdrop"
            )));
        }
        if !(0.0..=0.5).contains(&sky_fraction) {
            return Err(Error::InvalidArgument(format!(
                "sky fraction must lie in [0, 0.5], got {sky_fraction}"
            )));
        }
        if regime == Regime::Indoor && sky_fraction != 0.0 {
            return Err(Error::InvalidArgument(
                "indoor scenes cannot have sky pixels (sky fraction must be 0)".into(),
            ));
        }
        if !(camera_height.is_finite() && camera_height > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "camera height must be finite and > 0, got {camera_height}"
            )));
        }
        let spec = Self {
            regime,
            width,
            height,
            depth_min,
            depth_max,
            sky_fraction,
            primitive_count,
            seed,
            camera_height,
            intrinsics,
        };
        // The steepest rays must still meet the room surfaces no closer than
        // depth_min, or generated depths would break the range contract.
        let dy_down = ((height as f64 - 1.0) - intrinsics.cy) / intrinsics.fy;
        let dy_up = (intrinsics.cy - 0.0) / intrinsics.fy;
        let dx_side = (intrinsics.cx.max(width as f64 - 1.0 - intrinsics.cx)) / intrinsics.fx;
        let mut nearest = camera_height / dy_down.max(1e-9);
        if regime == Regime::Indoor {
            nearest = nearest
                .min(camera_height / dy_up.max(1e-9))
                .min(spec.room_half_width() / dx_side.max(1e-9));
        }
        if nearest < depth_min {
            return Err(Error::InvalidArgument(format!(
                "camera height {camera_height} m puts surfaces at {nearest:.3} m, \
                 closer than depth_min {depth_min} m"
            )));
        }
        Ok(spec)
    }

    /// Indoor half-width of the room (walls at +-this), meters.
    fn room_half_width(&self) -> f64 {
        self.camera_height + 0.1
    }
}

/// One generated scene: its spec, rendered image, and ground-truth depth.
#[derive(Debug, Clone)]
pub struct SceneSample {
    pub spec: SceneSpec,
    pub image: ImageBuf,
    pub depth: DepthMap,
}

#[derive(Debug, Clone, Copy)]
enum PrimShape {
    Sphere { center: [f64; 3], radius: f64 },
    Aabb { min: [f64; 3], max: [f64; 3] },
}

#[derive(Debug, Clone, Copy)]
struct Primitive {
    shape: PrimShape,
    albedo: f64,
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    t: f64,
    normal: [f64; 3],
    albedo: f64,
}

fn closer(best: &mut Option<Hit>, candidate: Option<Hit>) {
    if let Some(c) = candidate {
        if best.map_or(true, |b| c.t < b.t) {
            *best = Some(c);
        }
    }
}

/// Intersect `t * (dx, dy, 1)` with an axis-aligned plane `coord = offset`
/// along `axis`, for rays heading toward it; depth equals `t`.
fn plane_hit(dir: [f64; 3], axis: usize, offset: f64, normal: [f64; 3], albedo: f64) -> Option<Hit> {
    let d = dir[axis];
    if d.abs() < 1e-12 {
        return None;
    }
    let t = offset / d;
    if t > 1e-9 {
        Some(Hit { t, normal, albedo })
    } else {
        None
    }
}

fn sphere_hit(dir: [f64; 3], center: [f64; 3], radius: f64, albedo: f64) -> Option<Hit> {
    let a = dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2];
    let dc = dir[0] * center[0] + dir[1] * center[1] + dir[2] * center[2];
    let disc = dc * dc - a * (center.iter().map(|c| c * c).sum::<f64>() - radius * radius);
    if disc < 0.0 {
        return None;
    }
    let t = (dc - disc.sqrt()) / a;
    if t <= 1e-9 {
        return None;
    }
    let p = [dir[0] * t, dir[1] * t, t];
    let n = [
        (p[0] - center[0]) / radius,
        (p[1] - center[1]) / radius,
        (p[2] - center[2]) / radius,
    ];
    Some(Hit { t, normal: n, albedo })
}

fn aabb_hit(dir: [f64; 3], min: [f64; 3], max: [f64; 3], albedo: f64) -> Option<Hit> {
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    let mut enter_axis = 0usize;
    for axis in 0..3 {
        let d = dir[axis];
        if d.abs() < 1e-12 {
            if min[axis] > 0.0 || max[axis] < 0.0 {
                return None;
            }
            continue;
        }
        let (lo, hi) = {
            let a = min[axis] / d;
            let b = max[axis] / d;
            if a < b {
                (a, b)
            } else {
                (b, a)
            }
        };
        if lo > t_enter {
            t_enter = lo;
            enter_axis = axis;
        }
        t_exit = t_exit.min(hi);
    }
    if t_enter > t_exit || t_enter <= 1e-9 {
        return None;
    }
    let mut normal = [0.0; 3];
    normal[enter_axis] = if dir[enter_axis] > 0.0 { -1.0 } else { 1.0 };
    Some(Hit { t: t_enter, normal, albedo })
}

fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// The fixed world built from a spec before per-pixel tracing.
struct World {
    spec: SceneSpec,
    backdrop_z: f64,
    /// Backdrop occupancy threshold per pixel column, in ray-slope (dy)
    /// units: the backdrop (and everything below it) exists where
    /// `dy >= threshold`; above is sky. `-inf` means no sky in the column.
    sky_dy_threshold: Vec<f64>,
    floor_albedo: f64,
    ceiling_albedo: f64,
    wall_albedo: f64,
    backdrop_albedo: f64,
    primitives: Vec<Primitive>,
}

fn build_world(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<World> {
    let (dmin, dmax) = (spec.depth_min, spec.depth_max);
    let backdrop_lo = (0.7 * dmax).max(dmin + 1.0);
    let backdrop_z = rng.gen_range(backdrop_lo..dmax);

    let mut albedo = || rng.gen_range(0.25..0.95);
    let floor_albedo = albedo();
    let ceiling_albedo = albedo();
    let wall_albedo = albedo();
    let backdrop_albedo = albedo();

    // Sky occupancy: sky_fraction of the rows, counted from the top, jittered
    // per column by up to +-1.5 rows so the skyline is irregular. At exactly
    // 0 the threshold sits on the top row (and below every ray), so every
    // pixel hits the backdrop and no depth is infinite.
    let intr = &spec.intrinsics;
    let sky_rows = spec.sky_fraction * spec.height as f64;
    let base_dy = (sky_rows - intr.cy) / intr.fy;
    let sky_dy_threshold = (0..spec.width)
        .map(|_| {
            if spec.sky_fraction == 0.0 {
                f64::NEG_INFINITY
            } else {
                base_dy + rng.gen_range(-1.5..1.5) / intr.fy
            }
        })
        .collect();

    // Primitive extent along z is capped so that, with the front margin at
    // depth_min and the back margin at the backdrop, the placement interval
    // is provably non-empty; depths then always stay inside the contract.
    let gap = backdrop_z - dmin;
    let mut primitives = Vec::with_capacity(spec.primitive_count);
    for _ in 0..spec.primitive_count {
        let prim_albedo = rng.gen_range(0.25..0.95);
        let sphere: bool = rng.gen_bool(0.5);
        let prim = match spec.regime {
            Regime::Indoor => {
                let room_w = spec.room_half_width();
                let h = spec.camera_height;
                let size_cap = ((gap - 0.5) / 2.0 - 0.01).min(h - 0.1);
                if size_cap.min(room_w - 0.2) <= 0.12 {
                    return Err(Error::InvalidArgument(
                        "scene too cramped to place indoor primitives".into(),
                    ));
                }
                if sphere {
                    let r_hi = size_cap.min(0.55);
                    let r = rng.gen_range((0.15f64).min(r_hi - 0.01)..r_hi);
                    let z = rng.gen_range(dmin + r + 0.3..backdrop_z - r - 0.2);
                    let x = rng.gen_range(-(room_w - r - 0.05)..room_w - r - 0.05);
                    let y = rng.gen_range(-(h - r - 0.02)..h - r - 0.02);
                    PrimShape::Sphere { center: [x, y, z], radius: r }
                } else {
                    let lateral_hi = (h - 0.1).min(0.45);
                    let hx = rng.gen_range((0.1f64).min(lateral_hi - 0.01)..lateral_hi);
                    let hy = rng.gen_range((0.1f64).min(lateral_hi - 0.01)..lateral_hi);
                    let hz_hi = size_cap.min(0.45);
                    let hz = rng.gen_range((0.1f64).min(hz_hi - 0.01)..hz_hi);
                    let z = rng.gen_range(dmin + hz + 0.3..backdrop_z - hz - 0.2);
                    let x = rng.gen_range(-(room_w - hx - 0.05)..room_w - hx - 0.05);
                    let y = rng.gen_range(-(h - hy - 0.02)..h - hy - 0.02);
                    PrimShape::Aabb {
                        min: [x - hx, y - hy, z - hz],
                        max: [x + hx, y + hy, z + hz],
                    }
                }
            }
            Regime::Outdoor => {
                let h = spec.camera_height;
                let size_cap = (gap - 1.5) / 2.0 - 0.01;
                if size_cap <= 0.62 {
                    return Err(Error::InvalidArgument(
                        "depth range too narrow to place outdoor primitives".into(),
                    ));
                }
                // Bias placement toward the nearer half of the ground, but
                // never closer than depth_min + margin or within a meter of
                // the backdrop.
                let z_for = |rng: &mut ChaCha8Rng, size: f64| {
                    let lo = dmin + size + 0.5;
                    let hi = (backdrop_z - size - 1.0).min((0.55 * backdrop_z).max(lo + 0.1));
                    rng.gen_range(lo..hi)
                };
                if sphere {
                    let r = rng.gen_range(0.6..size_cap.min(3.0));
                    let z = z_for(&mut *rng, r);
                    let x = rng.gen_range(-0.45..0.45) * z;
                    // Resting on the ground plane y = +h.
                    PrimShape::Sphere { center: [x, h - r, z], radius: r }
                } else {
                    let hx = rng.gen_range(0.5..3.0);
                    let hy = rng.gen_range(0.5..4.0);
                    let hz = rng.gen_range(0.5..size_cap.min(3.0));
                    let z = z_for(&mut *rng, hz);
                    let x = rng.gen_range(-0.45..0.45) * z;
                    let y = h - hy;
                    PrimShape::Aabb {
                        min: [x - hx, y - hy, z - hz],
                        max: [x + hx, y + hy, z + hz],
                    }
                }
            }
        };
        primitives.push(Primitive { shape: prim, albedo: prim_albedo });
    }

    Ok(World {
        spec: spec.clone(),
        backdrop_z,
        sky_dy_threshold,
        floor_albedo,
        ceiling_albedo,
        wall_albedo,
        backdrop_albedo,
        primitives,
    })
}

impl World {
    /// Nearest surface along the pixel ray, or `None` for sky.
    fn trace(&self, u: usize, dir: [f64; 3]) -> Option<Hit> {
        let spec = &self.spec;
        let h = spec.camera_height;
        let mut best: Option<Hit> = None;

        let below_sky = dir[1] >= self.sky_dy_threshold[u];
        if below_sky {
            closer(
                &mut best,
                plane_hit(dir, 2, self.backdrop_z, [0.0, 0.0, -1.0], self.backdrop_albedo),
            );
        }
        // The floor only extends to the backdrop; past it there is either
        // backdrop or sky, never uncapped ground.
        if dir[1] > 0.0 {
            if let Some(hit) = plane_hit(dir, 1, h, [0.0, -1.0, 0.0], self.floor_albedo) {
                if hit.t <= self.backdrop_z {
                    closer(&mut best, Some(hit));
                }
            }
        }
        if spec.regime == Regime::Indoor {
            closer(&mut best, plane_hit(dir, 1, -h, [0.0, 1.0, 0.0], self.ceiling_albedo));
            let w = spec.room_half_width();
            closer(&mut best, plane_hit(dir, 0, w, [-1.0, 0.0, 0.0], self.wall_albedo));
            closer(&mut best, plane_hit(dir, 0, -w, [1.0, 0.0, 0.0], self.wall_albedo));
        }
        for prim in &self.primitives {
            let hit = match prim.shape {
                PrimShape::Sphere { center, radius } => sphere_hit(dir, center, radius, prim.albedo),
                PrimShape::Aabb { min, max } => aabb_hit(dir, min, max, prim.albedo),
            };
            closer(&mut best, hit);
        }
        best
    }
}

/// Quantize to the 8-bit grid the PNG files store.
fn quantize_channel(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Render one scene. Equal specs produce bitwise-equal outputs.
pub fn generate_scene(spec: &SceneSpec) -> Result<SceneSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let world = build_world(spec, &mut rng)?;
    let light = normalize3(LIGHT_TOWARD);
    let (w, h) = (spec.width, spec.height);
    let mut image = ImageBuf::zeros(w, h, 3);
    let mut depth_values = vec![0.0f64; w * h];
    let intr = &spec.intrinsics;

    for v in 0..h {
        for u in 0..w {
            let dir = [
                (u as f64 - intr.cx) / intr.fx,
                (v as f64 - intr.cy) / intr.fy,
                1.0,
            ];
            let (mut c0, mut c1, mut c2, d) = match world.trace(u, dir) {
                Some(hit) => {
                    let lambert =
                        (hit.normal[0] * light[0] + hit.normal[1] * light[1] + hit.normal[2] * light[2])
                            .max(0.0);
                    let shade = AMBIENT + (1.0 - AMBIENT) * lambert;
                    (
                        hit.albedo * shade,
                        (-NEAR_ATTENUATION * hit.t).exp(),
                        (-FAR_ATTENUATION * hit.t).exp(),
                        hit.t,
                    )
                }
                None => (SKY_BRIGHTNESS, 0.0, 0.0, INFINITE_DEPTH),
            };
            c0 += rng.gen_range(-NOISE_AMPLITUDE..NOISE_AMPLITUDE);
            c1 += rng.gen_range(-NOISE_AMPLITUDE..NOISE_AMPLITUDE);
            c2 += rng.gen_range(-NOISE_AMPLITUDE..NOISE_AMPLITUDE);
            image.set(0, u, v, quantize_channel(c0));
            image.set(1, u, v, quantize_channel(c1));
            image.set(2, u, v, quantize_channel(c2));
            // Snap to the f32 grid PFM files store.
            depth_values[v * w + u] = if d.is_finite() { d as f32 as f64 } else { d };
        }
    }

    let depth = DepthMap::new(w, h, depth_values, vec![true; w * h])?;
    Ok(SceneSample { spec: spec.clone(), image, depth })
}

/// Generate `count` scenes at the default per-regime geometry.
///
/// `indoor_mix` of them (deterministically interleaved, so the count is
/// exact) are indoor; primitive counts are drawn uniformly from
/// `[PRIMITIVES_MIN, PRIMITIVES_MAX]` and per-scene seeds from `seed`.
pub fn generate_dataset(
    count: usize,
    indoor_mix: f64,
    resolution: usize,
    seed: u64,
) -> Result<Vec<SceneSample>> {
    if !(0.0..=1.0).contains(&indoor_mix) {
        return Err(Error::InvalidArgument(format!(
            "indoor mix must lie in [0, 1], got {indoor_mix}"
        )));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        // Scene i is indoor iff the running quota floor((i+1) mix) advances.
        let indoor = (((i + 1) as f64 * indoor_mix).floor() - (i as f64 * indoor_mix).floor()) >= 1.0;
        let prim_count = master.gen_range(PRIMITIVES_MIN..=PRIMITIVES_MAX);
        let scene_seed: u64 = master.gen();
        let spec = if indoor {
            SceneSpec::indoor(resolution, prim_count, scene_seed)?
        } else {
            SceneSpec::outdoor(resolution, prim_count, scene_seed)?
        };
        samples.push(generate_scene(&spec)?);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = SceneSpec::indoor(32, 6, 99).unwrap();
        let a = generate_scene(&spec).unwrap();
        let b = generate_scene(&spec).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.depth, b.depth);

        let other = generate_scene(&SceneSpec::indoor(32, 6, 100).unwrap()).unwrap();
        assert_ne!(a.depth, other.depth);
    }

    #[test]
    fn indoor_depths_stay_in_range_and_finite() {
        for seed in 0..20 {
            let spec = SceneSpec::indoor(48, (seed as usize % 10) + 3, seed).unwrap();
            let sample = generate_scene(&spec).unwrap();
            for &d in sample.depth.values() {
                assert!(d.is_finite(), "indoor scenes have no sky");
                assert!(
                    (INDOOR_DEPTH_RANGE.0..=INDOOR_DEPTH_RANGE.1).contains(&d),
                    "indoor depth {d} out of range (seed {seed})"
                );
            }
            assert_eq!(sample.depth.valid_count(), sample.depth.pixel_count());
        }
    }

    #[test]
    fn outdoor_depths_stay_in_range_with_sky() {
        let mut scenes_with_far_backdrop = 0;
        for seed in 0..20u64 {
            let spec = SceneSpec::outdoor(48, (seed as usize % 10) + 3, seed).unwrap();
            let sample = generate_scene(&spec).unwrap();
            let mut sky = 0usize;
            let mut max_finite = 0.0f64;
            for &d in sample.depth.values() {
                if d.is_finite() {
                    assert!(
                        (OUTDOOR_DEPTH_RANGE.0..=OUTDOOR_DEPTH_RANGE.1).contains(&d),
                        "outdoor depth {d} out of range (seed {seed})"
                    );
                    max_finite = max_finite.max(d);
                } else {
                    sky += 1;
                }
            }
            let frac = sky as f64 / sample.depth.pixel_count() as f64;
            assert!(
                (0.05..=0.30).contains(&frac),
                "sky fraction {frac} far from the 0.15 target (seed {seed})"
            );
            if max_finite >= 50.0 {
                scenes_with_far_backdrop += 1;
            }
        }
        assert!(scenes_with_far_backdrop >= 18, "outdoor scenes should usually see far depth");
    }

    #[test]
    fn zero_sky_fraction_means_no_infinite_pixels() {
        let spec = SceneSpec::new(
            Regime::Outdoor,
            48,
            48,
            2.0,
            150.0,
            0.0,
            5,
            7,
            OUTDOOR_CAMERA_HEIGHT,
            CameraIntrinsics::default_for(48, 48),
        )
        .unwrap();
        let sample = generate_scene(&spec).unwrap();
        assert!(sample.depth.values().iter().all(|d| d.is_finite()));
    }

    #[test]
    fn depth_never_exceeds_analytic_room_surfaces() {
        // Occlusion is a minimum over surfaces: no pixel may land behind the
        // room envelope it is guaranteed to hit.
        let spec = SceneSpec::indoor(48, 12, 3).unwrap();
        let sample = generate_scene(&spec).unwrap();
        let intr = &spec.intrinsics;
        for v in 0..spec.height {
            for u in 0..spec.width {
                let dx = (u as f64 - intr.cx) / intr.fx;
                let dy = (v as f64 - intr.cy) / intr.fy;
                let mut envelope = spec.depth_max;
                if dy > 1e-12 {
                    envelope = envelope.min(spec.camera_height / dy);
                }
                if dy < -1e-12 {
                    envelope = envelope.min(-spec.camera_height / dy);
                }
                if dx.abs() > 1e-12 {
                    envelope = envelope.min(spec.room_half_width() / dx.abs());
                }
                let d = sample.depth.get(u, v);
                // The f32 snap can lift a value by at most one ulp.
                assert!(
                    d <= envelope * (1.0 + 1e-6),
                    "pixel ({u},{v}) depth {d} behind room envelope {envelope}"
                );
            }
        }
    }

    #[test]
    fn images_are_quantized_with_depth_cues() {
        let sample = generate_scene(&SceneSpec::outdoor(32, 5, 11).unwrap()).unwrap();
        for &v in sample.image.data() {
            assert!((0.0..=1.0).contains(&v));
            let counts = v * 255.0;
            assert!((counts - counts.round()).abs() < 1e-9, "value {v} off the 8-bit grid");
        }
        // Transmittance channels decrease with depth on average: compare the
        // nearest and farthest finite deciles.
        let mut pairs: Vec<(f64, f64)> = sample
            .depth
            .values()
            .iter()
            .zip(sample.image.plane(2))
            .filter(|(d, _)| d.is_finite())
            .map(|(&d, &c)| (d, c))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let tenth = pairs.len() / 10;
        let near_mean: f64 =
            pairs[..tenth].iter().map(|p| p.1).sum::<f64>() / tenth as f64;
        let far_mean: f64 =
            pairs[pairs.len() - tenth..].iter().map(|p| p.1).sum::<f64>() / tenth as f64;
        assert!(
            near_mean > far_mean + 0.05,
            "far-transmittance channel should fall with depth ({near_mean} vs {far_mean})"
        );
    }

    #[test]
    fn dataset_mix_is_exact_by_interleaving() {
        let samples = generate_dataset(10, 0.5, 16, 42).unwrap();
        let regimes: Vec<Regime> = samples.iter().map(|s| s.spec.regime).collect();
        assert_eq!(regimes.iter().filter(|r| **r == Regime::Indoor).count(), 5);
        // 0.5 alternates starting outdoor (quota advances on even i).
        assert_eq!(regimes[0], Regime::Outdoor);
        assert_eq!(regimes[1], Regime::Indoor);

        let all_indoor = generate_dataset(6, 1.0, 16, 1).unwrap();
        assert!(all_indoor.iter().all(|s| s.spec.regime == Regime::Indoor));
        let all_outdoor = generate_dataset(6, 0.0, 16, 1).unwrap();
        assert!(all_outdoor.iter().all(|s| s.spec.regime == Regime::Outdoor));

        let n1000 = generate_dataset(1000, 0.5, 8, 5).unwrap();
        assert_eq!(n1000.iter().filter(|s| s.spec.regime == Regime::Indoor).count(), 500);

        assert!(generate_dataset(4, 1.5, 16, 0).is_err());
    }

    #[test]
    fn primitive_counts_follow_the_spec_field() {
        let samples = generate_dataset(40, 0.5, 8, 9).unwrap();
        for s in &samples {
            assert!((PRIMITIVES_MIN..=PRIMITIVES_MAX).contains(&s.spec.primitive_count));
        }
        // Counts vary across scenes.
        let distinct: std::collections::HashSet<usize> =
            samples.iter().map(|s| s.spec.primitive_count).collect();
        assert!(distinct.len() > 3);
    }

    #[test]
    fn rejects_invalid_specs() {
        let intr = CameraIntrinsics::default_for(32, 32);
        // Indoor with sky.
        assert!(SceneSpec::new(Regime::Indoor, 32, 32, 0.5, 10.0, 0.1, 3, 0, 0.8, intr).is_err());
        // Sky fraction beyond half.
        assert!(SceneSpec::new(Regime::Outdoor, 32, 32, 2.0, 150.0, 0.6, 3, 0, 1.5, intr).is_err());
        // Degenerate depth range.
        assert!(SceneSpec::new(Regime::Indoor, 32, 32, 5.0, 5.5, 0.0, 3, 0, 0.8, intr).is_err());
        // Camera too low for the requested depth_min.
        assert!(SceneSpec::new(Regime::Indoor, 32, 32, 3.0, 10.0, 0.0, 3, 0, 0.8, intr).is_err());
        // Zero resolution.
        assert!(SceneSpec::new(Regime::Indoor, 0, 32, 0.5, 10.0, 0.0, 3, 0, 0.8, intr).is_err());
    }
}
