//! SGD-with-momentum training loop for the two-branch model.
//!
//! Each step draws a mini-batch of scenes and, per scene, an anchor from the
//! pool (or a fixed one), normalizes the ground-truth depth at that anchor,
//! and accumulates analytic gradients of the weighted near/far/mask loss.
//! The summed gradient is scaled by `1 / M`, where `M` is the batch's count
//! of valid ground-truth pixels, before the momentum update, so the step
//! size does not depend on how many pixels happened to be valid.
//!
//! All randomness comes from one seeded ChaCha8 stream with a fixed draw
//! order: per step, per batch slot, the scene index and then (in sampled
//! anchor mode only) the anchor index. Runs with equal configurations are
//! bitwise reproducible; the worker-thread count changes only how partial
//! gradient sums are grouped, so it is part of the configuration as far as
//! bitwise reproducibility is concerned.

use std::path::Path;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Model;
use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::loss::{self, LossWeights};
use crate::pool::AnchorPool;
use crate::repr::{self, TaperRate};
use crate::scene::SceneSample;

/// How the training anchor is chosen for each batch element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnchorMode {
    /// Draw uniformly from the pool (the normal regime-spanning setup).
    Sampled,
    /// Always use the pool anchor nearest this depth in meters.
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weights: LossWeights,
    pub taper: TaperRate,
    pub seed: u64,
    /// A loss row is recorded at step 1, every `log_every` steps, and at the
    /// final step.
    pub log_every: usize,
    pub threads: usize,
    pub anchor_mode: AnchorMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 4,
            learning_rate: 1e-3,
            momentum: 0.9,
            weights: LossWeights::default(),
            taper: TaperRate::default(),
            seed: 0,
            log_every: 50,
            threads: 1,
            anchor_mode: AnchorMode::Sampled,
        }
    }
}

/// One recorded point of the loss curve. Components are batch loss sums
/// divided by the batch's valid-pixel count `M`, so
/// `loss_total = w_near * loss_near + w_far * loss_far + w_mask * loss_mask`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow {
    pub step: usize,
    pub loss_near: f64,
    pub loss_far: f64,
    pub loss_mask: f64,
    pub loss_total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub curve: Vec<TrainLogRow>,
    /// Total loss at the final step.
    pub final_loss: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct BatchStats {
    sum_near: f64,
    sum_far: f64,
    sum_mask: f64,
    valid_px: usize,
}

impl BatchStats {
    fn merge(&mut self, other: &BatchStats) {
        self.sum_near += other.sum_near;
        self.sum_far += other.sum_far;
        self.sum_mask += other.sum_mask;
        self.valid_px += other.valid_px;
    }
}

fn validate(config: &TrainConfig, model: &Model, pool: &AnchorPool) -> Result<()> {
    if config.steps == 0 {
        return Err(Error::InvalidArgument("training needs at least one step".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    if config.log_every == 0 {
        return Err(Error::InvalidArgument("log_every must be at least 1".into()));
    }
    if config.threads == 0 {
        return Err(Error::InvalidArgument("thread count must be at least 1".into()));
    }
    if !config.learning_rate.is_finite() || config.learning_rate <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be finite and positive, got {}",
            config.learning_rate
        )));
    }
    if !config.momentum.is_finite() || !(0.0..1.0).contains(&config.momentum) {
        return Err(Error::InvalidArgument(format!(
            "momentum must lie in [0, 1), got {}",
            config.momentum
        )));
    }
    for (name, w) in [
        ("near", config.weights.near),
        ("far", config.weights.far),
        ("mask", config.weights.mask),
    ] {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "{name} loss weight must be finite and non-negative, got {w}"
            )));
        }
    }
    if let AnchorMode::Fixed(m) = config.anchor_mode {
        if !m.is_finite() || m <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "fixed anchor depth must be finite and positive, got {m}"
            )));
        }
    }
    if model.embed_dim() != pool.embed_dim() {
        return Err(Error::ShapeMismatch(format!(
            "model embedding dim {} does not match pool dim {}",
            model.embed_dim(),
            pool.embed_dim()
        )));
    }
    Ok(())
}

/// Run one batch slice: forward, losses, and backward for each
/// `(scene index, anchor index)` pick, accumulating into `model`'s gradient
/// buffers and `embed_grads` (a flat `[anchors * embed_dim]` buffer).
fn process_picks(
    model: &mut Model,
    pool: &AnchorPool,
    data: &[SceneSample],
    picks: &[(usize, usize)],
    config: &TrainConfig,
    embed_grads: &mut [f64],
) -> Result<BatchStats> {
    let e = pool.embed_dim();
    let mut stats = BatchStats::default();
    for &(si, ai) in picks {
        let sample = &data[si];
        let anchor = pool.anchor(ai);
        let targets = repr::normalize(&sample.depth, anchor, config.taper);
        let pass = model.forward(&sample.image, pool.embedding(ai))?;
        let near = loss::near_loss(pass.near_values(), &targets)?;
        let far = loss::far_loss(pass.far_values(), &targets)?;
        let d_near: Vec<f64> = near.grad.iter().map(|g| g * config.weights.near).collect();
        let d_far: Vec<f64> = far.grad.iter().map(|g| g * config.weights.far).collect();
        stats.sum_near += near.value;
        stats.sum_far += far.value;
        stats.valid_px += near.pixels + far.pixels;
        let embed_slice = &mut embed_grads[ai * e..(ai + 1) * e];
        match pass.mask_logits() {
            Some(logits) => {
                let mask = loss::mask_loss_logits(logits, &targets)?;
                let d_mask: Vec<f64> =
                    mask.grad.iter().map(|g| g * config.weights.mask).collect();
                stats.sum_mask += mask.value;
                model.backward(&pass, &d_near, &d_far, Some(&d_mask), embed_slice)?;
            }
            None => {
                model.backward(&pass, &d_near, &d_far, None, embed_slice)?;
            }
        }
    }
    Ok(stats)
}

/// Train `model` and the pool embeddings in place on `data`.
///
/// Returns the recorded loss curve. Fails with [`Error::Diverged`] if the
/// batch loss stops being finite, and with [`Error::Empty`] if a batch
/// contains no valid ground-truth pixels.
pub fn train(
    model: &mut Model,
    pool: &mut AnchorPool,
    data: &[SceneSample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    validate(config, model, pool)?;
    if data.is_empty() {
        return Err(Error::Empty("training data is empty".into()));
    }
    let fixed_index = match config.anchor_mode {
        AnchorMode::Fixed(m) => Some(pool.select(m)?.index),
        AnchorMode::Sampled => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut velocity: Vec<Vec<f64>> =
        model.blocks().iter().map(|(p, _)| vec![0.0; p.len()]).collect();
    let mut embed_velocity = vec![0.0; pool.embeddings_flat().len()];
    let mut embed_grads = vec![0.0; pool.embeddings_flat().len()];
    let mut curve = Vec::new();

    for step in 1..=config.steps {
        let picks: Vec<(usize, usize)> = (0..config.batch_size)
            .map(|_| {
                let si = rng.gen_range(0..data.len());
                let ai = match fixed_index {
                    Some(i) => i,
                    None => pool.sample(&mut rng).index,
                };
                (si, ai)
            })
            .collect();

        model.zero_grads();
        embed_grads.fill(0.0);
        let stats = if config.threads == 1 {
            process_picks(model, pool, data, &picks, config, &mut embed_grads)?
        } else {
            let chunk_size = config.batch_size.div_ceil(config.threads);
            let mut results = Vec::new();
            thread::scope(|s| {
                let mut handles = Vec::new();
                for chunk in picks.chunks(chunk_size) {
                    let mut local_model = model.clone();
                    let mut local_embed = vec![0.0; embed_grads.len()];
                    let pool_ref = &*pool;
                    handles.push(s.spawn(move || {
                        let stats = process_picks(
                            &mut local_model,
                            pool_ref,
                            data,
                            chunk,
                            config,
                            &mut local_embed,
                        )?;
                        Ok::<_, Error>((local_model, local_embed, stats))
                    }));
                }
                for h in handles {
                    results.push(h.join().expect("training worker panicked"));
                }
            });
            let mut stats = BatchStats::default();
            for r in results {
                let (local_model, local_embed, local_stats) = r?;
                model.add_grads(&local_model);
                for (g, l) in embed_grads.iter_mut().zip(&local_embed) {
                    *g += *l;
                }
                stats.merge(&local_stats);
            }
            stats
        };

        if stats.valid_px == 0 {
            return Err(Error::Empty(format!(
                "batch at step {step} has no valid ground-truth pixels"
            )));
        }
        let m = stats.valid_px as f64;
        let row = TrainLogRow {
            step,
            loss_near: stats.sum_near / m,
            loss_far: stats.sum_far / m,
            loss_mask: stats.sum_mask / m,
            loss_total: (config.weights.near * stats.sum_near
                + config.weights.far * stats.sum_far
                + config.weights.mask * stats.sum_mask)
                / m,
        };
        if !row.loss_total.is_finite() {
            return Err(Error::Diverged { step });
        }

        let scale = 1.0 / m;
        for ((param, grad), vel) in model.blocks_mut().into_iter().zip(velocity.iter_mut()) {
            for i in 0..param.len() {
                vel[i] = config.momentum * vel[i] + grad[i] * scale;
                param[i] -= config.learning_rate * vel[i];
            }
        }
        let flat = pool.embeddings_flat_mut();
        for i in 0..flat.len() {
            embed_velocity[i] = config.momentum * embed_velocity[i] + embed_grads[i] * scale;
            flat[i] -= config.learning_rate * embed_velocity[i];
        }

        if step == 1 || step % config.log_every == 0 || step == config.steps {
            curve.push(row);
        }
    }

    let final_loss = curve.last().expect("at least one step").loss_total;
    Ok(TrainOutcome { curve, final_loss })
}

/// Write a loss curve as CSV with a fixed header.
pub fn write_loss_curve_csv(path: &Path, rows: &[TrainLogRow]) -> Result<()> {
    let mut text = String::from("step,loss_near,loss_far,loss_mask,loss_total\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.step, r.loss_near, r.loss_far, r.loss_mask, r.loss_total
        ));
    }
    atomic_write(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::DepthMap;
    use crate::model::ModelVariant;
    use crate::scene;

    fn tiny_setup(seed: u64) -> (Model, AnchorPool, Vec<SceneSample>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Model::new(ModelVariant::Full, 4, &mut rng);
        let pool = AnchorPool::new(&[2.0, 4.0, 6.0], 4, &mut rng).unwrap();
        let data = scene::generate_dataset(3, 0.5, 16, 77).unwrap();
        (model, pool, data)
    }

    fn params_snapshot(model: &Model) -> Vec<Vec<f64>> {
        model.blocks().iter().map(|(p, _)| (*p).clone()).collect()
    }

    #[test]
    fn one_step_updates_parameters_and_logs() {
        let (mut model, mut pool, data) = tiny_setup(1);
        let before = params_snapshot(&model);
        let config = TrainConfig { steps: 1, batch_size: 2, ..TrainConfig::default() };
        let out = train(&mut model, &mut pool, &data, &config).unwrap();
        assert_eq!(out.curve.len(), 1);
        assert_eq!(out.curve[0].step, 1);
        assert!(out.final_loss.is_finite());
        let after = params_snapshot(&model);
        let changed = before
            .iter()
            .zip(&after)
            .any(|(b, a)| b.iter().zip(a).any(|(x, y)| x != y));
        assert!(changed, "a training step must move some parameter");
    }

    #[test]
    fn log_rows_cover_first_interval_and_final_steps() {
        let (mut model, mut pool, data) = tiny_setup(2);
        let config = TrainConfig {
            steps: 7,
            batch_size: 1,
            log_every: 3,
            ..TrainConfig::default()
        };
        let out = train(&mut model, &mut pool, &data, &config).unwrap();
        let steps: Vec<usize> = out.curve.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![1, 3, 6, 7]);
        for r in &out.curve {
            let recombined = r.loss_near * config.weights.near
                + r.loss_far * config.weights.far
                + r.loss_mask * config.weights.mask;
            assert!((recombined - r.loss_total).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_anchor_mode_leaves_other_embeddings_untouched() {
        let (mut model, mut pool, data) = tiny_setup(3);
        let before = pool.embeddings_flat().to_vec();
        let config = TrainConfig {
            steps: 3,
            batch_size: 2,
            anchor_mode: AnchorMode::Fixed(80.0), // nearest pool anchor: 6 m, index 2
            ..TrainConfig::default()
        };
        train(&mut model, &mut pool, &data, &config).unwrap();
        let after = pool.embeddings_flat();
        let e = pool.embed_dim();
        assert_eq!(&before[..2 * e], &after[..2 * e], "undrawn embeddings must not move");
        assert_ne!(&before[2 * e..], &after[2 * e..], "the drawn embedding must move");
    }

    #[test]
    fn same_seed_is_bitwise_reproducible_and_seeds_differ() {
        let (model0, pool0, data) = tiny_setup(4);
        let config = TrainConfig { steps: 2, batch_size: 2, ..TrainConfig::default() };

        let mut m1 = model0.clone();
        let mut p1 = pool0.clone();
        let out1 = train(&mut m1, &mut p1, &data, &config).unwrap();
        let mut m2 = model0.clone();
        let mut p2 = pool0.clone();
        let out2 = train(&mut m2, &mut p2, &data, &config).unwrap();
        assert_eq!(out1.curve, out2.curve);
        assert_eq!(params_snapshot(&m1), params_snapshot(&m2));
        assert_eq!(p1.embeddings_flat(), p2.embeddings_flat());

        let mut m3 = model0.clone();
        let mut p3 = pool0.clone();
        let other = TrainConfig { seed: 99, ..config };
        let out3 = train(&mut m3, &mut p3, &data, &other).unwrap();
        assert!(
            out3.curve != out1.curve || params_snapshot(&m3) != params_snapshot(&m1),
            "different seeds should not give identical runs"
        );
    }

    #[test]
    fn threaded_runs_are_reproducible_at_fixed_thread_count() {
        let (model0, pool0, data) = tiny_setup(5);
        let config = TrainConfig {
            steps: 2,
            batch_size: 4,
            threads: 2,
            ..TrainConfig::default()
        };
        let mut m1 = model0.clone();
        let mut p1 = pool0.clone();
        let out1 = train(&mut m1, &mut p1, &data, &config).unwrap();
        let mut m2 = model0.clone();
        let mut p2 = pool0.clone();
        let out2 = train(&mut m2, &mut p2, &data, &config).unwrap();
        assert_eq!(out1.curve, out2.curve);
        assert_eq!(params_snapshot(&m1), params_snapshot(&m2));
    }

    #[test]
    fn absurd_learning_rate_reports_divergence() {
        let (mut model, mut pool, data) = tiny_setup(6);
        let config = TrainConfig {
            steps: 20,
            batch_size: 2,
            learning_rate: 1e12,
            ..TrainConfig::default()
        };
        let err = train(&mut model, &mut pool, &data, &config).unwrap_err();
        assert!(matches!(err, Error::Diverged { step } if step <= 20), "got {err:?}");
    }

    #[test]
    fn batch_with_no_valid_pixels_is_rejected() {
        let (mut model, mut pool, mut data) = tiny_setup(7);
        for sample in &mut data {
            let (w, h) = (sample.depth.width(), sample.depth.height());
            let n = w * h;
            sample.depth = DepthMap::new(w, h, vec![1.0; n], vec![false; n]).unwrap();
        }
        let config = TrainConfig { steps: 1, ..TrainConfig::default() };
        let err = train(&mut model, &mut pool, &data, &config).unwrap_err();
        assert!(matches!(err, Error::Empty(_)), "got {err:?}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let (mut model, mut pool, data) = tiny_setup(8);
        let bad: Vec<TrainConfig> = vec![
            TrainConfig { steps: 0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { log_every: 0, ..TrainConfig::default() },
            TrainConfig { threads: 0, ..TrainConfig::default() },
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
            TrainConfig { learning_rate: f64::NAN, ..TrainConfig::default() },
            TrainConfig { momentum: 1.0, ..TrainConfig::default() },
            TrainConfig { momentum: -0.1, ..TrainConfig::default() },
            TrainConfig { anchor_mode: AnchorMode::Fixed(0.0), ..TrainConfig::default() },
        ];
        for config in bad {
            assert!(
                train(&mut model, &mut pool, &data, &config).is_err(),
                "config should be rejected: {config:?}"
            );
        }
        let err = train(&mut model, &mut pool, &[], &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Empty(_)));
    }

    #[test]
    fn loss_curve_csv_round_trips_as_text() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        let rows = vec![
            TrainLogRow { step: 1, loss_near: 0.25, loss_far: 0.5, loss_mask: 0.125, loss_total: 0.75625 },
            TrainLogRow { step: 50, loss_near: 0.1, loss_far: 0.2, loss_mask: 0.05, loss_total: 0.3025 },
        ];
        write_loss_curve_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,loss_near,loss_far,loss_mask,loss_total");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,0.25,0.5,0.125,"));
    }
}
