//! Depth evaluation metrics: absolute relative error, RMSE, mean log10
//! error, and the delta threshold accuracies.
//!
//! A pixel enters the evaluation iff the **ground truth** there is valid,
//! finite, strictly positive, and at most the configured cap. Predictions
//! are taken as-is for REL/RMSE and floored at [`PRED_FLOOR`] inside
//! logarithms and ratios so a degenerate zero prediction scores badly
//! instead of producing NaNs. Delta thresholds are strict:
//! `max(p/g, g/p) < base^n`, so a ratio of exactly `base` fails `delta1`.
//!
//! Dataset-level numbers come in two conventions — the mean of per-image
//! metrics and the pooled per-pixel metrics — and both are reported, with
//! image-averaged as the headline convention.

use crate::depth::{DepthMap, ImageBuf};
use crate::error::{Error, Result};

/// Default threshold base for the delta accuracies.
pub const DEFAULT_DELTA_BASE: f64 = 1.25;

/// Depth cap used for indoor-style evaluation, meters.
pub const INDOOR_CAP: f64 = 10.0;

/// Depth cap used for outdoor-style evaluation, meters.
pub const OUTDOOR_CAP: f64 = 80.0;

/// Predictions are floored here (meters) inside log10 and ratio terms.
pub const PRED_FLOOR: f64 = 1e-6;

/// Evaluation settings: the ground-truth depth cap and the delta base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub cap_m: f64,
    pub delta_base: f64,
}

impl EvalConfig {
    pub fn new(cap_m: f64, delta_base: f64) -> Result<Self> {
        if !cap_m.is_finite() || cap_m <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "evaluation cap must be finite and > 0, got {cap_m}"
            )));
        }
        if !delta_base.is_finite() || delta_base <= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "delta base must be finite and > 1, got {delta_base}"
            )));
        }
        Ok(Self { cap_m, delta_base })
    }

    /// Cap 10 m, base 1.25.
    pub fn indoor() -> Self {
        Self { cap_m: INDOOR_CAP, delta_base: DEFAULT_DELTA_BASE }
    }

    /// Cap 80 m, base 1.25.
    pub fn outdoor() -> Self {
        Self { cap_m: OUTDOOR_CAP, delta_base: DEFAULT_DELTA_BASE }
    }

    /// Same base, different cap.
    pub fn with_cap(self, cap_m: f64) -> Result<Self> {
        Self::new(cap_m, self.delta_base)
    }
}

/// Metric values over one image (or one pooled pixel population).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    /// Mean of `|p - g| / g`.
    pub abs_rel: f64,
    /// Root of the mean squared metric error.
    pub rmse: f64,
    /// Mean of `|log10 p - log10 g|`.
    pub log10: f64,
    /// Fraction with `max(p/g, g/p) < base`.
    pub delta1: f64,
    /// Fraction under `base^2`.
    pub delta2: f64,
    /// Fraction under `base^3`.
    pub delta3: f64,
    /// Number of evaluated pixels.
    pub pixels: usize,
}

/// Raw sums behind an [`EvalReport`], used to pool across images.
#[derive(Debug, Clone, Copy, Default)]
struct EvalSums {
    abs_rel: f64,
    sq: f64,
    log10: f64,
    delta1: usize,
    delta2: usize,
    delta3: usize,
    pixels: usize,
}

impl EvalSums {
    fn add_pixel(&mut self, pred: f64, gt: f64, base: f64) {
        let p_floored = pred.max(PRED_FLOOR);
        self.abs_rel += (pred - gt).abs() / gt;
        self.sq += (pred - gt) * (pred - gt);
        self.log10 += (p_floored.log10() - gt.log10()).abs();
        let ratio = (p_floored / gt).max(gt / p_floored);
        if ratio < base {
            self.delta1 += 1;
        }
        if ratio < base * base {
            self.delta2 += 1;
        }
        if ratio < base * base * base {
            self.delta3 += 1;
        }
        self.pixels += 1;
    }

    fn report(&self) -> EvalReport {
        let n = self.pixels as f64;
        EvalReport {
            abs_rel: self.abs_rel / n,
            rmse: (self.sq / n).sqrt(),
            log10: self.log10 / n,
            delta1: self.delta1 as f64 / n,
            delta2: self.delta2 as f64 / n,
            delta3: self.delta3 as f64 / n,
            pixels: self.pixels,
        }
    }
}

/// Evaluate one prediction against ground truth. Errors if the shapes
/// disagree or no ground-truth pixel passes the inclusion rule.
pub fn evaluate(pred: &DepthMap, gt: &DepthMap, config: &EvalConfig) -> Result<EvalReport> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut sums = EvalSums::default();
    for i in 0..gt.pixel_count() {
        let g = gt.values()[i];
        if gt.valid()[i] && g.is_finite() && g > 0.0 && g <= config.cap_m {
            sums.add_pixel(pred.values()[i], g, config.delta_base);
        }
    }
    if sums.pixels == 0 {
        return Err(Error::Empty(format!(
            "no ground-truth pixel is valid, positive, finite, and <= cap {} m",
            config.cap_m
        )));
    }
    Ok(sums.report())
}

/// Dataset-level aggregation in both conventions.
#[derive(Debug, Clone, Copy)]
pub struct DatasetEval {
    /// Unweighted mean of per-image metrics (headline convention).
    pub image_mean: EvalReport,
    /// Metrics over the pooled pixel population of all images.
    pub pixel_pooled: EvalReport,
    pub images: usize,
}

/// Combine per-image reports. Errors on an empty list.
pub fn aggregate(reports: &[EvalReport]) -> Result<DatasetEval> {
    if reports.is_empty() {
        return Err(Error::Empty("no evaluation reports to aggregate".into()));
    }
    let n = reports.len() as f64;
    let image_mean = EvalReport {
        abs_rel: reports.iter().map(|r| r.abs_rel).sum::<f64>() / n,
        rmse: reports.iter().map(|r| r.rmse).sum::<f64>() / n,
        log10: reports.iter().map(|r| r.log10).sum::<f64>() / n,
        delta1: reports.iter().map(|r| r.delta1).sum::<f64>() / n,
        delta2: reports.iter().map(|r| r.delta2).sum::<f64>() / n,
        delta3: reports.iter().map(|r| r.delta3).sum::<f64>() / n,
        pixels: reports.iter().map(|r| r.pixels).sum(),
    };
    // Per-image means scale back to sums exactly, so pooling is lossless.
    let total: f64 = reports.iter().map(|r| r.pixels as f64).sum();
    let pooled = |f: &dyn Fn(&EvalReport) -> f64| {
        reports.iter().map(|r| f(r) * r.pixels as f64).sum::<f64>() / total
    };
    let pixel_pooled = EvalReport {
        abs_rel: pooled(&|r| r.abs_rel),
        rmse: pooled(&|r| r.rmse * r.rmse).sqrt(),
        log10: pooled(&|r| r.log10),
        delta1: pooled(&|r| r.delta1),
        delta2: pooled(&|r| r.delta2),
        delta3: pooled(&|r| r.delta3),
        pixels: image_mean.pixels,
    };
    Ok(DatasetEval { image_mean, pixel_pooled, images: reports.len() })
}

/// Predict with horizontal-flip averaging: run the predictor on the image
/// and on its mirror, un-mirror the second prediction, and average the two
/// per pixel. If either half is [`crate::depth::INFINITE_DEPTH`] the average
/// is infinite; validity is the conjunction.
pub fn flip_averaged_prediction<F>(predict: F, image: &ImageBuf) -> Result<DepthMap>
where
    F: Fn(&ImageBuf) -> Result<DepthMap>,
{
    let plain = predict(image)?;
    let mirrored = predict(&image.flip_horizontal())?.flip_horizontal();
    if plain.width() != mirrored.width() || plain.height() != mirrored.height() {
        return Err(Error::ShapeMismatch(
            "flip-averaged predictor returned differing shapes".into(),
        ));
    }
    let values = plain
        .values()
        .iter()
        .zip(mirrored.values())
        .map(|(&a, &b)| 0.5 * (a + b))
        .collect();
    let valid = plain
        .valid()
        .iter()
        .zip(mirrored.valid())
        .map(|(&a, &b)| a && b)
        .collect();
    DepthMap::new(plain.width(), plain.height(), values, valid)
}

/// Evaluate a predictor with flip averaging against ground truth.
pub fn evaluate_flip_averaged<F>(
    predict: F,
    image: &ImageBuf,
    gt: &DepthMap,
    config: &EvalConfig,
) -> Result<EvalReport>
where
    F: Fn(&ImageBuf) -> Result<DepthMap>,
{
    evaluate(&flip_averaged_prediction(predict, image)?, gt, config)
}
