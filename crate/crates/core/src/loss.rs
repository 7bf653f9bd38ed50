//! Branch losses, mask BCE, weighted total, and their analytic gradients.
//!
//! All three terms are **sums** over their contributing pixels (no mean
//! normalization), matching the weighted total
//! `total = w_near * near + w_far * far + w_mask * mask`. Callers that want
//! resolution-independent magnitudes divide by the pixel counts carried in
//! [`LossReport`]; the training loop does exactly that with the valid-pixel
//! count before applying the learning rate.
//!
//! Contribution rules: a pixel feeds the near term iff it is valid and its
//! ground-truth mask is 1, the far term iff valid and mask 0, and the mask
//! term iff valid. Invalid pixels feed nothing, including the mask term.

use crate::error::{Error, Result};
use crate::repr::NormalizedDepthPair;

/// Mask probabilities are clamped to `[CLAMP, 1 - CLAMP]` inside the BCE so
/// saturated predictions keep finite loss and gradient.
pub const BCE_PROB_CLAMP: f64 = 1e-7;

/// Term weights for the combined loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub near: f64,
    pub far: f64,
    pub mask: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        // Depth terms at full weight; the mask term is kept small so routing
        // supervision does not swamp depth supervision.
        LossWeights { near: 1.0, far: 1.0, mask: 0.05 }
    }
}

/// One loss term: its summed value, the per-pixel gradient of that sum with
/// respect to the prediction (zero at non-contributing pixels), and how many
/// pixels contributed.
#[derive(Debug, Clone)]
pub struct LossTerm {
    pub value: f64,
    pub grad: Vec<f64>,
    pub pixels: usize,
}

/// Scalar summary of one step's losses: raw sums, the weighted total, and
/// per-term contributing pixel counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub near_sum: f64,
    pub far_sum: f64,
    pub mask_sum: f64,
    pub total: f64,
    pub near_pixels: usize,
    pub far_pixels: usize,
    pub mask_pixels: usize,
}

impl LossReport {
    /// Per-pixel means for logging (0 when a term had no pixels).
    pub fn near_mean(&self) -> f64 {
        mean(self.near_sum, self.near_pixels)
    }

    pub fn far_mean(&self) -> f64 {
        mean(self.far_sum, self.far_pixels)
    }

    pub fn mask_mean(&self) -> f64 {
        mean(self.mask_sum, self.mask_pixels)
    }
}

fn mean(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn check_len(pred: &[f64], targets: &NormalizedDepthPair, what: &str) -> Result<()> {
    let n = targets.mask.values().len();
    if pred.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{what} prediction has {} pixels, targets have {n}",
            pred.len()
        )));
    }
    Ok(())
}

/// Squared-error sum over valid near-branch pixels (mask 1):
/// `sum (p - g)^2`, gradient `2 (p - g)` per contributing pixel.
pub fn near_loss(pred: &[f64], targets: &NormalizedDepthPair) -> Result<LossTerm> {
    check_len(pred, targets, "near")?;
    squared_branch_loss(pred, targets, true)
}

/// Squared-error sum over valid far-branch pixels (mask 0).
pub fn far_loss(pred: &[f64], targets: &NormalizedDepthPair) -> Result<LossTerm> {
    check_len(pred, targets, "far")?;
    squared_branch_loss(pred, targets, false)
}

fn squared_branch_loss(
    pred: &[f64],
    targets: &NormalizedDepthPair,
    near_branch: bool,
) -> Result<LossTerm> {
    let gt = if near_branch { targets.near.values() } else { targets.far.values() };
    let mask = targets.mask.values();
    let valid = targets.mask.valid();
    let mut value = 0.0;
    let mut pixels = 0usize;
    let mut grad = vec![0.0; pred.len()];
    for i in 0..pred.len() {
        let in_branch = if near_branch { mask[i] >= 0.5 } else { mask[i] < 0.5 };
        if valid[i] && in_branch {
            let r = pred[i] - gt[i];
            value += r * r;
            grad[i] = 2.0 * r;
            pixels += 1;
        }
    }
    Ok(LossTerm { value, grad, pixels })
}

/// Binary cross-entropy sum over valid pixels from mask **probabilities**.
/// Probabilities are clamped to `[`[`BCE_PROB_CLAMP`]`, 1 - clamp]` for both
/// the value and the gradient `(p - g) / (p (1 - p))`.
pub fn mask_loss_probs(pred: &[f64], targets: &NormalizedDepthPair) -> Result<LossTerm> {
    check_len(pred, targets, "mask")?;
    let gt = targets.mask.values();
    let valid = targets.mask.valid();
    let mut value = 0.0;
    let mut pixels = 0usize;
    let mut grad = vec![0.0; pred.len()];
    for i in 0..pred.len() {
        if valid[i] {
            let p = pred[i].clamp(BCE_PROB_CLAMP, 1.0 - BCE_PROB_CLAMP);
            let g = gt[i];
            value -= g * p.ln() + (1.0 - g) * (1.0 - p).ln();
            grad[i] = (p - g) / (p * (1.0 - p));
            pixels += 1;
        }
    }
    Ok(LossTerm { value, grad, pixels })
}

/// Binary cross-entropy sum over valid pixels from mask **pre-activations**
/// (the numerically stable fused-logistic form):
/// `max(z, 0) - z g + ln(1 + exp(-|z|))`, gradient `sigmoid(z) - g`.
pub fn mask_loss_logits(logits: &[f64], targets: &NormalizedDepthPair) -> Result<LossTerm> {
    check_len(logits, targets, "mask logit")?;
    let gt = targets.mask.values();
    let valid = targets.mask.valid();
    let mut value = 0.0;
    let mut pixels = 0usize;
    let mut grad = vec![0.0; logits.len()];
    for i in 0..logits.len() {
        if valid[i] {
            let z = logits[i];
            let g = gt[i];
            value += z.max(0.0) - z * g + (-z.abs()).exp().ln_1p();
            grad[i] = sigmoid(z) - g;
            pixels += 1;
        }
    }
    Ok(LossTerm { value, grad, pixels })
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Combine the three term sums into the weighted total.
pub fn total_loss(
    near: &LossTerm,
    far: &LossTerm,
    mask: &LossTerm,
    weights: &LossWeights,
) -> LossReport {
    LossReport {
        near_sum: near.value,
        far_sum: far.value,
        mask_sum: mask.value,
        total: weights.near * near.value + weights.far * far.value + weights.mask * mask.value,
        near_pixels: near.pixels,
        far_pixels: far.pixels,
        mask_pixels: mask.pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repr::Field;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LN_2: f64 = 0.693_147_180_559_945_3;

    /// Build targets directly from raw channel values.
    fn targets(near: &[f64], far: &[f64], mask: &[f64], valid: &[bool]) -> NormalizedDepthPair {
        let w = near.len();
        let f = |v: &[f64]| Field::new(w, 1, v.to_vec(), valid.to_vec()).unwrap();
        NormalizedDepthPair { near: f(near), far: f(far), mask: f(mask) }
    }

    #[test]
    fn single_pixel_branch_losses() {
        // Near pixel: pred 0.5 vs gt 0.3 -> 0.04, grad 0.4.
        let t = targets(&[0.3], &[0.5], &[1.0], &[true]);
        let near = near_loss(&[0.5], &t).unwrap();
        assert!((near.value - 0.04).abs() < 1e-15);
        assert!((near.grad[0] - 0.4).abs() < 1e-15);
        assert_eq!(near.pixels, 1);
        // The far term sees nothing on a mask-1 pixel.
        let far = far_loss(&[0.1], &t).unwrap();
        assert_eq!(far.value, 0.0);
        assert_eq!(far.pixels, 0);
        assert_eq!(far.grad[0], 0.0);

        // Same pixel with mask 0: far pred 0.1 vs gt 0.5 -> 0.16.
        let t = targets(&[0.3], &[0.5], &[0.0], &[true]);
        let far = far_loss(&[0.1], &t).unwrap();
        assert!((far.value - 0.16).abs() < 1e-15);
        assert_eq!(far.pixels, 1);
        let near = near_loss(&[0.5], &t).unwrap();
        assert_eq!(near.value, 0.0);
        assert_eq!(near.pixels, 0);
    }

    #[test]
    fn bce_pinned_values() {
        // p = 0.5 against target 1 costs ln 2; gradient (0.5-1)/0.25 = -2.
        let t = targets(&[0.0], &[0.0], &[1.0], &[true]);
        let m = mask_loss_probs(&[0.5], &t).unwrap();
        assert!((m.value - LN_2).abs() < 1e-15);
        assert!((m.grad[0] + 2.0).abs() < 1e-12);

        // A saturated correct prediction is clamped: cost -ln(1 - 1e-7),
        // i.e. 1e-7 up to second order.
        let m = mask_loss_probs(&[1.0], &t).unwrap();
        assert!((m.value - 1e-7).abs() < 1e-12);
        assert!(m.value.is_finite() && m.grad[0].is_finite());
        // Saturated wrong prediction stays finite too.
        let t0 = targets(&[0.0], &[0.0], &[0.0], &[true]);
        let m = mask_loss_probs(&[1.0], &t0).unwrap();
        assert!(m.value.is_finite() && m.grad[0].is_finite());
    }

    #[test]
    fn logit_and_probability_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 64;
        let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-6.0..6.0)).collect();
        let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
        let mask: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        let valid = vec![true; n];
        let t = targets(&vec![0.0; n], &vec![0.0; n], &mask, &valid);
        let from_logits = mask_loss_logits(&logits, &t).unwrap();
        let from_probs = mask_loss_probs(&probs, &t).unwrap();
        assert!((from_logits.value - from_probs.value).abs() < 1e-9);
        for i in 0..n {
            // Chain rule: dL/dz = dL/dp * p(1-p).
            let chained = from_probs.grad[i] * probs[i] * (1.0 - probs[i]);
            assert!((from_logits.grad[i] - chained).abs() < 1e-9);
        }
    }

    #[test]
    fn weighted_total_pinned() {
        let term = |value, pixels| LossTerm { value, grad: vec![], pixels };
        let report = total_loss(
            &term(1.0, 10),
            &term(2.0, 20),
            &term(10.0, 30),
            &LossWeights::default(),
        );
        // Defaults (1, 1, 0.05): 1 + 2 + 0.5.
        assert_eq!(report.total, 3.5);
        assert_eq!(report.near_pixels, 10);
        assert!((report.far_mean() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn invalid_pixels_feed_no_term() {
        let t = targets(&[0.2, 0.2], &[0.7, 0.7], &[1.0, 0.0], &[false, false]);
        let near = near_loss(&[0.9, 0.9], &t).unwrap();
        let far = far_loss(&[0.1, 0.1], &t).unwrap();
        let mask = mask_loss_probs(&[0.5, 0.5], &t).unwrap();
        for term in [&near, &far, &mask] {
            assert_eq!(term.value, 0.0);
            assert_eq!(term.pixels, 0);
            assert!(term.grad.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn rejects_length_mismatch() {
        let t = targets(&[0.3], &[0.5], &[1.0], &[true]);
        assert!(near_loss(&[0.5, 0.5], &t).is_err());
        assert!(far_loss(&[], &t).is_err());
        assert!(mask_loss_probs(&[0.5, 0.5], &t).is_err());
        assert!(mask_loss_logits(&[0.5, 0.5], &t).is_err());
    }

    /// Central-difference check of an analytic gradient, step 1e-5.
    fn check_gradient(
        pred: &[f64],
        loss: &dyn Fn(&[f64]) -> LossTerm,
        tolerance: f64,
    ) {
        let h = 1e-5;
        let analytic = loss(pred).grad;
        for i in 0..pred.len() {
            let mut plus = pred.to_vec();
            plus[i] += h;
            let mut minus = pred.to_vec();
            minus[i] -= h;
            let fd = (loss(&plus).value - loss(&minus).value) / (2.0 * h);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-8);
            assert!(
                (analytic[i] - fd).abs() / denom < tolerance,
                "pixel {i}: analytic {} vs fd {fd}",
                analytic[i]
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let n = 48;
        let near_gt: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let far_gt: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mask_gt: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.6))).collect();
        let valid: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.9)).collect();
        let t = targets(&near_gt, &far_gt, &mask_gt, &valid);
        // Keep probabilities well inside the clamp so the check sees the
        // smooth region.
        let pred: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
        let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();

        check_gradient(&pred, &|p| near_loss(p, &t).unwrap(), 1e-4);
        check_gradient(&pred, &|p| far_loss(p, &t).unwrap(), 1e-4);
        check_gradient(&pred, &|p| mask_loss_probs(p, &t).unwrap(), 1e-4);
        check_gradient(&logits, &|z| mask_loss_logits(z, &t).unwrap(), 1e-4);
    }
}
