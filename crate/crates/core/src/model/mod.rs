//! Anchor-conditioned two-branch depth network with hand-written backprop.
//!
//! A small convolutional encoder (three stride-2 convs) feeds two symmetric
//! decoder branches. Each branch runs three conv + FiLM + ReLU + 2x
//! upsample stages, re-attaches the input image, fuses with a 1x1 conv (again
//! FiLM-modulated), and emits a one-channel logistic map in `(0, 1)`: the
//! near branch predicts anchor-normalized depth, the far branch the
//! exponential taper value. The anchor conditioning enters only through the
//! FiLM scales, which are driven by the drawn anchor's learned embedding.
//!
//! A 1x1 mask head on the near branch's fused features predicts the
//! near/far routing logit. The [`ModelVariant::NoMaskHead`] ablation drops
//! it; prediction then falls back to a fixed rule: a pixel routes near
//! exactly when the far branch's value is at least the near branch's, which
//! is where the two saturating targets cross.
//!
//! All math is f64 and every draw comes from caller-provided RNGs in a fixed
//! order, so equal seeds give bitwise-equal models.

pub mod checkpoint;
pub mod layers;
pub mod tensor;
pub mod train;

use crate::depth::{DepthMap, ImageBuf};
use crate::error::{Error, Result};
use crate::loss::sigmoid;
use crate::metrics::{self, DatasetEval, EvalConfig};
use crate::pool::AnchorPool;
use crate::repr::{self, Field, TaperRate};
use crate::scene::SceneSample;
use layers::{
    concat_channels, relu, relu_backward, sigmoid_backward, sigmoid_map, split_channels,
    upsample2x, upsample2x_backward, Conv2d, Film,
};
use rand::Rng;
use tensor::Tensor;

const IMG_C: usize = 3;
const ENC1_C: usize = 16;
const ENC2_C: usize = 32;
const ENC3_C: usize = 64;
const S1_C: usize = 32;
const S2_C: usize = 16;
const S3_C: usize = 8;
const FUSE_C: usize = 8;

/// Spatial downscale factor of the encoder (inputs must divide by it).
pub const ENCODER_FACTOR: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelVariant {
    /// Two branches plus the learned near/far mask head.
    Full,
    /// Ablation: no mask head; fusion uses the fixed crossing rule.
    NoMaskHead,
}

/// One decoder branch: three upsampling stages, image re-attachment, and a
/// logistic head whose pre-activation is calibrated per anchor.
#[derive(Debug, Clone)]
pub(crate) struct Branch {
    conv1: Conv2d,
    film1: Film,
    conv2: Conv2d,
    film2: Film,
    conv3: Conv2d,
    film3: Film,
    fuse: Conv2d,
    film_fuse: Film,
    head: Conv2d,
    film_head: Film,
}

impl Branch {
    fn new(embed_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            conv1: Conv2d::new(ENC3_C, S1_C, 3, 1, rng),
            film1: Film::new(S1_C, embed_dim),
            conv2: Conv2d::new(S1_C, S2_C, 3, 1, rng),
            film2: Film::new(S2_C, embed_dim),
            conv3: Conv2d::new(S2_C, S3_C, 3, 1, rng),
            film3: Film::new(S3_C, embed_dim),
            fuse: Conv2d::new(S3_C + IMG_C, FUSE_C, 1, 1, rng),
            film_fuse: Film::new(FUSE_C, embed_dim),
            head: Conv2d::new(FUSE_C, 1, 3, 1, rng),
            film_head: Film::new(1, embed_dim),
        }
    }

    fn zeroed(embed_dim: usize) -> Self {
        Self {
            conv1: Conv2d::zeroed(ENC3_C, S1_C, 3, 1),
            film1: Film::new(S1_C, embed_dim),
            conv2: Conv2d::zeroed(S1_C, S2_C, 3, 1),
            film2: Film::new(S2_C, embed_dim),
            conv3: Conv2d::zeroed(S2_C, S3_C, 3, 1),
            film3: Film::new(S3_C, embed_dim),
            fuse: Conv2d::zeroed(S3_C + IMG_C, FUSE_C, 1, 1),
            film_fuse: Film::new(FUSE_C, embed_dim),
            head: Conv2d::zeroed(FUSE_C, 1, 3, 1),
            film_head: Film::new(1, embed_dim),
        }
    }

    fn run(&self, a3: &Tensor, image: &Tensor, embed: &[f64]) -> BranchPass {
        let c1 = self.conv1.forward(a3);
        let (f1, s1) = self.film1.forward(&c1, embed);
        let r1 = relu(&f1);
        let u1 = upsample2x(&r1);
        let c2 = self.conv2.forward(&u1);
        let (f2, s2) = self.film2.forward(&c2, embed);
        let r2 = relu(&f2);
        let u2 = upsample2x(&r2);
        let c3 = self.conv3.forward(&u2);
        let (f3, s3) = self.film3.forward(&c3, embed);
        let r3 = relu(&f3);
        let cat = concat_channels(&upsample2x(&r3), image);
        let fuse_c = self.fuse.forward(&cat);
        let (ff, fuse_s) = self.film_fuse.forward(&fuse_c, embed);
        let fuse_r = relu(&ff);
        let logit = self.head.forward(&fuse_r);
        let (cal, head_s) = self.film_head.forward(&logit, embed);
        let out = sigmoid_map(&cal);
        BranchPass {
            c1,
            s1,
            r1,
            u1,
            c2,
            s2,
            r2,
            u2,
            c3,
            s3,
            r3,
            cat,
            fuse_c,
            fuse_s,
            fuse_r,
            logit,
            head_s,
            out,
        }
    }

    /// `d_out` is the gradient at the post-sigmoid output; `extra_fuse_grad`
    /// (the mask head's contribution) joins at the fused features. Returns
    /// the gradient with respect to the encoder output.
    fn backward(
        &mut self,
        pass: &BranchPass,
        a3: &Tensor,
        embed: &[f64],
        d_out: &Tensor,
        extra_fuse_grad: Option<Tensor>,
        embed_grad: &mut [f64],
    ) -> Tensor {
        let gcal = sigmoid_backward(&pass.out, d_out);
        let gl = self.film_head.backward(&pass.logit, embed, &pass.head_s, &gcal, embed_grad);
        let mut gfr = self.head.backward(&pass.fuse_r, &gl);
        if let Some(extra) = extra_fuse_grad {
            gfr.add_assign(&extra);
        }
        let gff = relu_backward(&pass.fuse_r, &gfr);
        let gfc = self.film_fuse.backward(&pass.fuse_c, embed, &pass.fuse_s, &gff, embed_grad);
        let gcat = self.fuse.backward(&pass.cat, &gfc);
        let (gu3, _gimage) = split_channels(&gcat, S3_C);
        let g = upsample2x_backward(&gu3);
        let g = relu_backward(&pass.r3, &g);
        let g = self.film3.backward(&pass.c3, embed, &pass.s3, &g, embed_grad);
        let g = self.conv3.backward(&pass.u2, &g);
        let g = upsample2x_backward(&g);
        let g = relu_backward(&pass.r2, &g);
        let g = self.film2.backward(&pass.c2, embed, &pass.s2, &g, embed_grad);
        let g = self.conv2.backward(&pass.u1, &g);
        let g = upsample2x_backward(&g);
        let g = relu_backward(&pass.r1, &g);
        let g = self.film1.backward(&pass.c1, embed, &pass.s1, &g, embed_grad);
        self.conv1.backward(a3, &g)
    }

    fn blocks_mut(&mut self) -> Vec<(&mut Vec<f64>, &mut Vec<f64>)> {
        vec![
            (&mut self.conv1.weight, &mut self.conv1.wgrad),
            (&mut self.conv1.bias, &mut self.conv1.bgrad),
            (&mut self.film1.ws, &mut self.film1.wgrad),
            (&mut self.film1.bs, &mut self.film1.bgrad),
            (&mut self.conv2.weight, &mut self.conv2.wgrad),
            (&mut self.conv2.bias, &mut self.conv2.bgrad),
            (&mut self.film2.ws, &mut self.film2.wgrad),
            (&mut self.film2.bs, &mut self.film2.bgrad),
            (&mut self.conv3.weight, &mut self.conv3.wgrad),
            (&mut self.conv3.bias, &mut self.conv3.bgrad),
            (&mut self.film3.ws, &mut self.film3.wgrad),
            (&mut self.film3.bs, &mut self.film3.bgrad),
            (&mut self.fuse.weight, &mut self.fuse.wgrad),
            (&mut self.fuse.bias, &mut self.fuse.bgrad),
            (&mut self.film_fuse.ws, &mut self.film_fuse.wgrad),
            (&mut self.film_fuse.bs, &mut self.film_fuse.bgrad),
            (&mut self.head.weight, &mut self.head.wgrad),
            (&mut self.head.bias, &mut self.head.bgrad),
            (&mut self.film_head.ws, &mut self.film_head.wgrad),
            (&mut self.film_head.bs, &mut self.film_head.bgrad),
        ]
    }

    fn blocks(&self) -> Vec<(&Vec<f64>, &Vec<f64>)> {
        vec![
            (&self.conv1.weight, &self.conv1.wgrad),
            (&self.conv1.bias, &self.conv1.bgrad),
            (&self.film1.ws, &self.film1.wgrad),
            (&self.film1.bs, &self.film1.bgrad),
            (&self.conv2.weight, &self.conv2.wgrad),
            (&self.conv2.bias, &self.conv2.bgrad),
            (&self.film2.ws, &self.film2.wgrad),
            (&self.film2.bs, &self.film2.bgrad),
            (&self.conv3.weight, &self.conv3.wgrad),
            (&self.conv3.bias, &self.conv3.bgrad),
            (&self.film3.ws, &self.film3.wgrad),
            (&self.film3.bs, &self.film3.bgrad),
            (&self.fuse.weight, &self.fuse.wgrad),
            (&self.fuse.bias, &self.fuse.bgrad),
            (&self.film_fuse.ws, &self.film_fuse.wgrad),
            (&self.film_fuse.bs, &self.film_fuse.bgrad),
            (&self.head.weight, &self.head.wgrad),
            (&self.head.bias, &self.head.bgrad),
            (&self.film_head.ws, &self.film_head.wgrad),
            (&self.film_head.bs, &self.film_head.bgrad),
        ]
    }

    fn conv_dims(conv: &Conv2d) -> (Vec<usize>, Vec<usize>) {
        (vec![conv.out_c, conv.in_c, conv.k, conv.k], vec![conv.out_c])
    }

    fn film_dims(f: &Film) -> Vec<usize> {
        vec![f.channels, f.embed_dim]
    }

    fn named(&self, prefix: &str) -> Vec<(String, Vec<usize>, &Vec<f64>)> {
        let mut out = Vec::new();
        for (name, conv, film_name, film) in [
            ("conv1", &self.conv1, "film1", &self.film1),
            ("conv2", &self.conv2, "film2", &self.film2),
            ("conv3", &self.conv3, "film3", &self.film3),
            ("fuse", &self.fuse, "film_fuse", &self.film_fuse),
            ("head", &self.head, "film_head", &self.film_head),
        ] {
            let (wd, bd) = Self::conv_dims(conv);
            out.push((format!("{prefix}.{name}.weight"), wd, &conv.weight));
            out.push((format!("{prefix}.{name}.bias"), bd, &conv.bias));
            out.push((format!("{prefix}.{film_name}.scale"), Self::film_dims(film), &film.ws));
            out.push((format!("{prefix}.{film_name}.shift"), Self::film_dims(film), &film.bs));
        }
        out
    }

    fn named_mut(&mut self, prefix: &str) -> Vec<(String, Vec<usize>, &mut Vec<f64>)> {
        let conv1_dims = Self::conv_dims(&self.conv1);
        let conv2_dims = Self::conv_dims(&self.conv2);
        let conv3_dims = Self::conv_dims(&self.conv3);
        let fuse_dims = Self::conv_dims(&self.fuse);
        let head_dims = Self::conv_dims(&self.head);
        let f1 = Self::film_dims(&self.film1);
        let f2 = Self::film_dims(&self.film2);
        let f3 = Self::film_dims(&self.film3);
        let ff = Self::film_dims(&self.film_fuse);
        let fh = Self::film_dims(&self.film_head);
        vec![
            (format!("{prefix}.conv1.weight"), conv1_dims.0, &mut self.conv1.weight),
            (format!("{prefix}.conv1.bias"), conv1_dims.1, &mut self.conv1.bias),
            (format!("{prefix}.film1.scale"), f1.clone(), &mut self.film1.ws),
            (format!("{prefix}.film1.shift"), f1, &mut self.film1.bs),
            (format!("{prefix}.conv2.weight"), conv2_dims.0, &mut self.conv2.weight),
            (format!("{prefix}.conv2.bias"), conv2_dims.1, &mut self.conv2.bias),
            (format!("{prefix}.film2.scale"), f2.clone(), &mut self.film2.ws),
            (format!("{prefix}.film2.shift"), f2, &mut self.film2.bs),
            (format!("{prefix}.conv3.weight"), conv3_dims.0, &mut self.conv3.weight),
            (format!("{prefix}.conv3.bias"), conv3_dims.1, &mut self.conv3.bias),
            (format!("{prefix}.film3.scale"), f3.clone(), &mut self.film3.ws),
            (format!("{prefix}.film3.shift"), f3, &mut self.film3.bs),
            (format!("{prefix}.fuse.weight"), fuse_dims.0, &mut self.fuse.weight),
            (format!("{prefix}.fuse.bias"), fuse_dims.1, &mut self.fuse.bias),
            (format!("{prefix}.film_fuse.scale"), ff.clone(), &mut self.film_fuse.ws),
            (format!("{prefix}.film_fuse.shift"), ff, &mut self.film_fuse.bs),
            (format!("{prefix}.head.weight"), head_dims.0, &mut self.head.weight),
            (format!("{prefix}.head.bias"), head_dims.1, &mut self.head.bias),
            (format!("{prefix}.film_head.scale"), fh.clone(), &mut self.film_head.ws),
            (format!("{prefix}.film_head.shift"), fh, &mut self.film_head.bs),
        ]
    }
}

/// Cached activations of one branch, retained for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct BranchPass {
    c1: Tensor,
    s1: Vec<f64>,
    r1: Tensor,
    u1: Tensor,
    c2: Tensor,
    s2: Vec<f64>,
    r2: Tensor,
    u2: Tensor,
    c3: Tensor,
    s3: Vec<f64>,
    r3: Tensor,
    cat: Tensor,
    fuse_c: Tensor,
    fuse_s: Vec<f64>,
    fuse_r: Tensor,
    logit: Tensor,
    head_s: Vec<f64>,
    pub(crate) out: Tensor,
}

/// Everything one forward pass computed, kept so `backward` can replay it.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub(crate) input: Tensor,
    pub(crate) embed: Vec<f64>,
    pub(crate) a1: Tensor,
    pub(crate) a2: Tensor,
    pub(crate) a3: Tensor,
    pub(crate) near: BranchPass,
    pub(crate) far: BranchPass,
    pub(crate) mask_raw: Option<Tensor>,
    pub(crate) mask_s: Option<Vec<f64>>,
    pub(crate) mask_logit: Option<Tensor>,
}

impl ForwardPass {
    pub fn width(&self) -> usize {
        self.input.width()
    }

    pub fn height(&self) -> usize {
        self.input.height()
    }

    /// Near-branch output in `(0, 1)`, row-major.
    pub fn near_values(&self) -> &[f64] {
        self.near.out.data()
    }

    /// Far-branch output in `(0, 1)`, row-major.
    pub fn far_values(&self) -> &[f64] {
        self.far.out.data()
    }

    /// Mask pre-activations (absent on [`ModelVariant::NoMaskHead`]).
    pub fn mask_logits(&self) -> Option<&[f64]> {
        self.mask_logit.as_ref().map(|t| t.data())
    }
}

/// Dense per-pixel outputs of one prediction.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub width: usize,
    pub height: usize,
    pub near01: Vec<f64>,
    pub far01: Vec<f64>,
    /// Mask probabilities; `None` for the no-mask-head ablation.
    pub mask_prob: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Model {
    variant: ModelVariant,
    embed_dim: usize,
    enc1: Conv2d,
    enc2: Conv2d,
    enc3: Conv2d,
    near: Branch,
    far: Branch,
    mask_head: Option<Conv2d>,
    mask_film: Option<Film>,
}

impl Model {
    /// Fresh model; parameters are drawn from `rng` in a fixed order.
    pub fn new(variant: ModelVariant, embed_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            variant,
            embed_dim,
            enc1: Conv2d::new(IMG_C, ENC1_C, 3, 2, rng),
            enc2: Conv2d::new(ENC1_C, ENC2_C, 3, 2, rng),
            enc3: Conv2d::new(ENC2_C, ENC3_C, 3, 2, rng),
            near: Branch::new(embed_dim, rng),
            far: Branch::new(embed_dim, rng),
            mask_head: match variant {
                ModelVariant::Full => Some(Conv2d::new(FUSE_C, 1, 1, 1, rng)),
                ModelVariant::NoMaskHead => None,
            },
            mask_film: match variant {
                ModelVariant::Full => Some(Film::new(1, embed_dim)),
                ModelVariant::NoMaskHead => None,
            },
        }
    }

    /// All-zero parameters (used when loading a checkpoint).
    pub fn zeroed(variant: ModelVariant, embed_dim: usize) -> Self {
        Self {
            variant,
            embed_dim,
            enc1: Conv2d::zeroed(IMG_C, ENC1_C, 3, 2),
            enc2: Conv2d::zeroed(ENC1_C, ENC2_C, 3, 2),
            enc3: Conv2d::zeroed(ENC2_C, ENC3_C, 3, 2),
            near: Branch::zeroed(embed_dim),
            far: Branch::zeroed(embed_dim),
            mask_head: match variant {
                ModelVariant::Full => Some(Conv2d::zeroed(FUSE_C, 1, 1, 1)),
                ModelVariant::NoMaskHead => None,
            },
            mask_film: match variant {
                ModelVariant::Full => Some(Film::new(1, embed_dim)),
                ModelVariant::NoMaskHead => None,
            },
        }
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn forward(&self, image: &ImageBuf, embed: &[f64]) -> Result<ForwardPass> {
        if image.channels() != IMG_C {
            return Err(Error::InvalidArgument(format!(
                "model input needs {IMG_C} channels, got {}",
                image.channels()
            )));
        }
        if image.width() % ENCODER_FACTOR != 0 || image.height() % ENCODER_FACTOR != 0 {
            return Err(Error::InvalidArgument(format!(
                "model input dimensions must divide by {ENCODER_FACTOR}, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        if embed.len() != self.embed_dim {
            return Err(Error::ShapeMismatch(format!(
                "embedding has {} values, model expects {}",
                embed.len(),
                self.embed_dim
            )));
        }
        let x = Tensor::from_image(image);
        let a1 = relu(&self.enc1.forward(&x));
        let a2 = relu(&self.enc2.forward(&a1));
        let a3 = relu(&self.enc3.forward(&a2));
        let near = self.near.run(&a3, &x, embed);
        let far = self.far.run(&a3, &x, embed);
        let mask_raw = self.mask_head.as_ref().map(|mh| mh.forward(&near.fuse_r));
        let (mask_s, mask_logit) = match (&self.mask_film, &mask_raw) {
            (Some(mf), Some(raw)) => {
                let (cal, s) = mf.forward(raw, embed);
                (Some(s), Some(cal))
            }
            _ => (None, None),
        };
        Ok(ForwardPass {
            input: x,
            embed: embed.to_vec(),
            a1,
            a2,
            a3,
            near,
            far,
            mask_raw,
            mask_s,
            mask_logit,
        })
    }

    /// Accumulate parameter gradients from output-side gradients.
    ///
    /// `d_near` / `d_far` are gradients at the post-sigmoid branch outputs;
    /// `d_mask_logit` at the mask pre-activations (required exactly when the
    /// model has a mask head). The drawn anchor's embedding gradient is
    /// accumulated into `embed_grad`.
    pub fn backward(
        &mut self,
        pass: &ForwardPass,
        d_near: &[f64],
        d_far: &[f64],
        d_mask_logit: Option<&[f64]>,
        embed_grad: &mut [f64],
    ) -> Result<()> {
        let (h, w) = (pass.height(), pass.width());
        let n = h * w;
        if d_near.len() != n || d_far.len() != n || d_mask_logit.is_some_and(|d| d.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "output gradients must have {n} pixels"
            )));
        }
        if embed_grad.len() != self.embed_dim {
            return Err(Error::ShapeMismatch(format!(
                "embedding gradient has {} values, model expects {}",
                embed_grad.len(),
                self.embed_dim
            )));
        }
        let dn = Tensor::from_vec(1, h, w, d_near.to_vec());
        let df = Tensor::from_vec(1, h, w, d_far.to_vec());
        let extra = match (&mut self.mask_head, d_mask_logit) {
            (Some(mh), Some(dm)) => {
                let mf = self.mask_film.as_mut().expect("mask film accompanies mask head");
                let raw = pass.mask_raw.as_ref().expect("mask pass on full variant");
                let s = pass.mask_s.as_ref().expect("mask scales on full variant");
                let gcal = Tensor::from_vec(1, h, w, dm.to_vec());
                let graw = mf.backward(raw, &pass.embed, s, &gcal, embed_grad);
                Some(mh.backward(&pass.near.fuse_r, &graw))
            }
            (None, None) => None,
            _ => {
                return Err(Error::InvalidArgument(
                    "mask gradient presence must match the model variant".into(),
                ))
            }
        };
        let ga3_near =
            self.near.backward(&pass.near, &pass.a3, &pass.embed, &dn, extra, embed_grad);
        let mut ga3 = self.far.backward(&pass.far, &pass.a3, &pass.embed, &df, None, embed_grad);
        ga3.add_assign(&ga3_near);
        let g = relu_backward(&pass.a3, &ga3);
        let g = self.enc3.backward(&pass.a2, &g);
        let g = relu_backward(&pass.a2, &g);
        let g = self.enc2.backward(&pass.a1, &g);
        let g = relu_backward(&pass.a1, &g);
        let _ = self.enc1.backward(&pass.input, &g);
        Ok(())
    }

    /// `(parameters, gradients)` pairs in the fixed traversal order shared
    /// by the optimizer and the checkpoint format.
    pub(crate) fn blocks_mut(&mut self) -> Vec<(&mut Vec<f64>, &mut Vec<f64>)> {
        let mut v = vec![
            (&mut self.enc1.weight, &mut self.enc1.wgrad),
            (&mut self.enc1.bias, &mut self.enc1.bgrad),
            (&mut self.enc2.weight, &mut self.enc2.wgrad),
            (&mut self.enc2.bias, &mut self.enc2.bgrad),
            (&mut self.enc3.weight, &mut self.enc3.wgrad),
            (&mut self.enc3.bias, &mut self.enc3.bgrad),
        ];
        v.extend(self.near.blocks_mut());
        v.extend(self.far.blocks_mut());
        if let Some(mh) = &mut self.mask_head {
            v.push((&mut mh.weight, &mut mh.wgrad));
            v.push((&mut mh.bias, &mut mh.bgrad));
        }
        if let Some(mf) = &mut self.mask_film {
            v.push((&mut mf.ws, &mut mf.wgrad));
            v.push((&mut mf.bs, &mut mf.bgrad));
        }
        v
    }

    pub(crate) fn blocks(&self) -> Vec<(&Vec<f64>, &Vec<f64>)> {
        let mut v = vec![
            (&self.enc1.weight, &self.enc1.wgrad),
            (&self.enc1.bias, &self.enc1.bgrad),
            (&self.enc2.weight, &self.enc2.wgrad),
            (&self.enc2.bias, &self.enc2.bgrad),
            (&self.enc3.weight, &self.enc3.wgrad),
            (&self.enc3.bias, &self.enc3.bgrad),
        ];
        v.extend(self.near.blocks());
        v.extend(self.far.blocks());
        if let Some(mh) = &self.mask_head {
            v.push((&mh.weight, &mh.wgrad));
            v.push((&mh.bias, &mh.bgrad));
        }
        if let Some(mf) = &self.mask_film {
            v.push((&mf.ws, &mf.wgrad));
            v.push((&mf.bs, &mf.bgrad));
        }
        v
    }

    pub fn zero_grads(&mut self) {
        for (_, grad) in self.blocks_mut() {
            grad.fill(0.0);
        }
    }

    /// Add another model's accumulated gradients into this one's (used to
    /// merge per-thread gradient buffers; architectures must match).
    pub(crate) fn add_grads(&mut self, other: &Model) {
        let mut dst = self.blocks_mut();
        let src = other.blocks();
        assert_eq!(dst.len(), src.len(), "gradient merge across different architectures");
        for ((_, gd), (_, gs)) in dst.iter_mut().zip(src) {
            assert_eq!(gd.len(), gs.len(), "gradient merge block size");
            for (a, b) in gd.iter_mut().zip(gs) {
                *a += *b;
            }
        }
    }

    /// Named parameter tensors in traversal order (checkpoint layout).
    pub(crate) fn named_tensors(&self) -> Vec<(String, Vec<usize>, &Vec<f64>)> {
        let mut v: Vec<(String, Vec<usize>, &Vec<f64>)> = Vec::new();
        for (name, conv) in [("enc1", &self.enc1), ("enc2", &self.enc2), ("enc3", &self.enc3)] {
            let (wd, bd) = Branch::conv_dims(conv);
            v.push((format!("{name}.weight"), wd, &conv.weight));
            v.push((format!("{name}.bias"), bd, &conv.bias));
        }
        v.extend(self.near.named("near"));
        v.extend(self.far.named("far"));
        if let Some(mh) = &self.mask_head {
            let (wd, bd) = Branch::conv_dims(mh);
            v.push(("mask_head.weight".to_string(), wd, &mh.weight));
            v.push(("mask_head.bias".to_string(), bd, &mh.bias));
        }
        if let Some(mf) = &self.mask_film {
            v.push(("mask_film.scale".to_string(), Branch::film_dims(mf), &mf.ws));
            v.push(("mask_film.shift".to_string(), Branch::film_dims(mf), &mf.bs));
        }
        v
    }

    pub(crate) fn named_tensors_mut(&mut self) -> Vec<(String, Vec<usize>, &mut Vec<f64>)> {
        let enc1_dims = Branch::conv_dims(&self.enc1);
        let enc2_dims = Branch::conv_dims(&self.enc2);
        let enc3_dims = Branch::conv_dims(&self.enc3);
        let mask_dims = self.mask_head.as_ref().map(|mh| Branch::conv_dims(mh));
        let mut v: Vec<(String, Vec<usize>, &mut Vec<f64>)> = vec![
            ("enc1.weight".to_string(), enc1_dims.0, &mut self.enc1.weight),
            ("enc1.bias".to_string(), enc1_dims.1, &mut self.enc1.bias),
            ("enc2.weight".to_string(), enc2_dims.0, &mut self.enc2.weight),
            ("enc2.bias".to_string(), enc2_dims.1, &mut self.enc2.bias),
            ("enc3.weight".to_string(), enc3_dims.0, &mut self.enc3.weight),
            ("enc3.bias".to_string(), enc3_dims.1, &mut self.enc3.bias),
        ];
        v.extend(self.near.named_mut("near"));
        v.extend(self.far.named_mut("far"));
        if let Some(mh) = &mut self.mask_head {
            let (wd, bd) = mask_dims.expect("mask head dims");
            v.push(("mask_head.weight".to_string(), wd, &mut mh.weight));
            v.push(("mask_head.bias".to_string(), bd, &mut mh.bias));
        }
        if let Some(mf) = &mut self.mask_film {
            let fd = Branch::film_dims(mf);
            v.push(("mask_film.scale".to_string(), fd.clone(), &mut mf.ws));
            v.push(("mask_film.shift".to_string(), fd, &mut mf.bs));
        }
        v
    }

    /// Run the network and return dense outputs (no backward cache kept).
    pub fn predict(&self, image: &ImageBuf, embed: &[f64]) -> Result<Prediction> {
        let pass = self.forward(image, embed)?;
        let mask_prob = pass
            .mask_logit
            .as_ref()
            .map(|t| t.data().iter().map(|z| sigmoid(*z)).collect());
        Ok(Prediction {
            width: pass.width(),
            height: pass.height(),
            near01: pass.near.out.data().to_vec(),
            far01: pass.far.out.data().to_vec(),
            mask_prob,
        })
    }

    /// Predict metric depth: run the network at the given anchor, reproject
    /// both branches to meters, and fuse them with the mask. Without a mask
    /// head, a pixel routes near exactly when `far01 >= near01`.
    pub fn predict_depth(
        &self,
        image: &ImageBuf,
        pool: &AnchorPool,
        anchor_index: usize,
        taper: TaperRate,
    ) -> Result<DepthMap> {
        let p = self.predict(image, pool.embedding(anchor_index))?;
        let anchor = pool.anchor(anchor_index);
        let mask_values: Vec<f64> = match &p.mask_prob {
            Some(m) => m.clone(),
            None => p
                .near01
                .iter()
                .zip(&p.far01)
                .map(|(n, f)| if *f >= *n { 1.0 } else { 0.0 })
                .collect(),
        };
        let all_valid = vec![true; p.near01.len()];
        let near_field = Field::new(p.width, p.height, p.near01, all_valid.clone())?;
        let far_field = Field::new(p.width, p.height, p.far01, all_valid.clone())?;
        let mask_field = Field::new(p.width, p.height, mask_values, all_valid)?;
        let near_metric = repr::reproject_near(&near_field, anchor)?;
        let far_metric = repr::reproject_far(&far_field, anchor, taper)?;
        repr::fuse(&near_metric, &far_metric, &mask_field)
    }
}

/// Evaluate a model over a sample set at one anchor (nearest pool entry to
/// `anchor_m`), optionally with horizontal-flip averaging.
pub fn evaluate_on(
    model: &Model,
    pool: &AnchorPool,
    samples: &[SceneSample],
    anchor_m: f64,
    taper: TaperRate,
    config: &EvalConfig,
    flip_average: bool,
) -> Result<DatasetEval> {
    let draw = pool.select(anchor_m)?;
    let predictor = |img: &ImageBuf| model.predict_depth(img, pool, draw.index, taper);
    let mut reports = Vec::with_capacity(samples.len());
    for s in samples {
        let report = if flip_average {
            metrics::evaluate_flip_averaged(&predictor, &s.image, &s.depth, config)?
        } else {
            metrics::evaluate(&predictor(&s.image)?, &s.depth, config)?
        };
        reports.push(report);
    }
    metrics::aggregate(&reports)
}
