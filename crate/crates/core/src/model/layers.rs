//! Network building blocks with explicit forward and backward passes.
//!
//! Every layer owns its parameters and matching gradient accumulators;
//! `backward` consumes the cached forward inputs, adds this call's
//! contribution to the accumulators, and returns the gradient with respect
//! to the layer input. Nothing here allocates hidden state: reproducibility
//! comes from plain arithmetic in a fixed order.

use super::tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// 2D convolution with square kernel, zero padding `k / 2`, and stride 1
/// or 2. Weight layout is `[out_c][in_c][ky][kx]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub(crate) in_c: usize,
    pub(crate) out_c: usize,
    pub(crate) k: usize,
    pub(crate) stride: usize,
    pub(crate) pad: usize,
    pub(crate) weight: Vec<f64>,
    pub(crate) bias: Vec<f64>,
    pub(crate) wgrad: Vec<f64>,
    pub(crate) bgrad: Vec<f64>,
}

impl Conv2d {
    /// He-style initialization: `N(0, sqrt(2 / fan_in))`, zero bias.
    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize, rng: &mut impl Rng) -> Self {
        let mut conv = Self::zeroed(in_c, out_c, k, stride);
        let std = (2.0 / (in_c * k * k) as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("valid normal");
        for w in &mut conv.weight {
            *w = dist.sample(rng);
        }
        conv
    }

    pub fn zeroed(in_c: usize, out_c: usize, k: usize, stride: usize) -> Self {
        assert!(k == 1 || k == 3, "kernel must be 1 or 3");
        assert!(stride == 1 || stride == 2, "stride must be 1 or 2");
        let n = out_c * in_c * k * k;
        Self {
            in_c,
            out_c,
            k,
            stride,
            pad: k / 2,
            weight: vec![0.0; n],
            bias: vec![0.0; out_c],
            wgrad: vec![0.0; n],
            bgrad: vec![0.0; out_c],
        }
    }

    fn out_size(&self, n: usize) -> usize {
        (n + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.channels(), self.in_c, "conv input channels");
        let (h, w) = (x.height(), x.width());
        let (oh, ow) = (self.out_size(h), self.out_size(w));
        let mut out = Tensor::zeros(self.out_c, oh, ow);
        if self.stride == 1 {
            // Stride-1 fast path: one shifted-row multiply-add per kernel
            // tap, running over contiguous slices.
            for oc in 0..self.out_c {
                let oplane = out.plane_mut(oc);
                oplane.fill(self.bias[oc]);
                for ic in 0..self.in_c {
                    let xplane = x.plane(ic);
                    for ky in 0..self.k {
                        for kx in 0..self.k {
                            let wv = self.weight
                                [((oc * self.in_c + ic) * self.k + ky) * self.k + kx];
                            let sy = ky as isize - self.pad as isize;
                            let sx = kx as isize - self.pad as isize;
                            let oy0 = (-sy).max(0) as usize;
                            let oy1 = (h as isize - sy).min(oh as isize) as usize;
                            let ox0 = (-sx).max(0) as usize;
                            let ox1 = (w as isize - sx).min(ow as isize) as usize;
                            for oy in oy0..oy1 {
                                let iy = (oy as isize + sy) as usize;
                                let x0 = (iy * w) as isize + ox0 as isize + sx;
                                let xrow = &xplane[x0 as usize..x0 as usize + (ox1 - ox0)];
                                let orow = &mut oplane[oy * ow + ox0..oy * ow + ox1];
                                for (o, xv) in orow.iter_mut().zip(xrow) {
                                    *o += wv * *xv;
                                }
                            }
                        }
                    }
                }
            }
        } else {
            for oc in 0..self.out_c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = self.bias[oc];
                        for ic in 0..self.in_c {
                            let xplane = x.plane(ic);
                            for ky in 0..self.k {
                                let iy = oy * self.stride + ky;
                                if iy < self.pad || iy - self.pad >= h {
                                    continue;
                                }
                                let iy = iy - self.pad;
                                for kx in 0..self.k {
                                    let ix = ox * self.stride + kx;
                                    if ix < self.pad || ix - self.pad >= w {
                                        continue;
                                    }
                                    acc += self.weight
                                        [((oc * self.in_c + ic) * self.k + ky) * self.k + kx]
                                        * xplane[iy * w + ix - self.pad];
                                }
                            }
                        }
                        out.set(oc, oy, ox, acc);
                    }
                }
            }
        }
        out
    }

    /// Accumulate weight/bias gradients from `(x, gout)` and return the
    /// gradient with respect to `x`.
    pub fn backward(&mut self, x: &Tensor, gout: &Tensor) -> Tensor {
        assert_eq!(x.channels(), self.in_c, "conv backward input channels");
        assert_eq!(gout.channels(), self.out_c, "conv backward grad channels");
        let (h, w) = (x.height(), x.width());
        let (oh, ow) = (gout.height(), gout.width());
        assert_eq!((oh, ow), (self.out_size(h), self.out_size(w)), "conv backward grad size");
        let mut gin = Tensor::zeros(self.in_c, h, w);
        for oc in 0..self.out_c {
            self.bgrad[oc] += gout.plane(oc).iter().sum::<f64>();
        }
        if self.stride == 1 {
            for oc in 0..self.out_c {
                let gplane = gout.plane(oc);
                for ic in 0..self.in_c {
                    let xplane = x.plane(ic);
                    let gin_plane = gin.plane_mut(ic);
                    for ky in 0..self.k {
                        for kx in 0..self.k {
                            let widx = ((oc * self.in_c + ic) * self.k + ky) * self.k + kx;
                            let sy = ky as isize - self.pad as isize;
                            let sx = kx as isize - self.pad as isize;
                            let oy0 = (-sy).max(0) as usize;
                            let oy1 = (h as isize - sy).min(oh as isize) as usize;
                            let ox0 = (-sx).max(0) as usize;
                            let ox1 = (w as isize - sx).min(ow as isize) as usize;
                            let mut wacc = 0.0;
                            let wv = self.weight[widx];
                            for oy in oy0..oy1 {
                                let iy = (oy as isize + sy) as usize;
                                let x0 = ((iy * w) as isize + ox0 as isize + sx) as usize;
                                let len = ox1 - ox0;
                                let grow = &gplane[oy * ow + ox0..oy * ow + ox1];
                                let xrow = &xplane[x0..x0 + len];
                                for (g, xv) in grow.iter().zip(xrow) {
                                    wacc += *g * *xv;
                                }
                                let girow = &mut gin_plane[x0..x0 + len];
                                for (gi, g) in girow.iter_mut().zip(grow) {
                                    *gi += wv * *g;
                                }
                            }
                            self.wgrad[widx] += wacc;
                        }
                    }
                }
            }
        } else {
            for oc in 0..self.out_c {
                let gplane = gout.plane(oc);
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = gplane[oy * ow + ox];
                        for ic in 0..self.in_c {
                            let xplane = x.plane(ic);
                            for ky in 0..self.k {
                                let iy = oy * self.stride + ky;
                                if iy < self.pad || iy - self.pad >= h {
                                    continue;
                                }
                                let iy = iy - self.pad;
                                for kx in 0..self.k {
                                    let ix = ox * self.stride + kx;
                                    if ix < self.pad || ix - self.pad >= w {
                                        continue;
                                    }
                                    let ix = ix - self.pad;
                                    let widx =
                                        ((oc * self.in_c + ic) * self.k + ky) * self.k + kx;
                                    self.wgrad[widx] += g * xplane[iy * w + ix];
                                    gin.plane_mut(ic)[iy * w + ix] += self.weight[widx] * g;
                                }
                            }
                        }
                    }
                }
            }
        }
        gin
    }
}

/// Feature-wise affine modulation from an anchor embedding: each channel is
/// transformed as `(1 + w_c . e) * x + b_c . e`. Both weight matrices start
/// at zero, so an untrained layer is the identity.
#[derive(Debug, Clone)]
pub struct Film {
    pub(crate) channels: usize,
    pub(crate) embed_dim: usize,
    pub(crate) ws: Vec<f64>,
    pub(crate) wgrad: Vec<f64>,
    pub(crate) bs: Vec<f64>,
    pub(crate) bgrad: Vec<f64>,
}

impl Film {
    pub fn new(channels: usize, embed_dim: usize) -> Self {
        Self {
            channels,
            embed_dim,
            ws: vec![0.0; channels * embed_dim],
            wgrad: vec![0.0; channels * embed_dim],
            bs: vec![0.0; channels * embed_dim],
            bgrad: vec![0.0; channels * embed_dim],
        }
    }

    /// Returns the modulated tensor and the per-channel scales (cached for
    /// backward; the shifts are not needed there).
    pub fn forward(&self, x: &Tensor, embed: &[f64]) -> (Tensor, Vec<f64>) {
        assert_eq!(x.channels(), self.channels, "film channels");
        assert_eq!(embed.len(), self.embed_dim, "film embedding length");
        let mut scales = vec![0.0; self.channels];
        let mut out = x.clone();
        for c in 0..self.channels {
            let wrow = &self.ws[c * self.embed_dim..(c + 1) * self.embed_dim];
            let brow = &self.bs[c * self.embed_dim..(c + 1) * self.embed_dim];
            let s = 1.0 + wrow.iter().zip(embed).map(|(a, b)| a * b).sum::<f64>();
            let t: f64 = brow.iter().zip(embed).map(|(a, b)| a * b).sum();
            scales[c] = s;
            for v in out.plane_mut(c) {
                *v = s * *v + t;
            }
        }
        (out, scales)
    }

    /// Accumulates modulation-weight gradients, adds the embedding's share
    /// to `embed_grad`, and returns the gradient with respect to `x`.
    pub fn backward(
        &mut self,
        x: &Tensor,
        embed: &[f64],
        scales: &[f64],
        gout: &Tensor,
        embed_grad: &mut [f64],
    ) -> Tensor {
        assert_eq!(embed_grad.len(), self.embed_dim, "film embed grad length");
        let mut gin = gout.clone();
        for c in 0..self.channels {
            // d out / d scale_c (summed over the plane) and d out / d shift_c.
            let sg: f64 = gout.plane(c).iter().zip(x.plane(c)).map(|(g, v)| g * v).sum();
            let tg: f64 = gout.plane(c).iter().sum();
            let wrow = &self.ws[c * self.embed_dim..(c + 1) * self.embed_dim];
            let brow = &self.bs[c * self.embed_dim..(c + 1) * self.embed_dim];
            for e in 0..self.embed_dim {
                self.wgrad[c * self.embed_dim + e] += sg * embed[e];
                self.bgrad[c * self.embed_dim + e] += tg * embed[e];
                embed_grad[e] += sg * wrow[e] + tg * brow[e];
            }
            let s = scales[c];
            for v in gin.plane_mut(c) {
                *v *= s;
            }
        }
        gin
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = v.max(0.0);
    }
    out
}

/// `y` is the ReLU **output**; the gradient passes where it is positive.
pub fn relu_backward(y: &Tensor, gout: &Tensor) -> Tensor {
    let mut gin = gout.clone();
    for (g, v) in gin.data_mut().iter_mut().zip(y.data()) {
        if *v <= 0.0 {
            *g = 0.0;
        }
    }
    gin
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2x(x: &Tensor) -> Tensor {
    let (c, h, w) = (x.channels(), x.height(), x.width());
    let mut out = Tensor::zeros(c, h * 2, w * 2);
    for ch in 0..c {
        let xp = x.plane(ch);
        let op = out.plane_mut(ch);
        for y in 0..h {
            for x_ in 0..w {
                let v = xp[y * w + x_];
                let base = (y * 2) * (w * 2) + x_ * 2;
                op[base] = v;
                op[base + 1] = v;
                op[base + w * 2] = v;
                op[base + w * 2 + 1] = v;
            }
        }
    }
    out
}

/// Adjoint of [`upsample2x`]: each source cell collects its 2x2 block.
pub fn upsample2x_backward(gout: &Tensor) -> Tensor {
    let (c, oh, ow) = (gout.channels(), gout.height(), gout.width());
    assert!(oh % 2 == 0 && ow % 2 == 0, "upsample backward needs even dims");
    let (h, w) = (oh / 2, ow / 2);
    let mut gin = Tensor::zeros(c, h, w);
    for ch in 0..c {
        let gp = gout.plane(ch);
        let ip = gin.plane_mut(ch);
        for y in 0..h {
            for x_ in 0..w {
                let base = (y * 2) * ow + x_ * 2;
                ip[y * w + x_] = gp[base] + gp[base + 1] + gp[base + ow] + gp[base + ow + 1];
            }
        }
    }
    gin
}

pub fn sigmoid_map(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = crate::loss::sigmoid(*v);
    }
    out
}

/// `y` is the sigmoid **output**; gradient is `gout * y * (1 - y)`.
pub fn sigmoid_backward(y: &Tensor, gout: &Tensor) -> Tensor {
    let mut gin = gout.clone();
    for (g, v) in gin.data_mut().iter_mut().zip(y.data()) {
        *g *= *v * (1.0 - *v);
    }
    gin
}

/// Stack `a`'s channels before `b`'s (same spatial size).
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!((a.height(), a.width()), (b.height(), b.width()), "concat spatial size");
    let mut out = Tensor::zeros(a.channels() + b.channels(), a.height(), a.width());
    let n = a.height() * a.width();
    out.data_mut()[..a.channels() * n].copy_from_slice(a.data());
    out.data_mut()[a.channels() * n..].copy_from_slice(b.data());
    out
}

/// Split a gradient back into the two concatenated parts.
pub fn split_channels(g: &Tensor, first: usize) -> (Tensor, Tensor) {
    let n = g.height() * g.width();
    let a = Tensor::from_vec(first, g.height(), g.width(), g.data()[..first * n].to_vec());
    let b = Tensor::from_vec(
        g.channels() - first,
        g.height(),
        g.width(),
        g.data()[first * n..].to_vec(),
    );
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FD_STEP: f64 = 1e-5;
    const FD_TOL: f64 = 1e-4;

    fn assert_close(analytic: f64, fd: f64, what: &str) {
        let denom = analytic.abs().max(fd.abs()).max(1e-8);
        assert!(
            ((analytic - fd) / denom).abs() < FD_TOL,
            "{what}: analytic {analytic} vs finite difference {fd}"
        );
    }

    fn random_tensor(c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Scalar probe loss `L = sum(out * r)` so dL/dout = r.
    fn probe(out: &Tensor, r: &Tensor) -> f64 {
        out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn conv_known_values_stride1() {
        // 1x1 input channel, 3x3 kernel picking the center only.
        let mut conv = Conv2d::zeroed(1, 1, 3, 1);
        conv.weight[4] = 2.0; // center tap
        conv.bias[0] = 0.5;
        let x = Tensor::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let y = conv.forward(&x);
        assert_eq!(y.data(), &[2.5, 4.5, 6.5, 8.5]);

        // An off-center tap shifts the image and zero-pads the border.
        let mut shift = Conv2d::zeroed(1, 1, 3, 1);
        shift.weight[5] = 1.0; // tap (ky=1, kx=2): reads x[y][x+1]
        let y = shift.forward(&x);
        assert_eq!(y.data(), &[2.0, 0.0, 4.0, 0.0]);
    }

    #[test]
    fn conv_stride2_halves_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let conv = Conv2d::new(3, 5, 3, 2, &mut rng);
        let x = random_tensor(3, 8, 6, &mut rng);
        let y = conv.forward(&x);
        assert_eq!((y.channels(), y.height(), y.width()), (5, 4, 3));
    }

    #[test]
    fn conv_1x1_is_a_channel_mix() {
        let mut conv = Conv2d::zeroed(2, 1, 1, 1);
        conv.weight = vec![3.0, -1.0];
        let x = Tensor::from_vec(2, 1, 2, vec![1.0, 2.0, 10.0, 20.0]);
        let y = conv.forward(&x);
        assert_eq!(y.data(), &[-7.0, -14.0]);
    }

    fn conv_fd_case(in_c: usize, out_c: usize, k: usize, stride: usize, h: usize, w: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(7 + stride as u64);
        let mut conv = Conv2d::new(in_c, out_c, k, stride, &mut rng);
        let x = random_tensor(in_c, h, w, &mut rng);
        let out = conv.forward(&x);
        let r = random_tensor(out.channels(), out.height(), out.width(), &mut rng);
        let gin = conv.backward(&x, &r);

        // Weight and bias gradients against central differences.
        let loss = |c: &Conv2d| probe(&c.forward(&x), &r);
        for idx in [0usize, conv.weight.len() / 2, conv.weight.len() - 1] {
            let mut probe_conv = conv.clone();
            probe_conv.weight[idx] += FD_STEP;
            let hi = loss(&probe_conv);
            probe_conv.weight[idx] -= 2.0 * FD_STEP;
            let lo = loss(&probe_conv);
            assert_close(conv.wgrad[idx], (hi - lo) / (2.0 * FD_STEP), "conv wgrad");
        }
        for idx in [0usize, out_c - 1] {
            let mut probe_conv = conv.clone();
            probe_conv.bias[idx] += FD_STEP;
            let hi = loss(&probe_conv);
            probe_conv.bias[idx] -= 2.0 * FD_STEP;
            let lo = loss(&probe_conv);
            assert_close(conv.bgrad[idx], (hi - lo) / (2.0 * FD_STEP), "conv bgrad");
        }
        // Input gradient.
        for idx in [0usize, x.data().len() / 3, x.data().len() - 1] {
            let mut xp = x.clone();
            xp.data_mut()[idx] += FD_STEP;
            let hi = probe(&conv.forward(&xp), &r);
            xp.data_mut()[idx] -= 2.0 * FD_STEP;
            let lo = probe(&conv.forward(&xp), &r);
            assert_close(gin.data()[idx], (hi - lo) / (2.0 * FD_STEP), "conv gin");
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        conv_fd_case(2, 3, 3, 1, 5, 6);
        conv_fd_case(2, 3, 3, 2, 6, 8);
        conv_fd_case(3, 2, 1, 1, 4, 4);
    }

    #[test]
    fn film_modulates_channels_and_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (c, e) = (3, 4);
        let mut film = Film::new(c, e);
        for w in &mut film.ws {
            *w = rng.gen_range(-0.3..0.3);
        }
        for b in &mut film.bs {
            *b = rng.gen_range(-0.3..0.3);
        }
        let embed: Vec<f64> = (0..e).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = random_tensor(c, 3, 3, &mut rng);
        let (out, scales) = film.forward(&x, &embed);
        for ch in 0..c {
            let brow = &film.bs[ch * e..(ch + 1) * e];
            let shift: f64 = brow.iter().zip(&embed).map(|(a, b)| a * b).sum();
            for (o, v) in out.plane(ch).iter().zip(x.plane(ch)) {
                assert!((o - (v * scales[ch] + shift)).abs() < 1e-12);
            }
        }

        let r = random_tensor(c, 3, 3, &mut rng);
        let mut embed_grad = vec![0.0; e];
        let gin = film.backward(&x, &embed, &scales, &r, &mut embed_grad);

        for idx in 0..film.ws.len() {
            let mut probe_film = film.clone();
            probe_film.ws[idx] += FD_STEP;
            let hi = probe(&probe_film.forward(&x, &embed).0, &r);
            probe_film.ws[idx] -= 2.0 * FD_STEP;
            let lo = probe(&probe_film.forward(&x, &embed).0, &r);
            assert_close(film.wgrad[idx], (hi - lo) / (2.0 * FD_STEP), "film wgrad");
        }
        for idx in 0..film.bs.len() {
            let mut probe_film = film.clone();
            probe_film.bs[idx] += FD_STEP;
            let hi = probe(&probe_film.forward(&x, &embed).0, &r);
            probe_film.bs[idx] -= 2.0 * FD_STEP;
            let lo = probe(&probe_film.forward(&x, &embed).0, &r);
            assert_close(film.bgrad[idx], (hi - lo) / (2.0 * FD_STEP), "film bgrad");
        }
        for idx in 0..e {
            let mut ep = embed.clone();
            ep[idx] += FD_STEP;
            let hi = probe(&film.forward(&x, &ep).0, &r);
            ep[idx] -= 2.0 * FD_STEP;
            let lo = probe(&film.forward(&x, &ep).0, &r);
            assert_close(embed_grad[idx], (hi - lo) / (2.0 * FD_STEP), "film embed grad");
        }
        for idx in [0usize, x.data().len() - 1] {
            let mut xp = x.clone();
            xp.data_mut()[idx] += FD_STEP;
            let hi = probe(&film.forward(&xp, &embed).0, &r);
            xp.data_mut()[idx] -= 2.0 * FD_STEP;
            let lo = probe(&film.forward(&xp, &embed).0, &r);
            assert_close(gin.data()[idx], (hi - lo) / (2.0 * FD_STEP), "film gin");
        }
    }

    #[test]
    fn zero_film_is_identity_with_unit_scales() {
        let film = Film::new(2, 5);
        let x = Tensor::from_vec(2, 1, 2, vec![1.0, -2.0, 3.0, 4.0]);
        let (out, scales) = film.forward(&x, &[0.3; 5]);
        assert_eq!(out, x);
        assert_eq!(scales, vec![1.0, 1.0]);
    }

    #[test]
    fn relu_and_backward_gate_consistently() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // Keep values away from the kink so finite differences are valid.
        let x = Tensor::from_vec(
            1,
            4,
            4,
            (0..16)
                .map(|_| {
                    let v: f64 = rng.gen_range(0.1..1.0);
                    if rng.gen_bool(0.5) {
                        v
                    } else {
                        -v
                    }
                })
                .collect(),
        );
        let y = relu(&x);
        assert!(y.data().iter().all(|v| *v >= 0.0));
        let r = random_tensor(1, 4, 4, &mut rng);
        let gin = relu_backward(&y, &r);
        for idx in 0..16 {
            let mut xp = x.clone();
            xp.data_mut()[idx] += FD_STEP;
            let hi = probe(&relu(&xp), &r);
            xp.data_mut()[idx] -= 2.0 * FD_STEP;
            let lo = probe(&relu(&xp), &r);
            assert_close(gin.data()[idx], (hi - lo) / (2.0 * FD_STEP), "relu gin");
        }
    }

    #[test]
    fn upsample_replicates_and_backward_is_adjoint() {
        let x = Tensor::from_vec(1, 1, 2, vec![3.0, 5.0]);
        let y = upsample2x(&x);
        assert_eq!((y.height(), y.width()), (2, 4));
        assert_eq!(y.data(), &[3.0, 3.0, 5.0, 5.0, 3.0, 3.0, 5.0, 5.0]);

        // <up(x), g> == <x, up_backward(g)> for random pairs.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = random_tensor(2, 3, 4, &mut rng);
        let g = random_tensor(2, 6, 8, &mut rng);
        let lhs = probe(&upsample2x(&x), &g);
        let rhs = probe(&x, &upsample2x_backward(&g));
        assert!((lhs - rhs).abs() < 1e-10, "adjoint mismatch: {lhs} vs {rhs}");
    }

    #[test]
    fn sigmoid_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = random_tensor(1, 3, 3, &mut rng);
        let y = sigmoid_map(&x);
        assert!(y.data().iter().all(|v| (0.0..1.0).contains(v)));
        let r = random_tensor(1, 3, 3, &mut rng);
        let gin = sigmoid_backward(&y, &r);
        for idx in 0..9 {
            let mut xp = x.clone();
            xp.data_mut()[idx] += FD_STEP;
            let hi = probe(&sigmoid_map(&xp), &r);
            xp.data_mut()[idx] -= 2.0 * FD_STEP;
            let lo = probe(&sigmoid_map(&xp), &r);
            assert_close(gin.data()[idx], (hi - lo) / (2.0 * FD_STEP), "sigmoid gin");
        }
    }

    #[test]
    fn concat_and_split_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let a = random_tensor(3, 2, 2, &mut rng);
        let b = random_tensor(2, 2, 2, &mut rng);
        let cat = concat_channels(&a, &b);
        assert_eq!(cat.channels(), 5);
        assert_eq!(cat.plane(1), a.plane(1));
        assert_eq!(cat.plane(3), b.plane(0));
        let (a2, b2) = split_channels(&cat, 3);
        assert_eq!(a2, a);
        assert_eq!(b2, b);
    }
}
