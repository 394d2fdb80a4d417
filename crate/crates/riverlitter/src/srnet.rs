//! Small convolutional enhancement network for upscaled survey tiles.
//!
//! The network keeps spatial size: the input is first brought to the target
//! resolution with the shared bicubic resampler, then refined by three
//! convolution layers (9x9 to 64 maps, 5x5 to 32 maps, 5x5 back to the
//! image channels; rectified except for the last layer).  Borders use the
//! same edge-duplicating reflection as the raster filters, so activations
//! never see zero padding.
//!
//! Arithmetic runs in f64 end to end, which keeps gradient checks against
//! central differences clean.  Checkpoints store single-precision weights.
//!
//! Weight layout inside a layer is `[out][in][ky][kx]`, row-major, i.e.
//! index `((oc * in_ch + ic) * k_h + ky) * k_w + kx`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::raster::{bicubic_resize, reflect, ImageBuffer, RasterError};
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum SrError {
    #[error("channel count {0} not supported (1 or 3)")]
    BadChannels(usize),
    #[error("expected {expected} channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("tensor shapes differ: {a_h}x{a_w} vs {b_h}x{b_w}")]
    ShapeMismatch { a_h: usize, a_w: usize, b_h: usize, b_w: usize },
    #[error("layer chain is inconsistent or empty")]
    BadArchitecture,
    #[error("kernel dims must be odd, got {0}x{1}")]
    EvenKernel(usize, usize),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("epoch count must be >= 1")]
    ZeroEpochs,
    #[error("learning rate {0} must be finite and > 0")]
    BadLearningRate(f64),
    #[error("halving interval must be >= 1")]
    ZeroInterval,
    #[error("scale factor must be in 1..=64, got {0}")]
    BadScale(usize),
    #[error("optimizer state length does not match parameters")]
    OptimizerShape,
    #[error("optimizer step index must be >= 1")]
    ZeroStep,
    #[error("loss became non-finite during training")]
    NonFiniteLoss,
    #[error("bad checkpoint magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(&'static str),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const CHECKPOINT_MAGIC: [u8; 4] = *b"SRNC";
const CHECKPOINT_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

/// Planar f64 activation block: `channels` planes of `height x width`,
/// each row-major.  Unlike `ImageBuffer`, values are unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Tensor {
        Tensor { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn from_image(img: &ImageBuffer) -> Tensor {
        let mut t = Tensor::zeros(img.channels(), img.height(), img.width());
        let hw = img.height() * img.width();
        for c in 0..img.channels() {
            for (d, &s) in t.data[c * hw..(c + 1) * hw].iter_mut().zip(img.plane(c)) {
                *d = s as f64;
            }
        }
        t
    }

    /// Clamp to [0, 1] and quantize down to the f32 image type.
    pub fn to_image_clamped(&self) -> Result<ImageBuffer, SrError> {
        let samples = self.data.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect();
        Ok(ImageBuffer::from_samples(self.height, self.width, self.channels, samples)?)
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let hw = self.height * self.width;
        &self.data[c * hw..(c + 1) * hw]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let hw = self.height * self.width;
        &mut self.data[c * hw..(c + 1) * hw]
    }
}

/// Grow a tensor by (ph, pw) on each side, filling the margin through the
/// edge-duplicating reflection used by the raster filters.
fn pad_reflect(t: &Tensor, ph: usize, pw: usize) -> Tensor {
    let (h, w) = (t.height, t.width);
    let mut out = Tensor::zeros(t.channels, h + 2 * ph, w + 2 * pw);
    let ow = out.width;
    for c in 0..t.channels {
        let src = t.plane(c);
        let dst = out.plane_mut(c);
        for py in 0..h + 2 * ph {
            let sy = reflect(py as i64 - ph as i64, h);
            for px in 0..w + 2 * pw {
                let sx = reflect(px as i64 - pw as i64, w);
                dst[py * ow + px] = src[sy * w + sx];
            }
        }
    }
    out
}

/// Fold a gradient over a padded tensor back onto the unpadded source:
/// every padded cell adds into the source pixel it mirrored.
fn unpad_fold(dp: &Tensor, ph: usize, pw: usize, h: usize, w: usize) -> Tensor {
    let mut out = Tensor::zeros(dp.channels, h, w);
    let pw_total = dp.width;
    for c in 0..dp.channels {
        let src = dp.plane(c);
        let dst = out.plane_mut(c);
        for py in 0..dp.height {
            let sy = reflect(py as i64 - ph as i64, h);
            for px in 0..pw_total {
                let sx = reflect(px as i64 - pw as i64, w);
                dst[sy * w + sx] += src[py * pw_total + px];
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// ConvLayer
// ---------------------------------------------------------------------------

/// One same-size convolution layer with optional rectification.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub out_ch: usize,
    pub in_ch: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub relu: bool,
}

/// Per-layer parameter gradients, laid out exactly like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

struct LayerCache {
    padded: Tensor,
    pre: Tensor,
}

impl ConvLayer {
    /// Zero-bias layer with weights drawn from N(0, 2 / fan_in), the usual
    /// spread for rectified stacks.
    pub fn he_init(
        out_ch: usize,
        in_ch: usize,
        k_h: usize,
        k_w: usize,
        relu: bool,
        rng: &mut SplitMix64,
    ) -> Result<ConvLayer, SrError> {
        if k_h % 2 == 0 || k_w % 2 == 0 {
            return Err(SrError::EvenKernel(k_h, k_w));
        }
        if out_ch == 0 || in_ch == 0 {
            return Err(SrError::BadArchitecture);
        }
        let fan_in = (in_ch * k_h * k_w) as f64;
        let std = (2.0 / fan_in).sqrt();
        let weights = (0..out_ch * in_ch * k_h * k_w)
            .map(|_| rng.next_gaussian() * std)
            .collect();
        Ok(ConvLayer { out_ch, in_ch, k_h, k_w, weights, bias: vec![0.0; out_ch], relu })
    }

    fn weight_index(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> usize {
        ((oc * self.in_ch + ic) * self.k_h + ky) * self.k_w + kx
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward_cached(&self, input: &Tensor) -> Result<LayerCache, SrError> {
        if input.channels != self.in_ch {
            return Err(SrError::ChannelMismatch { expected: self.in_ch, got: input.channels });
        }
        let (h, w) = (input.height, input.width);
        let (ph, pw) = ((self.k_h - 1) / 2, (self.k_w - 1) / 2);
        let padded = pad_reflect(input, ph, pw);
        let pstride = padded.width;
        let mut pre = Tensor::zeros(self.out_ch, h, w);
        for oc in 0..self.out_ch {
            let z = pre.plane_mut(oc);
            z.fill(self.bias[oc]);
            for ic in 0..self.in_ch {
                let p = padded.plane(ic);
                for ky in 0..self.k_h {
                    for kx in 0..self.k_w {
                        let wgt = self.weights[self.weight_index(oc, ic, ky, kx)];
                        for y in 0..h {
                            let prow = &p[(y + ky) * pstride + kx..(y + ky) * pstride + kx + w];
                            let zrow = &mut z[y * w..(y + 1) * w];
                            for (zo, &pi) in zrow.iter_mut().zip(prow) {
                                *zo += wgt * pi;
                            }
                        }
                    }
                }
            }
        }
        Ok(LayerCache { padded, pre })
    }

    fn activate(&self, pre: &Tensor) -> Tensor {
        if !self.relu {
            return pre.clone();
        }
        let mut out = pre.clone();
        for v in &mut out.data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        out
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, SrError> {
        let cache = self.forward_cached(input)?;
        Ok(self.activate(&cache.pre))
    }

    /// Gradients of the loss w.r.t. this layer's parameters and input,
    /// given the gradient w.r.t. its activation output.
    fn backward(&self, cache: &LayerCache, d_out: &Tensor) -> (LayerGrads, Tensor) {
        let (h, w) = (cache.pre.height, cache.pre.width);
        let (ph, pw) = ((self.k_h - 1) / 2, (self.k_w - 1) / 2);
        // rectifier gate: gradient passes only where the unit fired
        let mut dz = d_out.clone();
        if self.relu {
            for (g, &z) in dz.data.iter_mut().zip(&cache.pre.data) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let mut grads = LayerGrads {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.out_ch],
        };
        let mut d_padded = Tensor::zeros(self.in_ch, h + 2 * ph, w + 2 * pw);
        let pstride = d_padded.width;
        for oc in 0..self.out_ch {
            let dzp = dz.plane(oc);
            grads.bias[oc] = dzp.iter().sum();
            for ic in 0..self.in_ch {
                let p = cache.padded.plane(ic);
                let dp = d_padded.plane_mut(ic);
                for ky in 0..self.k_h {
                    for kx in 0..self.k_w {
                        let wgt = self.weights[self.weight_index(oc, ic, ky, kx)];
                        let mut acc = 0.0f64;
                        for y in 0..h {
                            let base = (y + ky) * pstride + kx;
                            let dzr = &dzp[y * w..(y + 1) * w];
                            let pr = &p[base..base + w];
                            acc += dzr.iter().zip(pr).map(|(a, b)| a * b).sum::<f64>();
                            let dpr = &mut dp[base..base + w];
                            for (d, &g) in dpr.iter_mut().zip(dzr) {
                                *d += wgt * g;
                            }
                        }
                        grads.weights[self.weight_index(oc, ic, ky, kx)] = acc;
                    }
                }
            }
        }
        let d_input = unpad_fold(&d_padded, ph, pw, h, w);
        (grads, d_input)
    }
}

// ---------------------------------------------------------------------------
// SrNetwork
// ---------------------------------------------------------------------------

/// Three-layer refinement stack over same-size activations.
#[derive(Debug, Clone, PartialEq)]
pub struct SrNetwork {
    pub channels: usize,
    pub layers: Vec<ConvLayer>,
}

impl SrNetwork {
    /// Standard architecture: 9x9 to 64 maps, 5x5 to 32, 5x5 back to the
    /// image channels, rectified except at the output.
    pub fn new(channels: usize, seed: u64) -> Result<SrNetwork, SrError> {
        if channels != 1 && channels != 3 {
            return Err(SrError::BadChannels(channels));
        }
        let mut rng = SplitMix64::new(seed);
        let layers = vec![
            ConvLayer::he_init(64, channels, 9, 9, true, &mut rng)?,
            ConvLayer::he_init(32, 64, 5, 5, true, &mut rng)?,
            ConvLayer::he_init(channels, 32, 5, 5, false, &mut rng)?,
        ];
        Ok(SrNetwork { channels, layers })
    }

    fn validate(&self) -> Result<(), SrError> {
        let Some(first) = self.layers.first() else {
            return Err(SrError::BadArchitecture);
        };
        if first.in_ch != self.channels {
            return Err(SrError::BadArchitecture);
        }
        for pair in self.layers.windows(2) {
            if pair[1].in_ch != pair[0].out_ch {
                return Err(SrError::BadArchitecture);
            }
        }
        if self.layers.last().unwrap().out_ch != self.channels {
            return Err(SrError::BadArchitecture);
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum()
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, SrError> {
        self.validate()?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    /// Mean absolute error of the network output against `target`.
    pub fn loss(&self, input: &Tensor, target: &Tensor) -> Result<f64, SrError> {
        let out = self.forward(input)?;
        if out.height != target.height || out.width != target.width || out.channels != target.channels {
            return Err(SrError::ShapeMismatch {
                a_h: out.height,
                a_w: out.width,
                b_h: target.height,
                b_w: target.width,
            });
        }
        let n = out.data.len() as f64;
        Ok(out.data.iter().zip(&target.data).map(|(o, t)| (o - t).abs()).sum::<f64>() / n)
    }

    /// Mean absolute error and its gradient for every layer's parameters.
    pub fn loss_and_grad(
        &self,
        input: &Tensor,
        target: &Tensor,
    ) -> Result<(f64, Vec<LayerGrads>), SrError> {
        self.validate()?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let cache = layer.forward_cached(&x)?;
            x = layer.activate(&cache.pre);
            caches.push(cache);
        }
        if x.height != target.height || x.width != target.width || x.channels != target.channels {
            return Err(SrError::ShapeMismatch {
                a_h: x.height,
                a_w: x.width,
                b_h: target.height,
                b_w: target.width,
            });
        }
        let n = x.data.len() as f64;
        let mut loss = 0.0f64;
        let mut d = Tensor::zeros(x.channels, x.height, x.width);
        for (g, (o, t)) in d.data.iter_mut().zip(x.data.iter().zip(&target.data)) {
            let r = o - t;
            loss += r.abs();
            // subgradient 0 at an exact match
            *g = if r > 0.0 {
                1.0 / n
            } else if r < 0.0 {
                -1.0 / n
            } else {
                0.0
            };
        }
        loss /= n;
        let mut grads = vec![
            LayerGrads { weights: Vec::new(), bias: Vec::new() };
            self.layers.len()
        ];
        let mut d_out = d;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (g, d_in) = layer.backward(&caches[i], &d_out);
            grads[i] = g;
            d_out = d_in;
        }
        Ok((loss, grads))
    }

    /// Run the refinement stack over an image at its current size.
    pub fn refine(&self, img: &ImageBuffer) -> Result<ImageBuffer, SrError> {
        if img.channels() != self.channels {
            return Err(SrError::ChannelMismatch { expected: self.channels, got: img.channels() });
        }
        self.forward(&Tensor::from_image(img))?.to_image_clamped()
    }

    /// Upscale by an integer factor, then refine.
    pub fn super_resolve(&self, lr: &ImageBuffer, scale: usize) -> Result<ImageBuffer, SrError> {
        if scale == 0 || scale > 64 {
            return Err(SrError::BadScale(scale));
        }
        self.super_resolve_to(lr, lr.height() * scale, lr.width() * scale)
    }

    /// Resample to an explicit target size, then refine.
    pub fn super_resolve_to(
        &self,
        lr: &ImageBuffer,
        out_height: usize,
        out_width: usize,
    ) -> Result<ImageBuffer, SrError> {
        let up = bicubic_resize(lr, out_height, out_width)?;
        self.refine(&up)
    }

    // -- checkpoint io -----------------------------------------------------

    /// Binary checkpoint: magic, version, channel count, then each layer's
    /// shape header and single-precision parameters, all little-endian.
    pub fn save_checkpoint(&self, path: &Path) -> Result<(), SrError> {
        self.validate()?;
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(self.channels as u32).to_le_bytes())?;
        out.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for layer in &self.layers {
            for dim in [layer.out_ch, layer.in_ch, layer.k_h, layer.k_w] {
                out.write_all(&(dim as u32).to_le_bytes())?;
            }
            for &w in &layer.weights {
                out.write_all(&(w as f32).to_le_bytes())?;
            }
            for &b in &layer.bias {
                out.write_all(&(b as f32).to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<SrNetwork, SrError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(SrError::BadMagic(magic));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(SrError::BadVersion(version));
        }
        let channels = read_u32(&mut r)? as usize;
        if channels != 1 && channels != 3 {
            return Err(SrError::Corrupt("bad channel count"));
        }
        let layer_count = read_u32(&mut r)? as usize;
        if layer_count == 0 || layer_count > 16 {
            return Err(SrError::Corrupt("implausible layer count"));
        }
        let mut layers = Vec::with_capacity(layer_count);
        for li in 0..layer_count {
            let out_ch = read_u32(&mut r)? as usize;
            let in_ch = read_u32(&mut r)? as usize;
            let k_h = read_u32(&mut r)? as usize;
            let k_w = read_u32(&mut r)? as usize;
            if out_ch == 0 || in_ch == 0 || k_h % 2 == 0 || k_w % 2 == 0 || k_h > 63 || k_w > 63 {
                return Err(SrError::Corrupt("bad layer shape"));
            }
            let w_count = out_ch * in_ch * k_h * k_w;
            if w_count > 64 * 1024 * 1024 {
                return Err(SrError::Corrupt("implausible weight count"));
            }
            let mut weights = Vec::with_capacity(w_count);
            for _ in 0..w_count {
                let v = read_f32(&mut r)? as f64;
                if !v.is_finite() {
                    return Err(SrError::Corrupt("non-finite weight"));
                }
                weights.push(v);
            }
            let mut bias = Vec::with_capacity(out_ch);
            for _ in 0..out_ch {
                let v = read_f32(&mut r)? as f64;
                if !v.is_finite() {
                    return Err(SrError::Corrupt("non-finite bias"));
                }
                bias.push(v);
            }
            // rectified everywhere except the output layer
            let relu = li + 1 < layer_count;
            layers.push(ConvLayer { out_ch, in_ch, k_h, k_w, weights, bias, relu });
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(SrError::Corrupt("trailing bytes"));
        }
        let net = SrNetwork { channels, layers };
        net.validate().map_err(|_| SrError::Corrupt("layer chain mismatch"))?;
        Ok(net)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, SrError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f32<R: Read>(r: &mut R) -> Result<f32, SrError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(f32::from_le_bytes(buf))
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// One bias-corrected moment-estimate update over a flat parameter slice.
/// `t` counts steps from 1.  The damping term sits outside the square
/// root: theta -= lr * m_hat / (sqrt(v_hat) + epsilon).
pub fn adam_update(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    p: &AdamParams,
) -> Result<(), SrError> {
    if theta.len() != grad.len() || theta.len() != m.len() || theta.len() != v.len() {
        return Err(SrError::OptimizerShape);
    }
    if t == 0 {
        return Err(SrError::ZeroStep);
    }
    if !lr.is_finite() || lr <= 0.0 {
        return Err(SrError::BadLearningRate(lr));
    }
    let bc1 = 1.0 - p.beta1.powi(t as i32);
    let bc2 = 1.0 - p.beta2.powi(t as i32);
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * g;
        v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + p.epsilon);
    }
    Ok(())
}

/// First and second moment buffers for every parameter in the network.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(net: &SrNetwork) -> AdamState {
        AdamState {
            m_w: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            v_w: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            m_b: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
            v_b: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// Apply one optimizer step to every layer from accumulated gradients.
pub fn adam_step(
    net: &mut SrNetwork,
    grads: &[LayerGrads],
    state: &mut AdamState,
    lr: f64,
    p: &AdamParams,
) -> Result<(), SrError> {
    if grads.len() != net.layers.len() || state.m_w.len() != net.layers.len() {
        return Err(SrError::OptimizerShape);
    }
    state.t += 1;
    for (i, layer) in net.layers.iter_mut().enumerate() {
        adam_update(
            &mut layer.weights,
            &grads[i].weights,
            &mut state.m_w[i],
            &mut state.v_w[i],
            state.t,
            lr,
            p,
        )?;
        adam_update(
            &mut layer.bias,
            &grads[i].bias,
            &mut state.m_b[i],
            &mut state.v_b[i],
            state.t,
            lr,
            p,
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// The step size halves every this many epochs.
    pub halving_interval: usize,
    pub adam: AdamParams,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            learning_rate: 1e-3,
            halving_interval: 200,
            adam: AdamParams::default(),
            seed: 0,
        }
    }
}

/// Step size for a zero-based epoch index: initial / 2^(epoch / interval).
pub fn scheduled_lr(initial: f64, halving_interval: usize, epoch: usize) -> f64 {
    initial * 0.5f64.powi((epoch / halving_interval) as i32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-example loss of each epoch, in epoch order.
    pub epoch_losses: Vec<f64>,
}

/// Fit the network on (degraded, reference) image pairs.  Each degraded
/// input is first resampled to its reference's size, then the pair drives
/// one optimizer step per example, in an order reshuffled every epoch from
/// the config seed.
pub fn train(
    net: &mut SrNetwork,
    pairs: &[(ImageBuffer, ImageBuffer)],
    cfg: &TrainConfig,
) -> Result<TrainReport, SrError> {
    if pairs.is_empty() {
        return Err(SrError::EmptyTrainingSet);
    }
    if cfg.epochs == 0 {
        return Err(SrError::ZeroEpochs);
    }
    if !cfg.learning_rate.is_finite() || cfg.learning_rate <= 0.0 {
        return Err(SrError::BadLearningRate(cfg.learning_rate));
    }
    if cfg.halving_interval == 0 {
        return Err(SrError::ZeroInterval);
    }
    net.validate()?;
    let mut inputs = Vec::with_capacity(pairs.len());
    let mut targets = Vec::with_capacity(pairs.len());
    for (lr_img, hr_img) in pairs {
        if lr_img.channels() != net.channels || hr_img.channels() != net.channels {
            return Err(SrError::ChannelMismatch {
                expected: net.channels,
                got: lr_img.channels().max(hr_img.channels()),
            });
        }
        let up = bicubic_resize(lr_img, hr_img.height(), hr_img.width())?;
        inputs.push(Tensor::from_image(&up));
        targets.push(Tensor::from_image(hr_img));
    }
    let mut rng = SplitMix64::new(SplitMix64::derive(cfg.seed, 0x5f74_7261_696e));
    let mut state = AdamState::new(net);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = scheduled_lr(cfg.learning_rate, cfg.halving_interval, epoch);
        rng.shuffle(&mut order);
        let mut total = 0.0f64;
        for &idx in &order {
            let (loss, grads) = net.loss_and_grad(&inputs[idx], &targets[idx])?;
            if !loss.is_finite() {
                return Err(SrError::NonFiniteLoss);
            }
            total += loss;
            adam_step(net, &grads, &mut state, lr, &cfg.adam)?;
        }
        epoch_losses.push(total / pairs.len() as f64);
    }
    Ok(TrainReport { epoch_losses })
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
