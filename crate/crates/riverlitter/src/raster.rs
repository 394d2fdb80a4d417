//! Planar float images and the degradation chain.
//!
//! Everything downstream works on [`ImageBuffer`]: single- or three-channel,
//! samples in [0, 1], stored row-major per plane.  This module owns the
//! operations that simulate how a clean riverbed capture turns into the
//! low-resolution observation a survey actually records:
//!
//! * motion-blur point spread functions and 2-D convolution,
//! * Catmull-Rom bicubic resampling (the same filter is the downsampling
//!   anti-alias step; no separate area filter),
//! * seeded additive Gaussian noise,
//! * [`degrade`], the composition of the three,
//! * the eight dihedral symmetries used for augmentation,
//! * 8-bit PNG I/O.
//!
//! Boundary handling is reflect (edge sample duplicated) everywhere a
//! neighborhood runs off the canvas.  All accumulation happens in f64;
//! storage is f32.

use std::path::Path;

use thiserror::Error;

use crate::boxeval::Bbox;
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("image dimensions {height}x{width} must be at least 1x1")]
    EmptyImage { height: usize, width: usize },
    #[error("channel count {0} unsupported (expected 1 or 3)")]
    BadChannels(usize),
    #[error("sample count {got} does not match {height}x{width}x{channels}")]
    SampleCount { got: usize, height: usize, width: usize, channels: usize },
    #[error("sample {value} at index {index} outside [0, 1]")]
    SampleOutOfRange { index: usize, value: f32 },
    #[error("kernel dimensions {height}x{width} must be odd and nonzero")]
    BadKernelDims { height: usize, width: usize },
    #[error("kernel weight {0} is not finite")]
    BadKernelWeight(f64),
    #[error("blur length must be >= 1")]
    ZeroBlurLength,
    #[error("blur angle {0} is not finite")]
    BadBlurAngle(f64),
    #[error("noise sigma {0} must be finite and >= 0")]
    BadSigma(f64),
    #[error("scale factor {scale} exceeds image dimensions {height}x{width}")]
    ScaleTooLarge { scale: u32, height: usize, width: usize },
    #[error("scale factor must be >= 1")]
    ZeroScale,
    #[error("dihedral op id {0} out of range 0..=7")]
    BadOpId(u8),
    #[error("box ({x_min}, {y_min}, {x_max}, {y_max}) invalid or outside {height}x{width} canvas")]
    BoxOutsideCanvas { x_min: f64, y_min: f64, x_max: f64, y_max: f64, height: usize, width: usize },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("png codec: {0}")]
    Codec(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Reflect an index into [0, n), duplicating the edge sample
/// (-1 -> 0, n -> n-1).  Folds repeatedly, so overhangs longer than the
/// image are still defined.
#[inline]
pub(crate) fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

// ---------------------------------------------------------------------------
// ImageBuffer
// ---------------------------------------------------------------------------

/// Planar float image: `channels` planes of `height x width` samples,
/// each plane row-major, every sample in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    samples: Vec<f32>,
}

impl ImageBuffer {
    fn check_dims(height: usize, width: usize, channels: usize) -> Result<(), RasterError> {
        if height == 0 || width == 0 {
            return Err(RasterError::EmptyImage { height, width });
        }
        if channels != 1 && channels != 3 {
            return Err(RasterError::BadChannels(channels));
        }
        Ok(())
    }

    /// All-zero image.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self, RasterError> {
        Self::check_dims(height, width, channels)?;
        Ok(ImageBuffer { height, width, channels, samples: vec![0.0; height * width * channels] })
    }

    /// Constant image.
    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self, RasterError> {
        let mut img = Self::zeros(height, width, channels)?;
        if !(0.0..=1.0).contains(&value) {
            return Err(RasterError::SampleOutOfRange { index: 0, value });
        }
        img.samples.fill(value);
        Ok(img)
    }

    /// Wrap raw planar samples.  Rejects anything outside [0, 1] (including
    /// NaN) rather than clamping: a caller handing us raw data should know
    /// whether it is in range.
    pub fn from_samples(
        height: usize,
        width: usize,
        channels: usize,
        samples: Vec<f32>,
    ) -> Result<Self, RasterError> {
        Self::check_dims(height, width, channels)?;
        if samples.len() != height * width * channels {
            return Err(RasterError::SampleCount {
                got: samples.len(),
                height,
                width,
                channels,
            });
        }
        for (i, &v) in samples.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(RasterError::SampleOutOfRange { index: i, value: v });
            }
        }
        Ok(ImageBuffer { height, width, channels, samples })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    fn plane_len(&self) -> usize {
        self.height * self.width
    }

    /// One channel plane, row-major.
    pub fn plane(&self, c: usize) -> &[f32] {
        assert!(c < self.channels, "plane {} of {}", c, self.channels);
        &self.samples[c * self.plane_len()..(c + 1) * self.plane_len()]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        assert!(c < self.channels, "plane {} of {}", c, self.channels);
        let n = self.plane_len();
        &mut self.samples[c * n..(c + 1) * n]
    }

    /// All samples, planes concatenated.
    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        debug_assert!(c < self.channels && y < self.height && x < self.width);
        self.samples[(c * self.height + y) * self.width + x]
    }

    /// Set one sample, clamping into [0, 1] to keep the buffer invariant.
    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        debug_assert!(c < self.channels && y < self.height && x < self.width);
        self.samples[(c * self.height + y) * self.width + x] = v.clamp(0.0, 1.0);
    }
}

// ---------------------------------------------------------------------------
// kernels and convolution
// ---------------------------------------------------------------------------

/// Small 2-D convolution kernel with odd dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    height: usize,
    width: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(height: usize, width: usize, weights: Vec<f64>) -> Result<Self, RasterError> {
        if height == 0 || width == 0 || height % 2 == 0 || width % 2 == 0 {
            return Err(RasterError::BadKernelDims { height, width });
        }
        if weights.len() != height * width {
            return Err(RasterError::BadKernelDims { height, width });
        }
        if let Some(&w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(RasterError::BadKernelWeight(w));
        }
        Ok(Kernel { height, width, weights })
    }

    /// 1x1 identity kernel.
    pub fn delta() -> Self {
        Kernel { height: 1, width: 1, weights: vec![1.0] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Rasterize a linear motion-blur PSF: `length` unit masses spaced one pixel
/// apart along a segment through the origin at `angle` radians (0 is
/// horizontal, pi/2 vertical), each splatted bilinearly, then normalized to
/// sum 1.  Length 1 degenerates to the identity kernel.
pub fn motion_psf(length: u32, angle: f64) -> Result<Kernel, RasterError> {
    if length == 0 {
        return Err(RasterError::ZeroBlurLength);
    }
    if !angle.is_finite() {
        return Err(RasterError::BadBlurAngle(angle));
    }
    // Snap near-zero direction components so axis-aligned blurs produce
    // exactly 1-wide kernels instead of a column of 1e-17 weights.
    let mut dir_x = angle.cos();
    let mut dir_y = angle.sin();
    if dir_x.abs() < 1e-12 {
        dir_x = 0.0;
    }
    if dir_y.abs() < 1e-12 {
        dir_y = 0.0;
    }

    let half_span = (length - 1) as f64 / 2.0;
    let extent_x = half_span * dir_x.abs();
    let extent_y = half_span * dir_y.abs();
    // Bilinear splatting reaches ceil(extent) cells from the center.
    let half_w = extent_x.ceil() as usize;
    let half_h = extent_y.ceil() as usize;
    let (kw, kh) = (2 * half_w + 1, 2 * half_h + 1);

    let mut weights = vec![0.0f64; kh * kw];
    for i in 0..length {
        let t = i as f64 - half_span;
        let px = t * dir_x;
        let py = t * dir_y;
        let x0 = px.floor();
        let y0 = py.floor();
        let fx = px - x0;
        let fy = py - y0;
        for (dy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0i64, 1.0 - fx), (1, fx)] {
                let w = wx * wy;
                if w == 0.0 {
                    continue;
                }
                let cx = (x0 as i64 + dx + half_w as i64) as usize;
                let cy = (y0 as i64 + dy + half_h as i64) as usize;
                weights[cy * kw + cx] += w;
            }
        }
    }
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0);
    for w in &mut weights {
        *w /= total;
    }
    Kernel::new(kh, kw, weights)
}

/// True 2-D convolution (kernel flipped), reflect boundary, per channel,
/// output clamped to [0, 1].
pub fn convolve2d(img: &ImageBuffer, kernel: &Kernel) -> ImageBuffer {
    let (h, w) = (img.height, img.width);
    let (kh, kw) = (kernel.height as i64, kernel.width as i64);
    let (cy, cx) = (kh / 2, kw / 2);
    let mut out = img.clone();
    for c in 0..img.channels {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f64;
                for ky in 0..kh {
                    let sy = reflect(y as i64 + cy - ky, h);
                    let row = &src[sy * w..sy * w + w];
                    let krow = &kernel.weights[(ky * kw) as usize..(ky * kw + kw) as usize];
                    for kx in 0..kw {
                        let sx = reflect(x as i64 + cx - kx, w);
                        acc += krow[kx as usize] * row[sx] as f64;
                    }
                }
                dst[y * w + x] = acc.clamp(0.0, 1.0) as f32;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// bicubic resampling
// ---------------------------------------------------------------------------

/// Catmull-Rom tap weights for fractional offset t in [0, 1), covering the
/// samples at -1, 0, +1, +2 relative to floor(src).
#[inline]
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t + 2.0 * t2 - t3),
        0.5 * (2.0 - 5.0 * t2 + 3.0 * t3),
        0.5 * (t + 4.0 * t2 - 3.0 * t3),
        0.5 * (-t2 + t3),
    ]
}

struct AxisTaps {
    idx: Vec<[usize; 4]>,
    w: Vec<[f64; 4]>,
}

/// Center-aligned source positions: src = (dst + 0.5) * in/out - 0.5.
/// Equal sizes give t = 0 everywhere, i.e. an exact copy.
fn axis_taps(n_in: usize, n_out: usize) -> AxisTaps {
    let scale = n_in as f64 / n_out as f64;
    let mut idx = Vec::with_capacity(n_out);
    let mut w = Vec::with_capacity(n_out);
    for d in 0..n_out {
        let src = (d as f64 + 0.5) * scale - 0.5;
        let base = src.floor();
        let t = src - base;
        let b = base as i64;
        idx.push([
            reflect(b - 1, n_in),
            reflect(b, n_in),
            reflect(b + 1, n_in),
            reflect(b + 2, n_in),
        ]);
        w.push(catmull_rom(t));
    }
    AxisTaps { idx, w }
}

/// Resample to an arbitrary size with the Catmull-Rom bicubic filter,
/// separably (rows then columns), reflect boundary, clamped output.
///
/// This is the single resampling primitive of the pipeline: upsampling and
/// downsampling both go through it, so the degradation model's decimation is
/// plain bicubic with no extra prefilter.
pub fn bicubic_resize(
    img: &ImageBuffer,
    out_height: usize,
    out_width: usize,
) -> Result<ImageBuffer, RasterError> {
    ImageBuffer::check_dims(out_height, out_width, img.channels)?;
    let (h, w) = (img.height, img.width);
    let tx = axis_taps(w, out_width);
    let ty = axis_taps(h, out_height);

    let mut out = ImageBuffer::zeros(out_height, out_width, img.channels)?;
    // Intermediate rows stay unclamped f64 so the negative lobes of the
    // horizontal pass are not truncated before the vertical pass sees them.
    let mut tmp = vec![0.0f64; h * out_width];
    for c in 0..img.channels {
        let src = img.plane(c);
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            let dst = &mut tmp[y * out_width..(y + 1) * out_width];
            for (x, d) in dst.iter_mut().enumerate() {
                let ix = &tx.idx[x];
                let wx = &tx.w[x];
                *d = wx[0] * row[ix[0]] as f64
                    + wx[1] * row[ix[1]] as f64
                    + wx[2] * row[ix[2]] as f64
                    + wx[3] * row[ix[3]] as f64;
            }
        }
        let dst = out.plane_mut(c);
        for y in 0..out_height {
            let iy = &ty.idx[y];
            let wy = &ty.w[y];
            let rows = [
                &tmp[iy[0] * out_width..(iy[0] + 1) * out_width],
                &tmp[iy[1] * out_width..(iy[1] + 1) * out_width],
                &tmp[iy[2] * out_width..(iy[2] + 1) * out_width],
                &tmp[iy[3] * out_width..(iy[3] + 1) * out_width],
            ];
            let dst_row = &mut dst[y * out_width..(y + 1) * out_width];
            for (x, d) in dst_row.iter_mut().enumerate() {
                let v = wy[0] * rows[0][x] + wy[1] * rows[1][x] + wy[2] * rows[2][x] + wy[3] * rows[3][x];
                *d = v.clamp(0.0, 1.0) as f32;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// noise and the degradation chain
// ---------------------------------------------------------------------------

/// Add i.i.d. zero-mean Gaussian noise with standard deviation `sigma` to
/// every sample (in storage order, one variate per sample), then clamp.
/// The same (image, sigma, seed) triple always yields the same output.
pub fn add_gaussian_noise(img: &ImageBuffer, sigma: f64, seed: u64) -> Result<ImageBuffer, RasterError> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(RasterError::BadSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut g = SplitMix64::new(seed);
    let mut out = img.clone();
    for v in &mut out.samples {
        let noisy = *v as f64 + sigma * g.next_gaussian();
        *v = noisy.clamp(0.0, 1.0) as f32;
    }
    Ok(out)
}

/// Full degradation recipe for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationSpec {
    /// Motion blur extent in pixels (1 = no blur).
    pub blur_length: u32,
    /// Motion blur direction in radians.
    pub blur_angle: f64,
    /// Integer downsampling factor (1 = keep size).
    pub scale_s: u32,
    /// Additive Gaussian noise standard deviation.
    pub noise_sigma: f64,
    /// Seed for the noise stream.
    pub seed: u64,
}

impl Default for DegradationSpec {
    fn default() -> Self {
        DegradationSpec { blur_length: 3, blur_angle: 0.0, scale_s: 2, noise_sigma: 0.01, seed: 0 }
    }
}

/// Simulated observation: motion blur, bicubic decimation by `scale_s`
/// (output dims floor(dim / s)), then additive Gaussian noise.  Noise is
/// applied after decimation, at observation resolution.
///
/// With blur_length 1, scale 1 and sigma 0 the output is byte-identical to
/// the input.
pub fn degrade(img: &ImageBuffer, spec: &DegradationSpec) -> Result<ImageBuffer, RasterError> {
    if spec.scale_s == 0 {
        return Err(RasterError::ZeroScale);
    }
    let s = spec.scale_s as usize;
    let (oh, ow) = (img.height / s, img.width / s);
    if oh == 0 || ow == 0 {
        return Err(RasterError::ScaleTooLarge {
            scale: spec.scale_s,
            height: img.height,
            width: img.width,
        });
    }
    let psf = motion_psf(spec.blur_length, spec.blur_angle)?;
    let blurred = if psf.height == 1 && psf.width == 1 {
        img.clone()
    } else {
        convolve2d(img, &psf)
    };
    let down = if (oh, ow) == (img.height, img.width) {
        blurred
    } else {
        bicubic_resize(&blurred, oh, ow)?
    };
    add_gaussian_noise(&down, spec.noise_sigma, spec.seed)
}

// ---------------------------------------------------------------------------
// dihedral augmentation
// ---------------------------------------------------------------------------

/// Inverse of each dihedral op id (the four reflections are self-inverse).
pub const DIHEDRAL_INVERSE: [u8; 8] = [0, 3, 2, 1, 4, 5, 6, 7];

fn rot90cw_image(img: &ImageBuffer) -> ImageBuffer {
    let (h, w) = (img.height, img.width);
    let mut out = ImageBuffer::zeros(w, h, img.channels).expect("rotated dims");
    for c in 0..img.channels {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..w {
            for x in 0..h {
                dst[y * h + x] = src[(h - 1 - x) * w + y];
            }
        }
    }
    out
}

fn fliph_image(img: &ImageBuffer) -> ImageBuffer {
    let (h, w) = (img.height, img.width);
    let mut out = img.clone();
    for c in 0..img.channels {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                dst[y * w + x] = src[y * w + (w - 1 - x)];
            }
        }
    }
    out
}

/// Rotate a box 90 degrees clockwise on an `h`-tall canvas (continuous
/// coordinates, so the canvas height bounds y).
fn rot90cw_box(b: &Bbox, h: f64) -> Bbox {
    Bbox { x_min: h - b.y_max, y_min: b.x_min, x_max: h - b.y_min, y_max: b.x_max, class_id: b.class_id }
}

fn fliph_box(b: &Bbox, w: f64) -> Bbox {
    Bbox { x_min: w - b.x_max, y_min: b.y_min, x_max: w - b.x_min, y_max: b.y_max, class_id: b.class_id }
}

/// Apply one of the eight dihedral symmetries to an image and its boxes.
///
/// Op ids: 0 identity, 1/2/3 rotations by 90/180/270 degrees clockwise,
/// 4 horizontal flip, 5/6/7 horizontal flip followed by the rotations.
/// `DIHEDRAL_INVERSE[op]` undoes `op` exactly.
pub fn dihedral_augment(
    img: &ImageBuffer,
    boxes: &[Bbox],
    op_id: u8,
) -> Result<(ImageBuffer, Vec<Bbox>), RasterError> {
    if op_id > 7 {
        return Err(RasterError::BadOpId(op_id));
    }
    let (h, w) = (img.height as f64, img.width as f64);
    for b in boxes {
        let inside = b.x_min >= 0.0 && b.y_min >= 0.0 && b.x_max <= w && b.y_max <= h && b.x_min < b.x_max && b.y_min < b.y_max;
        if !inside {
            return Err(RasterError::BoxOutsideCanvas {
                x_min: b.x_min,
                y_min: b.y_min,
                x_max: b.x_max,
                y_max: b.y_max,
                height: img.height,
                width: img.width,
            });
        }
    }

    let (mut out, mut bs): (ImageBuffer, Vec<Bbox>) = if op_id >= 4 {
        (fliph_image(img), boxes.iter().map(|b| fliph_box(b, w)).collect())
    } else {
        (img.clone(), boxes.to_vec())
    };
    for _ in 0..(op_id % 4) {
        let ch = out.height as f64;
        bs = bs.iter().map(|b| rot90cw_box(b, ch)).collect();
        out = rot90cw_image(&out);
    }
    Ok((out, bs))
}

// ---------------------------------------------------------------------------
// PNG I/O
// ---------------------------------------------------------------------------

/// Read an 8-bit grayscale or RGB PNG; samples become v / 255.
pub fn read_png(path: &Path) -> Result<ImageBuffer, RasterError> {
    let decoded = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => RasterError::Io(io),
        other => RasterError::Codec(other.to_string()),
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        image::DynamicImage::ImageLuma8(g) => {
            let samples = g.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
            ImageBuffer::from_samples(h, w, 1, samples)
        }
        image::DynamicImage::ImageRgb8(rgb) => {
            let raw = rgb.as_raw();
            let mut samples = vec![0.0f32; h * w * 3];
            for (i, px) in raw.chunks_exact(3).enumerate() {
                // interleaved -> planar
                samples[i] = px[0] as f32 / 255.0;
                samples[h * w + i] = px[1] as f32 / 255.0;
                samples[2 * h * w + i] = px[2] as f32 / 255.0;
            }
            ImageBuffer::from_samples(h, w, 3, samples)
        }
        other => Err(RasterError::UnsupportedFormat(format!("{:?}", other.color()))),
    }
}

/// Write an 8-bit PNG; samples quantize as round(v * 255).  Reading the file
/// back reproduces the samples bit-exactly for values that are exact
/// multiples of 1/255 (in particular, anything this function wrote).
pub fn write_png(path: &Path, img: &ImageBuffer) -> Result<(), RasterError> {
    let (h, w) = (img.height as u32, img.width as u32);
    let quant = |v: f32| (v * 255.0).round() as u8;
    let res = if img.channels == 1 {
        let plane = img.plane(0);
        let buf: Vec<u8> = plane.iter().map(|&v| quant(v)).collect();
        let g = image::GrayImage::from_raw(w, h, buf).expect("sized buffer");
        g.save_with_format(path, image::ImageFormat::Png)
    } else {
        let n = img.plane_len();
        let (r, gp, b) = (img.plane(0), img.plane(1), img.plane(2));
        let mut buf = vec![0u8; n * 3];
        for i in 0..n {
            buf[3 * i] = quant(r[i]);
            buf[3 * i + 1] = quant(gp[i]);
            buf[3 * i + 2] = quant(b[i]);
        }
        let rgb = image::RgbImage::from_raw(w, h, buf).expect("sized buffer");
        rgb.save_with_format(path, image::ImageFormat::Png)
    };
    res.map_err(|e| match e {
        image::ImageError::IoError(io) => RasterError::Io(io),
        other => RasterError::Codec(other.to_string()),
    })
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
