//! Reference-vs-reconstruction quality metrics: MSE, PSNR, SSIM.
//!
//! All statistics accumulate in f64 regardless of the f32 sample storage.
//! PSNR of a perfect reconstruction is positive infinity, which serializes
//! as the string `"inf"` (JSON has no infinity literal); see [`serde_psnr`].
//!
//! SSIM runs in one of two modes.  The default is the conventional windowed
//! estimate: an 11x11 Gaussian window (sigma 1.5) slides over every position
//! where it fits entirely inside the image, the per-window scores are
//! averaged over centers, and channels are averaged last.  `Global` computes
//! the same formula once from whole-image moments, cheap and exact for the
//! constant-image algebra used in tests.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::ImageBuffer;

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("shape mismatch: {0}x{1}x{2} vs {3}x{4}x{5}")]
    ShapeMismatch(usize, usize, usize, usize, usize, usize),
    #[error("dynamic range {0} must be finite and > 0")]
    BadDynamicRange(f64),
    #[error("ssim window size {0} must be odd and nonzero")]
    BadWindowSize(usize),
    #[error("ssim window sigma {0} must be finite and > 0")]
    BadWindowSigma(f64),
    #[error("ssim window {size} does not fit inside {height}x{width} image")]
    WindowTooLarge { size: usize, height: usize, width: usize },
    #[error("ssim stabilizer {0} must be finite and > 0")]
    BadStabilizer(f64),
}

fn check_same_shape(a: &ImageBuffer, b: &ImageBuffer) -> Result<(), QualityError> {
    if a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels() {
        return Err(QualityError::ShapeMismatch(
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels(),
        ));
    }
    Ok(())
}

/// Mean squared error over all samples of all channels.
pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, QualityError> {
    check_same_shape(a, b)?;
    let mut acc = 0.0f64;
    for (&x, &y) in a.samples().iter().zip(b.samples()) {
        let d = x as f64 - y as f64;
        acc += d * d;
    }
    Ok(acc / a.samples().len() as f64)
}

/// PSNR in dB from a known MSE: 10 log10(max_i^2 / mse).  Zero error gives
/// +infinity.
pub fn psnr_from_mse(mse: f64, max_i: f64) -> Result<f64, QualityError> {
    if !max_i.is_finite() || max_i <= 0.0 {
        return Err(QualityError::BadDynamicRange(max_i));
    }
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_i * max_i / mse).log10())
}

/// PSNR between two images, `max_i` being the nominal peak signal (1.0 for
/// the unit-range buffers used throughout).
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer, max_i: f64) -> Result<f64, QualityError> {
    psnr_from_mse(mse(a, b)?, max_i)
}

/// Window over which SSIM statistics are gathered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SsimWindow {
    /// One set of moments per channel from the whole image.
    Global,
    /// Gaussian-weighted sliding window; only fully interior positions
    /// contribute.
    Gaussian { size: usize, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    /// Luminance stabilizer, conventionally (k1 L)^2 with k1 = 0.01.
    pub c1: f64,
    /// Contrast stabilizer, conventionally (k2 L)^2 with k2 = 0.03.
    pub c2: f64,
    pub window: SsimWindow,
    /// Dynamic range L the stabilizers were derived from.
    pub dynamic_range: f64,
}

impl SsimParams {
    /// Conventional constants for a given dynamic range L.
    pub fn for_dynamic_range(l: f64) -> Self {
        SsimParams {
            c1: (0.01 * l) * (0.01 * l),
            c2: (0.03 * l) * (0.03 * l),
            window: SsimWindow::Gaussian { size: 11, sigma: 1.5 },
            dynamic_range: l,
        }
    }

    fn validate(&self, img: &ImageBuffer) -> Result<(), QualityError> {
        if !self.c1.is_finite() || self.c1 <= 0.0 {
            return Err(QualityError::BadStabilizer(self.c1));
        }
        if !self.c2.is_finite() || self.c2 <= 0.0 {
            return Err(QualityError::BadStabilizer(self.c2));
        }
        if let SsimWindow::Gaussian { size, sigma } = self.window {
            if size == 0 || size % 2 == 0 {
                return Err(QualityError::BadWindowSize(size));
            }
            if !sigma.is_finite() || sigma <= 0.0 {
                return Err(QualityError::BadWindowSigma(sigma));
            }
            if size > img.height() || size > img.width() {
                return Err(QualityError::WindowTooLarge {
                    size,
                    height: img.height(),
                    width: img.width(),
                });
            }
        }
        Ok(())
    }
}

impl Default for SsimParams {
    /// Unit dynamic range: c1 = 1e-4, c2 = 9e-4, 11x11 Gaussian, sigma 1.5.
    fn default() -> Self {
        Self::for_dynamic_range(1.0)
    }
}

#[inline]
fn ssim_formula(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64, c1: f64, c2: f64) -> f64 {
    let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
    let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
    (num / den).clamp(-1.0, 1.0)
}

/// Normalized 1-D Gaussian taps of odd length.
fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as i64;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= total;
    }
    taps
}

/// Valid-mode separable filtering: rows first, then columns.  Output is
/// (h - size + 1) x (w - size + 1).
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let size = taps.len();
    let ow = w - size + 1;
    let oh = h - size + 1;
    let mut rows = vec![0.0f64; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        let dst = &mut rows[y * ow..(y + 1) * ow];
        for (x, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                acc += t * src[x + k];
            }
            *d = acc;
        }
    }
    let mut out = vec![0.0f64; oh * ow];
    for y in 0..oh {
        let dst = &mut out[y * ow..(y + 1) * ow];
        for (k, &t) in taps.iter().enumerate() {
            let src = &rows[(y + k) * ow..(y + k + 1) * ow];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += t * s;
            }
        }
    }
    out
}

/// Structural similarity between two same-shape images.  Channels are
/// scored independently and averaged.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer, params: &SsimParams) -> Result<f64, QualityError> {
    check_same_shape(a, b)?;
    params.validate(a)?;
    let (h, w) = (a.height(), a.width());
    let mut per_channel_sum = 0.0f64;
    for c in 0..a.channels() {
        let pa: Vec<f64> = a.plane(c).iter().map(|&v| v as f64).collect();
        let pb: Vec<f64> = b.plane(c).iter().map(|&v| v as f64).collect();
        let score = match params.window {
            SsimWindow::Global => {
                let n = (h * w) as f64;
                let mu_a = pa.iter().sum::<f64>() / n;
                let mu_b = pb.iter().sum::<f64>() / n;
                let mut var_a = 0.0;
                let mut var_b = 0.0;
                let mut cov = 0.0;
                for (&x, &y) in pa.iter().zip(&pb) {
                    var_a += (x - mu_a) * (x - mu_a);
                    var_b += (y - mu_b) * (y - mu_b);
                    cov += (x - mu_a) * (y - mu_b);
                }
                ssim_formula(mu_a, mu_b, var_a / n, var_b / n, cov / n, params.c1, params.c2)
            }
            SsimWindow::Gaussian { size, sigma } => {
                let taps = gaussian_taps(size, sigma);
                let aa: Vec<f64> = pa.iter().map(|x| x * x).collect();
                let bb: Vec<f64> = pb.iter().map(|x| x * x).collect();
                let ab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
                let mu_a = filter_valid(&pa, h, w, &taps);
                let mu_b = filter_valid(&pb, h, w, &taps);
                let m_aa = filter_valid(&aa, h, w, &taps);
                let m_bb = filter_valid(&bb, h, w, &taps);
                let m_ab = filter_valid(&ab, h, w, &taps);
                let mut acc = 0.0f64;
                for i in 0..mu_a.len() {
                    let (ma, mb) = (mu_a[i], mu_b[i]);
                    acc += ssim_formula(
                        ma,
                        mb,
                        m_aa[i] - ma * ma,
                        m_bb[i] - mb * mb,
                        m_ab[i] - ma * mb,
                        params.c1,
                        params.c2,
                    );
                }
                acc / mu_a.len() as f64
            }
        };
        per_channel_sum += score;
    }
    Ok(per_channel_sum / a.channels() as f64)
}

/// Serialize a possibly-infinite PSNR as a JSON number, or the string
/// `"inf"` when the reconstruction is exact.
pub mod serde_psnr {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if value.is_infinite() {
            ser.serialize_str("inf")
        } else {
            ser.serialize_f64(*value)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(s) if s == "inf" => Ok(f64::INFINITY),
            Raw::Text(s) => Err(D::Error::custom(format!("bad psnr value {:?}", s))),
        }
    }
}

/// Bundle of all three metrics for one (reference, reconstruction) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub mse: f64,
    #[serde(with = "serde_psnr")]
    pub psnr_db: f64,
    pub ssim: f64,
}

pub fn quality_report(
    reference: &ImageBuffer,
    reconstruction: &ImageBuffer,
    params: &SsimParams,
) -> Result<QualityReport, QualityError> {
    let err = mse(reference, reconstruction)?;
    Ok(QualityReport {
        mse: err,
        psnr_db: psnr_from_mse(err, params.dynamic_range)?,
        ssim: ssim(reference, reconstruction, params)?,
    })
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
