//! Color-prototype reference detector.
//!
//! Deliberately simple and fully deterministic: threshold the Euclidean
//! RGB distance to each class prototype, repair small dropouts with a
//! morphological closing, then report every 8-connected component above a
//! minimum area as one detection.  Confidence is the component's mean
//! color affinity, so it degrades smoothly as noise pushes pixels away
//! from the prototype.  That makes the detector a useful measuring stick:
//! image quality moves its scores, not its plumbing.

use thiserror::Error;

use crate::boxeval::{Bbox, Detection, EvalError};
use crate::classes::LitterClass;
use crate::raster::ImageBuffer;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("detector needs 3 channels, got {0}")]
    BadChannels(usize),
    #[error("color tolerance {0} must be in (0, sqrt(3)]")]
    BadTolerance(f64),
    #[error("min area must be >= 1")]
    ZeroMinArea,
    #[error("merge radius {0} too large (max 16)")]
    BadRadius(usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    /// Maximum RGB distance to a prototype for a pixel to count as that
    /// class.
    pub color_tol: f64,
    /// Closing radius (square window) that bridges interior details and
    /// noise dropouts.
    pub merge_radius: usize,
    /// Components smaller than this many pixels are discarded.
    pub min_area: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams { color_tol: 0.18, merge_radius: 2, min_area: 24 }
    }
}

impl DetectorParams {
    fn validate(&self) -> Result<(), DetectError> {
        if !self.color_tol.is_finite() || self.color_tol <= 0.0 || self.color_tol > 3f64.sqrt() {
            return Err(DetectError::BadTolerance(self.color_tol));
        }
        if self.min_area == 0 {
            return Err(DetectError::ZeroMinArea);
        }
        if self.merge_radius > 16 {
            return Err(DetectError::BadRadius(self.merge_radius));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// morphology
// ---------------------------------------------------------------------------

/// Axis max filter.  Outside the canvas counts as empty.
fn dilate_axis(mask: &[u8], h: usize, w: usize, r: usize, horizontal: bool) -> Vec<u8> {
    let mut out = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            let (n, pos) = if horizontal { (w, x) } else { (h, y) };
            let lo = pos.saturating_sub(r);
            let hi = (pos + r).min(n - 1);
            let mut v = 0u8;
            for k in lo..=hi {
                let idx = if horizontal { y * w + k } else { k * w + x };
                v |= mask[idx];
                if v == 1 {
                    break;
                }
            }
            out[y * w + x] = v;
        }
    }
    out
}

/// Axis min filter.  Outside the canvas is ignored, so shapes flush with
/// the border are not eaten from that side.
fn erode_axis(mask: &[u8], h: usize, w: usize, r: usize, horizontal: bool) -> Vec<u8> {
    let mut out = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            let (n, pos) = if horizontal { (w, x) } else { (h, y) };
            let lo = pos.saturating_sub(r);
            let hi = (pos + r).min(n - 1);
            let mut v = 1u8;
            for k in lo..=hi {
                let idx = if horizontal { y * w + k } else { k * w + x };
                v &= mask[idx];
                if v == 0 {
                    break;
                }
            }
            out[y * w + x] = v;
        }
    }
    out
}

/// Morphological closing with a (2r+1)^2 square window: dilation, then
/// erosion.  Identity for r = 0.
fn closing(mask: &[u8], h: usize, w: usize, r: usize) -> Vec<u8> {
    if r == 0 {
        return mask.to_vec();
    }
    let d = dilate_axis(&dilate_axis(mask, h, w, r, true), h, w, r, false);
    erode_axis(&erode_axis(&d, h, w, r, true), h, w, r, false)
}

// ---------------------------------------------------------------------------
// components
// ---------------------------------------------------------------------------

/// 8-connected components of a binary mask, each as a pixel index list.
fn components(mask: &[u8], h: usize, w: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if mask[start] == 0 || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        seen[start] = true;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            comp.push(idx);
            let (y, x) = (idx / w, idx % w);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let (ny, nx) = (y as i64 + dy, x as i64 + dx);
                    if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                        continue;
                    }
                    let nidx = ny as usize * w + nx as usize;
                    if mask[nidx] == 1 && !seen[nidx] {
                        seen[nidx] = true;
                        stack.push(nidx);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

// ---------------------------------------------------------------------------
// detection
// ---------------------------------------------------------------------------

/// Run the prototype detector over an RGB image.  Results are sorted by
/// descending confidence, ties by ascending x_min, y_min, then class id.
pub fn detect(img: &ImageBuffer, params: &DetectorParams) -> Result<Vec<Detection>, DetectError> {
    params.validate()?;
    if img.channels() != 3 {
        return Err(DetectError::BadChannels(img.channels()));
    }
    let (h, w) = (img.height(), img.width());
    let mut dets = Vec::new();
    let mut dist = vec![0.0f64; h * w];
    let mut mask = vec![0u8; h * w];
    for class in LitterClass::ALL {
        let p = class.prototype_rgb();
        let (r_pl, g_pl, b_pl) = (img.plane(0), img.plane(1), img.plane(2));
        for i in 0..h * w {
            let dr = r_pl[i] as f64 - p[0] as f64;
            let dg = g_pl[i] as f64 - p[1] as f64;
            let db = b_pl[i] as f64 - p[2] as f64;
            dist[i] = (dr * dr + dg * dg + db * db).sqrt();
            mask[i] = u8::from(dist[i] <= params.color_tol);
        }
        let closed = closing(&mask, h, w, params.merge_radius);
        for comp in components(&closed, h, w) {
            if comp.len() < params.min_area {
                continue;
            }
            let mut min_x = usize::MAX;
            let mut min_y = usize::MAX;
            let mut max_x = 0usize;
            let mut max_y = 0usize;
            let mut affinity = 0.0f64;
            for &idx in &comp {
                let (y, x) = (idx / w, idx % w);
                min_x = min_x.min(x);
                min_y = min_y.min(y);
                max_x = max_x.max(x);
                max_y = max_y.max(y);
                // bridged pixels sit beyond the tolerance and contribute 0
                affinity += (1.0 - dist[idx] / params.color_tol).clamp(0.0, 1.0);
            }
            let bbox = Bbox::new(
                min_x as f64,
                min_y as f64,
                max_x as f64 + 1.0,
                max_y as f64 + 1.0,
                class.id(),
            )?;
            dets.push(Detection { bbox, confidence: affinity / comp.len() as f64 });
        }
    }
    dets.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.bbox.x_min.total_cmp(&b.bbox.x_min))
            .then(a.bbox.y_min.total_cmp(&b.bbox.y_min))
            .then(a.bbox.class_id.cmp(&b.bbox.class_id))
    });
    Ok(dets)
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::add_gaussian_noise;

    fn gray_canvas(h: usize, w: usize) -> ImageBuffer {
        ImageBuffer::filled(h, w, 3, 0.5).unwrap()
    }

    fn paint_patch(img: &mut ImageBuffer, x0: usize, y0: usize, size: usize, rgb: [f32; 3]) {
        for y in y0..y0 + size {
            for x in x0..x0 + size {
                for c in 0..3 {
                    img.set(c, y, x, rgb[c]);
                }
            }
        }
    }

    #[test]
    fn solid_patch_detected_exactly() {
        let mut img = gray_canvas(64, 64);
        paint_patch(&mut img, 22, 22, 20, LitterClass::Can.prototype_rgb());
        let dets = detect(&img, &DetectorParams::default()).unwrap();
        assert_eq!(dets.len(), 1);
        let d = &dets[0];
        assert_eq!(d.bbox.class_id, LitterClass::Can.id());
        assert_eq!(
            (d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max),
            (22.0, 22.0, 42.0, 42.0)
        );
        // every patch pixel sits exactly on the prototype
        assert!((d.confidence - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clean_background_yields_nothing() {
        let dets = detect(&gray_canvas(48, 48), &DetectorParams::default()).unwrap();
        assert!(dets.is_empty());
    }

    #[test]
    fn min_area_filters_specks() {
        let mut img = gray_canvas(64, 64);
        paint_patch(&mut img, 10, 10, 3, LitterClass::PlasticBag.prototype_rgb());
        let strict = DetectorParams::default();
        assert!(detect(&img, &strict).unwrap().is_empty());
        let lax = DetectorParams { min_area: 9, merge_radius: 0, ..strict };
        assert_eq!(detect(&img, &lax).unwrap().len(), 1);
    }

    #[test]
    fn closing_bridges_interior_stripe() {
        // A bright 2px stripe splits the mask; closing with radius 2 must
        // reunite the halves into a single full-patch detection.
        let mut img = gray_canvas(64, 64);
        paint_patch(&mut img, 22, 22, 20, LitterClass::Can.prototype_rgb());
        for y in 22..42 {
            for x in 30..32 {
                for c in 0..3 {
                    img.set(c, y, x, 0.95);
                }
            }
        }
        let split = detect(&img, &DetectorParams { merge_radius: 0, ..Default::default() }).unwrap();
        assert_eq!(split.len(), 2, "{:?}", split);
        let merged = detect(&img, &DetectorParams::default()).unwrap();
        assert_eq!(merged.len(), 1);
        let d = &merged[0];
        assert_eq!(
            (d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max),
            (22.0, 22.0, 42.0, 42.0)
        );
        // 40 of 400 pixels are stripe pixels with zero affinity
        assert!((d.confidence - 0.9).abs() < 1e-9, "confidence {}", d.confidence);
    }

    #[test]
    fn results_sorted_by_confidence() {
        let mut img = gray_canvas(96, 96);
        paint_patch(&mut img, 8, 8, 16, LitterClass::Can.prototype_rgb());
        // off-prototype patch scores lower
        let p = LitterClass::PlasticBottle.prototype_rgb();
        paint_patch(&mut img, 60, 60, 16, [p[0] - 0.06, p[1], p[2]]);
        let dets = detect(&img, &DetectorParams::default()).unwrap();
        assert_eq!(dets.len(), 2);
        assert_eq!(dets[0].bbox.class_id, LitterClass::Can.id());
        assert_eq!(dets[1].bbox.class_id, LitterClass::PlasticBottle.id());
        assert!(dets[0].confidence > dets[1].confidence);
        assert!((dets[1].confidence - (1.0 - 0.06 / 0.18)).abs() < 1e-5);
    }

    #[test]
    fn confidence_decays_with_noise() {
        let mut img = gray_canvas(64, 64);
        paint_patch(&mut img, 20, 20, 24, LitterClass::Can.prototype_rgb());
        let params = DetectorParams::default();
        let mut last = f64::INFINITY;
        for (i, sigma) in [0.0, 0.02, 0.05].into_iter().enumerate() {
            let noisy = add_gaussian_noise(&img, sigma, 900 + i as u64).unwrap();
            let dets = detect(&noisy, &params).unwrap();
            assert!(!dets.is_empty(), "sigma {} lost the object", sigma);
            let mean: f64 =
                dets.iter().map(|d| d.confidence).sum::<f64>() / dets.len() as f64;
            assert!(mean <= last + 1e-12, "sigma {} raised confidence", sigma);
            last = mean;
        }
    }

    #[test]
    fn gray_input_rejected() {
        let img = ImageBuffer::filled(32, 32, 1, 0.5).unwrap();
        assert!(matches!(
            detect(&img, &DetectorParams::default()),
            Err(DetectError::BadChannels(1))
        ));
    }

    #[test]
    fn params_validated() {
        let img = gray_canvas(32, 32);
        let bad_tol = DetectorParams { color_tol: 0.0, ..Default::default() };
        assert!(matches!(detect(&img, &bad_tol), Err(DetectError::BadTolerance(_))));
        let bad_tol = DetectorParams { color_tol: 2.0, ..Default::default() };
        assert!(matches!(detect(&img, &bad_tol), Err(DetectError::BadTolerance(_))));
        let bad_area = DetectorParams { min_area: 0, ..Default::default() };
        assert!(matches!(detect(&img, &bad_area), Err(DetectError::ZeroMinArea)));
        let bad_radius = DetectorParams { merge_radius: 17, ..Default::default() };
        assert!(matches!(detect(&img, &bad_radius), Err(DetectError::BadRadius(17))));
    }

    #[test]
    fn generated_background_scene_stays_empty() {
        use crate::scenegen::{generate_scene, SceneConfig};
        let cfg = SceneConfig {
            height: 96,
            width: 96,
            object_count: 0,
            size_range: (16.0, 40.0),
            ..SceneConfig::default()
        };
        let scene = generate_scene(&cfg, 31).unwrap();
        let dets = detect(&scene.image, &DetectorParams::default()).unwrap();
        assert!(dets.is_empty(), "{:?}", dets);
    }

    #[test]
    fn generated_objects_are_found_with_matching_classes() {
        use crate::scenegen::{generate_scene, SceneConfig};
        let cfg = SceneConfig {
            height: 160,
            width: 160,
            object_count: 3,
            size_range: (24.0, 48.0),
            ..SceneConfig::default()
        };
        let scene = generate_scene(&cfg, 12).unwrap();
        let dets = detect(&scene.image, &DetectorParams::default()).unwrap();
        assert_eq!(dets.len(), scene.annotations.len(), "{:?}", dets);
        // every ground-truth box has a same-class detection overlapping it
        for gt in &scene.annotations {
            let hit = dets.iter().any(|d| {
                d.bbox.class_id == gt.class_id
                    && crate::boxeval::iou(&d.bbox, gt).unwrap() > 0.5
            });
            assert!(hit, "missed {:?}", gt);
        }
    }
}
