//! Procedural riverbank survey scenes: a textured sediment background with
//! seeded litter shapes painted on top, plus tight ground-truth boxes from
//! the pixels each shape actually touched.
//!
//! Everything derives from one scene seed through labeled child streams,
//! so a scene is a pure function of (config, seed) and corpora regenerate
//! byte-identically.

use std::f64::consts::PI;
use std::path::Path;

use thiserror::Error;

use crate::boxeval::{iou, Bbox, EvalError};
use crate::classes::LitterClass;
use crate::raster::{write_png, ImageBuffer, RasterError};
use crate::rng::SplitMix64;
use crate::schema::{sha256_file, CorpusManifest, ManifestEntry, SceneAnnotations, SchemaError};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("canvas {height}x{width} too small (min 32)")]
    BadCanvas { height: usize, width: usize },
    #[error("class weights must be finite, non-negative, not all zero")]
    BadWeights,
    #[error("size range ({lo}, {hi}) invalid for this canvas")]
    BadSizeRange { lo: f64, hi: f64 },
    #[error("max overlap {0} must be in [0, 1]")]
    BadOverlap(f64),
    #[error("background params out of range")]
    BadBackground,
    #[error("placed only {placed} of {requested} objects before overlap budget ran out")]
    Capacity { placed: usize, requested: usize },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

/// Riverbed texture: a muddy olive base modulated by a few octaves of
/// smooth value noise.  The base color sits well away from every litter
/// prototype so an undisturbed background yields zero detections.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundParams {
    pub base_rgb: [f64; 3],
    pub octaves: usize,
    pub amplitude: f64,
}

impl Default for BackgroundParams {
    fn default() -> Self {
        BackgroundParams { base_rgb: [0.28, 0.33, 0.20], octaves: 3, amplitude: 0.04 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub object_count: usize,
    /// Relative draw weight per class, indexed by class id.  Zero excludes
    /// a class.
    pub class_weights: [f64; 4],
    /// Object diagonal extent in pixels, sampled uniformly.
    pub size_range: (f64, f64),
    pub background: BackgroundParams,
    /// Maximum tolerated overlap between placement footprints.
    pub max_overlap_iou: f64,
    /// Rejection-sampling budget per object.
    pub max_placement_tries: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            height: 512,
            width: 512,
            object_count: 5,
            class_weights: [1.0; 4],
            size_range: (32.0, 96.0),
            background: BackgroundParams::default(),
            max_overlap_iou: 0.1,
            max_placement_tries: 1000,
        }
    }
}

impl SceneConfig {
    fn validate(&self) -> Result<(), SceneError> {
        if self.height < 32 || self.width < 32 {
            return Err(SceneError::BadCanvas { height: self.height, width: self.width });
        }
        let w = &self.class_weights;
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(SceneError::BadWeights);
        }
        let (lo, hi) = self.size_range;
        let cap = self.height.min(self.width) as f64 / 2.0;
        if !lo.is_finite() || !hi.is_finite() || lo < 8.0 || hi < lo || hi > cap {
            return Err(SceneError::BadSizeRange { lo, hi });
        }
        if !(0.0..=1.0).contains(&self.max_overlap_iou) {
            return Err(SceneError::BadOverlap(self.max_overlap_iou));
        }
        let bg = &self.background;
        if bg.octaves == 0
            || bg.octaves > 8
            || !(0.0..=0.3).contains(&bg.amplitude)
            || bg.base_rgb.iter().any(|c| !(0.0..=1.0).contains(c))
        {
            return Err(SceneError::BadBackground);
        }
        Ok(())
    }
}

/// One generated scene with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: ImageBuffer,
    pub annotations: Vec<Bbox>,
}

// ---------------------------------------------------------------------------
// background texture
// ---------------------------------------------------------------------------

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Bilinear value noise in [-1, 1] on a `cell`-pixel lattice.
fn value_noise_field(h: usize, w: usize, cell: usize, seed: u64) -> Vec<f64> {
    let gw = w / cell + 2;
    let gh = h / cell + 2;
    let mut rng = SplitMix64::new(seed);
    let lattice: Vec<f64> = (0..gh * gw).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
    let mut out = vec![0.0f64; h * w];
    for y in 0..h {
        let fy = y as f64 / cell as f64;
        let gy = fy as usize;
        let ty = smoothstep(fy - gy as f64);
        for x in 0..w {
            let fx = x as f64 / cell as f64;
            let gx = fx as usize;
            let tx = smoothstep(fx - gx as f64);
            let v00 = lattice[gy * gw + gx];
            let v01 = lattice[gy * gw + gx + 1];
            let v10 = lattice[(gy + 1) * gw + gx];
            let v11 = lattice[(gy + 1) * gw + gx + 1];
            let top = v00 + (v01 - v00) * tx;
            let bot = v10 + (v11 - v10) * tx;
            out[y * w + x] = top + (bot - top) * ty;
        }
    }
    out
}

fn render_background(cfg: &SceneConfig, seed: u64) -> ImageBuffer {
    let (h, w) = (cfg.height, cfg.width);
    let bg = &cfg.background;
    let mut luma = vec![0.0f64; h * w];
    let mut total = 0.0f64;
    for o in 0..bg.octaves {
        let cell = (24usize >> o).max(3);
        let weight = 0.5f64.powi(o as i32);
        let field = value_noise_field(h, w, cell, SplitMix64::derive(seed, 0xB9 + o as u64));
        for (acc, v) in luma.iter_mut().zip(&field) {
            *acc += weight * v;
        }
        total += weight;
    }
    for v in &mut luma {
        *v /= total;
    }
    // faint independent per-channel tint keeps the bed from looking flat
    let tint: Vec<Vec<f64>> = (0..3)
        .map(|c| value_noise_field(h, w, 17, SplitMix64::derive(seed, 0xD0 + c as u64)))
        .collect();
    let mut img = ImageBuffer::zeros(h, w, 3).expect("validated dims");
    for c in 0..3 {
        let plane = img.plane_mut(c);
        for i in 0..h * w {
            let v = bg.base_rgb[c] + bg.amplitude * luma[i] + 0.25 * bg.amplitude * tint[c][i];
            plane[i] = v.clamp(0.0, 1.0) as f32;
        }
    }
    img
}

// ---------------------------------------------------------------------------
// shape painting
// ---------------------------------------------------------------------------

/// Pixel bounds actually touched by one painted shape.
struct PaintExtent {
    min_x: usize,
    min_y: usize,
    max_x: usize,
    max_y: usize,
    count: usize,
}

impl PaintExtent {
    fn new() -> PaintExtent {
        PaintExtent { min_x: usize::MAX, min_y: usize::MAX, max_x: 0, max_y: 0, count: 0 }
    }

    fn touch(&mut self, x: usize, y: usize) {
        self.min_x = self.min_x.min(x);
        self.min_y = self.min_y.min(y);
        self.max_x = self.max_x.max(x);
        self.max_y = self.max_y.max(y);
        self.count += 1;
    }

    fn to_bbox(&self, class_id: u32) -> Result<Bbox, EvalError> {
        Bbox::new(
            self.min_x as f64,
            self.min_y as f64,
            self.max_x as f64 + 1.0,
            self.max_y as f64 + 1.0,
            class_id,
        )
    }
}

fn put(img: &mut ImageBuffer, ext: &mut PaintExtent, x: i64, y: i64, rgb: [f64; 3]) {
    if x < 0 || y < 0 || x >= img.width() as i64 || y >= img.height() as i64 {
        return;
    }
    for c in 0..3 {
        img.set(c, y as usize, x as usize, rgb[c] as f32);
    }
    ext.touch(x as usize, y as usize);
}

fn jitter(rng: &mut SplitMix64, spread: f64) -> f64 {
    (rng.next_f64() * 2.0 - 1.0) * spread
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

fn shade(base: [f64; 3], factor: f64, noise: f64) -> [f64; 3] {
    [
        (base[0] * factor + noise).clamp(0.0, 1.0),
        (base[1] * factor + noise).clamp(0.0, 1.0),
        (base[2] * factor + noise).clamp(0.0, 1.0),
    ]
}

const SPECULAR_WHITE: [f64; 3] = [0.95, 0.97, 0.92];

/// Footprint (width, height) a shape of diagonal `d` may occupy, used for
/// placement before any pixel is painted.
fn footprint(class: LitterClass, d: f64) -> (f64, f64) {
    match class {
        LitterClass::PlasticBottle => (d * 0.36, d * 0.78 + d * 0.26),
        LitterClass::GlassBottle => (d * 0.30, d * 0.80 + d * 0.28),
        LitterClass::Can => (d * 0.82, d * 0.46),
        // max bag radius is r0 * (0.72 + 0.43) with r0 = 0.475 d
        LitterClass::PlasticBag => (d * 1.10, d * 1.10),
    }
}

fn paint_object(
    img: &mut ImageBuffer,
    class: LitterClass,
    cx: f64,
    cy: f64,
    d: f64,
    rng: &mut SplitMix64,
) -> PaintExtent {
    let proto = class.prototype_rgb();
    let base = [
        (proto[0] as f64 + jitter(rng, 0.03)).clamp(0.0, 1.0),
        (proto[1] as f64 + jitter(rng, 0.03)).clamp(0.0, 1.0),
        (proto[2] as f64 + jitter(rng, 0.03)).clamp(0.0, 1.0),
    ];
    match class {
        LitterClass::PlasticBottle => paint_bottle(img, cx, cy, d, base, rng, false),
        LitterClass::GlassBottle => paint_bottle(img, cx, cy, d, base, rng, true),
        LitterClass::Can => paint_can(img, cx, cy, d, base, rng),
        LitterClass::PlasticBag => paint_bag(img, cx, cy, d, base, rng),
    }
}

/// Upright bottle: superellipse body, rectangular neck and cap on top.
/// Glass gets a partial-height specular stripe that stays connected to
/// the body above and below.
fn paint_bottle(
    img: &mut ImageBuffer,
    cx: f64,
    cy: f64,
    d: f64,
    base: [f64; 3],
    rng: &mut SplitMix64,
    glass: bool,
) -> PaintExtent {
    let (bw, bh) = if glass { (d * 0.30, d * 0.80) } else { (d * 0.36, d * 0.78) };
    let neck_h = if glass { d * 0.22 } else { d * 0.20 };
    let cap_h = d * 0.06;
    let neck_w = bw * 0.42;
    let cap_w = bw * 0.52;
    // body center sits below the overall center so neck + cap fit on top
    let body_cy = cy + (neck_h + cap_h) / 2.0;
    let top_of_body = body_cy - bh / 2.0;

    let stripe_x0 = -0.30 * bw;
    let stripe_w = (0.12 * bw).max(1.5);
    let mut ext = PaintExtent::new();
    let x_lo = (cx - bw / 2.0).floor() as i64;
    let x_hi = (cx + bw / 2.0).ceil() as i64;
    let y_lo = (top_of_body - neck_h - cap_h).floor() as i64;
    let y_hi = (body_cy + bh / 2.0).ceil() as i64;
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - body_cy;
            let in_body = {
                let nx = (dx / (bw / 2.0)).abs();
                let ny = (dy / (bh / 2.0)).abs();
                nx.powi(3) + ny.powi(3) <= 1.0
            };
            let y_rel = y as f64 + 0.5;
            let in_neck = y_rel >= top_of_body - neck_h
                && y_rel < top_of_body + 1.0
                && dx.abs() <= neck_w / 2.0;
            let in_cap = y_rel >= top_of_body - neck_h - cap_h
                && y_rel < top_of_body - neck_h + 1.0
                && dx.abs() <= cap_w / 2.0;
            if !(in_body || in_neck || in_cap) {
                continue;
            }
            let t = (y_rel - (body_cy - bh / 2.0)) / bh;
            let mut rgb = shade(base, 0.92 + 0.12 * t.clamp(0.0, 1.0), jitter(rng, 0.015));
            if glass
                && in_body
                && dx >= stripe_x0
                && dx < stripe_x0 + stripe_w
                && dy > -0.30 * bh
                && dy < 0.35 * bh
            {
                rgb = mix(rgb, SPECULAR_WHITE, 0.55);
            }
            put(img, &mut ext, x, y, rgb);
        }
    }
    ext
}

/// Can lying on its side: boxy superellipse with a brighter rim band at
/// one end.
fn paint_can(
    img: &mut ImageBuffer,
    cx: f64,
    cy: f64,
    d: f64,
    base: [f64; 3],
    rng: &mut SplitMix64,
) -> PaintExtent {
    let w = d * 0.82;
    let h = d * 0.46;
    let rim_side = rng.next_below(2) == 0;
    let mut ext = PaintExtent::new();
    let x_lo = (cx - w / 2.0).floor() as i64;
    let x_hi = (cx + w / 2.0).ceil() as i64;
    let y_lo = (cy - h / 2.0).floor() as i64;
    let y_hi = (cy + h / 2.0).ceil() as i64;
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let nx = (dx / (w / 2.0)).abs();
            let ny = (dy / (h / 2.0)).abs();
            if nx.powi(4) + ny.powi(4) > 1.0 {
                continue;
            }
            let mut rgb = shade(base, 0.95 + 0.10 * (0.5 - ny / 2.0), jitter(rng, 0.015));
            let rim = if rim_side { nx > 0.84 && dx > 0.0 } else { nx > 0.84 && dx < 0.0 };
            if rim {
                rgb = mix(rgb, [0.85, 0.85, 0.82], 0.35);
            }
            put(img, &mut ext, x, y, rgb);
        }
    }
    ext
}

/// Crumpled bag: star-shaped blob, radius modulated by a few random
/// harmonics so no two bags share an outline.
fn paint_bag(
    img: &mut ImageBuffer,
    cx: f64,
    cy: f64,
    d: f64,
    base: [f64; 3],
    rng: &mut SplitMix64,
) -> PaintExtent {
    let r0 = d * 0.475;
    let a2 = 0.08 + rng.next_f64() * 0.12;
    let a3 = 0.05 + rng.next_f64() * 0.10;
    let a5 = 0.02 + rng.next_f64() * 0.06;
    let p2 = rng.next_f64() * 2.0 * PI;
    let p3 = rng.next_f64() * 2.0 * PI;
    let p5 = rng.next_f64() * 2.0 * PI;
    let radius = |phi: f64| {
        r0 * (0.72 + a2 * (2.0 * phi + p2).sin() + a3 * (3.0 * phi + p3).sin()
            + a5 * (5.0 * phi + p5).sin())
    };
    let mut ext = PaintExtent::new();
    let reach = (r0 * 1.15).ceil() as i64;
    let x_c = cx.round() as i64;
    let y_c = cy.round() as i64;
    for y in y_c - reach..=y_c + reach {
        for x in x_c - reach..=x_c + reach {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let dist = (dx * dx + dy * dy).sqrt();
            if dist > radius(dy.atan2(dx)) {
                continue;
            }
            let rgb = shade(base, 0.96 + 0.06 * (dist / r0), jitter(rng, 0.025));
            put(img, &mut ext, x, y, rgb);
        }
    }
    ext
}

// ---------------------------------------------------------------------------
// scene assembly
// ---------------------------------------------------------------------------

fn pick_class(weights: &[f64; 4], rng: &mut SplitMix64) -> LitterClass {
    let total: f64 = weights.iter().sum();
    let mut r = rng.next_f64() * total;
    for (i, &w) in weights.iter().enumerate() {
        if r < w {
            return LitterClass::from_id(i as u32).unwrap();
        }
        r -= w;
    }
    // only reachable through accumulated rounding at the very top end
    *LitterClass::ALL
        .iter()
        .rev()
        .find(|c| weights[c.id() as usize] > 0.0)
        .unwrap()
}

/// Generate one scene.  The result is a pure function of (cfg, seed).
pub fn generate_scene(cfg: &SceneConfig, seed: u64) -> Result<Scene, SceneError> {
    cfg.validate()?;
    let mut image = render_background(cfg, SplitMix64::derive(seed, 0x0001));
    let mut rng = SplitMix64::new(SplitMix64::derive(seed, 0x0002));
    let mut placed_footprints: Vec<Bbox> = Vec::new();
    let mut annotations: Vec<Bbox> = Vec::new();
    for obj in 0..cfg.object_count {
        let mut placed = false;
        for _ in 0..cfg.max_placement_tries {
            let class = pick_class(&cfg.class_weights, &mut rng);
            let d = cfg.size_range.0 + rng.next_f64() * (cfg.size_range.1 - cfg.size_range.0);
            let (fw, fh) = footprint(class, d);
            let margin = 3.0;
            let span_x = cfg.width as f64 - fw - 2.0 * margin;
            let span_y = cfg.height as f64 - fh - 2.0 * margin;
            if span_x <= 0.0 || span_y <= 0.0 {
                continue;
            }
            let cx = margin + fw / 2.0 + rng.next_f64() * span_x;
            let cy = margin + fh / 2.0 + rng.next_f64() * span_y;
            let candidate = Bbox::new(
                cx - fw / 2.0,
                cy - fh / 2.0,
                cx + fw / 2.0,
                cy + fh / 2.0,
                class.id(),
            )?;
            let crowded = placed_footprints
                .iter()
                .map(|b| iou(b, &candidate).expect("validated footprints"))
                .any(|v| v > cfg.max_overlap_iou);
            if crowded {
                continue;
            }
            let ext = paint_object(&mut image, class, cx, cy, d, &mut rng);
            debug_assert!(ext.count > 0, "a shape of diagonal >= 8 always paints pixels");
            annotations.push(ext.to_bbox(class.id())?);
            placed_footprints.push(candidate);
            placed = true;
            break;
        }
        if !placed {
            return Err(SceneError::Capacity { placed: obj, requested: cfg.object_count });
        }
    }
    Ok(Scene { image, annotations })
}

// ---------------------------------------------------------------------------
// corpus
// ---------------------------------------------------------------------------

/// Generate `count` scenes into `dir` (seeds `base_seed + index`), writing
/// a PNG and annotation JSON per scene plus a digest manifest.  Returns
/// the manifest, which is also written as `manifest.json`.
pub fn generate_corpus(
    dir: &Path,
    cfg: &SceneConfig,
    count: usize,
    base_seed: u64,
) -> Result<CorpusManifest, SceneError> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(count * 2);
    for i in 0..count {
        let scene = generate_scene(cfg, base_seed + i as u64)?;
        let png_name = format!("scene_{:04}.png", i);
        let json_name = format!("scene_{:04}.json", i);
        let png_path = dir.join(&png_name);
        write_png(&png_path, &scene.image)?;
        let ann = SceneAnnotations::new(&png_name, cfg.height, cfg.width, &scene.annotations)?;
        let json_path = dir.join(&json_name);
        ann.save(&json_path)?;
        entries.push(ManifestEntry { file: png_name, sha256: sha256_file(&png_path)? });
        entries.push(ManifestEntry { file: json_name, sha256: sha256_file(&json_path)? });
    }
    entries.sort_by(|a, b| a.file.cmp(&b.file));
    let manifest = CorpusManifest {
        seed: base_seed,
        scene_count: count,
        height: cfg.height,
        width: cfg.width,
        entries,
    };
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
