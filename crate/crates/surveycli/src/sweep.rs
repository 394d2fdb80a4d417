//! The magnification-factor sweep.
//!
//! Every scene in the corpus is cut into tiles.  The HR condition detects on
//! the clean tiles directly; each factor s degrades every tile (blur,
//! decimate by s, noise), brings it back to tile size, scores reconstruction
//! quality against the clean tile, and detects.  Detections are promoted to
//! canvas coordinates, pooled across the corpus, and scored per condition.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use riverlitter::boxeval::{
    confusion_metrics, evaluate, match_detections, Bbox, Detection, EvalError, EvalReport,
};
use riverlitter::quality::{psnr, serde_psnr, ssim, QualityError, SsimParams};
use riverlitter::raster::{bicubic_resize, degrade, read_png, DegradationSpec, RasterError};
use riverlitter::refdetect::{detect, DetectError};
use riverlitter::rng::SplitMix64;
use riverlitter::schema::{write_json, SceneAnnotations, SchemaError};
use riverlitter::srnet::{SrError, SrNetwork};
use riverlitter::tilemap::{globalize_boxes, merge_seam_boxes, tile, TileError, TileGrid};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, SrMethod, SweepConfig};

/// Scenes are pooled into one coordinate space by offsetting each along x.
/// The offset is an integer far above any canvas width, so cross-scene IoU
/// is exactly zero and integer pixel coordinates survive the shift exactly.
const SCENE_OFFSET: f64 = 10_000_000.0;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("corpus {0}: no scene PNGs found")]
    EmptyCorpus(PathBuf),
    #[error("corpus has no ground-truth objects; nothing to score")]
    NoObjects,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Tile(#[from] TileError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Sr(#[from] SrError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// corpus listing
// ---------------------------------------------------------------------------

/// One scene on disk: the rendered image and its ground-truth sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePaths {
    pub image: PathBuf,
    pub annotations: PathBuf,
}

/// Scene files of a corpus directory in name order.  Pairs every
/// `scene_*.png` with its `.json` sidecar; the sidecar is read later, so a
/// missing one surfaces as an I/O error naming the path.
pub fn list_scenes(dir: &Path) -> Result<Vec<ScenePaths>, SweepError> {
    let mut names: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if name.starts_with("scene_") && name.ends_with(".png") {
            names.push(name);
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(SweepError::EmptyCorpus(dir.to_path_buf()));
    }
    Ok(names
        .into_iter()
        .map(|n| {
            let json = format!("{}.json", n.trim_end_matches(".png"));
            ScenePaths { image: dir.join(&n), annotations: dir.join(json) }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// report types
// ---------------------------------------------------------------------------

/// One sweep condition: HR, or one magnification factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub condition: String,
    /// Mean per-tile PSNR; infinite when every tile reconstructs exactly.
    #[serde(with = "serde_psnr")]
    pub psnr_db: f64,
    pub ssim: f64,
    /// Micro-averaged over classes: counts summed, then ratios.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub eval: EvalReport,
    /// Mean confidence over every pooled detection; 0 when there are none.
    pub mean_confidence: f64,
    /// Summed per-scene processing time for this condition.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub scene_count: usize,
    pub total_tiles: usize,
    pub x1_policy: String,
    pub pooling: String,
    pub averaging: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub metadata: SweepMetadata,
    pub rows: Vec<ConditionRow>,
}

impl SweepReport {
    /// Fixed-column CSV, one row per condition.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("condition,psnr_db,ssim,precision,recall,f1,map,mean_confidence,seconds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.condition,
                r.psnr_db,
                r.ssim,
                r.precision,
                r.recall,
                r.f1,
                r.eval.map_score,
                r.mean_confidence,
                r.seconds
            ));
        }
        out
    }

    pub fn save(&self, json_path: &Path, csv_path: &Path) -> Result<(), SweepError> {
        write_json(json_path, self)?;
        std::fs::write(csv_path, self.to_csv())?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// the sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Condition {
    Hr,
    Factor(u32),
}

fn condition_name(c: Condition) -> String {
    match c {
        Condition::Hr => "HR".to_string(),
        Condition::Factor(1) => "x1-LR".to_string(),
        Condition::Factor(s) => format!("x{}-SR", s),
    }
}

/// Per-condition partial results for one scene.
#[derive(Debug, Clone, Default)]
struct CondPartial {
    psnr_sum: f64,
    ssim_sum: f64,
    tiles: usize,
    /// Canvas-coordinate detections (not yet scene-offset).
    dets: Vec<Detection>,
    seconds: f64,
}

#[derive(Debug, Clone)]
struct SceneOutcome {
    gts: Vec<Bbox>,
    conds: Vec<CondPartial>,
}

/// Noise stream for one (scene, tile, factor) cell, independent of worker
/// count and iteration order.
fn tile_noise_seed(seed: u64, scene: usize, tile_index: usize, s: u32) -> u64 {
    let a = SplitMix64::derive(seed, scene as u64);
    let b = SplitMix64::derive(a, tile_index as u64);
    SplitMix64::derive(b, s as u64)
}

fn globalize_dets(
    grid: &TileGrid,
    tile_index: usize,
    dets: &[Detection],
) -> Result<Vec<Detection>, TileError> {
    let boxes: Vec<Bbox> = dets.iter().map(|d| d.bbox).collect();
    let global = globalize_boxes(grid, tile_index, &boxes)?;
    Ok(global
        .into_iter()
        .zip(dets)
        .map(|(bbox, d)| Detection { bbox, confidence: d.confidence })
        .collect())
}

fn process_scene(
    cfg: &SweepConfig,
    scene_idx: usize,
    paths: &ScenePaths,
    net: Option<&SrNetwork>,
) -> Result<SceneOutcome, SweepError> {
    let hr = read_png(&paths.image)?;
    let gts = SceneAnnotations::load(&paths.annotations)?.to_bboxes()?;
    let (grid, hr_tiles) = tile(&hr, cfg.tile_size, cfg.tile_size)?;
    let params = cfg.detector.to_params();
    let ssim_params = SsimParams::for_dynamic_range(1.0);
    let mut conds = vec![CondPartial::default(); 1 + cfg.factors.len()];

    // HR condition: clean tiles, no reconstruction to score against itself.
    let t0 = Instant::now();
    for (ti, t) in hr_tiles.iter().enumerate() {
        let found = detect(t, &params)?;
        conds[0].dets.extend(globalize_dets(&grid, ti, &found)?);
    }
    if cfg.merge_seams {
        conds[0].dets = merge_seam_boxes(&grid, &conds[0].dets, cfg.gap_tol, cfg.span_overlap)?;
    }
    conds[0].psnr_sum = f64::INFINITY;
    conds[0].ssim_sum = hr_tiles.len() as f64;
    conds[0].tiles = hr_tiles.len();
    conds[0].seconds = t0.elapsed().as_secs_f64();

    for (fi, &s) in cfg.factors.iter().enumerate() {
        let ci = 1 + fi;
        let t0 = Instant::now();
        for (ti, hr_tile) in hr_tiles.iter().enumerate() {
            let spec = DegradationSpec {
                blur_length: cfg.blur_length,
                blur_angle: cfg.blur_angle,
                scale_s: s,
                noise_sigma: cfg.noise_sigma,
                seed: tile_noise_seed(cfg.seed, scene_idx, ti, s),
            };
            let lr = degrade(hr_tile, &spec)?;
            // Factor 1 is the degraded-only floor: already tile-sized, no
            // reconstruction pass.
            let recon = if s == 1 {
                lr
            } else {
                match net {
                    Some(n) => n.super_resolve_to(&lr, cfg.tile_size, cfg.tile_size)?,
                    None => bicubic_resize(&lr, cfg.tile_size, cfg.tile_size)?,
                }
            };
            conds[ci].psnr_sum += psnr(hr_tile, &recon, 1.0)?;
            conds[ci].ssim_sum += ssim(hr_tile, &recon, &ssim_params)?;
            conds[ci].tiles += 1;
            let found = detect(&recon, &params)?;
            conds[ci].dets.extend(globalize_dets(&grid, ti, &found)?);
        }
        if cfg.merge_seams {
            conds[ci].dets =
                merge_seam_boxes(&grid, &conds[ci].dets, cfg.gap_tol, cfg.span_overlap)?;
        }
        conds[ci].seconds = t0.elapsed().as_secs_f64();
    }
    Ok(SceneOutcome { gts, conds })
}

/// Micro confusion counts: TP/FP/FN summed over classes.  Detections of
/// classes with no ground truth anywhere count as false positives.
pub(crate) fn micro_counts(
    dets_by_class: &BTreeMap<u32, Vec<Detection>>,
    gts_by_class: &BTreeMap<u32, Vec<Bbox>>,
    iou_thresh: f64,
) -> Result<(usize, usize, usize), EvalError> {
    let (mut tp, mut fp, mut fn_count) = (0, 0, 0);
    for (class_id, gts) in gts_by_class {
        static NO_DETS: Vec<Detection> = Vec::new();
        let dets = dets_by_class.get(class_id).unwrap_or(&NO_DETS);
        let outcome = match_detections(dets, gts, iou_thresh)?;
        let t = outcome.is_tp.iter().filter(|x| **x).count();
        tp += t;
        fp += dets.len() - t;
        fn_count += outcome.fn_count;
    }
    for (class_id, dets) in dets_by_class {
        if !gts_by_class.contains_key(class_id) {
            fp += dets.len();
        }
    }
    Ok((tp, fp, fn_count))
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport, SweepError> {
    cfg.validate()?;
    let scenes = list_scenes(&cfg.corpus)?;
    let net = match &cfg.sr_method {
        SrMethod::Network { checkpoint } => Some(SrNetwork::load_checkpoint(checkpoint)?),
        SrMethod::Bicubic => None,
    };

    let outcomes = run_scenes(cfg, &scenes, net.as_ref())?;

    let conditions: Vec<Condition> = std::iter::once(Condition::Hr)
        .chain(cfg.factors.iter().map(|&s| Condition::Factor(s)))
        .collect();
    let mut rows = Vec::with_capacity(conditions.len());
    for (ci, &cond) in conditions.iter().enumerate() {
        let mut dets_by_class: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
        let mut gts_by_class: BTreeMap<u32, Vec<Bbox>> = BTreeMap::new();
        let (mut psnr_sum, mut ssim_sum, mut tiles, mut seconds) = (0.0, 0.0, 0usize, 0.0);
        let (mut conf_sum, mut conf_n) = (0.0, 0usize);
        for (si, outcome) in outcomes.iter().enumerate() {
            let off = si as f64 * SCENE_OFFSET;
            for g in &outcome.gts {
                gts_by_class.entry(g.class_id).or_default().push(g.translated(off, 0.0));
            }
            let part = &outcome.conds[ci];
            psnr_sum += part.psnr_sum;
            ssim_sum += part.ssim_sum;
            tiles += part.tiles;
            seconds += part.seconds;
            for d in &part.dets {
                conf_sum += d.confidence;
                conf_n += 1;
                dets_by_class
                    .entry(d.bbox.class_id)
                    .or_default()
                    .push(Detection { bbox: d.bbox.translated(off, 0.0), ..*d });
            }
        }
        if gts_by_class.is_empty() {
            return Err(SweepError::NoObjects);
        }
        let eval = evaluate(&dets_by_class, &gts_by_class, cfg.iou_thresh)?;
        let (tp, fp, fn_count) = micro_counts(&dets_by_class, &gts_by_class, cfg.iou_thresh)?;
        let confusion = confusion_metrics(tp, fp, fn_count);
        rows.push(ConditionRow {
            condition: condition_name(cond),
            psnr_db: psnr_sum / tiles as f64,
            ssim: ssim_sum / tiles as f64,
            precision: confusion.precision,
            recall: confusion.recall,
            f1: confusion.f1,
            eval,
            mean_confidence: if conf_n > 0 { conf_sum / conf_n as f64 } else { 0.0 },
            seconds,
        });
    }

    let total_tiles = outcomes.iter().map(|o| o.conds[0].tiles).sum();
    Ok(SweepReport {
        config: cfg.clone(),
        metadata: SweepMetadata {
            scene_count: scenes.len(),
            total_tiles,
            x1_policy: "factor 1 applies blur and noise at native resolution with no \
                        reconstruction pass; its tiles are already at tile_size, so the \
                        resolution-equalizing upsample is the identity"
                .to_string(),
            pooling: "detections and ground truth are pooled across scenes by offsetting \
                      each scene 1e7 px along x, so matching never crosses scenes"
                .to_string(),
            averaging: "precision/recall/f1 are micro-averaged over classes; map is the \
                        mean of per-class average precision"
                .to_string(),
        },
        rows,
    })
}

/// Fan scenes out over `cfg.threads` workers.  Workers own contiguous index
/// ranges and write into per-scene slots, so the aggregate is identical for
/// every thread count.
fn run_scenes(
    cfg: &SweepConfig,
    scenes: &[ScenePaths],
    net: Option<&SrNetwork>,
) -> Result<Vec<SceneOutcome>, SweepError> {
    if cfg.threads <= 1 || scenes.len() <= 1 {
        return scenes
            .iter()
            .enumerate()
            .map(|(i, p)| process_scene(cfg, i, p, net))
            .collect();
    }
    let workers = cfg.threads.min(scenes.len());
    let per = scenes.len().div_ceil(workers);
    let mut slots: Vec<Option<Result<SceneOutcome, SweepError>>> =
        (0..scenes.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (w, chunk) in slots.chunks_mut(per).enumerate() {
            scope.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    let i = w * per + k;
                    *slot = Some(process_scene(cfg, i, &scenes[i], net));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every slot filled")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use riverlitter::scenegen::{generate_corpus, SceneConfig};

    fn tiny_corpus(dir: &Path, scenes: usize, seed: u64) {
        let cfg = SceneConfig {
            height: 64,
            width: 64,
            object_count: 2,
            size_range: (12.0, 24.0),
            ..SceneConfig::default()
        };
        generate_corpus(dir, &cfg, scenes, seed).unwrap();
    }

    fn tmpdir(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("svc-sweep-{}-{}", tag, std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn row_count_and_names_follow_factors() {
        let dir = tmpdir("rows");
        tiny_corpus(&dir, 2, 5);
        let cfg = SweepConfig {
            corpus: dir.clone(),
            tile_size: 64,
            factors: vec![2, 4],
            ..SweepConfig::default()
        };
        let report = run_sweep(&cfg).unwrap();
        let names: Vec<&str> = report.rows.iter().map(|r| r.condition.as_str()).collect();
        assert_eq!(names, ["HR", "x2-SR", "x4-SR"]);
        assert_eq!(report.metadata.scene_count, 2);
        assert_eq!(report.metadata.total_tiles, 2);
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with(
            "condition,psnr_db,ssim,precision,recall,f1,map,mean_confidence,seconds\n"
        ));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn identity_degradation_matches_hr_row() {
        let dir = tmpdir("ident");
        tiny_corpus(&dir, 2, 9);
        let cfg = SweepConfig {
            corpus: dir.clone(),
            tile_size: 64,
            factors: vec![1],
            blur_length: 1,
            noise_sigma: 0.0,
            ..SweepConfig::default()
        };
        let report = run_sweep(&cfg).unwrap();
        let hr = &report.rows[0];
        let x1 = &report.rows[1];
        assert_eq!(x1.condition, "x1-LR");
        assert!(hr.psnr_db.is_infinite() && x1.psnr_db.is_infinite());
        assert!((hr.ssim - x1.ssim).abs() < 1e-6);
        assert_eq!(x1.ssim, 1.0);
        for (a, b) in [
            (hr.precision, x1.precision),
            (hr.recall, x1.recall),
            (hr.f1, x1.f1),
            (hr.eval.map_score, x1.eval.map_score),
            (hr.mean_confidence, x1.mean_confidence),
        ] {
            assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn reports_are_thread_count_invariant() {
        let dir = tmpdir("threads");
        tiny_corpus(&dir, 3, 21);
        let base = SweepConfig {
            corpus: dir.clone(),
            tile_size: 32,
            factors: vec![1, 2],
            ..SweepConfig::default()
        };
        let one = run_sweep(&base).unwrap();
        let three = run_sweep(&SweepConfig { threads: 3, ..base }).unwrap();
        let strip = |mut r: SweepReport| {
            r.config.threads = 0;
            for row in &mut r.rows {
                row.seconds = 0.0;
            }
            r
        };
        assert_eq!(strip(one), strip(three));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn missing_corpus_and_missing_checkpoint_error() {
        let cfg = SweepConfig {
            corpus: PathBuf::from("/nonexistent/corpus"),
            ..SweepConfig::default()
        };
        assert!(matches!(run_sweep(&cfg), Err(SweepError::Io(_))));

        let dir = tmpdir("ckpt");
        tiny_corpus(&dir, 1, 3);
        let cfg = SweepConfig {
            corpus: dir.clone(),
            tile_size: 64,
            factors: vec![2],
            sr_method: SrMethod::Network { checkpoint: dir.join("absent.srnc") },
            ..SweepConfig::default()
        };
        match run_sweep(&cfg) {
            Err(SweepError::Sr(_)) => {}
            other => panic!("expected checkpoint error, got {:?}", other.map(|_| ())),
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn micro_counts_pool_classes_and_orphan_detections() {
        let gt = |x: f64, class_id: u32| Bbox {
            x_min: x,
            y_min: 0.0,
            x_max: x + 10.0,
            y_max: 10.0,
            class_id,
        };
        let det = |b: Bbox, confidence: f64| Detection { bbox: b, confidence };
        let mut gts: BTreeMap<u32, Vec<Bbox>> = BTreeMap::new();
        gts.insert(0, vec![gt(0.0, 0), gt(20.0, 0)]);
        gts.insert(1, vec![gt(40.0, 1)]);
        let mut dets: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
        // class 0: one hit, one miss elsewhere; class 1 unmatched; class 2
        // has no ground truth at all.
        dets.insert(0, vec![det(gt(0.0, 0), 0.9), det(gt(100.0, 0), 0.8)]);
        dets.insert(2, vec![det(gt(60.0, 2), 0.7)]);
        let (tp, fp, fn_count) = micro_counts(&dets, &gts, 0.5).unwrap();
        assert_eq!((tp, fp, fn_count), (1, 2, 2));
    }
}
