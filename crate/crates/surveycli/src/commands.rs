//! One function per subcommand, shared by the binary and the tests.  Each
//! takes a resolved config, does the work, writes its artifacts, and returns
//! what it produced.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use riverlitter::boxeval::{confusion_metrics, evaluate, Bbox, Detection, EvalReport};
use riverlitter::raster::{bicubic_resize, degrade, read_png, write_png, DegradationSpec};
use riverlitter::refdetect::detect;
use riverlitter::rng::SplitMix64;
use riverlitter::scenegen::{generate_corpus, SceneConfig};
use riverlitter::schema::{write_json, CorpusManifest, DetectionSet, SceneAnnotations};
use riverlitter::srnet::{train, SrNetwork, TrainConfig};
use riverlitter::tilemap::tile;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::config::{
    DetectCliConfig, EvalCliConfig, GenConfig, MapCliConfig, SrCliConfig, SrMethod,
    TrainCliConfig,
};
use crate::mapview::{render_map, MapOptions};
use crate::sweep::{list_scenes, micro_counts};

// Stream labels for deriving independent child seeds from one run seed.
const LBL_NOISE: u64 = 0x6e6f_6973_65;
const LBL_INIT: u64 = 0x696e_6974;
const LBL_SHUFFLE: u64 = 0x7368_7566;

pub fn run_gen(cfg: &GenConfig, out_dir: &Path) -> Result<CorpusManifest> {
    let scene_cfg = SceneConfig {
        height: cfg.height,
        width: cfg.width,
        object_count: cfg.objects,
        size_range: (cfg.size_min, cfg.size_max),
        ..SceneConfig::default()
    };
    let manifest = generate_corpus(out_dir, &scene_cfg, cfg.scenes, cfg.seed)
        .with_context(|| format!("generating corpus in {}", out_dir.display()))?;
    Ok(manifest)
}

/// Checkpoint sidecar: the exact run configuration and the loss trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub config: TrainCliConfig,
    pub pair_count: usize,
    pub epoch_losses: Vec<f64>,
}

pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub log: TrainingLog,
}

pub fn run_train(cfg: &TrainCliConfig, out_dir: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    let scenes = list_scenes(&cfg.corpus)?;
    let mut pairs = Vec::new();
    'scenes: for (si, paths) in scenes.iter().enumerate() {
        let hr = read_png(&paths.image)?;
        let (_, tiles) = tile(&hr, cfg.tile, cfg.tile)?;
        for (ti, hr_tile) in tiles.into_iter().enumerate() {
            let seed_scene = SplitMix64::derive(SplitMix64::derive(cfg.seed, LBL_NOISE), si as u64);
            let spec = DegradationSpec {
                blur_length: cfg.blur_length,
                blur_angle: cfg.blur_angle,
                scale_s: cfg.scale,
                noise_sigma: cfg.noise_sigma,
                seed: SplitMix64::derive(seed_scene, ti as u64),
            };
            let lr = degrade(&hr_tile, &spec)?;
            pairs.push((lr, hr_tile));
            if cfg.max_pairs > 0 && pairs.len() == cfg.max_pairs {
                break 'scenes;
            }
        }
    }
    let mut net = SrNetwork::new(3, SplitMix64::derive(cfg.seed, LBL_INIT))?;
    let train_cfg = TrainConfig {
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        halving_interval: cfg.halving_interval,
        seed: SplitMix64::derive(cfg.seed, LBL_SHUFFLE),
        ..TrainConfig::default()
    };
    let report = train(&mut net, &pairs, &train_cfg)?;
    fs::create_dir_all(out_dir)?;
    let checkpoint = out_dir.join("model.srnc");
    net.save_checkpoint(&checkpoint)?;
    let log = TrainingLog {
        config: cfg.clone(),
        pair_count: pairs.len(),
        epoch_losses: report.epoch_losses,
    };
    write_json(&out_dir.join("training.json"), &log)?;
    Ok(TrainOutcome { checkpoint, log })
}

pub fn run_sr(cfg: &SrCliConfig) -> Result<(usize, usize)> {
    cfg.validate()?;
    let lr = read_png(&cfg.input)?;
    let s = cfg.scale as usize;
    let out = match &cfg.sr_method {
        SrMethod::Bicubic => bicubic_resize(&lr, lr.height() * s, lr.width() * s)?,
        SrMethod::Network { checkpoint } => {
            SrNetwork::load_checkpoint(checkpoint)?.super_resolve(&lr, s)?
        }
    };
    write_png(&cfg.output, &out)?;
    Ok((out.height(), out.width()))
}

pub fn run_detect(cfg: &DetectCliConfig) -> Result<DetectionSet> {
    cfg.validate()?;
    let img = read_png(&cfg.input)?;
    let dets = detect(&img, &cfg.detector.to_params())?;
    let name = cfg
        .input
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let set = DetectionSet::new(&name, img.height(), img.width(), &dets)?;
    set.save(&cfg.output)?;
    Ok(set)
}

fn dets_by_class(dets: &[Detection]) -> BTreeMap<u32, Vec<Detection>> {
    let mut out: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        out.entry(d.bbox.class_id).or_default().push(*d);
    }
    out
}

fn gts_by_class(gts: &[Bbox]) -> BTreeMap<u32, Vec<Bbox>> {
    let mut out: BTreeMap<u32, Vec<Bbox>> = BTreeMap::new();
    for g in gts {
        out.entry(g.class_id).or_default().push(*g);
    }
    out
}

pub fn run_eval(cfg: &EvalCliConfig, out_dir: &Path) -> Result<EvalReport> {
    cfg.validate()?;
    let dets = DetectionSet::load(&cfg.detections)?.to_detections()?;
    let gts = SceneAnnotations::load(&cfg.annotations)?.to_bboxes()?;
    let det_map = dets_by_class(&dets);
    let gt_map = gts_by_class(&gts);
    let report = evaluate(&det_map, &gt_map, cfg.iou_thresh)?;
    fs::create_dir_all(out_dir)?;
    write_json(&out_dir.join("eval.json"), &report)?;
    let (tp, fp, fn_count) = micro_counts(&det_map, &gt_map, cfg.iou_thresh)?;
    let c = confusion_metrics(tp, fp, fn_count);
    let csv = format!(
        "map,precision,recall,f1\n{},{},{},{}\n",
        report.map_score, c.precision, c.recall, c.f1
    );
    fs::write(out_dir.join("eval.csv"), csv)?;
    Ok(report)
}

pub struct MapOutcome {
    pub image_path: PathBuf,
    pub sidecar_path: PathBuf,
    pub boxes: Vec<Detection>,
}

pub fn run_map(cfg: &MapCliConfig, out_dir: &Path) -> Result<MapOutcome> {
    cfg.validate()?;
    let pano = read_png(&cfg.panorama)?;
    let dets = DetectionSet::load(&cfg.detections)?.to_detections()?;
    let opts = MapOptions {
        merge_seams: cfg.merge_seams,
        tile_size: cfg.tile_size,
        gap_tol: cfg.gap_tol,
        span_overlap: cfg.span_overlap,
    };
    let (img, boxes) = render_map(&pano, &dets, &opts)?;
    fs::create_dir_all(out_dir)?;
    let image_path = out_dir.join("map.png");
    write_png(&image_path, &img)?;
    let name = cfg
        .panorama
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let sidecar = DetectionSet::new(&name, pano.height(), pano.width(), &boxes)?;
    let sidecar_path = out_dir.join("map.json");
    sidecar.save(&sidecar_path)?;
    Ok(MapOutcome { image_path, sidecar_path, boxes })
}
