//! End-to-end command coverage: library-level runs over real files, plus
//! process-level checks of the binary's exit codes and logging.

use std::path::Path;
use std::process::Command;

use riverlitter::boxeval::{Bbox, Detection};
use riverlitter::raster::{read_png, write_png, ImageBuffer};
use riverlitter::scenegen::{generate_corpus, SceneConfig};
use riverlitter::schema::{sha256_file, DetectionSet, SceneAnnotations};
use surveycli::commands::{run_eval, run_map, run_sr, run_train, TrainingLog};
use surveycli::config::{
    EvalCliConfig, MapCliConfig, SrCliConfig, SrMethod, SweepConfig, TrainCliConfig,
};
use surveycli::sweep::{run_sweep, SweepReport};
use tempfile::TempDir;

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

fn det(x0: f64, y0: f64, x1: f64, y1: f64, class_id: u32, confidence: f64) -> Detection {
    Detection { bbox: Bbox { x_min: x0, y_min: y0, x_max: x1, y_max: y1, class_id }, confidence }
}

// ---------------------------------------------------------------------------
// eval through files
// ---------------------------------------------------------------------------

#[test]
fn eval_perfect_detections_score_full_map() {
    let tmp = TempDir::new().unwrap();
    let gts = vec![
        Bbox { x_min: 5.0, y_min: 5.0, x_max: 20.0, y_max: 25.0, class_id: 0 },
        Bbox { x_min: 40.0, y_min: 10.0, x_max: 60.0, y_max: 30.0, class_id: 2 },
    ];
    let ann = SceneAnnotations::new("s.png", 64, 64, &gts).unwrap();
    ann.save(&tmp.path().join("ann.json")).unwrap();
    let dets: Vec<Detection> = gts.iter().map(|b| Detection { bbox: *b, confidence: 1.0 }).collect();
    DetectionSet::new("s.png", 64, 64, &dets)
        .unwrap()
        .save(&tmp.path().join("det.json"))
        .unwrap();
    let cfg = EvalCliConfig {
        detections: tmp.path().join("det.json"),
        annotations: tmp.path().join("ann.json"),
        iou_thresh: 0.5,
    };
    let report = run_eval(&cfg, tmp.path()).unwrap();
    assert_eq!(report.map_score, 1.0);
    // both artifacts reload
    let json = std::fs::read(tmp.path().join("eval.json")).unwrap();
    let reloaded: riverlitter::boxeval::EvalReport = serde_json::from_slice(&json).unwrap();
    assert_eq!(reloaded, report);
    let csv = std::fs::read_to_string(tmp.path().join("eval.csv")).unwrap();
    assert!(csv.starts_with("map,precision,recall,f1\n1,1,1,1\n"), "{}", csv);
}

#[test]
fn eval_empty_detections_zero_recall_per_class() {
    let tmp = TempDir::new().unwrap();
    let gts = vec![
        Bbox { x_min: 5.0, y_min: 5.0, x_max: 20.0, y_max: 25.0, class_id: 1 },
        Bbox { x_min: 40.0, y_min: 10.0, x_max: 60.0, y_max: 30.0, class_id: 3 },
    ];
    SceneAnnotations::new("s.png", 64, 64, &gts)
        .unwrap()
        .save(&tmp.path().join("ann.json"))
        .unwrap();
    DetectionSet::new("s.png", 64, 64, &[])
        .unwrap()
        .save(&tmp.path().join("det.json"))
        .unwrap();
    let cfg = EvalCliConfig {
        detections: tmp.path().join("det.json"),
        annotations: tmp.path().join("ann.json"),
        iou_thresh: 0.5,
    };
    let report = run_eval(&cfg, tmp.path()).unwrap();
    assert_eq!(report.per_class.len(), 2);
    for metrics in report.per_class.values() {
        assert_eq!(metrics.recall, 0.0);
        assert_eq!(metrics.ap, 0.0);
    }
    assert_eq!(report.map_score, 0.0);
}

#[test]
fn eval_false_positive_then_hit_halves_ap_through_files() {
    let tmp = TempDir::new().unwrap();
    let gt = Bbox { x_min: 10.0, y_min: 10.0, x_max: 30.0, y_max: 30.0, class_id: 0 };
    SceneAnnotations::new("s.png", 64, 64, &[gt])
        .unwrap()
        .save(&tmp.path().join("ann.json"))
        .unwrap();
    // higher-confidence miss ranked above the exact hit
    let dets = vec![det(40.0, 40.0, 55.0, 55.0, 0, 0.9), det(10.0, 10.0, 30.0, 30.0, 0, 0.8)];
    DetectionSet::new("s.png", 64, 64, &dets)
        .unwrap()
        .save(&tmp.path().join("det.json"))
        .unwrap();
    let cfg = EvalCliConfig {
        detections: tmp.path().join("det.json"),
        annotations: tmp.path().join("ann.json"),
        iou_thresh: 0.5,
    };
    let report = run_eval(&cfg, tmp.path()).unwrap();
    let class0 = report.per_class.get(&0).unwrap();
    assert!((class0.ap - 0.5).abs() < 1e-12, "ap {}", class0.ap);
    assert!((report.map_score - 0.5).abs() < 1e-12);
}

// ---------------------------------------------------------------------------
// sr and train
// ---------------------------------------------------------------------------

#[test]
fn sr_bicubic_quadruples_a_small_frame() {
    let tmp = TempDir::new().unwrap();
    let mut img = ImageBuffer::zeros(128, 128, 3).unwrap();
    for y in 0..128 {
        for x in 0..128 {
            img.set(0, y, x, (x as f32) / 127.0);
            img.set(1, y, x, (y as f32) / 127.0);
            img.set(2, y, x, 0.25);
        }
    }
    let input = tmp.path().join("in.png");
    write_png(&input, &img).unwrap();
    let output = tmp.path().join("sr.png");
    let cfg = SrCliConfig {
        input,
        output: output.clone(),
        scale: 4,
        sr_method: SrMethod::Bicubic,
    };
    assert_eq!(run_sr(&cfg).unwrap(), (512, 512));
    let back = read_png(&output).unwrap();
    assert_eq!((back.height(), back.width(), back.channels()), (512, 512, 3));
}

#[test]
fn train_is_deterministic_across_runs() {
    let corpus = TempDir::new().unwrap();
    tiny_corpus(corpus.path(), 2, 77);
    let cfg = TrainCliConfig {
        corpus: corpus.path().to_path_buf(),
        tile: 16,
        epochs: 2,
        max_pairs: 6,
        seed: 11,
        ..TrainCliConfig::default()
    };
    let out_a = TempDir::new().unwrap();
    let out_b = TempDir::new().unwrap();
    let a = run_train(&cfg, out_a.path()).unwrap();
    let b = run_train(&cfg, out_b.path()).unwrap();
    assert_eq!(a.log.pair_count, 6);
    assert_eq!(sha256_file(&a.checkpoint).unwrap(), sha256_file(&b.checkpoint).unwrap());
    assert_eq!(a.log.epoch_losses, b.log.epoch_losses);
    // the sidecar reloads and echoes the run config
    let log: TrainingLog =
        serde_json::from_slice(&std::fs::read(out_a.path().join("training.json")).unwrap())
            .unwrap();
    assert_eq!(log, a.log);
    assert_eq!(log.config, cfg);
}

// ---------------------------------------------------------------------------
// map through files
// ---------------------------------------------------------------------------

fn flat_png(path: &Path, h: usize, w: usize) {
    write_png(path, &ImageBuffer::filled(h, w, 3, 0.5).unwrap()).unwrap();
}

#[test]
fn map_with_no_detections_reproduces_the_panorama() {
    let tmp = TempDir::new().unwrap();
    let pano = tmp.path().join("pano.png");
    flat_png(&pano, 48, 80);
    DetectionSet::new("pano.png", 48, 80, &[])
        .unwrap()
        .save(&tmp.path().join("det.json"))
        .unwrap();
    let cfg = MapCliConfig {
        panorama: pano.clone(),
        detections: tmp.path().join("det.json"),
        tile_size: 48,
        ..MapCliConfig::default()
    };
    let outcome = run_map(&cfg, tmp.path()).unwrap();
    assert!(outcome.boxes.is_empty());
    assert_eq!(read_png(&outcome.image_path).unwrap(), read_png(&pano).unwrap());
    let sidecar = DetectionSet::load(&outcome.sidecar_path).unwrap();
    assert!(sidecar.detections.is_empty());
}

#[test]
fn map_outlines_one_detection_and_reloads_sidecar() {
    let tmp = TempDir::new().unwrap();
    let pano = tmp.path().join("pano.png");
    flat_png(&pano, 64, 64);
    let d = det(10.0, 20.0, 30.0, 40.0, 2, 0.9);
    DetectionSet::new("pano.png", 64, 64, &[d])
        .unwrap()
        .save(&tmp.path().join("det.json"))
        .unwrap();
    let cfg = MapCliConfig {
        panorama: pano,
        detections: tmp.path().join("det.json"),
        tile_size: 64,
        ..MapCliConfig::default()
    };
    let outcome = run_map(&cfg, tmp.path()).unwrap();
    assert_eq!(outcome.boxes, vec![d]);
    let img = read_png(&outcome.image_path).unwrap();
    // can overlay is strongly red against a gray background
    assert!(img.get(0, 20, 10) > 0.9 && img.get(1, 20, 10) < 0.2);
    assert!((img.get(0, 30, 20) - 0.5).abs() < 0.01, "interior repainted");
    let sidecar = DetectionSet::load(&outcome.sidecar_path).unwrap();
    assert_eq!(sidecar.to_detections().unwrap(), vec![d]);
}

#[test]
fn map_merges_seam_split_boxes_when_asked() {
    let tmp = TempDir::new().unwrap();
    let pano = tmp.path().join("pano.png");
    flat_png(&pano, 128, 128);
    let pair = vec![det(34.0, 10.0, 64.0, 40.0, 0, 0.8), det(64.0, 10.0, 94.0, 40.0, 0, 0.9)];
    DetectionSet::new("pano.png", 128, 128, &pair)
        .unwrap()
        .save(&tmp.path().join("det.json"))
        .unwrap();
    let cfg = MapCliConfig {
        panorama: pano,
        detections: tmp.path().join("det.json"),
        tile_size: 64,
        merge_seams: true,
        ..MapCliConfig::default()
    };
    let outcome = run_map(&cfg, tmp.path()).unwrap();
    assert_eq!(outcome.boxes, vec![det(34.0, 10.0, 94.0, 40.0, 0, 0.9)]);
}

#[test]
fn map_rejects_out_of_canvas_detections() {
    let tmp = TempDir::new().unwrap();
    let pano = tmp.path().join("pano.png");
    flat_png(&pano, 32, 32);
    DetectionSet::new("pano.png", 32, 32, &[det(10.0, 10.0, 40.0, 20.0, 0, 0.5)])
        .unwrap()
        .save(&tmp.path().join("det.json"))
        .unwrap();
    let cfg = MapCliConfig {
        panorama: pano,
        detections: tmp.path().join("det.json"),
        tile_size: 32,
        ..MapCliConfig::default()
    };
    assert!(run_map(&cfg, tmp.path()).is_err());
}

// ---------------------------------------------------------------------------
// sweep report files
// ---------------------------------------------------------------------------

#[test]
fn sweep_report_files_self_round_trip() {
    let corpus = TempDir::new().unwrap();
    tiny_corpus(corpus.path(), 2, 31);
    let cfg = SweepConfig {
        corpus: corpus.path().to_path_buf(),
        tile_size: 64,
        factors: vec![1, 2],
        ..SweepConfig::default()
    };
    let report = run_sweep(&cfg).unwrap();
    let out = TempDir::new().unwrap();
    let json_path = out.path().join("report.json");
    let csv_path = out.path().join("report.csv");
    report.save(&json_path, &csv_path).unwrap();
    let reloaded: SweepReport =
        serde_json::from_slice(&std::fs::read(&json_path).unwrap()).unwrap();
    assert_eq!(reloaded, report);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv.lines().count(), 1 + report.rows.len());
    assert!(report.metadata.x1_policy.contains("no"), "{}", report.metadata.x1_policy);
}

// ---------------------------------------------------------------------------
// the binary: exit codes, logging, artifacts
// ---------------------------------------------------------------------------

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_surveycli"))
}

#[test]
fn binary_help_and_usage_exit_codes() {
    let help = bin().arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("surveycli"));

    let none = bin().output().unwrap();
    assert_eq!(none.status.code(), Some(1));

    let unknown = bin().args(["sweep", "--no-such-flag"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(1));

    let bad_factors = bin()
        .args(["sweep", "--corpus", "c", "--factors", "two"])
        .output()
        .unwrap();
    assert_eq!(bad_factors.status.code(), Some(1));
}

#[test]
fn binary_data_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let sweep = bin()
        .args(["sweep", "--corpus", "/nonexistent/corpus"])
        .args(["--out", tmp.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(sweep.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&sweep.stderr).contains("error"));

    let eval = bin()
        .args(["eval", "--detections", "/nonexistent/d.json", "--annotations", "/nonexistent/a.json"])
        .args(["--out", tmp.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(eval.status.code(), Some(2));
}

#[test]
fn binary_gen_writes_scenes_and_logs_resolved_config() {
    let tmp = TempDir::new().unwrap();
    let out = bin()
        .args(["gen", "--scenes", "3", "--height", "64", "--width", "64"])
        .args(["--objects", "2", "--size-min", "12", "--size-max", "24"])
        .args(["--seed", "5", "--out", tmp.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("resolved config"));
    for i in 0..3 {
        assert!(tmp.path().join(format!("scene_{:04}.png", i)).exists());
        assert!(tmp.path().join(format!("scene_{:04}.json", i)).exists());
    }
    let manifest =
        riverlitter::schema::CorpusManifest::load(&tmp.path().join("manifest.json")).unwrap();
    assert_eq!(manifest.scene_count, 3);
    assert_eq!(manifest.entries.len(), 6);
}

#[test]
fn binary_sweep_prints_csv_and_writes_report() {
    let corpus = TempDir::new().unwrap();
    tiny_corpus(corpus.path(), 2, 13);
    let out = TempDir::new().unwrap();
    let run = bin()
        .args(["sweep", "--corpus", corpus.path().to_str().unwrap()])
        .args(["--tile-size", "64", "--factors", "1,2"])
        .args(["--out", out.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("condition,psnr_db,ssim,"), "{}", stdout);
    assert!(stdout.contains("\nHR,"), "{}", stdout);
    assert!(stdout.contains("\nx1-LR,"), "{}", stdout);
    assert!(out.path().join("report.json").exists());
    assert!(out.path().join("report.csv").exists());
}
