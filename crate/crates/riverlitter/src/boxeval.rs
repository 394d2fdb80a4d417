//! Box-level detection evaluation: IoU, greedy matching,
//! precision/recall/F1, average precision, and mAP.
//!
//! Everything here is box-level by design.  Boxes live in continuous canvas
//! coordinates (a pixel drawn at row y, column x is covered by the box
//! [x, x+1) x [y, y+1)), carry a class id, and only same-class pairs ever
//! match.  AP integrates the running-maximum precision envelope over recall
//! (all-point interpolation), and mAP averages AP over the classes that have
//! at least one ground-truth box.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("degenerate box ({x_min}, {y_min}, {x_max}, {y_max}): min must be < max and finite")]
    DegenerateBox { x_min: f64, y_min: f64, x_max: f64, y_max: f64 },
    #[error("confidence {0} must be finite")]
    BadConfidence(f64),
    #[error("iou threshold {0} must be in (0, 1]")]
    BadThreshold(f64),
    #[error("average precision is undefined without ground-truth boxes")]
    NoGroundTruth,
}

/// Axis-aligned box with a class id, in continuous coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bbox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub class_id: u32,
}

impl Bbox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, class_id: u32) -> Result<Self, EvalError> {
        let b = Bbox { x_min, y_min, x_max, y_max, class_id };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let ok = self.x_min.is_finite()
            && self.y_min.is_finite()
            && self.x_max.is_finite()
            && self.y_max.is_finite()
            && self.x_min < self.x_max
            && self.y_min < self.y_max;
        if ok {
            Ok(())
        } else {
            Err(EvalError::DegenerateBox {
                x_min: self.x_min,
                y_min: self.y_min,
                x_max: self.x_max,
                y_max: self.y_max,
            })
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Smallest box covering both.
    pub fn union_bounds(&self, other: &Bbox) -> Bbox {
        Bbox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
            class_id: self.class_id,
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Bbox {
        Bbox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
            class_id: self.class_id,
        }
    }
}

/// A scored box.  Confidence is an arbitrary finite score; only its order
/// matters to the metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: Bbox,
    pub confidence: f64,
}

/// Intersection-over-union, ignoring class.  0 for disjoint boxes.
pub fn iou(a: &Bbox, b: &Bbox) -> Result<f64, EvalError> {
    a.validate()?;
    b.validate()?;
    Ok(iou_raw(a, b))
}

#[inline]
fn iou_raw(a: &Bbox, b: &Bbox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Outcome of greedy matching.  `is_tp[i]` refers to `dets[i]` in the
/// caller's order; `fn_count` is the number of ground-truth boxes left
/// unmatched.
#[derive(Debug, Clone)]
pub struct MatchOutcome {
    pub is_tp: Vec<bool>,
    pub fn_count: usize,
}

/// Confidence ranking shared by matching and AP: descending confidence,
/// ties broken by ascending x_min, then ascending y_min.
fn ranked_indices(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| {
        dets[j]
            .confidence
            .total_cmp(&dets[i].confidence)
            .then(dets[i].bbox.x_min.total_cmp(&dets[j].bbox.x_min))
            .then(dets[i].bbox.y_min.total_cmp(&dets[j].bbox.y_min))
    });
    order
}

fn validate_inputs(dets: &[Detection], gts: &[Bbox], iou_thresh: f64) -> Result<(), EvalError> {
    if !(iou_thresh > 0.0 && iou_thresh <= 1.0) {
        return Err(EvalError::BadThreshold(iou_thresh));
    }
    for d in dets {
        d.bbox.validate()?;
        if !d.confidence.is_finite() {
            return Err(EvalError::BadConfidence(d.confidence));
        }
    }
    for g in gts {
        g.validate()?;
    }
    Ok(())
}

/// Greedy one-to-one matching.  Detections are visited in ranked order; each
/// claims the not-yet-claimed same-class ground-truth box of highest IoU,
/// and is a true positive iff that IoU reaches `iou_thresh`.  Equal-IoU
/// candidates resolve to the lowest ground-truth index.
pub fn match_detections(
    dets: &[Detection],
    gts: &[Bbox],
    iou_thresh: f64,
) -> Result<MatchOutcome, EvalError> {
    validate_inputs(dets, gts, iou_thresh)?;
    let mut is_tp = vec![false; dets.len()];
    let mut gt_taken = vec![false; gts.len()];
    for &di in &ranked_indices(dets) {
        let d = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if gt_taken[gi] || g.class_id != d.bbox.class_id {
                continue;
            }
            let v = iou_raw(&d.bbox, g);
            let better = match best {
                None => v > 0.0,
                Some((_, bv)) => v > bv,
            };
            if better {
                best = Some((gi, v));
            }
        }
        if let Some((gi, v)) = best {
            if v >= iou_thresh {
                is_tp[di] = true;
                gt_taken[gi] = true;
            }
        }
    }
    let fn_count = gt_taken.iter().filter(|t| !**t).count();
    Ok(MatchOutcome { is_tp, fn_count })
}

/// Precision/recall/F1 from raw counts.  Any zero denominator gives 0
/// rather than NaN, so empty slices stay well-defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn confusion_metrics(tp: usize, fp: usize, fn_count: usize) -> Confusion {
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_count == 0 { 0.0 } else { tp as f64 / (tp + fn_count) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Confusion { precision, recall, f1 }
}

/// Average precision for one class: rank detections, label them by greedy
/// matching, then integrate the running-max precision envelope over recall.
/// Errors if there is no ground truth to recall.
pub fn average_precision(
    dets: &[Detection],
    gts: &[Bbox],
    iou_thresh: f64,
) -> Result<f64, EvalError> {
    if gts.is_empty() {
        return Err(EvalError::NoGroundTruth);
    }
    let outcome = match_detections(dets, gts, iou_thresh)?;
    let order = ranked_indices(dets);
    let n_gt = gts.len() as f64;

    let mut recall = Vec::with_capacity(order.len());
    let mut precision = Vec::with_capacity(order.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &di in &order {
        if outcome.is_tp[di] {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt);
        precision.push(tp as f64 / (tp + fp) as f64);
    }

    // Right-to-left running max turns the sawtooth into its envelope.
    let mut envelope = precision;
    let mut running = 0.0f64;
    for p in envelope.iter_mut().rev() {
        running = running.max(*p);
        *p = running;
    }

    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for (r, p) in recall.iter().zip(&envelope) {
        ap += (r - prev_r) * p;
        prev_r = *r;
    }
    Ok(ap)
}

/// Per-class slice of an evaluation report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap: f64,
    pub gt_count: usize,
}

/// Full evaluation over class-partitioned detections and ground truth.
///
/// `map_score` is the unweighted mean of per-class AP over classes with at
/// least one ground-truth box; classes that appear only in detections are
/// excluded (their detections count toward nothing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: BTreeMap<u32, ClassMetrics>,
    pub map_score: f64,
}

pub fn evaluate(
    dets_by_class: &BTreeMap<u32, Vec<Detection>>,
    gts_by_class: &BTreeMap<u32, Vec<Bbox>>,
    iou_thresh: f64,
) -> Result<EvalReport, EvalError> {
    let mut per_class = BTreeMap::new();
    for (&class_id, gts) in gts_by_class {
        if gts.is_empty() {
            continue;
        }
        static NO_DETS: Vec<Detection> = Vec::new();
        let dets = dets_by_class.get(&class_id).unwrap_or(&NO_DETS);
        let outcome = match_detections(dets, gts, iou_thresh)?;
        let tp = outcome.is_tp.iter().filter(|t| **t).count();
        let fp = dets.len() - tp;
        let confusion = confusion_metrics(tp, fp, outcome.fn_count);
        let ap = average_precision(dets, gts, iou_thresh)?;
        per_class.insert(
            class_id,
            ClassMetrics {
                precision: confusion.precision,
                recall: confusion.recall,
                f1: confusion.f1,
                ap,
                gt_count: gts.len(),
            },
        );
    }
    if per_class.is_empty() {
        return Err(EvalError::NoGroundTruth);
    }
    let map_score = per_class.values().map(|m| m.ap).sum::<f64>() / per_class.len() as f64;
    Ok(EvalReport { per_class, map_score })
}

/// Scalar mAP over class-partitioned inputs; see [`evaluate`].
pub fn mean_ap(
    dets_by_class: &BTreeMap<u32, Vec<Detection>>,
    gts_by_class: &BTreeMap<u32, Vec<Bbox>>,
    iou_thresh: f64,
) -> Result<f64, EvalError> {
    Ok(evaluate(dets_by_class, gts_by_class, iou_thresh)?.map_score)
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
