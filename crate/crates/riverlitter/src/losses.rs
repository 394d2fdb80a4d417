//! Training losses with analytic gradients, and the finite-difference
//! checker used to audit them.
//!
//! Two losses: binary cross-entropy over a score vector, and an extended
//! IoU box-regression loss combining four pieces: IoU overlap, normalized
//! center distance, an aspect-ratio consistency penalty, and an optional
//! area-scale penalty.  The total objective is a weighted sum of both.
//! Every gradient here is derived by hand and checked against central
//! differences in the tests; the checker itself lives here so the network
//! layers can reuse it.

use thiserror::Error;

use crate::boxeval::Bbox;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("length mismatch: {labels} labels vs {probs} probabilities")]
    LengthMismatch { labels: usize, probs: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("label {0} must be exactly 0 or 1")]
    BadLabel(f64),
    #[error("degenerate box ({x_min}, {y_min}, {x_max}, {y_max})")]
    DegenerateBox { x_min: f64, y_min: f64, x_max: f64, y_max: f64 },
    #[error("weight {0} must be finite and >= 0")]
    BadWeight(f64),
    #[error("finite-difference step {0} must be finite and > 0")]
    BadStep(f64),
    #[error("function value is not finite at the evaluation point")]
    NonFiniteValue,
}

/// A scalar loss with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn check_box(b: &Bbox) -> Result<(), LossError> {
    if b.validate().is_err() {
        return Err(LossError::DegenerateBox {
            x_min: b.x_min,
            y_min: b.y_min,
            x_max: b.x_max,
            y_max: b.y_max,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// binary cross-entropy
// ---------------------------------------------------------------------------

/// Probability floor: scores are clamped into [PROB_EPS, 1 - PROB_EPS]
/// before the logs, and the gradient is evaluated at the clamped value.
pub const PROB_EPS: f64 = 1e-7;

/// Mean binary cross-entropy of probabilities against {0, 1} labels.
///
/// value = -(1/N) sum(y ln p + (1 - y) ln(1 - p))
/// grad_i = (p_i - y_i) / (N p_i (1 - p_i)), p already clamped.
pub fn bce_loss(labels: &[f64], probs: &[f64]) -> Result<LossValue, LossError> {
    if labels.len() != probs.len() {
        return Err(LossError::LengthMismatch { labels: labels.len(), probs: probs.len() });
    }
    if labels.is_empty() {
        return Err(LossError::EmptyInput);
    }
    if let Some(&y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(LossError::BadLabel(y));
    }
    let n = labels.len() as f64;
    let mut value = 0.0f64;
    let mut grad = Vec::with_capacity(probs.len());
    for (&y, &p_raw) in labels.iter().zip(probs) {
        let p = p_raw.clamp(PROB_EPS, 1.0 - PROB_EPS);
        value -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        grad.push((p - y) / (n * p * (1.0 - p)));
    }
    Ok(LossValue { value: value / n, grad })
}

// ---------------------------------------------------------------------------
// extended IoU loss
// ---------------------------------------------------------------------------

/// Weights of the two auxiliary penalties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EiouParams {
    /// Aspect-ratio penalty weight.
    pub alpha: f64,
    /// Area-scale penalty weight; 0 disables the term (the default
    /// experiment configuration).
    pub beta: f64,
}

impl Default for EiouParams {
    fn default() -> Self {
        EiouParams { alpha: 1.0, beta: 0.0 }
    }
}

/// Box-regression loss with the gradient taken with respect to the four
/// predicted coordinates (x_min, y_min, x_max, y_max).
#[derive(Debug, Clone, PartialEq)]
pub struct EiouLoss {
    pub value: f64,
    pub grad: [f64; 4],
}

/// Extended IoU loss:
///
/// L = 1 - IoU + rho^2 / c^2 + alpha v + beta ((A_pred - A_gt) / c^2)^2
///
/// where rho is the center distance, c the diagonal of the smallest
/// enclosing box, v the squared difference of arctan aspect ratios scaled
/// by 4/pi^2, and A the box areas.  Zero iff pred == gt when beta = 0.
///
/// The gradient is piecewise-analytic; at the (measure-zero) configurations
/// where a min/max argument ties, the two one-sided derivatives are averaged
/// so coincident boxes sit at an exact stationary point.
pub fn eiou_loss(pred: &Bbox, gt: &Bbox, params: &EiouParams) -> Result<EiouLoss, LossError> {
    check_box(pred)?;
    check_box(gt)?;
    for w in [params.alpha, params.beta] {
        if !w.is_finite() || w < 0.0 {
            return Err(LossError::BadWeight(w));
        }
    }

    let (px1, py1, px2, py2) = (pred.x_min, pred.y_min, pred.x_max, pred.y_max);
    let (gx1, gy1, gx2, gy2) = (gt.x_min, gt.y_min, gt.x_max, gt.y_max);
    let (wp, hp) = (px2 - px1, py2 - py1);
    let (wg, hg) = (gx2 - gx1, gy2 - gy1);
    let area_p = wp * hp;
    let area_g = wg * hg;

    // IoU and its partials. d[k] indexes (px1, py1, px2, py2) throughout.
    let iw = (px2.min(gx2) - px1.max(gx1)).max(0.0);
    let ih = (py2.min(gy2) - py1.max(gy1)).max(0.0);
    let inter = iw * ih;
    let union = area_p + area_g - inter;
    let iou = inter / union;

    // Weight of the pred coordinate inside each max/min: 1 when it strictly
    // binds, 1/2 at an exact tie (averaging the one-sided slopes keeps
    // identical boxes at zero gradient), 0 when the gt coordinate binds.
    let bind = |strict: bool, tied: bool| if strict { 1.0 } else if tied { 0.5 } else { 0.0 };

    let overlap = iw > 0.0 && ih > 0.0;
    let mut d_inter = [0.0f64; 4];
    if overlap {
        d_inter[0] = -ih * bind(px1 > gx1, px1 == gx1);
        d_inter[1] = -iw * bind(py1 > gy1, py1 == gy1);
        d_inter[2] = ih * bind(px2 < gx2, px2 == gx2);
        d_inter[3] = iw * bind(py2 < gy2, py2 == gy2);
    }
    let d_area_p = [-hp, -wp, hp, wp];
    let mut d_iou = [0.0f64; 4];
    for k in 0..4 {
        let d_union = d_area_p[k] - d_inter[k];
        d_iou[k] = (d_inter[k] * union - inter * d_union) / (union * union);
    }

    // Normalized center distance rho^2 / c^2.
    let dx_c = (px1 + px2) / 2.0 - (gx1 + gx2) / 2.0;
    let dy_c = (py1 + py2) / 2.0 - (gy1 + gy2) / 2.0;
    let rho2 = dx_c * dx_c + dy_c * dy_c;
    // d rho^2: each x coordinate moves the center by 1/2, so 2 * dx * 1/2.
    let d_rho2 = [dx_c, dy_c, dx_c, dy_c];

    let cw = px2.max(gx2) - px1.min(gx1);
    let ch = py2.max(gy2) - py1.min(gy1);
    let c2 = cw * cw + ch * ch;
    let mut d_c2 = [0.0f64; 4];
    d_c2[0] = -2.0 * cw * bind(px1 < gx1, px1 == gx1);
    d_c2[1] = -2.0 * ch * bind(py1 < gy1, py1 == gy1);
    d_c2[2] = 2.0 * cw * bind(px2 > gx2, px2 == gx2);
    d_c2[3] = 2.0 * ch * bind(py2 > gy2, py2 == gy2);
    let dist = rho2 / c2;
    let mut d_dist = [0.0f64; 4];
    for k in 0..4 {
        d_dist[k] = (d_rho2[k] * c2 - rho2 * d_c2[k]) / (c2 * c2);
    }

    // Aspect penalty v = (4/pi^2) (atan(wg/hg) - atan(wp/hp))^2.
    let kv = 4.0 / (std::f64::consts::PI * std::f64::consts::PI);
    let delta = (wg / hg).atan() - (wp / hp).atan();
    let v = kv * delta * delta;
    let denom = wp * wp + hp * hp;
    let dv_dwp = -2.0 * kv * delta * hp / denom;
    let dv_dhp = 2.0 * kv * delta * wp / denom;
    let d_v = [-dv_dwp, -dv_dhp, dv_dwp, dv_dhp];

    // Area-scale penalty ((area_p - area_g) / c^2)^2.
    let diff = area_p - area_g;
    let scale = (diff / c2) * (diff / c2);
    let mut d_scale = [0.0f64; 4];
    for k in 0..4 {
        d_scale[k] = 2.0 * diff * (d_area_p[k] * c2 - diff * d_c2[k]) / (c2 * c2 * c2);
    }

    let value = 1.0 - iou + dist + params.alpha * v + params.beta * scale;
    let mut grad = [0.0f64; 4];
    for k in 0..4 {
        grad[k] = -d_iou[k] + d_dist[k] + params.alpha * d_v[k] + params.beta * d_scale[k];
    }
    Ok(EiouLoss { value, grad })
}

// ---------------------------------------------------------------------------
// combination and gradient checking
// ---------------------------------------------------------------------------

/// Weighted sum of a score loss and a box loss over the concatenated input
/// space (score gradient block first, then the four box partials).
pub fn total_loss(
    bce: &LossValue,
    eiou: &EiouLoss,
    lambda1: f64,
    lambda2: f64,
) -> Result<LossValue, LossError> {
    for w in [lambda1, lambda2] {
        if !w.is_finite() || w < 0.0 {
            return Err(LossError::BadWeight(w));
        }
    }
    let mut grad = Vec::with_capacity(bce.grad.len() + 4);
    grad.extend(bce.grad.iter().map(|g| lambda1 * g));
    grad.extend(eiou.grad.iter().map(|g| lambda2 * g));
    Ok(LossValue { value: lambda1 * bce.value + lambda2 * eiou.value, grad })
}

/// Compare an analytic gradient against central finite differences of `f`
/// at `x`, returning the worst relative error.  The denominator guards with
/// max(|analytic|, |numeric|, 1e-8) so near-zero partials stay meaningful.
pub fn grad_check<F>(f: F, x: &[f64], analytic: &[f64], h: f64) -> Result<f64, LossError>
where
    F: Fn(&[f64]) -> f64,
{
    if !h.is_finite() || h <= 0.0 {
        return Err(LossError::BadStep(h));
    }
    if x.len() != analytic.len() {
        return Err(LossError::LengthMismatch { labels: x.len(), probs: analytic.len() });
    }
    let mut worst = 0.0f64;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(LossError::NonFiniteValue);
        }
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
