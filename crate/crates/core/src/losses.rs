//! Set-prediction losses on the matched query: mask BCE and DICE, GIoU and
//! L1 box terms, and the cross-entropy of the root referring distribution.
//!
//! Box terms are averaged over frames; BCE is averaged over all pixels of all frames.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{hungarian, log_softmax_at, sigmoid, softmax_stable, Matrix};

pub const DICE_EPS: f64 = 1e-6;

/// `(cx, cy, w, h)`, normalized to `[0, 1]`.
pub type BoxCxCyWh = [f64; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// `frames * height * width`, frame-major.
    pub mask_logits: Vec<f64>,
    pub boxes: Vec<BoxCxCyWh>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Binary, same layout as [`Prediction::mask_logits`].
    pub mask: Vec<f64>,
    pub boxes: Vec<BoxCxCyWh>,
}

impl Prediction {
    fn check_against(&self, gt: &GroundTruth) -> Result<()> {
        let cells = self.frames * self.height * self.width;
        if (self.frames, self.height, self.width) != (gt.frames, gt.height, gt.width)
            || self.mask_logits.len() != cells
            || self.boxes.len() != self.frames
        {
            return Err(Error::Dimension("prediction shape does not match ground truth".into()));
        }
        Ok(())
    }
}

impl GroundTruth {
    fn check(&self) -> Result<()> {
        let cells = self.frames * self.height * self.width;
        if self.mask.len() != cells || self.boxes.len() != self.frames || self.frames == 0 {
            return Err(Error::Dimension("ground truth shape is inconsistent".into()));
        }
        if self.mask.iter().any(|&g| g != 0.0 && g != 1.0) {
            return Err(Error::Dimension("ground-truth mask must be binary".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub reason: f64,
    pub mask: f64,
    pub dice: f64,
    pub giou: f64,
    pub l1: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            reason: 2.0,
            mask: 2.0,
            dice: 5.0,
            giou: 2.0,
            l1: 2.0,
        }
    }
}

impl LossWeights {
    pub fn check(&self) -> Result<()> {
        let all = [self.reason, self.mask, self.dice, self.giou, self.l1];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("loss weights must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub reason: f64,
    pub mask: f64,
    pub dice: f64,
    pub giou: f64,
    pub l1: f64,
}

pub fn total_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    w.reason * c.reason + w.mask * c.mask + w.dice * c.dice + w.giou * c.giou + w.l1 * c.l1
}

fn bce_term(x: f64, g: f64) -> f64 {
    x.max(0.0) - x * g + (-x.abs()).exp().ln_1p()
}

/// `(bce, dice)`.
pub fn segmentation_losses(logits: &[f64], gt: &[f64]) -> Result<(f64, f64)> {
    if logits.len() != gt.len() || logits.is_empty() {
        return Err(Error::Dimension(format!(
            "mask logits have {} cells, ground truth {}",
            logits.len(),
            gt.len()
        )));
    }
    let n = logits.len() as f64;
    let bce = logits.iter().zip(gt).map(|(&x, &g)| bce_term(x, g)).sum::<f64>() / n;
    let (mut pg, mut denom) = (0.0, DICE_EPS);
    for (&x, &g) in logits.iter().zip(gt) {
        let p = sigmoid(x);
        pg += p * g;
        denom += p + g;
    }
    Ok((bce, 1.0 - 2.0 * pg / denom))
}

/// Gradients of `(bce, dice)` with respect to the logits.
pub fn segmentation_grads(logits: &[f64], gt: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    segmentation_losses(logits, gt)?;
    let n = logits.len() as f64;
    let p: Vec<f64> = logits.iter().map(|&x| sigmoid(x)).collect();
    let bce = p.iter().zip(gt).map(|(p, g)| (p - g) / n).collect();
    let pg: f64 = p.iter().zip(gt).map(|(p, g)| p * g).sum();
    let denom = DICE_EPS + p.iter().sum::<f64>() + gt.iter().sum::<f64>();
    let dice = p
        .iter()
        .zip(gt)
        .map(|(&p, &g)| -2.0 * (g * denom - pg) / (denom * denom) * p * (1.0 - p))
        .collect();
    Ok((bce, dice))
}

pub fn to_xyxy(b: &BoxCxCyWh) -> [f64; 4] {
    let [cx, cy, w, h] = *b;
    [cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0]
}

fn check_box(b: &BoxCxCyWh, what: &str) -> Result<()> {
    if b.iter().any(|v| !v.is_finite()) || b[2] <= 0.0 || b[3] <= 0.0 {
        return Err(Error::InvalidBox(format!("{what} box {b:?} has non-positive extent")));
    }
    Ok(())
}

/// `(1 - GIoU, L1)`.
pub fn box_losses(pred: &BoxCxCyWh, gt: &BoxCxCyWh) -> Result<(f64, f64)> {
    Ok(box_losses_with_grads(pred, gt)?.0)
}

/// Losses and their gradients with respect to the predicted `(cx, cy, w, h)`.
#[allow(clippy::type_complexity)]
pub fn box_losses_with_grads(pred: &BoxCxCyWh, gt: &BoxCxCyWh) -> Result<((f64, f64), ([f64; 4], [f64; 4]))> {
    check_box(gt, "ground-truth")?;
    check_box(pred, "predicted")?;
    let a = to_xyxy(pred);
    let b = to_xyxy(gt);

    // Gradients below are with respect to a = (x0, y0, x1, y1).
    let iw_raw = a[2].min(b[2]) - a[0].max(b[0]);
    let ih_raw = a[3].min(b[3]) - a[1].max(b[1]);
    let (iw, ih) = (iw_raw.max(0.0), ih_raw.max(0.0));
    let mut d_iw = [0.0; 4];
    let mut d_ih = [0.0; 4];
    if iw_raw > 0.0 {
        if a[2] <= b[2] {
            d_iw[2] = 1.0;
        }
        if a[0] >= b[0] {
            d_iw[0] = -1.0;
        }
    }
    if ih_raw > 0.0 {
        if a[3] <= b[3] {
            d_ih[3] = 1.0;
        }
        if a[1] >= b[1] {
            d_ih[1] = -1.0;
        }
    }
    let inter = iw * ih;
    let d_inter: [f64; 4] = std::array::from_fn(|k| d_iw[k] * ih + iw * d_ih[k]);

    let (aw, ah) = (a[2] - a[0], a[3] - a[1]);
    let area_a = aw * ah;
    let area_b = (b[2] - b[0]) * (b[3] - b[1]);
    let d_area_a = [-ah, -aw, ah, aw];
    let union = area_a + area_b - inter;
    let d_union: [f64; 4] = std::array::from_fn(|k| d_area_a[k] - d_inter[k]);

    let cw = a[2].max(b[2]) - a[0].min(b[0]);
    let ch = a[3].max(b[3]) - a[1].min(b[1]);
    let mut d_cw = [0.0; 4];
    let mut d_ch = [0.0; 4];
    if a[2] >= b[2] {
        d_cw[2] = 1.0;
    }
    if a[0] <= b[0] {
        d_cw[0] = -1.0;
    }
    if a[3] >= b[3] {
        d_ch[3] = 1.0;
    }
    if a[1] <= b[1] {
        d_ch[1] = -1.0;
    }
    let enclose = cw * ch;
    let d_enclose: [f64; 4] = std::array::from_fn(|k| d_cw[k] * ch + cw * d_ch[k]);

    // 1 - GIoU = 2 - I/U - U/C
    let giou_loss = 2.0 - inter / union - union / enclose;
    let d_xyxy: [f64; 4] = std::array::from_fn(|k| {
        -(d_inter[k] * union - inter * d_union[k]) / (union * union)
            - (d_union[k] * enclose - union * d_enclose[k]) / (enclose * enclose)
    });
    let d_giou = [
        d_xyxy[0] + d_xyxy[2],
        d_xyxy[1] + d_xyxy[3],
        0.5 * (d_xyxy[2] - d_xyxy[0]),
        0.5 * (d_xyxy[3] - d_xyxy[1]),
    ];

    let l1 = pred.iter().zip(gt).map(|(p, g)| (p - g).abs()).sum();
    let d_l1: [f64; 4] = std::array::from_fn(|k| {
        let diff = pred[k] - gt[k];
        if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        }
    });
    Ok(((giou_loss, l1), (d_giou, d_l1)))
}

/// `-log softmax(scores)[matched]`.
pub fn pseudo_rrl(root_scores: &[f64], matched: usize) -> f64 {
    -log_softmax_at(root_scores, matched)
}

pub fn pseudo_rrl_grad(root_scores: &[f64], matched: usize) -> Vec<f64> {
    let mut g = softmax_stable(root_scores);
    g[matched] -= 1.0;
    g
}

/// Prediction-side components for one query.
fn prediction_components(pred: &Prediction, gt: &GroundTruth) -> Result<LossComponents> {
    pred.check_against(gt)?;
    let (mask, dice) = segmentation_losses(&pred.mask_logits, &gt.mask)?;
    let (mut giou, mut l1) = (0.0, 0.0);
    for (p, g) in pred.boxes.iter().zip(&gt.boxes) {
        let (gi, l) = box_losses(p, g)?;
        giou += gi;
        l1 += l;
    }
    let t = gt.frames as f64;
    Ok(LossComponents {
        reason: 0.0,
        mask,
        dice,
        giou: giou / t,
        l1: l1 / t,
    })
}

/// Index of the cheapest query and the per-query costs.
pub fn match_referent(preds: &[Prediction], gt: &GroundTruth, weights: &LossWeights) -> Result<(usize, Vec<f64>)> {
    gt.check()?;
    weights.check()?;
    let costs = preds
        .iter()
        .map(|p| prediction_components(p, gt).map(|c| total_loss(&c, weights)))
        .collect::<Result<Vec<f64>>>()?;
    let m = Matrix::from_vec(costs.len(), 1, costs.clone())?;
    let assignment = hungarian(&m)?;
    Ok((assignment.pairs[0].0, costs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub matched: usize,
    pub bce: f64,
    pub dice: f64,
    pub giou: f64,
    pub l1: f64,
    pub reason: f64,
    pub total: f64,
}

/// Report plus gradients of the total with respect to the root scores and the matched prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub report: LossReport,
    pub grad_root_scores: Vec<f64>,
    pub grad_mask_logits: Vec<f64>,
    pub grad_boxes: Vec<[f64; 4]>,
}

pub fn evaluate_losses(
    root_scores: &[f64],
    preds: &[Prediction],
    gt: &GroundTruth,
    weights: &LossWeights,
) -> Result<LossOutput> {
    if preds.len() != root_scores.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} referring scores",
            preds.len(),
            root_scores.len()
        )));
    }
    let (matched, _) = match_referent(preds, gt, weights)?;
    evaluate_matched(root_scores, preds, gt, matched, weights)
}

/// Like [`evaluate_losses`] with the match held fixed.
pub fn evaluate_matched(
    root_scores: &[f64],
    preds: &[Prediction],
    gt: &GroundTruth,
    matched: usize,
    weights: &LossWeights,
) -> Result<LossOutput> {
    gt.check()?;
    weights.check()?;
    let pred = preds
        .get(matched)
        .ok_or_else(|| Error::Dimension(format!("matched index {matched} out of range")))?;
    if matched >= root_scores.len() {
        return Err(Error::Dimension(format!("matched index {matched} out of range")));
    }
    let mut c = prediction_components(pred, gt)?;
    c.reason = pseudo_rrl(root_scores, matched);
    let total = total_loss(&c, weights);

    let grad_root_scores = pseudo_rrl_grad(root_scores, matched)
        .into_iter()
        .map(|g| weights.reason * g)
        .collect();
    let (g_bce, g_dice) = segmentation_grads(&pred.mask_logits, &gt.mask)?;
    let grad_mask_logits = g_bce
        .iter()
        .zip(&g_dice)
        .map(|(b, d)| weights.mask * b + weights.dice * d)
        .collect();
    let t = gt.frames as f64;
    let grad_boxes = pred
        .boxes
        .iter()
        .zip(&gt.boxes)
        .map(|(p, g)| {
            let (_, (dg, dl)) = box_losses_with_grads(p, g)?;
            Ok(std::array::from_fn(|k| (weights.giou * dg[k] + weights.l1 * dl[k]) / t))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(LossOutput {
        report: LossReport {
            matched,
            bce: c.mask,
            dice: c.dice,
            giou: c.giou,
            l1: c.l1,
            reason: c.reason,
            total,
        },
        grad_root_scores,
        grad_mask_logits,
        grad_boxes,
    })
}
