//! Localization and noise-detection metrics.
//!
//! CorLoc counts an image as correct when its predicted box overlaps some
//! ground-truth box with IoU strictly above 0.5. Images annotated with no
//! boxes are noisy and stay out of CorLoc. For noise detection the noisy
//! images are the positive class and an image is flagged when its score is
//! at or below the threshold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::descriptor::Annotations;
use crate::error::{Error, Result};

pub const CORLOC_IOU: f64 = 0.5;

/// Intersection over union with inclusive pixel areas.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let Some(inter) = a.intersection(b) else {
        return 0.0;
    };
    let inter = inter.area();
    inter as f64 / (a.area() + b.area() - inter) as f64
}

/// Best IoU of `pred` against any box in `truth` (0 when there is none).
pub fn best_iou(pred: &BoundingBox, truth: &[BoundingBox]) -> f64 {
    truth.iter().map(|t| iou(pred, t)).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorLoc {
    pub correct: usize,
    pub annotated: usize,
    pub value: f64,
}

impl CorLoc {
    pub fn percent(&self) -> f64 {
        100.0 * self.value
    }
}

pub type Predictions = BTreeMap<String, Option<BoundingBox>>;

pub fn corloc(predictions: &Predictions, annotations: &Annotations) -> Result<CorLoc> {
    let missing: Vec<&str> = annotations
        .iter()
        .filter(|(id, a)| !a.is_noisy() && !predictions.contains_key(*id))
        .map(|(id, _)| id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "annotated images missing from predictions: {}",
            missing.join(", ")
        )));
    }
    let mut correct = 0;
    let mut annotated = 0;
    for (id, ann) in annotations.iter().filter(|(_, a)| !a.is_noisy()) {
        annotated += 1;
        if let Some(pred) = &predictions[id] {
            if best_iou(pred, &ann.boxes) > CORLOC_IOU {
                correct += 1;
            }
        }
    }
    let value = if annotated == 0 {
        0.0
    } else {
        correct as f64 / annotated as f64
    };
    Ok(CorLoc {
        correct,
        annotated,
        value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLabel {
    Noisy,
    Clean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC of "noisy iff score <= t" over every distinct score plus ±∞, with
/// trapezoidal AUC. Ids without a label are an error.
pub fn roc_curve(
    scores: &BTreeMap<String, f64>,
    labels: &BTreeMap<String, NoiseLabel>,
) -> Result<RocCurve> {
    let mut scored: Vec<(f64, NoiseLabel)> = Vec::with_capacity(scores.len());
    let mut unlabeled = Vec::new();
    for (id, &s) in scores {
        match labels.get(id) {
            Some(&l) => scored.push((s, l)),
            None => unlabeled.push(id.as_str()),
        }
    }
    if !unlabeled.is_empty() {
        return Err(Error::Validation(format!(
            "no noise label for: {}",
            unlabeled.join(", ")
        )));
    }
    if scored.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::Validation("non-finite noise score".into()));
    }
    let positives = scored.iter().filter(|(_, l)| *l == NoiseLabel::Noisy).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Validation(
            "ROC needs at least one noisy and one clean image".into(),
        ));
    }

    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let t = scored[i].0;
        while i < scored.len() && scored[i].0 == t {
            match scored[i].1 {
                NoiseLabel::Noisy => tp += 1,
                NoiseLabel::Clean => fp += 1,
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        });
    }
    points.push(RocPoint { fpr: 1.0, tpr: 1.0 });

    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// Noisy/clean labels implied by annotations (no boxes = noisy).
pub fn labels_from_annotations(annotations: &Annotations) -> BTreeMap<String, NoiseLabel> {
    annotations
        .iter()
        .map(|(id, a)| {
            let label = if a.is_noisy() {
                NoiseLabel::Noisy
            } else {
                NoiseLabel::Clean
            };
            (id.clone(), label)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageVerdict {
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: Option<BoundingBox>,
    pub best_iou: Option<f64>,
    /// `None` for images that are noisy or not annotated.
    pub correct: Option<bool>,
    pub noise_score: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub corloc: f64,
    pub corloc_percent: f64,
    pub correct: usize,
    pub annotated: usize,
    pub per_image: Vec<ImageVerdict>,
    pub roc: Option<Vec<RocPoint>>,
    pub auc: Option<f64>,
    pub roc_positive_class: String,
    pub roc_rule: String,
}

/// One prediction as fed to [`evaluate`].
#[derive(Debug, Clone)]
pub struct Scored {
    pub image_id: String,
    pub bbox: Option<BoundingBox>,
    pub noise_score: u64,
}

/// CorLoc over the annotated images, plus ROC/AUC when both noisy and clean
/// images are annotated.
pub fn evaluate(predictions: &[Scored], annotations: &Annotations) -> Result<EvalReport> {
    let by_id: Predictions = predictions
        .iter()
        .map(|p| (p.image_id.clone(), p.bbox))
        .collect();
    let summary = corloc(&by_id, annotations)?;

    let per_image = predictions
        .iter()
        .map(|p| {
            let ann = annotations.get(&p.image_id).filter(|a| !a.is_noisy());
            let best = ann.map(|a| p.bbox.map_or(0.0, |b| best_iou(&b, &a.boxes)));
            ImageVerdict {
                image_id: p.image_id.clone(),
                bbox: p.bbox,
                best_iou: best,
                correct: best.map(|v| p.bbox.is_some() && v > CORLOC_IOU),
                noise_score: p.noise_score,
            }
        })
        .collect();

    let labels = labels_from_annotations(annotations);
    let scores: BTreeMap<String, f64> = predictions
        .iter()
        .filter(|p| labels.contains_key(&p.image_id))
        .map(|p| (p.image_id.clone(), p.noise_score as f64))
        .collect();
    let roc = roc_curve(&scores, &labels).ok();

    Ok(EvalReport {
        schema_version: 1,
        corloc: summary.value,
        corloc_percent: summary.percent(),
        correct: summary.correct,
        annotated: summary.annotated,
        per_image,
        auc: roc.as_ref().map(|r| r.auc),
        roc: roc.map(|r| r.points),
        roc_positive_class: "noisy".into(),
        roc_rule: "score <= threshold".into(),
    })
}
