//! Simulated annotator backed by ground truth, plus the annotation-time
//! ledger.
//!
//! Strong labelling draws every entity. Weak labelling shows the model's
//! confident predictions: each is verified against ground truth (same
//! class, IoU above [`VERIFY_IOU`] for boxes, exact match for spans) or
//! rejected, and any entity left unmatched is drawn from scratch.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{AnnotationState, EntityAnnotation, Geometry, LabelKind, Prediction, Sample, SampleId, TaskKind};
use crate::error::{OpadError, Result};
use crate::theta::{average_precision, entity_f_score, metrics::rank_order, Evaluated};

/// A shown box counts as correct only when its IoU with the ground truth
/// strictly exceeds this value.
pub const VERIFY_IOU: f64 = 0.5;
/// Predictions at or above this confidence are shown to the annotator.
pub const DEFAULT_SHOW_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    /// Seconds to draw / mark one entity.
    pub draw: u64,
    /// Seconds to verify one shown prediction.
    pub verify: u64,
}

impl CostModel {
    pub const DETECTION: CostModel = CostModel { draw: 15, verify: 5 };
    pub const SEQUENCE: CostModel = CostModel { draw: 4, verify: 2 };

    pub fn for_task(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Detection => Self::DETECTION,
            TaskKind::Sequence => Self::SEQUENCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabellingMode {
    Strong,
    Weak,
}

impl fmt::Display for LabellingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabellingMode::Strong => "strong",
            LabellingMode::Weak => "weak",
        })
    }
}

impl std::str::FromStr for LabellingMode {
    type Err = OpadError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strong" => Ok(LabellingMode::Strong),
            "weak" => Ok(LabellingMode::Weak),
            other => Err(OpadError::config(format!("unknown labelling mode `{other}`"))),
        }
    }
}

/// Action counts and their price for one sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Cost {
    pub draws: u64,
    pub verifies: u64,
    pub seconds: u64,
}

impl Cost {
    pub fn new(draws: u64, verifies: u64, model: CostModel) -> Self {
        Cost {
            draws,
            verifies,
            seconds: draws * model.draw + verifies * model.verify,
        }
    }
}

pub fn annotate_strong(
    sample: &Sample,
    state: AnnotationState,
    model: CostModel,
) -> Result<(Vec<EntityAnnotation>, Cost)> {
    if state != AnnotationState::Unlabelled {
        return Err(OpadError::integrity(format!("sample {} is already labelled", sample.id)));
    }
    let labels: Vec<EntityAnnotation> = sample
        .entities
        .iter()
        .map(|e| e.with_kind(LabelKind::Strong))
        .collect();
    let cost = Cost::new(labels.len() as u64, 0, model);
    Ok((labels, cost))
}

/// What the annotator did with one sample's shown predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackOutcome {
    pub sample_id: SampleId,
    pub shown: Vec<Prediction>,
    /// Indices into `shown`.
    pub verified: Vec<usize>,
    pub rejected: Vec<usize>,
    pub added_strong: Vec<EntityAnnotation>,
    /// Final label set after correction.
    pub corrected: Vec<EntityAnnotation>,
    pub ap_before: f64,
    pub ap_after: f64,
}

/// Reference-as-prediction: one-hot scores with confidence 1.
pub fn labels_as_predictions(labels: &[EntityAnnotation], n_classes: usize) -> Vec<Prediction> {
    labels
        .iter()
        .map(|l| {
            let mut scores = vec![0.0; n_classes + 1];
            scores[l.class_id] = 1.0;
            Prediction::new(l.geometry, scores)
        })
        .collect()
}

/// AP (boxes) or entity F1 (spans) of `predictions` against `reference`.
pub fn sample_quality(
    kind: TaskKind,
    id: SampleId,
    predictions: &[Prediction],
    reference: &[EntityAnnotation],
    n_classes: usize,
) -> f64 {
    let ev = [Evaluated {
        id,
        predictions: predictions.to_vec(),
        ground_truth: reference.to_vec(),
    }];
    match kind {
        TaskKind::Detection => average_precision(&ev, n_classes, 0.5).value,
        TaskKind::Sequence => entity_f_score(&ev, n_classes).value,
    }
}

fn verifies(pred: &Prediction, gt: &EntityAnnotation) -> Option<f64> {
    if pred.class_id() != gt.class_id {
        return None;
    }
    let ov = pred.geometry.overlap(&gt.geometry);
    match gt.geometry {
        Geometry::Box(_) => (ov > VERIFY_IOU).then_some(ov),
        Geometry::Span(_) => (ov == 1.0).then_some(ov),
    }
}

/// Weak labelling of one sample. `predictions` are all of the model's
/// outputs; those with confidence at or above `show_threshold` are shown.
pub fn annotate_weak(
    sample: &Sample,
    kind: TaskKind,
    n_classes: usize,
    predictions: &[Prediction],
    show_threshold: f64,
    model: CostModel,
) -> (FeedbackOutcome, Vec<EntityAnnotation>, Cost) {
    let mut shown: Vec<Prediction> = predictions
        .iter()
        .filter(|p| p.confidence >= show_threshold && p.class_id() < n_classes)
        .cloned()
        .collect();
    shown.sort_by(|a, b| rank_order((a.confidence, sample.id, &a.geometry), (b.confidence, sample.id, &b.geometry)));

    let gt = &sample.entities;
    let mut matched: Vec<bool> = vec![false; gt.len()];
    let mut verified = Vec::new();
    let mut rejected = Vec::new();
    for (pi, p) in shown.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gt.iter().enumerate() {
            if matched[gi] {
                continue;
            }
            if let Some(ov) = verifies(p, g) {
                if best.is_none_or(|(_, b)| ov > b) {
                    best = Some((gi, ov));
                }
            }
        }
        match best {
            Some((gi, _)) => {
                matched[gi] = true;
                verified.push(pi);
            }
            None => rejected.push(pi),
        }
    }
    let corrected: Vec<EntityAnnotation> = gt
        .iter()
        .zip(&matched)
        .map(|(g, &m)| g.with_kind(if m { LabelKind::WeakVerified } else { LabelKind::Strong }))
        .collect();
    let added_strong: Vec<EntityAnnotation> = corrected
        .iter()
        .filter(|c| c.label_kind == LabelKind::Strong)
        .cloned()
        .collect();
    let ap_before = sample_quality(kind, sample.id, &shown, &corrected, n_classes);
    let ap_after = sample_quality(
        kind,
        sample.id,
        &labels_as_predictions(&corrected, n_classes),
        &corrected,
        n_classes,
    );
    let cost = Cost::new(added_strong.len() as u64, shown.len() as u64, model);
    let outcome = FeedbackOutcome {
        sample_id: sample.id,
        shown,
        verified,
        rejected,
        added_strong,
        corrected: corrected.clone(),
        ap_before,
        ap_after,
    };
    (outcome, corrected, cost)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Draw,
    Verify,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub cycle: usize,
    pub sample_id: u64,
    pub action: ActionKind,
    pub seconds: u64,
}

/// Annotation seconds per `(cycle, sample, action)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostLedger {
    entries: Vec<LedgerEntry>,
    total_seconds: u64,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, cycle: usize, id: SampleId, cost: Cost, model: CostModel) {
        for (action, n, unit) in [
            (ActionKind::Draw, cost.draws, model.draw),
            (ActionKind::Verify, cost.verifies, model.verify),
        ] {
            if n > 0 {
                self.entries.push(LedgerEntry {
                    cycle,
                    sample_id: id.0,
                    action,
                    seconds: n * unit,
                });
                self.total_seconds += n * unit;
            }
        }
    }

    pub fn total_seconds(&self) -> u64 {
        self.total_seconds
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// Seconds spent up to and including `cycle`.
    pub fn seconds_through(&self, cycle: usize) -> u64 {
        self.entries.iter().filter(|e| e.cycle <= cycle).map(|e| e.seconds).sum()
    }

    /// CSV with header `cycle,sample_id,action,seconds`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for e in &self.entries {
            wr.serialize(e)?;
        }
        if self.entries.is_empty() {
            wr.write_record(["cycle", "sample_id", "action", "seconds"])?;
        }
        wr.flush().map_err(|e| OpadError::io("writing ledger", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BBox, SampleInputs, Span};

    fn boxed(class_id: usize, b: [f64; 4]) -> EntityAnnotation {
        EntityAnnotation {
            class_id,
            geometry: Geometry::Box(BBox::new(b[0], b[1], b[2], b[3]).unwrap()),
            label_kind: LabelKind::Strong,
        }
    }

    fn sample(entities: Vec<EntityAnnotation>) -> Sample {
        Sample {
            id: SampleId(0),
            entities,
            inputs: SampleInputs::Proposals(vec![]),
        }
    }

    fn pred(class_id: usize, conf: f64, b: [f64; 4], n: usize) -> Prediction {
        let mut s = vec![(1.0 - conf) / n as f64; n + 1];
        s[class_id] = conf;
        Prediction::new(Geometry::Box(BBox::new(b[0], b[1], b[2], b[3]).unwrap()), s)
    }

    fn grid(i: usize) -> [f64; 4] {
        let x = 0.1 * i as f64;
        [x, 0.0, x + 0.08, 0.1]
    }

    #[test]
    fn strong_costs() {
        let s = sample((0..6).map(|i| boxed(0, grid(i))).collect());
        let (labels, c) = annotate_strong(&s, AnnotationState::Unlabelled, CostModel::DETECTION).unwrap();
        assert_eq!(labels.len(), 6);
        assert_eq!(c.seconds, 90);
        let (_, c) = annotate_strong(&sample(vec![]), AnnotationState::Unlabelled, CostModel::DETECTION).unwrap();
        assert_eq!(c.seconds, 0);
        let spans: Vec<EntityAnnotation> = (0..3)
            .map(|i| EntityAnnotation {
                class_id: 0,
                geometry: Geometry::Span(Span::new(2 * i, 2 * i + 1).unwrap()),
                label_kind: LabelKind::Strong,
            })
            .collect();
        let (_, c) = annotate_strong(&sample(spans), AnnotationState::Unlabelled, CostModel::SEQUENCE).unwrap();
        assert_eq!(c.seconds, 12);
        assert!(annotate_strong(&sample(vec![]), AnnotationState::WeakLabelled, CostModel::DETECTION).is_err());
    }

    #[test]
    fn perfect_predictions_cost_verification_only() {
        let gt: Vec<EntityAnnotation> = (0..3).map(|i| boxed(i % 2, grid(i))).collect();
        let preds: Vec<Prediction> = gt
            .iter()
            .map(|g| {
                let b = g.geometry.as_box().unwrap();
                pred(g.class_id, 0.9, [b.x0, b.y0, b.x1, b.y1], 2)
            })
            .collect();
        let (out, labels, cost) = annotate_weak(&sample(gt.clone()), TaskKind::Detection, 2, &preds, 0.5, CostModel::DETECTION);
        assert_eq!(cost.seconds, 15);
        assert_eq!(out.ap_before, 1.0);
        assert_eq!(out.ap_after, 1.0);
        assert!(labels.iter().all(|l| l.label_kind == LabelKind::WeakVerified));
        assert!(out.added_strong.is_empty());
    }

    #[test]
    fn four_shown_two_missed() {
        let gt: Vec<EntityAnnotation> = (0..4).map(|i| boxed(0, grid(i))).collect();
        let mut preds: Vec<Prediction> = (0..2).map(|i| pred(0, 0.8, grid(i), 1)).collect();
        preds.push(pred(0, 0.7, [0.5, 0.5, 0.6, 0.6], 1));
        preds.push(pred(0, 0.6, [0.7, 0.7, 0.8, 0.8], 1));
        let (out, labels, cost) = annotate_weak(&sample(gt.clone()), TaskKind::Detection, 1, &preds, 0.5, CostModel::DETECTION);
        assert_eq!(out.shown.len(), 4);
        assert_eq!(out.added_strong.len(), 2);
        assert_eq!(cost.seconds, 4 * 5 + 2 * 15);
        assert_eq!(out.verified.len() + out.rejected.len(), out.shown.len());
        let geo: Vec<_> = labels.iter().map(|l| (l.class_id, l.geometry)).collect();
        let want: Vec<_> = gt.iter().map(|l| (l.class_id, l.geometry)).collect();
        assert_eq!(geo, want);
    }

    #[test]
    fn low_iou_is_rejected_and_redrawn() {
        // width 1.0 box vs prediction covering 0.45 of it: IoU = 0.45
        let gt = vec![boxed(0, [0.0, 0.0, 1.0, 1.0])];
        let preds = vec![pred(0, 0.9, [0.0, 0.0, 0.45, 1.0], 1)];
        let (out, labels, cost) = annotate_weak(&sample(gt), TaskKind::Detection, 1, &preds, 0.5, CostModel::DETECTION);
        assert_eq!(out.rejected, vec![0]);
        assert_eq!(labels[0].label_kind, LabelKind::Strong);
        assert_eq!(cost.seconds, 5 + 15);
    }

    #[test]
    fn wrong_class_is_rejected() {
        let gt = vec![boxed(0, [0.0, 0.0, 1.0, 1.0])];
        let preds = vec![pred(1, 0.9, [0.0, 0.0, 1.0, 1.0], 2)];
        let (out, _, _) = annotate_weak(&sample(gt), TaskKind::Detection, 2, &preds, 0.5, CostModel::DETECTION);
        assert_eq!(out.rejected, vec![0]);
    }

    #[test]
    fn low_confidence_predictions_are_not_shown() {
        let gt = vec![boxed(0, [0.0, 0.0, 1.0, 1.0])];
        let preds = vec![pred(0, 0.4, [0.0, 0.0, 1.0, 1.0], 2)];
        let (out, _, cost) = annotate_weak(&sample(gt), TaskKind::Detection, 2, &preds, 0.5, CostModel::DETECTION);
        assert!(out.shown.is_empty());
        assert_eq!(cost.seconds, 15);
    }

    #[test]
    fn ledger_totals_and_csv() {
        let mut l = CostLedger::new();
        l.record(0, SampleId(3), Cost::new(2, 1, CostModel::DETECTION), CostModel::DETECTION);
        l.record(1, SampleId(4), Cost::new(0, 3, CostModel::DETECTION), CostModel::DETECTION);
        assert_eq!(l.total_seconds(), 30 + 5 + 15);
        assert_eq!(l.entries().iter().map(|e| e.seconds).sum::<u64>(), l.total_seconds());
        assert_eq!(l.seconds_through(0), 35);
        let mut buf = Vec::new();
        l.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("cycle,sample_id,action,seconds\n0,3,draw,30\n0,3,verify,5\n"));
    }
}
