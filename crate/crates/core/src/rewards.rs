//! Cycle rewards: metric delta, class-balance entropy of the acquired batch
//! and annotator feedback, combined linearly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::acquisition::entropy;
use crate::annotator::{labels_as_predictions, FeedbackOutcome};
use crate::data::{EntityAnnotation, TaskKind};
use crate::error::{OpadError, Result};
use crate::theta::{average_precision, Evaluated, MetricKind};

pub const DEFAULT_LAMBDA_CLS: f64 = 0.25;
pub const DEFAULT_LAMBDA_FB: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub use_class_entropy: bool,
    pub lambda_cls: f64,
    pub use_feedback: bool,
    pub lambda_fb: f64,
    pub metric_kind: MetricKind,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            use_class_entropy: false,
            lambda_cls: DEFAULT_LAMBDA_CLS,
            use_feedback: false,
            lambda_fb: DEFAULT_LAMBDA_FB,
            metric_kind: MetricKind::AP,
        }
    }
}

impl RewardConfig {
    pub fn vanilla(metric_kind: MetricKind) -> Self {
        RewardConfig {
            metric_kind,
            ..Self::default()
        }
    }

    pub fn with_class_entropy(metric_kind: MetricKind, lambda: f64) -> Self {
        RewardConfig {
            use_class_entropy: true,
            lambda_cls: lambda,
            metric_kind,
            ..Self::default()
        }
    }

    pub fn with_feedback(lambda: f64) -> Self {
        RewardConfig {
            use_feedback: true,
            lambda_fb: lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self, task: TaskKind) -> Result<()> {
        for (name, v) in [("lambda_cls", self.lambda_cls), ("lambda_fb", self.lambda_fb)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(OpadError::config(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        if self.use_feedback && task != TaskKind::Detection {
            return Err(OpadError::config("the feedback reward applies to detection tasks only"));
        }
        let expected = match task {
            TaskKind::Detection => MetricKind::AP,
            TaskKind::Sequence => MetricKind::Fscore,
        };
        if self.metric_kind != expected {
            return Err(OpadError::config(format!(
                "metric_kind {:?} does not fit a {task} task (expected {expected:?})",
                self.metric_kind
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub vanilla: f64,
    pub cls_entropy: f64,
    pub feedback: f64,
    pub total: f64,
}

pub fn vanilla_reward(metric_t: f64, metric_prev: f64) -> f64 {
    metric_t - metric_prev
}

/// Entropy of the class distribution over every ground-truth entity of the
/// acquired batch; 0 when the batch has no entities.
pub fn class_entropy_reward<'a>(batch: impl IntoIterator<Item = &'a [EntityAnnotation]>) -> f64 {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for labels in batch {
        for l in labels {
            *counts.entry(l.class_id).or_default() += 1;
        }
    }
    let n: usize = counts.values().sum();
    if n == 0 {
        return 0.0;
    }
    let p: Vec<f64> = counts.values().map(|&c| c as f64 / n as f64).collect();
    entropy(&p)
}

/// Batch AP after correction minus batch AP of the shown predictions, both
/// against the corrected labels.
pub fn feedback_reward(task: TaskKind, n_classes: usize, outcomes: &[FeedbackOutcome]) -> Result<f64> {
    if task != TaskKind::Detection {
        return Err(OpadError::config("the feedback reward applies to detection tasks only"));
    }
    let before: Vec<Evaluated> = outcomes
        .iter()
        .map(|o| Evaluated {
            id: o.sample_id,
            predictions: o.shown.clone(),
            ground_truth: o.corrected.clone(),
        })
        .collect();
    let after: Vec<Evaluated> = outcomes
        .iter()
        .map(|o| Evaluated {
            id: o.sample_id,
            predictions: labels_as_predictions(&o.corrected, n_classes),
            ground_truth: o.corrected.clone(),
        })
        .collect();
    let ap_before = average_precision(&before, n_classes, 0.5).value;
    let ap_after = average_precision(&after, n_classes, 0.5).value;
    Ok(ap_after - ap_before)
}

pub fn combine(config: &RewardConfig, vanilla: f64, cls_entropy: f64, feedback: f64) -> RewardBreakdown {
    let cls_entropy = if config.use_class_entropy { cls_entropy } else { 0.0 };
    let feedback = if config.use_feedback { feedback } else { 0.0 };
    let mut total = vanilla;
    if config.use_class_entropy {
        total += config.lambda_cls * cls_entropy;
    }
    if config.use_feedback {
        total += config.lambda_fb * feedback;
    }
    RewardBreakdown {
        vanilla,
        cls_entropy,
        feedback,
        total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::{annotate_weak, CostModel};
    use crate::data::{BBox, Geometry, LabelKind, Prediction, Sample, SampleId, SampleInputs};

    fn ann(class_id: usize) -> EntityAnnotation {
        EntityAnnotation {
            class_id,
            geometry: Geometry::Box(BBox::new(0.0, 0.0, 0.5, 0.5).unwrap()),
            label_kind: LabelKind::Strong,
        }
    }

    #[test]
    fn vanilla_values() {
        assert!((vanilla_reward(0.45, 0.42) - 0.03).abs() < 1e-12);
        assert_eq!(vanilla_reward(0.45, 0.45), 0.0);
        assert!((vanilla_reward(0.40, 0.45) + 0.05).abs() < 1e-12);
    }

    #[test]
    fn class_entropy_values() {
        let two = [vec![ann(0)], vec![ann(1)]];
        assert!((class_entropy_reward(two.iter().map(Vec::as_slice)) - 2f64.ln()).abs() < 1e-12);
        let one = [vec![ann(2), ann(2)]];
        assert_eq!(class_entropy_reward(one.iter().map(Vec::as_slice)), 0.0);
        let skew = [vec![ann(0), ann(0)], vec![ann(0), ann(1)]];
        assert!((class_entropy_reward(skew.iter().map(Vec::as_slice)) - 0.562335).abs() < 1e-6);
        let empty: [Vec<EntityAnnotation>; 2] = [vec![], vec![]];
        assert_eq!(class_entropy_reward(empty.iter().map(Vec::as_slice)), 0.0);
    }

    #[test]
    fn combine_values() {
        let c = RewardConfig::with_class_entropy(MetricKind::AP, 0.25);
        let b = combine(&c, 0.03, 0.5, 0.7);
        assert!((b.total - 0.155).abs() < 1e-12);
        assert_eq!(b.feedback, 0.0);
        let off = combine(&RewardConfig::default(), 0.03, 0.5, 0.7);
        assert_eq!(off.total.to_bits(), 0.03f64.to_bits());
        let zero = combine(&RewardConfig::with_class_entropy(MetricKind::AP, 0.0), 0.03, 0.5, 0.0);
        assert_eq!(zero.total.to_bits(), 0.03f64.to_bits());
        assert_eq!(RewardConfig::default().lambda_fb, 0.1);
    }

    #[test]
    fn feedback_only_for_detection() {
        assert!(feedback_reward(TaskKind::Sequence, 2, &[]).is_err());
        assert!(RewardConfig::with_feedback(0.1).validate(TaskKind::Sequence).is_err());
        assert!(RewardConfig::with_feedback(0.1).validate(TaskKind::Detection).is_ok());
    }

    fn sample(id: u64, entities: Vec<EntityAnnotation>) -> Sample {
        Sample {
            id: SampleId(id),
            entities,
            inputs: SampleInputs::Proposals(vec![]),
        }
    }

    fn boxed(i: usize) -> Geometry {
        let x = 0.1 * i as f64;
        Geometry::Box(BBox::new(x, 0.0, x + 0.08, 0.1).unwrap())
    }

    #[test]
    fn feedback_values() {
        let gt: Vec<EntityAnnotation> = (0..3)
            .map(|i| EntityAnnotation {
                class_id: 0,
                geometry: boxed(i),
                label_kind: LabelKind::Strong,
            })
            .collect();
        let s = sample(0, gt.clone());
        let perfect: Vec<Prediction> = gt.iter().map(|g| Prediction::new(g.geometry, vec![0.9, 0.1])).collect();
        let (o, _, _) = annotate_weak(&s, TaskKind::Detection, 1, &perfect, 0.5, CostModel::DETECTION);
        assert_eq!(feedback_reward(TaskKind::Detection, 1, &[o]).unwrap(), 0.0);

        let (o, _, _) = annotate_weak(&s, TaskKind::Detection, 1, &[], 0.5, CostModel::DETECTION);
        assert_eq!(feedback_reward(TaskKind::Detection, 1, &[o]).unwrap(), 1.0);

        // Five GT boxes; three correct predictions ranked first, two missed:
        // AP = 3/5 before correction.
        let gt: Vec<EntityAnnotation> = (0..5)
            .map(|i| EntityAnnotation {
                class_id: 0,
                geometry: boxed(i),
                label_kind: LabelKind::Strong,
            })
            .collect();
        let s = sample(1, gt.clone());
        let preds: Vec<Prediction> = gt[..3].iter().map(|g| Prediction::new(g.geometry, vec![0.9, 0.1])).collect();
        let (o, _, _) = annotate_weak(&s, TaskKind::Detection, 1, &preds, 0.5, CostModel::DETECTION);
        assert!((o.ap_before - 0.6).abs() < 1e-12);
        assert!((feedback_reward(TaskKind::Detection, 1, &[o]).unwrap() - 0.4).abs() < 1e-12);
    }
}
