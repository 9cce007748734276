//! Average precision over boxes and micro entity-F1 over spans.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{EntityAnnotation, Geometry, Prediction, SampleId, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    AP,
    Fscore,
}

/// `value` aggregates `per_class`:
/// - AP: arithmetic mean over classes with at least one ground-truth
///   instance (`Some` entries); 0 when there are none.
/// - Fscore: micro F1 over the pooled per-class counts; `per_class` holds
///   each class's own F1 (`None` when the class has neither ground truth nor
///   predictions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub kind: MetricKind,
    pub value: f64,
    pub per_class: Vec<Option<f64>>,
}

/// One sample's model output next to its reference labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub id: SampleId,
    pub predictions: Vec<Prediction>,
    pub ground_truth: Vec<EntityAnnotation>,
}

/// Ranking order for detections of one class: confidence descending, then
/// sample id, then geometry.
pub fn rank_order(a: (f64, SampleId, &Geometry), b: (f64, SampleId, &Geometry)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then_with(|| {
        let (ka, kb) = (a.2.sort_key(), b.2.sort_key());
        ka.iter()
            .zip(&kb)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// All-point interpolated AP from TP flags in ranked order.
pub fn interpolated_ap(tp: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    let (mut tps, mut fps) = (0usize, 0usize);
    for &t in tp {
        if t {
            tps += 1;
        } else {
            fps += 1;
        }
        precision.push(tps as f64 / (tps + fps) as f64);
        recall.push(tps as f64 / n_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

/// Greedy TP/FP assignment for one class: each ranked prediction takes the
/// unmatched same-sample ground truth with the highest IoU at or above the
/// threshold (lowest index on ties).
fn match_class(
    samples: &[Evaluated],
    class_id: usize,
    iou_threshold: f64,
) -> (Vec<bool>, usize) {
    let mut ranked: Vec<(usize, &Prediction)> = samples
        .iter()
        .enumerate()
        .flat_map(|(si, s)| s.predictions.iter().map(move |p| (si, p)))
        .filter(|(_, p)| p.class_id() == class_id)
        .collect();
    ranked.sort_by(|(sa, a), (sb, b)| {
        rank_order(
            (a.confidence, samples[*sa].id, &a.geometry),
            (b.confidence, samples[*sb].id, &b.geometry),
        )
    });
    let gt: Vec<Vec<&Geometry>> = samples
        .iter()
        .map(|s| {
            s.ground_truth
                .iter()
                .filter(|g| g.class_id == class_id)
                .map(|g| &g.geometry)
                .collect()
        })
        .collect();
    let n_gt = gt.iter().map(Vec::len).sum();
    let mut used: Vec<Vec<bool>> = gt.iter().map(|g| vec![false; g.len()]).collect();
    let tp = ranked
        .iter()
        .map(|(si, p)| {
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in gt[*si].iter().enumerate() {
                if used[*si][gi] {
                    continue;
                }
                let iou = p.geometry.overlap(g);
                if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((gi, iou));
                }
            }
            match best {
                Some((gi, _)) => {
                    used[*si][gi] = true;
                    true
                }
                None => false,
            }
        })
        .collect();
    (tp, n_gt)
}

/// Macro-averaged AP over classes `0..n_classes`. Predictions whose argmax
/// is the background slot (`n_classes`) are ignored.
pub fn average_precision(samples: &[Evaluated], n_classes: usize, iou_threshold: f64) -> MetricReport {
    let per_class: Vec<Option<f64>> = (0..n_classes)
        .map(|k| {
            let (tp, n_gt) = match_class(samples, k, iou_threshold);
            (n_gt > 0).then(|| interpolated_ap(&tp, n_gt))
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let value = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    MetricReport {
        kind: MetricKind::AP,
        value,
        per_class,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    /// Harmonic mean of precision and recall, as `2tp / (2tp + fp + fn)`.
    pub fn f1(&self) -> f64 {
        if self.tp == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / (2 * self.tp + self.fp + self.fn_) as f64
        }
    }
}

/// Per-class exact-match counts over `(span, class)` pairs.
pub fn span_counts(predicted: &[(Span, usize)], gold: &[(Span, usize)], n_classes: usize) -> Vec<Counts> {
    let mut counts = vec![Counts::default(); n_classes];
    let mut remaining: BTreeMap<(Span, usize), usize> = BTreeMap::new();
    for g in gold {
        *remaining.entry(*g).or_default() += 1;
    }
    for p in predicted {
        match remaining.get_mut(p) {
            Some(n) if *n > 0 => {
                *n -= 1;
                counts[p.1].tp += 1;
            }
            _ => counts[p.1].fp += 1,
        }
    }
    for ((_, k), n) in remaining {
        counts[k].fn_ += n;
    }
    counts
}

/// Micro F1 over exact `(span, class)` matches.
pub fn entity_f_score(samples: &[Evaluated], n_classes: usize) -> MetricReport {
    let mut totals = vec![Counts::default(); n_classes];
    for s in samples {
        let predicted: Vec<(Span, usize)> = s
            .predictions
            .iter()
            .filter_map(|p| {
                let k = p.class_id();
                p.geometry.as_span().filter(|_| k < n_classes).map(|sp| (*sp, k))
            })
            .collect();
        let gold: Vec<(Span, usize)> = s
            .ground_truth
            .iter()
            .filter_map(|g| g.geometry.as_span().map(|sp| (*sp, g.class_id)))
            .collect();
        for (t, c) in totals.iter_mut().zip(span_counts(&predicted, &gold, n_classes)) {
            t.tp += c.tp;
            t.fp += c.fp;
            t.fn_ += c.fn_;
        }
    }
    let micro = totals.iter().fold(Counts::default(), |a, c| Counts {
        tp: a.tp + c.tp,
        fp: a.fp + c.fp,
        fn_: a.fn_ + c.fn_,
    });
    MetricReport {
        kind: MetricKind::Fscore,
        value: micro.f1(),
        per_class: totals
            .iter()
            .map(|c| (c.tp + c.fp + c.fn_ > 0).then(|| c.f1()))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BBox, LabelKind};

    fn gt_box(class_id: usize, b: [f64; 4]) -> EntityAnnotation {
        EntityAnnotation {
            class_id,
            geometry: Geometry::Box(BBox::new(b[0], b[1], b[2], b[3]).unwrap()),
            label_kind: LabelKind::Strong,
        }
    }

    fn pred_box(scores: Vec<f64>, b: [f64; 4]) -> Prediction {
        Prediction::new(Geometry::Box(BBox::new(b[0], b[1], b[2], b[3]).unwrap()), scores)
    }

    #[test]
    fn single_match_is_perfect() {
        // IoU of [0,0,1,1] with [0,0,0.6,1] is 0.6.
        let s = Evaluated {
            id: SampleId(0),
            predictions: vec![pred_box(vec![0.9, 0.05, 0.05], [0.0, 0.0, 0.6, 1.0])],
            ground_truth: vec![gt_box(0, [0.0, 0.0, 1.0, 1.0])],
        };
        let r = average_precision(&[s], 2, 0.5);
        assert_eq!(r.value, 1.0);
        assert_eq!(r.per_class, vec![Some(1.0), None]);
    }

    #[test]
    fn wrong_class_higher_confidence_does_not_hurt_other_class() {
        let s = Evaluated {
            id: SampleId(0),
            predictions: vec![
                pred_box(vec![0.05, 0.9, 0.05], [0.0, 0.0, 1.0, 1.0]),
                pred_box(vec![0.6, 0.3, 0.1], [0.0, 0.0, 1.0, 1.0]),
            ],
            ground_truth: vec![gt_box(0, [0.0, 0.0, 1.0, 1.0])],
        };
        let r = average_precision(&[s], 2, 0.5);
        assert_eq!(r.per_class[0], Some(1.0));
        assert_eq!(r.per_class[1], None);
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn false_positive_first_halves_precision() {
        // Ranked: FP (0.9), TP (0.8); one GT. Envelope precision at recall 1 is 0.5.
        let s = Evaluated {
            id: SampleId(0),
            predictions: vec![
                pred_box(vec![0.9, 0.1], [0.5, 0.5, 0.6, 0.6]),
                pred_box(vec![0.8, 0.2], [0.0, 0.0, 0.4, 0.4]),
            ],
            ground_truth: vec![gt_box(0, [0.0, 0.0, 0.4, 0.4])],
        };
        assert!((average_precision(&[s], 1, 0.5).value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn no_ground_truth_anywhere_is_zero() {
        let s = Evaluated {
            id: SampleId(0),
            predictions: vec![pred_box(vec![0.9, 0.1], [0.0, 0.0, 0.4, 0.4])],
            ground_truth: vec![],
        };
        assert_eq!(average_precision(&[s], 1, 0.5).value, 0.0);
    }

    fn span_gt(class_id: usize, a: usize, b: usize) -> EntityAnnotation {
        EntityAnnotation {
            class_id,
            geometry: Geometry::Span(Span::new(a, b).unwrap()),
            label_kind: LabelKind::Strong,
        }
    }

    fn span_pred(class_id: usize, a: usize, b: usize, n: usize) -> Prediction {
        let mut scores = vec![0.0; n + 1];
        scores[class_id] = 1.0;
        Prediction::new(Geometry::Span(Span::new(a, b).unwrap()), scores)
    }

    #[test]
    fn f_score_cases() {
        let gt = vec![span_gt(0, 0, 2), span_gt(1, 3, 4)];
        let perfect = Evaluated {
            id: SampleId(0),
            predictions: vec![span_pred(0, 0, 2, 2), span_pred(1, 3, 4, 2)],
            ground_truth: gt.clone(),
        };
        assert_eq!(entity_f_score(&[perfect], 2).value, 1.0);

        let empty = Evaluated {
            id: SampleId(0),
            predictions: vec![],
            ground_truth: gt.clone(),
        };
        assert_eq!(entity_f_score(&[empty], 2).value, 0.0);

        let half = Evaluated {
            id: SampleId(0),
            predictions: vec![span_pred(0, 0, 2, 2), span_pred(1, 5, 6, 2)],
            ground_truth: gt,
        };
        assert!((entity_f_score(&[half], 2).value - 0.5).abs() < 1e-15);
    }
}
