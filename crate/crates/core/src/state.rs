//! MDP state: per-sample embeddings of candidate and state-set samples
//! under the current prediction model.

use ndarray::Array2;
use rayon::prelude::*;

use crate::data::{Dataset, SampleId, TaskKind};
use crate::error::{OpadError, Result};
use crate::theta::ThetaModel;

/// Fixed-width embedding of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEmbedding(pub Vec<f64>);

/// Candidate matrix `c_t` and state-set matrix `s_t`, rows in id order.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRepr {
    pub candidates: Array2<f64>,
    pub state: Array2<f64>,
    pub candidate_ids: Vec<SampleId>,
    pub state_ids: Vec<SampleId>,
    pub cycle_index: usize,
}

impl StateRepr {
    pub fn dim(&self) -> usize {
        self.candidates.ncols()
    }

    pub fn n_candidates(&self) -> usize {
        self.candidates.nrows()
    }
}

/// `K * (C + 1) + d` for detection, `max_len * n_tags` for tagging.
pub fn embedding_dim(theta: &ThetaModel, top_k: usize) -> usize {
    match theta.kind {
        TaskKind::Detection => top_k * theta.score_width() + theta.feature_dim(),
        TaskKind::Sequence => padded_sequence_dim(theta.max_len(), theta.n_tags()),
    }
}

pub fn padded_sequence_dim(max_len: usize, n_tags: usize) -> usize {
    max_len * n_tags
}

/// Detection: class scores of the `top_k` most confident predictions
/// (confidence descending, zero-padded) followed by the mean proposal
/// feature vector. Tagging: per-token tag scores, zero-padded to `max_len`.
pub fn encode_sample(theta: &ThetaModel, dataset: &Dataset, id: SampleId, top_k: usize) -> Result<SampleEmbedding> {
    let sample = dataset.sample(id)?;
    let dim = embedding_dim(theta, top_k);
    let mut v = vec![0.0; dim];
    match theta.kind {
        TaskKind::Detection => {
            let mut preds = theta.predict(sample)?;
            preds.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
            let w = theta.score_width();
            for (slot, p) in preds.iter().take(top_k).enumerate() {
                v[slot * w..(slot + 1) * w].copy_from_slice(&p.class_scores);
            }
            let props = sample.proposals();
            if !props.is_empty() {
                let base = top_k * w;
                for p in props {
                    for (o, f) in v[base..].iter_mut().zip(&p.features) {
                        *o += f;
                    }
                }
                let n = props.len() as f64;
                v[base..].iter_mut().for_each(|o| *o /= n);
            }
        }
        TaskKind::Sequence => {
            let scores = theta.score_rows(sample)?;
            let t = theta.n_tags();
            for (i, row) in scores.rows().into_iter().take(theta.max_len()).enumerate() {
                for (o, s) in v[i * t..(i + 1) * t].iter_mut().zip(row.iter()) {
                    *o = *s;
                }
            }
        }
    }
    Ok(SampleEmbedding(v))
}

/// Stacks embeddings of `ids` (sorted) into a matrix.
pub fn encode_set(theta: &ThetaModel, dataset: &Dataset, ids: &[SampleId], top_k: usize) -> Result<(Array2<f64>, Vec<SampleId>)> {
    let mut ids = ids.to_vec();
    ids.sort();
    let rows: Vec<SampleEmbedding> = ids
        .par_iter()
        .map(|&id| encode_sample(theta, dataset, id, top_k))
        .collect::<Result<_>>()?;
    let dim = embedding_dim(theta, top_k);
    let mut m = Array2::zeros((ids.len(), dim));
    for (mut row, e) in m.rows_mut().into_iter().zip(rows) {
        row.assign(&ndarray::Array1::from(e.0));
    }
    Ok((m, ids))
}

pub fn build_state(
    theta: &ThetaModel,
    dataset: &Dataset,
    x_cand: &[SampleId],
    x_state: &[SampleId],
    top_k: usize,
    cycle_index: usize,
) -> Result<StateRepr> {
    if x_cand.is_empty() {
        return Err(OpadError::Empty("candidate set"));
    }
    if x_state.is_empty() {
        return Err(OpadError::Empty("state set"));
    }
    let (candidates, candidate_ids) = encode_set(theta, dataset, x_cand, top_k)?;
    let (state, state_ids) = encode_set(theta, dataset, x_state, top_k)?;
    Ok(StateRepr {
        candidates,
        state,
        candidate_ids,
        state_ids,
        cycle_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Proposal, Sample, SampleInputs, Splits, BBox};
    use crate::rng;
    use crate::synth::{generate_detection_dataset, generate_sequence_dataset, DetectionTaskSpec, SequenceTaskConfig};
    use crate::theta::ThetaConfig;

    #[test]
    fn detection_dimension() {
        let ds = generate_detection_dataset(&DetectionTaskSpec::default(), 4, 0).unwrap();
        let theta = ThetaModel::new(&ds, ThetaConfig::default(), &mut rng::from_seed(0));
        assert_eq!(embedding_dim(&theta, 10), 156);
        assert_eq!(encode_sample(&theta, &ds, SampleId(0), 10).unwrap().0.len(), 156);
    }

    #[test]
    fn sequence_dimension_matches_padded_tags() {
        let spec = SequenceTaskConfig {
            n_entity_classes: 4,
            max_len: 150,
            ..SequenceTaskConfig::default()
        }
        .build()
        .unwrap();
        let ds = generate_sequence_dataset(&spec, 3, 0).unwrap();
        assert_eq!(padded_sequence_dim(150, 20), 3000);
        let theta = ThetaModel::with_shape(TaskKind::Sequence, 4, 16, 150, ThetaConfig::default(), &mut rng::from_seed(0));
        assert_eq!(embedding_dim(&theta, 10), 150 * 17);
        let e = encode_sample(&theta, &ds, SampleId(0), 10).unwrap();
        let len = ds.samples[0].tokens().len();
        assert!(e.0[len * 17..].iter().all(|&v| v == 0.0));
        assert!(e.0[..len * 17].iter().all(|&v| v > 0.0));
    }

    #[test]
    fn no_predictions_gives_zero_scores_then_mean_features() {
        let ds = Dataset {
            task: TaskKind::Detection,
            n_classes: 2,
            feature_dim: 2,
            max_len: 0,
            generator_seed: 0,
            generator: serde_json::Value::Null,
            splits: Splits::default(),
            samples: vec![Sample {
                id: SampleId(0),
                entities: vec![],
                inputs: SampleInputs::Proposals(vec![
                    Proposal {
                        bbox: BBox::new(0.0, 0.0, 0.5, 0.5).unwrap(),
                        features: vec![1.0, 2.0],
                    },
                    Proposal {
                        bbox: BBox::new(0.1, 0.1, 0.5, 0.5).unwrap(),
                        features: vec![3.0, 6.0],
                    },
                ]),
            }],
        };
        // Zero output layer: uniform scores, argmax ties resolve to class 0,
        // so force background by an untrained-but-biased model instead.
        let mut theta = ThetaModel::new(&ds, ThetaConfig::default(), &mut rng::from_seed(0));
        let mut ck = theta.checkpoint();
        let n = ck.params.len();
        ck.params[n - 1] = 10.0; // background bias
        theta.restore_params(&ck).unwrap();
        assert!(theta.predict(&ds.samples[0]).unwrap().is_empty());
        let e = encode_sample(&theta, &ds, SampleId(0), 3).unwrap();
        assert_eq!(e.0.len(), 3 * 3 + 2);
        assert!(e.0[..9].iter().all(|&v| v == 0.0));
        assert_eq!(&e.0[9..], &[2.0, 4.0]);
    }

    #[test]
    fn build_state_shapes_and_determinism() {
        let ds = generate_detection_dataset(&DetectionTaskSpec::default(), 600, 0).unwrap();
        let theta = ThetaModel::new(&ds, ThetaConfig::default(), &mut rng::from_seed(0));
        let cand: Vec<SampleId> = (0..256).map(SampleId).rev().collect();
        let st: Vec<SampleId> = (300..556).map(SampleId).collect();
        let s = build_state(&theta, &ds, &cand, &st, 10, 0).unwrap();
        assert_eq!(s.candidates.dim(), (256, 156));
        assert_eq!(s.state.dim(), (256, 156));
        assert!(s.candidate_ids.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s, build_state(&theta, &ds, &cand, &st, 10, 0).unwrap());
        let single = build_state(&theta, &ds, &cand[..1], &st[..1], 10, 0).unwrap();
        assert_eq!(single.candidates.nrows(), 1);
        assert!(matches!(build_state(&theta, &ds, &[], &st, 10, 0), Err(OpadError::Empty(_))));
    }
}
