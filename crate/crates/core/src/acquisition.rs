//! Acquisition strategies behind one selection interface.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{choose_distinct, Dataset, Prediction, SampleId};
use crate::error::{OpadError, Result};
use crate::policy::{select_actions, Partition, PolicyNet};
use crate::rng::Rng;
use crate::state::StateRepr;
use crate::theta::ThetaModel;

/// Shannon entropy in nats; zero-probability entries contribute nothing.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyMode {
    Max,
    Sum,
}

/// Aggregate per-entity entropy of a sample; 0 without entities.
pub fn score_sample_entropy(predictions: &[Prediction], mode: EntropyMode) -> f64 {
    let hs = predictions.iter().map(|p| entropy(&p.class_scores));
    match mode {
        EntropyMode::Max => hs.fold(0.0, f64::max),
        EntropyMode::Sum => hs.sum(),
    }
}

/// Highest minus second-highest class score.
pub fn margin(p: &[f64]) -> f64 {
    let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in p {
        if v > a {
            b = a;
            a = v;
        } else if v > b {
            b = v;
        }
    }
    if b.is_finite() {
        a - b
    } else {
        0.0
    }
}

/// Maximum per-entity margin; 0 without entities.
pub fn score_sample_margin(predictions: &[Prediction]) -> f64 {
    predictions.iter().map(|p| margin(&p.class_scores)).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginDirection {
    /// Prefer samples whose most confident entity has the largest margin.
    #[default]
    Highest,
    /// Classical margin sampling: prefer the smallest per-entity margin.
    Lowest,
}

#[derive(Debug, Clone)]
pub enum AcquisitionStrategy {
    Random,
    EntropyMax,
    EntropySum,
    Margin(MarginDirection),
    Policy(Box<PolicyNet>),
}

/// Strategy name as used in configs and CSVs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Random,
    EntropyMax,
    EntropySum,
    Margin,
    Policy,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Random,
        StrategyKind::EntropyMax,
        StrategyKind::EntropySum,
        StrategyKind::Margin,
        StrategyKind::Policy,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::EntropyMax => "entropy-max",
            StrategyKind::EntropySum => "entropy-sum",
            StrategyKind::Margin => "margin",
            StrategyKind::Policy => "policy",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = OpadError;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| OpadError::config(format!("unknown strategy `{s}`")))
    }
}

impl AcquisitionStrategy {
    pub fn kind(&self) -> StrategyKind {
        match self {
            AcquisitionStrategy::Random => StrategyKind::Random,
            AcquisitionStrategy::EntropyMax => StrategyKind::EntropyMax,
            AcquisitionStrategy::EntropySum => StrategyKind::EntropySum,
            AcquisitionStrategy::Margin(_) => StrategyKind::Margin,
            AcquisitionStrategy::Policy(_) => StrategyKind::Policy,
        }
    }

    pub fn needs_state(&self) -> bool {
        matches!(self, AcquisitionStrategy::Policy(_))
    }
}

/// Everything a strategy may look at when choosing from the candidates.
pub struct SelectionInput<'a> {
    pub dataset: &'a Dataset,
    pub theta: &'a ThetaModel,
    pub candidates: &'a [SampleId],
    /// Required by the learned policy only.
    pub state: Option<&'a StateRepr>,
    pub partition: Option<&'a Partition>,
    pub epsilon: f64,
}

/// Top `n` ids by score, descending, ties to the lowest id.
pub fn top_by_score(scored: &[(SampleId, f64)], n: usize) -> Vec<SampleId> {
    let mut v = scored.to_vec();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().take(n).map(|(id, _)| id).collect()
}

fn score_candidates(
    input: &SelectionInput<'_>,
    score: impl Fn(&[Prediction]) -> f64 + Sync,
) -> Result<Vec<(SampleId, f64)>> {
    input
        .candidates
        .par_iter()
        .map(|&id| {
            let preds = input.theta.predict(input.dataset.sample(id)?)?;
            Ok((id, score(&preds)))
        })
        .collect()
}

/// Picks `n_cycle` distinct candidates.
pub fn select(
    strategy: &AcquisitionStrategy,
    input: &SelectionInput<'_>,
    n_cycle: usize,
    r: &mut Rng,
) -> Result<Vec<SampleId>> {
    if input.candidates.len() < n_cycle {
        return Err(OpadError::config(format!(
            "{} candidates cannot supply {n_cycle} selections",
            input.candidates.len()
        )));
    }
    let mut sorted = input.candidates.to_vec();
    sorted.sort();
    match strategy {
        AcquisitionStrategy::Random => Ok(choose_distinct(&sorted, n_cycle, r)),
        AcquisitionStrategy::EntropyMax => Ok(top_by_score(
            &score_candidates(input, |p| score_sample_entropy(p, EntropyMode::Max))?,
            n_cycle,
        )),
        AcquisitionStrategy::EntropySum => Ok(top_by_score(
            &score_candidates(input, |p| score_sample_entropy(p, EntropyMode::Sum))?,
            n_cycle,
        )),
        AcquisitionStrategy::Margin(MarginDirection::Highest) => {
            Ok(top_by_score(&score_candidates(input, score_sample_margin)?, n_cycle))
        }
        AcquisitionStrategy::Margin(MarginDirection::Lowest) => {
            // Negated minimum margin; samples without entities rank last.
            let scored = score_candidates(input, |p| {
                -p.iter().map(|e| margin(&e.class_scores)).fold(1.0, f64::min)
            })?;
            Ok(top_by_score(&scored, n_cycle))
        }
        AcquisitionStrategy::Policy(net) => {
            let (st, part) = match (input.state, input.partition) {
                (Some(s), Some(p)) => (s, p),
                _ => return Err(OpadError::config("policy selection needs a state and partition")),
            };
            if part.blocks().len() != n_cycle {
                return Err(OpadError::config("partition block count must equal n_cycle"));
            }
            let q = net.q_state(st)?;
            Ok(select_actions(&q, part, input.epsilon, r)
                .into_iter()
                .map(|row| st.candidate_ids[row])
                .collect())
        }
    }
}
