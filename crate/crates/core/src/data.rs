//! Samples, entity geometry, the on-disk dataset container and the pool
//! manager that tracks which samples are labelled, unlabelled, held out for
//! the state representation, or held out for reward computation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{OpadError, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleId(pub u64);

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Axis-aligned box in unit-page coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let b = BBox { x0, y0, x1, y1 };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(OpadError::config(format!("degenerate box {b:?}")))
        }
    }

    pub fn is_valid(&self) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let iw = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let ih = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Token span, `end` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start < end {
            Ok(Span { start, end })
        } else {
            Err(OpadError::config(format!("empty span {start}..{end}")))
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    Box(BBox),
    Span(Span),
}

impl Geometry {
    pub fn as_box(&self) -> Option<&BBox> {
        match self {
            Geometry::Box(b) => Some(b),
            Geometry::Span(_) => None,
        }
    }

    pub fn as_span(&self) -> Option<&Span> {
        match self {
            Geometry::Span(s) => Some(s),
            Geometry::Box(_) => None,
        }
    }

    /// Total order used as the final tie-break when ranking predictions.
    pub fn sort_key(&self) -> [f64; 4] {
        match self {
            Geometry::Box(b) => [b.x0, b.y0, b.x1, b.y1],
            Geometry::Span(s) => [s.start as f64, s.end as f64, 0.0, 0.0],
        }
    }

    /// Overlap used for verification: IoU for boxes, 1/0 exact match for spans.
    pub fn overlap(&self, other: &Geometry) -> f64 {
        match (self, other) {
            (Geometry::Box(a), Geometry::Box(b)) => a.iou(b),
            (Geometry::Span(a), Geometry::Span(b)) => {
                if a == b {
                    1.0
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelKind {
    Strong,
    WeakVerified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityAnnotation {
    pub class_id: usize,
    pub geometry: Geometry,
    pub label_kind: LabelKind,
}

impl EntityAnnotation {
    pub fn with_kind(&self, label_kind: LabelKind) -> Self {
        EntityAnnotation {
            label_kind,
            ..self.clone()
        }
    }
}

/// A model output: geometry plus a class-score vector. For detection the
/// last slot is background; for tagging the last slot is the outside class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub geometry: Geometry,
    pub class_scores: Vec<f64>,
    pub confidence: f64,
}

impl Prediction {
    /// Builds a prediction whose confidence is the max class score.
    pub fn new(geometry: Geometry, class_scores: Vec<f64>) -> Self {
        let confidence = class_scores.iter().copied().fold(0.0, f64::max);
        Prediction {
            geometry,
            class_scores,
            confidence,
        }
    }

    /// Index of the highest score, lowest index on ties.
    pub fn class_id(&self) -> usize {
        argmax(&self.class_scores)
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub bbox: BBox,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SampleInputs {
    Proposals(Vec<Proposal>),
    /// One feature vector per token.
    Tokens(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: SampleId,
    /// Ground truth; only reachable through the pools once annotated.
    pub entities: Vec<EntityAnnotation>,
    pub inputs: SampleInputs,
}

impl Sample {
    pub fn proposals(&self) -> &[Proposal] {
        match &self.inputs {
            SampleInputs::Proposals(p) => p,
            SampleInputs::Tokens(_) => &[],
        }
    }

    pub fn tokens(&self) -> &[Vec<f64>] {
        match &self.inputs {
            SampleInputs::Tokens(t) => t,
            SampleInputs::Proposals(_) => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Detection,
    Sequence,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Detection => "detection",
            TaskKind::Sequence => "sequence",
        })
    }
}

impl std::str::FromStr for TaskKind {
    type Err = OpadError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "detection" => Ok(TaskKind::Detection),
            "sequence" => Ok(TaskKind::Sequence),
            other => Err(OpadError::config(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<SampleId>,
    pub val: Vec<SampleId>,
    pub test: Vec<SampleId>,
}

const DATASET_FORMAT: &str = "opad-dataset";
const DATASET_VERSION: u32 = 1;

/// Immutable sample table. Sample ids equal their index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub task: TaskKind,
    /// Number of entity classes, excluding background / outside.
    pub n_classes: usize,
    pub feature_dim: usize,
    /// Maximum token count for sequence tasks; 0 for detection.
    pub max_len: usize,
    pub generator_seed: u64,
    /// The generator spec the samples were drawn from.
    pub generator: serde_json::Value,
    pub splits: Splits,
    pub samples: Vec<Sample>,
}

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    dataset: Dataset,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample(&self, id: SampleId) -> Result<&Sample> {
        self.samples
            .get(id.0 as usize)
            .filter(|s| s.id == id)
            .ok_or_else(|| OpadError::integrity(format!("unknown sample id {id}")))
    }

    pub fn ground_truth(&self, id: SampleId) -> Result<&[EntityAnnotation]> {
        Ok(&self.sample(id)?.entities)
    }

    /// Re-partitions sample ids into contiguous train / val / test blocks.
    pub fn with_splits(mut self, train: usize, val: usize, test: usize) -> Result<Self> {
        if train + val + test != self.samples.len() {
            return Err(OpadError::config(format!(
                "split sizes {train}+{val}+{test} do not sum to {} samples",
                self.samples.len()
            )));
        }
        let ids: Vec<SampleId> = self.samples.iter().map(|s| s.id).collect();
        self.splits = Splits {
            train: ids[..train].to_vec(),
            val: ids[train..train + val].to_vec(),
            test: ids[train + val..].to_vec(),
        };
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        let c = Container {
            format: DATASET_FORMAT.to_string(),
            version: DATASET_VERSION,
            dataset: self.clone(),
        };
        Ok(serde_json::to_string(&c)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Container = serde_json::from_str(s)?;
        if c.format != DATASET_FORMAT || c.version != DATASET_VERSION {
            return Err(OpadError::config(format!(
                "unsupported dataset container {} v{}",
                c.format, c.version
            )));
        }
        c.dataset.validate()?;
        Ok(c.dataset)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)
            .map_err(|e| OpadError::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path)
            .map_err(|e| OpadError::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&s)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.id.0 as usize != i {
                return Err(OpadError::integrity(format!("sample {i} has id {}", s.id)));
            }
            for e in &s.entities {
                if e.class_id >= self.n_classes {
                    return Err(OpadError::integrity(format!(
                        "sample {i}: class {} out of range",
                        e.class_id
                    )));
                }
                let ok = match e.geometry {
                    Geometry::Box(b) => b.is_valid(),
                    Geometry::Span(sp) => !sp.is_empty(),
                };
                if !ok {
                    return Err(OpadError::integrity(format!("sample {i}: degenerate entity")));
                }
            }
            let dim_ok = match &s.inputs {
                SampleInputs::Proposals(ps) => ps.iter().all(|p| p.features.len() == self.feature_dim),
                SampleInputs::Tokens(ts) => ts.iter().all(|t| t.len() == self.feature_dim),
            };
            if !dim_ok {
                return Err(OpadError::integrity(format!("sample {i}: feature dimension")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    PolicyTraining,
    Deployment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnnotationState {
    Unlabelled,
    StrongLabelled,
    WeakLabelled,
}

/// Pool membership for one active-learning run. Payloads stay in the
/// [`Dataset`]; the pools hold ids and acquired annotations only.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPools {
    regime: Regime,
    x_train: BTreeSet<SampleId>,
    x_val: BTreeSet<SampleId>,
    x_test: BTreeSet<SampleId>,
    x_state: BTreeSet<SampleId>,
    x_met: BTreeSet<SampleId>,
    x_init: BTreeSet<SampleId>,
    x_u: BTreeSet<SampleId>,
    x_l: BTreeSet<SampleId>,
    x_cand: BTreeSet<SampleId>,
    labels: BTreeMap<SampleId, Vec<EntityAnnotation>>,
    annotation: BTreeMap<SampleId, AnnotationState>,
    pub budget_total: Option<u64>,
    pub budget_spent: u64,
}

/// Fixed policy-training hold-outs shared by every episode.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldOut {
    pub x_state: BTreeSet<SampleId>,
    pub x_met: BTreeSet<SampleId>,
}

/// Draws the state-representation and metric sets from the train split.
pub fn hold_out_policy_sets(
    dataset: &Dataset,
    n_state: usize,
    met_fraction: f64,
    seed: u64,
) -> Result<HoldOut> {
    if !(0.0..1.0).contains(&met_fraction) {
        return Err(OpadError::config(format!("met_fraction {met_fraction} outside [0,1)")));
    }
    let train = &dataset.splits.train;
    let n_met = (met_fraction * train.len() as f64).ceil() as usize;
    if n_met + n_state > train.len() {
        return Err(OpadError::config(format!(
            "train split of {} cannot hold {n_met} metric + {n_state} state samples",
            train.len()
        )));
    }
    let mut r = rng::stream(seed, "holdout", 0);
    let picked = index::sample(&mut r, train.len(), n_met + n_state).into_vec();
    let x_met = picked[..n_met].iter().map(|&i| train[i]).collect();
    let x_state = picked[n_met..].iter().map(|&i| train[i]).collect();
    Ok(HoldOut { x_state, x_met })
}

fn labelled_from_gt(dataset: &Dataset, ids: &BTreeSet<SampleId>) -> Result<BTreeMap<SampleId, Vec<EntityAnnotation>>> {
    ids.iter()
        .map(|&id| Ok((id, dataset.ground_truth(id)?.to_vec())))
        .collect()
}

fn draw(ids: &[SampleId], n: usize, r: &mut Rng) -> BTreeSet<SampleId> {
    index::sample(r, ids.len(), n).into_iter().map(|i| ids[i]).collect()
}

/// Policy-training pools: metric and state hold-outs, a labelled seed set
/// and the remaining unlabelled pool, all drawn from the train split.
pub fn init_policy_training_pools(
    dataset: &Dataset,
    n_init: usize,
    n_state: usize,
    met_fraction: f64,
    rng_seed: u64,
) -> Result<DataPools> {
    let hold = hold_out_policy_sets(dataset, n_state, met_fraction, rng_seed)?;
    DataPools::start_episode(dataset, &hold, n_init, rng::derive(rng_seed, "episode", 0))
}

/// Deployment pools over the validation split. `x_state` is reused from
/// policy training and stays disjoint from validation.
pub fn init_deployment_pools(
    dataset: &Dataset,
    n_init: usize,
    x_state: &BTreeSet<SampleId>,
    rng_seed: u64,
) -> Result<DataPools> {
    let val = &dataset.splits.val;
    if n_init >= val.len() {
        return Err(OpadError::config(format!(
            "n_init {n_init} must be smaller than the validation split ({})",
            val.len()
        )));
    }
    let x_val: BTreeSet<SampleId> = val.iter().copied().collect();
    if let Some(id) = x_state.iter().find(|id| x_val.contains(id)) {
        return Err(OpadError::config(format!("state sample {id} lies in the validation split")));
    }
    let mut r = rng::stream(rng_seed, "deploy-init", 0);
    let x_init = draw(val, n_init, &mut r);
    let x_u = x_val.difference(&x_init).copied().collect();
    let labels = labelled_from_gt(dataset, &x_init)?;
    let mut annotation: BTreeMap<SampleId, AnnotationState> =
        val.iter().map(|&id| (id, AnnotationState::Unlabelled)).collect();
    for id in &x_init {
        annotation.insert(*id, AnnotationState::StrongLabelled);
    }
    Ok(DataPools {
        regime: Regime::Deployment,
        x_train: dataset.splits.train.iter().copied().collect(),
        x_val,
        x_test: dataset.splits.test.iter().copied().collect(),
        x_state: x_state.clone(),
        x_met: BTreeSet::new(),
        x_l: x_init.clone(),
        x_init,
        x_u,
        x_cand: BTreeSet::new(),
        labels,
        annotation,
        budget_total: None,
        budget_spent: 0,
    })
}

impl DataPools {
    /// Fresh episode pools reusing fixed hold-outs.
    pub fn start_episode(dataset: &Dataset, hold: &HoldOut, n_init: usize, seed: u64) -> Result<Self> {
        let x_train: BTreeSet<SampleId> = dataset.splits.train.iter().copied().collect();
        let rest: Vec<SampleId> = x_train
            .iter()
            .filter(|id| !hold.x_state.contains(id) && !hold.x_met.contains(id))
            .copied()
            .collect();
        if n_init > rest.len() {
            return Err(OpadError::config(format!(
                "train split leaves {} samples, need n_init = {n_init}",
                rest.len()
            )));
        }
        let mut r = rng::stream(seed, "episode-init", 0);
        let x_init = draw(&rest, n_init, &mut r);
        let x_u = rest.iter().filter(|id| !x_init.contains(id)).copied().collect();
        let labels = labelled_from_gt(dataset, &x_init)?;
        let mut annotation: BTreeMap<SampleId, AnnotationState> =
            x_train.iter().map(|&id| (id, AnnotationState::Unlabelled)).collect();
        for id in &x_init {
            annotation.insert(*id, AnnotationState::StrongLabelled);
        }
        Ok(DataPools {
            regime: Regime::PolicyTraining,
            x_train,
            x_val: dataset.splits.val.iter().copied().collect(),
            x_test: dataset.splits.test.iter().copied().collect(),
            x_state: hold.x_state.clone(),
            x_met: hold.x_met.clone(),
            x_l: x_init.clone(),
            x_init,
            x_u,
            x_cand: BTreeSet::new(),
            labels,
            annotation,
            budget_total: None,
            budget_spent: 0,
        })
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn unlabelled(&self) -> &BTreeSet<SampleId> {
        &self.x_u
    }

    pub fn labelled(&self) -> &BTreeSet<SampleId> {
        &self.x_l
    }

    pub fn initial(&self) -> &BTreeSet<SampleId> {
        &self.x_init
    }

    pub fn state_set(&self) -> &BTreeSet<SampleId> {
        &self.x_state
    }

    pub fn candidates(&self) -> &BTreeSet<SampleId> {
        &self.x_cand
    }

    pub fn train_set(&self) -> &BTreeSet<SampleId> {
        &self.x_train
    }

    pub fn val_set(&self) -> &BTreeSet<SampleId> {
        &self.x_val
    }

    /// Reward-computation set; only exists during policy training.
    pub fn metric_set(&self) -> Result<&BTreeSet<SampleId>> {
        match self.regime {
            Regime::PolicyTraining => Ok(&self.x_met),
            Regime::Deployment => Err(OpadError::Regime(
                "the metric set is not available during deployment".into(),
            )),
        }
    }

    /// Held-out test set; never read during policy training.
    pub fn test_set(&self) -> Result<&BTreeSet<SampleId>> {
        match self.regime {
            Regime::Deployment => Ok(&self.x_test),
            Regime::PolicyTraining => Err(OpadError::Regime(
                "the test set is not available during policy training".into(),
            )),
        }
    }

    pub fn annotation_state(&self, id: SampleId) -> AnnotationState {
        self.annotation.get(&id).copied().unwrap_or(AnnotationState::Unlabelled)
    }

    /// Acquired labels; `None` for anything outside the labelled set.
    pub fn labels(&self, id: SampleId) -> Option<&[EntityAnnotation]> {
        if self.x_l.contains(&id) {
            self.labels.get(&id).map(Vec::as_slice)
        } else {
            None
        }
    }

    /// `(id, labels)` over the labelled set in id order.
    pub fn labelled_annotations(&self) -> impl Iterator<Item = (SampleId, &[EntityAnnotation])> {
        self.x_l
            .iter()
            .map(move |id| (*id, self.labels.get(id).map(Vec::as_slice).unwrap_or(&[])))
    }

    /// Draws `n_pool * n_cycle` distinct candidates uniformly from the
    /// unlabelled pool and records them as the current candidate set.
    pub fn sample_candidates(&mut self, n_pool: usize, n_cycle: usize, r: &mut Rng) -> Result<Vec<SampleId>> {
        let needed = n_pool * n_cycle;
        if needed == 0 {
            return Err(OpadError::config("n_pool and n_cycle must be positive"));
        }
        if self.x_u.len() < needed {
            return Err(OpadError::EndOfEpisode {
                needed,
                available: self.x_u.len(),
            });
        }
        let pool: Vec<SampleId> = self.x_u.iter().copied().collect();
        let picked = draw(&pool, needed, r);
        self.x_cand = picked.clone();
        Ok(picked.into_iter().collect())
    }

    /// Moves `selected` from the unlabelled to the labelled set with their
    /// annotations attached.
    pub fn commit_selection(
        &mut self,
        selected: &[SampleId],
        annotations: Vec<Vec<EntityAnnotation>>,
    ) -> Result<()> {
        if selected.len() != annotations.len() {
            return Err(OpadError::integrity(format!(
                "{} ids but {} annotation lists",
                selected.len(),
                annotations.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for id in selected {
            if !seen.insert(*id) {
                return Err(OpadError::integrity(format!("duplicate id {id} in selection")));
            }
            if !self.x_u.contains(id) {
                return Err(OpadError::integrity(format!("id {id} is not unlabelled")));
            }
            if !self.x_cand.contains(id) {
                return Err(OpadError::integrity(format!("id {id} is not a current candidate")));
            }
        }
        for (id, anns) in selected.iter().zip(annotations) {
            self.x_u.remove(id);
            self.x_l.insert(*id);
            let state = if anns.iter().any(|a| a.label_kind == LabelKind::WeakVerified) {
                AnnotationState::WeakLabelled
            } else {
                AnnotationState::StrongLabelled
            };
            self.annotation.insert(*id, state);
            self.labels.insert(*id, anns);
        }
        if !selected.is_empty() {
            self.x_cand.clear();
        }
        Ok(())
    }

    /// Charges annotation seconds against the budget.
    pub fn charge(&mut self, seconds: u64) -> Result<()> {
        let spent = self.budget_spent + seconds;
        if let Some(total) = self.budget_total {
            if spent > total {
                return Err(OpadError::integrity(format!(
                    "charge of {seconds}s exceeds budget ({}/{total}s spent)",
                    self.budget_spent
                )));
            }
        }
        self.budget_spent = spent;
        Ok(())
    }

    /// Checks every pool invariant for the current regime.
    pub fn check_invariants(&self) -> Result<()> {
        if let Some(id) = self.x_l.intersection(&self.x_u).next() {
            return Err(OpadError::integrity(format!("{id} both labelled and unlabelled")));
        }
        if let Some(id) = self.x_state.intersection(&self.x_met).next() {
            return Err(OpadError::integrity(format!("{id} in both state and metric sets")));
        }
        if !self.x_init.is_subset(&self.x_l) {
            return Err(OpadError::integrity("seed set not contained in labelled set"));
        }
        if !self.x_cand.is_subset(&self.x_u) {
            return Err(OpadError::integrity("candidates outside the unlabelled pool"));
        }
        let covered: BTreeSet<SampleId> = match self.regime {
            Regime::PolicyTraining => {
                for (a, b, name) in [
                    (&self.x_u, &self.x_state, "unlabelled/state"),
                    (&self.x_u, &self.x_met, "unlabelled/metric"),
                    (&self.x_l, &self.x_state, "labelled/state"),
                    (&self.x_l, &self.x_met, "labelled/metric"),
                ] {
                    if a.intersection(b).next().is_some() {
                        return Err(OpadError::integrity(format!("{name} overlap")));
                    }
                }
                self.x_u
                    .iter()
                    .chain(&self.x_l)
                    .chain(&self.x_state)
                    .chain(&self.x_met)
                    .copied()
                    .collect()
            }
            Regime::Deployment => self.x_u.iter().chain(&self.x_l).copied().collect(),
        };
        let expected = match self.regime {
            Regime::PolicyTraining => &self.x_train,
            Regime::Deployment => &self.x_val,
        };
        if &covered != expected {
            return Err(OpadError::integrity("pools do not partition their split"));
        }
        if let Some(total) = self.budget_total {
            if self.budget_spent > total {
                return Err(OpadError::integrity("budget overspent"));
            }
        }
        Ok(())
    }
}

/// Uniformly picks `k` distinct ids from `ids`, returned in draw order.
pub fn choose_distinct(ids: &[SampleId], k: usize, r: &mut Rng) -> Vec<SampleId> {
    index::sample(r, ids.len(), k).into_iter().map(|i| ids[i]).collect()
}
