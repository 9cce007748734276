//! Synthetic ground-truth tasks.
//!
//! Detection samples are pages holding a variable number of boxed entities.
//! Each entity yields one jittered proposal whose features are drawn around
//! its class centre; background distractor proposals are drawn around a
//! separate centre. Sequence samples are token lists with non-overlapping
//! entity spans separated by at least one outside token.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{
    BBox, Dataset, EntityAnnotation, Geometry, LabelKind, Proposal, Sample, SampleId, SampleInputs,
    Span, Splits, TaskKind,
};
use crate::error::{OpadError, Result};
use crate::rng::{self, Rng};

/// Jitter (relative to box size) below which a jittered proposal keeps
/// IoU > 0.5 with its box on the first draw in almost all cases.
pub const SAFE_JITTER_SIGMA: f64 = 0.1;
const JITTER_RETRIES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionTaskSpec {
    pub n_classes: usize,
    pub class_prior: Vec<f64>,
    /// Inclusive `[min, max]` entity count per sample.
    pub entities_per_sample: (usize, usize),
    pub feature_dim: usize,
    pub class_feature_centers: Vec<Vec<f64>>,
    pub background_center: Vec<f64>,
    pub feature_noise_sigma: f64,
    /// Expected fraction of proposals that are background.
    pub distractor_rate: f64,
    /// Coordinate jitter as a fraction of box width / height.
    pub box_jitter_sigma: f64,
}

/// Compact, config-file form of a [`DetectionTaskSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionTaskConfig {
    pub n_classes: usize,
    /// Class prior is proportional to `prior_decay^k`.
    pub prior_decay: f64,
    pub entities_min: usize,
    pub entities_max: usize,
    pub feature_dim: usize,
    pub center_scale: f64,
    pub center_seed: u64,
    pub feature_noise_sigma: f64,
    pub distractor_rate: f64,
    pub box_jitter_sigma: f64,
}

impl Default for DetectionTaskConfig {
    fn default() -> Self {
        DetectionTaskConfig {
            n_classes: 13,
            prior_decay: 0.8,
            entities_min: 0,
            entities_max: 10,
            feature_dim: 16,
            center_scale: 1.0,
            center_seed: 17,
            feature_noise_sigma: 0.9,
            distractor_rate: 0.3,
            box_jitter_sigma: 0.05,
        }
    }
}

fn geometric_prior(n: usize, decay: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|k| decay.powi(k as i32)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn gaussian_centers(n: usize, dim: usize, scale: f64, r: &mut Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(r);
                    scale * z
                })
                .collect::<Vec<f64>>()
        })
        .collect()
}

impl DetectionTaskConfig {
    pub fn build(&self) -> Result<DetectionTaskSpec> {
        let mut r = rng::stream(self.center_seed, "detection-centers", 0);
        let centers = gaussian_centers(self.n_classes + 1, self.feature_dim, self.center_scale, &mut r);
        let (background, classes) = centers.split_last().expect("at least one centre");
        let spec = DetectionTaskSpec {
            n_classes: self.n_classes,
            class_prior: geometric_prior(self.n_classes, self.prior_decay),
            entities_per_sample: (self.entities_min, self.entities_max),
            feature_dim: self.feature_dim,
            class_feature_centers: classes.to_vec(),
            background_center: background.clone(),
            feature_noise_sigma: self.feature_noise_sigma,
            distractor_rate: self.distractor_rate,
            box_jitter_sigma: self.box_jitter_sigma,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl Default for DetectionTaskSpec {
    fn default() -> Self {
        DetectionTaskConfig::default().build().expect("default detection spec is valid")
    }
}

fn check_prior(prior: &[f64], n: usize) -> Result<()> {
    if prior.len() != n {
        return Err(OpadError::config(format!("class_prior has {} entries, expected {n}", prior.len())));
    }
    if prior.iter().any(|p| !(*p >= 0.0)) {
        return Err(OpadError::config("class_prior entries must be non-negative"));
    }
    if n > 0 && (prior.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(OpadError::config("class_prior must sum to 1"));
    }
    Ok(())
}

impl DetectionTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(OpadError::config("detection needs at least 2 classes"));
        }
        check_prior(&self.class_prior, self.n_classes)?;
        if self.entities_per_sample.0 > self.entities_per_sample.1 {
            return Err(OpadError::config("entities_per_sample min exceeds max"));
        }
        if self.feature_dim == 0 {
            return Err(OpadError::config("feature_dim must be positive"));
        }
        if self.class_feature_centers.len() != self.n_classes
            || self
                .class_feature_centers
                .iter()
                .chain(std::iter::once(&self.background_center))
                .any(|c| c.len() != self.feature_dim)
        {
            return Err(OpadError::config("class_feature_centers shape mismatch"));
        }
        if !(self.feature_noise_sigma >= 0.0) {
            return Err(OpadError::config("feature_noise_sigma must be >= 0"));
        }
        if !(self.box_jitter_sigma > 0.0) {
            return Err(OpadError::config("box_jitter_sigma must be > 0"));
        }
        if !(0.0..1.0).contains(&self.distractor_rate) {
            return Err(OpadError::config("distractor_rate must lie in [0, 1)"));
        }
        Ok(())
    }
}

fn noisy(center: &[f64], sigma: f64, r: &mut Rng) -> Vec<f64> {
    center
        .iter()
        .map(|c| {
            let z: f64 = StandardNormal.sample(r);
            c + sigma * z
        })
        .collect()
}

fn random_box(r: &mut Rng) -> BBox {
    let w = r.random_range(0.05..0.35);
    let h = r.random_range(0.03..0.15);
    let x0 = r.random_range(0.0..1.0 - w);
    let y0 = r.random_range(0.0..1.0 - h);
    BBox {
        x0,
        y0,
        x1: x0 + w,
        y1: y0 + h,
    }
}

/// Jitters `b`, redrawing until the result keeps IoU > 0.5 with `b`.
fn jittered(b: &BBox, sigma: f64, r: &mut Rng) -> BBox {
    let (w, h) = (b.x1 - b.x0, b.y1 - b.y0);
    let nx = Normal::new(0.0, sigma * w).expect("positive sigma");
    let ny = Normal::new(0.0, sigma * h).expect("positive sigma");
    for _ in 0..JITTER_RETRIES {
        let c = BBox {
            x0: (b.x0 + nx.sample(r)).clamp(0.0, 1.0),
            y0: (b.y0 + ny.sample(r)).clamp(0.0, 1.0),
            x1: (b.x1 + nx.sample(r)).clamp(0.0, 1.0),
            y1: (b.y1 + ny.sample(r)).clamp(0.0, 1.0),
        };
        if c.is_valid() && c.iou(b) > 0.5 {
            return c;
        }
    }
    *b
}

fn stochastic_round(x: f64, r: &mut Rng) -> usize {
    let f = x.floor();
    f as usize + usize::from(r.random::<f64>() < x - f)
}

pub fn generate_detection_dataset(spec: &DetectionTaskSpec, n_samples: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let classes = WeightedIndex::new(&spec.class_prior)
        .map_err(|e| OpadError::config(format!("class_prior: {e}")))?;
    let mut r = rng::stream(seed, "detection", 0);
    let ratio = spec.distractor_rate / (1.0 - spec.distractor_rate);
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let (lo, hi) = spec.entities_per_sample;
        let n_ent = r.random_range(lo..=hi);
        let mut entities = Vec::with_capacity(n_ent);
        let mut proposals = Vec::new();
        for _ in 0..n_ent {
            let class_id = classes.sample(&mut r);
            let b = random_box(&mut r);
            proposals.push(Proposal {
                bbox: jittered(&b, spec.box_jitter_sigma, &mut r),
                features: noisy(&spec.class_feature_centers[class_id], spec.feature_noise_sigma, &mut r),
            });
            entities.push(EntityAnnotation {
                class_id,
                geometry: Geometry::Box(b),
                label_kind: LabelKind::Strong,
            });
        }
        // Blank pages still carry at least one background proposal.
        let n_bg = stochastic_round(n_ent.max(1) as f64 * ratio, &mut r).max(usize::from(n_ent == 0));
        for _ in 0..n_bg {
            proposals.push(Proposal {
                bbox: random_box(&mut r),
                features: noisy(&spec.background_center, spec.feature_noise_sigma, &mut r),
            });
        }
        proposals.shuffle(&mut r);
        samples.push(Sample {
            id: SampleId(i as u64),
            entities,
            inputs: SampleInputs::Proposals(proposals),
        });
    }
    Ok(Dataset {
        task: TaskKind::Detection,
        n_classes: spec.n_classes,
        feature_dim: spec.feature_dim,
        max_len: 0,
        generator_seed: seed,
        generator: serde_json::to_value(spec)?,
        splits: Splits {
            train: samples.iter().map(|s| s.id).collect(),
            ..Splits::default()
        },
        samples,
    })
}

/// IOBES tag layout: class `k` owns tags `4k..4k+4` (B, I, E, S); the last
/// tag is O.
pub mod iobes {
    pub const B: usize = 0;
    pub const I: usize = 1;
    pub const E: usize = 2;
    pub const S: usize = 3;

    pub fn n_tags(n_classes: usize) -> usize {
        4 * n_classes + 1
    }

    pub fn tag(class_id: usize, part: usize) -> usize {
        4 * class_id + part
    }

    pub fn outside(n_classes: usize) -> usize {
        4 * n_classes
    }

    /// `(class, part)` for an entity tag, `None` for O.
    pub fn split(tag: usize, n_classes: usize) -> Option<(usize, usize)> {
        (tag < 4 * n_classes).then_some((tag / 4, tag % 4))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceTaskSpec {
    pub n_entity_classes: usize,
    pub class_prior: Vec<f64>,
    pub min_len: usize,
    pub max_len: usize,
    /// Inclusive entity-count range per sentence.
    pub entities_per_sample: (usize, usize),
    /// Inclusive span-length range.
    pub entity_len: (usize, usize),
    pub feature_dim: usize,
    pub class_feature_centers: Vec<Vec<f64>>,
    pub outside_center: Vec<f64>,
    pub feature_noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceTaskConfig {
    pub n_entity_classes: usize,
    pub prior_decay: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub entities_min: usize,
    pub entities_max: usize,
    pub entity_len_min: usize,
    pub entity_len_max: usize,
    pub feature_dim: usize,
    pub center_scale: f64,
    pub center_seed: u64,
    pub feature_noise_sigma: f64,
}

impl Default for SequenceTaskConfig {
    fn default() -> Self {
        SequenceTaskConfig {
            n_entity_classes: 4,
            prior_decay: 0.5,
            min_len: 5,
            max_len: 150,
            entities_min: 0,
            entities_max: 6,
            entity_len_min: 1,
            entity_len_max: 3,
            feature_dim: 16,
            center_scale: 1.0,
            center_seed: 23,
            feature_noise_sigma: 1.0,
        }
    }
}

impl SequenceTaskConfig {
    pub fn build(&self) -> Result<SequenceTaskSpec> {
        let mut r = rng::stream(self.center_seed, "sequence-centers", 0);
        let centers = gaussian_centers(self.n_entity_classes + 1, self.feature_dim, self.center_scale, &mut r);
        let (outside, classes) = centers.split_last().expect("at least one centre");
        let spec = SequenceTaskSpec {
            n_entity_classes: self.n_entity_classes,
            class_prior: geometric_prior(self.n_entity_classes, self.prior_decay),
            min_len: self.min_len,
            max_len: self.max_len,
            entities_per_sample: (self.entities_min, self.entities_max),
            entity_len: (self.entity_len_min, self.entity_len_max),
            feature_dim: self.feature_dim,
            class_feature_centers: classes.to_vec(),
            outside_center: outside.clone(),
            feature_noise_sigma: self.feature_noise_sigma,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl Default for SequenceTaskSpec {
    fn default() -> Self {
        SequenceTaskConfig::default().build().expect("default sequence spec is valid")
    }
}

impl SequenceTaskSpec {
    pub fn n_tags(&self) -> usize {
        iobes::n_tags(self.n_entity_classes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 || self.min_len == 0 || self.min_len > self.max_len {
            return Err(OpadError::config("sentence length range must satisfy 1 <= min_len <= max_len"));
        }
        check_prior(&self.class_prior, self.n_entity_classes)?;
        if self.entities_per_sample.0 > self.entities_per_sample.1 {
            return Err(OpadError::config("entities_per_sample min exceeds max"));
        }
        if self.entity_len.0 == 0 || self.entity_len.0 > self.entity_len.1 {
            return Err(OpadError::config("entity_len must satisfy 1 <= min <= max"));
        }
        if self.feature_dim == 0 {
            return Err(OpadError::config("feature_dim must be positive"));
        }
        if self.class_feature_centers.len() != self.n_entity_classes
            || self
                .class_feature_centers
                .iter()
                .chain(std::iter::once(&self.outside_center))
                .any(|c| c.len() != self.feature_dim)
        {
            return Err(OpadError::config("class_feature_centers shape mismatch"));
        }
        if !(self.feature_noise_sigma >= 0.0) {
            return Err(OpadError::config("feature_noise_sigma must be >= 0"));
        }
        Ok(())
    }
}

/// Places up to `n` spans in `len` tokens with a gap of at least one token
/// between neighbours.
fn place_spans(len: usize, n: usize, (lmin, lmax): (usize, usize), r: &mut Rng) -> Vec<Span> {
    let mut occupied = vec![false; len];
    let mut spans = Vec::new();
    let mut attempts = 0;
    while spans.len() < n && attempts < 20 * n.max(1) {
        attempts += 1;
        let l = r.random_range(lmin..=lmax);
        if l > len {
            continue;
        }
        let start = r.random_range(0..=len - l);
        let lo = start.saturating_sub(1);
        let hi = (start + l + 1).min(len);
        if occupied[lo..hi].iter().any(|&o| o) {
            continue;
        }
        occupied[start..start + l].iter_mut().for_each(|o| *o = true);
        spans.push(Span {
            start,
            end: start + l,
        });
    }
    spans.sort();
    spans
}

pub fn generate_sequence_dataset(spec: &SequenceTaskSpec, n_samples: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let classes = if spec.n_entity_classes > 0 {
        Some(
            WeightedIndex::new(&spec.class_prior)
                .map_err(|e| OpadError::config(format!("class_prior: {e}")))?,
        )
    } else {
        None
    };
    let mut r = rng::stream(seed, "sequence", 0);
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let len = r.random_range(spec.min_len..=spec.max_len);
        let n_ent = match classes {
            Some(_) => r.random_range(spec.entities_per_sample.0..=spec.entities_per_sample.1),
            None => 0,
        };
        let spans = place_spans(len, n_ent, spec.entity_len, &mut r);
        let mut token_class: Vec<Option<usize>> = vec![None; len];
        let mut entities = Vec::with_capacity(spans.len());
        for sp in spans {
            let class_id = classes.as_ref().expect("entities imply classes").sample(&mut r);
            token_class[sp.start..sp.end].iter_mut().for_each(|t| *t = Some(class_id));
            entities.push(EntityAnnotation {
                class_id,
                geometry: Geometry::Span(sp),
                label_kind: LabelKind::Strong,
            });
        }
        let tokens = token_class
            .iter()
            .map(|c| {
                let center = match c {
                    Some(k) => &spec.class_feature_centers[*k],
                    None => &spec.outside_center,
                };
                noisy(center, spec.feature_noise_sigma, &mut r)
            })
            .collect();
        samples.push(Sample {
            id: SampleId(i as u64),
            entities,
            inputs: SampleInputs::Tokens(tokens),
        });
    }
    Ok(Dataset {
        task: TaskKind::Sequence,
        n_classes: spec.n_entity_classes,
        feature_dim: spec.feature_dim,
        max_len: spec.max_len,
        generator_seed: seed,
        generator: serde_json::to_value(spec)?,
        splits: Splits {
            train: samples.iter().map(|s| s.id).collect(),
            ..Splits::default()
        },
        samples,
    })
}
