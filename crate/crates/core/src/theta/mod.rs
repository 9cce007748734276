//! The prediction model being actively trained.
//!
//! Detection is classification over proposals with an explicit background
//! class; tagging is per-token IOBES classification over a small context
//! window, decoded greedily into spans. Both sit on [`DenseNet`].

pub mod metrics;

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EntityAnnotation, Geometry, Prediction, Sample, SampleId, Span, TaskKind};
use crate::error::{OpadError, Result};
use crate::nn::{softmax_cross_entropy, softmax_rows, Activation, DenseNet, NetCheckpoint, SgdMomentum};
use crate::rng::Rng;
use crate::synth::iobes;

pub use metrics::{average_precision, entity_f_score, Evaluated, MetricKind, MetricReport};

/// IoU above which a proposal inherits a labelled box's class.
pub const PROPOSAL_MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThetaConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub iterations: usize,
    /// Re-initialise before every retraining instead of warm-starting.
    pub cold_start: bool,
    pub zero_output: bool,
    /// Tokens of context on each side for tagging.
    pub window: usize,
}

impl Default for ThetaConfig {
    fn default() -> Self {
        ThetaConfig {
            hidden: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 32,
            iterations: 1000,
            cold_start: false,
            zero_output: true,
            window: 1,
        }
    }
}

/// Loss summary of one training call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainReport {
    pub iterations: usize,
    pub n_examples: usize,
    /// Mean loss over the first and last tenth of the run.
    pub head_loss: f64,
    pub tail_loss: f64,
}

impl TrainReport {
    pub fn loss_decreased(&self) -> bool {
        self.tail_loss <= self.head_loss
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaModel {
    pub kind: TaskKind,
    n_classes: usize,
    feature_dim: usize,
    max_len: usize,
    pub config: ThetaConfig,
    net: DenseNet,
    opt: SgdMomentum,
}

/// Flattened example matrix with integer targets.
pub struct Examples {
    pub features: Array2<f64>,
    pub targets: Vec<usize>,
}

impl ThetaModel {
    pub fn new(dataset: &Dataset, config: ThetaConfig, r: &mut Rng) -> Self {
        Self::with_shape(dataset.task, dataset.n_classes, dataset.feature_dim, dataset.max_len, config, r)
    }

    pub fn with_shape(
        kind: TaskKind,
        n_classes: usize,
        feature_dim: usize,
        max_len: usize,
        config: ThetaConfig,
        r: &mut Rng,
    ) -> Self {
        let (input, output) = match kind {
            TaskKind::Detection => (feature_dim, n_classes + 1),
            TaskKind::Sequence => ((2 * config.window + 1) * feature_dim, iobes::n_tags(n_classes)),
        };
        let net = DenseNet::new(
            &[input, config.hidden, output],
            Activation::Relu,
            Activation::Identity,
            config.zero_output,
            r,
        );
        let opt = SgdMomentum::new(&net, config.learning_rate, config.momentum);
        ThetaModel {
            kind,
            n_classes,
            feature_dim,
            max_len,
            config,
            net,
            opt,
        }
    }

    /// Fresh parameters with the same shape and config.
    pub fn reinitialized(&self, r: &mut Rng) -> Self {
        Self::with_shape(self.kind, self.n_classes, self.feature_dim, self.max_len, self.config.clone(), r)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Width of one class-score vector (classes plus background / outside).
    pub fn score_width(&self) -> usize {
        self.n_classes + 1
    }

    /// Width of one per-token tag-score vector.
    pub fn n_tags(&self) -> usize {
        iobes::n_tags(self.n_classes)
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn checkpoint(&self) -> NetCheckpoint {
        self.net.checkpoint()
    }

    pub fn restore_params(&mut self, ck: &NetCheckpoint) -> Result<()> {
        let net = ck.restore()?;
        if net.manifest() != self.net.manifest() {
            return Err(OpadError::config("theta checkpoint shape does not match model"));
        }
        self.net = net;
        self.opt = SgdMomentum::new(&self.net, self.config.learning_rate, self.config.momentum);
        Ok(())
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.feature_dim {
            return Err(OpadError::Dimension {
                expected: self.feature_dim,
                got,
            });
        }
        Ok(())
    }

    fn proposal_matrix(&self, sample: &Sample) -> Result<Array2<f64>> {
        let ps = sample.proposals();
        let mut m = Array2::zeros((ps.len(), self.feature_dim));
        for (mut row, p) in m.rows_mut().into_iter().zip(ps) {
            self.check_dim(p.features.len())?;
            row.assign(&ndarray::ArrayView1::from(&p.features[..]));
        }
        Ok(m)
    }

    fn window_matrix(&self, sample: &Sample) -> Result<Array2<f64>> {
        let toks = sample.tokens();
        let w = self.config.window;
        let d = self.feature_dim;
        let mut m = Array2::zeros((toks.len(), (2 * w + 1) * d));
        for t in toks {
            self.check_dim(t.len())?;
        }
        for i in 0..toks.len() {
            for off in 0..=2 * w {
                let j = i as isize + off as isize - w as isize;
                if j >= 0 && (j as usize) < toks.len() {
                    for (c, v) in toks[j as usize].iter().enumerate() {
                        m[[i, off * d + c]] = *v;
                    }
                }
            }
        }
        Ok(m)
    }

    fn inputs(&self, sample: &Sample) -> Result<Array2<f64>> {
        match self.kind {
            TaskKind::Detection => self.proposal_matrix(sample),
            TaskKind::Sequence => self.window_matrix(sample),
        }
    }

    /// Class-score rows: one per proposal (detection) or per token (tags).
    pub fn score_rows(&self, sample: &Sample) -> Result<Array2<f64>> {
        let x = self.inputs(sample)?;
        if x.nrows() == 0 {
            return Ok(Array2::zeros((0, self.net.output_dim())));
        }
        Ok(softmax_rows(&self.net.forward(x.view())?))
    }

    /// Per-proposal training targets: the class of the best-overlapping
    /// labelled box above [`PROPOSAL_MATCH_IOU`], else background.
    fn proposal_targets(&self, sample: &Sample, labels: &[EntityAnnotation]) -> Vec<usize> {
        sample
            .proposals()
            .iter()
            .map(|p| {
                let mut best = (self.n_classes, PROPOSAL_MATCH_IOU);
                for l in labels {
                    if let Geometry::Box(b) = &l.geometry {
                        let iou = p.bbox.iou(b);
                        if iou > best.1 {
                            best = (l.class_id, iou);
                        }
                    }
                }
                best.0
            })
            .collect()
    }

    fn token_targets(&self, sample: &Sample, labels: &[EntityAnnotation]) -> Vec<usize> {
        let mut tags = vec![iobes::outside(self.n_classes); sample.tokens().len()];
        for l in labels {
            if let Geometry::Span(sp) = l.geometry {
                let end = sp.end.min(tags.len());
                if sp.start >= end {
                    continue;
                }
                if end - sp.start == 1 {
                    tags[sp.start] = iobes::tag(l.class_id, iobes::S);
                } else {
                    tags[sp.start] = iobes::tag(l.class_id, iobes::B);
                    for t in &mut tags[sp.start + 1..end - 1] {
                        *t = iobes::tag(l.class_id, iobes::I);
                    }
                    tags[end - 1] = iobes::tag(l.class_id, iobes::E);
                }
            }
        }
        tags
    }

    /// Flattens labelled samples into per-proposal or per-token examples.
    pub fn examples<'a>(
        &self,
        dataset: &Dataset,
        labelled: impl IntoIterator<Item = (SampleId, &'a [EntityAnnotation])>,
    ) -> Result<Examples> {
        let mut rows: Vec<Array2<f64>> = Vec::new();
        let mut targets = Vec::new();
        for (id, labels) in labelled {
            let s = dataset.sample(id)?;
            let x = self.inputs(s)?;
            let t = match self.kind {
                TaskKind::Detection => self.proposal_targets(s, labels),
                TaskKind::Sequence => self.token_targets(s, labels),
            };
            targets.extend(t);
            rows.push(x);
        }
        let width = self.net.input_dim();
        let views: Vec<ArrayView2<f64>> = rows.iter().map(|r| r.view()).collect();
        let features = if views.is_empty() {
            Array2::zeros((0, width))
        } else {
            ndarray::concatenate(ndarray::Axis(0), &views).expect("uniform width")
        };
        Ok(Examples { features, targets })
    }

    /// Runs `iterations` minibatch SGD steps of cross-entropy over the
    /// labelled examples.
    pub fn train<'a>(
        &mut self,
        dataset: &Dataset,
        labelled: impl IntoIterator<Item = (SampleId, &'a [EntityAnnotation])>,
        iterations: usize,
        r: &mut Rng,
    ) -> Result<TrainReport> {
        let ex = self.examples(dataset, labelled)?;
        self.train_on(&ex, iterations, r)
    }

    pub fn train_on(&mut self, ex: &Examples, iterations: usize, r: &mut Rng) -> Result<TrainReport> {
        if ex.targets.is_empty() {
            return Err(OpadError::Empty("labelled set"));
        }
        let n = ex.targets.len();
        let bs = self.config.batch_size.max(1);
        let mut losses = Vec::with_capacity(iterations);
        let mut batch = Array2::zeros((bs, ex.features.ncols()));
        let mut targets = vec![0usize; bs];
        for _ in 0..iterations {
            for (b, t) in targets.iter_mut().enumerate() {
                let i = r.random_range(0..n);
                batch.row_mut(b).assign(&ex.features.row(i));
                *t = ex.targets[i];
            }
            let (logits, cache) = self.net.forward_cached(batch.view())?;
            let (loss, grad) = softmax_cross_entropy(&logits, &targets);
            let (grads, _) = self.net.backward(&cache, grad);
            self.opt.step(&mut self.net, &grads);
            losses.push(loss);
        }
        let tenth = (iterations / 10).max(1);
        let mean = |xs: &[f64]| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
        Ok(TrainReport {
            iterations,
            n_examples: n,
            head_loss: mean(&losses[..tenth.min(losses.len())]),
            tail_loss: mean(&losses[losses.len().saturating_sub(tenth)..]),
        })
    }

    /// Non-background detections (detection) or greedily decoded spans
    /// (tagging). Span scores average the per-token class marginals.
    pub fn predict(&self, sample: &Sample) -> Result<Vec<Prediction>> {
        let scores = self.score_rows(sample)?;
        match self.kind {
            TaskKind::Detection => Ok(sample
                .proposals()
                .iter()
                .zip(scores.rows())
                .map(|(p, row)| Prediction::new(Geometry::Box(p.bbox), row.to_vec()))
                .filter(|pr| pr.class_id() != self.n_classes)
                .collect()),
            TaskKind::Sequence => Ok(self.decode_spans(&scores)),
        }
    }

    fn class_marginals(&self, tag_scores: ndarray::ArrayView1<f64>) -> Vec<f64> {
        let mut m = vec![0.0; self.n_classes + 1];
        for (t, v) in tag_scores.iter().enumerate() {
            match iobes::split(t, self.n_classes) {
                Some((k, _)) => m[k] += v,
                None => m[self.n_classes] += v,
            }
        }
        m
    }

    fn decode_spans(&self, scores: &Array2<f64>) -> Vec<Prediction> {
        let tags: Vec<usize> = scores
            .rows()
            .into_iter()
            .map(|r| crate::data::argmax(r.as_slice().expect("contiguous")))
            .collect();
        let mut out = Vec::new();
        for sp in decode_iobes(&tags, self.n_classes) {
            let mut acc = vec![0.0; self.n_classes + 1];
            for i in sp.0.start..sp.0.end {
                for (a, m) in acc.iter_mut().zip(self.class_marginals(scores.row(i))) {
                    *a += m;
                }
            }
            let len = sp.0.len() as f64;
            acc.iter_mut().for_each(|a| *a /= len);
            out.push(Prediction::new(Geometry::Span(sp.0), acc));
        }
        out
    }

    /// Predictions paired with dataset ground truth for metric computation.
    pub fn evaluate_on(&self, dataset: &Dataset, ids: &[SampleId]) -> Result<Vec<Evaluated>> {
        ids.iter()
            .map(|&id| {
                let s = dataset.sample(id)?;
                Ok(Evaluated {
                    id,
                    predictions: self.predict(s)?,
                    ground_truth: s.entities.clone(),
                })
            })
            .collect()
    }

    /// AP (detection) or entity F1 (tagging) on `ids`.
    pub fn metric(&self, dataset: &Dataset, ids: &[SampleId]) -> Result<MetricReport> {
        let ev = self.evaluate_on(dataset, ids)?;
        Ok(match self.kind {
            TaskKind::Detection => average_precision(&ev, self.n_classes, 0.5),
            TaskKind::Sequence => entity_f_score(&ev, self.n_classes),
        })
    }
}

/// Strict IOBES decoding: `S-k` or `B-k (I-k)* E-k`; anything else is
/// dropped. Returns `(span, class)` pairs.
pub fn decode_iobes(tags: &[usize], n_classes: usize) -> Vec<(Span, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tags.len() {
        match iobes::split(tags[i], n_classes) {
            Some((k, iobes::S)) => {
                out.push((Span { start: i, end: i + 1 }, k));
                i += 1;
            }
            Some((k, iobes::B)) => {
                let mut j = i + 1;
                while j < tags.len() && tags[j] == iobes::tag(k, iobes::I) {
                    j += 1;
                }
                if j < tags.len() && tags[j] == iobes::tag(k, iobes::E) {
                    out.push((Span { start: i, end: j + 1 }, k));
                    i = j + 1;
                } else {
                    i = j;
                }
            }
            _ => i += 1,
        }
    }
    out
}
