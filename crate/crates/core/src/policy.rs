//! Deep-Q acquisition policy.
//!
//! Candidate and state-set rows pass through one shared row encoder
//! (a width-1 convolution over the sample axis). The encoded state set is
//! mean-pooled into `s̄`, and each candidate `h` is scored by a head MLP over
//! `[h ; h ⊙ s̄ ; h · s̄]`. Mean pooling makes Q invariant to the order of
//! state rows.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{OpadError, Result};
use crate::nn::{Activation, DenseNet, ForwardCache, Gradients, NetCheckpoint, SgdMomentum};
use crate::rng::Rng;
use crate::state::StateRepr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetStyle {
    /// Online network picks the next action, target network scores it.
    Double,
    /// Target network both picks and scores.
    Vanilla,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsDecayMode {
    Multiplicative,
    /// Subtract `factor` per cycle, floored at 0.
    Subtractive,
}

/// Per-cycle exploration rate during policy training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub factor: f64,
    pub mode: EpsDecayMode,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 0.9,
            factor: 0.1,
            mode: EpsDecayMode::Multiplicative,
        }
    }
}

impl EpsilonSchedule {
    pub fn training(&self, cycle: usize) -> f64 {
        match self.mode {
            EpsDecayMode::Multiplicative => self.start * self.factor.powi(cycle as i32),
            EpsDecayMode::Subtractive => (self.start - self.factor * cycle as f64).max(0.0),
        }
    }

    pub fn deployment(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub gamma: f64,
    /// Multiplicative learning-rate decay applied after every update.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub sync_every: usize,
    pub replay_capacity: usize,
    pub target_style: TargetStyle,
    pub epsilon: EpsilonSchedule,
    pub zero_output: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden: 64,
            learning_rate: 0.001,
            momentum: 0.95,
            gamma: 0.9,
            lr_decay: 0.998,
            batch_size: 16,
            sync_every: 10,
            replay_capacity: 1000,
            target_style: TargetStyle::Double,
            epsilon: EpsilonSchedule::default(),
            zero_output: false,
        }
    }
}

/// Column means with each column summed in sorted order, so the result
/// does not depend on row order at all.
fn pooled_mean(hs: &Array2<f64>) -> Array1<f64> {
    let n = hs.nrows() as f64;
    hs.columns()
        .into_iter()
        .map(|c| {
            let mut v = c.to_vec();
            v.sort_by(f64::total_cmp);
            v.iter().sum::<f64>() / n
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub encoder: DenseNet,
    pub head: DenseNet,
}

/// Intermediate values of one policy forward pass.
pub struct PolicyCache {
    enc_c: ForwardCache,
    enc_s: ForwardCache,
    head: ForwardCache,
    hc: Array2<f64>,
    s_bar: Array1<f64>,
    n_state: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrads {
    pub encoder: Gradients,
    pub head: Gradients,
}

impl PolicyGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.encoder.flatten();
        v.extend(self.head.flatten());
        v
    }
}

impl PolicyNet {
    pub fn new(input_dim: usize, hidden: usize, zero_output: bool, r: &mut Rng) -> Self {
        let encoder = DenseNet::new(&[input_dim, hidden, hidden], Activation::Relu, Activation::Relu, false, r);
        let head = DenseNet::new(&[2 * hidden + 1, hidden, 1], Activation::Relu, Activation::Identity, zero_output, r);
        PolicyNet { encoder, head }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    fn hidden(&self) -> usize {
        self.encoder.output_dim()
    }

    fn check(&self, c: &ArrayView2<f64>, s: &ArrayView2<f64>) -> Result<()> {
        for got in [c.ncols(), s.ncols()] {
            if got != self.input_dim() {
                return Err(OpadError::Dimension {
                    expected: self.input_dim(),
                    got,
                });
            }
        }
        if s.nrows() == 0 {
            return Err(OpadError::Empty("state set"));
        }
        Ok(())
    }

    fn head_input(&self, hc: &Array2<f64>, s_bar: &Array1<f64>) -> Array2<f64> {
        let h = self.hidden();
        let mut x = Array2::zeros((hc.nrows(), 2 * h + 1));
        x.slice_mut(s![.., ..h]).assign(hc);
        x.slice_mut(s![.., h..2 * h]).assign(&(hc * s_bar));
        x.slice_mut(s![.., 2 * h]).assign(&hc.dot(s_bar));
        x
    }

    /// Q-value for every candidate row.
    pub fn q_values(&self, candidates: ArrayView2<f64>, state: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check(&candidates, &state)?;
        let s_bar = pooled_mean(&self.encoder.forward(state)?);
        let hc = self.encoder.forward(candidates)?;
        let q = self.head.forward(self.head_input(&hc, &s_bar).view())?;
        Ok(q.column(0).to_owned())
    }

    pub fn q_state(&self, st: &StateRepr) -> Result<Array1<f64>> {
        self.q_values(st.candidates.view(), st.state.view())
    }

    pub fn forward_cached(&self, candidates: ArrayView2<f64>, state: ArrayView2<f64>) -> Result<(Array1<f64>, PolicyCache)> {
        self.check(&candidates, &state)?;
        let (hs, enc_s) = self.encoder.forward_cached(state)?;
        let s_bar = pooled_mean(&hs);
        let (hc, enc_c) = self.encoder.forward_cached(candidates)?;
        let (q, head) = self.head.forward_cached(self.head_input(&hc, &s_bar).view())?;
        Ok((
            q.column(0).to_owned(),
            PolicyCache {
                enc_c,
                enc_s,
                head,
                hc,
                s_bar,
                n_state: state.nrows(),
            },
        ))
    }

    /// Parameter gradients given dL/dQ for every row of the cached pass.
    pub fn backward(&self, cache: &PolicyCache, dq: &Array1<f64>) -> PolicyGrads {
        let h = self.hidden();
        let dq2 = dq.view().insert_axis(Axis(1)).to_owned();
        let (head_grads, dx) = self.head.backward(&cache.head, dq2);
        let d_plain = dx.slice(s![.., ..h]);
        let d_prod = dx.slice(s![.., h..2 * h]);
        let d_dot = dx.column(2 * h);

        let mut dhc = d_plain.to_owned();
        dhc += &(&d_prod * &cache.s_bar);
        for (mut row, &g) in dhc.rows_mut().into_iter().zip(d_dot.iter()) {
            row.scaled_add(g, &cache.s_bar);
        }
        let mut ds_bar = (&d_prod * &cache.hc).sum_axis(Axis(0));
        for (row, &g) in cache.hc.rows().into_iter().zip(d_dot.iter()) {
            ds_bar.scaled_add(g, &row);
        }
        let n = cache.n_state as f64;
        let dhs = Array2::from_shape_fn((cache.n_state, h), |(_, j)| ds_bar[j] / n);

        let (mut enc_grads, _) = self.encoder.backward(&cache.enc_c, dhc);
        let (enc_s_grads, _) = self.encoder.backward(&cache.enc_s, dhs);
        enc_grads.add_assign(&enc_s_grads);
        PolicyGrads {
            encoder: enc_grads,
            head: head_grads,
        }
    }

    pub fn n_params(&self) -> usize {
        self.encoder.n_params() + self.head.n_params()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.encoder.flat_params();
        v.extend(self.head.flat_params());
        v
    }

    pub fn set_flat_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(OpadError::Dimension {
                expected: self.n_params(),
                got: p.len(),
            });
        }
        let k = self.encoder.n_params();
        self.encoder.set_flat_params(&p[..k])?;
        self.head.set_flat_params(&p[k..])
    }
}

/// Random split of candidate rows into `n_cycle` blocks of `n_pool`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition(pub Vec<Vec<usize>>);

impl Partition {
    pub fn shuffled(n_rows: usize, n_cycle: usize, r: &mut Rng) -> Result<Self> {
        if n_cycle == 0 || n_rows % n_cycle != 0 || n_rows == 0 {
            return Err(OpadError::config(format!(
                "{n_rows} candidates cannot be split into {n_cycle} equal blocks"
            )));
        }
        let mut idx: Vec<usize> = (0..n_rows).collect();
        idx.shuffle(r);
        Ok(Partition(idx.chunks(n_rows / n_cycle).map(<[usize]>::to_vec).collect()))
    }

    /// Consecutive blocks, no shuffling.
    pub fn contiguous(n_rows: usize, n_cycle: usize) -> Result<Self> {
        if n_cycle == 0 || n_rows % n_cycle != 0 || n_rows == 0 {
            return Err(OpadError::config(format!(
                "{n_rows} candidates cannot be split into {n_cycle} equal blocks"
            )));
        }
        let idx: Vec<usize> = (0..n_rows).collect();
        Ok(Partition(idx.chunks(n_rows / n_cycle).map(<[usize]>::to_vec).collect()))
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.0
    }
}

/// Argmax of `q` over `block`, lowest row index on ties.
pub fn block_argmax(q: &Array1<f64>, block: &[usize]) -> usize {
    let mut best = block[0];
    for &i in block {
        if q[i] > q[best] || (q[i] == q[best] && i < best) {
            best = i;
        }
    }
    best
}

/// One row per block: uniform with probability `epsilon`, else the block's
/// Q-argmax.
pub fn select_actions(q: &Array1<f64>, partition: &Partition, epsilon: f64, r: &mut Rng) -> Vec<usize> {
    partition
        .blocks()
        .iter()
        .map(|block| {
            let explore = r.random::<f64>() < epsilon;
            let pick = r.random_range(0..block.len());
            if explore {
                block[pick]
            } else {
                block_argmax(q, block)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NextState {
    pub state: StateRepr,
    pub partition: Partition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateRepr,
    pub partition: Partition,
    /// Chosen candidate row per block, in block order.
    pub actions: Vec<usize>,
    pub reward: f64,
    pub next: Option<NextState>,
    pub terminal: bool,
}

impl Transition {
    pub fn validate(&self) -> Result<()> {
        if self.actions.len() != self.partition.blocks().len() {
            return Err(OpadError::integrity("one action per block required"));
        }
        for (a, block) in self.actions.iter().zip(self.partition.blocks()) {
            if !block.contains(a) {
                return Err(OpadError::integrity(format!("action {a} outside its block")));
            }
        }
        if !self.terminal && self.next.is_none() {
            return Err(OpadError::integrity("non-terminal transition without next state"));
        }
        Ok(())
    }
}

/// FIFO experience store.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity: capacity.max(1),
            storage: VecDeque::with_capacity(capacity.min(4096)),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    /// Turns the newest transition into a terminal one (episode cut short).
    pub fn mark_last_terminal(&mut self) {
        if let Some(t) = self.storage.back_mut() {
            t.terminal = true;
            t.next = None;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.storage.iter()
    }

    /// Up to `n` distinct transitions chosen uniformly.
    pub fn sample(&self, n: usize, r: &mut Rng) -> Vec<&Transition> {
        let k = n.min(self.storage.len());
        index::sample(r, self.storage.len(), k)
            .into_iter()
            .map(|i| &self.storage[i])
            .collect()
    }
}

/// Online network, target network, replay memory and optimiser state.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub config: PolicyConfig,
    pub online: PolicyNet,
    pub target: PolicyNet,
    pub buffer: ReplayBuffer,
    enc_opt: SgdMomentum,
    head_opt: SgdMomentum,
    updates: usize,
}

/// Per-sub-action TD targets for one transition.
pub fn td_targets(
    online: &PolicyNet,
    target: &PolicyNet,
    t: &Transition,
    gamma: f64,
    style: TargetStyle,
) -> Result<Vec<f64>> {
    let n = t.actions.len();
    let next = match (&t.next, t.terminal) {
        (Some(next), false) => next,
        _ => return Ok(vec![t.reward; n]),
    };
    let q_tgt = target.q_state(&next.state)?;
    let q_sel = match style {
        TargetStyle::Double => online.q_state(&next.state)?,
        TargetStyle::Vanilla => q_tgt.clone(),
    };
    let blocks = next.partition.blocks();
    if blocks.len() != n {
        return Err(OpadError::integrity("next-state partition block count differs"));
    }
    Ok(blocks
        .iter()
        .map(|b| t.reward + gamma * q_tgt[block_argmax(&q_sel, b)])
        .collect())
}

impl DqnAgent {
    pub fn new(input_dim: usize, config: PolicyConfig, r: &mut Rng) -> Self {
        let online = PolicyNet::new(input_dim, config.hidden, config.zero_output, r);
        Self::from_net(online, config)
    }

    pub fn from_net(online: PolicyNet, config: PolicyConfig) -> Self {
        let enc_opt = SgdMomentum::new(&online.encoder, config.learning_rate, config.momentum);
        let head_opt = SgdMomentum::new(&online.head, config.learning_rate, config.momentum);
        DqnAgent {
            target: online.clone(),
            buffer: ReplayBuffer::new(config.replay_capacity),
            online,
            enc_opt,
            head_opt,
            updates: 0,
            config,
        }
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn learning_rate(&self) -> f64 {
        self.enc_opt.lr
    }

    pub fn push_transition(&mut self, t: Transition) -> Result<()> {
        t.validate()?;
        self.buffer.push(t);
        Ok(())
    }

    /// Hard copy of the online parameters into the target network.
    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    /// Mean squared TD error over `(transition, sub-action)` pairs and its
    /// gradient, without touching parameters.
    pub fn loss_and_grads(&self, batch: &[&Transition]) -> Result<(f64, PolicyGrads)> {
        let mut grads = PolicyGrads {
            encoder: Gradients::zeros_like(&self.online.encoder),
            head: Gradients::zeros_like(&self.online.head),
        };
        let total: usize = batch.iter().map(|t| t.actions.len()).sum();
        if total == 0 {
            return Err(OpadError::Empty("replay batch"));
        }
        let mut loss = 0.0;
        for t in batch {
            let y = td_targets(&self.online, &self.target, t, self.config.gamma, self.config.target_style)?;
            let rows = t.state.candidates.select(Axis(0), &t.actions);
            let (q, cache) = self.online.forward_cached(rows.view(), t.state.state.view())?;
            let mut dq = Array1::zeros(q.len());
            for i in 0..q.len() {
                let e = q[i] - y[i];
                loss += e * e;
                dq[i] = 2.0 * e / total as f64;
            }
            let g = self.online.backward(&cache, &dq);
            grads.encoder.add_assign(&g.encoder);
            grads.head.add_assign(&g.head);
        }
        Ok((loss / total as f64, grads))
    }

    /// One SGD+momentum step on a uniform replay minibatch. Returns the
    /// pre-step loss.
    pub fn optimize_step(&mut self, r: &mut Rng) -> Result<f64> {
        if self.buffer.is_empty() {
            return Err(OpadError::Empty("replay buffer"));
        }
        let batch = self.buffer.sample(self.config.batch_size, r);
        let (loss, grads) = self.loss_and_grads(&batch)?;
        self.enc_opt.step(&mut self.online.encoder, &grads.encoder);
        self.head_opt.step(&mut self.online.head, &grads.head);
        self.enc_opt.lr *= self.config.lr_decay;
        self.head_opt.lr *= self.config.lr_decay;
        self.updates += 1;
        if self.config.sync_every > 0 && self.updates % self.config.sync_every == 0 {
            self.sync_target();
        }
        Ok(loss)
    }

    pub fn checkpoint(&self) -> PolicyCheckpoint {
        PolicyCheckpoint {
            format: POLICY_FORMAT.to_string(),
            config: self.config.clone(),
            encoder: self.online.encoder.checkpoint(),
            head: self.online.head.checkpoint(),
            target_encoder: self.target.encoder.checkpoint(),
            target_head: self.target.head.checkpoint(),
            updates: self.updates,
            learning_rate: self.enc_opt.lr,
        }
    }

    pub fn from_checkpoint(ck: &PolicyCheckpoint) -> Result<Self> {
        let online = ck.policy()?;
        let mut agent = Self::from_net(online, ck.config.clone());
        agent.target = PolicyNet {
            encoder: ck.target_encoder.restore()?,
            head: ck.target_head.restore()?,
        };
        agent.updates = ck.updates;
        agent.enc_opt.lr = ck.learning_rate;
        agent.head_opt.lr = ck.learning_rate;
        Ok(agent)
    }
}

const POLICY_FORMAT: &str = "opad-policy-v1";

/// Flat parameters, shape manifests and schedule state of a trained policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub format: String,
    pub config: PolicyConfig,
    pub encoder: NetCheckpoint,
    pub head: NetCheckpoint,
    pub target_encoder: NetCheckpoint,
    pub target_head: NetCheckpoint,
    pub updates: usize,
    pub learning_rate: f64,
}

impl PolicyCheckpoint {
    pub fn policy(&self) -> Result<PolicyNet> {
        if self.format != POLICY_FORMAT {
            return Err(OpadError::config(format!("unsupported policy format `{}`", self.format)));
        }
        Ok(PolicyNet {
            encoder: self.encoder.restore()?,
            head: self.head.restore()?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)
            .map_err(|e| OpadError::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path)
            .map_err(|e| OpadError::io(format!("reading {}", path.display()), e))?;
        let ck: Self = serde_json::from_str(&s)?;
        ck.policy()?;
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SampleId;
    use crate::rng;

    fn random_matrix(n: usize, d: usize, r: &mut Rng) -> Array2<f64> {
        Array2::from_shape_fn((n, d), |_| r.random_range(-1.0..1.0))
    }

    fn state(c: Array2<f64>, s: Array2<f64>) -> StateRepr {
        StateRepr {
            candidate_ids: (0..c.nrows() as u64).map(SampleId).collect(),
            state_ids: (0..s.nrows() as u64).map(SampleId).collect(),
            candidates: c,
            state: s,
            cycle_index: 0,
        }
    }

    #[test]
    fn q_invariant_to_state_row_permutation() {
        let mut r = rng::from_seed(3);
        let net = PolicyNet::new(6, 8, false, &mut r);
        let c = random_matrix(5, 6, &mut r);
        let s = random_matrix(7, 6, &mut r);
        let q = net.q_values(c.view(), s.view()).unwrap();
        let perm = [3, 0, 6, 2, 5, 1, 4];
        let sp = s.select(Axis(0), &perm);
        assert_eq!(q, net.q_values(c.view(), sp.view()).unwrap());
        // candidate permutation permutes Q
        let cperm = [4, 2, 0, 1, 3];
        let qp = net.q_values(c.select(Axis(0), &cperm).view(), s.view()).unwrap();
        for (i, &j) in cperm.iter().enumerate() {
            assert_eq!(qp[i], q[j]);
        }
    }

    #[test]
    fn duplicate_rows_equal_q_and_zero_head_gives_zero() {
        let mut r = rng::from_seed(3);
        let net = PolicyNet::new(4, 8, false, &mut r);
        let mut c = random_matrix(3, 4, &mut r);
        let row = c.row(0).to_owned();
        c.row_mut(2).assign(&row);
        let s = random_matrix(2, 4, &mut r);
        let q = net.q_values(c.view(), s.view()).unwrap();
        assert_eq!(q[0], q[2]);

        let zero = PolicyNet::new(4, 8, true, &mut r);
        assert!(zero.q_values(c.view(), s.view()).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(
            net.q_values(random_matrix(1, 5, &mut r).view(), s.view()),
            Err(OpadError::Dimension { .. })
        ));
    }

    #[test]
    fn epsilon_schedule() {
        let e = EpsilonSchedule::default();
        assert_eq!(e.training(0), 0.9);
        assert!((e.training(1) - 0.09).abs() < 1e-15);
        assert!((e.training(2) - 0.009).abs() < 1e-15);
        assert_eq!(e.deployment(), 0.0);
        let sub = EpsilonSchedule {
            mode: EpsDecayMode::Subtractive,
            ..e
        };
        assert!((sub.training(1) - 0.8).abs() < 1e-15);
        assert_eq!(sub.training(20), 0.0);
    }

    #[test]
    fn greedy_selection_is_block_argmax() {
        let q = Array1::from(vec![0.1, 0.5, 0.5, 0.2, 0.9, 0.0, 0.3, 0.3]);
        let p = Partition::contiguous(8, 2).unwrap();
        let a = select_actions(&q, &p, 0.0, &mut rng::from_seed(0));
        assert_eq!(a, vec![1, 4]);
    }

    #[test]
    fn exploration_is_uniform_within_block() {
        let q = Array1::from(vec![1.0, 0.0, 0.0, 0.0]);
        let p = Partition::contiguous(4, 1).unwrap();
        let mut r = rng::from_seed(9);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[select_actions(&q, &p, 1.0, &mut r)[0]] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.25).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn partition_blocks() {
        let p = Partition::shuffled(256, 64, &mut rng::from_seed(1)).unwrap();
        assert_eq!(p.blocks().len(), 64);
        assert!(p.blocks().iter().all(|b| b.len() == 4));
        let mut all: Vec<usize> = p.blocks().concat();
        all.sort();
        assert_eq!(all, (0..256).collect::<Vec<_>>());
        assert!(Partition::shuffled(10, 3, &mut rng::from_seed(1)).is_err());
    }

    fn dummy_transition(tag: f64) -> Transition {
        let c = Array2::from_elem((2, 1), tag);
        Transition {
            state: state(c.clone(), c),
            partition: Partition::contiguous(2, 1).unwrap(),
            actions: vec![0],
            reward: tag,
            next: None,
            terminal: true,
        }
    }

    #[test]
    fn replay_is_fifo() {
        let mut b = ReplayBuffer::new(1000);
        b.push(dummy_transition(0.0));
        assert_eq!(b.len(), 1);
        for i in 1..1001 {
            b.push(dummy_transition(i as f64));
        }
        assert_eq!(b.len(), 1000);
        let rewards: Vec<f64> = b.iter().map(|t| t.reward).collect();
        assert_eq!(rewards, (1..1001).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn policy_gradient_matches_finite_differences() {
        let mut r = rng::from_seed(5);
        let net = PolicyNet::new(5, 6, false, &mut r);
        let c = random_matrix(4, 5, &mut r);
        let s = random_matrix(3, 5, &mut r);
        let w = Array1::from_shape_fn(4, |_| r.random_range(-1.0..1.0));
        let objective = |n: &PolicyNet| n.q_values(c.view(), s.view()).unwrap().dot(&w);
        let (_, cache) = net.forward_cached(c.view(), s.view()).unwrap();
        let analytic = net.backward(&cache, &w).flatten();
        let base = net.flat_params();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut p = base.clone();
            let mut n2 = net.clone();
            p[i] += h;
            n2.set_flat_params(&p).unwrap();
            let up = objective(&n2);
            p[i] -= 2.0 * h;
            n2.set_flat_params(&p).unwrap();
            let down = objective(&n2);
            let fd = (up - down) / (2.0 * h);
            let denom = fd.abs().max(analytic[i].abs()).max(1e-6);
            assert!((fd - analytic[i]).abs() / denom < 1e-4, "param {i}: {fd} vs {}", analytic[i]);
        }
    }

    #[test]
    fn gamma_zero_targets_are_rewards() {
        let mut r = rng::from_seed(1);
        let net = PolicyNet::new(3, 4, false, &mut r);
        let c = random_matrix(4, 3, &mut r);
        let s = random_matrix(2, 3, &mut r);
        let t = Transition {
            state: state(c.clone(), s.clone()),
            partition: Partition::contiguous(4, 2).unwrap(),
            actions: vec![1, 2],
            reward: 0.37,
            next: Some(NextState {
                state: state(c, s),
                partition: Partition::contiguous(4, 2).unwrap(),
            }),
            terminal: false,
        };
        let y = td_targets(&net, &net, &t, 0.0, TargetStyle::Double).unwrap();
        assert_eq!(y, vec![0.37, 0.37]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut r = rng::from_seed(1);
        let agent = DqnAgent::new(7, PolicyConfig::default(), &mut r);
        let ck = agent.checkpoint();
        let back: PolicyCheckpoint = serde_json::from_str(&serde_json::to_string(&ck).unwrap()).unwrap();
        assert_eq!(back, ck);
        let a2 = DqnAgent::from_checkpoint(&back).unwrap();
        assert_eq!(a2.online, agent.online);
        assert_eq!(a2.target, agent.target);
    }
}
