//! Active-learning loops: episodic policy training and the shared
//! learning-curve runner used for the trained policy and the baselines.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acquisition::{select, AcquisitionStrategy, SelectionInput};
use crate::annotator::{annotate_strong, annotate_weak, CostLedger, CostModel, FeedbackOutcome, LabellingMode};
use crate::data::{
    hold_out_policy_sets, init_deployment_pools, DataPools, Dataset, EntityAnnotation, HoldOut, SampleId, TaskKind,
};
use crate::error::{OpadError, Result};
use crate::policy::{select_actions, DqnAgent, NextState, Partition, PolicyCheckpoint, PolicyConfig, Transition};
use crate::rewards::{class_entropy_reward, combine, feedback_reward, vanilla_reward, RewardBreakdown, RewardConfig};
use crate::rng::{self, Rng};
use crate::state::{build_state, embedding_dim, StateRepr};
use crate::theta::{ThetaConfig, ThetaModel};

/// Annotation budget on top of the seed set. Both limits apply when set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    /// Newly acquired samples.
    pub samples: Option<usize>,
    /// Ledger seconds.
    pub seconds: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub n_episodes: usize,
    pub n_cycles: usize,
    pub n_cycle: usize,
    pub n_pool: usize,
    pub n_init: usize,
    pub n_state: usize,
    pub met_fraction: f64,
    pub budget: Budget,
    pub labelling_mode: LabellingMode,
    pub show_threshold: f64,
    pub reward: RewardConfig,
    pub theta: ThetaConfig,
    pub policy: PolicyConfig,
    /// Predictions kept per detection sample in the state embedding.
    pub top_k: usize,
    /// Policy updates after each training cycle.
    pub optimize_steps: usize,
    /// Share candidate, Θ-training and selection streams across strategies.
    pub paired: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            n_episodes: 10,
            n_cycles: 10,
            n_cycle: 64,
            n_pool: 4,
            n_init: 512,
            n_state: 256,
            met_fraction: 0.1,
            budget: Budget::default(),
            labelling_mode: LabellingMode::Strong,
            show_threshold: crate::annotator::DEFAULT_SHOW_THRESHOLD,
            reward: RewardConfig::default(),
            theta: ThetaConfig::default(),
            policy: PolicyConfig::default(),
            top_k: 10,
            optimize_steps: 1,
            paired: true,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self, task: TaskKind) -> Result<()> {
        let positive = [
            ("n_cycle", self.n_cycle),
            ("n_pool", self.n_pool),
            ("n_init", self.n_init),
            ("top_k", self.top_k),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(OpadError::config(format!("{name} must be positive")));
            }
        }
        if self.budget.samples == Some(0) || self.budget.seconds == Some(0) {
            return Err(OpadError::config("budget must be positive"));
        }
        if self.reward.use_feedback && self.labelling_mode != LabellingMode::Weak {
            return Err(OpadError::config("the feedback reward needs weak labelling"));
        }
        self.reward.validate(task)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub run_id: String,
    pub strategy: String,
    /// 0 is the seed-set point before any acquisition.
    pub cycle: usize,
    pub selected: Vec<SampleId>,
    pub n_labelled: usize,
    pub metric: f64,
    pub reward: RewardBreakdown,
    pub seconds_spent: u64,
    /// Class entropy of the batch's entities, whether or not it is rewarded.
    pub batch_class_entropy: f64,
}

/// One CSV row of a learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRow {
    pub run_id: String,
    pub strategy: String,
    pub cycle: usize,
    pub n_labelled: usize,
    pub metric: f64,
    pub reward_total: f64,
    pub reward_vanilla: f64,
    pub reward_cls: f64,
    pub reward_fb: f64,
    pub seconds_spent: u64,
    pub batch_class_entropy: f64,
}

impl From<&CycleRecord> for CycleRow {
    fn from(r: &CycleRecord) -> Self {
        CycleRow {
            run_id: r.run_id.clone(),
            strategy: r.strategy.clone(),
            cycle: r.cycle,
            n_labelled: r.n_labelled,
            metric: r.metric,
            reward_total: r.reward.total,
            reward_vanilla: r.reward.vanilla,
            reward_cls: r.reward.cls_entropy,
            reward_fb: r.reward.feedback,
            seconds_spent: r.seconds_spent,
            batch_class_entropy: r.batch_class_entropy,
        }
    }
}

pub fn write_cycle_csv<'a, W: Write>(w: W, records: impl IntoIterator<Item = &'a CycleRecord>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in records {
        wr.serialize(CycleRow::from(r))?;
    }
    wr.flush().map_err(|e| OpadError::io("writing cycle csv", e))?;
    Ok(())
}

pub fn read_cycle_csv(path: &Path) -> Result<Vec<CycleRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    rd.deserialize().map(|r| r.map_err(OpadError::from)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Completed,
    PoolExhausted,
    SampleBudget,
    SecondsBudget,
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub records: Vec<CycleRecord>,
    pub ledger: CostLedger,
    pub termination: Termination,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub episode: usize,
    pub cycle: usize,
    /// Mean pre-step loss over the cycle's updates.
    pub loss: f64,
    pub updates: usize,
    pub learning_rate: f64,
}

/// Trained policy plus what deployment needs to rebuild its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPolicy {
    pub format: String,
    pub task: TaskKind,
    pub top_k: usize,
    pub state_ids: Vec<SampleId>,
    pub checkpoint: PolicyCheckpoint,
}

const TRAINED_FORMAT: &str = "opad-trained-policy-v1";

impl TrainedPolicy {
    pub fn state_set(&self) -> BTreeSet<SampleId> {
        self.state_ids.iter().copied().collect()
    }

    pub fn strategy(&self) -> Result<AcquisitionStrategy> {
        Ok(AcquisitionStrategy::Policy(Box::new(self.checkpoint.policy()?)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string(self)?;
        fs::write(path, s).map_err(|e| OpadError::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| OpadError::io(format!("reading {}", path.display()), e))?;
        let t: TrainedPolicy = serde_json::from_str(&s)?;
        if t.format != TRAINED_FORMAT {
            return Err(OpadError::config(format!("unsupported policy format `{}`", t.format)));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub agent: DqnAgent,
    pub hold: HoldOut,
    pub records: Vec<CycleRecord>,
    pub losses: Vec<LossRecord>,
    pub ledger: CostLedger,
}

impl TrainingOutcome {
    pub fn trained_policy(&self, task: TaskKind, top_k: usize) -> TrainedPolicy {
        TrainedPolicy {
            format: TRAINED_FORMAT.to_string(),
            task,
            top_k,
            state_ids: self.hold.x_state.iter().copied().collect(),
            checkpoint: self.agent.checkpoint(),
        }
    }
}

/// Labels, cost and feedback for one acquired batch.
struct Annotated {
    labels: Vec<Vec<EntityAnnotation>>,
    seconds: Vec<(SampleId, crate::annotator::Cost)>,
    outcomes: Vec<FeedbackOutcome>,
}

impl Annotated {
    fn total_seconds(&self) -> u64 {
        self.seconds.iter().map(|(_, c)| c.seconds).sum()
    }
}

fn annotate_batch(
    dataset: &Dataset,
    theta: &ThetaModel,
    pools: &DataPools,
    selected: &[SampleId],
    cfg: &LoopConfig,
) -> Result<Annotated> {
    let model = CostModel::for_task(dataset.task);
    let mut out = Annotated {
        labels: Vec::with_capacity(selected.len()),
        seconds: Vec::with_capacity(selected.len()),
        outcomes: Vec::new(),
    };
    for &id in selected {
        let sample = dataset.sample(id)?;
        let state = pools.annotation_state(id);
        match cfg.labelling_mode {
            LabellingMode::Strong => {
                let (labels, cost) = annotate_strong(sample, state, model)?;
                out.labels.push(labels);
                out.seconds.push((id, cost));
            }
            LabellingMode::Weak => {
                if state != crate::data::AnnotationState::Unlabelled {
                    return Err(OpadError::integrity(format!("sample {id} is already labelled")));
                }
                let preds = theta.predict(sample)?;
                let (outcome, labels, cost) =
                    annotate_weak(sample, dataset.task, dataset.n_classes, &preds, cfg.show_threshold, model);
                out.labels.push(labels);
                out.seconds.push((id, cost));
                out.outcomes.push(outcome);
            }
        }
    }
    Ok(out)
}

fn batch_rewards(
    dataset: &Dataset,
    cfg: &LoopConfig,
    metric: f64,
    metric_prev: f64,
    batch: &Annotated,
) -> Result<(RewardBreakdown, f64)> {
    let h = class_entropy_reward(batch.labels.iter().map(Vec::as_slice));
    let fb = if cfg.reward.use_feedback {
        feedback_reward(dataset.task, dataset.n_classes, &batch.outcomes)?
    } else {
        0.0
    };
    Ok((combine(&cfg.reward, vanilla_reward(metric, metric_prev), h, fb), h))
}

fn ids(set: &BTreeSet<SampleId>) -> Vec<SampleId> {
    set.iter().copied().collect()
}

fn retrain(theta: &mut ThetaModel, dataset: &Dataset, pools: &DataPools, r: &mut Rng) -> Result<()> {
    if theta.config.cold_start {
        *theta = theta.reinitialized(r);
    }
    let iterations = theta.config.iterations;
    theta.train(dataset, pools.labelled_annotations(), iterations, r)?;
    Ok(())
}

fn would_exceed_samples(budget: &Budget, acquired: usize, n_cycle: usize) -> bool {
    budget.samples.is_some_and(|b| acquired + n_cycle > b)
}

fn would_exceed_seconds(budget: &Budget, spent: u64, cost: u64) -> bool {
    budget.seconds.is_some_and(|b| spent + cost > b)
}

/// Draws a candidate set and builds its state and block partition.
fn draw_state(
    dataset: &Dataset,
    theta: &ThetaModel,
    pools: &mut DataPools,
    cfg: &LoopConfig,
    cand_rng: &mut Rng,
    part_rng: &mut Rng,
    cycle_index: usize,
) -> Result<Option<(StateRepr, Partition)>> {
    let cand = match pools.sample_candidates(cfg.n_pool, cfg.n_cycle, cand_rng) {
        Ok(c) => c,
        Err(OpadError::EndOfEpisode { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let st = build_state(theta, dataset, &cand, &ids(pools.state_set()), cfg.top_k, cycle_index)?;
    let part = Partition::shuffled(st.n_candidates(), cfg.n_cycle, part_rng)?;
    Ok(Some((st, part)))
}

/// Episodic deep-Q policy training on the train split. Every episode starts
/// from a fresh Θ and seed set; the metric is measured on the fixed metric
/// hold-out.
pub fn run_policy_training(dataset: &Dataset, cfg: &LoopConfig, seed: u64) -> Result<TrainingOutcome> {
    cfg.validate(dataset.task)?;
    let hold = hold_out_policy_sets(dataset, cfg.n_state, cfg.met_fraction, seed)?;
    if hold.x_state.is_empty() {
        return Err(OpadError::config("n_state must be positive for policy training"));
    }
    let probe = ThetaModel::new(dataset, cfg.theta.clone(), &mut rng::stream(seed, "theta-init", 0));
    let dim = embedding_dim(&probe, cfg.top_k);
    let mut agent = DqnAgent::new(dim, cfg.policy.clone(), &mut rng::stream(seed, "policy-init", 0));
    let mut opt_rng = rng::stream(seed, "optimize", 0);
    let mut records = Vec::new();
    let mut losses = Vec::new();
    let mut ledger = CostLedger::new();
    let model = CostModel::for_task(dataset.task);

    for ep in 0..cfg.n_episodes {
        let e = ep as u64;
        let run_id = format!("train-e{ep}");
        let mut theta = ThetaModel::new(dataset, cfg.theta.clone(), &mut rng::stream(seed, "theta-init", e));
        let mut pools = DataPools::start_episode(dataset, &hold, cfg.n_init, rng::derive(seed, "episode", e))?;
        pools.budget_total = cfg.budget.seconds;
        if pools.unlabelled().len() < cfg.n_cycles * cfg.n_cycle {
            return Err(OpadError::config(format!(
                "unlabelled pool of {} cannot supply {} cycles of {}",
                pools.unlabelled().len(),
                cfg.n_cycles,
                cfg.n_cycle
            )));
        }
        let mut theta_rng = rng::stream(seed, "theta-train", e);
        let mut cand_rng = rng::stream(seed, "candidates", e);
        let mut part_rng = rng::stream(seed, "partition", e);
        let mut act_rng = rng::stream(seed, "explore", e);
        let met_ids = ids(pools.metric_set()?);

        retrain(&mut theta, dataset, &pools, &mut theta_rng)?;
        let mut metric_prev = theta.metric(dataset, &met_ids)?.value;
        records.push(CycleRecord {
            run_id: run_id.clone(),
            strategy: "policy".into(),
            cycle: 0,
            selected: vec![],
            n_labelled: pools.labelled().len(),
            metric: metric_prev,
            reward: RewardBreakdown::default(),
            seconds_spent: 0,
            batch_class_entropy: 0.0,
        });

        let mut current = draw_state(dataset, &theta, &mut pools, cfg, &mut cand_rng, &mut part_rng, 0)?;
        let mut acquired = 0usize;
        for cycle in 1..=cfg.n_cycles {
            let Some((st, part)) = current.take() else { break };
            if would_exceed_samples(&cfg.budget, acquired, cfg.n_cycle) {
                agent.buffer.mark_last_terminal();
                break;
            }
            let eps = cfg.policy.epsilon.training(cycle - 1);
            let q = agent.online.q_state(&st)?;
            let actions = select_actions(&q, &part, eps, &mut act_rng);
            let selected: Vec<SampleId> = actions.iter().map(|&a| st.candidate_ids[a]).collect();
            let batch = annotate_batch(dataset, &theta, &pools, &selected, cfg)?;
            if would_exceed_seconds(&cfg.budget, pools.budget_spent, batch.total_seconds()) {
                agent.buffer.mark_last_terminal();
                break;
            }
            pools.commit_selection(&selected, batch.labels.clone())?;
            pools.charge(batch.total_seconds())?;
            for (id, c) in &batch.seconds {
                ledger.record(cycle, *id, *c, model);
            }
            acquired += selected.len();
            retrain(&mut theta, dataset, &pools, &mut theta_rng)?;
            let metric = theta.metric(dataset, &met_ids)?.value;
            let (reward, h) = batch_rewards(dataset, cfg, metric, metric_prev, &batch)?;
            metric_prev = metric;

            let last = cycle == cfg.n_cycles || would_exceed_samples(&cfg.budget, acquired, cfg.n_cycle);
            let next = if last {
                None
            } else {
                draw_state(dataset, &theta, &mut pools, cfg, &mut cand_rng, &mut part_rng, cycle)?
            };
            agent.push_transition(Transition {
                state: st,
                partition: part,
                actions,
                reward: reward.total,
                next: next.as_ref().map(|(s, p)| NextState {
                    state: s.clone(),
                    partition: p.clone(),
                }),
                terminal: next.is_none(),
            })?;
            let mut loss_sum = 0.0;
            for _ in 0..cfg.optimize_steps {
                loss_sum += agent.optimize_step(&mut opt_rng)?;
            }
            losses.push(LossRecord {
                episode: ep,
                cycle,
                loss: if cfg.optimize_steps > 0 { loss_sum / cfg.optimize_steps as f64 } else { 0.0 },
                updates: agent.updates(),
                learning_rate: agent.learning_rate(),
            });
            records.push(CycleRecord {
                run_id: run_id.clone(),
                strategy: "policy".into(),
                cycle,
                selected,
                n_labelled: pools.labelled().len(),
                metric,
                reward,
                seconds_spent: pools.budget_spent,
                batch_class_entropy: h,
            });
            pools.check_invariants()?;
            current = next;
        }
    }
    Ok(TrainingOutcome {
        agent,
        hold,
        records,
        losses,
        ledger,
    })
}

/// Stream label for per-run randomness; paired runs share it across
/// strategies.
fn stream_label(cfg: &LoopConfig, base: &str, strategy: &str) -> String {
    if cfg.paired {
        base.to_string()
    } else {
        format!("{base}/{strategy}")
    }
}

/// Learning curve on the validation split, measured on the test split after
/// every cycle. Θ is re-initialised once; the strategy never learns.
pub fn run_curve(
    dataset: &Dataset,
    strategy: &AcquisitionStrategy,
    cfg: &LoopConfig,
    x_state: &BTreeSet<SampleId>,
    seed: u64,
    run_id: &str,
) -> Result<RunLog> {
    cfg.validate(dataset.task)?;
    let name = strategy.kind().as_str();
    let label = |base: &str| stream_label(cfg, base, name);
    let model = CostModel::for_task(dataset.task);
    let mut theta = ThetaModel::new(dataset, cfg.theta.clone(), &mut rng::stream(seed, &label("theta-init"), 0));
    if let AcquisitionStrategy::Policy(net) = strategy {
        let dim = embedding_dim(&theta, cfg.top_k);
        if net.input_dim() != dim {
            return Err(OpadError::Dimension {
                expected: dim,
                got: net.input_dim(),
            });
        }
        if x_state.is_empty() {
            return Err(OpadError::config("the policy strategy needs a state set"));
        }
    }
    let mut pools = init_deployment_pools(dataset, cfg.n_init, x_state, seed)?;
    pools.budget_total = cfg.budget.seconds;
    let test_ids = ids(pools.test_set()?);
    if test_ids.is_empty() {
        return Err(OpadError::Empty("test set"));
    }
    let mut ledger = CostLedger::new();
    let mut theta_rng = rng::stream(seed, &label("theta-train"), 0);
    retrain(&mut theta, dataset, &pools, &mut theta_rng)?;
    let mut metric_prev = theta.metric(dataset, &test_ids)?.value;
    let mut records = vec![CycleRecord {
        run_id: run_id.to_string(),
        strategy: name.to_string(),
        cycle: 0,
        selected: vec![],
        n_labelled: pools.labelled().len(),
        metric: metric_prev,
        reward: RewardBreakdown::default(),
        seconds_spent: 0,
        batch_class_entropy: 0.0,
    }];
    let mut acquired = 0usize;
    let mut termination = Termination::Completed;
    for cycle in 1..=cfg.n_cycles {
        let c = cycle as u64;
        if would_exceed_samples(&cfg.budget, acquired, cfg.n_cycle) {
            termination = Termination::SampleBudget;
            break;
        }
        let mut cand_rng = rng::stream(seed, &label("candidates"), c);
        let cand = match pools.sample_candidates(cfg.n_pool, cfg.n_cycle, &mut cand_rng) {
            Ok(v) => v,
            Err(OpadError::EndOfEpisode { .. }) => {
                termination = Termination::PoolExhausted;
                break;
            }
            Err(e) => return Err(e),
        };
        let mut sel_rng = rng::stream(seed, &label("select"), c);
        let (st, part) = if strategy.needs_state() {
            let st = build_state(&theta, dataset, &cand, &ids(x_state), cfg.top_k, cycle - 1)?;
            let part = Partition::shuffled(st.n_candidates(), cfg.n_cycle, &mut sel_rng)?;
            (Some(st), Some(part))
        } else {
            (None, None)
        };
        let input = SelectionInput {
            dataset,
            theta: &theta,
            candidates: &cand,
            state: st.as_ref(),
            partition: part.as_ref(),
            epsilon: cfg.policy.epsilon.deployment(),
        };
        let selected = select(strategy, &input, cfg.n_cycle, &mut sel_rng)?;
        let batch = annotate_batch(dataset, &theta, &pools, &selected, cfg)?;
        if would_exceed_seconds(&cfg.budget, pools.budget_spent, batch.total_seconds()) {
            termination = Termination::SecondsBudget;
            break;
        }
        pools.commit_selection(&selected, batch.labels.clone())?;
        pools.charge(batch.total_seconds())?;
        for (id, cost) in &batch.seconds {
            ledger.record(cycle, *id, *cost, model);
        }
        acquired += selected.len();
        retrain(&mut theta, dataset, &pools, &mut theta_rng)?;
        let metric = theta.metric(dataset, &test_ids)?.value;
        let (reward, h) = batch_rewards(dataset, cfg, metric, metric_prev, &batch)?;
        metric_prev = metric;
        records.push(CycleRecord {
            run_id: run_id.to_string(),
            strategy: name.to_string(),
            cycle,
            selected,
            n_labelled: pools.labelled().len(),
            metric,
            reward,
            seconds_spent: pools.budget_spent,
            batch_class_entropy: h,
        });
        pools.check_invariants()?;
    }
    Ok(RunLog {
        records,
        ledger,
        termination,
    })
}

/// Deployment of a trained policy: greedy, frozen, on the validation split.
pub fn run_deployment(
    dataset: &Dataset,
    policy: &TrainedPolicy,
    cfg: &LoopConfig,
    seed: u64,
    run_id: &str,
) -> Result<RunLog> {
    if policy.task != dataset.task {
        return Err(OpadError::config(format!(
            "policy trained for {} cannot deploy on {}",
            policy.task, dataset.task
        )));
    }
    let cfg = LoopConfig {
        top_k: policy.top_k,
        ..cfg.clone()
    };
    run_curve(dataset, &policy.strategy()?, &cfg, &policy.state_set(), seed, run_id)
}

pub fn run_baseline(
    dataset: &Dataset,
    strategy: &AcquisitionStrategy,
    cfg: &LoopConfig,
    seed: u64,
    run_id: &str,
) -> Result<RunLog> {
    if strategy.needs_state() {
        return Err(OpadError::config("baselines do not use a learned policy"));
    }
    run_curve(dataset, strategy, cfg, &BTreeSet::new(), seed, run_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_detection_dataset, DetectionTaskSpec};

    fn tiny() -> (Dataset, LoopConfig) {
        let ds = generate_detection_dataset(&DetectionTaskSpec::default(), 400, 3)
            .unwrap()
            .with_splits(200, 120, 80)
            .unwrap();
        let cfg = LoopConfig {
            n_episodes: 2,
            n_cycles: 3,
            n_cycle: 4,
            n_pool: 4,
            n_init: 16,
            n_state: 16,
            theta: ThetaConfig {
                iterations: 30,
                ..ThetaConfig::default()
            },
            policy: PolicyConfig {
                hidden: 8,
                ..PolicyConfig::default()
            },
            ..LoopConfig::default()
        };
        (ds, cfg)
    }

    #[test]
    fn training_grows_labelled_set_and_logs_losses() {
        let (ds, cfg) = tiny();
        let out = run_policy_training(&ds, &cfg, 1).unwrap();
        assert_eq!(out.losses.len(), 6);
        assert_eq!(out.records.len(), 2 * 4);
        for ep in out.records.chunks(4) {
            for (i, r) in ep.iter().enumerate() {
                assert_eq!(r.n_labelled, 16 + 4 * i);
            }
        }
        assert_eq!(out.agent.buffer.len(), 6);
        let terminal: Vec<bool> = out.agent.buffer.iter().map(|t| t.terminal).collect();
        assert_eq!(terminal, vec![false, false, true, false, false, true]);
    }

    #[test]
    fn training_is_deterministic() {
        let (ds, cfg) = tiny();
        let a = run_policy_training(&ds, &cfg, 5).unwrap();
        let b = run_policy_training(&ds, &cfg, 5).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.agent.online, b.agent.online);
    }

    #[test]
    fn one_cycle_pushes_one_transition_per_episode() {
        let (ds, mut cfg) = tiny();
        cfg.n_cycles = 1;
        let out = run_policy_training(&ds, &cfg, 2).unwrap();
        assert_eq!(out.agent.buffer.len(), cfg.n_episodes);
    }

    #[test]
    fn deployment_keeps_policy_frozen() {
        let (ds, cfg) = tiny();
        let out = run_policy_training(&ds, &cfg, 1).unwrap();
        let trained = out.trained_policy(ds.task, cfg.top_k);
        let before = trained.checkpoint.clone();
        let log = run_deployment(&ds, &trained, &cfg, 9, "p").unwrap();
        assert_eq!(trained.checkpoint, before);
        assert_eq!(log.records.len(), cfg.n_cycles + 1);
        assert_eq!(log.termination, Termination::Completed);
    }

    #[test]
    fn paired_baselines_share_first_candidates() {
        let (ds, cfg) = tiny();
        let a = run_baseline(&ds, &AcquisitionStrategy::Random, &cfg, 4, "r").unwrap();
        let b = run_baseline(&ds, &AcquisitionStrategy::EntropyMax, &cfg, 4, "e").unwrap();
        assert_eq!(a.records[0].metric, b.records[0].metric);
        assert_eq!(a.records.len(), b.records.len());
    }

    #[test]
    fn seconds_budget_stops_before_overrun() {
        let (ds, mut cfg) = tiny();
        cfg.budget.seconds = Some(300);
        cfg.n_cycles = 50;
        let log = run_baseline(&ds, &AcquisitionStrategy::Random, &cfg, 4, "r").unwrap();
        assert!(log.ledger.total_seconds() <= 300);
        assert_eq!(log.termination, Termination::SecondsBudget);
    }

    #[test]
    fn sample_budget_limits_cycles() {
        let (ds, mut cfg) = tiny();
        cfg.budget.samples = Some(9);
        let log = run_baseline(&ds, &AcquisitionStrategy::Random, &cfg, 4, "r").unwrap();
        assert_eq!(log.records.len(), 3);
        assert_eq!(log.termination, Termination::SampleBudget);
    }

    #[test]
    fn feedback_requires_weak_mode() {
        let (ds, mut cfg) = tiny();
        cfg.reward = RewardConfig::with_feedback(0.1);
        assert!(run_policy_training(&ds, &cfg, 1).is_err());
        cfg.labelling_mode = LabellingMode::Weak;
        assert!(run_policy_training(&ds, &cfg, 1).is_ok());
    }

    #[test]
    fn cycle_csv_header() {
        let (ds, cfg) = tiny();
        let log = run_baseline(&ds, &AcquisitionStrategy::Random, &cfg, 4, "r").unwrap();
        let mut buf = Vec::new();
        write_cycle_csv(&mut buf, &log.records).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with(
            "run_id,strategy,cycle,n_labelled,metric,reward_total,reward_vanilla,reward_cls,reward_fb,seconds_spent,batch_class_entropy\n"
        ));
        assert_eq!(s.lines().count(), log.records.len() + 1);
    }
}
