//! Experiment configuration, artifact layout and result aggregation behind
//! the command-line subcommands.
//!
//! Output layout under the output directory:
//!
//! ```text
//! datasets/<task>.json
//! policies/<task>-<variant>.json           trained policy
//! policies/<task>-<variant>-loss.csv       episode,cycle,loss,updates,learning_rate
//! policies/<task>-<variant>-cycles.csv     training learning curves
//! curves/<task>/<cell>-s<seed>.csv         one evaluation run
//! ledgers/<task>/<cell>-s<seed>.csv        cycle,sample_id,action,seconds
//! curves/<task>/<cell>-mean.csv            cycle,n_labelled,metric_mean,metric_std,seconds_mean
//! summary.csv
//! manifest-<command>.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{AcquisitionStrategy, MarginDirection, StrategyKind};
use crate::annotator::LabellingMode;
use crate::data::{Dataset, TaskKind};
use crate::error::{OpadError, Result};
use crate::loops::{
    read_cycle_csv, run_baseline, run_deployment, run_policy_training, write_cycle_csv, CycleRow, LoopConfig, RunLog,
    TrainedPolicy,
};
use crate::rewards::RewardConfig;
use crate::rng;
use crate::synth::{generate_detection_dataset, generate_sequence_dataset, DetectionTaskConfig, SequenceTaskConfig};
use crate::theta::MetricKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection<G> {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub generator: G,
    #[serde(default, rename = "loop")]
    pub loop_config: LoopConfig,
    /// Metric a curve must reach for the seconds-to-target column.
    #[serde(default)]
    pub target_metric: Option<f64>,
}

impl<G> TaskSection<G> {
    pub fn n_samples(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub strategies: Vec<StrategyKind>,
    pub modes: Vec<LabellingMode>,
    pub seeds: Vec<u64>,
    pub margin_direction: MarginDirection,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            strategies: StrategyKind::ALL.to_vec(),
            modes: vec![LabellingMode::Strong, LabellingMode::Weak],
            seeds: vec![0, 1, 2, 3, 4],
            margin_direction: MarginDirection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub enabled: bool,
    pub cls_lambdas: Vec<f64>,
    pub fb_lambdas: Vec<f64>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            enabled: false,
            cls_lambdas: vec![0.25, 0.5, 0.75, 1.0],
            fb_lambdas: vec![0.1, 0.25, 0.4, 0.7, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every artifact derives from it.
    pub seed: u64,
    #[serde(default)]
    pub detection: Option<TaskSection<DetectionTaskConfig>>,
    #[serde(default)]
    pub sequence: Option<TaskSection<SequenceTaskConfig>>,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub ablation: AblationConfig,
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| OpadError::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.detection.is_none() && self.sequence.is_none() {
            return Err(OpadError::config("config defines neither [detection] nor [sequence]"));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = self.evaluate.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(OpadError::config(format!("duplicate evaluation seed {dup}")));
        }
        if self.ablation.enabled && (self.ablation.cls_lambdas.is_empty() || self.ablation.fb_lambdas.is_empty()) {
            return Err(OpadError::config("ablation enabled with an empty lambda grid"));
        }
        if let Some(d) = &self.detection {
            d.generator.build()?;
            d.loop_config.validate(TaskKind::Detection)?;
        }
        if let Some(s) = &self.sequence {
            s.generator.build()?;
            s.loop_config.validate(TaskKind::Sequence)?;
        }
        Ok(())
    }

    pub fn tasks(&self) -> Vec<TaskKind> {
        let mut v = Vec::new();
        if self.detection.is_some() {
            v.push(TaskKind::Detection);
        }
        if self.sequence.is_some() {
            v.push(TaskKind::Sequence);
        }
        v
    }

    pub fn loop_config(&self, task: TaskKind) -> Result<&LoopConfig> {
        match task {
            TaskKind::Detection => self.detection.as_ref().map(|s| &s.loop_config),
            TaskKind::Sequence => self.sequence.as_ref().map(|s| &s.loop_config),
        }
        .ok_or_else(|| OpadError::config(format!("no [{task}] section")))
    }

    pub fn target_metric(&self, task: TaskKind) -> Option<f64> {
        match task {
            TaskKind::Detection => self.detection.as_ref().and_then(|s| s.target_metric),
            TaskKind::Sequence => self.sequence.as_ref().and_then(|s| s.target_metric),
        }
    }

    /// Generates the task's dataset from the master seed.
    pub fn dataset(&self, task: TaskKind) -> Result<Dataset> {
        let seed = rng::derive(self.seed, &format!("dataset/{task}"), 0);
        match task {
            TaskKind::Detection => {
                let s = self.detection.as_ref().ok_or_else(|| OpadError::config("no [detection] section"))?;
                generate_detection_dataset(&s.generator.build()?, s.n_samples(), seed)?.with_splits(s.train, s.val, s.test)
            }
            TaskKind::Sequence => {
                let s = self.sequence.as_ref().ok_or_else(|| OpadError::config("no [sequence] section"))?;
                generate_sequence_dataset(&s.generator.build()?, s.n_samples(), seed)?.with_splits(s.train, s.val, s.test)
            }
        }
    }

    /// Policy variants to train for `task`: vanilla plus the ablation grids.
    pub fn policy_variants(&self, task: TaskKind) -> Vec<PolicyVariant> {
        let metric = match task {
            TaskKind::Detection => MetricKind::AP,
            TaskKind::Sequence => MetricKind::Fscore,
        };
        let mut v = vec![PolicyVariant {
            name: "vanilla".into(),
            reward: RewardConfig::vanilla(metric),
            mode: None,
        }];
        if self.ablation.enabled {
            for &l in &self.ablation.cls_lambdas {
                v.push(PolicyVariant {
                    name: format!("cls-{l}"),
                    reward: RewardConfig::with_class_entropy(metric, l),
                    mode: None,
                });
            }
            if task == TaskKind::Detection {
                for &l in &self.ablation.fb_lambdas {
                    v.push(PolicyVariant {
                        name: format!("fb-{l}"),
                        reward: RewardConfig::with_feedback(l),
                        mode: Some(LabellingMode::Weak),
                    });
                }
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyVariant {
    pub name: String,
    pub reward: RewardConfig,
    /// Labelling mode forced by the variant (feedback needs weak labels).
    pub mode: Option<LabellingMode>,
}

impl PolicyVariant {
    pub fn loop_config(&self, base: &LoopConfig) -> LoopConfig {
        LoopConfig {
            reward: self.reward,
            labelling_mode: self.mode.unwrap_or(base.labelling_mode),
            ..base.clone()
        }
    }
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| OpadError::io(format!("creating {}", p.display()), e))
}

fn write_file(p: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = p.parent() {
        create_dir(parent)?;
    }
    fs::write(p, bytes).map_err(|e| OpadError::io(format!("writing {}", p.display()), e))
}

fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        wr.write_record(header)?;
    }
    for r in rows {
        wr.serialize(r)?;
    }
    wr.into_inner().map_err(|e| OpadError::io("flushing csv", e.into_error()))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    created_unix: u64,
    version: &'a str,
    config: &'a ExperimentConfig,
    files: Vec<String>,
}

fn write_manifest(out: &Path, command: &str, cfg: &ExperimentConfig, files: &[PathBuf]) -> Result<PathBuf> {
    let created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let m = Manifest {
        command,
        created_unix,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        files: files
            .iter()
            .map(|f| f.strip_prefix(out).unwrap_or(f).display().to_string())
            .collect(),
    };
    let p = out.join(format!("manifest-{command}.json"));
    write_file(&p, serde_json::to_string_pretty(&m)?.as_bytes())?;
    Ok(p)
}

pub fn dataset_path(out: &Path, task: TaskKind) -> PathBuf {
    out.join("datasets").join(format!("{task}.json"))
}

pub fn policy_path(out: &Path, task: TaskKind, variant: &str) -> PathBuf {
    out.join("policies").join(format!("{task}-{variant}.json"))
}

/// Loads the task's dataset from `out`, generating it when absent.
fn dataset_for(cfg: &ExperimentConfig, out: &Path, task: TaskKind) -> Result<Dataset> {
    let p = dataset_path(out, task);
    if p.exists() {
        let ds = Dataset::load(&p)?;
        if ds.task != task {
            return Err(OpadError::config(format!("{} does not hold a {task} dataset", p.display())));
        }
        Ok(ds)
    } else {
        cfg.dataset(task)
    }
}

/// Writes one dataset file per configured task (or only `only`).
pub fn cli_generate(cfg: &ExperimentConfig, out: &Path, only: Option<TaskKind>) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for task in cfg.tasks() {
        if only.is_some_and(|t| t != task) {
            continue;
        }
        let ds = cfg.dataset(task)?;
        let p = dataset_path(out, task);
        write_file(&p, ds.to_json()?.as_bytes())?;
        files.push(p);
    }
    if files.is_empty() {
        return Err(OpadError::config("no task selected for generation"));
    }
    write_manifest(out, "generate", cfg, &files)?;
    Ok(files)
}

/// Trains every policy variant of every configured task.
pub fn cli_train_policy(cfg: &ExperimentConfig, out: &Path, only: Option<TaskKind>) -> Result<Vec<PathBuf>> {
    let mut jobs = Vec::new();
    for task in cfg.tasks() {
        if only.is_some_and(|t| t != task) {
            continue;
        }
        let ds = dataset_for(cfg, out, task)?;
        let base = cfg.loop_config(task)?.clone();
        for v in cfg.policy_variants(task) {
            jobs.push((task, ds.clone(), v.loop_config(&base), v.name));
        }
    }
    let seed = rng::derive(cfg.seed, "policy-training", 0);
    let results: Vec<Result<(TaskKind, String, LoopConfig, crate::loops::TrainingOutcome)>> = jobs
        .into_par_iter()
        .map(|(task, ds, lc, name)| {
            let outcome = run_policy_training(&ds, &lc, seed)?;
            Ok((task, name, lc, outcome))
        })
        .collect();
    let mut files = Vec::new();
    for r in results {
        let (task, name, lc, outcome) = r?;
        let p = policy_path(out, task, &name);
        create_dir(&out.join("policies"))?;
        outcome.trained_policy(task, lc.top_k).save(&p)?;
        files.push(p);
        let loss = out.join("policies").join(format!("{task}-{name}-loss.csv"));
        write_file(
            &loss,
            &csv_bytes(&outcome.losses, &["episode", "cycle", "loss", "updates", "learning_rate"])?,
        )?;
        files.push(loss);
        let curves = out.join("policies").join(format!("{task}-{name}-cycles.csv"));
        let mut buf = Vec::new();
        write_cycle_csv(&mut buf, &outcome.records)?;
        write_file(&curves, &buf)?;
        files.push(curves);
    }
    write_manifest(out, "train-policy", cfg, &files)?;
    Ok(files)
}

/// One cell of the evaluation matrix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Cell {
    pub task: TaskKind,
    pub strategy: StrategyKind,
    pub mode: LabellingMode,
    /// Policy variant; empty for baselines.
    pub variant: String,
}

impl Cell {
    pub fn name(&self) -> String {
        if self.variant.is_empty() || self.variant == "vanilla" {
            format!("{}-{}", self.strategy, self.mode)
        } else {
            format!("{}@{}-{}", self.strategy, self.variant, self.mode)
        }
    }
}

/// Every (strategy, mode) cell plus ablation cells for trained variants.
pub fn evaluation_cells(cfg: &ExperimentConfig, task: TaskKind) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &strategy in &cfg.evaluate.strategies {
        for &mode in &cfg.evaluate.modes {
            cells.push(Cell {
                task,
                strategy,
                mode,
                variant: if strategy == StrategyKind::Policy { "vanilla".into() } else { String::new() },
            });
        }
    }
    if cfg.ablation.enabled && cfg.evaluate.strategies.contains(&StrategyKind::Policy) {
        for v in cfg.policy_variants(task).into_iter().skip(1) {
            cells.push(Cell {
                task,
                strategy: StrategyKind::Policy,
                mode: v.mode.unwrap_or(LabellingMode::Strong),
                variant: v.name,
            });
        }
    }
    cells
}

fn baseline_strategy(kind: StrategyKind, dir: MarginDirection) -> AcquisitionStrategy {
    match kind {
        StrategyKind::Random => AcquisitionStrategy::Random,
        StrategyKind::EntropyMax => AcquisitionStrategy::EntropyMax,
        StrategyKind::EntropySum => AcquisitionStrategy::EntropySum,
        StrategyKind::Margin => AcquisitionStrategy::Margin(dir),
        StrategyKind::Policy => unreachable!("policy cells load a checkpoint"),
    }
}

/// Evaluation seed `s` mapped into the master seed's stream family.
pub fn run_seed(master: u64, s: u64) -> u64 {
    rng::derive(master, "evaluate", s)
}

pub fn run_cell(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    cell: &Cell,
    policy: Option<&TrainedPolicy>,
    seed: u64,
) -> Result<RunLog> {
    let base = cfg.loop_config(cell.task)?;
    let lc = LoopConfig {
        labelling_mode: cell.mode,
        reward: RewardConfig {
            use_feedback: base.reward.use_feedback && cell.mode == LabellingMode::Weak,
            ..base.reward
        },
        ..base.clone()
    };
    let run_id = format!("{}-s{seed}", cell.name());
    let rs = run_seed(cfg.seed, seed);
    match cell.strategy {
        StrategyKind::Policy => {
            let p = policy.ok_or_else(|| {
                OpadError::config(format!("cell {}/{} has no trained policy", cell.task, cell.name()))
            })?;
            run_deployment(ds, p, &lc, rs, &run_id)
        }
        k => run_baseline(ds, &baseline_strategy(k, cfg.evaluate.margin_direction), &lc, rs, &run_id),
    }
}

/// Runs the whole evaluation matrix, writes per-run curves and ledgers,
/// then aggregates them into mean curves and the summary table.
pub fn cli_evaluate(cfg: &ExperimentConfig, out: &Path, only: Option<TaskKind>) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for task in cfg.tasks() {
        if only.is_some_and(|t| t != task) {
            continue;
        }
        let ds = dataset_for(cfg, out, task)?;
        let cells = evaluation_cells(cfg, task);
        let mut policies: BTreeMap<String, TrainedPolicy> = BTreeMap::new();
        for c in cells.iter().filter(|c| c.strategy == StrategyKind::Policy) {
            if policies.contains_key(&c.variant) {
                continue;
            }
            let p = policy_path(out, task, &c.variant);
            if !p.exists() {
                return Err(OpadError::config(format!(
                    "cell {task}/{} needs a policy checkpoint at {}",
                    c.name(),
                    p.display()
                )));
            }
            policies.insert(c.variant.clone(), TrainedPolicy::load(&p)?);
        }
        let jobs: Vec<(&Cell, u64)> = cells
            .iter()
            .flat_map(|c| cfg.evaluate.seeds.iter().map(move |&s| (c, s)))
            .collect();
        let logs: Vec<Result<RunLog>> = jobs
            .par_iter()
            .map(|(c, s)| run_cell(cfg, &ds, c, policies.get(&c.variant), *s))
            .collect();
        for ((c, s), log) in jobs.iter().zip(logs) {
            let log = log?;
            let name = format!("{}-s{s}.csv", c.name());
            let mut buf = Vec::new();
            write_cycle_csv(&mut buf, &log.records)?;
            let p = out.join("curves").join(task.to_string()).join(&name);
            write_file(&p, &buf)?;
            files.push(p);
            let mut buf = Vec::new();
            log.ledger.write_csv(&mut buf)?;
            let p = out.join("ledgers").join(task.to_string()).join(&name);
            write_file(&p, &buf)?;
            files.push(p);
        }
    }
    files.extend(cli_report(cfg, out)?);
    write_manifest(out, "evaluate", cfg, &files)?;
    Ok(files)
}

/// Mean-curve row of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub cycle: usize,
    pub n_labelled: f64,
    pub metric_mean: f64,
    pub metric_std: f64,
    pub seconds_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: TaskKind,
    pub cell: String,
    pub n_seeds: usize,
    pub final_metric_mean: f64,
    pub final_metric_std: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub seconds_total_mean: f64,
    /// Mean over seeds that reached the target; empty if none did.
    pub seconds_to_target_mean: Option<f64>,
    pub reached_target: usize,
    pub mean_batch_class_entropy: f64,
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Normalised area under the learning curve: trapezoids over cycle
/// index divided by the number of segments.
pub fn curve_auc(metrics: &[f64]) -> f64 {
    match metrics.len() {
        0 => 0.0,
        1 => metrics[0],
        n => metrics.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum::<f64>() / (n - 1) as f64,
    }
}

/// Ledger seconds at the first cycle whose metric reaches `target`.
pub fn seconds_to_target(rows: &[CycleRow], target: f64) -> Option<u64> {
    rows.iter().find(|r| r.metric >= target).map(|r| r.seconds_spent)
}

/// Mean per-batch class entropy over acquisition cycles.
pub fn mean_batch_entropy(rows: &[CycleRow]) -> f64 {
    let v: Vec<f64> = rows.iter().filter(|r| r.cycle > 0).map(|r| r.batch_class_entropy).collect();
    mean_std(&v).0
}

pub fn summarize(task: TaskKind, cell: &str, runs: &[Vec<CycleRow>], target: Option<f64>) -> (SummaryRow, Vec<MeanRow>) {
    let finals: Vec<f64> = runs.iter().filter_map(|r| r.last().map(|x| x.metric)).collect();
    let aucs: Vec<f64> = runs
        .iter()
        .map(|r| curve_auc(&r.iter().map(|x| x.metric).collect::<Vec<_>>()))
        .collect();
    let totals: Vec<f64> = runs.iter().filter_map(|r| r.last().map(|x| x.seconds_spent as f64)).collect();
    let reached: Vec<f64> = match target {
        Some(t) => runs.iter().filter_map(|r| seconds_to_target(r, t)).map(|s| s as f64).collect(),
        None => vec![],
    };
    let ents: Vec<f64> = runs.iter().map(|r| mean_batch_entropy(r)).collect();
    let (fm, fs) = mean_std(&finals);
    let (am, asd) = mean_std(&aucs);
    let summary = SummaryRow {
        task,
        cell: cell.to_string(),
        n_seeds: runs.len(),
        final_metric_mean: fm,
        final_metric_std: fs,
        auc_mean: am,
        auc_std: asd,
        seconds_total_mean: mean_std(&totals).0,
        seconds_to_target_mean: (!reached.is_empty()).then(|| mean_std(&reached).0),
        reached_target: reached.len(),
        mean_batch_class_entropy: mean_std(&ents).0,
    };
    let n_cycles = runs.iter().map(Vec::len).min().unwrap_or(0);
    let mean = (0..n_cycles)
        .map(|c| {
            let col = |f: &dyn Fn(&CycleRow) -> f64| runs.iter().map(|r| f(&r[c])).collect::<Vec<f64>>();
            let (m, s) = mean_std(&col(&|x| x.metric));
            MeanRow {
                cycle: c,
                n_labelled: mean_std(&col(&|x| x.n_labelled as f64)).0,
                metric_mean: m,
                metric_std: s,
                seconds_mean: mean_std(&col(&|x| x.seconds_spent as f64)).0,
            }
        })
        .collect();
    (summary, mean)
}

/// Rebuilds mean curves and the summary table from per-run curve CSVs.
pub fn cli_report(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut summary = Vec::new();
    for task in cfg.tasks() {
        let dir = out.join("curves").join(task.to_string());
        if !dir.exists() {
            continue;
        }
        for cell in evaluation_cells(cfg, task) {
            let mut runs = Vec::new();
            for s in &cfg.evaluate.seeds {
                let p = dir.join(format!("{}-s{s}.csv", cell.name()));
                if p.exists() {
                    runs.push(read_cycle_csv(&p)?);
                }
            }
            if runs.is_empty() {
                continue;
            }
            let (row, mean) = summarize(task, &cell.name(), &runs, cfg.target_metric(task));
            let p = dir.join(format!("{}-mean.csv", cell.name()));
            write_file(&p, &csv_bytes(&mean, &["cycle", "n_labelled", "metric_mean", "metric_std", "seconds_mean"])?)?;
            files.push(p);
            summary.push(row);
        }
    }
    if summary.is_empty() {
        return Err(OpadError::config(format!("no curve files under {}", out.join("curves").display())));
    }
    let p = out.join("summary.csv");
    write_file(&p, &csv_bytes(&summary, &[])?)?;
    files.push(p);
    Ok(files)
}

/// Markdown rendering of a summary table.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut s = String::from(
        "| task | cell | seeds | final | AUC | seconds | seconds to target | batch entropy |\n|---|---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        let target = match r.seconds_to_target_mean {
            Some(v) => format!("{v:.0} ({}/{})", r.reached_target, r.n_seeds),
            None => "-".into(),
        };
        s.push_str(&format!(
            "| {} | {} | {} | {:.4} ± {:.4} | {:.4} ± {:.4} | {:.0} | {} | {:.3} |\n",
            r.task,
            r.cell,
            r.n_seeds,
            r.final_metric_mean,
            r.final_metric_std,
            r.auc_mean,
            r.auc_std,
            r.seconds_total_mean,
            target,
            r.mean_batch_class_entropy
        ));
    }
    s
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    rd.deserialize().map(|r| r.map_err(OpadError::from)).collect()
}
