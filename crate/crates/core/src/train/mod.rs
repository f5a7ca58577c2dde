//! Optimization, the deterministic training loop, evaluation, and the
//! ordering/permutation ablation.

mod adamw;
mod report;

pub use adamw::{AdamW, AdamWConfig};
pub use report::{MetricReport, MetricRow, Split};

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, HeuristicKind};
use crate::model::{
    prepare_all, GraphMamba, HeadKind, Mode, ModelConfig, PreparedGraph, StreamKey,
};
use crate::nn::ParamStore;
use crate::rng;

const SPLIT: u64 = 0x5711;
const SHUFFLE: u64 = 0x5407;
const EVAL_EPOCH: u64 = u64::MAX;

/// Node-ordering recipe compared in the ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Input order, no jitter.
    Baseline,
    /// Constant heuristic plus jitter: a fresh random order every pass.
    PermuteOnly,
    /// Degree plus jitter: ascending degree, ties shuffled.
    PermutePlusDegree,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Baseline, Arm::PermuteOnly, Arm::PermutePlusDegree];

    pub fn apply(self, cfg: &ModelConfig) -> ModelConfig {
        let (heuristic, noise) = match self {
            Arm::Baseline => (HeuristicKind::None, false),
            Arm::PermuteOnly => (HeuristicKind::None, true),
            Arm::PermutePlusDegree => (HeuristicKind::Degree, true),
        };
        ModelConfig {
            heuristic,
            noise,
            ..cfg.clone()
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::PermuteOnly => "permute_only",
            Arm::PermutePlusDegree => "permute_plus_degree",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Constant,
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Overrides the model's heuristic and jitter settings when set.
    pub arm: Option<Arm>,
    pub schedule: Schedule,
    /// Evaluate val/test every this many epochs (the last epoch is always
    /// evaluated); 0 evaluates only after the last epoch.
    pub eval_every: usize,
    /// Write a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    /// Fill the `seconds` column; off by default so metric files are
    /// bitwise reproducible.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            weight_decay: 1e-2,
            betas: (0.9, 0.999),
            adam_eps: 1e-8,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            arm: None,
            schedule: Schedule::Constant,
            eval_every: 1,
            checkpoint_every: 0,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "need lr > 0 and weight_decay ≥ 0, got {} and {}",
                self.lr, self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            betas: self.betas,
            eps: self.adam_eps,
        }
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.lr,
            Schedule::Cosine => {
                let frac = epoch as f64 / self.epochs.max(1) as f64;
                0.5 * self.lr * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

/// Deterministic 80/10/10 split of `0..n`.
pub fn split_indices(n: usize, seed: u64) -> [Vec<usize>; 3] {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, &[SPLIT]));
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    [idx, val, test]
}

/// `(mean loss, metric)` of the model on `graphs` in eval mode with `m`
/// averaged GMB passes. The metric is accuracy for class heads and MAE for
/// regression.
pub fn evaluate(
    model: &GraphMamba,
    store: &ParamStore,
    graphs: &[&PreparedGraph],
    m: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let (mut loss, mut score, mut count) = (0.0, 0.0, 0usize);
    for (i, pg) in graphs.iter().enumerate() {
        let key = StreamKey {
            seed,
            epoch: EVAL_EPOCH,
            graph: i as u64,
        };
        let (out, _) = model.forward(store, pg, Mode::Eval { m }, key)?;
        loss += model.loss(&out, pg.label.as_ref())?.0;
        let (s, c) = model.score(&out, pg.label.as_ref())?;
        score += s;
        count += c;
    }
    let n = graphs.len().max(1) as f64;
    Ok((loss / n, score / count.max(1) as f64))
}

pub struct TrainOutcome {
    pub model: GraphMamba,
    pub store: ParamStore,
    pub report: MetricReport,
}

/// Trains on the 80% split and evaluates on the 10% validation and test
/// splits. With `out_dir`, periodic checkpoints (`checkpoint_epoch{N}.bin`),
/// the final `model.ckpt`, `metrics.csv` and `report.json` are written there.
pub fn train(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    graphs: &[Graph],
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model_cfg = match cfg.arm {
        Some(arm) => arm.apply(model_cfg),
        None => model_cfg.clone(),
    };
    let data = prepare_all(graphs, &model_cfg)?;
    let [train_idx, val_idx, test_idx] = split_indices(data.len(), cfg.seed);
    if train_idx.is_empty() {
        return Err(Error::Config(format!(
            "{} graphs leave an empty training split",
            data.len()
        )));
    }
    let val: Vec<&PreparedGraph> = val_idx.iter().map(|&i| &data[i]).collect();
    let test: Vec<&PreparedGraph> = test_idx.iter().map(|&i| &data[i]).collect();

    let mut store = ParamStore::new();
    let model = GraphMamba::new(model_cfg.clone(), &mut store, cfg.seed)?;
    let mut opt = AdamW::new(cfg.adamw(), &store);
    let metric = match model_cfg.head {
        HeadKind::GraphRegress => "mae",
        HeadKind::GraphClass | HeadKind::NodeClass => "accuracy",
    };
    let mut report = MetricReport {
        seed: cfg.seed,
        metric: metric.into(),
        rows: Vec::new(),
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let start = Instant::now();
    let clock = |start: &Instant| {
        if cfg.record_wall_time {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    };
    let m = model_cfg.m_eval;
    let record_eval = |epoch: usize, store: &ParamStore, report: &mut MetricReport| -> Result<()> {
        for (split, graphs) in [(Split::Val, &val), (Split::Test, &test)] {
            if graphs.is_empty() {
                continue;
            }
            let (loss, metric) = evaluate(&model, store, graphs, m, cfg.seed)?;
            report.rows.push(MetricRow {
                epoch,
                split,
                metric,
                loss,
                seconds: clock(&start),
            });
        }
        Ok(())
    };
    if cfg.eval_every > 0 {
        record_eval(0, &store, &mut report)?;
    }

    for epoch in 1..=cfg.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut rng::stream(cfg.seed, &[SHUFFLE, epoch as u64]));
        let lr = cfg.lr_at(epoch - 1);
        let (mut loss_sum, mut score, mut count) = (0.0, 0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let mut batch = batch.to_vec();
            batch.sort_unstable();
            store.zero_grads();
            for &gi in &batch {
                let key = StreamKey {
                    seed: cfg.seed,
                    epoch: epoch as u64,
                    graph: gi as u64,
                };
                let pg = &data[gi];
                let (out, trace) = model.forward(&store, pg, Mode::Train, key)?;
                let (loss, dout) = model.loss(&out, pg.label.as_ref())?;
                if !loss.is_finite() {
                    return Err(Error::Diverged(epoch));
                }
                model.backward(&mut store, &trace, &dout);
                let (s, c) = model.score(&out, pg.label.as_ref())?;
                loss_sum += loss;
                score += s;
                count += c;
            }
            store.scale_grads(1.0 / batch.len() as f64);
            opt.step(&mut store, lr)?;
        }
        report.rows.push(MetricRow {
            epoch,
            split: Split::Train,
            metric: score / count.max(1) as f64,
            loss: loss_sum / train_idx.len() as f64,
            seconds: clock(&start),
        });
        let due = cfg.eval_every > 0 && epoch % cfg.eval_every == 0;
        if due || epoch == cfg.epochs {
            record_eval(epoch, &store, &mut report)?;
        }
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                store.save_checkpoint(dir.join(format!("checkpoint_epoch{epoch}.bin")))?;
            }
        }
    }
    if let Some(dir) = out_dir {
        store.save_checkpoint(dir.join("model.ckpt"))?;
        report.write_csv(dir.join("metrics.csv"))?;
        report.write_json(dir.join("report.json"))?;
    }
    Ok(TrainOutcome {
        model,
        store,
        report,
    })
}

/// Final test metric per arm and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub arms: Vec<ArmResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: Arm,
    pub seeds: Vec<u64>,
    pub test_metric: Vec<f64>,
    pub median: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Trains every arm with every seed on the same dataset.
pub fn run_ablation(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    graphs: &[Graph],
    arms: &[Arm],
    seeds: &[u64],
) -> Result<AblationResult> {
    let mut out = Vec::new();
    for &arm in arms {
        let mut test_metric = Vec::new();
        for &seed in seeds {
            let run_cfg = TrainConfig {
                arm: Some(arm),
                seed,
                ..cfg.clone()
            };
            let outcome = train(model_cfg, &run_cfg, graphs, None)?;
            let last = outcome
                .report
                .last(Split::Test)
                .ok_or_else(|| Error::Config("dataset too small for a test split".into()))?;
            test_metric.push(last.metric);
        }
        out.push(ArmResult {
            arm,
            seeds: seeds.to_vec(),
            median: median(&test_metric),
            test_metric,
        });
    }
    Ok(AblationResult { arms: out })
}
