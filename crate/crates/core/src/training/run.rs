use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adamw::{cosine_lr, AdamW, AdamWConfig};
use super::model::{Model, ModelConfig};
use crate::scan::Executor;
use crate::tasks::{Dataset, DatasetPair, TaskSpec, IGNORE};
use crate::tensor::{Rng, Scalar, Tape, Tensor};
use crate::{Error, Result};

const INIT_STREAM: u64 = 0x1417;
const SHUFFLE_STREAM: u64 = 0x5fff;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr_grid: Vec<f64>,
    pub seeds: usize,
    pub batch: usize,
    pub epochs: usize,
    #[serde(flatten)]
    pub optimizer: AdamWConfig,
    pub lr_min: f64,
    /// Batch shards whose gradients are summed in shard order.
    pub shards: usize,
    /// Stop once test accuracy reaches 1.0.
    pub early_stop: bool,
    /// Skip the remaining runs of a sweep config once one run reaches 1.0.
    pub stop_at_perfect: bool,
    pub executor: Executor,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_grid: vec![1e-3, 5e-4, 1e-4],
            seeds: 5,
            batch: 128,
            epochs: 200,
            optimizer: AdamWConfig::default(),
            lr_min: 1e-5,
            shards: 1,
            early_stop: true,
            stop_at_perfect: false,
            executor: Executor::Sequential,
        }
    }
}

impl TrainConfig {
    /// Defaults with the epoch budget for `task` (100 for MAD tasks, else 200).
    pub fn for_task(task: &TaskSpec) -> Self {
        let epochs = if task.kind.per_token_accuracy() { 100 } else { 200 };
        TrainConfig { epochs, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::spec("batch", "must be positive"));
        }
        if self.shards == 0 || self.shards > self.batch {
            return Err(Error::spec("shards", "must be in 1..=batch"));
        }
        if self.lr_grid.is_empty() || self.lr_grid.iter().any(|&lr| !(lr >= 0.0 && lr.is_finite())) {
            return Err(Error::spec("lr_grid", "needs at least one finite non-negative rate"));
        }
        if self.seeds == 0 {
            return Err(Error::spec("seeds", "must be positive"));
        }
        let o = &self.optimizer;
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || o.eps <= 0.0 || o.weight_decay < 0.0 {
            return Err(Error::spec("optimizer", "betas in [0,1), eps > 0, weight_decay ≥ 0"));
        }
        if !(self.lr_min >= 0.0) {
            return Err(Error::spec("lr_min", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Diverged,
}

/// Epoch 0 is the evaluation at initialization and has no train loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub test_acc: f64,
    /// Learning rate at the last step of the epoch.
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: TaskSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub lr: f64,
    pub precision: String,
    pub param_count: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_test_acc: f64,
    pub best_epoch: usize,
    pub status: RunStatus,
    pub diagnostic: Option<String>,
    pub wall_clock_secs: f64,
}

impl RunReport {
    /// Equality ignoring wall-clock time.
    pub fn same_result(&self, other: &RunReport) -> bool {
        let strip = |r: &RunReport| RunReport { wall_clock_secs: 0.0, ..r.clone() };
        strip(self) == strip(other)
    }
}

pub struct RunOutcome<F: Scalar> {
    pub report: RunReport,
    /// Parameters at the best epoch (the initialization if no epoch improved on it).
    pub best: Model<F>,
}

fn check_pair(mcfg: &ModelConfig, data: &DatasetPair) -> Result<()> {
    mcfg.check_task(&data.train.spec)?;
    let (a, b) = (&data.train, &data.test);
    if a.spec.kind != b.spec.kind || a.input_len != b.input_len || a.target_len != b.target_len {
        return Err(Error::spec("dataset", "train and test splits describe different tasks"));
    }
    if a.rows == 0 {
        return Err(Error::spec("num_train", "training split is empty"));
    }
    Ok(())
}

fn gather(data: &Dataset, rows: &[usize]) -> (Vec<u16>, Vec<Option<usize>>) {
    let mut inputs = Vec::with_capacity(rows.len() * data.input_len);
    let mut targets = Vec::with_capacity(rows.len() * data.target_len);
    for &r in rows {
        inputs.extend_from_slice(data.input_row(r));
        targets.extend(data.target_row(r).iter().map(|&t| (t != IGNORE).then_some(t as usize)));
    }
    (inputs, targets)
}

/// Summed cross-entropy over `rows` divided by `denom`, with parameter gradients.
fn shard_grad<F: Scalar>(
    model: &Model<F>,
    data: &Dataset,
    rows: &[usize],
    denom: F,
    exec: Executor,
) -> Result<(f64, Vec<Tensor<F>>)> {
    let (inputs, targets) = gather(data, rows);
    let tape = Tape::new();
    let vars = model.attach(&tape, true);
    let logits = model.forward(&vars, &inputs, rows.len(), data.input_len, exec)?;
    let loss = logits.reshape(vec![targets.len(), model.cfg.classes])?.cross_entropy(&targets, denom)?;
    let value = loss.value().item()?.as_f64();
    let mut grads = tape.backward(&loss)?;
    let out = vars
        .iter()
        .zip(&model.params)
        .map(|(v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape().to_vec())))
        .collect();
    Ok((value, out))
}

/// Mean loss and gradient of one batch; shards are reduced in index order.
fn batch_grad<F: Scalar>(
    model: &Model<F>,
    data: &Dataset,
    rows: &[usize],
    shards: usize,
    exec: Executor,
) -> Result<(f64, Vec<Tensor<F>>)> {
    let supervised: usize = rows.iter().map(|&r| data.target_row(r).iter().filter(|&&t| t != IGNORE).count()).sum();
    let denom = F::from_f64(supervised.max(1) as f64);
    let size = rows.len().div_ceil(shards.min(rows.len()));
    let parts: Vec<Result<(f64, Vec<Tensor<F>>)>> =
        rows.par_chunks(size).map(|chunk| shard_grad(model, data, chunk, denom, exec)).collect();
    let mut loss = 0.0;
    let mut total: Option<Vec<Tensor<F>>> = None;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        total = Some(match total {
            None => g,
            Some(acc) => {
                acc.iter().zip(&g).map(|(a, b)| a.zip_with(b, "grad_sum", |x, y| x + y)).collect::<Result<_>>()?
            }
        });
    }
    Ok((loss, total.unwrap_or_default()))
}

/// Argmax predictions `[rows, slots]` for the given rows.
fn predict<F: Scalar>(model: &Model<F>, data: &Dataset, rows: &[usize], exec: Executor) -> Result<Vec<usize>> {
    let (inputs, _) = gather(data, rows);
    let logits = model.logits(&inputs, rows.len(), data.input_len, exec)?;
    let c = model.cfg.classes;
    Ok(logits
        .data()
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for (k, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect())
}

/// Accuracy of argmax predictions `[rows, slots]` over a whole dataset.
fn score(data: &Dataset, pred: &[usize]) -> f64 {
    let per_token = data.spec.kind.per_token_accuracy();
    let (mut hits, mut count) = (0usize, 0usize);
    for r in 0..data.rows {
        let p = &pred[r * data.target_len..(r + 1) * data.target_len];
        let mut pairs = data.target_row(r).iter().zip(p).filter(|(&t, _)| t != IGNORE);
        if per_token {
            for (&t, &y) in pairs {
                count += 1;
                hits += usize::from(t as usize == y);
            }
        } else {
            count += 1;
            hits += usize::from(pairs.all(|(&t, &y)| t as usize == y));
        }
    }
    if count == 0 {
        0.0
    } else {
        hits as f64 / count as f64
    }
}

/// Per-token accuracy on supervised positions for MAD tasks, sequence-level
/// accuracy (every supervised position correct) otherwise.
pub fn evaluate<F: Scalar>(model: &Model<F>, data: &Dataset, exec: Executor) -> Result<f64> {
    const CHUNK: usize = 256;
    model.cfg.check_task(&data.spec)?;
    let all: Vec<usize> = (0..data.rows).collect();
    let mut pred = Vec::with_capacity(data.rows * data.target_len);
    for rows in all.chunks(CHUNK) {
        pred.extend(predict(model, data, rows, exec)?);
    }
    Ok(score(data, &pred))
}

/// One training run at a fixed seed and peak learning rate.
///
/// Cross-entropy over supervised positions, AdamW with per-step cosine decay,
/// test evaluation after every epoch. Divergence ends the run with
/// `status = diverged` rather than an error.
pub fn train_run<F: Scalar>(
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    data: &DatasetPair,
    seed: u64,
    lr: f64,
) -> Result<RunOutcome<F>> {
    let started = Instant::now();
    tcfg.validate()?;
    mcfg.validate()?;
    check_pair(mcfg, data)?;
    let exec = tcfg.executor;
    let mut model = Model::<F>::init(mcfg, &mut Rng::substream(seed, INIT_STREAM))?;
    let mut shuffle = Rng::substream(seed, SHUFFLE_STREAM);
    let mut opt = AdamW::new(tcfg.optimizer, &model.params);
    let train = &data.train;
    let batches = train.rows.div_ceil(tcfg.batch);
    let total = (tcfg.epochs * batches) as u64;

    let init_acc = evaluate(&model, &data.test, exec)?;
    let mut epochs = vec![EpochRecord { epoch: 0, train_loss: None, test_acc: init_acc, lr }];
    let (mut best_acc, mut best_epoch, mut best) = (init_acc, 0, model.clone());
    let mut status = RunStatus::Ok;
    let mut diagnostic = None;
    let mut order: Vec<usize> = (0..train.rows).collect();
    let mut step = 0u64;

    'epochs: for epoch in 1..=tcfg.epochs {
        if tcfg.early_stop && best_acc >= 1.0 {
            break;
        }
        shuffle.shuffle(&mut order);
        let (mut loss_sum, mut step_lr) = (0.0, lr);
        for rows in order.chunks(tcfg.batch) {
            step_lr = cosine_lr(step, total, lr, tcfg.lr_min);
            let fail = |detail: String| (RunStatus::Diverged, Some(format!("epoch {epoch}, step {step}: {detail}")));
            let (loss, grads) = match batch_grad(&model, train, rows, tcfg.shards, exec) {
                Ok(v) => v,
                Err(Error::Numeric { op, detail }) => {
                    (status, diagnostic) = fail(format!("{op}: {detail}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                (status, diagnostic) = fail(format!("loss {loss}"));
                break 'epochs;
            }
            if let Err(Error::Numeric { op, detail }) = opt.step(&mut model.params, &grads, step_lr) {
                (status, diagnostic) = fail(format!("{op}: {detail}"));
                break 'epochs;
            }
            loss_sum += loss * rows.len() as f64;
            step += 1;
        }
        let acc = evaluate(&model, &data.test, exec)?;
        log::info!("epoch {epoch}: loss {:.4} acc {acc:.4}", loss_sum / train.rows as f64);
        epochs.push(EpochRecord { epoch, train_loss: Some(loss_sum / train.rows as f64), test_acc: acc, lr: step_lr });
        if acc > best_acc {
            (best_acc, best_epoch, best) = (acc, epoch, model.clone());
        }
    }
    if let Some(d) = &diagnostic {
        log::warn!("run diverged: {d}");
    }

    let report = RunReport {
        task: train.spec.clone(),
        model: mcfg.clone(),
        train: tcfg.clone(),
        seed,
        lr,
        precision: F::NAME.to_string(),
        param_count: model.param_count(),
        epochs,
        best_test_acc: best_acc,
        best_epoch,
        status,
        diagnostic,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutcome { report, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recurrence::{ArchKind, NormFn};
    use crate::tasks::{generate, TaskKind};

    fn tiny(kind: TaskKind, len: usize, train: usize) -> (DatasetPair, ModelConfig) {
        let mut spec = TaskSpec::baseline(kind);
        spec.seq_len = len;
        spec.num_train = train;
        spec.num_test = 32;
        let data = generate(&spec).unwrap();
        let mcfg = ModelConfig::for_task(&spec, ArchKind::Bdlru, 2, 4, NormFn::Softmax, true, 8);
        (data, mcfg)
    }

    fn quick() -> TrainConfig {
        TrainConfig { epochs: 2, batch: 16, ..Default::default() }
    }

    #[test]
    fn zero_epochs_reports_init_only() {
        let (data, mcfg) = tiny(TaskKind::Parity, 6, 40);
        let tcfg = TrainConfig { epochs: 0, ..quick() };
        let out = train_run::<f64>(&mcfg, &tcfg, &data, 1, 1e-3).unwrap();
        assert_eq!(out.report.epochs.len(), 1);
        assert_eq!(out.report.best_epoch, 0);
        assert_eq!(out.report.best_test_acc, out.report.epochs[0].test_acc);
        assert_eq!(out.report.epochs[0].train_loss, None);
    }

    #[test]
    fn identical_seeds_identical_reports() {
        let (data, mcfg) = tiny(TaskKind::SnComposition, 5, 48);
        let a = train_run::<f64>(&mcfg, &quick(), &data, 7, 1e-3).unwrap();
        let b = train_run::<f64>(&mcfg, &quick(), &data, 7, 1e-3).unwrap();
        assert!(a.report.same_result(&b.report));
        assert_eq!(a.best.params, b.best.params);
        let c = train_run::<f64>(&mcfg, &quick(), &data, 8, 1e-3).unwrap();
        assert!(!a.report.same_result(&c.report));
    }

    #[test]
    fn best_is_max_over_epochs() {
        let (data, mcfg) = tiny(TaskKind::Recall, 8, 64);
        let r = train_run::<f64>(&mcfg, &TrainConfig { epochs: 3, ..quick() }, &data, 2, 5e-3).unwrap().report;
        let max = r.epochs.iter().map(|e| e.test_acc).fold(f64::MIN, f64::max);
        assert_eq!(r.best_test_acc, max);
        assert_eq!(r.epochs[r.best_epoch].test_acc, max);
    }

    #[test]
    fn shards_match_single_batch() {
        let (data, mcfg) = tiny(TaskKind::Parity, 6, 32);
        let model = Model::<f64>::init(&mcfg, &mut Rng::new(0)).unwrap();
        let rows: Vec<usize> = (0..12).collect();
        let (l1, g1) = batch_grad(&model, &data.train, &rows, 1, Executor::Sequential).unwrap();
        let (l3, g3) = batch_grad(&model, &data.train, &rows, 3, Executor::Sequential).unwrap();
        assert!((l1 - l3).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g3) {
            assert!(a.max_abs_diff(b).unwrap() < 1e-12);
        }
    }

    #[test]
    fn masked_positions_do_not_affect_loss() {
        let (data, mcfg) = tiny(TaskKind::CycleNav, 6, 8);
        let model = Model::<f64>::init(&mcfg, &mut Rng::new(3)).unwrap();
        let rows: Vec<usize> = (0..8).collect();
        let (inputs, targets) = gather(&data.train, &rows);
        let logits = model.logits(&inputs, 8, 6, Executor::Sequential).unwrap();
        let c = mcfg.classes;
        let loss_of = |l: &Tensor<f64>| {
            let tape = Tape::new();
            let x = tape.leaf(l.reshape(vec![targets.len(), c]).unwrap(), true);
            let loss = x.cross_entropy(&targets, 8.0).unwrap();
            let g = tape.backward(&loss).unwrap().take(&x).unwrap();
            (loss.value().item().unwrap(), g)
        };
        let (base, grad) = loss_of(&logits);
        let mut rng = Rng::new(4);
        let noisy = Tensor::from_fn(logits.shape().to_vec(), |i| {
            let x = logits.data()[i];
            if targets[i / c].is_none() {
                x + rng.uniform(-50.0, 50.0)
            } else {
                x
            }
        });
        assert_eq!(loss_of(&noisy).0, base);
        for (i, t) in targets.iter().enumerate() {
            if t.is_none() {
                assert!(grad.data()[i * c..(i + 1) * c].iter().all(|&g| g == 0.0));
            }
        }
    }

    fn labels(data: &Dataset) -> Vec<usize> {
        data.targets.iter().map(|&t| if t == IGNORE { 0 } else { t as usize }).collect()
    }

    #[test]
    fn oracle_predictions_score_one() {
        for kind in [TaskKind::Parity, TaskKind::Recall, TaskKind::SnComposition, TaskKind::CycleNav] {
            let (data, _) = tiny(kind, 8, 8);
            assert_eq!(score(&data.test, &labels(&data.test)), 1.0, "{kind}");
        }
    }

    #[test]
    fn constant_prediction_on_unit_parity_is_near_half() {
        let mut spec = TaskSpec::baseline(TaskKind::Parity);
        spec.seq_len = 1;
        spec.num_train = 2;
        spec.num_test = 2000;
        // Length-1 parity has only two distinct inputs; tests may repeat them.
        let data = crate::tasks::generate(&TaskSpec { num_train: 0, ..spec }).unwrap().test;
        let acc = score(&data, &vec![0; data.rows]);
        assert!((acc - 0.5).abs() < 0.05, "{acc}");
    }

    #[test]
    fn accuracy_is_shuffle_invariant() {
        let (data, mcfg) = tiny(TaskKind::Recall, 8, 16);
        let model = Model::<f64>::init(&mcfg, &mut Rng::new(0)).unwrap();
        let acc = evaluate(&model, &data.test, Executor::Sequential).unwrap();
        let mut shuffled = data.test.clone();
        let mut order: Vec<usize> = (0..shuffled.rows).collect();
        Rng::new(9).shuffle(&mut order);
        let (inputs, targets): (Vec<_>, Vec<_>) =
            order.iter().map(|&r| (data.test.input_row(r).to_vec(), data.test.target_row(r).to_vec())).unzip();
        shuffled.inputs = inputs.concat();
        shuffled.targets = targets.concat();
        assert_eq!(evaluate(&model, &shuffled, Executor::Sequential).unwrap(), acc);
    }

    #[test]
    fn mismatched_dataset_is_spec_error() {
        let (data, _) = tiny(TaskKind::Parity, 6, 8);
        let (_, other) = tiny(TaskKind::Recall, 8, 8);
        assert!(matches!(train_run::<f64>(&other, &quick(), &data, 0, 1e-3), Err(Error::Spec { .. })));
    }
}
