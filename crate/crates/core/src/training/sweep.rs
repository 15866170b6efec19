use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::model::{Model, ModelConfig};
use super::run::{train_run, RunReport, RunStatus, TrainConfig};
use crate::tasks::DatasetPair;
use crate::tensor::Scalar;
use crate::{Error, Result};

/// One dataset/model configuration of a sweep.
#[derive(Clone, Debug)]
pub struct SweepJob {
    pub label: String,
    pub model: ModelConfig,
    pub data: DatasetPair,
}

/// One row per config × lr × seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub config: String,
    pub lr: f64,
    pub seed: u64,
    /// `ok`, `diverged`, `skipped` (an earlier run already reached 1.0) or `failed`.
    pub status: String,
    pub best_test_acc: Option<f64>,
    pub best_epoch: Option<usize>,
    pub wall_clock_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigSummary {
    pub config: String,
    /// Max of best test accuracy over completed runs; `None` if every run failed.
    pub max_test_acc: Option<f64>,
    pub runs: usize,
    pub failures: usize,
    pub first_error: Option<String>,
}

pub struct SweepResult<F: Scalar> {
    pub rows: Vec<SweepRow>,
    pub configs: Vec<ConfigSummary>,
    /// Mean of the per-config maxima over configs with at least one completed run.
    pub mean_of_max: Option<f64>,
    pub reports: Vec<RunReport>,
    /// Best model of each config.
    pub best: Vec<Option<Model<F>>>,
}

fn run_config<F: Scalar>(
    job: &SweepJob,
    tcfg: &TrainConfig,
    root_seed: u64,
) -> (Vec<SweepRow>, Vec<RunReport>, ConfigSummary, Option<Model<F>>) {
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut best: Option<(f64, Model<F>)> = None;
    let (mut failures, mut first_error) = (0, None);
    let mut perfect = false;
    for &lr in &tcfg.lr_grid {
        for s in 0..tcfg.seeds as u64 {
            let seed = root_seed.wrapping_add(s);
            let mut row = SweepRow {
                config: job.label.clone(),
                lr,
                seed,
                status: "skipped".into(),
                best_test_acc: None,
                best_epoch: None,
                wall_clock_secs: 0.0,
            };
            if perfect {
                rows.push(row);
                continue;
            }
            match train_run::<F>(&job.model, tcfg, &job.data, seed, lr) {
                Ok(out) => {
                    let r = &out.report;
                    row.status = match r.status {
                        RunStatus::Ok => "ok",
                        RunStatus::Diverged => "diverged",
                    }
                    .into();
                    row.best_test_acc = Some(r.best_test_acc);
                    row.best_epoch = Some(r.best_epoch);
                    row.wall_clock_secs = r.wall_clock_secs;
                    log::info!("{} lr={lr} seed={seed}: best {:.4}", job.label, r.best_test_acc);
                    if best.as_ref().is_none_or(|(acc, _)| r.best_test_acc > *acc) {
                        best = Some((r.best_test_acc, out.best));
                    }
                    perfect = tcfg.stop_at_perfect && r.best_test_acc >= 1.0;
                    reports.push(out.report);
                }
                Err(e) => {
                    log::warn!("{} lr={lr} seed={seed} failed: {e}", job.label);
                    row.status = "failed".into();
                    failures += 1;
                    first_error.get_or_insert_with(|| e.to_string());
                }
            }
            rows.push(row);
        }
    }
    let summary = ConfigSummary {
        config: job.label.clone(),
        max_test_acc: best.as_ref().map(|(acc, _)| *acc),
        runs: rows.len(),
        failures,
        first_error,
    };
    (rows, reports, summary, best.map(|(_, m)| m))
}

/// Every config over `lr_grid × seeds`, run seeds `root_seed + k`.
///
/// Configs run on up to `threads` workers; within a config runs are ordered
/// lr-major, so `stop_at_perfect` skips the same runs on every invocation.
pub fn sweep<F: Scalar>(
    jobs: &[SweepJob],
    tcfg: &TrainConfig,
    root_seed: u64,
    threads: usize,
) -> Result<SweepResult<F>> {
    tcfg.validate()?;
    for job in jobs {
        job.model.validate()?;
        job.model.check_task(&job.data.train.spec)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Contract(format!("worker pool: {e}")))?;
    let per_config: Vec<_> =
        pool.install(|| jobs.par_iter().map(|job| run_config::<F>(job, tcfg, root_seed)).collect());
    let mut result =
        SweepResult { rows: Vec::new(), configs: Vec::new(), mean_of_max: None, reports: Vec::new(), best: Vec::new() };
    for (rows, reports, summary, best) in per_config {
        result.rows.extend(rows);
        result.reports.extend(reports);
        result.configs.push(summary);
        result.best.push(best);
    }
    let maxima: Vec<f64> = result.configs.iter().filter_map(|c| c.max_test_acc).collect();
    if !maxima.is_empty() {
        result.mean_of_max = Some(maxima.iter().sum::<f64>() / maxima.len() as f64);
    }
    Ok(result)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let header = ["config", "lr", "seed", "status", "best_test_acc", "best_epoch", "wall_clock_secs"];
    crate::csvout::write_csv(path, &header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recurrence::{ArchKind, NormFn};
    use crate::tasks::{generate, TaskKind, TaskSpec};

    fn job(label: &str, m: usize) -> SweepJob {
        let mut spec = TaskSpec::baseline(TaskKind::Parity);
        spec.seq_len = 4;
        spec.num_train = 32;
        spec.num_test = 16;
        SweepJob {
            label: label.into(),
            model: ModelConfig::for_task(&spec, ArchKind::Bdlru, m, 2, NormFn::Softmax, true, 8),
            data: generate(&spec).unwrap(),
        }
    }

    #[test]
    fn degenerate_grid_equals_single_run() {
        let tcfg = TrainConfig { lr_grid: vec![1e-3], seeds: 1, epochs: 2, batch: 8, ..Default::default() };
        let j = job("a", 2);
        let s = sweep::<f64>(std::slice::from_ref(&j), &tcfg, 11, 1).unwrap();
        let r = train_run::<f64>(&j.model, &tcfg, &j.data, 11, 1e-3).unwrap().report;
        assert_eq!(s.rows.len(), 1);
        assert!(s.reports[0].same_result(&r));
        assert_eq!(s.configs[0].max_test_acc, Some(r.best_test_acc));
        assert_eq!(s.mean_of_max, Some(r.best_test_acc));
    }

    #[test]
    fn rows_cover_grid_and_max_is_monotone() {
        let small =
            TrainConfig { lr_grid: vec![1e-3, 5e-4, 1e-4], seeds: 1, epochs: 1, batch: 8, ..Default::default() };
        let big = TrainConfig { seeds: 2, ..small.clone() };
        let jobs = [job("m1", 1), job("m2", 2)];
        let a = sweep::<f64>(&jobs, &small, 0, 2).unwrap();
        let b = sweep::<f64>(&jobs, &big, 0, 2).unwrap();
        assert_eq!(a.rows.len(), 2 * 3);
        assert_eq!(b.rows.len(), 2 * 3 * 2);
        for (x, y) in a.configs.iter().zip(&b.configs) {
            assert!(y.max_test_acc.unwrap() >= x.max_test_acc.unwrap());
        }
    }

    #[test]
    fn csv_has_one_row_per_run() {
        let tcfg = TrainConfig { lr_grid: vec![1e-3, 1e-4], seeds: 2, epochs: 0, ..Default::default() };
        let s = sweep::<f64>(&[job("x", 2)], &tcfg, 0, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_sweep_csv(&path, &s.rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + 4);
        assert!(text.starts_with("config,lr,seed,status"));
    }
}
