use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::{blelloch_scan, ScanSeq};
use crate::recurrence::{normalize_gates, recurrence_forward, ArchKind, LayerConfig, NormFn};
use crate::tensor::{Rng, Scalar, Tensor};
use crate::Result;

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub kind: ArchKind,
    pub m: usize,
    pub blocks: usize,
    pub steps: usize,
    pub batch: usize,
    pub repeats: usize,
    pub warmup: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub executor: String,
    pub kind: ArchKind,
    pub m: usize,
    pub blocks: usize,
    pub hidden: usize,
    pub steps: usize,
    pub batch: usize,
    pub repeats: usize,
    pub median_ns_per_token: f64,
}

pub const BENCH_EXECUTORS: [&str; 3] = ["sequential", "blelloch_serial", "blelloch_parallel"];

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Median wall-clock per token of each executor, from normalized gates to states.
/// Warmup runs are not timed. `repeats = 0` yields no rows.
pub fn bench_scan<F: Scalar>(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.repeats == 0 {
        return Ok(Vec::new());
    }
    let layer = LayerConfig::new(cfg.kind, cfg.m, cfg.blocks, NormFn::Softmax, 1);
    layer.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let raw = Tensor::<F>::from_fn(layer.gate_shape(cfg.batch, cfg.steps), |_| F::from_f64(rng.uniform(-2.0, 2.0)));
    let gates = normalize_gates(&raw, cfg.kind, NormFn::Softmax)?;
    let v = Tensor::<F>::from_fn(layer.value_shape(cfg.batch, cfg.steps), |_| F::from_f64(rng.uniform(-1.0, 1.0)));
    let tokens = (cfg.batch * cfg.steps).max(1) as f64;

    let mut rows = Vec::new();
    for name in BENCH_EXECUTORS {
        let run = || -> Result<()> {
            let states = match name {
                "sequential" => recurrence_forward(cfg.kind, &v, &gates.data)?,
                _ => blelloch_scan(&ScanSeq::from_gates(&v, &gates)?, name == "blelloch_parallel"),
            };
            std::hint::black_box(states);
            Ok(())
        };
        for _ in 0..cfg.warmup {
            run()?;
        }
        let mut times = Vec::with_capacity(cfg.repeats);
        for _ in 0..cfg.repeats {
            let start = Instant::now();
            run()?;
            times.push(start.elapsed().as_nanos() as f64 / tokens);
        }
        rows.push(BenchRow {
            executor: name.to_string(),
            kind: cfg.kind,
            m: cfg.m,
            blocks: cfg.blocks,
            hidden: layer.hidden(),
            steps: cfg.steps,
            batch: cfg.batch,
            repeats: cfg.repeats,
            median_ns_per_token: median(times),
        });
    }
    Ok(rows)
}

pub fn write_bench_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let header = ["executor", "kind", "m", "blocks", "hidden", "steps", "batch", "repeats", "median_ns_per_token"];
    crate::csvout::write_csv(path, &header, rows)
}
