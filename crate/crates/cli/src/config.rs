//! Experiment config files: TOML with one level of sections, unknown keys rejected.

use std::collections::BTreeMap;
use std::path::Path;

use blocklru::recurrence::{ArchKind, NormFn};
use blocklru::scan::Executor;
use blocklru::tasks::{TaskKind, TaskSpec};
use blocklru::training::{AdamWConfig, ModelConfig, TrainConfig};
use blocklru::{Error, Result};
use serde::Deserialize;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub task: TaskSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub bench: BenchSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub flops: FlopsSection,
}

/// Overrides on top of the task's baseline spec.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub kind: Option<TaskKind>,
    pub vocab_size: Option<usize>,
    pub seq_len: Option<usize>,
    pub num_train: Option<usize>,
    pub num_test: Option<usize>,
    pub group_n: Option<usize>,
    pub copy_count: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub arch: ArchKind,
    pub m: usize,
    /// Total state width `N`; blocks = N / m (rounded, at least 1).
    pub hidden: usize,
    /// Explicit block count; overrides `hidden`.
    pub blocks: Option<usize>,
    pub norm: NormFn,
    pub selective: bool,
    pub embed_dim: usize,
    pub mlp_hidden: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            arch: ArchKind::Bdlru,
            m: 2,
            hidden: 128,
            blocks: None,
            norm: NormFn::Softmax,
            selective: true,
            embed_dim: 32,
            mlp_hidden: None,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lr: Option<f64>,
    pub lr_grid: Option<Vec<f64>>,
    pub seeds: Option<usize>,
    pub batch: Option<usize>,
    pub epochs: Option<usize>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps: Option<f64>,
    pub weight_decay: Option<f64>,
    pub lr_min: Option<f64>,
    pub shards: Option<usize>,
    pub early_stop: Option<bool>,
    pub stop_at_perfect: Option<bool>,
    pub executor: Option<Executor>,
}

/// Dataset/model configurations of a sweep: the product of the listed values,
/// each falling back to the `[model]` value when absent.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub arch: Option<Vec<ArchKind>>,
    pub m: Option<Vec<usize>>,
    pub norm: Option<Vec<NormFn>>,
    pub selective: Option<Vec<bool>>,
    pub num_train: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub arch: ArchKind,
    pub m: Vec<usize>,
    /// State width `N`; blocks = N / m.
    pub hidden: usize,
    pub steps: usize,
    pub batch: usize,
    pub repeats: usize,
    pub warmup: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            arch: ArchKind::Bdlru,
            m: vec![1, 2, 4, 8],
            hidden: 128,
            steps: 2048,
            batch: 8,
            repeats: 20,
            warmup: 2,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub probes: usize,
    pub steps: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection { probes: blocklru::analysis::PROBE_SEQUENCES, steps: blocklru::analysis::PROBE_STEPS }
    }
}

/// `arch` plus formula symbols as flat keys; unknown symbols are rejected when used.
#[derive(Clone, Debug, Default, Deserialize)]
pub struct FlopsSection {
    pub arch: Option<String>,
    #[serde(flatten)]
    pub symbols: BTreeMap<String, u64>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let Some(path) = path else { return Ok(Config::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        Config::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Config> {
        toml::from_str(text)
            .map_err(|e| Error::Spec { field: "config".into(), detail: e.to_string().trim().to_string() })
    }

    pub fn task_spec(&self, seed: Option<u64>) -> Result<TaskSpec> {
        let t = &self.task;
        let kind = t.kind.ok_or_else(|| Error::Spec { field: "task.kind".into(), detail: "missing".into() })?;
        let mut spec = TaskSpec::baseline(kind);
        if let Some(v) = t.vocab_size {
            spec.vocab_size = v;
        }
        if let Some(v) = t.seq_len {
            spec.seq_len = v;
        }
        if let Some(v) = t.num_train {
            spec.num_train = v;
        }
        if let Some(v) = t.num_test {
            spec.num_test = v;
        }
        if t.group_n.is_some() {
            spec.group_n = t.group_n;
        }
        if t.copy_count.is_some() {
            spec.copy_count = t.copy_count;
        }
        if let Some(s) = seed.or(t.seed) {
            spec.seed = s;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn model_config(&self, task: &TaskSpec) -> Result<ModelConfig> {
        self.model_with(task, self.model.arch, self.model.m, self.model.norm, self.model.selective)
    }

    pub fn model_with(
        &self,
        task: &TaskSpec,
        arch: ArchKind,
        m: usize,
        norm: NormFn,
        selective: bool,
    ) -> Result<ModelConfig> {
        let s = &self.model;
        if m == 0 {
            return Err(Error::Spec { field: "model.m".into(), detail: "must be positive".into() });
        }
        let blocks = s.blocks.unwrap_or(((s.hidden as f64 / m as f64).round() as usize).max(1));
        let mut cfg = ModelConfig::for_task(task, arch, m, blocks, norm, selective, s.embed_dim);
        if let Some(h) = s.mlp_hidden {
            cfg.mlp_hidden = h;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self, task: &TaskSpec) -> Result<TrainConfig> {
        let t = &self.train;
        let mut c = TrainConfig::for_task(task);
        let o = AdamWConfig::default();
        c.optimizer = AdamWConfig {
            beta1: t.beta1.unwrap_or(o.beta1),
            beta2: t.beta2.unwrap_or(o.beta2),
            eps: t.eps.unwrap_or(o.eps),
            weight_decay: t.weight_decay.unwrap_or(o.weight_decay),
        };
        if let Some(v) = &t.lr_grid {
            c.lr_grid = v.clone();
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = t.$f { c.$f = v; })* };
        }
        set!(seeds, batch, epochs, lr_min, shards, early_stop, stop_at_perfect, executor);
        c.validate()?;
        Ok(c)
    }

    /// Peak learning rate of a single run: `train.lr`, else the first grid entry.
    pub fn single_lr(&self, tcfg: &TrainConfig) -> f64 {
        self.train.lr.unwrap_or(tcfg.lr_grid[0])
    }
}
