//! Command implementations. All filesystem writes happen here.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use blocklru::analysis::{flop_report, spectrum_report, write_spectrum_csv, write_spectrum_json, ArchDescriptor};
use blocklru::scan::{bench_scan, write_bench_csv, BenchConfig};
use blocklru::tasks::{generate, read_dataset_dir, write_dataset_dir, DatasetPair, TaskSpec};
use blocklru::training::{
    evaluate, load_checkpoint, save_checkpoint, sweep as run_sweep, train_run, write_sweep_csv, Model, SweepJob,
};
use blocklru::{Error, Result, Scalar};
use serde::Serialize;

use crate::config::Config;
use crate::{Common, Precision};

const CHECKPOINT: &str = "checkpoint.bdlru";
const FLOP_SYMBOLS: [&str; 7] = ["h", "m", "n", "s", "n_h", "r", "h_n"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// Create `out` and return the target paths, refusing to overwrite without `--force`.
fn outputs(common: &Common, names: &[&str]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&common.out).map_err(io_err(&common.out))?;
    let paths: Vec<PathBuf> = names.iter().map(|n| common.out.join(n)).collect();
    if !common.force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(Error::Spec {
                field: "out".into(),
                detail: format!("{} exists; pass --force to overwrite", p.display()),
            });
        }
    }
    Ok(paths)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(io_err(path))
}

fn load_data(cfg: &Config, common: &Common, dir: Option<&Path>) -> Result<DatasetPair> {
    match dir {
        Some(d) => read_dataset_dir(d),
        None => generate(&cfg.task_spec(common.seed)?),
    }
}

pub fn gen(common: &Common) -> Result<()> {
    let cfg = Config::load(common.config.as_deref())?;
    let spec = cfg.task_spec(common.seed)?;
    let pair = generate(&spec)?;
    let files = write_dataset_dir(&common.out, &pair, common.force)?;
    println!("{}: {} train / {} test rows, vocab {}", spec.kind, pair.train.rows, pair.test.rows, spec.vocab_size);
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

pub fn train(common: &Common, data: Option<&Path>) -> Result<()> {
    match common.precision {
        Precision::F32 => train_as::<f32>(common, data),
        Precision::F64 => train_as::<f64>(common, data),
    }
}

fn checkpoint_meta(report: &blocklru::training::RunReport) -> Result<BTreeMap<String, String>> {
    Ok(BTreeMap::from([
        ("task".to_string(), serde_json::to_string(&report.task)?),
        ("seed".to_string(), report.seed.to_string()),
        ("lr".to_string(), format!("{:?}", report.lr)),
        ("precision".to_string(), report.precision.clone()),
        ("best_epoch".to_string(), report.best_epoch.to_string()),
        ("best_test_acc".to_string(), format!("{:?}", report.best_test_acc)),
    ]))
}

fn train_as<F: Scalar>(common: &Common, data: Option<&Path>) -> Result<()> {
    let cfg = Config::load(common.config.as_deref())?;
    let pair = load_data(&cfg, common, data)?;
    let spec = &pair.train.spec;
    let mcfg = cfg.model_config(spec)?;
    let tcfg = cfg.train_config(spec)?;
    let lr = cfg.single_lr(&tcfg);
    let seed = common.seed.unwrap_or(spec.seed);
    let paths = outputs(common, &["report.json", CHECKPOINT])?;
    let out = train_run::<F>(&mcfg, &tcfg, &pair, seed, lr)?;
    write_json(&paths[0], &out.report)?;
    println!(
        "best test accuracy {:.4} at epoch {} ({:?}, {:.1}s)",
        out.report.best_test_acc, out.report.best_epoch, out.report.status, out.report.wall_clock_secs
    );
    if out.report.epochs.len() > 1 {
        save_checkpoint(&paths[1], &out.best, &checkpoint_meta(&out.report)?)?;
        println!("wrote {}", paths[1].display());
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint: PathBuf,
    precision: &'static str,
    test_acc: f64,
    logged_test_acc: Option<f64>,
}

pub fn eval(common: &Common, checkpoint: &Path, data: Option<&Path>) -> Result<()> {
    match common.precision {
        Precision::F32 => eval_as::<f32>(common, checkpoint, data),
        Precision::F64 => eval_as::<f64>(common, checkpoint, data),
    }
}

fn task_from_meta(meta: &BTreeMap<String, String>) -> Result<Option<TaskSpec>> {
    meta.get("task").map(|t| serde_json::from_str(t).map_err(Error::from)).transpose()
}

fn eval_as<F: Scalar>(common: &Common, checkpoint: &Path, data: Option<&Path>) -> Result<()> {
    let (model, meta) = load_checkpoint::<F>(checkpoint)?;
    let pair = match (data, task_from_meta(&meta)?) {
        (Some(d), _) => read_dataset_dir(d)?,
        (None, Some(spec)) => generate(&spec)?,
        (None, None) => load_data(&Config::load(common.config.as_deref())?, common, None)?,
    };
    let cfg = Config::load(common.config.as_deref())?;
    let exec = cfg.train.executor.unwrap_or_default();
    let acc = evaluate(&model, &pair.test, exec)?;
    let logged = meta.get("best_test_acc").and_then(|s| s.parse().ok());
    let paths = outputs(common, &["eval.json"])?;
    write_json(
        &paths[0],
        &EvalReport { checkpoint: checkpoint.into(), precision: F::NAME, test_acc: acc, logged_test_acc: logged },
    )?;
    println!("test accuracy {acc:.6}");
    Ok(())
}

pub fn sweep(common: &Common, data: Option<&Path>) -> Result<()> {
    match common.precision {
        Precision::F32 => sweep_as::<f32>(common, data),
        Precision::F64 => sweep_as::<f64>(common, data),
    }
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    root_seed: u64,
    configs: &'a [blocklru::training::ConfigSummary],
    mean_of_max: Option<f64>,
}

fn sweep_as<F: Scalar>(common: &Common, data: Option<&Path>) -> Result<()> {
    let cfg = Config::load(common.config.as_deref())?;
    let s = &cfg.sweep;
    let base = match data {
        Some(d) => {
            if s.num_train.is_some() {
                return Err(Error::Spec {
                    field: "sweep.num_train".into(),
                    detail: "cannot resize a dataset given with --data".into(),
                });
            }
            read_dataset_dir(d)?
        }
        None => generate(&cfg.task_spec(common.seed)?)?,
    };
    let spec = base.train.spec.clone();
    let tcfg = cfg.train_config(&spec)?;
    let seed = common.seed.unwrap_or(spec.seed);
    let m = &cfg.model;
    let sizes = s.num_train.clone().unwrap_or_else(|| vec![spec.num_train]);
    let mut jobs = Vec::new();
    for &n in &sizes {
        let pair =
            if n == spec.num_train { base.clone() } else { generate(&TaskSpec { num_train: n, ..spec.clone() })? };
        for &arch in s.arch.as_deref().unwrap_or(&[m.arch]) {
            for &order in s.m.as_deref().unwrap_or(&[m.m]) {
                for &norm in s.norm.as_deref().unwrap_or(&[m.norm]) {
                    for &sel in s.selective.as_deref().unwrap_or(&[m.selective]) {
                        let model = cfg.model_with(&spec, arch, order, norm, sel)?;
                        let tag = if sel { "sel" } else { "nonsel" };
                        let label = format!("{arch}_m{order}_{norm}_{tag}_n{n}");
                        jobs.push(SweepJob { label, model, data: pair.clone() });
                    }
                }
            }
        }
    }
    let mut names = vec!["sweep.csv".to_string(), "summary.json".to_string(), "runs.json".to_string()];
    names.extend(jobs.iter().map(|j| format!("best_{}.bdlru", j.label)));
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let paths = outputs(common, &refs)?;
    let result = run_sweep::<F>(&jobs, &tcfg, seed, common.jobs)?;
    write_sweep_csv(&paths[0], &result.rows)?;
    write_json(
        &paths[1],
        &SweepSummary { root_seed: seed, configs: &result.configs, mean_of_max: result.mean_of_max },
    )?;
    write_json(&paths[2], &result.reports)?;
    for ((job, best), path) in jobs.iter().zip(&result.best).zip(&paths[3..]) {
        let Some(model) = best else { continue };
        let report = result.reports.iter().filter(|r| r.model == job.model && r.task == job.data.train.spec).fold(
            None::<&blocklru::training::RunReport>,
            |acc, r| match acc {
                Some(a) if a.best_test_acc >= r.best_test_acc => Some(a),
                _ => Some(r),
            },
        );
        if let Some(r) = report {
            save_checkpoint(path, model, &checkpoint_meta(r)?)?;
        }
    }
    for c in &result.configs {
        match c.max_test_acc {
            Some(acc) => println!("{}: max {acc:.4} over {} runs", c.config, c.runs),
            None => println!("{}: all runs failed ({})", c.config, c.first_error.as_deref().unwrap_or("?")),
        }
    }
    if let Some(mean) = result.mean_of_max {
        println!("mean of per-config max: {mean:.4}");
    }
    Ok(())
}

pub fn scan_bench(common: &Common) -> Result<()> {
    let cfg = Config::load(common.config.as_deref())?;
    let b = &cfg.bench;
    let paths = outputs(common, &["scan_bench.csv"])?;
    let mut rows = Vec::new();
    for &m in &b.m {
        let bc = BenchConfig {
            kind: b.arch,
            m,
            blocks: (b.hidden / m.max(1)).max(1),
            steps: b.steps,
            batch: b.batch,
            repeats: b.repeats,
            warmup: b.warmup,
            seed: common.seed.unwrap_or(0),
        };
        rows.extend(match common.precision {
            Precision::F32 => bench_scan::<f32>(&bc)?,
            Precision::F64 => bench_scan::<f64>(&bc)?,
        });
    }
    write_bench_csv(&paths[0], &rows)?;
    for r in &rows {
        println!("{} m={} {:.2} ns/token", r.executor, r.m, r.median_ns_per_token);
    }
    println!("wrote {}", paths[0].display());
    Ok(())
}

pub fn spectrum(common: &Common, checkpoint: Option<&Path>, data: Option<&Path>) -> Result<()> {
    let cfg = Config::load(common.config.as_deref())?;
    let seed = common.seed.unwrap_or(0);
    let (model, task, source) = match checkpoint {
        Some(path) => {
            let (model, meta) = load_checkpoint::<f64>(path)?;
            (model, task_from_meta(&meta)?, path.display().to_string())
        }
        None => {
            let spec = cfg.task_spec(common.seed)?;
            let mcfg = cfg.model_config(&spec)?;
            let model = Model::<f64>::init(&mcfg, &mut blocklru::Rng::new(seed))?;
            (model, Some(spec), "init".to_string())
        }
    };
    let pair = match (data, task) {
        (Some(d), _) => read_dataset_dir(d)?,
        (None, Some(spec)) => generate(&spec)?,
        (None, None) => generate(&cfg.task_spec(common.seed)?)?,
    };
    let paths = outputs(common, &["spectrum.json", "spectrum.csv"])?;
    let report = spectrum_report(&model, &pair.test, cfg.spectrum.probes, cfg.spectrum.steps, seed, &source)?;
    write_spectrum_json(&paths[0], &report)?;
    write_spectrum_csv(&paths[1], &report)?;
    let s = &report.stats;
    println!(
        "{} eigenvalues: negative real {:.4}, complex {:.4}, max modulus {:.6}, bound violations {}",
        s.count, s.frac_negative_real, s.frac_complex, s.max_modulus, s.bound_violations
    );
    Ok(())
}

pub fn flops(common: &Common, arch: Option<String>, symbols: Vec<(String, u64)>) -> Result<()> {
    let cfg = Config::load(common.config.as_deref())?;
    let arch = arch
        .or(cfg.flops.arch.clone())
        .ok_or_else(|| Error::Spec { field: "arch".into(), detail: "give --arch or [flops] arch".into() })?;
    let mut table = cfg.flops.symbols.clone();
    table.extend(symbols);
    if let Some(bad) = table.keys().find(|k| !FLOP_SYMBOLS.contains(&k.as_str())) {
        return Err(Error::Spec {
            field: bad.clone(),
            detail: format!("unknown symbol; expected one of {FLOP_SYMBOLS:?}"),
        });
    }
    let report = flop_report(ArchDescriptor::from_symbols(&arch, &table)?)?;
    println!("{}", report.flops_per_step);
    let paths = outputs(common, &["flops.json"])?;
    write_json(&paths[0], &report)
}
