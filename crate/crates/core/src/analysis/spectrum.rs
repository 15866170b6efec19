use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eigen_spectrum;
use crate::recurrence::{bdlru_block, hlru_to_blockdiag, max_row_mass, ArchKind, NormalizedGates};
use crate::tasks::Dataset;
use crate::tensor::{Rng, Scalar};
use crate::training::Model;
use crate::{Error, Result};

/// Probe sequences drawn from the test split.
pub const PROBE_SEQUENCES: usize = 64;
/// Time steps sampled per probe sequence.
pub const PROBE_STEPS: usize = 8;

const COMPLEX_TOL: f64 = 1e-6;
const NEGATIVE_TOL: f64 = 1e-9;

/// Eigenvalues of one transition block at one step of one probe sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpectrum {
    pub example: usize,
    pub step: usize,
    pub block: usize,
    /// `(re, im)` pairs, `m` of them.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Largest absolute row sum of the assembled block.
    pub row_mass: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumStats {
    pub count: usize,
    pub frac_negative_real: f64,
    pub frac_complex: f64,
    pub max_modulus: f64,
    /// Blocks whose spectral radius exceeds their row mass by more than 1e-6.
    pub bound_violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub source: String,
    pub kind: ArchKind,
    pub m: usize,
    pub stats: SpectrumStats,
    pub blocks: Vec<BlockSpectrum>,
}

/// `count` time steps evenly spaced over `0..steps`, endpoints included.
pub fn sample_steps(steps: usize, count: usize) -> Vec<usize> {
    if steps == 0 || count == 0 {
        return Vec::new();
    }
    if count == 1 || steps == 1 {
        return vec![steps - 1];
    }
    let mut out: Vec<usize> =
        (0..count).map(|i| ((i * (steps - 1)) as f64 / (count - 1) as f64).round() as usize).collect();
    out.dedup();
    out
}

/// Spectra of the assembled blocks (companion form for H-LRU) at `steps`.
pub fn block_spectra<F: Scalar>(gates: &NormalizedGates<F>, steps: &[usize], source: &str) -> Result<SpectrumReport> {
    let m = gates.m;
    let (batch, t_len, h) = (gates.batch(), gates.steps(), gates.blocks());
    let g: Vec<f64> = gates.data.data().iter().map(|x| x.as_f64()).collect();
    let mut blocks = Vec::new();
    for b in 0..batch {
        for &t in steps {
            if t >= t_len {
                return Err(Error::shape("block_spectra", format!("step {t} outside sequence of length {t_len}")));
            }
            for k in 0..h {
                let idx = (b * t_len + t) * h + k;
                let a = match gates.kind {
                    ArchKind::Hlru => hlru_to_blockdiag(&g[idx * (m + 1)..][..m + 1], 0.0)?.0,
                    ArchKind::Bdlru => bdlru_block(&g[idx * m * (m + 1)..][..m * (m + 1)], m).0,
                };
                let eig = eigen_spectrum(&a, m)?;
                blocks.push(BlockSpectrum {
                    example: b,
                    step: t,
                    block: k,
                    eigenvalues: eig.iter().map(|z| (z.re, z.im)).collect(),
                    row_mass: max_row_mass(&a, m),
                });
            }
        }
    }
    let stats = summarize(&blocks);
    Ok(SpectrumReport { source: source.to_string(), kind: gates.kind, m, stats, blocks })
}

/// Spectra of a model's gates on `probes` random rows of `data` at `steps` evenly spaced steps.
pub fn spectrum_report<F: Scalar>(
    model: &Model<F>,
    data: &Dataset,
    probes: usize,
    steps: usize,
    seed: u64,
    source: &str,
) -> Result<SpectrumReport> {
    model.cfg.check_task(&data.spec)?;
    let mut rows: Vec<usize> = (0..data.rows).collect();
    Rng::new(seed).shuffle(&mut rows);
    rows.truncate(probes);
    let tokens: Vec<u16> = rows.iter().flat_map(|&r| data.input_row(r).iter().copied()).collect();
    let gates = model.gates(&tokens, rows.len(), data.input_len)?;
    let mut report = block_spectra(&gates, &sample_steps(data.input_len, steps), source)?;
    for b in &mut report.blocks {
        b.example = rows[b.example];
    }
    Ok(report)
}

pub fn summarize(blocks: &[BlockSpectrum]) -> SpectrumStats {
    let mut s = SpectrumStats::default();
    let (mut neg, mut cplx) = (0usize, 0usize);
    for blk in blocks {
        let mut radius = 0.0f64;
        for &(re, im) in &blk.eigenvalues {
            s.count += 1;
            neg += usize::from(re < -NEGATIVE_TOL);
            cplx += usize::from(im.abs() > COMPLEX_TOL);
            radius = radius.max(re.hypot(im));
        }
        s.max_modulus = s.max_modulus.max(radius);
        s.bound_violations += usize::from(radius > blk.row_mass + 1e-6);
    }
    if s.count > 0 {
        s.frac_negative_real = neg as f64 / s.count as f64;
        s.frac_complex = cplx as f64 / s.count as f64;
    }
    s
}

pub fn write_spectrum_json(path: &Path, report: &SpectrumReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One row per eigenvalue: `re,im,block,step`.
pub fn write_spectrum_csv(path: &Path, report: &SpectrumReport) -> Result<()> {
    let rows = report.blocks.iter().flat_map(|b| b.eigenvalues.iter().map(move |&(re, im)| (re, im, b.block, b.step)));
    crate::csvout::write_csv(path, &["re", "im", "block", "step"], rows)
}
