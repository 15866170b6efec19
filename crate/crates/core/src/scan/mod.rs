//! Parallel prefix scan over the HOP operator, and the sequential oracle.

mod bench;
mod blelloch;
mod element;
mod kernel;
mod taped;

use std::fmt;
use std::str::FromStr;

pub use bench::{bench_scan, write_bench_csv, BenchConfig, BenchRow, BENCH_EXECUTORS};
pub use blelloch::{blelloch_scan, blelloch_scan_with_stats, sequential_scan, ScanStats};
pub use element::{hop_combine, scan_identity, ScanElement, ScanSeq};
pub use taped::scan_var;

use crate::recurrence::{recurrence_forward, NormalizedGates, StateSequence};
use crate::tensor::{Scalar, Tensor};
use crate::{Error, Result};

/// How a layer turns gates and values into states.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Executor {
    /// Fused step-by-step recurrence.
    #[default]
    Sequential,
    /// Blelloch tree; `parallel` spreads each level over the thread pool.
    Blelloch { parallel: bool },
}

impl fmt::Display for Executor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Executor::Sequential => "sequential",
            Executor::Blelloch { parallel: true } => "blelloch",
            Executor::Blelloch { parallel: false } => "blelloch_serial",
        })
    }
}

impl FromStr for Executor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Executor::Sequential),
            "blelloch" | "blelloch_parallel" => Ok(Executor::Blelloch { parallel: true }),
            "blelloch_serial" => Ok(Executor::Blelloch { parallel: false }),
            other => Err(Error::spec("executor", format!("unknown executor {other:?}"))),
        }
    }
}

impl serde::Serialize for Executor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Executor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// States for `v` under `gates` using `exec`.
pub fn scan_states<F: Scalar>(v: &Tensor<F>, gates: &NormalizedGates<F>, exec: Executor) -> Result<StateSequence<F>> {
    match exec {
        Executor::Sequential => recurrence_forward(gates.kind, v, &gates.data),
        Executor::Blelloch { parallel } => Ok(blelloch_scan(&ScanSeq::from_gates(v, gates)?, parallel)),
    }
}
