use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which structured transition the layer uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    /// m-th order per-channel recurrence (companion blocks).
    Hlru,
    /// Dense m×m blocks.
    Bdlru,
}

/// Gate parametrization `f` applied before L1 normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormFn {
    Softmax,
    SigmoidL1,
    ReluL1,
    /// Raw gates used unchanged.
    None,
}

impl NormFn {
    pub const ALL: [NormFn; 4] = [NormFn::Softmax, NormFn::SigmoidL1, NormFn::ReluL1, NormFn::None];

    /// Whether the normalized rows satisfy the unit row-mass condition.
    pub fn is_normalizing(self) -> bool {
        self != NormFn::None
    }
}

macro_rules! text_enum {
    ($ty:ty, $field:literal, $($name:literal => $v:expr),+ $(,)?) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = match self { $(x if *x == $v => $name,)+ _ => unreachable!() };
                f.write_str(s)
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($v),)+
                    other => Err(Error::spec($field, format!("unknown value {other:?}"))),
                }
            }
        }
    };
}

text_enum!(ArchKind, "arch", "hlru" => ArchKind::Hlru, "bdlru" => ArchKind::Bdlru);
text_enum!(
    NormFn, "norm",
    "softmax" => NormFn::Softmax,
    "sigmoid_l1" => NormFn::SigmoidL1,
    "relu_l1" => NormFn::ReluL1,
    "none" => NormFn::None,
);

/// Structural hyperparameters of one recurrent layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub kind: ArchKind,
    /// Block size (BD-LRU) or recurrence order (H-LRU).
    pub m: usize,
    /// Number of blocks / channels `H`; the state width is `H·m`.
    pub blocks: usize,
    pub norm: NormFn,
    pub selective: bool,
    /// Model width `d` feeding the layer.
    pub input_dim: usize,
}

impl LayerConfig {
    pub fn new(kind: ArchKind, m: usize, blocks: usize, norm: NormFn, input_dim: usize) -> Self {
        LayerConfig { kind, m, blocks, norm, selective: true, input_dim }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::spec("m", "block size must be at least 1"));
        }
        if self.blocks == 0 {
            return Err(Error::spec("blocks", "need at least one block"));
        }
        if self.input_dim == 0 {
            return Err(Error::spec("embed_dim", "input width must be at least 1"));
        }
        Ok(())
    }

    /// Overall state width `N = H·m`.
    pub fn hidden(&self) -> usize {
        self.blocks * self.m
    }

    /// Raw gates per block and step: `m+1` (H-LRU) or `m(m+1)` (BD-LRU).
    pub fn gates_per_block(&self) -> usize {
        match self.kind {
            ArchKind::Hlru => self.m + 1,
            ArchKind::Bdlru => self.m * (self.m + 1),
        }
    }

    pub fn gate_width(&self) -> usize {
        self.blocks * self.gates_per_block()
    }

    /// Width of `v = W_v x`: one scalar per channel for H-LRU, one per state for BD-LRU.
    pub fn value_width(&self) -> usize {
        match self.kind {
            ArchKind::Hlru => self.blocks,
            ArchKind::Bdlru => self.hidden(),
        }
    }

    pub fn gate_shape(&self, batch: usize, steps: usize) -> Vec<usize> {
        match self.kind {
            ArchKind::Hlru => vec![batch, steps, self.blocks, self.m + 1],
            ArchKind::Bdlru => vec![batch, steps, self.blocks, self.m, self.m + 1],
        }
    }

    pub fn value_shape(&self, batch: usize, steps: usize) -> Vec<usize> {
        match self.kind {
            ArchKind::Hlru => vec![batch, steps, self.blocks],
            ArchKind::Bdlru => vec![batch, steps, self.blocks, self.m],
        }
    }

    /// Trainable scalars in the layer.
    pub fn param_count(&self) -> usize {
        let proj = if self.selective { self.input_dim * self.gate_width() } else { 0 };
        self.input_dim * self.value_width() + proj + self.gate_width()
    }
}
