//! Gates, L1 normalization and the sequential H-LRU / BD-LRU layers.

mod companion;
mod config;
mod gates;
mod kernels;
mod layer;
mod params;

pub use companion::{bdlru_block, hlru_to_blockdiag, max_row_mass};
pub use config::{ArchKind, LayerConfig, NormFn};
pub use gates::{compute_raw_gates, nonselective_gates, normalize_gates, normalize_var, NormalizedGates};
pub use kernels::{bdlru_forward, hlru_forward, recurrence_var, StateSequence};
pub use layer::{layer_forward, layer_forward_with, layer_var};
pub use params::{LayerParams, LayerVars};

pub(crate) use gates::infer_m as infer_gate_m;
pub(crate) use kernels::recurrence_forward;
