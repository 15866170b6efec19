//! Eigenvalue spectra, FLOP accounting and the block-attention oracle.

mod attention;
mod eigen;
mod flops;
mod spectrum;

pub use attention::{attention_operator, materialize_attention, MAX_ATTENTION_STEPS};
pub use eigen::{eigen_spectrum, MAX_EIGEN_DIM};
pub use flops::{flop_report, flops_per_step, ArchDescriptor, FlopReport, FLOP_ARCHS};
pub use spectrum::{
    block_spectra, sample_steps, spectrum_report, summarize, write_spectrum_csv, write_spectrum_json, BlockSpectrum,
    SpectrumReport, SpectrumStats, PROBE_SEQUENCES, PROBE_STEPS,
};
