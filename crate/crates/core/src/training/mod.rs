//! Model assembly, AdamW with a cosine schedule, the sweep protocol and evaluation.

mod adamw;
mod checkpoint;
mod model;
mod run;
mod sweep;

pub use adamw::{cosine_lr, AdamW, AdamWConfig};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use model::{HeadKind, Model, ModelConfig};
pub use run::{evaluate, train_run, EpochRecord, RunOutcome, RunReport, RunStatus, TrainConfig};
pub use sweep::{sweep, write_sweep_csv, ConfigSummary, SweepJob, SweepResult, SweepRow};
