use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::perm::factorial;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Compression,
    SelectiveCopy,
    Recall,
    SnComposition,
    Parity,
    CycleNav,
    ModArith,
    ModArithBrackets,
}

impl TaskKind {
    pub const ALL: [TaskKind; 8] = [
        TaskKind::Compression,
        TaskKind::SelectiveCopy,
        TaskKind::Recall,
        TaskKind::SnComposition,
        TaskKind::Parity,
        TaskKind::CycleNav,
        TaskKind::ModArith,
        TaskKind::ModArithBrackets,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Compression => "compression",
            TaskKind::SelectiveCopy => "selective_copy",
            TaskKind::Recall => "recall",
            TaskKind::SnComposition => "sn_composition",
            TaskKind::Parity => "parity",
            TaskKind::CycleNav => "cycle_nav",
            TaskKind::ModArith => "mod_arith",
            TaskKind::ModArithBrackets => "mod_arith_brackets",
        }
    }

    /// Token-level accuracy for the MAD tasks, whole-sequence accuracy otherwise.
    pub fn per_token_accuracy(self) -> bool {
        matches!(self, TaskKind::Compression | TaskKind::SelectiveCopy | TaskKind::Recall)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::spec("kind", format!("unknown task {s:?}")))
    }
}

/// Marker in target rows for positions without loss.
pub const IGNORE: u16 = 0xFFFF;

/// Modular-arithmetic token ids: digits `0..=4`, then operators, brackets, padding.
pub mod arith {
    pub const PLUS: u16 = 5;
    pub const MINUS: u16 = 6;
    pub const TIMES: u16 = 7;
    pub const OPEN: u16 = 8;
    pub const CLOSE: u16 = 9;
    pub const PAD: u16 = 10;
    pub const VOCAB: usize = 11;
}

pub const DEFAULT_COPY_COUNT: usize = 16;
pub const CYCLE_LEN: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub num_train: usize,
    pub num_test: usize,
    /// `n` of S_n; only for `sn_composition`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_n: Option<usize>,
    /// Tokens to copy; only for `selective_copy`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub copy_count: Option<usize>,
    pub seed: u64,
}

impl TaskSpec {
    /// Baseline configuration of each task.
    pub fn baseline(kind: TaskKind) -> Self {
        let mut spec = TaskSpec {
            kind,
            vocab_size: 16,
            seq_len: 64,
            num_train: 20_000,
            num_test: 1_000,
            group_n: None,
            copy_count: None,
            seed: 0,
        };
        match kind {
            TaskKind::Compression | TaskKind::Recall => {}
            TaskKind::SelectiveCopy => spec.copy_count = Some(DEFAULT_COPY_COUNT),
            TaskKind::SnComposition => {
                spec.group_n = Some(3);
                spec.vocab_size = 6;
                spec.seq_len = 16;
                spec.num_train = 10_000;
                spec.num_test = 1_000;
            }
            TaskKind::Parity => {
                spec.vocab_size = 2;
                spec.num_train = 10_000;
            }
            TaskKind::CycleNav => {
                spec.vocab_size = 3;
                spec.num_train = 10_000;
            }
            TaskKind::ModArith | TaskKind::ModArithBrackets => {
                spec.vocab_size = arith::VOCAB;
                spec.seq_len = 31;
                spec.num_train = 10_000;
            }
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let need_vocab = |want: usize| {
            if self.vocab_size == want {
                Ok(())
            } else {
                Err(Error::spec(
                    "vocab_size",
                    format!("{} needs vocab_size = {want}, got {}", self.kind, self.vocab_size),
                ))
            }
        };
        if self.seq_len == 0 {
            return Err(Error::spec("seq_len", "must be at least 1"));
        }
        if self.num_train + self.num_test == 0 {
            return Err(Error::spec("num_train", "no examples requested"));
        }
        if self.vocab_size > IGNORE as usize {
            return Err(Error::spec("vocab_size", format!("at most {} tokens fit the file format", IGNORE)));
        }
        if self.group_n.is_some() && self.kind != TaskKind::SnComposition {
            return Err(Error::spec("group_n", format!("only applies to sn_composition, not {}", self.kind)));
        }
        if self.copy_count.is_some() && self.kind != TaskKind::SelectiveCopy {
            return Err(Error::spec("copy_count", format!("only applies to selective_copy, not {}", self.kind)));
        }
        match self.kind {
            TaskKind::Compression => {
                if self.vocab_size < 2 {
                    return Err(Error::spec(
                        "vocab_size",
                        "compression needs one content token and the aggregation token",
                    ));
                }
            }
            TaskKind::SelectiveCopy => {
                if self.vocab_size < 3 {
                    return Err(Error::spec("vocab_size", "selective_copy needs content, noise and trigger tokens"));
                }
                let k = self.copy_count();
                if k == 0 || 2 * k > self.seq_len {
                    return Err(Error::spec(
                        "copy_count",
                        format!("{k} content tokens do not fit before {k} answer slots in length {}", self.seq_len),
                    ));
                }
            }
            TaskKind::Recall => {
                if self.vocab_size < 4 || self.vocab_size % 2 == 1 {
                    return Err(Error::spec("vocab_size", "recall splits an even vocabulary ≥ 4 into keys and values"));
                }
                if self.seq_len < 4 || self.seq_len % 2 == 1 {
                    return Err(Error::spec("seq_len", "recall needs an even length ≥ 4 of key-value pairs"));
                }
            }
            TaskKind::SnComposition => {
                let n = self.group_n.ok_or_else(|| Error::spec("group_n", "sn_composition needs group_n"))?;
                if !(2..=5).contains(&n) {
                    return Err(Error::spec("group_n", format!("must be in 2..=5, got {n}")));
                }
                need_vocab(factorial(n))?;
            }
            TaskKind::Parity => need_vocab(2)?,
            TaskKind::CycleNav => need_vocab(3)?,
            TaskKind::ModArith | TaskKind::ModArithBrackets => need_vocab(arith::VOCAB)?,
        }
        Ok(())
    }

    pub fn copy_count(&self) -> usize {
        self.copy_count.unwrap_or(DEFAULT_COPY_COUNT)
    }

    /// Tokens fed to the model per example.
    pub fn input_len(&self) -> usize {
        match self.kind {
            TaskKind::Compression => self.seq_len + 1,
            _ => self.seq_len,
        }
    }

    /// Target slots per example (decoder slots for compression, else aligned with inputs).
    pub fn target_len(&self) -> usize {
        self.seq_len
    }

    /// Size of the output softmax.
    pub fn num_classes(&self) -> usize {
        match self.kind {
            TaskKind::Compression => self.vocab_size - 1,
            TaskKind::SelectiveCopy => self.vocab_size - 2,
            TaskKind::Recall | TaskKind::SnComposition => self.vocab_size,
            TaskKind::Parity => 2,
            TaskKind::CycleNav | TaskKind::ModArith | TaskKind::ModArithBrackets => 5,
        }
    }
}
