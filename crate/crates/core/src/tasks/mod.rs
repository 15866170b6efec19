//! Synthetic benchmarks: MAD tasks, S_n composition and the formal-language tasks.
//!
//! Token layouts (`V` = vocabulary size, ignore marker `0xFFFF`):
//!
//! | task | inputs | targets |
//! |---|---|---|
//! | compression | content `0..V−1`, then aggregation token `V−1` | the content, one per decoder slot |
//! | selective_copy | content `0..V−2`, noise `V−2`, trigger `V−1` | content in order at the trigger slots |
//! | recall | keys `0..V/2`, values `V/2..V`, alternating | latest value at each query key |
//! | sn_composition | lexicographic permutation index, identity = 0 | running composition |
//! | parity | bits | running parity |
//! | cycle_nav | 0 stay, 1 forward, 2 back | final position mod 5, last slot only |
//! | mod_arith(_brackets) | digits 0–4, `+` 5, `−` 6, `·` 7, `(` 8, `)` 9, left padding 10 | value mod 5, last slot only |

mod generate;
mod io;
mod perm;
mod spec;
mod verify;

pub use generate::{gen_example, generate, Dataset, DatasetPair, Example, Split};
pub use io::{
    decode_dataset, encode_dataset, read_dataset_dir, split_file_name, write_dataset_dir, Manifest, MAGIC, MANIFEST,
    VERSION,
};
pub use perm::{compose, composition_table, factorial, permutations};
pub use spec::{arith, TaskKind, TaskSpec, CYCLE_LEN, DEFAULT_COPY_COUNT, IGNORE};
pub use verify::{verify_dataset, verify_example};

macro_rules! task_generators {
    ($($name:ident => $kind:expr),+ $(,)?) => {$(
        #[doc = concat!("[`generate`] for specs of kind `", stringify!($kind), "`.")]
        pub fn $name(spec: &TaskSpec) -> crate::Result<DatasetPair> {
            if spec.kind != $kind {
                return Err(crate::Error::spec("kind", format!("expected {}, got {}", $kind, spec.kind)));
            }
            generate(spec)
        }
    )+};
}

task_generators!(
    gen_compression => TaskKind::Compression,
    gen_selective_copy => TaskKind::SelectiveCopy,
    gen_recall => TaskKind::Recall,
    gen_sn => TaskKind::SnComposition,
    gen_parity => TaskKind::Parity,
    gen_cycle_nav => TaskKind::CycleNav,
);

/// [`generate`] for `mod_arith`, or `mod_arith_brackets` when `brackets` is set.
pub fn gen_mod_arith(spec: &TaskSpec, brackets: bool) -> crate::Result<DatasetPair> {
    let want = if brackets { TaskKind::ModArithBrackets } else { TaskKind::ModArith };
    if spec.kind != want {
        return Err(crate::Error::spec("kind", format!("expected {want}, got {}", spec.kind)));
    }
    generate(spec)
}
