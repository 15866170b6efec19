//! Per-step state-update cost of each architecture in the comparison table.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::{Error, Result};

/// Architecture plus the symbols its cost formula needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
pub enum ArchDescriptor {
    /// `2Hm + 2H`
    Hlru { h: u64, m: u64 },
    /// `2Hm² + 2H`
    Bdlru { h: u64, m: u64 },
    /// `8H² + 25H`, where `H` is the hidden width.
    Lstm { h: u64 },
    /// `2NS`
    Mamba2 { n: u64, s: u64 },
    /// `N_h(4Nr + 4N)`
    Deltanet { n_h: u64, n: u64, r: u64 },
    /// `H_n N_h(4Nr + 4N)`
    Deltaproduct { h_n: u64, n_h: u64, n: u64, r: u64 },
}

impl fmt::Display for ArchDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchDescriptor::Hlru { .. } => "hlru",
            ArchDescriptor::Bdlru { .. } => "bdlru",
            ArchDescriptor::Lstm { .. } => "lstm",
            ArchDescriptor::Mamba2 { .. } => "mamba2",
            ArchDescriptor::Deltanet { .. } => "deltanet",
            ArchDescriptor::Deltaproduct { .. } => "deltaproduct",
        })
    }
}

pub const FLOP_ARCHS: [&str; 7] = ["hlru", "bdlru", "lstm", "mamba2", "deltanet", "deltaproduct", "deltaproduct4"];

impl ArchDescriptor {
    /// Build from an architecture name and named symbols (`h`, `m`, `n`, `s`,
    /// `n_h`, `r`, `h_n`). `deltaproduct4` fixes `h_n = 4`.
    pub fn from_symbols(arch: &str, symbols: &BTreeMap<String, u64>) -> Result<Self> {
        let get = |name: &str| {
            symbols.get(name).copied().ok_or_else(|| Error::spec(name, format!("{arch} needs symbol {name}")))
        };
        Ok(match arch {
            "hlru" => ArchDescriptor::Hlru { h: get("h")?, m: get("m")? },
            "bdlru" => ArchDescriptor::Bdlru { h: get("h")?, m: get("m")? },
            "lstm" => ArchDescriptor::Lstm { h: get("h")? },
            "mamba2" => ArchDescriptor::Mamba2 { n: get("n")?, s: get("s")? },
            "deltanet" => ArchDescriptor::Deltanet { n_h: get("n_h")?, n: get("n")?, r: get("r")? },
            "deltaproduct" => {
                ArchDescriptor::Deltaproduct { h_n: get("h_n")?, n_h: get("n_h")?, n: get("n")?, r: get("r")? }
            }
            "deltaproduct4" => ArchDescriptor::Deltaproduct { h_n: 4, n_h: get("n_h")?, n: get("n")?, r: get("r")? },
            other => {
                return Err(Error::spec(
                    "arch",
                    format!("unknown architecture {other:?}; expected one of {FLOP_ARCHS:?}"),
                ))
            }
        })
    }
}

fn checked(parts: &[u64]) -> Result<u64> {
    parts
        .iter()
        .try_fold(1u64, |acc, &x| acc.checked_mul(x))
        .ok_or_else(|| Error::spec("flops", "cost overflows 64 bits"))
}

fn sum(a: u64, b: u64) -> Result<u64> {
    a.checked_add(b).ok_or_else(|| Error::spec("flops", "cost overflows 64 bits"))
}

/// Exact integer cost of one hidden-state update.
pub fn flops_per_step(arch: &ArchDescriptor) -> Result<u64> {
    match *arch {
        ArchDescriptor::Hlru { h, m } => sum(checked(&[2, h, m])?, checked(&[2, h])?),
        ArchDescriptor::Bdlru { h, m } => sum(checked(&[2, h, m, m])?, checked(&[2, h])?),
        ArchDescriptor::Lstm { h } => sum(checked(&[8, h, h])?, checked(&[25, h])?),
        ArchDescriptor::Mamba2 { n, s } => checked(&[2, n, s]),
        ArchDescriptor::Deltanet { n_h, n, r } => checked(&[n_h, sum(checked(&[4, n, r])?, checked(&[4, n])?)?]),
        ArchDescriptor::Deltaproduct { h_n, n_h, n, r } => {
            checked(&[h_n, n_h, sum(checked(&[4, n, r])?, checked(&[4, n])?)?])
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FlopReport {
    #[serde(flatten)]
    pub arch: ArchDescriptor,
    pub flops_per_step: u64,
}

pub fn flop_report(arch: ArchDescriptor) -> Result<FlopReport> {
    Ok(FlopReport { arch, flops_per_step: flops_per_step(&arch)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        assert_eq!(flops_per_step(&ArchDescriptor::Bdlru { h: 128, m: 4 }).unwrap(), 4352);
        assert_eq!(flops_per_step(&ArchDescriptor::Hlru { h: 128, m: 4 }).unwrap(), 1280);
        for h in [1, 7, 128] {
            let a = flops_per_step(&ArchDescriptor::Hlru { h, m: 1 }).unwrap();
            assert_eq!(a, flops_per_step(&ArchDescriptor::Bdlru { h, m: 1 }).unwrap());
            assert_eq!(a, 4 * h);
        }
        assert_eq!(flops_per_step(&ArchDescriptor::Lstm { h: 10 }).unwrap(), 1050);
        assert_eq!(flops_per_step(&ArchDescriptor::Mamba2 { n: 64, s: 16 }).unwrap(), 2048);
        assert_eq!(flops_per_step(&ArchDescriptor::Deltanet { n_h: 2, n: 8, r: 3 }).unwrap(), 2 * (96 + 32));
        assert_eq!(flops_per_step(&ArchDescriptor::Deltaproduct { h_n: 4, n_h: 2, n: 8, r: 3 }).unwrap(), 4 * 2 * 128);
    }

    #[test]
    fn symbols_are_required() {
        let mut sym = BTreeMap::new();
        sym.insert("h".to_string(), 128);
        assert!(matches!(ArchDescriptor::from_symbols("bdlru", &sym), Err(Error::Spec { .. })));
        sym.insert("m".to_string(), 4);
        let d = ArchDescriptor::from_symbols("bdlru", &sym).unwrap();
        assert_eq!(flop_report(d).unwrap().flops_per_step, 4352);
        assert!(ArchDescriptor::from_symbols("gru", &sym).is_err());
        assert!(flops_per_step(&ArchDescriptor::Lstm { h: u64::MAX }).is_err());
    }
}
