//! Dense lower-block-triangular form of the recurrence, used as an
//! independent oracle for both scan executors.

use crate::recurrence::{ArchKind, NormalizedGates, StateSequence};
use crate::tensor::{Scalar, Tensor};
use crate::{Error, Result};

pub const MAX_ATTENTION_STEPS: usize = 64;

/// Transition `A_t` and input map `B_t` (both row-major `m×m`) of one block-step.
/// For H-LRU, `B_t = a_0 e_1 e_1ᵀ` acting on `(v_t, 0, …, 0)`.
fn block_step<F: Scalar>(gates: &NormalizedGates<F>, b: usize, t: usize, k: usize) -> (Vec<F>, Vec<F>) {
    let m = gates.m;
    let (steps, h) = (gates.steps(), gates.blocks());
    let idx = (b * steps + t) * h + k;
    let g = gates.data.data();
    let mut a = vec![F::zero(); m * m];
    let mut inp = vec![F::zero(); m * m];
    match gates.kind {
        ArchKind::Hlru => {
            let row = &g[idx * (m + 1)..][..m + 1];
            a[..m].copy_from_slice(&row[1..]);
            for i in 1..m {
                a[i * m + i - 1] = F::one();
            }
            inp[0] = row[0];
        }
        ArchKind::Bdlru => {
            for i in 0..m {
                let row = &g[(idx * m + i) * (m + 1)..][..m + 1];
                a[i * m..][..m].copy_from_slice(&row[1..]);
                inp[i * m + i] = row[0];
            }
        }
    }
    (a, inp)
}

fn mat_mul<F: Scalar>(x: &[F], y: &[F], m: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * m];
    for i in 0..m {
        for j in 0..m {
            out[i * m + j] = (0..m).map(|l| x[i * m + l] * y[l * m + j]).sum();
        }
    }
    out
}

/// The `[T·m, T·m]` operator of one (example, block): entry block `(t, s)` is
/// `A_t ⋯ A_{s+1} B_s` for `s ≤ t`, zero above the diagonal.
pub fn attention_operator<F: Scalar>(gates: &NormalizedGates<F>, example: usize, block: usize) -> Result<Vec<F>> {
    let (steps, m) = (gates.steps(), gates.m);
    if steps > MAX_ATTENTION_STEPS {
        return Err(Error::Contract(format!("attention form refused for T = {steps} > {MAX_ATTENTION_STEPS}")));
    }
    if example >= gates.batch() || block >= gates.blocks() {
        return Err(Error::shape("attention_operator", "example or block out of range"));
    }
    let parts: Vec<_> = (0..steps).map(|t| block_step(gates, example, t, block)).collect();
    let n = steps * m;
    let mut op = vec![F::zero(); n * n];
    for t in 0..steps {
        let mut prod: Vec<F> = (0..m * m).map(|i| if i / m == i % m { F::one() } else { F::zero() }).collect();
        for s in (0..=t).rev() {
            let entry = mat_mul(&prod, &parts[s].1, m);
            for i in 0..m {
                op[(t * m + i) * n + s * m..][..m].copy_from_slice(&entry[i * m..][..m]);
            }
            prod = mat_mul(&prod, &parts[s].0, m);
        }
    }
    Ok(op)
}

/// States `y = L u` with the materialized operator `L`; `u_t` is `v_t`
/// (BD-LRU) or `(v_t, 0, …, 0)` (H-LRU).
pub fn materialize_attention<F: Scalar>(gates: &NormalizedGates<F>, v: &Tensor<F>) -> Result<StateSequence<F>> {
    let (batch, steps, h, m) = (gates.batch(), gates.steps(), gates.blocks(), gates.m);
    let want = match gates.kind {
        ArchKind::Hlru => vec![batch, steps, h],
        ArchKind::Bdlru => vec![batch, steps, h, m],
    };
    if v.shape() != want.as_slice() {
        return Err(Error::shape("materialize_attention", format!("values {:?}, expected {want:?}", v.shape())));
    }
    let n = steps * m;
    let mut out = vec![F::zero(); batch * steps * h * m];
    for b in 0..batch {
        for k in 0..h {
            let op = attention_operator(gates, b, k)?;
            let mut u = vec![F::zero(); n];
            for t in 0..steps {
                match gates.kind {
                    ArchKind::Hlru => u[t * m] = v.data()[(b * steps + t) * h + k],
                    ArchKind::Bdlru => u[t * m..][..m].copy_from_slice(&v.data()[((b * steps + t) * h + k) * m..][..m]),
                }
            }
            for t in 0..steps {
                for i in 0..m {
                    let row = &op[(t * m + i) * n..][..n];
                    out[((b * steps + t) * h + k) * m + i] = row.iter().zip(&u).map(|(&x, &y)| x * y).sum();
                }
            }
        }
    }
    Tensor::new(vec![batch, steps, h, m], out)
}
