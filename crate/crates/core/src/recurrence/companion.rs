use crate::tensor::Scalar;
use crate::{Error, Result};

/// Companion form of one H-LRU block-step.
///
/// `gates` is `(a_0, a_1, …, a_m)`. Returns the row-major `m×m` matrix with
/// first row `a_1..a_m` and ones on the subdiagonal, and the input vector
/// `(a_0 v, 0, …, 0)`.
pub fn hlru_to_blockdiag<F: Scalar>(gates: &[F], v: F) -> Result<(Vec<F>, Vec<F>)> {
    if gates.len() < 2 {
        return Err(Error::shape("hlru_to_blockdiag", format!("need m+1 ≥ 2 gates, got {}", gates.len())));
    }
    let m = gates.len() - 1;
    let mut a = vec![F::zero(); m * m];
    a[..m].copy_from_slice(&gates[1..]);
    for i in 1..m {
        a[i * m + i - 1] = F::one();
    }
    let mut b = vec![F::zero(); m];
    b[0] = gates[0] * v;
    Ok((a, b))
}

/// Dense `A_t^k` and `a_0` of one BD-LRU block-step from its `m` gate rows.
pub fn bdlru_block<F: Scalar>(rows: &[F], m: usize) -> (Vec<F>, Vec<F>) {
    let mut a = Vec::with_capacity(m * m);
    let mut a0 = Vec::with_capacity(m);
    for row in rows.chunks_exact(m + 1) {
        a0.push(row[0]);
        a.extend_from_slice(&row[1..]);
    }
    (a, a0)
}

/// `max_i Σ_j |A_ij|` of a row-major square matrix.
pub fn max_row_mass<F: Scalar>(a: &[F], m: usize) -> F {
    a.chunks_exact(m).map(|r| r.iter().map(|x| x.abs()).sum::<F>()).fold(F::zero(), F::max)
}
