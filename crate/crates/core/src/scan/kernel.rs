//! m×m block kernels, unrolled for m ∈ {1, 2, 4, 8}.

use crate::tensor::Scalar;

#[inline(always)]
fn combine_fixed<F: Scalar, const M: usize>(a_i: &[F], b_i: &[F], a_j: &mut [F], b_j: &mut [F]) {
    let (ai, bi) = (&a_i[..M * M], &b_i[..M]);
    let (aj, bj) = (&mut a_j[..M * M], &mut b_j[..M]);
    let mut prod = [[F::zero(); M]; M];
    for r in 0..M {
        let mut acc = F::zero();
        for k in 0..M {
            acc += aj[r * M + k] * bi[k];
        }
        bj[r] += acc;
        for c in 0..M {
            let mut s = F::zero();
            for k in 0..M {
                s += aj[r * M + k] * ai[k * M + c];
            }
            prod[r][c] = s;
        }
    }
    for r in 0..M {
        aj[r * M..][..M].copy_from_slice(&prod[r]);
    }
}

fn combine_generic<F: Scalar>(m: usize, a_i: &[F], b_i: &[F], a_j: &mut [F], b_j: &mut [F]) {
    let mut prod = vec![F::zero(); m * m];
    for r in 0..m {
        let mut acc = F::zero();
        for k in 0..m {
            acc += a_j[r * m + k] * b_i[k];
        }
        b_j[r] += acc;
        for c in 0..m {
            let mut s = F::zero();
            for k in 0..m {
                s += a_j[r * m + k] * a_i[k * m + c];
            }
            prod[r * m + c] = s;
        }
    }
    a_j.copy_from_slice(&prod);
}

/// In place `(A_j, b_j) ← (A_j A_i, A_j b_i + b_j)`: element `i` precedes `j`.
pub(crate) fn combine_block<F: Scalar>(m: usize, a_i: &[F], b_i: &[F], a_j: &mut [F], b_j: &mut [F]) {
    match m {
        1 => combine_fixed::<F, 1>(a_i, b_i, a_j, b_j),
        2 => combine_fixed::<F, 2>(a_i, b_i, a_j, b_j),
        4 => combine_fixed::<F, 4>(a_i, b_i, a_j, b_j),
        8 => combine_fixed::<F, 8>(a_i, b_i, a_j, b_j),
        _ => combine_generic(m, a_i, b_i, a_j, b_j),
    }
}

/// `out = A h + b`.
#[inline]
pub(crate) fn affine_block<F: Scalar>(m: usize, a: &[F], h: &[F], b: &[F], out: &mut [F]) {
    for r in 0..m {
        let mut acc = F::zero();
        for k in 0..m {
            acc += a[r * m + k] * h[k];
        }
        out[r] = acc + b[r];
    }
}
