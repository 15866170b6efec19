//! Blelloch scan recorded op by op on the tape, so gradients flow through
//! the combine tree itself.

use crate::recurrence::{infer_gate_m, ArchKind};
use crate::tensor::{Scalar, Tensor, Var};
use crate::{Error, Result};

fn tree_level(pad: usize, half: usize) -> (Vec<usize>, Vec<usize>) {
    let rights: Vec<usize> = (2 * half - 1..pad).step_by(2 * half).collect();
    let lefts = rights.iter().map(|r| r - half).collect();
    (lefts, rights)
}

/// `A x` for stacked blocks `A: [k, nb, m, m]`, `x: [k, nb, m]`.
fn apply<'t, F: Scalar>(a: Var<'t, F>, x: Var<'t, F>) -> Result<Var<'t, F>> {
    let s = x.shape();
    a.matmul(x.reshape(vec![s[0], s[1], s[2], 1])?)?.reshape(s)
}

/// States `[batch, T, H, m]` from values and normalized gates via the Blelloch tree.
pub fn scan_var<'t, F: Scalar>(kind: ArchKind, v: Var<'t, F>, gates: Var<'t, F>) -> Result<Var<'t, F>> {
    let tape = v.tape();
    let gs = gates.shape();
    let m = infer_gate_m(kind, &gs)?;
    let (batch, steps, h) = (gs[0], gs[1], gs[2]);
    let nb = batch * h;
    let state_gates: Vec<usize> = (1..=m).collect();

    let (a5, bv) = match kind {
        ArchKind::Hlru => {
            if v.shape() != [batch, steps, h] {
                return Err(Error::shape("scan", format!("values {:?} for gates {gs:?}", v.shape())));
            }
            let first_row = Tensor::from_fn(vec![m, 1], |i| if i == 0 { F::one() } else { F::zero() });
            let sub = Tensor::from_fn(vec![m, m], |i| if i / m == i % m + 1 { F::one() } else { F::zero() });
            let e1 = Tensor::from_fn(vec![m], |i| if i == 0 { F::one() } else { F::zero() });
            let row = gates.index_select(3, &state_gates)?.reshape(vec![batch, steps, h, 1, m])?;
            let a5 = row.mul(tape.constant(first_row))?.add(tape.constant(sub))?;
            let a0 = gates.index_select(3, &[0])?;
            let bv = a0.mul(v.reshape(vec![batch, steps, h, 1])?)?.mul(tape.constant(e1))?;
            (a5, bv)
        }
        ArchKind::Bdlru => {
            if v.shape() != [batch, steps, h, m] {
                return Err(Error::shape("scan", format!("values {:?} for gates {gs:?}", v.shape())));
            }
            let a5 = gates.index_select(4, &state_gates)?;
            let a0 = gates.index_select(4, &[0])?.reshape(vec![batch, steps, h, m])?;
            (a5, a0.mul(v)?)
        }
    };
    let mut a = a5.reshape(vec![batch, steps, h * m * m])?.swap_axes01()?.reshape(vec![steps, nb, m, m])?;
    let mut b = bv.reshape(vec![batch, steps, h * m])?.swap_axes01()?.reshape(vec![steps, nb, m])?;

    let pad = steps.next_power_of_two();
    let real: Vec<usize> = (0..steps).collect();
    if pad > steps {
        let eye = Tensor::from_fn(vec![pad, nb, m, m], |i| {
            let (r, c) = ((i / m) % m, i % m);
            if r == c {
                F::one()
            } else {
                F::zero()
            }
        });
        a = tape.constant(eye).scatter_rows(&real, a)?;
        b = tape.constant(Tensor::zeros(vec![pad, nb, m])).scatter_rows(&real, b)?;
    }
    let (a_in, b_in) = (a, b);

    let mut half = 1;
    while half < pad {
        let (lefts, rights) = tree_level(pad, half);
        let (al, ar) = (a.index_select(0, &lefts)?, a.index_select(0, &rights)?);
        let (bl, br) = (b.index_select(0, &lefts)?, b.index_select(0, &rights)?);
        let new_b = apply(ar, bl)?.add(br)?;
        let new_a = ar.matmul(al)?;
        a = a.scatter_rows(&rights, new_a)?;
        b = b.scatter_rows(&rights, new_b)?;
        half *= 2;
    }

    let mut e = tape.constant(Tensor::zeros(vec![pad, nb, m]));
    let mut half = pad / 2;
    while half >= 1 {
        let (lefts, rights) = tree_level(pad, half);
        let carried = e.index_select(0, &rights)?;
        let new_right = apply(a.index_select(0, &lefts)?, carried)?.add(b.index_select(0, &lefts)?)?;
        e = e.scatter_rows(&lefts, carried)?.scatter_rows(&rights, new_right)?;
        half /= 2;
    }

    let mut states = apply(a_in, e)?.add(b_in)?;
    if pad > steps {
        states = states.index_select(0, &real)?;
    }
    states.reshape(vec![steps, batch, h * m])?.swap_axes01()?.reshape(vec![batch, steps, h, m])
}
