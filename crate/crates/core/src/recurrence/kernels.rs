//! Sequential H-LRU and BD-LRU recurrences with hand-written adjoints.
//!
//! Both kernels evaluate the state term first and add the input term last,
//! so at m=1 they perform the same float operations in the same order.

use super::{ArchKind, NormalizedGates};
use crate::tensor::{check_finite, Backward, Scalar, Tensor, Var};
use crate::{Error, Result};

/// States `[batch, T, H, m]`. For H-LRU lane `j` at step `t` holds `h_{t−j}`.
pub type StateSequence<F> = Tensor<F>;

#[derive(Clone, Copy, Debug)]
struct Dims {
    batch: usize,
    steps: usize,
    blocks: usize,
    m: usize,
}

fn dims(kind: ArchKind, v: &Tensor<impl Scalar>, gates: &Tensor<impl Scalar>) -> Result<Dims> {
    let m = super::gates::infer_m(kind, gates.shape())?;
    let gs = gates.shape();
    let d = Dims { batch: gs[0], steps: gs[1], blocks: gs[2], m };
    let want: Vec<usize> = match kind {
        ArchKind::Hlru => vec![d.batch, d.steps, d.blocks],
        ArchKind::Bdlru => vec![d.batch, d.steps, d.blocks, m],
    };
    if v.shape() != want.as_slice() {
        return Err(Error::shape(
            "recurrence",
            format!("{kind} values must be {want:?} for gates {gs:?}, got {:?}", v.shape()),
        ));
    }
    Ok(d)
}

fn hlru_kernel<F: Scalar>(v: &[F], gates: &[F], d: Dims) -> Vec<F> {
    let Dims { batch, steps, blocks, m } = d;
    let mut out = vec![F::zero(); batch * steps * blocks * m];
    let mut reg = vec![F::zero(); blocks * m];
    for b in 0..batch {
        reg.iter_mut().for_each(|x| *x = F::zero());
        for t in 0..steps {
            let bt = b * steps + t;
            for k in 0..blocks {
                let a = &gates[(bt * blocks + k) * (m + 1)..][..m + 1];
                let r = &mut reg[k * m..][..m];
                let mut acc = F::zero();
                for i in 0..m {
                    acc += a[i + 1] * r[i];
                }
                let h = acc + a[0] * v[bt * blocks + k];
                r.copy_within(0..m - 1, 1);
                r[0] = h;
                out[(bt * blocks + k) * m..][..m].copy_from_slice(r);
            }
        }
    }
    out
}

fn bdlru_kernel<F: Scalar>(v: &[F], gates: &[F], d: Dims) -> Vec<F> {
    let Dims { batch, steps, blocks, m } = d;
    let width = blocks * m;
    let mut out = vec![F::zero(); batch * steps * width];
    let mut prev = vec![F::zero(); width];
    let mut next = vec![F::zero(); width];
    for b in 0..batch {
        prev.iter_mut().for_each(|x| *x = F::zero());
        for t in 0..steps {
            let bt = b * steps + t;
            for k in 0..blocks {
                let h = &prev[k * m..][..m];
                for i in 0..m {
                    let row = &gates[((bt * blocks + k) * m + i) * (m + 1)..][..m + 1];
                    let mut acc = F::zero();
                    for j in 0..m {
                        acc += row[j + 1] * h[j];
                    }
                    next[k * m + i] = acc + row[0] * v[bt * width + k * m + i];
                }
            }
            out[bt * width..][..width].copy_from_slice(&next);
            std::mem::swap(&mut prev, &mut next);
        }
    }
    out
}

/// `h_t = Σ_{i=1}^m a_{i,t} h_{t−i} + a_{0,t} v_t` per channel, from zero history.
pub fn hlru_forward<F: Scalar>(v: &Tensor<F>, gates: &NormalizedGates<F>) -> Result<StateSequence<F>> {
    if gates.kind != ArchKind::Hlru {
        return Err(Error::Contract("hlru_forward needs H-LRU gates".into()));
    }
    recurrence_forward(ArchKind::Hlru, v, &gates.data)
}

/// `h_t = A_t h_{t−1} + a_{0,t} ⊙ v_t` per block, from `h_0 = 0`.
pub fn bdlru_forward<F: Scalar>(v: &Tensor<F>, gates: &NormalizedGates<F>) -> Result<StateSequence<F>> {
    if gates.kind != ArchKind::Bdlru {
        return Err(Error::Contract("bdlru_forward needs BD-LRU gates".into()));
    }
    recurrence_forward(ArchKind::Bdlru, v, &gates.data)
}

pub(crate) fn recurrence_forward<F: Scalar>(kind: ArchKind, v: &Tensor<F>, gates: &Tensor<F>) -> Result<Tensor<F>> {
    let d = dims(kind, v, gates)?;
    let out = match kind {
        ArchKind::Hlru => hlru_kernel(v.data(), gates.data(), d),
        ArchKind::Bdlru => bdlru_kernel(v.data(), gates.data(), d),
    };
    check_finite("recurrence", Tensor::new(vec![d.batch, d.steps, d.blocks, d.m], out)?)
}

struct Recurrence {
    kind: ArchKind,
    dims: Dims,
}

impl Recurrence {
    /// Adjoint of the shift-register recurrence. With `λ_t = ∂L/∂h_t` (total),
    /// `λ_t = Σ_j ḡ[t+j, lane j] + Σ_i a_{i,t+i} λ_{t+i}`.
    fn hlru_backward<F: Scalar>(&self, v: &[F], gates: &[F], states: &[F], gy: &[F]) -> (Vec<F>, Vec<F>) {
        let Dims { batch, steps, blocks, m } = self.dims;
        let g = m + 1;
        let mut gv = vec![F::zero(); v.len()];
        let mut ga = vec![F::zero(); gates.len()];
        // lam[k*m + i] = λ_{t+1+i}
        let mut lam = vec![F::zero(); blocks * m];
        for b in 0..batch {
            lam.iter_mut().for_each(|x| *x = F::zero());
            for t in (0..steps).rev() {
                let bt = b * steps + t;
                for k in 0..blocks {
                    let mut l = F::zero();
                    for j in 0..m.min(steps - t) {
                        l += gy[(((bt + j) * blocks) + k) * m + j];
                    }
                    let fut = &mut lam[k * m..][..m];
                    for i in 1..=m.min(steps - 1 - t) {
                        l += gates[((bt + i) * blocks + k) * g + i] * fut[i - 1];
                    }
                    let gidx = (bt * blocks + k) * g;
                    let vidx = bt * blocks + k;
                    ga[gidx] = l * v[vidx];
                    gv[vidx] = l * gates[gidx];
                    if t > 0 {
                        let prev = &states[((bt - 1) * blocks + k) * m..][..m];
                        for i in 1..=m {
                            ga[gidx + i] = l * prev[i - 1];
                        }
                    }
                    fut.copy_within(0..m - 1, 1);
                    fut[0] = l;
                }
            }
        }
        (gv, ga)
    }

    /// `λ_t = ḡ_t + A_{t+1}ᵀ λ_{t+1}`; `∂A_t = λ_t h_{t−1}ᵀ`.
    fn bdlru_backward<F: Scalar>(&self, v: &[F], gates: &[F], states: &[F], gy: &[F]) -> (Vec<F>, Vec<F>) {
        let Dims { batch, steps, blocks, m } = self.dims;
        let width = blocks * m;
        let g = m + 1;
        let mut gv = vec![F::zero(); v.len()];
        let mut ga = vec![F::zero(); gates.len()];
        let mut lam = vec![F::zero(); width];
        let mut carry = vec![F::zero(); width];
        for b in 0..batch {
            carry.iter_mut().for_each(|x| *x = F::zero());
            for t in (0..steps).rev() {
                let bt = b * steps + t;
                for n in 0..width {
                    lam[n] = gy[bt * width + n] + carry[n];
                }
                carry.iter_mut().for_each(|x| *x = F::zero());
                for k in 0..blocks {
                    for i in 0..m {
                        let n = k * m + i;
                        let gidx = ((bt * blocks + k) * m + i) * g;
                        let l = lam[n];
                        ga[gidx] = l * v[bt * width + n];
                        gv[bt * width + n] = l * gates[gidx];
                        for j in 0..m {
                            carry[k * m + j] += gates[gidx + 1 + j] * l;
                            if t > 0 {
                                ga[gidx + 1 + j] = l * states[(bt - 1) * width + k * m + j];
                            }
                        }
                    }
                }
            }
        }
        (gv, ga)
    }
}

impl<F: Scalar> Backward<F> for Recurrence {
    fn name(&self) -> &'static str {
        match self.kind {
            ArchKind::Hlru => "hlru_forward",
            ArchKind::Bdlru => "bdlru_forward",
        }
    }

    fn backward(&self, inputs: &[&Tensor<F>], output: &Tensor<F>, grad: &Tensor<F>) -> Result<Vec<Option<Tensor<F>>>> {
        let (v, gates) = (inputs[0], inputs[1]);
        let (gv, ga) = match self.kind {
            ArchKind::Hlru => self.hlru_backward(v.data(), gates.data(), output.data(), grad.data()),
            ArchKind::Bdlru => self.bdlru_backward(v.data(), gates.data(), output.data(), grad.data()),
        };
        Ok(vec![Some(Tensor::new(v.shape().to_vec(), gv)?), Some(Tensor::new(gates.shape().to_vec(), ga)?)])
    }
}

/// Tape-recorded sequential recurrence over normalized gates.
pub fn recurrence_var<'t, F: Scalar>(kind: ArchKind, v: Var<'t, F>, gates: Var<'t, F>) -> Result<Var<'t, F>> {
    let (vv, gv) = (v.value(), gates.value());
    let d = dims(kind, &vv, &gv)?;
    let out = recurrence_forward(kind, &vv, &gv)?;
    Ok(v.tape().record(Box::new(Recurrence { kind, dims: d }), &[v, gates], out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recurrence::{normalize_gates, NormFn};
    use crate::tensor::{finite_diff_grad, relative_error, Rng, Tape};

    fn hlru_gates(m: usize, steps: usize, row: &[f64]) -> NormalizedGates<f64> {
        let data: Vec<f64> = (0..steps).flat_map(|_| row.iter().copied()).collect();
        NormalizedGates::new(ArchKind::Hlru, Tensor::new(vec![1, steps, 1, m + 1], data).unwrap()).unwrap()
    }

    #[test]
    fn first_order_halving() {
        let g = hlru_gates(1, 6, &[0.5, 0.5]);
        let v = Tensor::full(vec![1, 6, 1], 1.0);
        let h = hlru_forward(&v, &g).unwrap();
        for (t, &x) in h.data().iter().enumerate() {
            assert_eq!(x, 1.0 - 0.5f64.powi(t as i32 + 1));
        }
    }

    #[test]
    fn no_input_gate_means_zero_states() {
        let g = hlru_gates(3, 5, &[0.0, 0.4, 0.3, 0.3]);
        let v = Tensor::full(vec![1, 5, 1], 2.0);
        assert!(hlru_forward(&v, &g).unwrap().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn hlru_shift_register_lanes() {
        // m=2, h_t = 0.25 h_{t-1} + 0.25 h_{t-2} + 0.5 v_t with v = (1, 0, 0)
        let g = hlru_gates(2, 3, &[0.5, 0.25, 0.25]);
        let v = Tensor::from_f64(&[1, 3, 1], &[1.0, 0.0, 0.0]).unwrap();
        let h = hlru_forward(&v, &g).unwrap();
        assert_eq!(h.data(), &[0.5, 0.0, 0.125, 0.5, 0.15625, 0.125]);
    }

    #[test]
    fn bdlru_passthrough_and_swap() {
        let steps = 4;
        let pass: Vec<f64> = (0..steps * 2).flat_map(|_| [1.0, 0.0, 0.0]).collect();
        let g = NormalizedGates::new(ArchKind::Bdlru, Tensor::new(vec![1, steps, 1, 2, 3], pass).unwrap()).unwrap();
        let v = Tensor::from_fn(vec![1, steps, 1, 2], |i| i as f64 - 3.0);
        assert_eq!(bdlru_forward(&v, &g).unwrap().data(), v.data());

        let swap: Vec<f64> = (0..steps).flat_map(|_| [0.5, 0.0, 0.5, 0.5, 0.5, 0.0]).collect();
        let g = NormalizedGates::new(ArchKind::Bdlru, Tensor::new(vec![1, steps, 1, 2, 3], swap).unwrap()).unwrap();
        let v = Tensor::from_fn(vec![1, steps, 1, 2], |i| if i % 2 == 0 { 1.0 } else { 0.0 });
        let h = bdlru_forward(&v, &g).unwrap();
        // h1 = (.5, 0); h2 = (.5, .25); h3 = (.625, .25); h4 = (.625, .3125)
        assert_eq!(h.data(), &[0.5, 0.0, 0.5, 0.25, 0.625, 0.25, 0.625, 0.3125]);
    }

    #[test]
    fn order_one_architectures_coincide_bitwise() {
        let mut rng = Rng::new(5);
        let raw = Tensor::<f64>::from_fn(vec![3, 17, 4, 2], |_| rng.uniform(-3.0, 3.0));
        let v = Tensor::<f64>::from_fn(vec![3, 17, 4], |_| rng.uniform(-1.0, 1.0));
        let gh = normalize_gates(&raw, ArchKind::Hlru, NormFn::SigmoidL1).unwrap();
        let gb =
            normalize_gates(&raw.reshape(vec![3, 17, 4, 1, 2]).unwrap(), ArchKind::Bdlru, NormFn::SigmoidL1).unwrap();
        let hh = hlru_forward(&v, &gh).unwrap();
        let hb = bdlru_forward(&v.reshape(vec![3, 17, 4, 1]).unwrap(), &gb).unwrap();
        assert_eq!(hh.data(), hb.data());
    }

    #[test]
    fn mismatched_values_rejected() {
        let g = hlru_gates(2, 3, &[0.5, 0.25, 0.25]);
        let v = Tensor::zeros(vec![1, 4, 1]);
        assert!(matches!(hlru_forward(&v, &g), Err(Error::Shape { .. })));
        assert!(matches!(bdlru_forward(&v, &g), Err(Error::Contract(_))));
    }

    fn grad_check(kind: ArchKind, m: usize) {
        let (b, t, h) = (2, 8, 2);
        let mut rng = Rng::new(42 + m as u64);
        let gshape: Vec<usize> = match kind {
            ArchKind::Hlru => vec![b, t, h, m + 1],
            ArchKind::Bdlru => vec![b, t, h, m, m + 1],
        };
        let vshape: Vec<usize> = match kind {
            ArchKind::Hlru => vec![b, t, h],
            ArchKind::Bdlru => vec![b, t, h, m],
        };
        let gates = Tensor::<f64>::from_fn(gshape, |_| rng.uniform(-0.6, 0.6));
        let v = Tensor::<f64>::from_fn(vshape, |_| rng.uniform(-1.0, 1.0));
        let w = Tensor::<f64>::from_fn(vec![b, t, h, m], |_| rng.uniform(-1.0, 1.0));
        let loss = |v: &Tensor<f64>, g: &Tensor<f64>| {
            let s = recurrence_forward(kind, v, g).unwrap();
            s.data().iter().zip(w.data()).map(|(x, y)| x * y).sum::<f64>()
        };
        let tape = Tape::new();
        let (vv, gv) = (tape.param(v.clone()), tape.param(gates.clone()));
        let out = recurrence_var(kind, vv, gv).unwrap();
        let l = out.mul(tape.constant(w.clone())).unwrap().sum().unwrap();
        let grads = tape.backward(&l).unwrap();
        let fd_v = finite_diff_grad(|x| loss(x, &gates), &v, 1e-6);
        let fd_g = finite_diff_grad(|x| loss(&v, x), &gates, 1e-6);
        let ev = relative_error(grads.get(&vv).unwrap(), &fd_v);
        let eg = relative_error(grads.get(&gv).unwrap(), &fd_g);
        assert!(ev < 1e-7 && eg < 1e-7, "{kind} m={m}: {ev} {eg}");
    }

    #[test]
    fn recurrence_gradients_match_finite_differences() {
        for m in [1, 2, 3] {
            grad_check(ArchKind::Hlru, m);
            grad_check(ArchKind::Bdlru, m);
        }
    }
}
