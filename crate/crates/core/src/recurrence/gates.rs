use super::{ArchKind, LayerConfig, LayerParams, NormFn};
use crate::tensor::{check_finite, sigmoid, Backward, Scalar, Tensor, Var};
use crate::{Error, Result};

/// Normalized gates of one layer call.
///
/// `data` has shape `[batch, T, H, m+1]` (H-LRU) or `[batch, T, H, m, m+1]`
/// (BD-LRU). Along the last axis, index 0 is the input gate and indices
/// `1..=m` are the state gates (`a_1..a_m`, or row `i` of `A_t^k`).
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedGates<F: Scalar> {
    pub kind: ArchKind,
    pub m: usize,
    pub data: Tensor<F>,
}

impl<F: Scalar> NormalizedGates<F> {
    pub fn new(kind: ArchKind, data: Tensor<F>) -> Result<Self> {
        let m = infer_m(kind, data.shape())?;
        Ok(NormalizedGates { kind, m, data })
    }

    pub fn batch(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn steps(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn blocks(&self) -> usize {
        self.data.shape()[2]
    }

    /// Length-`m+1` gate groups, one per block-step (H-LRU) or per block row (BD-LRU).
    pub fn groups(&self) -> impl Iterator<Item = &[F]> {
        self.data.data().chunks_exact(self.m + 1)
    }

    /// Largest `Σ_l |a_l|` over every normalized group.
    pub fn max_row_mass(&self) -> F {
        self.groups().map(|g| g.iter().map(|a| a.abs()).sum::<F>()).fold(F::zero(), F::max)
    }
}

pub(crate) fn infer_m(kind: ArchKind, shape: &[usize]) -> Result<usize> {
    let rank = match kind {
        ArchKind::Hlru => 4,
        ArchKind::Bdlru => 5,
    };
    if shape.len() != rank || shape[rank - 1] < 2 {
        return Err(Error::shape(
            "gates",
            format!("{kind} gates must be rank {rank} with last axis m+1 ≥ 2, got {shape:?}"),
        ));
    }
    let m = shape[rank - 1] - 1;
    if kind == ArchKind::Bdlru && shape[3] != m {
        return Err(Error::shape("gates", format!("BD-LRU gates must be [.., m, m+1], got {shape:?}")));
    }
    Ok(m)
}

pub(crate) fn check_input<F: Scalar>(x: &Tensor<F>, cfg: &LayerConfig) -> Result<(usize, usize)> {
    match x.shape() {
        &[b, t, d] if d == cfg.input_dim => Ok((b, t)),
        s => Err(Error::shape("layer input", format!("expected [batch, T, {}], got {s:?}", cfg.input_dim))),
    }
}

/// Raw selective gates `x W_g + b_g`, reshaped to the gate layout of `cfg`.
pub fn compute_raw_gates<F: Scalar>(x: &Tensor<F>, params: &LayerParams<F>, cfg: &LayerConfig) -> Result<Tensor<F>> {
    let w_g = match (&params.w_g, cfg.selective) {
        (Some(w), true) => w,
        _ => return Err(Error::Contract("compute_raw_gates needs a selective layer; use nonselective_gates".into())),
    };
    let (b, t) = check_input(x, cfg)?;
    let bias = &params.gate_bias;
    let raw = x.matmul(w_g)?.zip_with(bias, "gate bias", |a, c| a + c)?;
    raw.into_reshape(cfg.gate_shape(b, t))
}

/// Learned gate constants broadcast over batch and time.
pub fn nonselective_gates<F: Scalar>(
    params: &LayerParams<F>,
    cfg: &LayerConfig,
    batch: usize,
    steps: usize,
) -> Result<Tensor<F>> {
    if params.gate_bias.shape() != [cfg.gate_width()] {
        return Err(Error::shape("nonselective_gates", format!("constants must be [{}]", cfg.gate_width())));
    }
    params.gate_bias.broadcast_to(&[batch, steps, cfg.gate_width()])?.into_reshape(cfg.gate_shape(batch, steps))
}

/// `a_j = f(a'_j) / Σ_l f(a'_l)` over the last axis.
pub fn normalize_gates<F: Scalar>(raw: &Tensor<F>, kind: ArchKind, norm: NormFn) -> Result<NormalizedGates<F>> {
    infer_m(kind, raw.shape())?;
    let data = check_finite("normalize_gates", normalize_raw(raw, norm))?;
    NormalizedGates::new(kind, data)
}

pub(crate) fn normalize_raw<F: Scalar>(raw: &Tensor<F>, norm: NormFn) -> Tensor<F> {
    if norm == NormFn::None {
        return raw.clone();
    }
    let g = *raw.shape().last().unwrap();
    let mut out = raw.data().to_vec();
    for group in out.chunks_exact_mut(g) {
        normalize_group(group, norm);
    }
    Tensor::new(raw.shape().to_vec(), out).unwrap()
}

fn normalize_group<F: Scalar>(group: &mut [F], norm: NormFn) {
    match norm {
        NormFn::Softmax => {
            let mx = group.iter().copied().fold(F::neg_infinity(), F::max);
            group.iter_mut().for_each(|a| *a = (*a - mx).exp());
        }
        NormFn::SigmoidL1 => group.iter_mut().for_each(|a| *a = sigmoid(*a)),
        NormFn::ReluL1 => group.iter_mut().for_each(|a| *a = a.max(F::zero())),
        NormFn::None => return,
    }
    let mass: F = group.iter().copied().sum();
    if mass > F::zero() {
        group.iter_mut().for_each(|a| *a = *a / mass);
    } else {
        // relu_l1 with no positive entry: the whole group is gated off.
        group.iter_mut().for_each(|a| *a = F::zero());
    }
}

struct Normalize {
    norm: NormFn,
}

impl<F: Scalar> Backward<F> for Normalize {
    fn name(&self) -> &'static str {
        "normalize_gates"
    }

    fn backward(&self, inputs: &[&Tensor<F>], output: &Tensor<F>, grad: &Tensor<F>) -> Result<Vec<Option<Tensor<F>>>> {
        if self.norm == NormFn::None {
            return Ok(vec![Some(grad.clone())]);
        }
        let raw = inputs[0];
        let g = *raw.shape().last().unwrap();
        let mut out = vec![F::zero(); raw.len()];
        let groups = raw
            .data()
            .chunks_exact(g)
            .zip(output.data().chunks_exact(g))
            .zip(grad.data().chunks_exact(g))
            .zip(out.chunks_exact_mut(g));
        for (((r, a), gr), dr) in groups {
            // d a_j / d r_k = f'(r_k)/S (δ_jk − a_j)
            let dot: F = a.iter().zip(gr).map(|(&x, &y)| x * y).sum();
            match self.norm {
                NormFn::Softmax => {
                    for k in 0..g {
                        dr[k] = a[k] * (gr[k] - dot);
                    }
                }
                NormFn::SigmoidL1 => {
                    let s: Vec<F> = r.iter().map(|&x| sigmoid(x)).collect();
                    let mass: F = s.iter().copied().sum();
                    for k in 0..g {
                        dr[k] = s[k] * (F::one() - s[k]) / mass * (gr[k] - dot);
                    }
                }
                NormFn::ReluL1 => {
                    let mass: F = r.iter().map(|x| x.max(F::zero())).sum();
                    if mass > F::zero() {
                        for k in 0..g {
                            if r[k] > F::zero() {
                                dr[k] = (gr[k] - dot) / mass;
                            }
                        }
                    }
                }
                NormFn::None => unreachable!(),
            }
        }
        Ok(vec![Some(Tensor::new(raw.shape().to_vec(), out)?)])
    }
}

/// Tape-recorded [`normalize_gates`] on raw gates of any rank (last axis is the group).
pub fn normalize_var<'t, F: Scalar>(raw: Var<'t, F>, norm: NormFn) -> Result<Var<'t, F>> {
    let out = check_finite("normalize_gates", normalize_raw(&raw.value(), norm))?;
    Ok(raw.tape().record(Box::new(Normalize { norm }), &[raw], out))
}
