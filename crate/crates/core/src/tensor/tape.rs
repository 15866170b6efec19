//! Reverse-mode tape.
//!
//! A [`Tape`] owns every value produced during one forward pass. [`Var`] is a
//! copyable handle into it. Nodes are appended in evaluation order, so the
//! node list is already topologically sorted and `backward` is a single
//! reverse sweep. Saved activations are the node values themselves, held by
//! value; nothing aliases a mutable buffer.

use std::cell::{Cell, RefCell};
use std::rc::Rc;
use std::sync::atomic::{AtomicBool, Ordering};

use super::array::matmul_t;
use super::{Scalar, Tensor};
use crate::{Error, Result};

/// Backward rule of one recorded op.
pub trait Backward<F: Scalar> {
    fn name(&self) -> &'static str;

    /// Gradient with respect to each input, in input order; `None` means zero.
    fn backward(&self, inputs: &[&Tensor<F>], output: &Tensor<F>, grad: &Tensor<F>) -> Result<Vec<Option<Tensor<F>>>>;
}

struct Node<F: Scalar> {
    value: Rc<Tensor<F>>,
    inputs: Vec<usize>,
    op: Option<Box<dyn Backward<F>>>,
    requires_grad: bool,
}

pub struct Tape<F: Scalar> {
    nodes: RefCell<Vec<Node<F>>>,
    consumed: Cell<bool>,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Copy)]
pub struct Var<'t, F: Scalar> {
    tape: &'t Tape<F>,
    id: usize,
}

impl<F: Scalar> std::fmt::Debug for Var<'_, F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.value().shape())
    }
}

/// Gradients of every `requires_grad` leaf after [`Tape::backward`].
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, var: &Var<'_, F>) -> Option<&Tensor<F>> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: &Var<'_, F>) -> Option<Tensor<F>> {
        self.grads.get_mut(var.id).and_then(Option::take)
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()), consumed: Cell::new(false) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn leaf(&self, value: Tensor<F>, requires_grad: bool) -> Var<'_, F> {
        self.push_node(Node { value: Rc::new(value), inputs: Vec::new(), op: None, requires_grad })
    }

    pub fn param(&self, value: Tensor<F>) -> Var<'_, F> {
        self.leaf(value, true)
    }

    pub fn constant(&self, value: Tensor<F>) -> Var<'_, F> {
        self.leaf(value, false)
    }

    /// Record `output = op(inputs)`. The op is kept only if some input needs a gradient.
    pub fn record<'t>(&'t self, op: Box<dyn Backward<F>>, inputs: &[Var<'t, F>], output: Tensor<F>) -> Var<'t, F> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|v| {
                assert!(std::ptr::eq(v.tape, self), "var from another tape");
                nodes[v.id].requires_grad
            })
        };
        self.push_node(Node {
            value: Rc::new(output),
            inputs: inputs.iter().map(|v| v.id).collect(),
            op: requires_grad.then_some(op),
            requires_grad,
        })
    }

    fn push_node(&self, node: Node<F>) -> Var<'_, F> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// Reverse accumulation from a scalar `loss`. A tape supports one backward pass.
    pub fn backward(&self, loss: &Var<'_, F>) -> Result<Gradients<F>> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::Contract("loss is not on this tape".into()));
        }
        if self.consumed.replace(true) {
            return Err(Error::Contract("backward already ran on this tape; re-run the forward pass".into()));
        }
        let nodes = self.nodes.borrow();
        let loss_node = &nodes[loss.id];
        if loss_node.value.len() != 1 {
            return Err(Error::Contract(format!("loss must be a scalar, got shape {:?}", loss_node.value.shape())));
        }
        let mut grads: Vec<Option<Tensor<F>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::full(loss_node.value.shape().to_vec(), F::one()));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let Some(op) = node.op.as_ref() else { continue };
            let Some(g) = grads[id].take() else { continue };
            let inputs: Vec<&Tensor<F>> = node.inputs.iter().map(|&i| nodes[i].value.as_ref()).collect();
            let input_grads = op.backward(&inputs, &node.value, &g)?;
            debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", op.name());
            for (&inp, ig) in node.inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                if !nodes[inp].requires_grad {
                    continue;
                }
                if ig.shape() != nodes[inp].value.shape() {
                    return Err(Error::shape(
                        "backward",
                        format!(
                            "{} produced grad {:?} for input {:?}",
                            op.name(),
                            ig.shape(),
                            nodes[inp].value.shape()
                        ),
                    ));
                }
                grads[inp] = Some(match grads[inp].take() {
                    None => ig,
                    Some(acc) => add_same(acc, &ig),
                });
            }
        }

        for (id, node) in nodes.iter().enumerate() {
            let is_leaf = node.inputs.is_empty();
            if !(is_leaf && node.requires_grad) {
                grads[id] = None;
            } else if grads[id].is_none() {
                grads[id] = Some(Tensor::zeros(node.value.shape().to_vec()));
            }
        }
        Ok(Gradients { grads })
    }
}

fn add_same<F: Scalar>(acc: Tensor<F>, g: &Tensor<F>) -> Tensor<F> {
    let shape = acc.shape().to_vec();
    let mut data = acc.into_data();
    for (a, &b) in data.iter_mut().zip(g.data()) {
        *a += b;
    }
    Tensor::new(shape, data).expect("same shape")
}

static SATURATION_WARNED: AtomicBool = AtomicBool::new(false);

/// Non-finite values are errors at strict precision and clamp (with one warning) otherwise.
pub(crate) fn check_finite<F: Scalar>(op: &'static str, t: Tensor<F>) -> Result<Tensor<F>> {
    if t.all_finite() {
        return Ok(t);
    }
    if F::STRICT {
        return Err(Error::Numeric { op, detail: "non-finite output".into() });
    }
    if !SATURATION_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("{op} produced non-finite values at {} precision; saturating", F::NAME);
    }
    Ok(t.map(|x| if x.is_nan() { x } else { x.max(F::min_value()).min(F::max_value()) }))
}

// ---------------------------------------------------------------------------
// Ops

impl<'t, F: Scalar> Var<'t, F> {
    pub fn tape(&self) -> &'t Tape<F> {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor<F>> {
        Rc::clone(&self.tape.nodes.borrow()[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    fn unary(self, kind: Unary) -> Result<Var<'t, F>> {
        let x = self.value();
        let out = check_finite(kind.name(), x.map(|v| kind.forward(v)))?;
        Ok(self.tape.record(Box::new(kind), &[self], out))
    }

    pub fn exp(self) -> Result<Var<'t, F>> {
        self.unary(Unary::Exp)
    }

    pub fn sigmoid(self) -> Result<Var<'t, F>> {
        self.unary(Unary::Sigmoid)
    }

    pub fn relu(self) -> Result<Var<'t, F>> {
        self.unary(Unary::Relu)
    }

    pub fn neg(self) -> Result<Var<'t, F>> {
        self.unary(Unary::Neg)
    }

    /// GELU, tanh approximation.
    pub fn gelu(self) -> Result<Var<'t, F>> {
        self.unary(Unary::Gelu)
    }

    fn binary(self, other: Var<'t, F>, kind: Binary) -> Result<Var<'t, F>> {
        let (a, b) = (self.value(), other.value());
        let out = a.zip_with(&b, kind.name(), |x, y| kind.forward(x, y))?;
        let out = check_finite(kind.name(), out)?;
        Ok(self.tape.record(Box::new(kind), &[self, other], out))
    }

    pub fn add(self, other: Var<'t, F>) -> Result<Var<'t, F>> {
        self.binary(other, Binary::Add)
    }

    pub fn sub(self, other: Var<'t, F>) -> Result<Var<'t, F>> {
        self.binary(other, Binary::Sub)
    }

    pub fn mul(self, other: Var<'t, F>) -> Result<Var<'t, F>> {
        self.binary(other, Binary::Mul)
    }

    pub fn matmul(self, other: Var<'t, F>) -> Result<Var<'t, F>> {
        let out = self.value().matmul(&other.value())?;
        Ok(self.tape.record(Box::new(MatMul), &[self, other], out))
    }

    pub fn sum(self) -> Result<Var<'t, F>> {
        let out = Tensor::scalar(self.value().sum());
        Ok(self.tape.record(Box::new(SumAll), &[self], out))
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'t, F>> {
        let out = self.value().reshape(shape)?;
        Ok(self.tape.record(Box::new(Reshape), &[self], out))
    }

    pub fn broadcast_to(self, shape: &[usize]) -> Result<Var<'t, F>> {
        let out = self.value().broadcast_to(shape)?;
        Ok(self.tape.record(Box::new(BroadcastTo), &[self], out))
    }

    pub fn index_select(self, axis: usize, indices: &[usize]) -> Result<Var<'t, F>> {
        let out = self.value().index_select(axis, indices)?;
        let op = IndexSelect { axis, indices: indices.to_vec() };
        Ok(self.tape.record(Box::new(op), &[self], out))
    }

    /// `self` with rows `indices` (axis 0) overwritten by `src`.
    pub fn scatter_rows(self, indices: &[usize], src: Var<'t, F>) -> Result<Var<'t, F>> {
        let out = self.value().scatter_rows(indices, &src.value())?;
        let op = ScatterRows { indices: indices.to_vec() };
        Ok(self.tape.record(Box::new(op), &[self, src], out))
    }

    pub fn swap_axes01(self) -> Result<Var<'t, F>> {
        let out = self.value().swap_axes01()?;
        Ok(self.tape.record(Box::new(SwapAxes01), &[self], out))
    }

    /// Rows of a `[vocab, dim]` table; output shape is `batch_shape ++ [dim]`.
    pub fn embedding(self, ids: &[usize], batch_shape: &[usize]) -> Result<Var<'t, F>> {
        let table = self.value();
        if table.ndim() != 2 {
            return Err(Error::shape("embedding", format!("table must be 2-d, got {:?}", table.shape())));
        }
        if batch_shape.iter().product::<usize>() != ids.len() {
            return Err(Error::shape("embedding", format!("{} ids for batch shape {batch_shape:?}", ids.len())));
        }
        let rows = table.index_select(0, ids)?;
        let mut shape = batch_shape.to_vec();
        shape.push(table.shape()[1]);
        let out = rows.into_reshape(shape)?;
        let op = IndexSelect { axis: 0, indices: ids.to_vec() };
        Ok(self.tape.record(Box::new(EmbeddingOp(op)), &[self], out))
    }

    /// `Σ_i CE(logits_i, target_i) / denom` over rows with a target; `logits` is `[n, classes]`.
    pub fn cross_entropy(self, targets: &[Option<usize>], denom: F) -> Result<Var<'t, F>> {
        let logits = self.value();
        let shape = logits.shape();
        if shape.len() != 2 || shape[0] != targets.len() {
            return Err(Error::shape("cross_entropy", format!("logits {shape:?} for {} targets", targets.len())));
        }
        let c = shape[1];
        if let Some(bad) = targets.iter().flatten().find(|&&t| t >= c) {
            return Err(Error::shape("cross_entropy", format!("target {bad} >= {c} classes")));
        }
        let mut probs = vec![F::zero(); logits.len()];
        let mut total = F::zero();
        for (i, row) in logits.data().chunks(c).enumerate() {
            let Some(t) = targets[i] else { continue };
            let mx = row.iter().fold(F::neg_infinity(), |m, &x| m.max(x));
            let mut z = F::zero();
            for (p, &x) in probs[i * c..(i + 1) * c].iter_mut().zip(row) {
                *p = (x - mx).exp();
                z += *p;
            }
            for p in &mut probs[i * c..(i + 1) * c] {
                *p = *p / z;
            }
            total += z.ln() + mx - row[t];
        }
        let out = check_finite("cross_entropy", Tensor::scalar(total / denom))?;
        let op = CrossEntropy { probs, targets: targets.to_vec(), classes: c, denom };
        Ok(self.tape.record(Box::new(op), &[self], out))
    }
}

#[derive(Clone, Copy)]
enum Unary {
    Exp,
    Sigmoid,
    Relu,
    Neg,
    Gelu,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044715;

pub(crate) fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

impl Unary {
    fn forward<F: Scalar>(self, x: F) -> F {
        match self {
            Unary::Exp => x.exp(),
            Unary::Sigmoid => sigmoid(x),
            Unary::Relu => x.max(F::zero()),
            Unary::Neg => -x,
            Unary::Gelu => {
                let c = F::from_f64(GELU_C);
                let k = F::from_f64(GELU_K);
                let half = F::from_f64(0.5);
                half * x * (F::one() + (c * (x + k * x * x * x)).tanh())
            }
        }
    }

    fn derivative<F: Scalar>(self, x: F, y: F) -> F {
        match self {
            Unary::Exp => y,
            Unary::Sigmoid => y * (F::one() - y),
            Unary::Relu => {
                if x > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Unary::Neg => -F::one(),
            Unary::Gelu => {
                let c = F::from_f64(GELU_C);
                let k = F::from_f64(GELU_K);
                let half = F::from_f64(0.5);
                let three = F::from_f64(3.0);
                let th = (c * (x + k * x * x * x)).tanh();
                half * (F::one() + th) + half * x * (F::one() - th * th) * c * (F::one() + three * k * x * x)
            }
        }
    }

    fn name(self) -> &'static str {
        match self {
            Unary::Exp => "exp",
            Unary::Sigmoid => "sigmoid",
            Unary::Relu => "relu",
            Unary::Neg => "neg",
            Unary::Gelu => "gelu",
        }
    }
}

impl<F: Scalar> Backward<F> for Unary {
    fn name(&self) -> &'static str {
        Unary::name(*self)
    }

    fn backward(&self, inputs: &[&Tensor<F>], output: &Tensor<F>, grad: &Tensor<F>) -> Result<Vec<Option<Tensor<F>>>> {
        let x = inputs[0].data();
        let y = output.data();
        let g: Vec<F> = grad.data().iter().enumerate().map(|(i, &g)| g * self.derivative(x[i], y[i])).collect();
        Ok(vec![Some(Tensor::new(inputs[0].shape().to_vec(), g)?)])
    }
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
}

impl Binary {
    fn forward<F: Scalar>(self, x: F, y: F) -> F {
        match self {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        }
    }
}

impl<F: Scalar> Backward<F> for Binary {
    fn name(&self) -> &'static str {
        Binary::name(*self)
    }

    fn backward(&self, inputs: &[&Tensor<F>], _output: &Tensor<F>, grad: &Tensor<F>) -> Result<Vec<Option<Tensor<F>>>> {
        let (a, b) = (inputs[0], inputs[1]);
        let (ga, gb) = match self {
            Binary::Add => (grad.clone(), grad.clone()),
            Binary::Sub => (grad.clone(), grad.map(|x| -x)),
            Binary::Mul => (grad.zip_with(b, "mul", |g, y| g * y)?, grad.zip_with(a, "mul", |g, x| g * x)?),
        };
        Ok(vec![Some(ga.sum_to_shape(a.shape())?), Some(gb.sum_to_shape(b.shape())?)])
    }
}

struct MatMul;

impl<F: Scalar> Backward<F> for MatMul {
    fn name(&self) -> &'static str {
        "matmul"
    }

    fn backward(&self, inputs: &[&Tensor<F>], _output: &Tensor<F>, grad: &Tensor<F>) -> Result<Vec<Option<Tensor<F>>>> {
        let (a, b) = (inputs[0], inputs[1]);
        let ga = matmul_t(grad, false, b, true)?.sum_to_shape(a.shape())?;
        let gb = if b.ndim() == 2 && a.ndim() > 2 {
            // Collapse a's batch axes into rows: one gemm instead of a batched product plus a reduction.
            let q = a.shape()[a.ndim() - 1];
            let r = grad.shape()[grad.ndim() - 1];
            let rows = a.len() / q;
            let a2 = a.reshape(vec![rows, q])?;
            let g2 = grad.reshape(vec![rows, r])?;
            matmul_t(&a2, true, &g2, false)?
        } else {
            matmul_t(a, true, grad, false)?.sum_to_shape(b.shape())?
        };
        Ok(vec![Some(ga), Some(gb)])
    }
}

struct SumAll;

impl<F: Scalar> Backward<F> for SumAll {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(&self, inputs: &[&Tensor<F>], _output: &Tensor<F>, grad: &Tensor<F>) -> Result<Vec<Option<Tensor<F>>>> {
        Ok(vec![Some(Tensor::full(inputs[0].shape().to_vec(), grad.item()?))])
    }
}

struct Reshape;

impl<F: Scalar> Backward<F> for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(&self, inputs: &[&Tensor<F>], _output: &Tensor<F>, grad: &Tensor<F>) -> Result<Vec<Option<Tensor<F>>>> {
        Ok(vec![Some(grad.reshape(inputs[0].shape().to_vec())?)])
    }
}

struct BroadcastTo;

impl<F: Scalar> Backward<F> for BroadcastTo {
    fn name(&self) -> &'static str {
        "broadcast_to"
    }

    fn backward(&self, inputs: &[&Tensor<F>], _output: &Tensor<F>, grad: &Tensor<F>) -> Result<Vec<Option<Tensor<F>>>> {
        Ok(vec![Some(grad.sum_to_shape(inputs[0].shape())?)])
    }
}

struct IndexSelect {
    axis: usize,
    indices: Vec<usize>,
}

impl IndexSelect {
    fn scatter_add<F: Scalar>(&self, input_shape: &[usize], grad: &Tensor<F>) -> Result<Tensor<F>> {
        let dim = input_shape[self.axis];
        let outer: usize = input_shape[..self.axis].iter().product();
        let inner: usize = input_shape[self.axis + 1..].iter().product();
        let mut acc = vec![F::zero(); input_shape.iter().product()];
        let g = grad.data();
        let k = self.indices.len();
        for o in 0..outer {
            for (j, &i) in self.indices.iter().enumerate() {
                let src = (o * k + j) * inner;
                let dst = (o * dim + i) * inner;
                for (a, &b) in acc[dst..dst + inner].iter_mut().zip(&g[src..src + inner]) {
                    *a += b;
                }
            }
        }
        Tensor::new(input_shape.to_vec(), acc)
    }
}

impl<F: Scalar> Backward<F> for IndexSelect {
    fn name(&self) -> &'static str {
        "index_select"
    }

    fn backward(&self, inputs: &[&Tensor<F>], _output: &Tensor<F>, grad: &Tensor<F>) -> Result<Vec<Option<Tensor<F>>>> {
        Ok(vec![Some(self.scatter_add(inputs[0].shape(), grad)?)])
    }
}

struct EmbeddingOp(IndexSelect);

impl<F: Scalar> Backward<F> for EmbeddingOp {
    fn name(&self) -> &'static str {
        "embedding"
    }

    fn backward(&self, inputs: &[&Tensor<F>], _output: &Tensor<F>, grad: &Tensor<F>) -> Result<Vec<Option<Tensor<F>>>> {
        let table = inputs[0].shape();
        let g = grad.reshape(vec![self.0.indices.len(), table[1]])?;
        Ok(vec![Some(self.0.scatter_add(table, &g)?)])
    }
}

struct ScatterRows {
    indices: Vec<usize>,
}

impl<F: Scalar> Backward<F> for ScatterRows {
    fn name(&self) -> &'static str {
        "scatter_rows"
    }

    fn backward(&self, inputs: &[&Tensor<F>], _output: &Tensor<F>, grad: &Tensor<F>) -> Result<Vec<Option<Tensor<F>>>> {
        let src_grad = grad.index_select(0, &self.indices)?;
        let zeros = Tensor::zeros(inputs[1].shape().to_vec());
        let base_grad = grad.scatter_rows(&self.indices, &zeros)?;
        Ok(vec![Some(base_grad), Some(src_grad)])
    }
}

struct SwapAxes01;

impl<F: Scalar> Backward<F> for SwapAxes01 {
    fn name(&self) -> &'static str {
        "swap_axes01"
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<F>],
        _output: &Tensor<F>,
        grad: &Tensor<F>,
    ) -> Result<Vec<Option<Tensor<F>>>> {
        Ok(vec![Some(grad.swap_axes01()?)])
    }
}

struct CrossEntropy<F> {
    probs: Vec<F>,
    targets: Vec<Option<usize>>,
    classes: usize,
    denom: F,
}

impl<F: Scalar> Backward<F> for CrossEntropy<F> {
    fn name(&self) -> &'static str {
        "cross_entropy"
    }

    fn backward(&self, inputs: &[&Tensor<F>], _output: &Tensor<F>, grad: &Tensor<F>) -> Result<Vec<Option<Tensor<F>>>> {
        let scale = grad.item()? / self.denom;
        let c = self.classes;
        let mut g = vec![F::zero(); self.probs.len()];
        for (i, t) in self.targets.iter().enumerate() {
            let Some(t) = *t else { continue };
            for j in 0..c {
                g[i * c + j] = self.probs[i * c + j] * scale;
            }
            g[i * c + t] -= scale;
        }
        Ok(vec![Some(Tensor::new(inputs[0].shape().to_vec(), g)?)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{finite_diff_grad, relative_error, Rng};

    #[test]
    fn elementwise_values() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_f64(&[3], &[0.0, -2.0, 1.0]).unwrap());
        assert_eq!(x.sigmoid().unwrap().value().data()[0], 0.5);
        assert_eq!(x.relu().unwrap().value().data()[1], 0.0);
        assert!((x.exp().unwrap().value().data()[2] - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn grad_of_weighted_sum_is_input() {
        let tape = Tape::<f64>::new();
        let xv = Tensor::from_f64(&[4], &[1.0, -2.0, 0.5, 3.0]).unwrap();
        let w = tape.param(Tensor::from_f64(&[4], &[0.3, 0.1, -0.7, 2.0]).unwrap());
        let x = tape.constant(xv.clone());
        let loss = w.mul(x).unwrap().sum().unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.get(&w).unwrap(), &xv);
    }

    #[test]
    fn grad_of_sigmoid_sum() {
        let tape = Tape::<f64>::new();
        let wv = Tensor::from_f64(&[3], &[-1.0, 0.0, 2.0]).unwrap();
        let w = tape.param(wv.clone());
        let loss = w.sigmoid().unwrap().sum().unwrap();
        let grads = tape.backward(&loss).unwrap();
        let expect = wv.map(|x| {
            let s = 1.0 / (1.0 + (-x).exp());
            s * (1.0 - s)
        });
        assert!(grads.get(&w).unwrap().max_abs_diff(&expect).unwrap() < 1e-15);
    }

    #[test]
    fn backward_twice_is_rejected() {
        let tape = Tape::<f64>::new();
        let w = tape.param(Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap());
        let loss = w.sum().unwrap();
        tape.backward(&loss).unwrap();
        assert!(matches!(tape.backward(&loss), Err(Error::Contract(_))));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let tape = Tape::<f64>::new();
        let w = tape.param(Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap());
        assert!(matches!(tape.backward(&w), Err(Error::Contract(_))));
    }

    #[test]
    fn unused_leaf_gets_zero_grad() {
        let tape = Tape::<f64>::new();
        let w = tape.param(Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap());
        let u = tape.param(Tensor::zeros(vec![3, 2]));
        let loss = w.sum().unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.get(&u).unwrap(), &Tensor::zeros(vec![3, 2]));
    }

    #[test]
    fn exp_overflow_is_an_error_at_f64() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_f64(&[1], &[1000.0]).unwrap());
        assert!(matches!(x.exp(), Err(Error::Numeric { .. })));
    }

    #[test]
    fn exp_overflow_saturates_at_f32() {
        let tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::from_f64(&[1], &[1000.0]).unwrap());
        assert_eq!(x.exp().unwrap().value().data()[0], f32::MAX);
    }

    /// Random composite graph touching every op; backward vs central differences.
    #[test]
    fn random_graph_matches_finite_differences() {
        let mut rng = Rng::new(5);
        let mut rand = |shape: Vec<usize>| Tensor::<f64>::from_fn(shape, |_| rng.uniform(-1.0, 1.0));
        let params = rand(vec![27]);
        let bias = rand(vec![4]);
        let ids = [0usize, 3, 4, 3, 1, 2];
        let targets = [Some(1), None, Some(3), Some(0), None, Some(2)];

        #[allow(clippy::type_complexity)]
        fn build<'t>(
            tape: &'t Tape<f64>,
            p: &Tensor<f64>,
            trainable: bool,
            bias: &Tensor<f64>,
            ids: &[usize],
            targets: &[Option<usize>],
        ) -> (Var<'t, f64>, Var<'t, f64>, Var<'t, f64>) {
            let w = tape.leaf(Tensor::new(vec![3, 4], p.data()[..12].to_vec()).unwrap(), trainable);
            let e = tape.leaf(Tensor::new(vec![5, 3], p.data()[12..].to_vec()).unwrap(), trainable);
            let b = tape.constant(bias.clone());
            let x = e.embedding(ids, &[2, 3]).unwrap(); // [2,3,3]
            let h = x.matmul(w).unwrap().add(b).unwrap(); // [2,3,4]
            let h = h
                .gelu()
                .unwrap()
                .mul(h.sigmoid().unwrap())
                .unwrap()
                .sub(h.relu().unwrap().neg().unwrap().exp().unwrap())
                .unwrap();
            let h = h.swap_axes01().unwrap().index_select(0, &[2, 0, 1]).unwrap(); // [3,2,4]
            let src = h.index_select(0, &[2]).unwrap().sigmoid().unwrap();
            let h = h.scatter_rows(&[0], src).unwrap();
            let ce = h.reshape(vec![6, 4]).unwrap().cross_entropy(targets, 4.0).unwrap();
            let extra = h.broadcast_to(&[2, 3, 2, 4]).unwrap().sum().unwrap();
            let loss = ce.add(extra.mul(tape.constant(Tensor::scalar(0.01))).unwrap()).unwrap();
            (w, e, loss)
        }

        let tape = Tape::new();
        let (w, e, loss) = build(&tape, &params, true, &bias, &ids, &targets);
        let grads = tape.backward(&loss).unwrap();
        let analytic = Tensor::new(
            vec![27],
            grads.get(&w).unwrap().data().iter().chain(grads.get(&e).unwrap().data()).copied().collect(),
        )
        .unwrap();
        let numeric = finite_diff_grad(
            |p| {
                let tape = Tape::new();
                build(&tape, p, false, &bias, &ids, &targets).2.value().item().unwrap()
            },
            &params,
            1e-6,
        );
        let err = relative_error(&analytic, &numeric);
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn cross_entropy_of_uniform_logits_is_log_classes() {
        let tape = Tape::<f64>::new();
        let logits = tape.param(Tensor::zeros(vec![3, 5]));
        let loss = logits.cross_entropy(&[Some(0), Some(4), None], 2.0).unwrap();
        assert!((loss.value().item().unwrap() - 5f64.ln()).abs() < 1e-15);
    }
}
