use std::fmt;

use super::Scalar;
use crate::{Error, Result};

/// Dense row-major array. Immutable once built; every op returns a new value.
#[derive(Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor<{}>{:?}", F::NAME, self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl<F: Scalar> Tensor<F> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<F>) -> Result<Self> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape("Tensor::new", format!("shape {shape:?} holds {n} values, got {}", data.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, F::zero())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: F) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Tensor { shape, data: vec![value; n] }
    }

    pub fn scalar(value: F) -> Self {
        Tensor { shape: Vec::new(), data: vec![value] }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> F) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        Tensor { shape, data: (0..n).map(&mut f).collect() }
    }

    /// Convenience for tests and literals: `Tensor::from_f64(&[2, 2], &[1., 0., 0., 1.])`.
    pub fn from_f64(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), values.iter().map(|&x| F::from_f64(x)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<F> {
        if self.data.len() != 1 {
            return Err(Error::shape("item", format!("expected one element, shape {:?}", self.shape)));
        }
        Ok(self.data[0])
    }

    pub fn at(&self, index: &[usize]) -> F {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut off = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            assert!(i < d, "index {index:?} out of bounds for {:?}", self.shape);
            off = off * d + i;
        }
        self.data[off]
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn into_reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| G::from_f64(x.as_f64())).collect() }
    }

    pub fn sum(&self) -> F {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> F {
        self.data.iter().fold(F::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor<F>) -> Result<F> {
        if self.shape != other.shape {
            return Err(Error::shape("max_abs_diff", format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(self.data.iter().zip(&other.data).fold(F::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    /// Elementwise binary op with trailing-dimension broadcasting.
    pub fn zip_with(&self, other: &Tensor<F>, op: &'static str, f: impl Fn(F, F) -> F) -> Result<Self> {
        if self.shape == other.shape {
            let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
            return Ok(Tensor { shape: self.shape.clone(), data });
        }
        let out = broadcast_shapes(&self.shape, &other.shape)
            .ok_or_else(|| Error::shape(op, format!("cannot broadcast {:?} with {:?}", self.shape, other.shape)))?;
        let mut data = Vec::with_capacity(out.iter().product());
        if out == self.shape && is_suffix(&other.shape, &self.shape) {
            for chunk in self.data.chunks(other.data.len().max(1)) {
                data.extend(chunk.iter().zip(&other.data).map(|(&a, &b)| f(a, b)));
            }
        } else if out == other.shape && is_suffix(&self.shape, &other.shape) {
            for chunk in other.data.chunks(self.data.len().max(1)) {
                data.extend(self.data.iter().zip(chunk).map(|(&a, &b)| f(a, b)));
            }
        } else {
            let sa = broadcast_strides(&self.shape, &out);
            let sb = broadcast_strides(&other.shape, &out);
            for_each_offset2(&out, &sa, &sb, |ia, ib| data.push(f(self.data[ia], other.data[ib])));
        }
        Ok(Tensor { shape: out, data })
    }

    /// Sum over broadcast dimensions so that the result has `shape`.
    /// Inverse of broadcasting `shape` up to `self.shape()`.
    pub fn sum_to_shape(&self, shape: &[usize]) -> Result<Self> {
        if self.shape == shape {
            return Ok(self.clone());
        }
        match broadcast_shapes(shape, &self.shape) {
            Some(ref s) if *s == self.shape => {}
            _ => {
                return Err(Error::shape("sum_to_shape", format!("{:?} does not broadcast to {:?}", shape, self.shape)))
            }
        }
        let n: usize = shape.iter().product();
        let mut acc = vec![F::zero(); n];
        if is_suffix(shape, &self.shape) {
            for chunk in self.data.chunks(n.max(1)) {
                for (a, &g) in acc.iter_mut().zip(chunk) {
                    *a += g;
                }
            }
        } else {
            let s = broadcast_strides(shape, &self.shape);
            let zero = vec![0; self.shape.len()];
            let mut i = 0;
            for_each_offset2(&self.shape, &s, &zero, |ia, _| {
                acc[ia] += self.data[i];
                i += 1;
            });
        }
        Tensor::new(shape.to_vec(), acc)
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Self> {
        match broadcast_shapes(&self.shape, shape) {
            Some(ref s) if s == shape => {}
            _ => {
                return Err(Error::shape("broadcast_to", format!("{:?} does not broadcast to {:?}", self.shape, shape)))
            }
        }
        let z = Tensor::zeros(shape.to_vec());
        z.zip_with(self, "broadcast_to", |_, b| b)
    }

    /// Batched matrix product over the last two axes; leading axes broadcast.
    pub fn matmul(&self, other: &Tensor<F>) -> Result<Self> {
        matmul_t(self, false, other, false)
    }

    /// Rows `indices` of `axis`, in order (repeats allowed).
    pub fn index_select(&self, axis: usize, indices: &[usize]) -> Result<Self> {
        if axis >= self.ndim() {
            return Err(Error::shape("index_select", format!("axis {axis} for {:?}", self.shape)));
        }
        let dim = self.shape[axis];
        if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
            return Err(Error::shape("index_select", format!("index {bad} >= {dim}")));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices {
                let start = (o * dim + i) * inner;
                data.extend_from_slice(&self.data[start..start + inner]);
            }
        }
        let mut shape = self.shape.clone();
        shape[axis] = indices.len();
        Tensor::new(shape, data)
    }

    /// Copy of `self` with rows `indices` of axis 0 replaced by the rows of `src`.
    pub fn scatter_rows(&self, indices: &[usize], src: &Tensor<F>) -> Result<Self> {
        let (rows, inner) = self.split_first("scatter_rows")?;
        if src.shape.first() != Some(&indices.len()) || src.shape[1..] != self.shape[1..] {
            return Err(Error::shape(
                "scatter_rows",
                format!("src {:?} for {} rows of {:?}", src.shape, indices.len(), self.shape),
            ));
        }
        let mut data = self.data.clone();
        for (r, &i) in indices.iter().enumerate() {
            if i >= rows {
                return Err(Error::shape("scatter_rows", format!("row {i} >= {rows}")));
            }
            data[i * inner..(i + 1) * inner].copy_from_slice(&src.data[r * inner..(r + 1) * inner]);
        }
        Tensor::new(self.shape.clone(), data)
    }

    /// Swap the first two axes.
    pub fn swap_axes01(&self) -> Result<Self> {
        if self.ndim() < 2 {
            return Err(Error::shape("swap_axes01", format!("rank {} < 2", self.ndim())));
        }
        let (a, b) = (self.shape[0], self.shape[1]);
        let inner: usize = self.shape[2..].iter().product();
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..b {
            for i in 0..a {
                let s = (i * b + j) * inner;
                data.extend_from_slice(&self.data[s..s + inner]);
            }
        }
        let mut shape = self.shape.clone();
        shape.swap(0, 1);
        Tensor::new(shape, data)
    }

    fn split_first(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.first() {
            Some(&rows) => Ok((rows, self.shape[1..].iter().product())),
            None => Err(Error::shape(op, "rank-0 tensor")),
        }
    }
}

pub(crate) fn is_suffix(short: &[usize], long: &[usize]) -> bool {
    short.len() <= long.len() && long[long.len() - short.len()..] == *short
}

/// Trailing-dimension broadcasting; `None` when incompatible.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let db = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Element strides of `shape` aligned to `out`, zero on broadcast axes.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; out.len()];
    let off = out.len() - shape.len();
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[off + i] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

fn for_each_offset2(shape: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize)) {
    let total: usize = shape.iter().product();
    if total == 0 {
        return;
    }
    let nd = shape.len();
    let mut idx = vec![0; nd];
    let (mut ia, mut ib) = (0usize, 0usize);
    for _ in 0..total {
        f(ia, ib);
        for d in (0..nd).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < shape[d] {
                break;
            }
            ia -= sa[d] * shape[d];
            ib -= sb[d] * shape[d];
            idx[d] = 0;
        }
    }
}

const SMALL_GEMM: usize = 512;

/// `op(a) · op(b)` with optional transposition of the last two axes of each side.
pub(crate) fn matmul_t<F: Scalar>(a: &Tensor<F>, ta: bool, b: &Tensor<F>, tb: bool) -> Result<Tensor<F>> {
    if a.ndim() < 2 || b.ndim() < 2 {
        return Err(Error::shape(
            "matmul",
            format!("operands must be at least 2-d, got {:?} and {:?}", a.shape, b.shape),
        ));
    }
    let (ar, ac) = (a.shape[a.ndim() - 2], a.shape[a.ndim() - 1]);
    let (br, bc) = (b.shape[b.ndim() - 2], b.shape[b.ndim() - 1]);
    let (p, q) = if ta { (ac, ar) } else { (ar, ac) };
    let (q2, r) = if tb { (bc, br) } else { (br, bc) };
    if q != q2 {
        return Err(Error::shape("matmul", format!("inner dims differ: {:?} x {:?}", a.shape, b.shape)));
    }
    let abatch = &a.shape[..a.ndim() - 2];
    let bbatch = &b.shape[..b.ndim() - 2];
    let batch = broadcast_shapes(abatch, bbatch)
        .ok_or_else(|| Error::shape("matmul", format!("batch dims do not broadcast: {:?} x {:?}", a.shape, b.shape)))?;
    let a_str = if ta { (1, ac as isize) } else { (ac as isize, 1) };
    let b_str = if tb { (1, bc as isize) } else { (bc as isize, 1) };
    let mut shape = batch.clone();
    shape.extend([p, r]);

    // A 2-d right operand lets untransposed batched lhs collapse into one gemm.
    if bbatch.is_empty() && !ta {
        let rows: usize = abatch.iter().product::<usize>() * p;
        let mut out = vec![F::zero(); rows * r];
        gemm(rows, q, r, &a.data, a_str, &b.data, b_str, &mut out);
        return Tensor::new(shape, out);
    }

    let nb: usize = batch.iter().product();
    let mut out = vec![F::zero(); nb * p * r];
    let sa = broadcast_strides(abatch, &batch);
    let sb = broadcast_strides(bbatch, &batch);
    let (asz, bsz) = (ar * ac, br * bc);
    let mut k = 0;
    let mut run = |ia: usize, ib: usize| {
        gemm(
            p,
            q,
            r,
            &a.data[ia * asz..(ia + 1) * asz],
            a_str,
            &b.data[ib * bsz..(ib + 1) * bsz],
            b_str,
            &mut out[k * p * r..(k + 1) * p * r],
        );
        k += 1;
    };
    if batch.is_empty() {
        run(0, 0);
    } else {
        for_each_offset2(&batch, &sa, &sb, run);
    }
    Tensor::new(shape, out)
}

#[allow(clippy::too_many_arguments)]
fn gemm<F: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[F],
    sa: (isize, isize),
    b: &[F],
    sb: (isize, isize),
    c: &mut [F],
) {
    if m * k * n <= SMALL_GEMM {
        for i in 0..m {
            for j in 0..n {
                let mut acc = F::zero();
                for l in 0..k {
                    let x = a[(i as isize * sa.0 + l as isize * sa.1) as usize];
                    let y = b[(l as isize * sb.0 + j as isize * sb.1) as usize];
                    acc += x * y;
                }
                c[i * n + j] = acc;
            }
        }
    } else {
        F::gemm(m, k, n, a, sa, b, sb, c, false);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    fn triple_loop(a: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
        let (p, q) = (a.shape()[0], a.shape()[1]);
        let r = b.shape()[1];
        Tensor::from_fn(vec![p, r], |idx| {
            let (i, j) = (idx / r, idx % r);
            (0..q).map(|l| a.at(&[i, l]) * b.at(&[l, j])).sum()
        })
    }

    #[test]
    fn matmul_identity_and_permutation() {
        let x = Tensor::<f64>::from_f64(&[2, 1], &[3., 4.]).unwrap();
        let id = Tensor::from_f64(&[2, 2], &[1., 0., 0., 1.]).unwrap();
        let swap = Tensor::from_f64(&[2, 2], &[0., 1., 1., 0.]).unwrap();
        assert_eq!(id.matmul(&x).unwrap().data(), &[3., 4.]);
        assert_eq!(swap.matmul(&x).unwrap().data(), &[4., 3.]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = Rng::new(7);
        for (p, q, r) in [(3, 3, 3), (17, 33, 9), (40, 20, 30)] {
            let a = Tensor::from_fn(vec![p, q], |_| rng.uniform(-1.0, 1.0));
            let b = Tensor::from_fn(vec![q, r], |_| rng.uniform(-1.0, 1.0));
            let diff = a.matmul(&b).unwrap().max_abs_diff(&triple_loop(&a, &b)).unwrap();
            assert!(diff < 1e-12, "{p}x{q}x{r}: {diff}");
        }
    }

    #[test]
    fn matmul_broadcasts_batch_dims() {
        let mut rng = Rng::new(3);
        let a = Tensor::<f64>::from_fn(vec![2, 3, 4, 5], |_| rng.uniform(-1.0, 1.0));
        let b = Tensor::<f64>::from_fn(vec![3, 5, 2], |_| rng.uniform(-1.0, 1.0));
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 3, 4, 2]);
        for i in 0..2 {
            for j in 0..3 {
                let ai = a.index_select(0, &[i]).unwrap().index_select(1, &[j]).unwrap().reshape(vec![4, 5]).unwrap();
                let bj = b.index_select(0, &[j]).unwrap().reshape(vec![5, 2]).unwrap();
                let cij = c.index_select(0, &[i]).unwrap().index_select(1, &[j]).unwrap().reshape(vec![4, 2]).unwrap();
                assert!(cij.max_abs_diff(&triple_loop(&ai, &bj)).unwrap() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let a = Tensor::<f64>::zeros(vec![2, 3]);
        let b = Tensor::<f64>::zeros(vec![2, 3]);
        assert!(matches!(a.matmul(&b), Err(Error::Shape { .. })));
    }

    #[test]
    fn transposed_matmul_matches_explicit() {
        let mut rng = Rng::new(11);
        let a = Tensor::<f64>::from_fn(vec![6, 4], |_| rng.uniform(-1.0, 1.0));
        let b = Tensor::<f64>::from_fn(vec![6, 5], |_| rng.uniform(-1.0, 1.0));
        let at = Tensor::from_fn(vec![4, 6], |i| a.at(&[i % 6, i / 6]));
        let got = matmul_t(&a, true, &b, false).unwrap();
        assert!(got.max_abs_diff(&triple_loop(&at, &b)).unwrap() < 1e-12);
    }

    #[test]
    fn broadcasting_and_reduction_round_trip() {
        let a = Tensor::<f64>::from_f64(&[2, 3], &[1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::<f64>::from_f64(&[3], &[10., 20., 30.]).unwrap();
        let c = a.zip_with(&b, "add", |x, y| x + y).unwrap();
        assert_eq!(c.data(), &[11., 22., 33., 14., 25., 36.]);
        assert_eq!(c.sum_to_shape(&[3]).unwrap().data(), &[25., 47., 69.]);

        let col = Tensor::<f64>::from_f64(&[2, 1], &[1., 2.]).unwrap();
        let row = Tensor::<f64>::from_f64(&[1, 3], &[1., 2., 3.]).unwrap();
        let outer = col.zip_with(&row, "mul", |x, y| x * y).unwrap();
        assert_eq!(outer.data(), &[1., 2., 3., 2., 4., 6.]);
        assert_eq!(outer.sum_to_shape(&[2, 1]).unwrap().data(), &[6., 12.]);
        assert!(broadcast_shapes(&[2, 3], &[2]).is_none());
    }

    #[test]
    fn select_scatter_and_swap() {
        let t = Tensor::<f64>::from_fn(vec![3, 2, 2], |i| i as f64);
        let s = t.index_select(0, &[2, 0]).unwrap();
        assert_eq!(s.data(), &[8., 9., 10., 11., 0., 1., 2., 3.]);
        let back = t.scatter_rows(&[1], &s.index_select(0, &[0]).unwrap()).unwrap();
        assert_eq!(&back.data()[4..8], &[8., 9., 10., 11.]);
        let w = t.swap_axes01().unwrap();
        assert_eq!(w.shape(), &[2, 3, 2]);
        assert_eq!(w.at(&[1, 2, 0]), t.at(&[2, 1, 0]));
    }
}
