use super::kernel::combine_block;
use crate::recurrence::{ArchKind, NormalizedGates};
use crate::tensor::{Scalar, Tensor};
use crate::{Error, Result};

/// One scan step: `H` dense `m×m` transitions (row-major) and `H` input vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanElement<F> {
    pub blocks: usize,
    pub m: usize,
    pub a: Vec<F>,
    pub b: Vec<F>,
}

/// Per-block identity transition with zero input.
pub fn scan_identity<F: Scalar>(blocks: usize, m: usize) -> ScanElement<F> {
    let mut a = vec![F::zero(); blocks * m * m];
    for blk in a.chunks_exact_mut(m * m) {
        for i in 0..m {
            blk[i * m + i] = F::one();
        }
    }
    ScanElement { blocks, m, a, b: vec![F::zero(); blocks * m] }
}

/// `c_i • c_j` for `c_i` earlier than `c_j`: `(A_j A_i, A_j b_i + b_j)` per block.
pub fn hop_combine<F: Scalar>(earlier: &ScanElement<F>, later: &ScanElement<F>) -> Result<ScanElement<F>> {
    if (earlier.blocks, earlier.m) != (later.blocks, later.m) {
        return Err(Error::shape(
            "hop_combine",
            format!("H×m {}×{} vs {}×{}", earlier.blocks, earlier.m, later.blocks, later.m),
        ));
    }
    let m = later.m;
    let mut out = later.clone();
    for k in 0..later.blocks {
        combine_block(
            m,
            &earlier.a[k * m * m..][..m * m],
            &earlier.b[k * m..][..m],
            &mut out.a[k * m * m..][..m * m],
            &mut out.b[k * m..][..m],
        );
    }
    Ok(out)
}

/// A whole sequence of scan elements, time-major: `a` is `[T, blocks, m, m]`
/// and `b` is `[T, blocks, m]`. A batch is folded into `blocks` as `batch·H`,
/// so `blocks` is always a multiple of `batch`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanSeq<F> {
    pub steps: usize,
    pub batch: usize,
    pub blocks: usize,
    pub m: usize,
    pub a: Vec<F>,
    pub b: Vec<F>,
}

impl<F: Scalar> ScanSeq<F> {
    pub fn from_elements(elems: &[ScanElement<F>]) -> Result<Self> {
        let first = elems.first().ok_or_else(|| Error::shape("scan", "empty element sequence"))?;
        let (blocks, m) = (first.blocks, first.m);
        let mut seq = ScanSeq { steps: elems.len(), batch: 1, blocks, m, a: Vec::new(), b: Vec::new() };
        for e in elems {
            if (e.blocks, e.m) != (blocks, m) {
                return Err(Error::shape("scan", "elements differ in H or m"));
            }
            seq.a.extend_from_slice(&e.a);
            seq.b.extend_from_slice(&e.b);
        }
        Ok(seq)
    }

    pub fn element(&self, t: usize) -> ScanElement<F> {
        let (na, nb) = (self.blocks * self.m * self.m, self.blocks * self.m);
        ScanElement {
            blocks: self.blocks,
            m: self.m,
            a: self.a[t * na..][..na].to_vec(),
            b: self.b[t * nb..][..nb].to_vec(),
        }
    }

    /// Elements of a layer call. For H-LRU each block is the companion matrix;
    /// for BD-LRU the gate rows are used directly. Block `(b, k)` lands at
    /// index `b·H + k`.
    pub fn from_gates(v: &Tensor<F>, gates: &NormalizedGates<F>) -> Result<Self> {
        let (batch, steps, h, m) = (gates.batch(), gates.steps(), gates.blocks(), gates.m);
        let want = match gates.kind {
            ArchKind::Hlru => vec![batch, steps, h],
            ArchKind::Bdlru => vec![batch, steps, h, m],
        };
        if v.shape() != want.as_slice() {
            return Err(Error::shape("scan elements", format!("values {:?}, expected {want:?}", v.shape())));
        }
        let blocks = batch * h;
        let mut a = vec![F::zero(); steps * blocks * m * m];
        let mut b = vec![F::zero(); steps * blocks * m];
        let g = gates.data.data();
        let vd = v.data();
        for bi in 0..batch {
            for t in 0..steps {
                for k in 0..h {
                    let src = bi * steps * h + t * h + k;
                    let dst = t * blocks + bi * h + k;
                    let ab = &mut a[dst * m * m..][..m * m];
                    let bb = &mut b[dst * m..][..m];
                    match gates.kind {
                        ArchKind::Hlru => {
                            let row = &g[src * (m + 1)..][..m + 1];
                            ab[..m].copy_from_slice(&row[1..]);
                            for i in 1..m {
                                ab[i * m + i - 1] = F::one();
                            }
                            bb[0] = row[0] * vd[src];
                        }
                        ArchKind::Bdlru => {
                            for i in 0..m {
                                let row = &g[(src * m + i) * (m + 1)..][..m + 1];
                                ab[i * m..][..m].copy_from_slice(&row[1..]);
                                bb[i] = row[0] * vd[src * m + i];
                            }
                        }
                    }
                }
            }
        }
        Ok(ScanSeq { steps, batch, blocks, m, a, b })
    }
}

/// Time-major `[T, batch·H, m]` states back to `[batch, T, H, m]`.
pub(crate) fn to_batch_major<F: Scalar>(states: &[F], steps: usize, batch: usize, h: usize, m: usize) -> Tensor<F> {
    let row = h * m;
    let mut out = vec![F::zero(); states.len()];
    for t in 0..steps {
        for bi in 0..batch {
            out[(bi * steps + t) * row..][..row].copy_from_slice(&states[(t * batch + bi) * row..][..row]);
        }
    }
    Tensor::new(vec![batch, steps, h, m], out).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    fn random(rng: &mut Rng, blocks: usize, m: usize) -> ScanElement<f64> {
        ScanElement {
            blocks,
            m,
            a: (0..blocks * m * m).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            b: (0..blocks * m).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        }
    }

    #[test]
    fn scalar_two_step_unroll() {
        let c1 = ScanElement { blocks: 1, m: 1, a: vec![2.0], b: vec![1.0] };
        let c2 = ScanElement { blocks: 1, m: 1, a: vec![3.0], b: vec![1.0] };
        let c = hop_combine(&c1, &c2).unwrap();
        assert_eq!((c.a, c.b), (vec![6.0], vec![4.0]));
    }

    #[test]
    fn identity_is_two_sided() {
        let mut rng = Rng::new(4);
        for m in [1, 2, 3, 4, 8] {
            let c = random(&mut rng, 3, m);
            let e = scan_identity(3, m);
            assert_eq!(hop_combine(&e, &c).unwrap(), c);
            assert_eq!(hop_combine(&c, &e).unwrap(), c);
        }
    }

    #[test]
    fn combine_is_associative() {
        let mut rng = Rng::new(6);
        for m in [1, 2, 3, 4, 5, 8] {
            let (c1, c2, c3) = (random(&mut rng, 2, m), random(&mut rng, 2, m), random(&mut rng, 2, m));
            let l = hop_combine(&hop_combine(&c1, &c2).unwrap(), &c3).unwrap();
            let r = hop_combine(&c1, &hop_combine(&c2, &c3).unwrap()).unwrap();
            for (x, y) in l.a.iter().chain(&l.b).zip(r.a.iter().chain(&r.b)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = scan_identity::<f64>(2, 2);
        let b = scan_identity::<f64>(2, 3);
        assert!(hop_combine(&a, &b).is_err());
    }
}
