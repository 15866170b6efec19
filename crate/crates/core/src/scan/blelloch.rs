use rayon::prelude::*;

use super::element::{to_batch_major, ScanSeq};
use super::kernel::{affine_block, combine_block};
use crate::recurrence::StateSequence;
use crate::tensor::Scalar;

/// Work counters of one Blelloch scan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScanStats {
    pub steps: usize,
    pub padded_steps: usize,
    /// `m×m` matrix-matrix products per block.
    pub matmuls_per_block: usize,
}

/// `h_t = A_t h_{t−1} + b_t` from `h_0 = 0`, one step at a time.
pub fn sequential_scan<F: Scalar>(seq: &ScanSeq<F>) -> StateSequence<F> {
    let (nb, m) = (seq.blocks, seq.m);
    let (ea, eb) = (nb * m * m, nb * m);
    let mut out = vec![F::zero(); seq.steps * eb];
    let mut prev = vec![F::zero(); eb];
    for t in 0..seq.steps {
        let row = &mut out[t * eb..][..eb];
        for k in 0..nb {
            affine_block(
                m,
                &seq.a[t * ea + k * m * m..][..m * m],
                &prev[k * m..][..m],
                &seq.b[t * eb + k * m..][..m],
                &mut row[k * m..][..m],
            );
        }
        prev.copy_from_slice(row);
    }
    to_batch_major(&out, seq.steps, seq.batch, nb / seq.batch, m)
}

/// Work-efficient Blelloch scan over the HOP operator.
///
/// The sequence is padded to a power of two with identity elements. The
/// up-sweep builds the combine tree in place. Because `h_0 = 0`, the
/// down-sweep only needs the `b` part of each exclusive prefix, so it
/// propagates state vectors. A final affine step per position turns the
/// exclusive prefixes into inclusive states.
///
/// `parallel` distributes each tree level over the rayon pool; the float
/// operations are the same either way.
pub fn blelloch_scan<F: Scalar>(seq: &ScanSeq<F>, parallel: bool) -> StateSequence<F> {
    blelloch_scan_with_stats(seq, parallel).0
}

pub fn blelloch_scan_with_stats<F: Scalar>(seq: &ScanSeq<F>, parallel: bool) -> (StateSequence<F>, ScanStats) {
    let (nb, m) = (seq.blocks, seq.m);
    let (ea, eb) = (nb * m * m, nb * m);
    let steps = seq.steps;
    let pad = steps.next_power_of_two().max(1);
    let mut stats = ScanStats { steps, padded_steps: pad, matmuls_per_block: 0 };

    let mut a = seq.a.clone();
    let mut b = seq.b.clone();
    a.reserve((pad - steps) * ea);
    for _ in steps..pad {
        for _ in 0..nb {
            for i in 0..m {
                for j in 0..m {
                    a.push(if i == j { F::one() } else { F::zero() });
                }
            }
        }
    }
    b.resize(pad * eb, F::zero());

    let combine_level = |ca: &mut [F], cb: &mut [F], half: usize| {
        let (la, ra) = ca.split_at_mut((2 * half - 1) * ea);
        let (lb, rb) = cb.split_at_mut((2 * half - 1) * eb);
        let la = &la[(half - 1) * ea..half * ea];
        let lb = &lb[(half - 1) * eb..half * eb];
        let body = |(((aj, bj), ai), bi): (((&mut [F], &mut [F]), &[F]), &[F])| combine_block(m, ai, bi, aj, bj);
        if parallel {
            ra.par_chunks_mut(m * m)
                .zip(rb.par_chunks_mut(m))
                .zip(la.par_chunks(m * m))
                .zip(lb.par_chunks(m))
                .for_each(body);
        } else {
            ra.chunks_mut(m * m).zip(rb.chunks_mut(m)).zip(la.chunks(m * m)).zip(lb.chunks(m)).for_each(body);
        }
    };

    let mut half = 1;
    while half < pad {
        let stride = 2 * half;
        if parallel {
            a.par_chunks_mut(stride * ea)
                .zip(b.par_chunks_mut(stride * eb))
                .for_each(|(ca, cb)| combine_level(ca, cb, half));
        } else {
            a.chunks_mut(stride * ea).zip(b.chunks_mut(stride * eb)).for_each(|(ca, cb)| combine_level(ca, cb, half));
        }
        stats.matmuls_per_block += pad / stride;
        half = stride;
    }

    // Exclusive prefix states; the root's exclusive prefix is h_0 = 0.
    let mut e = vec![F::zero(); pad * eb];
    let down_level = |ce: &mut [F], ca: &[F], cb: &[F], half: usize| {
        let (le, re) = ce.split_at_mut((2 * half - 1) * eb);
        let le = &mut le[(half - 1) * eb..half * eb];
        le.copy_from_slice(re);
        let la = &ca[(half - 1) * ea..half * ea];
        let lb = &cb[(half - 1) * eb..half * eb];
        for k in 0..nb {
            affine_block(m, &la[k * m * m..][..m * m], &le[k * m..][..m], &lb[k * m..][..m], &mut re[k * m..][..m]);
        }
    };
    let mut half = pad / 2;
    while half >= 1 {
        let stride = 2 * half;
        if parallel {
            e.par_chunks_mut(stride * eb)
                .zip(a.par_chunks(stride * ea))
                .zip(b.par_chunks(stride * eb))
                .for_each(|((ce, ca), cb)| down_level(ce, ca, cb, half));
        } else {
            e.chunks_mut(stride * eb)
                .zip(a.chunks(stride * ea))
                .zip(b.chunks(stride * eb))
                .for_each(|((ce, ca), cb)| down_level(ce, ca, cb, half));
        }
        half /= 2;
    }

    let mut out = vec![F::zero(); steps * eb];
    let finish = |(t, row): (usize, &mut [F])| {
        for k in 0..nb {
            affine_block(
                m,
                &seq.a[t * ea + k * m * m..][..m * m],
                &e[t * eb + k * m..][..m],
                &seq.b[t * eb + k * m..][..m],
                &mut row[k * m..][..m],
            );
        }
    };
    if parallel {
        out.par_chunks_mut(eb).enumerate().for_each(finish);
    } else {
        out.chunks_mut(eb).enumerate().for_each(finish);
    }
    (to_batch_major(&out, steps, seq.batch, nb / seq.batch, m), stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recurrence::{hlru_forward, normalize_gates, ArchKind, NormFn, NormalizedGates};
    use crate::scan::{hop_combine, scan_identity, ScanElement};
    use crate::tensor::{Rng, Tensor};

    fn random_seq(rng: &mut Rng, steps: usize, blocks: usize, m: usize) -> ScanSeq<f64> {
        // Normalized BD-LRU rows keep long products bounded.
        let raw = Tensor::from_fn(vec![1, steps, blocks, m, m + 1], |_| rng.uniform(-2.0, 2.0));
        let g = normalize_gates(&raw, ArchKind::Bdlru, NormFn::SigmoidL1).unwrap();
        let v = Tensor::from_fn(vec![1, steps, blocks, m], |_| rng.uniform(-1.0, 1.0));
        ScanSeq::from_gates(&v, &g).unwrap()
    }

    #[test]
    fn single_step_is_input() {
        let mut rng = Rng::new(1);
        let seq = random_seq(&mut rng, 1, 3, 2);
        let h = blelloch_scan(&seq, false);
        assert_eq!(h.data(), seq.b.as_slice());
    }

    #[test]
    fn memoryless_when_transitions_vanish() {
        let mut rng = Rng::new(2);
        let mut seq = random_seq(&mut rng, 7, 2, 3);
        seq.a.iter_mut().for_each(|x| *x = 0.0);
        let h = blelloch_scan(&seq, true);
        assert_eq!(h.data(), seq.b.as_slice());
    }

    #[test]
    fn identity_elements_give_zero_states() {
        let elems: Vec<ScanElement<f64>> = (0..6).map(|_| scan_identity(2, 3)).collect();
        let seq = ScanSeq::from_elements(&elems).unwrap();
        assert!(blelloch_scan(&seq, false).data().iter().all(|&x| x == 0.0));
        assert!(sequential_scan(&seq).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn matches_sequential_on_grid() {
        let mut rng = Rng::new(7);
        for m in [1, 2, 3, 5, 8] {
            for steps in [1, 2, 5, 31, 64, 100] {
                let seq = random_seq(&mut rng, steps, 4, m);
                let want = sequential_scan(&seq);
                let (got, stats) = blelloch_scan_with_stats(&seq, false);
                assert!(got.max_abs_diff(&want).unwrap() < 1e-12, "m={m} T={steps}");
                assert!(stats.matmuls_per_block <= 2 * stats.padded_steps);
                assert_eq!(blelloch_scan(&seq, true), got);
            }
        }
    }

    #[test]
    fn padding_is_neutral() {
        let mut rng = Rng::new(8);
        let seq = random_seq(&mut rng, 5, 2, 2);
        let mut longer = seq.clone();
        let id = scan_identity::<f64>(2, 2);
        for _ in 0..3 {
            longer.a.extend_from_slice(&id.a);
            longer.b.extend_from_slice(&id.b);
        }
        longer.steps = 8;
        let short = blelloch_scan(&seq, false);
        let long = blelloch_scan(&longer, false);
        assert_eq!(short.data(), &long.data()[..short.len()]);
    }

    #[test]
    fn scalar_closed_form() {
        // h_4 = a4 a3 a2 b1 + a4 a3 b2 + a4 b3 + b4
        let (a, b): ([f64; 4], [f64; 4]) = ([0.5, 0.25, 2.0, 0.75], [1.0, -2.0, 0.5, 3.0]);
        let elems: Vec<_> = (0..4).map(|t| ScanElement { blocks: 1, m: 1, a: vec![a[t]], b: vec![b[t]] }).collect();
        let seq = ScanSeq::from_elements(&elems).unwrap();
        let closed = a[3] * a[2] * a[1] * b[0] + a[3] * a[2] * b[1] + a[3] * b[2] + b[3];
        assert_eq!(sequential_scan(&seq).data()[3], closed);
        assert!((blelloch_scan(&seq, false).data()[3] - closed).abs() < 1e-15);
        let folded = elems.iter().skip(1).fold(elems[0].clone(), |acc, e| hop_combine(&acc, e).unwrap());
        assert!((folded.b[0] - closed).abs() < 1e-15);
    }

    #[test]
    fn sequential_scan_equals_layer_recurrence_exactly() {
        let mut rng = Rng::new(12);
        let raw = Tensor::<f64>::from_fn(vec![2, 9, 3, 4], |_| rng.uniform(-2.0, 2.0));
        let g: NormalizedGates<f64> = normalize_gates(&raw, ArchKind::Hlru, NormFn::Softmax).unwrap();
        let v = Tensor::from_fn(vec![2, 9, 3], |_| rng.uniform(-1.0, 1.0));
        let seq = ScanSeq::from_gates(&v, &g).unwrap();
        assert_eq!(sequential_scan(&seq), hlru_forward(&v, &g).unwrap());
    }
}
