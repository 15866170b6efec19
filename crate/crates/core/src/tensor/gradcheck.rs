use super::{Scalar, Tensor};

/// Central differences `(f(x+δe_i) − f(x−δe_i)) / 2δ` for every coordinate `i`.
pub fn finite_diff_grad<F: Scalar>(f: impl Fn(&Tensor<F>) -> F, x: &Tensor<F>, step: F) -> Tensor<F> {
    assert!(step > F::zero(), "finite-difference step must be positive");
    let two = F::one() + F::one();
    let base = x.data().to_vec();
    let grad = (0..base.len())
        .map(|i| {
            let mut probe = base.clone();
            probe[i] = base[i] + step;
            let up = f(&Tensor::new(x.shape().to_vec(), probe.clone()).expect("same shape"));
            probe[i] = base[i] - step;
            let down = f(&Tensor::new(x.shape().to_vec(), probe).expect("same shape"));
            (up - down) / (two * step)
        })
        .collect();
    Tensor::new(x.shape().to_vec(), grad).expect("same shape")
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, zero when both vanish.
pub fn relative_error<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> f64 {
    let norm = |t: &Tensor<F>| t.data().iter().map(|x| x.as_f64().powi(2)).sum::<f64>().sqrt();
    let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
