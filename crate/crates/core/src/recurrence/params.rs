use super::LayerConfig;
use crate::tensor::{Rng, Scalar, Tape, Tensor, Var};

/// Trainable tensors of one recurrent layer.
///
/// `w_g` is absent for non-selective layers; `gate_bias` then holds the
/// learned per-block gate constants instead of a projection bias.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<F: Scalar> {
    /// `[d, value_width]`
    pub w_v: Tensor<F>,
    /// `[d, gate_width]`
    pub w_g: Option<Tensor<F>>,
    /// `[gate_width]`
    pub gate_bias: Tensor<F>,
}

impl<F: Scalar> LayerParams<F> {
    /// Weights uniform in ±1/√d; gate biases (or constants) zero, so every
    /// normalized gate starts at mass 1/(m+1).
    pub fn init(cfg: &LayerConfig, rng: &mut Rng) -> Self {
        let d = cfg.input_dim;
        let bound = 1.0 / (d as f64).sqrt();
        let mut uniform = |shape: Vec<usize>| Tensor::from_fn(shape, |_| F::from_f64(rng.uniform(-bound, bound)));
        let w_v = uniform(vec![d, cfg.value_width()]);
        let w_g = cfg.selective.then(|| uniform(vec![d, cfg.gate_width()]));
        LayerParams { w_v, w_g, gate_bias: Tensor::zeros(vec![cfg.gate_width()]) }
    }

    pub fn attach<'t>(&self, tape: &'t Tape<F>, trainable: bool) -> LayerVars<'t, F> {
        LayerVars {
            w_v: tape.leaf(self.w_v.clone(), trainable),
            w_g: self.w_g.as_ref().map(|w| tape.leaf(w.clone(), trainable)),
            gate_bias: tape.leaf(self.gate_bias.clone(), trainable),
        }
    }
}

/// [`LayerParams`] recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars<'t, F: Scalar> {
    pub w_v: Var<'t, F>,
    pub w_g: Option<Var<'t, F>>,
    pub gate_bias: Var<'t, F>,
}
