use super::gates::{check_input, normalize_var};
use super::kernels::recurrence_var;
use super::{LayerConfig, LayerParams, LayerVars};
use crate::scan::{self, Executor};
use crate::tensor::{Scalar, Tape, Tensor, Var};
use crate::Result;

/// `y = flatten(states)` for input `x: [batch, T, d]`; output `[batch, T, H·m]`.
pub fn layer_forward<F: Scalar>(x: &Tensor<F>, params: &LayerParams<F>, cfg: &LayerConfig) -> Result<Tensor<F>> {
    layer_forward_with(x, params, cfg, Executor::Sequential)
}

/// [`layer_forward`] with the state sequence produced by `exec`.
pub fn layer_forward_with<F: Scalar>(
    x: &Tensor<F>,
    params: &LayerParams<F>,
    cfg: &LayerConfig,
    exec: Executor,
) -> Result<Tensor<F>> {
    let tape = Tape::new();
    let vars = params.attach(&tape, false);
    let y = layer_var(tape.constant(x.clone()), &vars, cfg, exec)?;
    let out = (*y.value()).clone();
    Ok(out)
}

/// Tape-recorded layer. The sequential executor uses the fused recurrence op;
/// the Blelloch executor records the combine tree.
pub fn layer_var<'t, F: Scalar>(
    x: Var<'t, F>,
    p: &LayerVars<'t, F>,
    cfg: &LayerConfig,
    exec: Executor,
) -> Result<Var<'t, F>> {
    cfg.validate()?;
    let (batch, steps) = check_input(&x.value(), cfg)?;
    let v = x.matmul(p.w_v)?.reshape(cfg.value_shape(batch, steps))?;
    let raw = match (cfg.selective, p.w_g) {
        (true, Some(w_g)) => x.matmul(w_g)?.add(p.gate_bias)?,
        (false, _) => p.gate_bias.broadcast_to(&[batch, steps, cfg.gate_width()])?,
        (true, None) => {
            return Err(crate::Error::Contract("selective layer is missing its gate projection".into()));
        }
    };
    let gates = normalize_var(raw.reshape(cfg.gate_shape(batch, steps))?, cfg.norm)?;
    let states = match exec {
        Executor::Sequential => recurrence_var(cfg.kind, v, gates)?,
        Executor::Blelloch { .. } => scan::scan_var(cfg.kind, v, gates)?,
    };
    states.reshape(vec![batch, steps, cfg.hidden()])
}
