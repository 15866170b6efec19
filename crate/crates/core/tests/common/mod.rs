#![allow(dead_code)]

use blocklru::recurrence::{normalize_gates, ArchKind, NormFn, NormalizedGates};
use blocklru::scan::Executor;
use blocklru::tensor::{finite_diff_grad, relative_error};
use blocklru::training::{HeadKind, Model, ModelConfig};
use blocklru::{recurrence::LayerConfig, Rng, Tape, Tensor};

pub fn gate_shape(kind: ArchKind, b: usize, t: usize, h: usize, m: usize) -> Vec<usize> {
    match kind {
        ArchKind::Hlru => vec![b, t, h, m + 1],
        ArchKind::Bdlru => vec![b, t, h, m, m + 1],
    }
}

pub fn value_shape(kind: ArchKind, b: usize, t: usize, h: usize, m: usize) -> Vec<usize> {
    match kind {
        ArchKind::Hlru => vec![b, t, h],
        ArchKind::Bdlru => vec![b, t, h, m],
    }
}

pub fn uniform(rng: &mut Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.uniform(lo, hi))
}

/// Normalized gates from raw logits uniform in `[lo, hi]`.
#[allow(clippy::too_many_arguments)]
pub fn random_gates(
    rng: &mut Rng,
    kind: ArchKind,
    norm: NormFn,
    b: usize,
    t: usize,
    h: usize,
    m: usize,
    range: (f64, f64),
) -> NormalizedGates<f64> {
    let raw = uniform(rng, gate_shape(kind, b, t, h, m), range.0, range.1);
    normalize_gates(&raw, kind, norm).unwrap()
}

/// Tiny decoder model used by the full-model gradient check.
pub fn tiny_model_config(kind: ArchKind) -> ModelConfig {
    let (vocab, d, h, m) = (4, 8, 2, 2);
    let mut layer = LayerConfig::new(kind, m, h, NormFn::Softmax, d);
    layer.selective = true;
    ModelConfig {
        layer,
        embed_dim: d,
        head: HeadKind::DecoderMlp,
        mlp_hidden: 2 * d,
        vocab,
        classes: vocab,
        out_slots: 0,
    }
}

/// Relative error between backward and central differences over all parameters
/// of a vocab-4, T=8, d=8, H=2, m=2 model.
pub fn model_gradcheck(kind: ArchKind, seed: u64) -> f64 {
    let cfg = tiny_model_config(kind);
    let mut rng = Rng::new(seed);
    let model = Model::<f64>::init(&cfg, &mut rng).unwrap();
    let (batch, len) = (2, 8);
    let tokens: Vec<u16> = (0..batch * len).map(|_| rng.below(4) as u16).collect();
    let targets: Vec<Option<usize>> = (0..batch * len).map(|i| (i % 3 != 1).then(|| rng.below(4))).collect();
    let loss = |m: &Model<f64>| -> (f64, Vec<Tensor<f64>>) {
        let tape = Tape::new();
        let vars = m.attach(&tape, true);
        let logits = m.forward(&vars, &tokens, batch, len, Executor::Sequential).unwrap();
        let l = logits.reshape(vec![batch * len, 4]).unwrap().cross_entropy(&targets, 10.0).unwrap();
        let mut g = tape.backward(&l).unwrap();
        let grads = vars.iter().map(|v| g.take(v).unwrap()).collect();
        (l.value().item().unwrap(), grads)
    };
    let (_, analytic) = loss(&model);
    let mut a_all = Vec::new();
    let mut n_all = Vec::new();
    for (p, g) in analytic.iter().enumerate() {
        let numeric = finite_diff_grad(
            |x: &Tensor<f64>| {
                let mut probe = model.clone();
                probe.params[p] = x.clone();
                loss(&probe).0
            },
            &model.params[p],
            1e-5,
        );
        a_all.extend_from_slice(g.data());
        n_all.extend_from_slice(numeric.data());
    }
    let n = a_all.len();
    relative_error(&Tensor::new(vec![n], a_all).unwrap(), &Tensor::new(vec![n], n_all).unwrap())
}

/// One stability trial: returns `(‖h_T‖∞, max_t ‖v_t‖∞)` for a single sequence.
pub fn stability_trial(
    rng: &mut Rng,
    kind: ArchKind,
    norm: NormFn,
    m: usize,
    steps: usize,
    blocks: usize,
) -> (f64, f64) {
    let range = if norm == NormFn::None { (0.0, 2.0) } else { (-10.0, 10.0) };
    let gates = random_gates(rng, kind, norm, 1, steps, blocks, m, range);
    let v = uniform(rng, value_shape(kind, 1, steps, blocks, m), -10.0, 10.0);
    let states = match kind {
        ArchKind::Hlru => blocklru::recurrence::hlru_forward(&v, &gates).unwrap(),
        ArchKind::Bdlru => blocklru::recurrence::bdlru_forward(&v, &gates).unwrap(),
    };
    // Final state h_T: lane 0 of each H-LRU channel, the full block for BD-LRU.
    let last = &states.data()[(steps - 1) * blocks * m..];
    let h_t = match kind {
        ArchKind::Hlru => last.chunks(m).map(|c| c[0].abs()).fold(0.0, f64::max),
        ArchKind::Bdlru => last.iter().map(|x| x.abs()).fold(0.0, f64::max),
    };
    (h_t, v.max_abs())
}
