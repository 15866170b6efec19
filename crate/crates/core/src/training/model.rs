use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::recurrence::{layer_var, ArchKind, LayerConfig, LayerParams, LayerVars, NormFn};
use crate::scan::Executor;
use crate::tasks::{TaskKind, TaskSpec};
use crate::tensor::{Rng, Scalar, Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Per-position MLP decoder on the layer output.
    DecoderMlp,
    /// MLP encoder of the final state, then a per-slot MLP decoder (compression).
    EncoderDecoderMlp,
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadKind::DecoderMlp => "decoder_mlp",
            HeadKind::EncoderDecoderMlp => "encoder_decoder_mlp",
        })
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decoder_mlp" => Ok(HeadKind::DecoderMlp),
            "encoder_decoder_mlp" => Ok(HeadKind::EncoderDecoderMlp),
            other => Err(Error::spec("head", format!("unknown head {other:?}"))),
        }
    }
}

/// Single-layer model: embedding, one recurrent layer, MLP head(s).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layer: LayerConfig,
    pub embed_dim: usize,
    pub head: HeadKind,
    /// Hidden width of every MLP; `2·embed_dim` by default.
    pub mlp_hidden: usize,
    /// Input vocabulary.
    pub vocab: usize,
    /// Output classes.
    pub classes: usize,
    /// Decoder slots of the encoder-decoder head; 0 for the plain decoder.
    pub out_slots: usize,
}

impl ModelConfig {
    /// Model sized for `task`, with the head the task needs.
    pub fn for_task(
        task: &TaskSpec,
        kind: ArchKind,
        m: usize,
        blocks: usize,
        norm: NormFn,
        selective: bool,
        embed_dim: usize,
    ) -> Self {
        let mut layer = LayerConfig::new(kind, m, blocks, norm, embed_dim);
        layer.selective = selective;
        let compression = task.kind == TaskKind::Compression;
        ModelConfig {
            layer,
            embed_dim,
            head: if compression { HeadKind::EncoderDecoderMlp } else { HeadKind::DecoderMlp },
            mlp_hidden: 2 * embed_dim,
            vocab: task.vocab_size,
            classes: task.num_classes(),
            out_slots: if compression { task.target_len() } else { 0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layer.validate()?;
        if self.layer.input_dim != self.embed_dim {
            return Err(Error::spec("embed_dim", "layer input width must equal the embedding width"));
        }
        if self.embed_dim == 0 || self.mlp_hidden == 0 || self.vocab == 0 || self.classes == 0 {
            return Err(Error::spec("model", "embed_dim, mlp_hidden, vocab and classes must be positive"));
        }
        match (self.head, self.out_slots) {
            (HeadKind::EncoderDecoderMlp, 0) => {
                Err(Error::spec("out_slots", "encoder-decoder head needs decoder slots"))
            }
            (HeadKind::DecoderMlp, s) if s != 0 => {
                Err(Error::spec("out_slots", "only the encoder-decoder head has slots"))
            }
            _ => Ok(()),
        }
    }

    /// Check that the model fits the task of a dataset.
    pub fn check_task(&self, task: &TaskSpec) -> Result<()> {
        let want_head =
            if task.kind == TaskKind::Compression { HeadKind::EncoderDecoderMlp } else { HeadKind::DecoderMlp };
        if self.head != want_head {
            return Err(Error::spec(
                "head",
                format!("{} needs the {want_head} head, model has {}", task.kind, self.head),
            ));
        }
        if self.vocab != task.vocab_size || self.classes != task.num_classes() {
            return Err(Error::spec(
                "vocab_size",
                format!(
                    "model vocab/classes {}/{} do not match task {}/{}",
                    self.vocab,
                    self.classes,
                    task.vocab_size,
                    task.num_classes()
                ),
            ));
        }
        if self.head == HeadKind::EncoderDecoderMlp && self.out_slots != task.target_len() {
            return Err(Error::spec("seq_len", "decoder slots differ from the task length"));
        }
        Ok(())
    }

    /// Closed-form parameter count.
    ///
    /// `V·d + layer + head`, where the decoder head is `N·h + h + h·C + C` and
    /// the encoder-decoder head is `(N·h + h + h·d + d) + S·d + (d·h + h + h·C + C)`.
    pub fn param_count(&self) -> usize {
        let (d, h, c, n) = (self.embed_dim, self.mlp_hidden, self.classes, self.layer.hidden());
        let body = self.vocab * d + self.layer.param_count();
        body + match self.head {
            HeadKind::DecoderMlp => n * h + h + h * c + c,
            HeadKind::EncoderDecoderMlp => (n * h + h + h * d + d) + self.out_slots * d + (d * h + h + h * c + c),
        }
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<F: Scalar> {
    pub cfg: ModelConfig,
    pub names: Vec<String>,
    pub params: Vec<Tensor<F>>,
}

fn uniform<F: Scalar>(rng: &mut Rng, shape: Vec<usize>, bound: f64) -> Tensor<F> {
    Tensor::from_fn(shape, |_| F::from_f64(rng.uniform(-bound, bound)))
}

impl<F: Scalar> Model<F> {
    /// Embedding uniform in ±√3 (unit variance); weights uniform in ±1/√fan_in;
    /// biases zero.
    pub fn init(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let (d, h, c, n) = (cfg.embed_dim, cfg.mlp_hidden, cfg.classes, cfg.layer.hidden());
        let mut named: Vec<(&str, Tensor<F>)> = vec![("embed", uniform(rng, vec![cfg.vocab, d], 3f64.sqrt()))];
        let layer = LayerParams::<F>::init(&cfg.layer, rng);
        named.push(("layer.w_v", layer.w_v));
        if let Some(w) = layer.w_g {
            named.push(("layer.w_g", w));
        }
        named.push(("layer.gate_bias", layer.gate_bias));
        let mlp = |named: &mut Vec<(&'static str, Tensor<F>)>,
                   prefix: [&'static str; 4],
                   din: usize,
                   dout: usize,
                   rng: &mut Rng| {
            named.push((prefix[0], uniform(rng, vec![din, h], 1.0 / (din as f64).sqrt())));
            named.push((prefix[1], Tensor::zeros(vec![h])));
            named.push((prefix[2], uniform(rng, vec![h, dout], 1.0 / (h as f64).sqrt())));
            named.push((prefix[3], Tensor::zeros(vec![dout])));
        };
        match cfg.head {
            HeadKind::DecoderMlp => mlp(&mut named, ["head.w1", "head.b1", "head.w2", "head.b2"], n, c, rng),
            HeadKind::EncoderDecoderMlp => {
                mlp(&mut named, ["enc.w1", "enc.b1", "enc.w2", "enc.b2"], n, d, rng);
                named.push(("dec.pos", uniform(rng, vec![cfg.out_slots, d], 3f64.sqrt())));
                mlp(&mut named, ["dec.w1", "dec.b1", "dec.w2", "dec.b2"], d, c, rng);
            }
        }
        Ok(Model {
            cfg: cfg.clone(),
            names: named.iter().map(|(k, _)| k.to_string()).collect(),
            params: named.into_iter().map(|(_, v)| v).collect(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<F>> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.params[i])
    }

    /// Parameters as tape leaves, in `self.names` order.
    pub fn attach<'t>(&self, tape: &'t Tape<F>, trainable: bool) -> Vec<Var<'t, F>> {
        self.params.iter().map(|p| tape.leaf(p.clone(), trainable)).collect()
    }

    fn var<'t>(&self, vars: &[Var<'t, F>], name: &str) -> Result<Var<'t, F>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| vars[i])
            .ok_or_else(|| Error::Contract(format!("model has no parameter {name}")))
    }

    fn mlp<'t>(&self, vars: &[Var<'t, F>], prefix: &str, x: Var<'t, F>) -> Result<Var<'t, F>> {
        let w1 = self.var(vars, &format!("{prefix}.w1"))?;
        let b1 = self.var(vars, &format!("{prefix}.b1"))?;
        let w2 = self.var(vars, &format!("{prefix}.w2"))?;
        let b2 = self.var(vars, &format!("{prefix}.b2"))?;
        x.matmul(w1)?.add(b1)?.gelu()?.matmul(w2)?.add(b2)
    }

    /// Logits `[batch, slots, classes]` for `batch` rows of `len` tokens.
    pub fn forward<'t>(
        &self,
        vars: &[Var<'t, F>],
        tokens: &[u16],
        batch: usize,
        len: usize,
        exec: Executor,
    ) -> Result<Var<'t, F>> {
        if tokens.len() != batch * len {
            return Err(Error::shape("model", format!("{} tokens for {batch}×{len}", tokens.len())));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.cfg.vocab) {
            return Err(Error::spec("tokens", format!("token {bad} outside vocabulary {}", self.cfg.vocab)));
        }
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let x = self.var(vars, "embed")?.embedding(&ids, &[batch, len])?;
        let layer = LayerVars {
            w_v: self.var(vars, "layer.w_v")?,
            w_g: self.var(vars, "layer.w_g").ok(),
            gate_bias: self.var(vars, "layer.gate_bias")?,
        };
        let y = layer_var(x, &layer, &self.cfg.layer, exec)?;
        match self.cfg.head {
            HeadKind::DecoderMlp => self.mlp(vars, "head", y),
            HeadKind::EncoderDecoderMlp => {
                let n = self.cfg.layer.hidden();
                let last = y.index_select(1, &[len - 1])?.reshape(vec![batch, n])?;
                let code = self.mlp(vars, "enc", last)?.reshape(vec![batch, 1, self.cfg.embed_dim])?;
                let slots = code.add(self.var(vars, "dec.pos")?)?;
                self.mlp(vars, "dec", slots)
            }
        }
    }

    /// Forward pass without gradients.
    pub fn logits(&self, tokens: &[u16], batch: usize, len: usize, exec: Executor) -> Result<Tensor<F>> {
        let tape = Tape::new();
        let vars = self.attach(&tape, false);
        let out = self.forward(&vars, tokens, batch, len, exec)?;
        let value = (*out.value()).clone();
        Ok(value)
    }

    /// Normalized gates of the recurrent layer for `batch` rows of `len` tokens.
    pub fn gates(&self, tokens: &[u16], batch: usize, len: usize) -> Result<crate::recurrence::NormalizedGates<F>> {
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let table = self.get("embed").ok_or_else(|| Error::Contract("model has no embedding".into()))?;
        let x = table.index_select(0, &ids)?.into_reshape(vec![batch, len, self.cfg.embed_dim])?;
        let layer = LayerParams {
            w_v: self.get("layer.w_v").cloned().unwrap(),
            w_g: self.get("layer.w_g").cloned(),
            gate_bias: self.get("layer.gate_bias").cloned().unwrap(),
        };
        let raw = if self.cfg.layer.selective {
            crate::recurrence::compute_raw_gates(&x, &layer, &self.cfg.layer)?
        } else {
            crate::recurrence::nonselective_gates(&layer, &self.cfg.layer, batch, len)?
        };
        crate::recurrence::normalize_gates(&raw, self.cfg.layer.kind, self.cfg.layer.norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: ArchKind, task: TaskKind) -> ModelConfig {
        let mut spec = TaskSpec::baseline(task);
        spec.seq_len = 6;
        ModelConfig::for_task(&spec, kind, 2, 3, NormFn::Softmax, true, 8)
    }

    #[test]
    fn param_count_matches_closed_form() {
        for task in [TaskKind::Parity, TaskKind::Compression, TaskKind::Recall] {
            for kind in [ArchKind::Hlru, ArchKind::Bdlru] {
                for selective in [true, false] {
                    let mut c = cfg(kind, task);
                    c.layer.selective = selective;
                    let model = Model::<f64>::init(&c, &mut Rng::new(0)).unwrap();
                    assert_eq!(model.param_count(), c.param_count(), "{task} {kind} {selective}");
                }
            }
        }
        // Hand count: parity, BD-LRU m=2, H=3, d=8, h=16, C=2.
        let c = cfg(ArchKind::Bdlru, TaskKind::Parity);
        let hand = 2 * 8 + (8 * 6 + 8 * 18 + 18) + (6 * 16 + 16 + 16 * 2 + 2);
        assert_eq!(c.param_count(), hand);
    }

    #[test]
    fn zero_head_gives_uniform_loss() {
        let c = cfg(ArchKind::Bdlru, TaskKind::Recall);
        let mut model = Model::<f64>::init(&c, &mut Rng::new(1)).unwrap();
        model.get_mut("head.w2").unwrap().clone_from(&Tensor::zeros(vec![16, 16]));
        let tokens: Vec<u16> = (0..12).map(|i| (i % 16) as u16).collect();
        let tape = Tape::new();
        let vars = model.attach(&tape, true);
        let logits = model.forward(&vars, &tokens, 2, 6, Executor::Sequential).unwrap();
        let targets: Vec<Option<usize>> = (0..12).map(|i| Some(i % 16)).collect();
        let loss = logits.reshape(vec![12, 16]).unwrap().cross_entropy(&targets, 12.0).unwrap();
        assert!((loss.value().item().unwrap() - 16f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn order_one_architectures_give_identical_logits() {
        let mut spec = TaskSpec::baseline(TaskKind::SnComposition);
        spec.seq_len = 7;
        let h = ModelConfig::for_task(&spec, ArchKind::Hlru, 1, 5, NormFn::Softmax, true, 8);
        let b = ModelConfig::for_task(&spec, ArchKind::Bdlru, 1, 5, NormFn::Softmax, true, 8);
        let mh = Model::<f64>::init(&h, &mut Rng::new(3)).unwrap();
        let mb = Model { cfg: b, ..mh.clone() };
        let tokens: Vec<u16> = (0..14).map(|i| (i * 5 % 6) as u16).collect();
        let lh = mh.logits(&tokens, 2, 7, Executor::Sequential).unwrap();
        let lb = mb.logits(&tokens, 2, 7, Executor::Sequential).unwrap();
        assert_eq!(lh, lb);
    }

    #[test]
    fn executors_agree_on_logits() {
        let c = cfg(ArchKind::Hlru, TaskKind::Compression);
        let model = Model::<f64>::init(&c, &mut Rng::new(4)).unwrap();
        let tokens: Vec<u16> = (0..14).map(|i| (i % 15) as u16).collect();
        let a = model.logits(&tokens, 2, 7, Executor::Sequential).unwrap();
        let b = model.logits(&tokens, 2, 7, Executor::Blelloch { parallel: false }).unwrap();
        assert_eq!(a.shape(), &[2, 6, 15]);
        assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
    }

    #[test]
    fn mismatched_task_rejected() {
        let c = cfg(ArchKind::Hlru, TaskKind::Parity);
        assert!(c.check_task(&TaskSpec::baseline(TaskKind::Compression)).is_err());
        assert!(c.check_task(&TaskSpec::baseline(TaskKind::CycleNav)).is_err());
        assert!(c.check_task(&TaskSpec { seq_len: 6, ..TaskSpec::baseline(TaskKind::Parity) }).is_ok());
    }
}
