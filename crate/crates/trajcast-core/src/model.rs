//! The assembled nowcasting model: event encoder, gated transformer stack,
//! and prediction head, with named-tensor access for optimization and
//! persistence.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::EncodedBatch;
use crate::encoder::{encode_events, EncoderParams, EncoderVars};
use crate::error::{Error, Result};
use crate::head::{self, HeadParams, HeadVars};
use crate::tensor::{Tape, Tensor, Var};
use crate::transformer::{denoise_loss, encode_stack, AttnContext, LayerParams, LayerVars};

/// Which model components are switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Ablation {
    /// Drop the decay timestamp feature (w/o D).
    pub no_decay: bool,
    /// Drop the periodic timestamp feature (w/o P).
    pub no_periodic: bool,
    /// Bypass the denoising gate; attention is standard and the gate is
    /// frozen (w/o M).
    pub no_gate: bool,
}

impl Ablation {
    pub const NONE: Ablation = Ablation { no_decay: false, no_periodic: false, no_gate: false };
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub label_count: usize,
    /// Hidden width `d`.
    pub embed_dim: usize,
    pub heads: usize,
    pub layers: usize,
    /// History window `N`; sequences are encoded to width `N + 1`.
    pub max_history: usize,
    /// Inner width of the decay feature.
    pub decay_width: usize,
    pub ffn_dim: usize,
    pub omega_hours: f64,
    pub init_std: f64,
    pub ablation: Ablation,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, label_count: usize) -> Self {
        Self {
            vocab_size,
            label_count,
            embed_dim: 64,
            heads: 4,
            layers: 2,
            max_history: 256,
            decay_width: 16,
            ffn_dim: 256,
            omega_hours: 24.0,
            init_std: 0.02,
            ablation: Ablation::NONE,
        }
    }

    /// Padded sequence width (history window plus the mask slot).
    pub fn width(&self) -> usize {
        self.max_history + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.heads == 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "embedding dim {} must be a positive multiple of head count {}",
                self.embed_dim, self.heads
            )));
        }
        if self.layers == 0 {
            return Err(Error::Config("need at least one transformer layer".into()));
        }
        if self.max_history == 0 || self.decay_width == 0 || self.ffn_dim == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.omega_hours <= 0.0 {
            return Err(Error::Config(format!("period must be positive, got {}", self.omega_hours)));
        }
        if self.vocab_size <= crate::data::UNK_ID {
            return Err(Error::Config("vocabulary is empty".into()));
        }
        if self.label_count == 0 {
            return Err(Error::Config("label vocabulary is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: EncoderParams,
    pub layers: Vec<LayerParams>,
    pub head: HeadParams,
}

/// Tape handles for every parameter tensor of one forward pass.
pub struct ModelVars {
    pub encoder: EncoderVars,
    pub layers: Vec<LayerVars>,
    pub head: HeadVars,
}

/// Result handles of a forward pass.
pub struct Forward {
    /// Per-label probabilities, `batch × labels`.
    pub probs: Var,
    /// Final hidden states, `(batch · width) × d`.
    pub hidden: Var,
    pub vars: ModelVars,
}

pub struct Losses {
    pub total: Var,
    pub ce: Var,
    pub denoise: Option<Var>,
}

impl Model {
    /// Deterministic initialization. The same seed draws the same values
    /// for every tensor regardless of ablation flags, so ablated variants
    /// share weights with the full model; the gate is overwritten with
    /// ones when bypassed.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderParams::init(
            config.vocab_size,
            config.width(),
            config.embed_dim,
            config.decay_width,
            config.omega_hours,
            config.init_std,
            &mut rng,
        );
        let mut layers = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            layers.push(LayerParams::init(
                config.embed_dim,
                config.heads,
                config.ffn_dim,
                config.width(),
                config.init_std,
                &mut rng,
            )?);
        }
        let head = HeadParams::init(config.embed_dim, config.label_count, config.init_std, &mut rng);
        let mut model = Self { config, encoder, layers, head };
        if model.config.ablation.no_gate {
            for layer in &mut model.layers {
                layer.gate = Tensor::filled(
                    alloc::vec![model.config.width(), model.config.width()],
                    1.0,
                );
            }
        }
        Ok(model)
    }

    pub fn register(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            encoder: self.encoder.register(tape),
            layers: self.layers.iter().map(|l| l.register(tape)).collect(),
            head: self.head.register(tape),
        }
    }

    /// Forward pass over an encoded batch on a fresh tape.
    pub fn forward(&self, tape: &mut Tape, batch: &EncodedBatch) -> Result<Forward> {
        if batch.width > self.config.width() {
            return Err(Error::Dimension {
                op: "Model::forward",
                detail: format!(
                    "batch width {} exceeds model width {}",
                    batch.width,
                    self.config.width()
                ),
            });
        }
        let vars = self.register(tape);
        let times = tape.leaf(Tensor::matrix(
            batch.batch * batch.width,
            1,
            batch.times.clone(),
        )?);
        let abl = self.config.ablation;
        let h0 = encode_events(
            tape,
            &vars.encoder,
            &batch.token_ids,
            times,
            batch.width,
            !abl.no_decay,
            !abl.no_periodic,
        )?;
        let ctx = AttnContext::new(tape, batch.batch, batch.width, &batch.real)?;
        let hidden = encode_stack(tape, h0, &vars.layers, &ctx, !abl.no_gate)?;
        let mask_rows: Vec<usize> = batch
            .mask_positions
            .iter()
            .enumerate()
            .map(|(b, &p)| b * batch.width + p)
            .collect();
        let probs = head::predict(tape, hidden, &mask_rows, &vars.head)?;
        Ok(Forward { probs, hidden, vars })
    }

    /// Training objective for a completed forward pass.
    pub fn loss(
        &self,
        tape: &mut Tape,
        fwd: &Forward,
        batch: &EncodedBatch,
        lambda: f64,
    ) -> Result<Losses> {
        let ce = head::ce_loss(tape, fwd.probs, &batch.labels)?;
        let denoise = if self.config.ablation.no_gate {
            None
        } else {
            Some(denoise_loss(tape, &fwd.vars.layers)?)
        };
        let total = head::final_loss(tape, ce, denoise, lambda)?;
        Ok(Losses { total, ce, denoise })
    }

    /// Inference convenience: probabilities for a batch as a plain tensor.
    pub fn predict_probs(&self, batch: &EncodedBatch) -> Result<Tensor> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, batch)?;
        Ok(tape.value(fwd.probs).clone())
    }

    /// Sum of Frobenius norms of the per-layer gates (diagnostic).
    pub fn gate_norm_sum(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| libm::sqrt(l.gate.data().iter().map(|&x| x * x).sum::<f64>()))
            .sum()
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        out.push(("encoder.token_embed".into(), &self.encoder.token_embed));
        out.push(("encoder.pos_embed".into(), &self.encoder.pos_embed));
        out.push(("encoder.decay_time_w".into(), &self.encoder.decay_time_w));
        out.push(("encoder.decay_time_b".into(), &self.encoder.decay_time_b));
        out.push(("encoder.decay_out_w".into(), &self.encoder.decay_out_w));
        out.push(("encoder.decay_out_b".into(), &self.encoder.decay_out_b));
        out.push(("encoder.periodic_w".into(), &self.encoder.periodic_w));
        out.push(("encoder.periodic_b".into(), &self.encoder.periodic_b));
        for (i, l) in self.layers.iter().enumerate() {
            for (h, t) in l.w_q.iter().enumerate() {
                out.push((format!("layer{i}.w_q{h}"), t));
            }
            for (h, t) in l.w_k.iter().enumerate() {
                out.push((format!("layer{i}.w_k{h}"), t));
            }
            for (h, t) in l.w_v.iter().enumerate() {
                out.push((format!("layer{i}.w_v{h}"), t));
            }
            out.push((format!("layer{i}.w_o"), &l.w_o));
            out.push((format!("layer{i}.gate"), &l.gate));
            out.push((format!("layer{i}.ffn_w1"), &l.ffn_w1));
            out.push((format!("layer{i}.ffn_b1"), &l.ffn_b1));
            out.push((format!("layer{i}.ffn_w2"), &l.ffn_w2));
            out.push((format!("layer{i}.ffn_b2"), &l.ffn_b2));
            out.push((format!("layer{i}.ln1_gain"), &l.ln1_gain));
            out.push((format!("layer{i}.ln1_bias"), &l.ln1_bias));
            out.push((format!("layer{i}.ln2_gain"), &l.ln2_gain));
            out.push((format!("layer{i}.ln2_bias"), &l.ln2_bias));
        }
        out.push(("head.w_out".into(), &self.head.w_out));
        out.push(("head.b_out".into(), &self.head.b_out));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        out.push(("encoder.token_embed".into(), &mut self.encoder.token_embed));
        out.push(("encoder.pos_embed".into(), &mut self.encoder.pos_embed));
        out.push(("encoder.decay_time_w".into(), &mut self.encoder.decay_time_w));
        out.push(("encoder.decay_time_b".into(), &mut self.encoder.decay_time_b));
        out.push(("encoder.decay_out_w".into(), &mut self.encoder.decay_out_w));
        out.push(("encoder.decay_out_b".into(), &mut self.encoder.decay_out_b));
        out.push(("encoder.periodic_w".into(), &mut self.encoder.periodic_w));
        out.push(("encoder.periodic_b".into(), &mut self.encoder.periodic_b));
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (h, t) in l.w_q.iter_mut().enumerate() {
                out.push((format!("layer{i}.w_q{h}"), t));
            }
            for (h, t) in l.w_k.iter_mut().enumerate() {
                out.push((format!("layer{i}.w_k{h}"), t));
            }
            for (h, t) in l.w_v.iter_mut().enumerate() {
                out.push((format!("layer{i}.w_v{h}"), t));
            }
            out.push((format!("layer{i}.w_o"), &mut l.w_o));
            out.push((format!("layer{i}.gate"), &mut l.gate));
            out.push((format!("layer{i}.ffn_w1"), &mut l.ffn_w1));
            out.push((format!("layer{i}.ffn_b1"), &mut l.ffn_b1));
            out.push((format!("layer{i}.ffn_w2"), &mut l.ffn_w2));
            out.push((format!("layer{i}.ffn_b2"), &mut l.ffn_b2));
            out.push((format!("layer{i}.ln1_gain"), &mut l.ln1_gain));
            out.push((format!("layer{i}.ln1_bias"), &mut l.ln1_bias));
            out.push((format!("layer{i}.ln2_gain"), &mut l.ln2_gain));
            out.push((format!("layer{i}.ln2_bias"), &mut l.ln2_bias));
        }
        out.push(("head.w_out".into(), &mut self.head.w_out));
        out.push(("head.b_out".into(), &mut self.head.b_out));
        out
    }

    /// Overwrite one tensor by name, checking the shape.
    pub fn set_tensor(&mut self, name: &str, value: Tensor) -> Result<()> {
        for (n, t) in self.named_tensors_mut() {
            if n == name {
                if t.shape() != value.shape() {
                    return Err(Error::Dimension {
                        op: "Model::set_tensor",
                        detail: format!(
                            "{name}: stored shape {:?} vs model shape {:?}",
                            value.shape(),
                            t.shape()
                        ),
                    });
                }
                *t = value;
                return Ok(());
            }
        }
        Err(Error::Data(format!("unknown tensor {name}")))
    }
}

impl ModelVars {
    /// Tape handles in the same order as [`Model::named_tensors`].
    pub fn ordered_vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        out.push(self.encoder.token_embed);
        out.push(self.encoder.pos_embed);
        out.push(self.encoder.decay_time_w);
        out.push(self.encoder.decay_time_b);
        out.push(self.encoder.decay_out_w);
        out.push(self.encoder.decay_out_b);
        out.push(self.encoder.periodic_w);
        out.push(self.encoder.periodic_b);
        for l in &self.layers {
            out.extend(l.w_q.iter().copied());
            out.extend(l.w_k.iter().copied());
            out.extend(l.w_v.iter().copied());
            out.push(l.w_o);
            out.push(l.gate);
            out.push(l.ffn_w1);
            out.push(l.ffn_b1);
            out.push(l.ffn_w2);
            out.push(l.ffn_b2);
            out.push(l.ln1_gain);
            out.push(l.ln1_bias);
            out.push(l.ln2_gain);
            out.push(l.ln2_bias);
        }
        out.push(self.head.w_out);
        out.push(self.head.b_out);
        out
    }
}
