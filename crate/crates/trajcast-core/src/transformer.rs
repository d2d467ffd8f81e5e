//! Stacked transformer layers whose pre-softmax attention logits are
//! gated elementwise by a learned per-layer denoising matrix.
//!
//! The gate is a single learnable matrix per layer, shared across heads
//! and batch rows, initialized wide open (high positive values) and pulled
//! toward zero by a norm penalty. With the gate fixed to all-ones the
//! stack reduces exactly to a standard transformer encoder.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::encoder::sample_normal;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Additive logit for padding keys; exp() underflows to exactly zero.
pub const PAD_NEG: f64 = -1e30;

/// Denoising gates start uniform in this range, so attention begins
/// effectively unmasked.
pub const GATE_INIT_RANGE: (f64, f64) = (4.0, 6.0);

/// Learnable parameters of one transformer layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Per-head query/key/value projections, each `d × (d/h)`.
    pub w_q: Vec<Tensor>,
    pub w_k: Vec<Tensor>,
    pub w_v: Vec<Tensor>,
    /// Head aggregation, `d × d`.
    pub w_o: Tensor,
    /// Denoising gate over the full padded width, `(N+1) × (N+1)`.
    pub gate: Tensor,
    pub ffn_w1: Tensor,
    pub ffn_b1: Tensor,
    pub ffn_w2: Tensor,
    pub ffn_b2: Tensor,
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
}

impl LayerParams {
    pub fn init(
        embed_dim: usize,
        heads: usize,
        ffn_dim: usize,
        width: usize,
        init_std: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if heads == 0 || embed_dim % heads != 0 {
            return Err(Error::Config(alloc::format!(
                "embedding dim {embed_dim} not divisible by head count {heads}"
            )));
        }
        let head_dim = embed_dim / heads;
        let mut normal = |rows: usize, cols: usize| {
            let data: Vec<f64> = (0..rows * cols).map(|_| sample_normal(rng) * init_std).collect();
            Tensor::matrix(rows, cols, data).expect("sized by construction")
        };
        let proj = |rng: &mut dyn FnMut(usize, usize) -> Tensor| -> Vec<Tensor> {
            (0..heads).map(|_| rng(embed_dim, head_dim)).collect()
        };
        let w_q = proj(&mut normal);
        let w_k = proj(&mut normal);
        let w_v = proj(&mut normal);
        let w_o = normal(embed_dim, embed_dim);
        let ffn_w1 = normal(embed_dim, ffn_dim);
        let ffn_w2 = normal(ffn_dim, embed_dim);
        let gate_data: Vec<f64> = (0..width * width)
            .map(|_| rng.gen_range(GATE_INIT_RANGE.0..GATE_INIT_RANGE.1))
            .collect();
        Ok(Self {
            w_q,
            w_k,
            w_v,
            w_o,
            gate: Tensor::matrix(width, width, gate_data)?,
            ffn_w1,
            ffn_b1: Tensor::zeros(vec![ffn_dim]),
            ffn_w2,
            ffn_b2: Tensor::zeros(vec![embed_dim]),
            ln1_gain: Tensor::filled(vec![embed_dim], 1.0),
            ln1_bias: Tensor::zeros(vec![embed_dim]),
            ln2_gain: Tensor::filled(vec![embed_dim], 1.0),
            ln2_bias: Tensor::zeros(vec![embed_dim]),
        })
    }

    pub fn register(&self, tape: &mut Tape) -> LayerVars {
        LayerVars {
            w_q: self.w_q.iter().map(|t| tape.leaf(t.clone())).collect(),
            w_k: self.w_k.iter().map(|t| tape.leaf(t.clone())).collect(),
            w_v: self.w_v.iter().map(|t| tape.leaf(t.clone())).collect(),
            w_o: tape.leaf(self.w_o.clone()),
            gate: tape.leaf(self.gate.clone()),
            ffn_w1: tape.leaf(self.ffn_w1.clone()),
            ffn_b1: tape.leaf(self.ffn_b1.clone()),
            ffn_w2: tape.leaf(self.ffn_w2.clone()),
            ffn_b2: tape.leaf(self.ffn_b2.clone()),
            ln1_gain: tape.leaf(self.ln1_gain.clone()),
            ln1_bias: tape.leaf(self.ln1_bias.clone()),
            ln2_gain: tape.leaf(self.ln2_gain.clone()),
            ln2_bias: tape.leaf(self.ln2_bias.clone()),
        }
    }
}

/// Tape handles for one layer's parameters.
#[derive(Debug, Clone)]
pub struct LayerVars {
    pub w_q: Vec<Var>,
    pub w_k: Vec<Var>,
    pub w_v: Vec<Var>,
    pub w_o: Var,
    pub gate: Var,
    pub ffn_w1: Var,
    pub ffn_b1: Var,
    pub ffn_w2: Var,
    pub ffn_b2: Var,
    pub ln1_gain: Var,
    pub ln1_bias: Var,
    pub ln2_gain: Var,
    pub ln2_bias: Var,
}

/// Batch geometry plus per-row additive pad biases for attention keys.
pub struct AttnContext {
    pub batch: usize,
    pub width: usize,
    pad_bias: Vec<Var>,
}

impl AttnContext {
    /// `real` is row-major `batch × width`, true on history tokens and the
    /// mask token.
    pub fn new(tape: &mut Tape, batch: usize, width: usize, real: &[bool]) -> Result<Self> {
        if real.len() != batch * width {
            return Err(Error::Dimension {
                op: "AttnContext::new",
                detail: alloc::format!(
                    "pad mask of {} entries does not cover {batch}×{width}",
                    real.len()
                ),
            });
        }
        let pad_bias = (0..batch)
            .map(|b| {
                let bias: Vec<f64> = real[b * width..(b + 1) * width]
                    .iter()
                    .map(|&r| if r { 0.0 } else { PAD_NEG })
                    .collect();
                tape.leaf(Tensor::from_vec(bias))
            })
            .collect();
        Ok(Self { batch, width, pad_bias })
    }
}

/// Multi-head scaled dot-product attention with the denoising gate applied
/// elementwise to the raw logits. Keys at padding positions receive a large
/// negative additive bias after the gating, so the gate cannot resurrect
/// them. `gate` is the active `width × width` block, shared across heads
/// and batch rows; pass `None` to run ungated (standard attention).
pub fn masked_attention(
    tape: &mut Tape,
    hidden: Var,
    layer: &LayerVars,
    gate: Option<Var>,
    ctx: &AttnContext,
) -> Result<Var> {
    let heads = layer.w_q.len();
    let head_dim = tape.value(layer.w_q[0]).cols();
    let inv_sqrt = 1.0 / libm::sqrt(head_dim as f64);
    let mut rows = Vec::with_capacity(ctx.batch);
    for b in 0..ctx.batch {
        let h_b = tape.slice_rows(hidden, b * ctx.width, ctx.width)?;
        let mut outs = Vec::with_capacity(heads);
        for i in 0..heads {
            let q = tape.matmul(h_b, layer.w_q[i])?;
            let k = tape.matmul(h_b, layer.w_k[i])?;
            let v = tape.matmul(h_b, layer.w_v[i])?;
            let mut logits = tape.matmul_nt(q, k)?;
            if let Some(g) = gate {
                logits = tape.mul(logits, g)?;
            }
            let logits = tape.scale(logits, inv_sqrt);
            let logits = tape.add_row(logits, ctx.pad_bias[b])?;
            let weights = tape.softmax_rows(logits);
            outs.push(tape.matmul(weights, v)?);
        }
        let cat = tape.concat_cols(&outs)?;
        rows.push(tape.matmul(cat, layer.w_o)?);
    }
    tape.concat_rows(&rows)
}

/// One encoder layer: gated attention and a position-wise feed-forward
/// block, each wrapped in residual + layer norm.
pub fn transformer_layer(
    tape: &mut Tape,
    hidden: Var,
    layer: &LayerVars,
    gate: Option<Var>,
    ctx: &AttnContext,
) -> Result<Var> {
    let attn = masked_attention(tape, hidden, layer, gate, ctx)?;
    let post_attn = tape.add(hidden, attn)?;
    let h1 = tape.layer_norm(post_attn, layer.ln1_gain, layer.ln1_bias)?;

    let f = tape.matmul(h1, layer.ffn_w1)?;
    let f = tape.add_row(f, layer.ffn_b1)?;
    let f = tape.gelu(f);
    let f = tape.matmul(f, layer.ffn_w2)?;
    let f = tape.add_row(f, layer.ffn_b2)?;
    let post_ffn = tape.add(h1, f)?;
    tape.layer_norm(post_ffn, layer.ln2_gain, layer.ln2_bias)
}

/// Sequential application of the layer stack. When `use_gate` is false the
/// denoising gates are bypassed entirely (the w/o-M reduction to a vanilla
/// transformer).
pub fn encode_stack(
    tape: &mut Tape,
    hidden: Var,
    layers: &[LayerVars],
    ctx: &AttnContext,
    use_gate: bool,
) -> Result<Var> {
    if layers.is_empty() {
        return Err(Error::Config("transformer stack needs at least one layer".into()));
    }
    let mut h = hidden;
    for layer in layers {
        let gate = if use_gate {
            Some(tape.block_top_left(layer.gate, ctx.width)?)
        } else {
            None
        };
        h = transformer_layer(tape, h, layer, gate, ctx)?;
    }
    Ok(h)
}

/// Sum of Frobenius norms of the full per-layer gate matrices.
pub fn denoise_loss(tape: &mut Tape, layers: &[LayerVars]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for layer in layers {
        let n = tape.frobenius_norm(layer.gate);
        total = Some(match total {
            Some(t) => tape.add(t, n)?,
            None => n,
        });
    }
    total.ok_or_else(|| Error::Config("denoise loss of an empty stack".into()))
}
