//! Medical event encoder: maps (token id, timestamp) pairs to hidden
//! representations by summing a code embedding, a learnable positional
//! encoding, a decay-shaped timestamp feature and a periodic timestamp
//! feature.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Learnable parameters of the event encoder.
///
/// Weight matrices are stored input-major (`[in × out]`) so row-major
/// activations multiply them directly.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// Token embedding table, `vocab × d`.
    pub token_embed: Tensor,
    /// Positional table over the padded width (history window + mask slot).
    pub pos_embed: Tensor,
    /// Timestamp-to-decay-lattice weights, `1 × m`.
    pub decay_time_w: Tensor,
    /// Decay lattice centers, `m`.
    pub decay_time_b: Tensor,
    /// Decay output projection, `m × d`.
    pub decay_out_w: Tensor,
    /// Subtractive decay output bias, `d`.
    pub decay_out_b: Tensor,
    /// Projection of the (sin, cos) pair, `2 × d`.
    pub periodic_w: Tensor,
    /// Periodic output bias, `d`.
    pub periodic_b: Tensor,
    /// Cycle length in hours.
    pub omega: f64,
}

impl EncoderParams {
    pub fn init(
        vocab_size: usize,
        width: usize,
        embed_dim: usize,
        decay_width: usize,
        omega: f64,
        init_std: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let token_embed = normal_tensor(rng, vocab_size, embed_dim, init_std);
        let pos_embed = normal_tensor(rng, width, embed_dim, init_std);
        // The decay units are bumps over absolute time, peaking where
        // W_t·t crosses b_t with width 1/W_t. A small-normal W_t with zero
        // b_t piles every peak at t = 0 and saturates the tanh (dead
        // gradients) for hour-scale timestamps, so instead the peaks are
        // spread over several cycles and the widths drawn at cycle scale.
        let mut decay_time_w = Tensor::zeros(alloc::vec![1, decay_width]);
        let mut decay_time_b = Tensor::zeros(alloc::vec![decay_width]);
        for j in 0..decay_width {
            let center = rng.gen::<f64>() * 6.0 * omega;
            let bump_width = (0.25 + 1.75 * rng.gen::<f64>()) * omega;
            decay_time_w.data_mut()[j] = 1.0 / bump_width;
            decay_time_b.data_mut()[j] = center / bump_width;
        }
        Self {
            token_embed,
            pos_embed,
            decay_time_w,
            decay_time_b,
            decay_out_w: normal_tensor(rng, decay_width, embed_dim, init_std),
            decay_out_b: Tensor::zeros(alloc::vec![embed_dim]),
            periodic_w: normal_tensor(rng, 2, embed_dim, init_std),
            periodic_b: Tensor::zeros(alloc::vec![embed_dim]),
            omega,
        }
    }
}

/// Box–Muller standard normal; deterministic given the rng stream.
pub(crate) fn sample_normal(rng: &mut impl Rng) -> f64 {
    let u: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let v: f64 = rng.gen();
    libm::sqrt(-2.0 * libm::log(u)) * libm::cos(2.0 * core::f64::consts::PI * v)
}

pub(crate) fn normal_tensor(
    rng: &mut impl Rng,
    rows: usize,
    cols: usize,
    std: f64,
) -> Tensor {
    let data: Vec<f64> = (0..rows * cols).map(|_| sample_normal(rng) * std).collect();
    Tensor::matrix(rows, cols, data).expect("sized by construction")
}

/// Tape handles for the encoder parameters within one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct EncoderVars {
    pub token_embed: Var,
    pub pos_embed: Var,
    pub decay_time_w: Var,
    pub decay_time_b: Var,
    pub decay_out_w: Var,
    pub decay_out_b: Var,
    pub periodic_w: Var,
    pub periodic_b: Var,
    pub omega: f64,
}

impl EncoderParams {
    pub fn register(&self, tape: &mut Tape) -> EncoderVars {
        EncoderVars {
            token_embed: tape.leaf(self.token_embed.clone()),
            pos_embed: tape.leaf(self.pos_embed.clone()),
            decay_time_w: tape.leaf(self.decay_time_w.clone()),
            decay_time_b: tape.leaf(self.decay_time_b.clone()),
            decay_out_w: tape.leaf(self.decay_out_w.clone()),
            decay_out_b: tape.leaf(self.decay_out_b.clone()),
            periodic_w: tape.leaf(self.periodic_w.clone()),
            periodic_b: tape.leaf(self.periodic_b.clone()),
            omega: self.omega,
        }
    }
}

/// Token embedding plus learnable positional encoding.
///
/// `token_ids` is row-major `batch × width`; position indices restart at 0
/// for every row. Padding ids embed like any other token and are excluded
/// later by the attention pad mask.
pub fn code_embed(
    tape: &mut Tape,
    vars: &EncoderVars,
    token_ids: &[usize],
    width: usize,
) -> Result<Var> {
    let vocab = tape.value(vars.token_embed).rows();
    if let Some(&bad) = token_ids.iter().find(|&&id| id >= vocab) {
        return Err(Error::Vocabulary(alloc::format!(
            "token id {bad} out of range for vocabulary of {vocab}"
        )));
    }
    if width > tape.value(vars.pos_embed).rows() {
        return Err(Error::Contract(alloc::format!(
            "sequence width {width} exceeds positional table of {}",
            tape.value(vars.pos_embed).rows()
        )));
    }
    let tokens = tape.take_rows(vars.token_embed, token_ids)?;
    let positions: Vec<usize> = (0..token_ids.len()).map(|i| i % width).collect();
    let pos = tape.take_rows(vars.pos_embed, &positions)?;
    tape.add(tokens, pos)
}

/// Decay feature of a timestamp column (`rows × 1`):
/// `(1 − tanh((W_t t − b_t)²)) · W_d − b_d`.
///
/// The response peaks where `W_t t` crosses `b_t` and flattens to `−b_d`
/// as `|t|` grows; positions sharing a timestamp share the output.
pub fn decay_embed(tape: &mut Tape, vars: &EncoderVars, times: Var) -> Result<Var> {
    let u = tape.matmul(times, vars.decay_time_w)?;
    let neg_centers = tape.scale(vars.decay_time_b, -1.0);
    let u = tape.add_row(u, neg_centers)?;
    let u = tape.square(u);
    let u = tape.tanh(u);
    let u = tape.affine(u, -1.0, 1.0);
    let y = tape.matmul(u, vars.decay_out_w)?;
    let neg_bias = tape.scale(vars.decay_out_b, -1.0);
    tape.add_row(y, neg_bias)
}

/// Periodic feature of a timestamp column: `[sin(2πt/ω); cos(2πt/ω)] · W_p + b_p`.
pub fn periodic_embed(tape: &mut Tape, vars: &EncoderVars, times: Var) -> Result<Var> {
    debug_assert!(vars.omega > 0.0);
    let arg = tape.scale(times, 2.0 * core::f64::consts::PI / vars.omega);
    let s = tape.sin(arg);
    let c = tape.cos(arg);
    let sc = tape.concat_cols(&[s, c])?;
    let y = tape.matmul(sc, vars.periodic_w)?;
    tape.add_row(y, vars.periodic_b)
}

/// Full event representation: code embedding plus the timestamp features,
/// with either timestamp term droppable for ablations.
pub fn encode_events(
    tape: &mut Tape,
    vars: &EncoderVars,
    token_ids: &[usize],
    times: Var,
    width: usize,
    use_decay: bool,
    use_periodic: bool,
) -> Result<Var> {
    let mut h = code_embed(tape, vars, token_ids, width)?;
    if use_decay {
        let d = decay_embed(tape, vars, times)?;
        h = tape.add(h, d)?;
    }
    if use_periodic {
        let p = periodic_embed(tape, vars, times)?;
        h = tape.add(h, p)?;
    }
    Ok(h)
}
