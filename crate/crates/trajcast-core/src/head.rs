//! Prediction head: decode the mask token's final hidden state into
//! per-label probabilities, and the training objective.

use alloc::vec::Vec;

use rand::Rng;

use crate::encoder::sample_normal;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Output projection, stored input-major (`d × labels`).
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w_out: Tensor,
    pub b_out: Tensor,
}

impl HeadParams {
    pub fn init(embed_dim: usize, labels: usize, init_std: f64, rng: &mut impl Rng) -> Self {
        let data: Vec<f64> =
            (0..embed_dim * labels).map(|_| sample_normal(rng) * init_std).collect();
        Self {
            w_out: Tensor::matrix(embed_dim, labels, data).expect("sized by construction"),
            b_out: Tensor::zeros(alloc::vec![labels]),
        }
    }

    pub fn register(&self, tape: &mut Tape) -> HeadVars {
        HeadVars { w_out: tape.leaf(self.w_out.clone()), b_out: tape.leaf(self.b_out.clone()) }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub w_out: Var,
    pub b_out: Var,
}

/// Per-label probabilities from the hidden rows at the mask positions.
/// `mask_rows` are absolute row indices into the flattened `batch × width`
/// hidden matrix, one per instance.
pub fn predict(tape: &mut Tape, hidden: Var, mask_rows: &[usize], head: &HeadVars) -> Result<Var> {
    let rows = tape.value(hidden).rows();
    if let Some(&bad) = mask_rows.iter().find(|&&r| r >= rows) {
        return Err(Error::Contract(alloc::format!(
            "mask position row {bad} out of range for {rows} hidden rows"
        )));
    }
    let h_mask = tape.take_rows(hidden, mask_rows)?;
    let logits = tape.matmul(h_mask, head.w_out)?;
    let logits = tape.add_row(logits, head.b_out)?;
    Ok(tape.sigmoid(logits))
}

/// Multi-label cross-entropy: sum over labels, mean over instances.
pub fn ce_loss(tape: &mut Tape, probs: Var, targets: &Tensor) -> Result<Var> {
    tape.bce_mean(probs, targets)
}

/// `ce + λ · denoise`. With λ = 0 or no denoise term the cross-entropy
/// node is returned unchanged.
pub fn final_loss(tape: &mut Tape, ce: Var, denoise: Option<Var>, lambda: f64) -> Result<Var> {
    if lambda < 0.0 {
        return Err(Error::Config(alloc::format!("denoise weight must be ≥ 0, got {lambda}")));
    }
    match denoise {
        Some(d) if lambda > 0.0 => {
            let scaled = tape.scale(d, lambda);
            tape.add(ce, scaled)
        }
        _ => Ok(ce),
    }
}
