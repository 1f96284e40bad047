//! Scaled dot-product attention by channel partition.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{Tensor, Var};
use crate::params::Session;

/// Logit offset applied to masked key positions.
pub const MASK_PENALTY: f64 = -1e9;

/// Additive `[rows, keys]` mask, or `None` when every key is valid.
pub fn key_mask(s: &mut Session, rows: usize, valid: &[bool]) -> Option<Var> {
    if valid.iter().all(|&v| v) {
        return None;
    }
    let mut data = Vec::with_capacity(rows * valid.len());
    for _ in 0..rows {
        data.extend(valid.iter().map(|&v| if v { 0.0 } else { MASK_PENALTY }));
    }
    Some(s.constant(Tensor::new(alloc::vec![rows, valid.len()], data).expect("mask shape")))
}

/// Attention of `q [n, c]` over `k, v [m, c]` with `heads` equal channel
/// slices. Returns the concatenated head outputs and each head's weights.
pub fn multi_head(s: &mut Session, q: Var, k: Var, v: Var, heads: usize, mask: Option<Var>) -> Result<(Var, Vec<Var>)> {
    let c = s.tape.shape(q)[1];
    if heads == 0 || c % heads != 0 {
        return Err(Error::Argument(alloc::format!("{c} channels do not split into {heads} heads")));
    }
    let dh = c / heads;
    let scale = 1.0 / libm::sqrt(dh as f64);
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                s.tape.narrow(q, 1, h * dh, dh)?,
                s.tape.narrow(k, 1, h * dh, dh)?,
                s.tape.narrow(v, 1, h * dh, dh)?,
            )
        };
        let kt = s.tape.transpose(kh)?;
        let logits = s.tape.matmul(qh, kt)?;
        let mut logits = s.tape.scale(logits, scale);
        if let Some(m) = mask {
            logits = s.tape.add(logits, m)?;
        }
        let a = s.tape.softmax(logits, 1)?;
        outs.push(s.tape.matmul(a, vh)?);
        weights.push(a);
    }
    let out = if heads == 1 { outs[0] } else { s.tape.concat(&outs, 1)? };
    Ok((out, weights))
}
