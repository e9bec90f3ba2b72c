//! Stage-adaptive convolutional module.
//!
//! The module looks at the last `K` hidden states. Positions are weighted
//! by a softmax over the running total of normalized stage variation, so a
//! visit separated from the present by a lot of accumulated stage change
//! gets a low weight. The weighted window feeds a bank of full-width
//! convolution kernels (progression patterns) and a weighted-average
//! pooling (the progression theme); the theme drives a squeeze-excite
//! bottleneck that re-calibrates the patterns channel-wise.

use crate::autodiff::{concat, Value};
use crate::{Error, Result};

/// Differentiable handles to the module's parameters.
///
/// `w_conv` packs `n_hidden` kernels of shape `n_hidden x K` as one
/// `[n_hidden, K * n_hidden]` matrix with window-position-major layout:
/// kernel `i`, channel `j`, position `k` lives at column `k * n_hidden + j`.
/// `w_x2` squeezes the theme to the bottleneck, `w_x1` excites it back.
#[derive(Clone)]
pub struct ConvParams {
    pub w_conv: Value,
    pub w_x2: Value,
    pub w_x1: Value,
}

/// The rolling observation window, oldest position first.
///
/// Always holds exactly `K` entries; before step `K` the missing leading
/// positions are exact-zero hidden rows paired with exact-zero `s_norm`
/// entries, which contribute nothing to the convolution or the theme.
pub struct StageWindow {
    pub hidden: Vec<Value>,
    pub s_norms: Vec<Value>,
}

impl StageWindow {
    /// Builds the window from the at most `k` most recent
    /// `(hidden, s_norm)` pairs (oldest first), left-padding with zeros.
    pub fn build(recent: &[(Value, Value)], k: usize, n_hidden: usize) -> Result<StageWindow> {
        if recent.len() > k {
            return Err(Error::Input(format!(
                "window holds at most {k} states, got {}",
                recent.len()
            )));
        }
        let pad = k - recent.len();
        let mut hidden = Vec::with_capacity(k);
        let mut s_norms = Vec::with_capacity(k);
        for _ in 0..pad {
            hidden.push(Value::zeros(n_hidden));
            s_norms.push(Value::scalar(0.0));
        }
        for (h, s) in recent {
            hidden.push(h.clone());
            s_norms.push(s.clone());
        }
        Ok(StageWindow { hidden, s_norms })
    }

    pub fn k(&self) -> usize {
        self.hidden.len()
    }
}

/// Stage-distance weights over the window.
///
/// Softmax of the forward cumulative sum of the normalized stage
/// variations: nonnegative input makes the cumsum nondecreasing, so the
/// weights rise from the oldest position to the newest and sum to one.
pub fn stage_weights(window: &StageWindow) -> Result<Value> {
    let s = concat(&window.s_norms)?;
    s.cumsum_fwd()?.softmax()
}

/// Stage-weighted convolution: each window row is scaled by its stage
/// weight before correlation with every kernel. Output has one entry per
/// kernel.
pub fn stage_conv(window: &StageWindow, ds: &Value, w_conv: &Value) -> Result<Value> {
    if ds.len() != window.k() {
        return Err(Error::Dimension {
            op: "stage_conv",
            lhs: vec![window.k()],
            rhs: ds.shape(),
        });
    }
    let mut weighted = Vec::with_capacity(window.k());
    for (k, h) in window.hidden.iter().enumerate() {
        weighted.push(h.mul_scalar(&ds.slice(k, 1)?)?);
    }
    let flat = concat(&weighted)?;
    w_conv.matmul(&flat)
}

/// Progression theme: stage-weighted average of the window's hidden
/// states, scaled by `1 / K`.
pub fn progression_theme(window: &StageWindow, ds: &Value) -> Result<Value> {
    if ds.len() != window.k() {
        return Err(Error::Dimension {
            op: "progression_theme",
            lhs: vec![window.k()],
            rhs: ds.shape(),
        });
    }
    let mut acc = window.hidden[0].mul_scalar(&ds.slice(0, 1)?)?;
    for k in 1..window.k() {
        acc = acc.add(&window.hidden[k].mul_scalar(&ds.slice(k, 1)?)?)?;
    }
    Ok(acc.scale(1.0 / window.k() as f64))
}

#[cfg(test)]
mod tests;

/// Squeeze-excite re-calibration.
///
/// Maps the theme through a bottleneck to channel weights in (0, 1) and
/// scales the extracted patterns: `x = sigmoid(w_x1 · relu(w_x2 · z))`,
/// `u_tilde = u ⊙ x`. Returns `(u_tilde, x)`.
pub fn recalibrate(u: &Value, z: &Value, p: &ConvParams) -> Result<(Value, Value)> {
    let x = p.w_x1.matmul(&p.w_x2.matmul(z)?.relu())?.sigmoid();
    let u_tilde = u.mul(&x)?;
    Ok((u_tilde, x))
}
