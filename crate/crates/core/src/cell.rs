//! Stage-aware LSTM cell.
//!
//! On top of the usual forget/input/output gates, the cell carries two
//! *master* gates computed as cumulative softmaxes: the master forget gate
//! rises monotonically from ~0 to 1, the master input gate falls from 1 to
//! ~0. They softly split the cell state into long-horizon and short-horizon
//! storage, and their overlap decides where the standard LSTM update
//! applies. Every affine map sees the elapsed-time interval appended to its
//! input, so irregular visit spacing conditions the gating directly.
//!
//! The mean of the master forget gate yields a per-step stage-variation
//! scalar: when little of the old cell state survives, the patient has
//! likely entered a new stage.

use crate::autodiff::{concat, Value};
use crate::data::PatientSequence;
use crate::{Error, Result};

/// Differentiable handles to the cell's parameters.
///
/// `w_*` consume the feature vector with the time interval appended
/// (`n_features + 1` columns); `u_*` consume the previous hidden state with
/// the interval appended (`n_hidden + 1` columns). Master-gate maps
/// (`*_mf`, `*_mi`) produce `n_hidden / chunk` logits, the rest produce
/// `n_hidden`.
#[derive(Clone)]
pub struct CellParams {
    pub w_mf: Value,
    pub u_mf: Value,
    pub b_mf: Value,
    pub w_mi: Value,
    pub u_mi: Value,
    pub b_mi: Value,
    pub w_f: Value,
    pub u_f: Value,
    pub b_f: Value,
    pub w_i: Value,
    pub u_i: Value,
    pub b_i: Value,
    pub w_o: Value,
    pub u_o: Value,
    pub b_o: Value,
    pub w_c: Value,
    pub u_c: Value,
    pub b_c: Value,
}

/// Cell output at one timestep.
#[derive(Clone)]
pub struct StageCellState {
    /// Hidden state, length `n_hidden`.
    pub h: Value,
    /// Cell state, length `n_hidden`.
    pub c: Value,
    /// Normalized stage variation `1 - mean(master forget gate)`,
    /// kept differentiable for the stage-distance weights downstream.
    pub s_norm: Value,
    /// Stage variation `master_dim * s_norm + 1`, in `[1, master_dim + 1)`.
    pub s: f64,
}

impl StageCellState {
    /// All-zero initial state (`s = 1`: nothing has been forgotten yet).
    pub fn zeros(n_hidden: usize) -> Self {
        StageCellState {
            h: Value::zeros(n_hidden),
            c: Value::zeros(n_hidden),
            s_norm: Value::scalar(0.0),
            s: 1.0,
        }
    }
}

/// Whether the master gates are learned or pinned to all-ones
/// (the plain-LSTM ablation).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MasterGateMode {
    Learned,
    AllOnes,
}

fn affine(w: &Value, x: &Value, u: &Value, r: &Value, b: &Value) -> Result<Value> {
    w.matmul(x)?.add(&u.matmul(r)?)?.add(b)
}

/// Master gates from explicit probability distributions: forward cumulative
/// sum for the forget gate, backward for the input gate.
pub fn master_gates_from_probs(p_f: &Value, p_i: &Value) -> Result<(Value, Value)> {
    Ok((p_f.cumsum_fwd()?, p_i.cumsum_bwd()?))
}

/// Computes the chunked master gates for one step.
///
/// Returns `(f_tilde, i_tilde, p_f)`: the cumulative-softmax master forget
/// and input gates (length `master_dim`) and the forget-gate distribution
/// they were derived from.
pub fn master_gates(
    v: &Value,
    delta: &Value,
    h_prev: &Value,
    p: &CellParams,
) -> Result<(Value, Value, Value)> {
    let x = concat(&[v.clone(), delta.clone()])?;
    let r = concat(&[h_prev.clone(), delta.clone()])?;
    let p_f = affine(&p.w_mf, &x, &p.u_mf, &r, &p.b_mf)?.softmax()?;
    let p_i = affine(&p.w_mi, &x, &p.u_mi, &r, &p.b_mi)?.softmax()?;
    let (f_tilde, i_tilde) = master_gates_from_probs(&p_f, &p_i)?;
    Ok((f_tilde, i_tilde, p_f))
}

/// Stage variation from the chunked master forget gate.
///
/// Returns `(s, s_norm)` with `s_norm = 1 - mean(f_tilde)` and
/// `s = master_dim * s_norm + 1`, so `s` estimates the first gate index
/// that retains history: large values mean little history survived.
pub fn stage_variation(f_tilde: &Value) -> (f64, Value) {
    let master_dim = f_tilde.len();
    let s_norm = f_tilde.mean().scale(-1.0).shift(1.0);
    let s = master_dim as f64 * s_norm.item() + 1.0;
    (s, s_norm)
}

/// The cell-state update given expanded (length `n_hidden`) master gates.
///
/// `w = f_tilde ⊙ i_tilde` marks dimensions holding the overlap of old and
/// new information; the leftovers `f_tilde - w` and `i_tilde - w` keep the
/// non-overlapping parts of the previous cell state and the candidate.
pub fn cell_core(
    f_tilde_exp: &Value,
    i_tilde_exp: &Value,
    f: &Value,
    i: &Value,
    o: &Value,
    c_hat: &Value,
    c_prev: &Value,
) -> Result<(Value, Value)> {
    let w = f_tilde_exp.mul(i_tilde_exp)?;
    let overlap = w.mul(&f.mul(c_prev)?.add(&i.mul(c_hat)?)?)?;
    let old = f_tilde_exp.sub(&w)?.mul(c_prev)?;
    let fresh = i_tilde_exp.sub(&w)?.mul(c_hat)?;
    let c = overlap.add(&old)?.add(&fresh)?;
    let h = o.mul(&c.tanh())?;
    Ok((c, h))
}

/// One full step of the stage-aware cell.
///
/// `delta_scaled` must already be divided by the configured delta scale.
/// With `MasterGateMode::AllOnes` the update reduces to a standard LSTM
/// (`c = f ⊙ c_prev + i ⊙ c_hat`) and `s` is pinned to 1.
pub fn cell_step(
    v_t: &[f64],
    delta_scaled: f64,
    prev: &StageCellState,
    p: &CellParams,
    chunk: usize,
    mode: MasterGateMode,
) -> Result<StageCellState> {
    let n_hidden = prev.h.len();
    let v = Value::constant(v_t.to_vec());
    let delta = Value::scalar(delta_scaled);
    let x = concat(&[v.clone(), delta.clone()])?;
    let r = concat(&[prev.h.clone(), delta.clone()])?;

    let f_gate = affine(&p.w_f, &x, &p.u_f, &r, &p.b_f)?.sigmoid();
    let i_gate = affine(&p.w_i, &x, &p.u_i, &r, &p.b_i)?.sigmoid();
    let o_gate = affine(&p.w_o, &x, &p.u_o, &r, &p.b_o)?.sigmoid();
    let c_hat = affine(&p.w_c, &x, &p.u_c, &r, &p.b_c)?.tanh();

    match mode {
        MasterGateMode::Learned => {
            let (f_tilde, i_tilde, _p_f) = master_gates(&v, &delta, &prev.h, p)?;
            let f_exp = f_tilde.repeat_chunks(chunk)?;
            let i_exp = i_tilde.repeat_chunks(chunk)?;
            let (c, h) = cell_core(&f_exp, &i_exp, &f_gate, &i_gate, &o_gate, &c_hat, &prev.c)?;
            let (s, s_norm) = stage_variation(&f_tilde);
            Ok(StageCellState { h, c, s_norm, s })
        }
        MasterGateMode::AllOnes => {
            let ones = Value::constant(vec![1.0; n_hidden]);
            let (c, h) = cell_core(&ones, &ones, &f_gate, &i_gate, &o_gate, &c_hat, &prev.c)?;
            Ok(StageCellState {
                h,
                c,
                s_norm: Value::scalar(0.0),
                s: 1.0,
            })
        }
    }
}

/// Cell states for the valid steps of a sequence, in order.
pub struct UnrollStep {
    /// Index into the original sequence.
    pub t: usize,
    pub state: StageCellState,
}


/// Applies [`cell_step`] over all valid timesteps from a zero initial
/// state. Masked (padded) steps carry the state through unchanged and
/// produce no output.
pub fn unroll(
    seq: &PatientSequence,
    p: &CellParams,
    n_hidden: usize,
    chunk: usize,
    delta_scale: f64,
    mode: MasterGateMode,
) -> Result<Vec<UnrollStep>> {
    if seq.len() == 0 || !seq.mask.iter().any(|&m| m) {
        return Err(Error::Input(format!(
            "patient {}: no valid timesteps to unroll",
            seq.patient_id
        )));
    }
    let mut state = StageCellState::zeros(n_hidden);
    let mut steps = Vec::with_capacity(seq.len());
    for t in 0..seq.len() {
        if !seq.mask[t] {
            continue;
        }
        let delta = seq.deltas[t] / delta_scale;
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::Input(format!(
                "patient {}: invalid time interval {} at step {t}",
                seq.patient_id, seq.deltas[t]
            )));
        }
        state = cell_step(&seq.visits[t], delta, &state, p, chunk, mode)?;
        steps.push(UnrollStep {
            t,
            state: state.clone(),
        });
    }
    Ok(steps)
}
