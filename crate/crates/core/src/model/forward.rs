//! Forward pass, loss, and plain-data prediction traces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{concat, free_graph, Value};
use crate::cell::{unroll, MasterGateMode};
use crate::conv::{progression_theme, recalibrate, stage_conv, stage_weights, StageWindow};
use crate::data::PatientSequence;
use crate::{Error, Result};

use super::{Ablation, LiveParams, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Differentiable per-step outputs for one sequence.
pub struct StepTrace {
    /// Index into the original sequence.
    pub t: usize,
    /// Predicted risk, length-1 value in (0, 1).
    pub y_hat: Value,
    pub s: f64,
    pub s_norm: f64,
    pub h: Value,
    /// Re-calibrated progression patterns; absent under the plain-LSTM
    /// ablation.
    pub u_tilde: Option<Value>,
}

pub struct ForwardTrace {
    pub steps: Vec<StepTrace>,
}

/// Runs the model over one sequence.
///
/// Per valid step: stage-aware cell, rolling observation window, stage
/// weights, stage-weighted convolution, progression theme, re-calibration,
/// then `y = sigmoid(w_y (u_tilde + h) + b_y)`. In train mode, inverted
/// dropout is applied to `u_tilde + h` before the output affine; eval mode
/// applies no masks and needs no rescaling.
pub fn forward(
    seq: &PatientSequence,
    lp: &LiveParams,
    cfg: &ModelConfig,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<ForwardTrace> {
    if seq.n_features() != cfg.n_features {
        return Err(Error::Input(format!(
            "patient {}: {} features, model expects {}",
            seq.patient_id,
            seq.n_features(),
            cfg.n_features
        )));
    }
    let gate_mode = match cfg.ablation {
        Ablation::Full => MasterGateMode::Learned,
        Ablation::PlainLstm => MasterGateMode::AllOnes,
    };
    let states = unroll(seq, &lp.cell, cfg.hidden, cfg.chunk, cfg.delta_scale, gate_mode)?;

    let mut steps = Vec::with_capacity(states.len());
    let mut recent: Vec<(Value, Value)> = Vec::new();
    for step in &states {
        let state = &step.state;
        let (u_tilde, rep) = match cfg.ablation {
            Ablation::Full => {
                recent.push((state.h.clone(), state.s_norm.clone()));
                let lo = recent.len().saturating_sub(cfg.window);
                let window = StageWindow::build(&recent[lo..], cfg.window, cfg.hidden)?;
                let ds = stage_weights(&window)?;
                let u = stage_conv(&window, &ds, &lp.conv.w_conv)?;
                let z = progression_theme(&window, &ds)?;
                let (u_tilde, _x) = recalibrate(&u, &z, &lp.conv)?;
                let rep = u_tilde.add(&state.h)?;
                (Some(u_tilde), rep)
            }
            Ablation::PlainLstm => (None, state.h.clone()),
        };
        let rep = if mode == Mode::Train && cfg.dropout_p > 0.0 {
            let keep = 1.0 - cfg.dropout_p;
            let mask: Vec<f64> = (0..rep.len())
                .map(|_| {
                    if rng.gen::<f64>() < cfg.dropout_p {
                        0.0
                    } else {
                        1.0 / keep
                    }
                })
                .collect();
            rep.mul(&Value::constant(mask))?
        } else {
            rep
        };
        let y_hat = lp.w_y.matmul(&rep)?.add(&lp.b_y)?.sigmoid();
        steps.push(StepTrace {
            t: step.t,
            y_hat,
            s: state.s,
            s_norm: state.s_norm.item(),
            h: state.h.clone(),
            u_tilde,
        });
    }
    Ok(ForwardTrace { steps })
}

/// Masked mean binary cross-entropy over one sequence's predictions.
///
/// Predictions are clamped to `[clip, 1 - clip]` before the logs.
pub fn sequence_loss(y_hats: &[Value], labels: &[u8], clip: f64) -> Result<Value> {
    if y_hats.is_empty() {
        return Err(Error::Input("loss over zero valid steps".into()));
    }
    if y_hats.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} predictions vs {} labels",
            y_hats.len(),
            labels.len()
        )));
    }
    let n = y_hats.len();
    let yv = concat(y_hats)?;
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let y_const = Value::constant(y.clone());
    let one_minus_y = Value::constant(y.iter().map(|v| 1.0 - v).collect());
    let ones = Value::constant(vec![1.0; n]);
    let p = yv.clamp(clip, 1.0 - clip);
    let q = ones.sub(&p)?;
    let term = y_const.mul(&p.ln())?.add(&one_minus_y.mul(&q.ln())?)?;
    Ok(term.mean().scale(-1.0))
}

/// Loss of a forward trace against the sequence's labels.
pub fn trace_loss(trace: &ForwardTrace, seq: &PatientSequence, clip: f64) -> Result<Value> {
    let y_hats: Vec<Value> = trace.steps.iter().map(|s| s.y_hat.clone()).collect();
    let labels: Vec<u8> = trace.steps.iter().map(|s| seq.labels[s.t]).collect();
    sequence_loss(&y_hats, &labels, clip)
}

/// Plain-data per-step prediction outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionStep {
    pub t: usize,
    pub y_hat: f64,
    pub s: f64,
    pub s_norm: f64,
    /// Representation kept for subtyping; the hidden state under the
    /// plain-LSTM ablation.
    pub u_tilde: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTrace {
    pub patient_id: String,
    pub steps: Vec<PredictionStep>,
}

/// Deterministic eval-mode forward returning plain data. The computation
/// graph is freed before returning.
pub fn predict_sequence(
    seq: &PatientSequence,
    lp: &LiveParams,
    cfg: &ModelConfig,
) -> Result<PredictionTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let trace = forward(seq, lp, cfg, Mode::Eval, &mut rng)?;
    let steps = trace
        .steps
        .iter()
        .map(|s| PredictionStep {
            t: s.t,
            y_hat: s.y_hat.item(),
            s: s.s,
            s_norm: s.s_norm,
            u_tilde: s
                .u_tilde
                .as_ref()
                .map_or_else(|| s.h.to_vec(), Value::to_vec),
            h: s.h.to_vec(),
        })
        .collect();
    let mut roots: Vec<&Value> = Vec::new();
    for s in &trace.steps {
        roots.push(&s.y_hat);
        roots.push(&s.h);
        if let Some(u) = &s.u_tilde {
            roots.push(u);
        }
    }
    free_graph(&roots);
    Ok(PredictionTrace {
        patient_id: seq.patient_id.clone(),
        steps,
    })
}
