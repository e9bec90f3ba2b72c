//! Full-model finite-difference gradient check on a synthetic batch.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{concat, grad_check, GradCheckReport};
use crate::data::PatientSequence;
use crate::rng::stream_rng;
use crate::Result;

use super::{forward, trace_loss, LiveParams, Mode, ModelConfig, ParamSet};

const STREAM_GRADCHECK: u64 = 0x6763_6865_0000_0000;

/// Problem size for [`gradcheck_model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradCheckDims {
    pub patients: usize,
    pub steps: usize,
    pub n_features: usize,
    pub hidden: usize,
    pub chunk: usize,
    pub window: usize,
}

impl Default for GradCheckDims {
    fn default() -> Self {
        GradCheckDims {
            patients: 2,
            steps: 6,
            n_features: 4,
            hidden: 8,
            chunk: 2,
            window: 3,
        }
    }
}

/// Checks the analytic gradient of the batch loss against central finite
/// differences for every parameter tensor, on a randomly drawn batch in
/// eval mode (no stochastic masks).
pub fn gradcheck_model(
    dims: &GradCheckDims,
    seed: u64,
    eps: f64,
    tol_rel: f64,
) -> Result<GradCheckReport> {
    let cfg = ModelConfig {
        n_features: dims.n_features,
        hidden: dims.hidden,
        chunk: dims.chunk,
        window: dims.window,
        bottleneck: (dims.hidden / 2).max(1),
        dropout_p: 0.0,
        dropconnect_p: 0.0,
        seed,
        ..ModelConfig::with_features(dims.n_features)
    };
    cfg.validate()?;
    let params = ParamSet::init(&cfg)?;

    let mut rng = stream_rng(seed, STREAM_GRADCHECK);
    let sequences: Vec<PatientSequence> = (0..dims.patients)
        .map(|i| {
            let t = dims.steps;
            PatientSequence {
                patient_id: format!("gc{i}"),
                visits: (0..t)
                    .map(|_| (0..dims.n_features).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect(),
                deltas: (0..t)
                    .map(|j| if j == 0 { 0.0 } else { rng.gen_range(0.2..2.0) })
                    .collect(),
                labels: (0..t).map(|j| u8::from((i + j) % 2 == 0)).collect(),
                mask: vec![true; t],
                change_points: None,
                archetype: None,
            }
        })
        .collect();

    let named = params.to_named_tensors();
    grad_check(&named, eps, tol_rel, |leaves| {
        let lp = LiveParams::from_leaves(leaves)?;
        let mut losses = Vec::with_capacity(sequences.len());
        for seq in &sequences {
            let mut dummy = stream_rng(0, 0);
            let trace = forward(seq, &lp, &cfg, Mode::Eval, &mut dummy)?;
            losses.push(trace_loss(&trace, seq, cfg.label_clip)?);
        }
        Ok(concat(&losses)?.mean())
    })
}
