//! Training loop: seeded shuffling, batching, backprop, Adam,
//! best-checkpoint retention by validation AUPRC.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::concat;
use crate::data::{batch, Dataset, FeatureStats};
use crate::eval::{auprc, auroc, min_re_p, ScoredSet};
use crate::rng::stream_rng;
use crate::{Error, Result};

use super::{
    adam_step, clip_global_norm, forward, predict_sequence, trace_loss, Checkpoint, LiveParams,
    Mode, ModelConfig, ParamSet,
};

const STREAM_TRAIN: u64 = 0x7472_6169_0000_0000;
const MAX_GRAD_NORM: f64 = 5.0;

/// One metrics-log row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_auprc: f64,
    pub valid_auroc: f64,
    pub valid_min_re_p: f64,
    pub wall_time_s: f64,
}

pub struct TrainOutcome {
    /// Snapshot (parameters, moments, step counter) at the epoch with the
    /// best validation AUPRC.
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// Pooled per-visit scores and labels of a dataset under frozen parameters.
fn validation_scores(
    params: &ParamSet,
    cfg: &ModelConfig,
    dataset: &Dataset,
) -> Result<ScoredSet> {
    let lp = LiveParams::new(params, false)?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for seq in &dataset.patients {
        let trace = predict_sequence(seq, &lp, cfg)?;
        for step in &trace.steps {
            scores.push(step.y_hat);
            labels.push(seq.labels[step.t]);
        }
    }
    ScoredSet::new(scores, labels)
}

/// Trains from scratch or from an initial checkpoint.
///
/// Datasets must already be filled and normalized; `stats` are embedded in
/// the returned checkpoint so prediction on raw data is self-contained.
/// `on_epoch` fires after every epoch with the fresh log row.
pub fn train(
    cfg: &ModelConfig,
    train_set: &Dataset,
    valid_set: &Dataset,
    stats: &FeatureStats,
    init: Option<&Checkpoint>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::Input("training and validation sets must be nonempty".into()));
    }
    for ds in [train_set, valid_set] {
        for p in &ds.patients {
            if p.n_features() != cfg.n_features {
                return Err(Error::Input(format!(
                    "patient {}: {} features, model expects {}",
                    p.patient_id,
                    p.n_features(),
                    cfg.n_features
                )));
            }
        }
    }

    let mut params = match init {
        Some(ckpt) => {
            let restored = ckpt.to_params()?;
            // Shape-affecting fields must agree with the current config.
            let same_arch = ckpt.config.n_features == cfg.n_features
                && ckpt.config.hidden == cfg.hidden
                && ckpt.config.chunk == cfg.chunk
                && ckpt.config.window == cfg.window
                && ckpt.config.bottleneck == cfg.bottleneck;
            if !same_arch {
                return Err(Error::Checkpoint(
                    "checkpoint architecture does not match the requested config".into(),
                ));
            }
            restored
        }
        None => ParamSet::init(cfg)?,
    };

    let mut rng = stream_rng(cfg.seed, STREAM_TRAIN);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, ParamSet, usize)> = None;

    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let mut shuffled = train_set.patients.clone();
        shuffled.shuffle(&mut rng);
        let batches = batch(&shuffled, cfg.batch_size, cfg.max_len)?;

        let mut loss_sum = 0.0;
        let mut n_patients = 0usize;
        for (bi, group) in batches.iter().enumerate() {
            let lp = if cfg.dropconnect_p > 0.0 {
                LiveParams::with_dropconnect(&params, cfg.dropconnect_p, &mut rng)?
            } else {
                LiveParams::new(&params, true)?
            };
            let mut losses = Vec::with_capacity(group.len());
            for seq in group {
                let trace = forward(seq, &lp, cfg, Mode::Train, &mut rng)?;
                losses.push(trace_loss(&trace, seq, cfg.label_clip)?);
            }
            let batch_loss = concat(&losses)?.mean();
            let loss_value = batch_loss.item();
            if !loss_value.is_finite() {
                return Err(Error::Training(format!(
                    "loss diverged at epoch {epoch}, batch {bi}"
                )));
            }
            batch_loss.backward()?;
            let mut grads = lp.leaf_grads();
            clip_global_norm(&mut grads, MAX_GRAD_NORM);
            adam_step(&mut params, &grads, cfg)
                .map_err(|e| Error::Training(format!("epoch {epoch}, batch {bi}: {e}")))?;
            loss_sum += loss_value * group.len() as f64;
            n_patients += group.len();
        }

        let valid = validation_scores(&params, cfg, valid_set)?;
        let row = EpochLog {
            epoch,
            train_loss: loss_sum / n_patients as f64,
            valid_auprc: auprc(&valid)?,
            valid_auroc: auroc(&valid)?,
            valid_min_re_p: min_re_p(&valid)?,
            wall_time_s: t0.elapsed().as_secs_f64(),
        };
        let improved = best
            .as_ref()
            .map_or(true, |(b, _, _)| row.valid_auprc > *b);
        if improved {
            best = Some((row.valid_auprc, params.clone(), epoch));
        }
        on_epoch(&row);
        log.push(row);
    }

    let (_, best_params, best_epoch) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        checkpoint: Checkpoint::from_params(cfg, &best_params, stats, best_epoch),
        log,
    })
}
