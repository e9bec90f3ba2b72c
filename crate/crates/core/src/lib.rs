//! Stage-aware LSTM risk prediction over irregular clinical time series.
//!
//! The crate is organised around the model pipeline:
//!
//! * [`autodiff`] — reverse-mode automatic differentiation over dense `f64`
//!   arrays, plus a finite-difference gradient checker.
//! * [`cell`] — the stage-aware LSTM cell: cumulative-softmax master gates,
//!   time-interval conditioning, chunked gate sharing and the per-step
//!   stage-variation scalar.
//! * [`conv`] — the stage-adaptive convolutional module: stage-distance
//!   weights over an observation window, stage-weighted convolution,
//!   progression-theme pooling and squeeze-excite style re-calibration.
//! * [`model`] — end-to-end forward pass, masked cross-entropy loss, Adam,
//!   dropout/dropconnect, training loop and JSON checkpointing.
//! * [`data`] — dataset schema and IO, forward fill + normalization,
//!   batching with padding/masking, and a synthetic generator that plants
//!   stage change-points.
//! * [`eval`] — AUROC/AUPRC/min(Re,P+) with bootstrap intervals, risk-band
//!   stage-variation tables, k-means subtyping and the Calinski-Harabasz
//!   score.

pub mod autodiff;
pub mod cell;
pub mod conv;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
