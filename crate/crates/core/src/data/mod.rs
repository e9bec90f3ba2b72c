//! Dataset schema, ingestion, normalization, batching and synthesis.
//!
//! A dataset is a list of per-patient visit sequences. On disk it is
//! JSON-lines, one patient per line:
//!
//! ```text
//! {"patient_id": "p0001", "deltas": [0.0, 1.5], "labels": [0, 1],
//!  "visits": [[0.1, null], [0.2, 0.3]], "change_points": [1]}
//! ```
//!
//! `null` marks a missing measurement and becomes `NaN` in memory until
//! [`forward_fill_and_normalize`] replaces it. `change_points` (and
//! `archetype`) are optional ground-truth annotations emitted by the
//! synthetic generator.

mod csv_import;
mod generate;
mod io;

pub use csv_import::import_csv;
pub use generate::{generate_synthetic, GeneratorConfig};
pub use io::{load_dataset, save_dataset};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One patient's ordered visit records.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientSequence {
    pub patient_id: String,
    /// `T x n_features`, `NaN` = missing.
    pub visits: Vec<Vec<f64>>,
    /// Elapsed time since the previous visit; `deltas[0] = 0`.
    pub deltas: Vec<f64>,
    /// Per-step binary outcome.
    pub labels: Vec<u8>,
    /// Validity bits; padding introduced by batching clears them.
    pub mask: Vec<bool>,
    /// First timestep of each new stage (synthetic data only).
    pub change_points: Option<Vec<usize>>,
    /// Planted subtype id (synthetic data only).
    pub archetype: Option<usize>,
}

impl PatientSequence {
    pub fn len(&self) -> usize {
        self.visits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visits.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.visits.first().map_or(0, Vec::len)
    }

    pub fn n_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Structural validation: consistent lengths, nonnegative deltas
    /// starting at zero, binary labels, finite observed values.
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &'static str, message: String| {
            Err(Error::Load {
                patient_id: self.patient_id.clone(),
                field,
                message,
            })
        };
        let t = self.visits.len();
        if t == 0 {
            return fail("visits", "sequence is empty".into());
        }
        if self.deltas.len() != t || self.labels.len() != t || self.mask.len() != t {
            return fail(
                "visits",
                format!(
                    "inconsistent lengths: visits {t}, deltas {}, labels {}, mask {}",
                    self.deltas.len(),
                    self.labels.len(),
                    self.mask.len()
                ),
            );
        }
        let n_features = self.visits[0].len();
        if n_features == 0 {
            return fail("visits", "zero features per visit".into());
        }
        for (i, row) in self.visits.iter().enumerate() {
            if row.len() != n_features {
                return fail(
                    "visits",
                    format!("row {i} has {} features, expected {n_features}", row.len()),
                );
            }
            for &x in row {
                if x.is_infinite() {
                    return fail("visits", format!("row {i} contains an infinite value"));
                }
            }
        }
        for (i, &d) in self.deltas.iter().enumerate() {
            if !d.is_finite() || d < 0.0 {
                return fail("deltas", format!("delta {d} at step {i} is invalid"));
            }
        }
        if self.deltas[0] != 0.0 {
            return fail("deltas", format!("first delta must be 0, got {}", self.deltas[0]));
        }
        for (i, &y) in self.labels.iter().enumerate() {
            if y > 1 {
                return fail("labels", format!("label {y} at step {i} is not binary"));
            }
        }
        if let Some(cps) = &self.change_points {
            for w in cps.windows(2) {
                if w[1] <= w[0] {
                    return fail("change_points", "indices must be strictly increasing".into());
                }
            }
            if cps.iter().any(|&cp| cp >= t) {
                return fail("change_points", format!("index out of range for length {t}"));
            }
        }
        Ok(())
    }
}

/// A loaded dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub patients: Vec<PatientSequence>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.patients.first().map_or(0, PatientSequence::n_features)
    }
}

/// Per-feature mean and standard deviation, fit on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Fits over all observed (non-missing) values of the training split.
    /// Every feature must be observed at least once; std is floored at 1e-6.
    pub fn fit(train: &Dataset) -> Result<FeatureStats> {
        if train.is_empty() {
            return Err(Error::Stats("cannot fit stats on an empty dataset".into()));
        }
        let d = train.n_features();
        let mut count = vec![0usize; d];
        let mut mean = vec![0.0; d];
        let mut m2 = vec![0.0; d];
        for p in &train.patients {
            for row in &p.visits {
                for (j, &x) in row.iter().enumerate() {
                    if x.is_nan() {
                        continue;
                    }
                    count[j] += 1;
                    let delta = x - mean[j];
                    mean[j] += delta / count[j] as f64;
                    m2[j] += delta * (x - mean[j]);
                }
            }
        }
        let mut std = vec![0.0; d];
        for j in 0..d {
            if count[j] == 0 {
                return Err(Error::Stats(format!(
                    "feature {j} has no observed values in the training split"
                )));
            }
            let var = if count[j] > 1 {
                m2[j] / (count[j] - 1) as f64
            } else {
                0.0
            };
            std[j] = var.sqrt().max(1e-6);
        }
        Ok(FeatureStats { mean, std })
    }
}

/// Forward-fills missing values and z-scores every feature.
///
/// A missing entry takes the most recent prior observation of the same
/// feature for the same patient, or the training mean when nothing precedes
/// it. Statistics must come from the training split only.
pub fn forward_fill_and_normalize(dataset: &Dataset, stats: &FeatureStats) -> Result<Dataset> {
    let d = stats.mean.len();
    let mut out = dataset.clone();
    for p in &mut out.patients {
        if p.n_features() != d {
            return Err(Error::Load {
                patient_id: p.patient_id.clone(),
                field: "visits",
                message: format!("{} features, stats expect {d}", p.n_features()),
            });
        }
        let mut last_seen: Vec<Option<f64>> = vec![None; d];
        for row in &mut p.visits {
            for j in 0..d {
                if row[j].is_nan() {
                    row[j] = last_seen[j].unwrap_or(stats.mean[j]);
                } else {
                    last_seen[j] = Some(row[j]);
                }
                row[j] = (row[j] - stats.mean[j]) / stats.std[j];
            }
        }
    }
    Ok(out)
}

/// Forward fill only, without scaling. Exposed for idempotence checks.
pub fn forward_fill(seq: &PatientSequence, fallback: &[f64]) -> PatientSequence {
    let mut out = seq.clone();
    let d = out.n_features();
    let mut last_seen: Vec<Option<f64>> = vec![None; d];
    for row in &mut out.visits {
        for j in 0..d {
            if row[j].is_nan() {
                row[j] = last_seen[j].unwrap_or(fallback[j]);
            } else {
                last_seen[j] = Some(row[j]);
            }
        }
    }
    out
}

/// Truncates to the most recent `max_len` steps, shifting change-point
/// annotations accordingly.
pub fn truncate_to_recent(seq: &PatientSequence, max_len: usize) -> PatientSequence {
    let t = seq.len();
    if t <= max_len {
        return seq.clone();
    }
    let cut = t - max_len;
    PatientSequence {
        patient_id: seq.patient_id.clone(),
        visits: seq.visits[cut..].to_vec(),
        deltas: seq.deltas[cut..].to_vec(),
        labels: seq.labels[cut..].to_vec(),
        mask: seq.mask[cut..].to_vec(),
        change_points: seq.change_points.as_ref().map(|cps| {
            cps.iter()
                .filter(|&&cp| cp >= cut)
                .map(|&cp| cp - cut)
                .collect()
        }),
        archetype: seq.archetype,
    }
}

/// Groups sequences into batches, truncating long sequences to their most
/// recent `max_len` steps and right-padding within each batch to the batch
/// maximum. Padded steps carry `mask = false` and never reach the loss or
/// the metrics.
pub fn batch(
    patients: &[PatientSequence],
    batch_size: usize,
    max_len: usize,
) -> Result<Vec<Vec<PatientSequence>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    if max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    let mut batches = Vec::new();
    for group in patients.chunks(batch_size) {
        let truncated: Vec<PatientSequence> =
            group.iter().map(|p| truncate_to_recent(p, max_len)).collect();
        let longest = truncated.iter().map(PatientSequence::len).max().unwrap_or(0);
        let mut padded = Vec::with_capacity(truncated.len());
        for mut p in truncated {
            let d = p.n_features();
            while p.len() < longest {
                p.visits.push(vec![0.0; d]);
                p.deltas.push(0.0);
                p.labels.push(0);
                p.mask.push(false);
            }
            padded.push(p);
        }
        batches.push(padded);
    }
    Ok(batches)
}
