//! Ranking metrics written from scratch against threshold-sweep semantics.
//!
//! All three metrics sweep thresholds over the distinct score values, with
//! a prediction counted positive when `score >= threshold`. AUROC uses the
//! rank (Mann-Whitney) formulation with midranks for ties; AUPRC is average
//! precision (step-wise, no interpolation); min(Re, P+) is the maximum over
//! thresholds of `min(recall, precision)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::stream_rng;
use crate::{Error, Result};

const STREAM_BOOTSTRAP: u64 = 0x626f_6f74_0000_0000;

/// Scores with their binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<ScoredSet> {
        if scores.is_empty() {
            return Err(Error::Metric("empty scored set".into()));
        }
        if scores.len() != labels.len() {
            return Err(Error::Metric(format!(
                "{} scores vs {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Metric("scores must be finite".into()));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Metric("labels must be 0 or 1".into()));
        }
        Ok(ScoredSet { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// Area under the ROC curve via the Mann-Whitney statistic:
/// `P(score_pos > score_neg) + 0.5 * P(tie)`, computed with midranks.
pub fn auroc(s: &ScoredSet) -> Result<f64> {
    let n_pos = s.n_positive();
    let n_neg = s.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric(
            "AUROC needs at least one positive and one negative".into(),
        ));
    }
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s.scores[a].total_cmp(&s.scores[b]));
    // Midranks over tied score runs.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && s.scores[idx[j + 1]] == s.scores[idx[i]] {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0; // ranks are 1-based
        for &p in &idx[i..=j] {
            if s.labels[p] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Recall/precision pairs at every distinct-score threshold, in descending
/// threshold order. Shared by AUPRC and min(Re, P+).
fn pr_sweep(s: &ScoredSet) -> Result<Vec<(f64, f64)>> {
    let n_pos = s.n_positive();
    if n_pos == 0 {
        return Err(Error::Metric("PR metrics need at least one positive".into()));
    }
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s.scores[b].total_cmp(&s.scores[a]));
    let mut out = Vec::new();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && s.scores[idx[j + 1]] == s.scores[idx[i]] {
            j += 1;
        }
        for &p in &idx[i..=j] {
            if s.labels[p] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        out.push((recall, precision));
        i = j + 1;
    }
    Ok(out)
}

/// Average precision: `sum_n (R_n - R_{n-1}) * P_n` over descending-score
/// thresholds.
pub fn auprc(s: &ScoredSet) -> Result<f64> {
    let sweep = pr_sweep(s)?;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (recall, precision) in sweep {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Maximum over thresholds of `min(recall, precision)`.
pub fn min_re_p(s: &ScoredSet) -> Result<f64> {
    let sweep = pr_sweep(s)?;
    Ok(sweep
        .into_iter()
        .map(|(r, p)| r.min(p))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub mean: f64,
    pub std: f64,
    pub n_used: usize,
    pub n_skipped: usize,
}

/// Sample-level bootstrap of a metric.
///
/// Resamples with replacement; a resample lacking both classes is redrawn
/// up to 100 times and then skipped (the skip count is reported). The std
/// is the sample standard deviation across resamples.
pub fn bootstrap(
    s: &ScoredSet,
    n_resamples: usize,
    seed: u64,
    metric: impl Fn(&ScoredSet) -> Result<f64>,
) -> Result<BootstrapSummary> {
    if n_resamples == 0 {
        return Err(Error::Metric("bootstrap needs at least one resample".into()));
    }
    let n = s.len();
    let mut values = Vec::with_capacity(n_resamples);
    let mut skipped = 0usize;
    for b in 0..n_resamples {
        let mut rng = stream_rng(seed, STREAM_BOOTSTRAP + b as u64);
        let mut accepted = None;
        for _ in 0..100 {
            let mut scores = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            let mut pos = 0usize;
            for _ in 0..n {
                let i = rng.gen_range(0..n);
                scores.push(s.scores[i]);
                labels.push(s.labels[i]);
                pos += usize::from(s.labels[i] == 1);
            }
            if pos > 0 && pos < n {
                accepted = Some(ScoredSet { scores, labels });
                break;
            }
        }
        match accepted {
            Some(resample) => values.push(metric(&resample)?),
            None => skipped += 1,
        }
    }
    if values.is_empty() {
        return Err(Error::Metric(
            "bootstrap: every resample lacked both classes".into(),
        ));
    }
    let n_used = values.len();
    let mean = values.iter().sum::<f64>() / n_used as f64;
    let std = if n_used > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n_used - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(BootstrapSummary {
        mean,
        std,
        n_used,
        n_skipped: skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStats {
    pub count: usize,
    pub mean_s: f64,
    pub std_s: f64,
}

/// Mean stage variation per predicted-risk band. Absent bands are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskBandTable {
    pub low: Option<BandStats>,
    pub medium: Option<BandStats>,
    pub high: Option<BandStats>,
}

/// Partitions visits by predicted risk — low `y <= 0.4`, medium
/// `0.4 < y < 0.7`, high `y >= 0.7` (the 0.7 boundary goes to high) — and
/// reports the mean and std of the stage variation in each band.
pub fn risk_band_stage_table(visits: &[(f64, f64)]) -> Result<RiskBandTable> {
    if visits.is_empty() {
        return Err(Error::Input("risk-band table over zero visits".into()));
    }
    let mut bands: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for &(y_hat, s) in visits {
        let band = if y_hat <= 0.4 {
            0
        } else if y_hat < 0.7 {
            1
        } else {
            2
        };
        bands[band].push(s);
    }
    let summarize = |vals: &Vec<f64>| -> Option<BandStats> {
        if vals.is_empty() {
            return None;
        }
        let count = vals.len();
        let mean = vals.iter().sum::<f64>() / count as f64;
        let std = if count > 1 {
            (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(BandStats {
            count,
            mean_s: mean,
            std_s: std,
        })
    };
    Ok(RiskBandTable {
        low: summarize(&bands[0]),
        medium: summarize(&bands[1]),
        high: summarize(&bands[2]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub point: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSummary>,
}

/// The single-document evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_visits: usize,
    pub n_positives: usize,
    pub auroc: MetricSummary,
    pub auprc: MetricSummary,
    pub min_re_p: MetricSummary,
    pub risk_bands: RiskBandTable,
    /// Filled by the subtyping pipeline when clustering was run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ch_score: Option<f64>,
}
