//! Evaluation: ranking metrics with bootstrap intervals, risk-band
//! stage-variation tables, k-means subtyping and the Calinski-Harabasz
//! score.

mod cluster;
mod metrics;

pub use cluster::{
    best_map_agreement, calinski_harabasz, kmeans, subtype, KmeansFit, SubtypeResult,
};
pub use metrics::{
    auprc, auroc, bootstrap, min_re_p, risk_band_stage_table, BandStats, BootstrapSummary,
    MetricSummary, MetricsReport, RiskBandTable, ScoredSet,
};
