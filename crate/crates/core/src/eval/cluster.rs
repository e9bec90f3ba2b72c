//! k-means subtyping and cluster quality.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{forward_fill_and_normalize, Dataset};
use crate::model::{predict_sequence, Checkpoint, LiveParams};
use crate::rng::stream_rng;
use crate::{Error, Result};

const STREAM_KMEANS: u64 = 0x6b6d_6561_0000_0000;

/// Result of one k-means fit.
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansFit {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding.
fn seed_centroids(x: &[Vec<f64>], k: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(x[rng.gen_range(0..n)].clone());
    while centroids.len() < k {
        let d2: Vec<f64> = x.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                r -= d;
                if r <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.push(x[next].clone());
    }
    centroids
}

/// Lloyd iterations from given centroids. Returns the fit plus the WCSS
/// after every iteration (used by the monotonicity property test).
fn lloyd(
    x: &[Vec<f64>],
    mut centroids: Vec<Vec<f64>>,
    max_iter: usize,
) -> (KmeansFit, Vec<f64>) {
    let n = x.len();
    let k = centroids.len();
    let d = x[0].len();
    let mut assignments = vec![0usize; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        // Assign.
        let mut changed = false;
        for (i, p) in x.iter().enumerate() {
            let (c, _) = nearest(p, &centroids);
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        // Re-seed empty clusters from the point farthest from its centroid.
        loop {
            let mut counts = vec![0usize; k];
            for &a in &assignments {
                counts[a] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let (farthest, _) = x
                .iter()
                .enumerate()
                .map(|(i, p)| (i, sq_dist(p, &centroids[assignments[i]])))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("nonempty data");
            centroids[empty] = x[farthest].clone();
            assignments[farthest] = empty;
            changed = true;
        }
        // Update.
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in x.iter().enumerate() {
            counts[assignments[i]] += 1;
            for j in 0..d {
                sums[assignments[i]][j] += p[j];
            }
        }
        for c in 0..k {
            for j in 0..d {
                centroids[c][j] = sums[c][j] / counts[c] as f64;
            }
        }
        let wcss: f64 = x
            .iter()
            .enumerate()
            .map(|(i, p)| sq_dist(p, &centroids[assignments[i]]))
            .sum();
        history.push(wcss);
        if !changed {
            break;
        }
    }
    let wcss = *history.last().expect("at least one iteration");
    (
        KmeansFit {
            assignments,
            centroids,
            wcss,
            iterations,
        },
        history,
    )
}

/// Lloyd's algorithm with k-means++ seeding. Keeps the best of `n_init`
/// seeded restarts by within-cluster sum of squares; converges when
/// assignments stabilise or after `max_iter` iterations.
pub fn kmeans(
    x: &[Vec<f64>],
    k: usize,
    seed: u64,
    n_init: usize,
    max_iter: usize,
) -> Result<KmeansFit> {
    let n = x.len();
    if k < 2 {
        return Err(Error::Input(format!("k must be at least 2, got {k}")));
    }
    if n < k {
        return Err(Error::Input(format!("{n} points cannot form {k} clusters")));
    }
    if n_init == 0 || max_iter == 0 {
        return Err(Error::Input("n_init and max_iter must be at least 1".into()));
    }
    let d = x[0].len();
    if x.iter().any(|p| p.len() != d) {
        return Err(Error::Input("points disagree on dimension".into()));
    }
    let mut best: Option<KmeansFit> = None;
    for restart in 0..n_init {
        let mut rng = stream_rng(seed, STREAM_KMEANS + restart as u64);
        let centroids = seed_centroids(x, k, &mut rng);
        let (fit, _) = lloyd(x, centroids, max_iter);
        if best.as_ref().map_or(true, |b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("n_init >= 1"))
}

/// Calinski-Harabasz score in trace form:
/// `[tr(B) / tr(W)] * [(m - k) / (k - 1)]` with
/// `tr(B) = sum_k n_k ||c_k - c_bar||^2` and
/// `tr(W) = sum_k sum_{x in k} ||x - c_k||^2`.
///
/// Returns `+inf` when `tr(W) = 0` (perfectly collapsed clusters).
pub fn calinski_harabasz(x: &[Vec<f64>], assignments: &[usize]) -> Result<f64> {
    let n = x.len();
    if n == 0 || assignments.len() != n {
        return Err(Error::Input("assignments must match the data".into()));
    }
    let k = assignments.iter().max().map_or(0, |&m| m + 1);
    if k < 2 {
        return Err(Error::Input("Calinski-Harabasz needs at least 2 clusters".into()));
    }
    if n <= k {
        return Err(Error::Input(format!(
            "Calinski-Harabasz needs more points ({n}) than clusters ({k})"
        )));
    }
    let d = x[0].len();
    let mut counts = vec![0usize; k];
    let mut centroids = vec![vec![0.0; d]; k];
    let mut overall = vec![0.0; d];
    for (p, &a) in x.iter().zip(assignments) {
        counts[a] += 1;
        for j in 0..d {
            centroids[a][j] += p[j];
            overall[j] += p[j];
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Input(format!("cluster {empty} is empty")));
    }
    for c in 0..k {
        for j in 0..d {
            centroids[c][j] /= counts[c] as f64;
        }
    }
    for j in 0..d {
        overall[j] /= n as f64;
    }
    let tr_b: f64 = (0..k)
        .map(|c| counts[c] as f64 * sq_dist(&centroids[c], &overall))
        .sum();
    let tr_w: f64 = x
        .iter()
        .zip(assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum();
    let factor = (n - k) as f64 / (k - 1) as f64;
    if tr_w == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(tr_b / tr_w * factor)
}

/// Subtyping output: cluster ids keyed by patient, cluster quality, and
/// per-cluster risk summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtypeResult {
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
    pub centroids: Vec<Vec<f64>>,
    /// `None` when the score is degenerate (`tr(W) = 0`).
    pub ch_score: Option<f64>,
    pub ch_degenerate: bool,
    pub cluster_sizes: Vec<usize>,
    /// Mean ground-truth label rate of each cluster's patients.
    pub cluster_label_rate: Vec<f64>,
    /// Mean predicted risk at the representation timestep.
    pub cluster_mean_risk: Vec<f64>,
}

/// Clusters patients by their learned representation at the last valid
/// timestep (`u_tilde`, or the hidden state under the plain-LSTM ablation).
///
/// The dataset is raw: it is filled and normalized with the checkpoint's
/// embedded statistics before the forward passes.
pub fn subtype(ckpt: &Checkpoint, dataset: &Dataset, k: usize, seed: u64) -> Result<SubtypeResult> {
    if dataset.len() < k {
        return Err(Error::Input(format!(
            "{} patients cannot form {k} clusters",
            dataset.len()
        )));
    }
    let params = ckpt.to_params()?;
    let lp = LiveParams::new(&params, false)?;
    let prepared = forward_fill_and_normalize(dataset, &ckpt.stats)?;

    let mut reps: Vec<Vec<f64>> = Vec::with_capacity(prepared.len());
    let mut ids: Vec<String> = Vec::with_capacity(prepared.len());
    let mut label_rates: Vec<f64> = Vec::with_capacity(prepared.len());
    let mut last_risk: Vec<f64> = Vec::with_capacity(prepared.len());
    for seq in &prepared.patients {
        let trace = predict_sequence(seq, &lp, &ckpt.config)?;
        let last = trace
            .steps
            .last()
            .ok_or_else(|| Error::Input(format!("patient {} has no valid steps", seq.patient_id)))?;
        reps.push(last.u_tilde.clone());
        ids.push(seq.patient_id.clone());
        let valid: Vec<u8> = seq
            .labels
            .iter()
            .zip(&seq.mask)
            .filter(|(_, &m)| m)
            .map(|(&l, _)| l)
            .collect();
        label_rates.push(valid.iter().map(|&l| f64::from(l)).sum::<f64>() / valid.len() as f64);
        last_risk.push(last.y_hat);
    }

    let fit = kmeans(&reps, k, seed, 10, 300)?;
    let ch = calinski_harabasz(&reps, &fit.assignments)?;
    let degenerate = ch.is_infinite();

    let mut sizes = vec![0usize; k];
    let mut rate_sum = vec![0.0; k];
    let mut risk_sum = vec![0.0; k];
    for (i, &a) in fit.assignments.iter().enumerate() {
        sizes[a] += 1;
        rate_sum[a] += label_rates[i];
        risk_sum[a] += last_risk[i];
    }
    let cluster_label_rate: Vec<f64> = (0..k).map(|c| rate_sum[c] / sizes[c] as f64).collect();
    let cluster_mean_risk: Vec<f64> = (0..k).map(|c| risk_sum[c] / sizes[c] as f64).collect();

    Ok(SubtypeResult {
        k,
        assignments: ids.into_iter().zip(fit.assignments).collect(),
        centroids: fit.centroids,
        ch_score: (!degenerate).then_some(ch),
        ch_degenerate: degenerate,
        cluster_sizes: sizes,
        cluster_label_rate,
        cluster_mean_risk,
    })
}

/// Best agreement between two labelings over all permutations of the
/// cluster ids: the fraction of points identically grouped under the best
/// relabeling. Both labelings must use ids in `[0, k)`.
pub fn best_map_agreement(a: &[usize], b: &[usize], k: usize) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0.0;
    permute(&mut perm, 0, &mut |p| {
        let matches = a
            .iter()
            .zip(b)
            .filter(|(&ai, &bi)| p[ai] == bi)
            .count();
        let frac = matches as f64 / a.len() as f64;
        if frac > best {
            best = frac;
        }
    });
    best
}

fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}
