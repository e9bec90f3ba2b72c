//! Synthetic piecewise-stationary EHR-like sequences with planted stage
//! change-points.
//!
//! Each patient's features follow a stage-specific mean with per-stage
//! drift and noise; at every change-point the mean jumps by a configured
//! magnitude. A patient enters a "deteriorating" stage with an
//! archetype-dependent probability, and the per-step label hazard rises
//! sharply inside deteriorating stages, so risk prediction requires
//! tracking stage changes. Ground-truth change-points and archetype ids
//! are recorded on every sequence.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng::stream_rng;
use crate::{Error, Result};

use super::{Dataset, PatientSequence};

// Stream-id offset keeping generator RNG disjoint from training RNG
// when both derive from the same user seed.
const GEN_STREAM_BASE: u64 = 0x6765_6e00_0000_0000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_patients: usize,
    pub n_features: usize,
    /// Sequence length range (inclusive).
    pub min_len: usize,
    pub max_len: usize,
    /// Stage count range (inclusive). Two or more plants change-points.
    pub min_stages: usize,
    pub max_stages: usize,
    /// Per-stage per-feature drift magnitude range (units per step).
    pub drift_min: f64,
    pub drift_max: f64,
    /// Per-stage observation noise std range.
    pub volatility_min: f64,
    pub volatility_max: f64,
    /// Absolute mean shift applied to every feature at a change-point.
    pub jump_magnitude: f64,
    /// Label hazard inside stable stages.
    pub base_hazard: f64,
    /// Peak label hazard at the onset of a deteriorating stage.
    pub deterioration_hazard: f64,
    /// Decay constant (in steps) of the hazard after deterioration onset;
    /// 0 keeps the whole deteriorating stage at the peak.
    pub hazard_tau: f64,
    /// Std of the per-patient random baseline added to every feature.
    /// Nonzero baselines decouple absolute feature levels from risk, so
    /// predicting risk requires detecting changes, not reading levels.
    pub baseline_sigma: f64,
    /// Multiplier on the inter-visit gap of a change-point visit: stage
    /// transitions tend to surface after unusually long absences.
    pub boundary_gap_factor: f64,
    /// Multiplier on drift and volatility inside deteriorating stages:
    /// deterioration is turbulent, stability is quiet. This is what links
    /// stage instability and feature drift to the label hazard.
    pub deterioration_turbulence: f64,
    /// Number of planted subtypes (distinct base profiles and risk mix).
    pub n_archetypes: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_patients: 200,
            n_features: 6,
            min_len: 20,
            max_len: 40,
            min_stages: 2,
            max_stages: 4,
            drift_min: 0.0,
            drift_max: 0.03,
            volatility_min: 0.15,
            volatility_max: 0.3,
            jump_magnitude: 1.0,
            base_hazard: 0.05,
            deterioration_hazard: 0.8,
            hazard_tau: 4.0,
            baseline_sigma: 1.5,
            boundary_gap_factor: 2.5,
            deterioration_turbulence: 4.0,
            n_archetypes: 2,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_patients == 0 {
            return bad("n_patients must be at least 1".into());
        }
        if self.n_features == 0 {
            return bad("n_features must be at least 1".into());
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad(format!(
                "length range [{}, {}] is empty or degenerate",
                self.min_len, self.max_len
            ));
        }
        if self.min_stages == 0 || self.min_stages > self.max_stages {
            return bad(format!(
                "stage range [{}, {}] is empty or degenerate",
                self.min_stages, self.max_stages
            ));
        }
        if self.drift_min < 0.0 || self.drift_min > self.drift_max {
            return bad(format!(
                "drift range [{}, {}] is invalid",
                self.drift_min, self.drift_max
            ));
        }
        if self.volatility_min < 0.0 || self.volatility_min > self.volatility_max {
            return bad(format!(
                "volatility range [{}, {}] is invalid",
                self.volatility_min, self.volatility_max
            ));
        }
        if self.jump_magnitude < 0.0 || !self.jump_magnitude.is_finite() {
            return bad(format!("jump_magnitude {} is invalid", self.jump_magnitude));
        }
        for (name, h) in [
            ("base_hazard", self.base_hazard),
            ("deterioration_hazard", self.deterioration_hazard),
        ] {
            if !(0.0..=1.0).contains(&h) {
                return bad(format!("{name} {h} is not a probability"));
            }
        }
        if self.hazard_tau < 0.0 || !self.hazard_tau.is_finite() {
            return bad(format!("hazard_tau {} is invalid", self.hazard_tau));
        }
        if self.baseline_sigma < 0.0 || !self.baseline_sigma.is_finite() {
            return bad(format!("baseline_sigma {} is invalid", self.baseline_sigma));
        }
        if self.boundary_gap_factor < 1.0 || !self.boundary_gap_factor.is_finite() {
            return bad(format!(
                "boundary_gap_factor {} must be at least 1",
                self.boundary_gap_factor
            ));
        }
        if self.deterioration_turbulence < 1.0 || !self.deterioration_turbulence.is_finite() {
            return bad(format!(
                "deterioration_turbulence {} must be at least 1",
                self.deterioration_turbulence
            ));
        }
        if self.n_archetypes == 0 {
            return bad("n_archetypes must be at least 1".into());
        }
        Ok(())
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Generates a dataset. Output is fully determined by the config; each
/// patient draws from its own derived stream, so patients are independent
/// of the total patient count ordering.
pub fn generate_synthetic(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let patients = (0..config.n_patients)
        .map(|i| generate_patient(config, i))
        .collect();
    Ok(Dataset { patients })
}

fn generate_patient(cfg: &GeneratorConfig, index: usize) -> PatientSequence {
    let mut rng = stream_rng(cfg.seed, GEN_STREAM_BASE + index as u64);
    let archetype = index % cfg.n_archetypes;
    let t = rng.gen_range(cfg.min_len..=cfg.max_len);
    let requested_stages = rng.gen_range(cfg.min_stages..=cfg.max_stages);
    // Keep at least 4 steps per stage so every stage has a body.
    let n_stages = requested_stages.min((t / 4).max(1));

    // Distinct interior change-points, sorted.
    let mut change_points: Vec<usize> = Vec::new();
    if n_stages > 1 {
        let lo = 3;
        let hi = t.saturating_sub(3).max(lo + 1);
        while change_points.len() < n_stages - 1 {
            let cp = rng.gen_range(lo..hi);
            if !change_points.contains(&cp)
                && change_points.iter().all(|&c| c.abs_diff(cp) >= 3)
            {
                change_points.push(cp);
            }
        }
        change_points.sort_unstable();
    }

    // Archetypes get disjoint elevated base features and different odds of
    // entering a deteriorating stage; on top of that every patient draws a
    // private baseline so absolute levels carry no risk information.
    let base: Vec<f64> = (0..cfg.n_features)
        .map(|j| {
            let arch = if j % cfg.n_archetypes == archetype { 1.5 } else { 0.0 };
            arch + cfg.baseline_sigma * standard_normal(&mut rng)
        })
        .collect();
    let arch_frac = if cfg.n_archetypes > 1 {
        archetype as f64 / (cfg.n_archetypes - 1) as f64
    } else {
        0.5
    };
    let det_prob = 0.3 + 0.45 * arch_frac;
    // Chronic-risk trait: the stable-stage hazard depends on the archetype,
    // so even quiet periods reward remembering who the patient is.
    let stable_hazard = cfg.base_hazard * (1.0 + 3.0 * arch_frac);

    // Per-stage regimes: mean trajectory start, drift, volatility, hazard.
    let mut stage_mean = base.clone();
    let mut deteriorating = false;
    let mut stage_start = 0usize;
    let mut next_cp = 0usize;

    let mut drift: Vec<f64> = sample_drift(cfg, &mut rng, false);
    let mut volatility = rng.gen_range(cfg.volatility_min..=cfg.volatility_max);

    let mut visits = Vec::with_capacity(t);
    let mut deltas = Vec::with_capacity(t);
    let mut labels = Vec::with_capacity(t);
    for step in 0..t {
        if next_cp < change_points.len() && step == change_points[next_cp] {
            deteriorating = rng.gen::<f64>() < det_prob;
            // Deterioration drags the marker feature down; recovery lifts it.
            let marker_sign = if deteriorating { -1.0 } else { 1.0 };
            for (j, m) in stage_mean.iter_mut().enumerate() {
                let sign = if j == 0 {
                    marker_sign
                } else if rng.gen::<f64>() < 0.5 {
                    -1.0
                } else {
                    1.0
                };
                *m += sign * cfg.jump_magnitude;
            }
            drift = sample_drift(cfg, &mut rng, deteriorating);
            volatility = rng.gen_range(cfg.volatility_min..=cfg.volatility_max)
                * if deteriorating { cfg.deterioration_turbulence } else { 1.0 };
            stage_start = step;
            next_cp += 1;
        }
        let within = (step - stage_start) as f64;
        let row: Vec<f64> = (0..cfg.n_features)
            .map(|j| stage_mean[j] + drift[j] * within + volatility * standard_normal(&mut rng))
            .collect();
        visits.push(row);
        let is_boundary = step > 0 && change_points.contains(&step);
        let gap = rng.gen_range(0.5..=2.5) * if is_boundary { cfg.boundary_gap_factor } else { 1.0 };
        deltas.push(if step == 0 { 0.0 } else { gap });
        let hazard = if deteriorating {
            if cfg.hazard_tau > 0.0 {
                let since = (step - stage_start) as f64;
                let decay = (-since / cfg.hazard_tau).exp();
                cfg.base_hazard + (cfg.deterioration_hazard - cfg.base_hazard) * decay
            } else {
                cfg.deterioration_hazard
            }
        } else {
            stable_hazard
        };
        labels.push(u8::from(rng.gen::<f64>() < hazard));
    }

    PatientSequence {
        patient_id: format!("p{index:05}"),
        visits,
        deltas,
        labels,
        mask: vec![true; t],
        change_points: Some(change_points),
        archetype: Some(archetype),
    }
}

fn sample_drift(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng, deteriorating: bool) -> Vec<f64> {
    let scale = if deteriorating { cfg.deterioration_turbulence } else { 1.0 };
    (0..cfg.n_features)
        .map(|j| {
            let magnitude = rng.gen_range(cfg.drift_min..=cfg.drift_max) * scale;
            // The marker keeps falling while the patient deteriorates.
            if deteriorating && j == 0 {
                -magnitude
            } else if rng.gen::<f64>() < 0.5 {
                -magnitude
            } else {
                magnitude
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = GeneratorConfig {
            n_patients: 10,
            ..GeneratorConfig::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_stage_has_no_change_points() {
        let cfg = GeneratorConfig {
            n_patients: 5,
            min_stages: 1,
            max_stages: 1,
            ..GeneratorConfig::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        for p in &ds.patients {
            assert_eq!(p.change_points.as_deref(), Some(&[][..]));
        }
    }

    #[test]
    fn zero_jump_keeps_features_stationary_across_boundaries() {
        let cfg = GeneratorConfig {
            n_patients: 20,
            min_stages: 2,
            max_stages: 2,
            jump_magnitude: 0.0,
            drift_min: 0.0,
            drift_max: 0.0,
            volatility_min: 0.2,
            volatility_max: 0.2,
            ..GeneratorConfig::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        // Change-points are still recorded even though nothing jumps.
        let mut pre = Vec::new();
        let mut post = Vec::new();
        for p in &ds.patients {
            let cps = p.change_points.as_ref().unwrap();
            assert_eq!(cps.len(), 1);
            let cp = cps[0];
            pre.extend(p.visits[..cp].iter().map(|r| r[1]));
            post.extend(p.visits[cp..].iter().map(|r| r[1]));
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            (mean(&pre) - mean(&post)).abs() < 0.1,
            "negative control: means should match, got {} vs {}",
            mean(&pre),
            mean(&post)
        );
    }

    #[test]
    fn jumps_move_the_mean_by_at_least_the_magnitude() {
        let cfg = GeneratorConfig {
            n_patients: 30,
            min_stages: 2,
            max_stages: 2,
            jump_magnitude: 2.0,
            drift_min: 0.0,
            drift_max: 0.0,
            volatility_min: 0.1,
            volatility_max: 0.1,
            ..GeneratorConfig::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        let mut shifts = Vec::new();
        for p in &ds.patients {
            let cp = p.change_points.as_ref().unwrap()[0];
            let pre: f64 =
                p.visits[..cp].iter().map(|r| r[0]).sum::<f64>() / cp as f64;
            let post: f64 = p.visits[cp..].iter().map(|r| r[0]).sum::<f64>()
                / (p.len() - cp) as f64;
            shifts.push((post - pre).abs());
        }
        let avg = shifts.iter().sum::<f64>() / shifts.len() as f64;
        assert!(avg > 1.5, "average marker shift {avg} too small");
    }

    #[test]
    fn degenerate_ranges_are_config_errors() {
        let cfg = GeneratorConfig {
            min_len: 10,
            max_len: 5,
            ..GeneratorConfig::default()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
        let cfg = GeneratorConfig {
            n_patients: 0,
            ..GeneratorConfig::default()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn deltas_start_at_zero_and_stay_positive() {
        let ds = generate_synthetic(&GeneratorConfig {
            n_patients: 8,
            ..GeneratorConfig::default()
        })
        .unwrap();
        for p in &ds.patients {
            assert_eq!(p.deltas[0], 0.0);
            assert!(p.deltas[1..].iter().all(|&d| d > 0.0));
            p.validate().unwrap();
        }
    }
}
