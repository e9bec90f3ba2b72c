use stagenet_core::data::{forward_fill_and_normalize, generate_synthetic, Dataset, FeatureStats, GeneratorConfig};
use stagenet_core::eval::{auprc, auroc, risk_band_stage_table, ScoredSet};
use stagenet_core::model::{predict_sequence, train, Ablation, LiveParams, ModelConfig};
use stagenet_core::model::{Checkpoint, EpochLog, ParamSet, TrainOutcome};
use stagenet_core::data::Dataset as Ds2;

fn train_with_bias(
    cfg: &ModelConfig,
    train_set: &Ds2,
    valid_set: &Ds2,
    stats: &FeatureStats,
    on_epoch: impl FnMut(&EpochLog),
) -> stagenet_core::Result<TrainOutcome> {
    let mut ps = ParamSet::init(cfg)?;
    ps.b_mf.value.data[0] = 3.0;
    let nm = cfg.master_dim();
    ps.b_mi.value.data[nm - 1] = 3.0;
    let init = Checkpoint::from_params(cfg, &ps, stats, 0);
    train(cfg, train_set, valid_set, stats, Some(&init), on_epoch)
}
use std::time::Instant;

fn split(ds: &Dataset, a: usize, b: usize) -> (Dataset, Dataset, Dataset) {
    let train = Dataset { patients: ds.patients[..a].to_vec() };
    let valid = Dataset { patients: ds.patients[a..b].to_vec() };
    let test = Dataset { patients: ds.patients[b..].to_vec() };
    (train, valid, test)
}

fn main() {
    let t_all = Instant::now();
    let gen_cfg = GeneratorConfig {
        n_patients: 320,
        seed: 11,
        min_len: 30,
        max_len: 60,
        min_stages: 2,
        max_stages: 3,
        jump_magnitude: 2.5,
        volatility_min: 0.08,
        volatility_max: 0.15,
        baseline_sigma: 1.5,
        base_hazard: 0.03,
        deterioration_hazard: 0.9,
        hazard_tau: 1.2,
        drift_min: 0.0,
        drift_max: 0.0,
        deterioration_turbulence: 1.0,
        boundary_gap_factor: 4.0,
        ..GeneratorConfig::default()
    };
    let ds = generate_synthetic(&gen_cfg).unwrap();
    let (train_raw, valid_raw, test_raw) = split(&ds, 200, 260);
    let stats = FeatureStats::fit(&train_raw).unwrap();
    let train_set = forward_fill_and_normalize(&train_raw, &stats).unwrap();
    let valid_set = forward_fill_and_normalize(&valid_raw, &stats).unwrap();
    let test_set = forward_fill_and_normalize(&test_raw, &stats).unwrap();

    let cfg = ModelConfig {
        epochs: 100,
        seed: 0,
        chunk: 2,
        dropout_p: 0.0,
        dropconnect_p: 0.0,
        ablation: Ablation::Full,
        ..ModelConfig::with_features(gen_cfg.n_features)
    };
    let t0 = Instant::now();
    let out = train_with_bias(&cfg, &train_set, &valid_set, &stats, |row| {
        println!(
            "epoch {:2} loss {:.4} vAUPRC {:.3} vAUROC {:.3} ({:.1}s)",
            row.epoch, row.train_loss, row.valid_auprc, row.valid_auroc, row.wall_time_s
        );
    })
    .unwrap();
    println!("train total {:.1?} best_epoch {}", t0.elapsed(), out.checkpoint.best_epoch);

    // Test metrics + change-point detection from s_norm.
    let params = out.checkpoint.to_params().unwrap();
    let lp = LiveParams::new(&params, false).unwrap();
    let mut risk_scores = Vec::new();
    let mut risk_labels = Vec::new();
    let mut cp_scores = Vec::new();
    let mut cp_labels = Vec::new();
    let mut bands = Vec::new();
    for (seq, raw) in test_set.patients.iter().zip(&test_raw.patients) {
        let trace = predict_sequence(seq, &lp, &cfg).unwrap();
        let cps = raw.change_points.clone().unwrap_or_default();
        for step in &trace.steps {
            risk_scores.push(step.y_hat);
            risk_labels.push(seq.labels[step.t]);
            let near = cps.iter().any(|&cp| step.t.abs_diff(cp) <= 2);
            cp_scores.push(step.s_norm);
            cp_labels.push(u8::from(near));
            bands.push((step.y_hat, step.s));
        }
    }
    let risk = ScoredSet::new(risk_scores, risk_labels).unwrap();
    println!("test AUPRC {:.3} AUROC {:.3}", auprc(&risk).unwrap(), auroc(&risk).unwrap());
    let cp = ScoredSet::new(cp_scores.clone(), cp_labels.clone()).unwrap();
    println!("change-point AUROC (s_norm) {:.3}", auroc(&cp).unwrap());
    let near_mean = cp_scores.iter().zip(&cp_labels).filter(|(_, &l)| l == 1).map(|(s, _)| *s).sum::<f64>()
        / cp_labels.iter().filter(|&&l| l == 1).count() as f64;
    let far_mean = cp_scores.iter().zip(&cp_labels).filter(|(_, &l)| l == 0).map(|(s, _)| *s).sum::<f64>()
        / cp_labels.iter().filter(|&&l| l == 0).count() as f64;
    println!("mean s_norm near-boundary {near_mean:.3} vs elsewhere {far_mean:.3}");
    // Within-patient change-point AUROC, averaged where defined.
    let mut per_patient = Vec::new();
    for (seq, raw) in test_set.patients.iter().zip(&test_raw.patients) {
        let trace = predict_sequence(seq, &lp, &cfg).unwrap();
        let cps = raw.change_points.clone().unwrap_or_default();
        let scores: Vec<f64> = trace.steps.iter().map(|st| st.s_norm).collect();
        let labels: Vec<u8> = trace.steps.iter()
            .map(|st| u8::from(cps.iter().any(|&cp| st.t.abs_diff(cp) <= 2)))
            .collect();
        if labels.iter().any(|&l| l == 1) && labels.iter().any(|&l| l == 0) {
            per_patient.push(auroc(&ScoredSet::new(scores, labels).unwrap()).unwrap());
        }
    }
    println!(
        "within-patient cp AUROC mean {:.3} over {} patients",
        per_patient.iter().sum::<f64>() / per_patient.len() as f64,
        per_patient.len()
    );
    let table = risk_band_stage_table(&bands).unwrap();
    println!(
        "bands: low {:?} med {:?} high {:?}",
        table.low.map(|b| (b.count, b.mean_s)),
        table.medium.map(|b| (b.count, b.mean_s)),
        table.high.map(|b| (b.count, b.mean_s))
    );
    println!("total {:.1?}", t_all.elapsed());
}
