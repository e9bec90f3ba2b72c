use stagenet_core::data::{forward_fill_and_normalize, generate_synthetic, Dataset, FeatureStats, GeneratorConfig};
use stagenet_core::model::{predict_sequence, train, LiveParams, ModelConfig};

fn main() {
    let gen_cfg = GeneratorConfig { n_patients: 320, seed: 11, ..GeneratorConfig::default() };
    let ds = generate_synthetic(&gen_cfg).unwrap();
    let train_raw = Dataset { patients: ds.patients[..200].to_vec() };
    let valid_raw = Dataset { patients: ds.patients[200..260].to_vec() };
    let test_raw = Dataset { patients: ds.patients[260..].to_vec() };
    let stats = FeatureStats::fit(&train_raw).unwrap();
    let train_set = forward_fill_and_normalize(&train_raw, &stats).unwrap();
    let valid_set = forward_fill_and_normalize(&valid_raw, &stats).unwrap();
    let test_set = forward_fill_and_normalize(&test_raw, &stats).unwrap();
    let cfg = ModelConfig { epochs: 30, seed: 0, dropout_p: 0.1, dropconnect_p: 0.1, ..ModelConfig::with_features(6) };
    let out = train(&cfg, &train_set, &valid_set, &stats, None, |_| {}).unwrap();
    let params = out.checkpoint.to_params().unwrap();
    let lp = LiveParams::new(&params, false).unwrap();
    for (seq, raw) in test_set.patients.iter().take(4).zip(&test_raw.patients) {
        let trace = predict_sequence(seq, &lp, &cfg).unwrap();
        let cps = raw.change_points.clone().unwrap_or_default();
        println!("patient {} cps {:?}", seq.patient_id, cps);
        let line: Vec<String> = trace.steps.iter().map(|st| {
            let mark = if cps.contains(&st.t) { "*" } else { " " };
            format!("{}{:.2}", mark, st.s_norm)
        }).collect();
        println!("  s_norm: {}", line.join(" "));
        let line2: Vec<String> = trace.steps.iter().map(|st| format!(" {:.2}", st.y_hat)).collect();
        println!("  y_hat : {}", line2.join(" "));
    }
}
