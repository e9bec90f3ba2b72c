//! Subcommand implementations.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use stagenet_core::data::{
    self, forward_fill_and_normalize, generate_synthetic, load_dataset, save_dataset, Dataset,
    FeatureStats, GeneratorConfig,
};
use stagenet_core::eval::{
    auprc, auroc, bootstrap as bootstrap_metric, min_re_p, risk_band_stage_table, MetricSummary,
    MetricsReport, ScoredSet,
};
use stagenet_core::model::{
    gradcheck_model, load_checkpoint, predict_sequence, save_checkpoint, GradCheckDims,
    LiveParams, ModelConfig,
};
use stagenet_core::{Error, Result};

use crate::config::{env_seed, read_config_object, resolve};
use crate::ModelFlags;

/// One line of a predictions file.
#[derive(Debug, Serialize, Deserialize)]
struct PredictionRow {
    patient_id: String,
    t: usize,
    y_hat: f64,
    s: f64,
    u_tilde: Vec<f64>,
}

fn write_json_file<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parse(format!("serialize {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Every run records what it actually ran with, next to its output.
fn emit_sidecar_config<T: Serialize>(out: &Path, value: &T) -> Result<()> {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".config.json");
    write_json_file(value, &out.with_file_name(name))
}

pub fn generate(
    out: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    n_patients: Option<usize>,
    n_features: Option<usize>,
) -> Result<()> {
    let overrides = [
        ("n_patients", n_patients.map(Value::from)),
        ("n_features", n_features.map(Value::from)),
    ];
    let cfg: GeneratorConfig = resolve(&GeneratorConfig::default(), config, &overrides, seed)?;
    let dataset = generate_synthetic(&cfg)?;
    save_dataset(&dataset, out)?;
    emit_sidecar_config(out, &cfg)?;
    let visits: usize = dataset.patients.iter().map(|p| p.len()).sum();
    println!(
        "generated {} patients / {} visits -> {}",
        dataset.len(),
        visits,
        out.display()
    );
    Ok(())
}

fn infer_n_features(flags: &ModelFlags, config: Option<&Path>, train: &Dataset) -> Result<usize> {
    if let Some(n) = flags.n_features {
        return Ok(n);
    }
    if let Some(path) = config {
        if let Some(v) = read_config_object(path)?.get("n_features") {
            return v
                .as_u64()
                .map(|n| n as usize)
                .ok_or_else(|| Error::Config("n_features must be an integer".into()));
        }
    }
    Ok(train.n_features())
}

fn resolve_model_config(flags: &ModelFlags, n_features: usize) -> Result<ModelConfig> {
    let overrides = [
        ("n_features", Some(Value::from(n_features))),
        ("hidden", flags.hidden.map(Value::from)),
        ("chunk", flags.chunk.map(Value::from)),
        ("window", flags.window.map(Value::from)),
        ("bottleneck", flags.bottleneck.map(Value::from)),
        ("dropout_p", flags.dropout.map(Value::from)),
        ("dropconnect_p", flags.dropconnect.map(Value::from)),
        ("delta_scale", flags.delta_scale.map(Value::from)),
        ("learning_rate", flags.lr.map(Value::from)),
        ("epochs", flags.epochs.map(Value::from)),
        ("batch_size", flags.batch_size.map(Value::from)),
        ("label_clip", flags.label_clip.map(Value::from)),
        ("max_len", flags.max_len.map(Value::from)),
        ("ablation", flags.ablation.as_deref().map(Value::from)),
    ];
    let cfg: ModelConfig = resolve(
        &ModelConfig::with_features(n_features),
        flags.config.as_deref(),
        &overrides,
        flags.seed,
    )?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct ResolvedTrainConfig<'a> {
    model: &'a ModelConfig,
    train: String,
    valid: String,
    init_checkpoint: Option<String>,
}

pub fn train(
    train_path: &Path,
    valid_path: &Path,
    out_dir: &Path,
    init_checkpoint: Option<&Path>,
    flags: &ModelFlags,
) -> Result<()> {
    let train_raw = load_dataset(train_path)?;
    let valid_raw = load_dataset(valid_path)?;
    let n_features = infer_n_features(flags, flags.config.as_deref(), &train_raw)?;
    let cfg = resolve_model_config(flags, n_features)?;

    let init = init_checkpoint.map(load_checkpoint).transpose()?;
    // Normalization statistics come from the training split, or travel
    // with the checkpoint on resume.
    let stats = match &init {
        Some(ckpt) => ckpt.stats.clone(),
        None => FeatureStats::fit(&train_raw)?,
    };
    let train_set = forward_fill_and_normalize(&train_raw, &stats)?;
    let valid_set = forward_fill_and_normalize(&valid_raw, &stats)?;

    std::fs::create_dir_all(out_dir)?;
    write_json_file(
        &ResolvedTrainConfig {
            model: &cfg,
            train: train_path.display().to_string(),
            valid: valid_path.display().to_string(),
            init_checkpoint: init_checkpoint.map(|p| p.display().to_string()),
        },
        &out_dir.join("resolved_config.json"),
    )?;

    let log_path = out_dir.join("metrics.jsonl");
    let mut log_file = BufWriter::new(File::create(&log_path)?);
    let outcome = stagenet_core::model::train(
        &cfg,
        &train_set,
        &valid_set,
        &stats,
        init.as_ref(),
        |row| {
            println!(
                "epoch {:3}  loss {:.4}  valid auprc {:.4}  auroc {:.4}  min(re,p+) {:.4}  ({:.1}s)",
                row.epoch,
                row.train_loss,
                row.valid_auprc,
                row.valid_auroc,
                row.valid_min_re_p,
                row.wall_time_s
            );
            if let Ok(line) = serde_json::to_string(row) {
                let _ = writeln!(log_file, "{line}");
            }
        },
    )?;
    drop(log_file);

    let ckpt_path = out_dir.join("checkpoint.json");
    save_checkpoint(&outcome.checkpoint, &ckpt_path)?;
    let best = &outcome.log[outcome.checkpoint.best_epoch];
    println!(
        "best epoch {} (valid auprc {:.4}); wrote {}",
        outcome.checkpoint.best_epoch,
        best.valid_auprc,
        ckpt_path.display()
    );
    Ok(())
}

pub fn predict(checkpoint: &Path, data: &Path, out: &Path) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let raw = load_dataset(data)?;
    let prepared = forward_fill_and_normalize(&raw, &ckpt.stats)?;
    let params = ckpt.to_params()?;
    let lp = LiveParams::new(&params, false)?;

    let mut writer = BufWriter::new(File::create(out)?);
    let mut rows = 0usize;
    for seq in &prepared.patients {
        let trace = predict_sequence(seq, &lp, &ckpt.config)?;
        for step in &trace.steps {
            let row = PredictionRow {
                patient_id: trace.patient_id.clone(),
                t: step.t,
                y_hat: step.y_hat,
                s: step.s,
                u_tilde: step.u_tilde.clone(),
            };
            let line = serde_json::to_string(&row)
                .map_err(|e| Error::Parse(format!("serialize prediction: {e}")))?;
            writer.write_all(line.as_bytes())?;
            writer.write_all(b"\n")?;
            rows += 1;
        }
    }
    writer.flush()?;
    emit_sidecar_config(
        out,
        &serde_json::json!({
            "checkpoint": checkpoint.display().to_string(),
            "data": data.display().to_string(),
            "model": ckpt.config,
        }),
    )?;
    println!(
        "wrote {rows} prediction rows for {} patients -> {}",
        prepared.len(),
        out.display()
    );
    Ok(())
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let file = File::open(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 1)))?,
        );
    }
    if rows.is_empty() {
        return Err(Error::Input(format!(
            "{}: no prediction rows",
            path.display()
        )));
    }
    Ok(rows)
}

pub fn evaluate(
    predictions: &Path,
    data: &Path,
    out: &Path,
    bootstrap: usize,
    seed: Option<u64>,
) -> Result<()> {
    let rows = read_predictions(predictions)?;
    let dataset = load_dataset(data)?;
    let seed = match seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };

    let mut scores = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    let mut bands = Vec::with_capacity(rows.len());
    for row in &rows {
        let patient = dataset
            .patients
            .iter()
            .find(|p| p.patient_id == row.patient_id)
            .ok_or_else(|| Error::Load {
                patient_id: row.patient_id.clone(),
                field: "predictions",
                message: "patient not present in the dataset".into(),
            })?;
        if row.t >= patient.len() || !patient.mask[row.t] {
            return Err(Error::Load {
                patient_id: row.patient_id.clone(),
                field: "predictions",
                message: format!("timestep {} is not a valid visit", row.t),
            });
        }
        scores.push(row.y_hat);
        labels.push(patient.labels[row.t]);
        bands.push((row.y_hat, row.s));
    }
    let set = ScoredSet::new(scores, labels)?;

    let summarize = |metric: fn(&ScoredSet) -> Result<f64>| -> Result<MetricSummary> {
        Ok(MetricSummary {
            point: metric(&set)?,
            bootstrap: if bootstrap > 0 {
                Some(bootstrap_metric(&set, bootstrap, seed, metric)?)
            } else {
                None
            },
        })
    };
    let report = MetricsReport {
        n_visits: set.len(),
        n_positives: set.n_positive(),
        auroc: summarize(auroc)?,
        auprc: summarize(auprc)?,
        min_re_p: summarize(min_re_p)?,
        risk_bands: risk_band_stage_table(&bands)?,
        ch_score: None,
    };
    write_json_file(&report, out)?;
    emit_sidecar_config(
        out,
        &serde_json::json!({
            "predictions": predictions.display().to_string(),
            "data": data.display().to_string(),
            "bootstrap": bootstrap,
            "seed": seed,
        }),
    )?;
    println!(
        "auprc {:.4}  auroc {:.4}  min(re,p+) {:.4}  ({} visits, {} positive) -> {}",
        report.auprc.point,
        report.auroc.point,
        report.min_re_p.point,
        report.n_visits,
        report.n_positives,
        out.display()
    );
    Ok(())
}

pub fn subtype(checkpoint: &Path, data: &Path, out: &Path, k: usize, seed: Option<u64>) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let dataset = load_dataset(data)?;
    let seed = match seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let result = stagenet_core::eval::subtype(&ckpt, &dataset, k, seed)?;
    write_json_file(&result, out)?;
    emit_sidecar_config(
        out,
        &serde_json::json!({
            "checkpoint": checkpoint.display().to_string(),
            "data": data.display().to_string(),
            "k": k,
            "seed": seed,
        }),
    )?;
    println!(
        "k={} ch_score={} sizes={:?} label_rates={:?} -> {}",
        result.k,
        result
            .ch_score
            .map_or_else(|| "degenerate".to_string(), |v| format!("{v:.2}")),
        result.cluster_sizes,
        result
            .cluster_label_rate
            .iter()
            .map(|r| (r * 100.0).round() / 100.0)
            .collect::<Vec<_>>(),
        out.display()
    );
    Ok(())
}

pub fn gradcheck(
    dims: &str,
    seed: Option<u64>,
    tol: f64,
    eps: f64,
    out: Option<&Path>,
) -> Result<()> {
    let parts: Vec<usize> = dims
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| {
            Error::Config(format!(
                "--dims must be patients,steps,n_features,hidden,chunk,window; got {dims}"
            ))
        })?;
    if parts.len() != 6 {
        return Err(Error::Config(format!(
            "--dims needs 6 comma-separated integers, got {}",
            parts.len()
        )));
    }
    let dims = GradCheckDims {
        patients: parts[0],
        steps: parts[1],
        n_features: parts[2],
        hidden: parts[3],
        chunk: parts[4],
        window: parts[5],
    };
    let seed = match seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let report = gradcheck_model(&dims, seed, eps, tol)?;
    if let Some(path) = out {
        write_json_file(&report, path)?;
    }
    println!(
        "gradient check {}: max rel err {:.3e} over {} parameters (eps {:.0e}, tol {:.0e})",
        if report.pass { "PASS" } else { "FAIL" },
        report.max_rel_err,
        report.entries.len(),
        report.eps,
        report.tol_rel
    );
    if !report.pass {
        let failing: Vec<&str> = report
            .entries
            .iter()
            .filter(|e| !e.pass)
            .map(|e| e.name.as_str())
            .collect();
        return Err(Error::Numeric(format!(
            "gradient check failed for {failing:?}"
        )));
    }
    Ok(())
}

pub fn import_csv(csv: &Path, out: &Path) -> Result<()> {
    let dataset = data::import_csv(csv)?;
    save_dataset(&dataset, out)?;
    println!(
        "imported {} patients from {} -> {}",
        dataset.len(),
        csv.display(),
        out.display()
    );
    Ok(())
}
