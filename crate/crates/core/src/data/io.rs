//! JSON-lines dataset IO.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::{Dataset, PatientSequence};

/// On-disk record. `visits` uses `null` for missing values.
#[derive(Serialize, Deserialize)]
struct PatientRecord {
    patient_id: String,
    deltas: Vec<f64>,
    labels: Vec<u8>,
    visits: Vec<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    change_points: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    archetype: Option<usize>,
}

impl From<&PatientSequence> for PatientRecord {
    fn from(p: &PatientSequence) -> Self {
        PatientRecord {
            patient_id: p.patient_id.clone(),
            deltas: p.deltas.clone(),
            labels: p.labels.clone(),
            visits: p
                .visits
                .iter()
                .map(|row| row.iter().map(|&x| (!x.is_nan()).then_some(x)).collect())
                .collect(),
            change_points: p.change_points.clone(),
            archetype: p.archetype,
        }
    }
}

impl From<PatientRecord> for PatientSequence {
    fn from(r: PatientRecord) -> Self {
        let t = r.visits.len();
        PatientSequence {
            patient_id: r.patient_id,
            visits: r
                .visits
                .into_iter()
                .map(|row| row.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
                .collect(),
            deltas: r.deltas,
            labels: r.labels,
            mask: vec![true; t],
            change_points: r.change_points,
            archetype: r.archetype,
        }
    }
}

/// Loads and validates a JSONL dataset. All sequences must agree on the
/// feature dimension.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut patients = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PatientRecord = serde_json::from_str(&line).map_err(|e| {
            Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        let seq = PatientSequence::from(record);
        seq.validate()?;
        patients.push(seq);
    }
    if patients.is_empty() {
        return Err(Error::Input(format!(
            "{}: dataset contains no patients",
            path.display()
        )));
    }
    let d = patients[0].n_features();
    for p in &patients {
        if p.n_features() != d {
            return Err(Error::Load {
                patient_id: p.patient_id.clone(),
                field: "visits",
                message: format!("{} features, dataset has {d}", p.n_features()),
            });
        }
    }
    Ok(Dataset { patients })
}

/// Writes a dataset as JSONL, one compact record per line.
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    for p in &dataset.patients {
        let record = PatientRecord::from(p);
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::Parse(format!("serialize patient {}: {e}", p.patient_id)))?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
