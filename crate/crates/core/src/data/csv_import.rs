//! Long-format CSV import.
//!
//! Expected header: `patient_id,time,<feature columns...>,label`. Rows are
//! grouped by patient (first-appearance order preserved) and sorted by time
//! within each patient; deltas are the time differences, with the first
//! visit pinned to zero. Empty feature cells become missing values.

use std::path::Path;

use crate::{Error, Result};

use super::{Dataset, PatientSequence};

pub fn import_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 4 || cols[0] != "patient_id" || cols[1] != "time" || cols[cols.len() - 1] != "label"
    {
        return Err(Error::Parse(format!(
            "{}: expected header patient_id,time,<features...>,label, got {:?}",
            path.display(),
            cols
        )));
    }
    let n_features = cols.len() - 3;

    struct Row {
        time: f64,
        features: Vec<f64>,
        label: u8,
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_patient: std::collections::HashMap<String, Vec<Row>> =
        std::collections::HashMap::new();

    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 2)))?;
        let parse_err = |what: &str, e: String| {
            Error::Parse(format!("{}:{}: {what}: {e}", path.display(), i + 2))
        };
        let patient_id = record.get(0).unwrap_or("").to_string();
        if patient_id.is_empty() {
            return Err(parse_err("patient_id", "empty".into()));
        }
        let time: f64 = record
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|e: std::num::ParseFloatError| parse_err("time", e.to_string()))?;
        let mut features = Vec::with_capacity(n_features);
        for j in 0..n_features {
            let cell = record.get(2 + j).unwrap_or("").trim();
            if cell.is_empty() {
                features.push(f64::NAN);
            } else {
                features.push(
                    cell.parse()
                        .map_err(|e: std::num::ParseFloatError| parse_err(cols[2 + j], e.to_string()))?,
                );
            }
        }
        let label: u8 = record
            .get(2 + n_features)
            .unwrap_or("")
            .parse()
            .map_err(|e: std::num::ParseIntError| parse_err("label", e.to_string()))?;
        if !by_patient.contains_key(&patient_id) {
            order.push(patient_id.clone());
        }
        by_patient
            .entry(patient_id)
            .or_default()
            .push(Row { time, features, label });
    }

    if order.is_empty() {
        return Err(Error::Input(format!("{}: no data rows", path.display())));
    }

    let mut patients = Vec::with_capacity(order.len());
    for id in order {
        let mut rows = by_patient.remove(&id).unwrap();
        rows.sort_by(|a, b| a.time.total_cmp(&b.time));
        let t = rows.len();
        let mut deltas = Vec::with_capacity(t);
        for i in 0..t {
            deltas.push(if i == 0 { 0.0 } else { rows[i].time - rows[i - 1].time });
        }
        let seq = PatientSequence {
            patient_id: id,
            visits: rows.iter().map(|r| r.features.clone()).collect(),
            deltas,
            labels: rows.iter().map(|r| r.label).collect(),
            mask: vec![true; t],
            change_points: None,
            archetype: None,
        };
        seq.validate()?;
        patients.push(seq);
    }
    Ok(Dataset { patients })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn imports_long_format_with_missing_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.csv");
        std::fs::write(
            &path,
            "patient_id,time,hr,bp,label\n\
             a,0.0,60,,0\n\
             a,2.0,65,120,1\n\
             b,1.0,,110,0\n",
        )
        .unwrap();
        let ds = import_csv(&path).unwrap();
        assert_eq!(ds.len(), 2);
        let a = &ds.patients[0];
        assert_eq!(a.patient_id, "a");
        assert_eq!(a.deltas, vec![0.0, 2.0]);
        assert!(a.visits[0][1].is_nan());
        assert_eq!(a.labels, vec![0, 1]);
        let b = &ds.patients[1];
        assert!(b.visits[0][0].is_nan());
    }

    #[test]
    fn rows_are_sorted_by_time_within_patient() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.csv");
        std::fs::write(
            &path,
            "patient_id,time,x,label\n\
             a,5.0,2.0,0\n\
             a,1.0,1.0,0\n",
        )
        .unwrap();
        let ds = import_csv(&path).unwrap();
        assert_eq!(ds.patients[0].visits, vec![vec![1.0], vec![2.0]]);
        assert_eq!(ds.patients[0].deltas, vec![0.0, 4.0]);
    }

    #[test]
    fn bad_header_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.csv");
        std::fs::write(&path, "id,when,x,y\n1,2,3,4\n").unwrap();
        assert!(matches!(import_csv(&path), Err(Error::Parse(_))));
    }
}
