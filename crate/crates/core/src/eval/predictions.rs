use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One member's output for one patient. `fold` is the inner fold the member
/// was trained without and `repetition` its seed repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub patient_id: String,
    pub fold: usize,
    pub repetition: usize,
    /// Per-class decision values (logits or probabilities).
    pub values: Vec<f64>,
    pub label: usize,
}

/// Member-averaged output for one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembledPrediction {
    pub patient_id: String,
    pub values: Vec<f64>,
    pub label: usize,
    pub members: usize,
}

impl EnsembledPrediction {
    /// Binary decision value `v1 - v0`; ranks identically to the positive
    /// class probability for both logits and probabilities.
    pub fn decision(&self) -> f64 {
        self.values[1] - self.values[0]
    }
}

/// Averages decision values per patient over all members, in order of
/// first appearance.
pub fn ensemble(rows: &[PredictionRow]) -> Result<Vec<EnsembledPrediction>> {
    let Some(first) = rows.first() else {
        return Err(Error::Data("no predictions to ensemble".into()));
    };
    let arity = first.values.len();
    let mut out: Vec<EnsembledPrediction> = Vec::new();
    let mut pos: HashMap<&str, usize> = HashMap::new();
    for r in rows {
        if r.values.len() != arity {
            return Err(Error::Data(format!(
                "patient `{}` has {} class values, expected {arity}",
                r.patient_id,
                r.values.len()
            )));
        }
        if let Some(v) = r.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "patient `{}` has non-finite value {v}",
                r.patient_id
            )));
        }
        match pos.get(r.patient_id.as_str()) {
            Some(&i) => {
                let e = &mut out[i];
                if e.label != r.label {
                    return Err(Error::Data(format!(
                        "patient `{}` has conflicting labels",
                        r.patient_id
                    )));
                }
                for (a, v) in e.values.iter_mut().zip(&r.values) {
                    *a += v;
                }
                e.members += 1;
            }
            None => {
                pos.insert(&r.patient_id, out.len());
                out.push(EnsembledPrediction {
                    patient_id: r.patient_id.clone(),
                    values: r.values.clone(),
                    label: r.label,
                    members: 1,
                });
            }
        }
    }
    for e in &mut out {
        let k = e.members as f64;
        e.values.iter_mut().for_each(|v| *v /= k);
    }
    Ok(out)
}

/// `predictions.csv`: `patient_id,fold,repetition,value_class0,value_class1,label`.
pub fn write_predictions_csv<W: Write>(rows: &[PredictionRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "patient_id",
        "fold",
        "repetition",
        "value_class0",
        "value_class1",
        "label",
    ])?;
    for r in rows {
        if r.values.len() != 2 {
            return Err(Error::Data(format!(
                "predictions file holds two classes, patient `{}` has {}",
                r.patient_id,
                r.values.len()
            )));
        }
        w.write_record([
            r.patient_id.clone(),
            r.fold.to_string(),
            r.repetition.to_string(),
            r.values[0].to_string(),
            r.values[1].to_string(),
            r.label.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("predictions.csv", e))?;
    Ok(())
}

/// Reads `predictions.csv` by column name; extra columns are ignored.
pub fn read_predictions_csv<R: Read>(input: R) -> Result<Vec<PredictionRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Ingest {
            row: 1,
            column: name.into(),
            message: "required column is missing".into(),
        })
    };
    let cols = [
        col("patient_id")?,
        col("fold")?,
        col("repetition")?,
        col("value_class0")?,
        col("value_class1")?,
        col("label")?,
    ];
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let cell = |c: usize| rec.get(cols[c]).unwrap_or("");
        let bad = |c: usize, what: &str| Error::Ingest {
            row: line,
            column: header[cols[c]].to_string(),
            message: format!("`{}` is not {what}", cell(c)),
        };
        let int = |c: usize| cell(c).parse::<usize>().map_err(|_| bad(c, "a non-negative integer"));
        let real = |c: usize| cell(c).parse::<f64>().map_err(|_| bad(c, "a number"));
        let label = int(5)?;
        if label > 1 {
            return Err(bad(5, "0 or 1"));
        }
        rows.push(PredictionRow {
            patient_id: cell(0).to_string(),
            fold: int(1)?,
            repetition: int(2)?,
            values: vec![real(3)?, real(4)?],
            label,
        });
    }
    Ok(rows)
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions_csv(std::io::BufReader::new(f))
}

pub fn save_predictions(rows: &[PredictionRow], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_predictions_csv(rows, std::io::BufWriter::new(f))
}
