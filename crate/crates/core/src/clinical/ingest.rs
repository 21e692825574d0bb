use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use super::{Cohort, ParameterDictionary, PatientRecord, SepsisLabel, SurvivalLabel};
use crate::error::{Error, Result};

/// A value outside its plausible range. Such values are kept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestWarning {
    pub row: usize,
    pub patient_id: String,
    pub column: String,
    pub value: f64,
    pub plausible_range: [f64; 2],
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input)
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

/// Reads `clinical.csv` and `labels.csv` into a cohort. Row numbers in
/// errors and warnings are 1-based file lines (the header is line 1).
pub fn ingest_csv(
    dictionary: &ParameterDictionary,
    clinical: &Path,
    labels: &Path,
) -> Result<(Cohort, Vec<IngestWarning>)> {
    ingest_readers(dictionary, open(clinical)?, open(labels)?)
}

pub fn ingest_readers<C: Read, L: Read>(
    dictionary: &ParameterDictionary,
    clinical: C,
    labels: L,
) -> Result<(Cohort, Vec<IngestWarning>)> {
    let labels = read_labels(labels)?;
    let mut rdr = reader(clinical);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("patient_id") {
        return Err(Error::Ingest {
            row: 1,
            column: header.get(0).unwrap_or("").to_string(),
            message: "first column must be `patient_id`".into(),
        });
    }
    let mut columns = Vec::with_capacity(header.len() - 1);
    let mut seen_columns = HashSet::new();
    for name in header.iter().skip(1) {
        let Some(j) = dictionary.position(name) else {
            return Err(Error::Ingest {
                row: 1,
                column: name.to_string(),
                message: "unknown column".into(),
            });
        };
        if !seen_columns.insert(j) {
            return Err(Error::Ingest {
                row: 1,
                column: name.to_string(),
                message: "duplicate column".into(),
            });
        }
        columns.push(j);
    }

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut seen_ids = HashSet::new();
    for (k, row) in rdr.records().enumerate() {
        let line = k + 2;
        let row = row?;
        let id = row.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::Ingest {
                row: line,
                column: "patient_id".into(),
                message: "empty patient id".into(),
            });
        }
        if !seen_ids.insert(id.clone()) {
            return Err(Error::Ingest {
                row: line,
                column: "patient_id".into(),
                message: format!("duplicate patient id `{id}`"),
            });
        }
        let mut values = vec![None; dictionary.len()];
        for (cell, &j) in row.iter().skip(1).zip(&columns) {
            let desc = &dictionary.parameters()[j];
            let v = desc.encode(cell).map_err(|message| Error::Ingest {
                row: line,
                column: desc.name.clone(),
                message,
            })?;
            if let (Some(v), Some(range)) = (v, desc.plausible_range) {
                if !desc.is_plausible(v) {
                    warnings.push(IngestWarning {
                        row: line,
                        patient_id: id.clone(),
                        column: desc.name.clone(),
                        value: v,
                        plausible_range: range,
                    });
                }
            }
            values[j] = v;
        }
        let Some(&(sepsis_label, survival_label)) = labels.get(&id) else {
            return Err(Error::Ingest {
                row: line,
                column: "patient_id".into(),
                message: format!("patient `{id}` has no entry in the labels file"),
            });
        };
        records.push(PatientRecord {
            patient_id: id,
            sepsis_label,
            survival_label,
            values,
        });
    }
    if let Some(orphan) = labels.keys().filter(|id| !seen_ids.contains(*id)).min() {
        return Err(Error::Data(format!("labels file lists unknown patient `{orphan}`")));
    }
    Ok((
        Cohort {
            dictionary: dictionary.clone(),
            records,
        },
        warnings,
    ))
}

/// Reads `labels.csv` on its own, keyed by patient id.
pub fn load_labels(path: &Path) -> Result<HashMap<String, (SepsisLabel, SurvivalLabel)>> {
    read_labels(open(path)?)
}

pub fn read_labels<R: Read>(input: R) -> Result<HashMap<String, (SepsisLabel, SurvivalLabel)>> {
    let mut rdr = reader(input);
    let header = rdr.headers()?.clone();
    let expected = ["patient_id", "sepsis_label", "survival_label"];
    if header.len() != 3 || header.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(Error::Ingest {
            row: 1,
            column: header.iter().collect::<Vec<_>>().join(","),
            message: "labels header must be `patient_id,sepsis_label,survival_label`".into(),
        });
    }
    let mut out = HashMap::new();
    for (k, row) in rdr.records().enumerate() {
        let line = k + 2;
        let row = row?;
        let err = |column: &str, message: String| Error::Ingest {
            row: line,
            column: column.into(),
            message,
        };
        let id = row[0].to_string();
        let sepsis: SepsisLabel = row[1].parse().map_err(|m| err("sepsis_label", m))?;
        let survival: SurvivalLabel = row[2].parse().map_err(|m| err("survival_label", m))?;
        if out.insert(id.clone(), (sepsis, survival)).is_some() {
            return Err(err("patient_id", format!("duplicate patient id `{id}`")));
        }
    }
    Ok(out)
}

/// Writes the clinical table with every dictionary column, in dictionary order.
pub fn write_clinical_csv<W: Write>(cohort: &Cohort, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["patient_id".to_string()];
    header.extend(cohort.dictionary.parameters().iter().map(|p| p.name.clone()));
    w.write_record(&header)?;
    for r in &cohort.records {
        let mut row = vec![r.patient_id.clone()];
        row.extend(
            cohort
                .dictionary
                .parameters()
                .iter()
                .zip(&r.values)
                .map(|(p, v)| p.decode(*v)),
        );
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("clinical.csv", e))?;
    Ok(())
}

pub fn write_labels_csv<W: Write>(cohort: &Cohort, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["patient_id", "sepsis_label", "survival_label"])?;
    for r in &cohort.records {
        w.write_record([
            r.patient_id.as_str(),
            r.sepsis_label.as_str(),
            r.survival_label.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("labels.csv", e))?;
    Ok(())
}
