use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::forest::Matrix;

/// Named feature columns keyed by patient, as stored in `features.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub patient_ids: Vec<String>,
    pub names: Vec<String>,
    pub matrix: Matrix,
}

impl FeatureTable {
    pub fn new(patient_ids: Vec<String>, names: Vec<String>, matrix: Matrix) -> Result<Self> {
        if matrix.n_rows() != patient_ids.len() || matrix.n_cols() != names.len() {
            return Err(Error::Data(format!(
                "feature table shape {}x{} does not match {} ids and {} names",
                matrix.n_rows(),
                matrix.n_cols(),
                patient_ids.len(),
                names.len()
            )));
        }
        Ok(FeatureTable {
            patient_ids,
            names,
            matrix,
        })
    }

    pub fn from_rows(patient_ids: Vec<String>, names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let matrix = if rows.is_empty() {
            Matrix::new(0, names.len(), Vec::new())?
        } else {
            Matrix::from_rows(rows)?
        };
        FeatureTable::new(patient_ids, names, matrix)
    }

    pub fn len(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patient_ids.is_empty()
    }

    /// Rows reordered to follow `ids`; every id must be present.
    pub fn align(&self, ids: &[String]) -> Result<FeatureTable> {
        let pos: HashMap<&str, usize> = self
            .patient_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let rows = ids
            .iter()
            .map(|id| {
                pos.get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Data(format!("patient `{id}` has no feature row")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureTable {
            patient_ids: ids.to_vec(),
            names: self.names.clone(),
            matrix: self.matrix.select_rows(&rows),
        })
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureTable {
        FeatureTable {
            patient_ids: self.patient_ids.clone(),
            names: cols.iter().map(|&c| self.names[c].clone()).collect(),
            matrix: self.matrix.select_cols(cols),
        }
    }

    /// Columns of `other` appended; both tables must list the same patients
    /// in the same order.
    pub fn join(&self, other: &FeatureTable) -> Result<FeatureTable> {
        if self.patient_ids != other.patient_ids {
            return Err(Error::Data("feature tables list different patients".into()));
        }
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        Ok(FeatureTable {
            patient_ids: self.patient_ids.clone(),
            names,
            matrix: self.matrix.hstack(&other.matrix)?,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["patient_id".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (i, id) in self.patient_ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend(self.matrix.row(i).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("features.csv", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<FeatureTable> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("patient_id") {
            return Err(Error::Ingest {
                row: 1,
                column: header.get(0).unwrap_or("").into(),
                message: "first column must be `patient_id`".into(),
            });
        }
        let names: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (k, row) in rdr.records().enumerate() {
            let row = row?;
            ids.push(row[0].to_string());
            for (j, cell) in row.iter().enumerate().skip(1) {
                let v: f64 = cell.parse().map_err(|_| Error::Ingest {
                    row: k + 2,
                    column: names[j - 1].clone(),
                    message: format!("`{cell}` is not a number"),
                })?;
                data.push(v);
            }
        }
        let n = ids.len();
        FeatureTable::new(ids, names.clone(), Matrix::new(n, names.len(), data)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<FeatureTable> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        FeatureTable::read_csv(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_align_join() {
        let t = FeatureTable::from_rows(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
            &[vec![1.5, -2.0], vec![0.1, 3.25]],
        )
        .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(FeatureTable::read_csv(buf.as_slice()).unwrap(), t);
        let flipped = t.align(&["b".into(), "a".into()]).unwrap();
        assert_eq!(flipped.matrix.row(0), &[0.1, 3.25]);
        assert!(t.align(&["z".into()]).is_err());
        let j = t.join(&t.select_columns(&[1])).unwrap();
        assert_eq!(j.names, vec!["x", "y", "y"]);
        assert_eq!(j.matrix.row(1), &[0.1, 3.25, 3.25]);
        assert!(t.join(&flipped).is_err());
    }
}
