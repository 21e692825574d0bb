//! Clinical parameter dictionary, patient records and cohort operations.

mod describe;
mod ingest;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::Matrix;

pub use describe::{descriptive_stats, DescriptiveTable, GroupSummary, ParameterSummary};
pub use ingest::{
    ingest_csv, ingest_readers, load_labels, read_labels, write_clinical_csv, write_labels_csv, IngestWarning,
};

/// Value imputed for every missing entry before model training.
pub const MISSING_FILL: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    /// Available within one hour of admission.
    OneHour,
    /// Laboratory values available within ten hours.
    TenHour,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterKind {
    Real,
    Boolean,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDescriptor {
    pub name: String,
    pub tier: Tier,
    pub kind: ParameterKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plausible_range: Option<[f64; 2]>,
    /// Ordinal encoding order for categorical parameters.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default)]
    pub description: String,
}

impl ParameterDescriptor {
    /// Parses one CSV cell into its encoded value. Empty cells are missing.
    pub fn encode(&self, cell: &str) -> std::result::Result<Option<f64>, String> {
        let cell = cell.trim();
        if cell.is_empty() {
            return Ok(None);
        }
        match self.kind {
            ParameterKind::Real => {
                let v: f64 = cell.parse().map_err(|_| format!("`{cell}` is not a number"))?;
                if !v.is_finite() {
                    return Err(format!("`{cell}` is not finite"));
                }
                Ok(Some(v))
            }
            ParameterKind::Boolean => match cell.to_ascii_lowercase().as_str() {
                "1" | "true" | "yes" => Ok(Some(1.0)),
                "0" | "false" | "no" => Ok(Some(0.0)),
                _ => Err(format!("`{cell}` is not a boolean")),
            },
            ParameterKind::Categorical => self
                .categories
                .iter()
                .position(|c| c == cell)
                .map(|i| Some(i as f64))
                .ok_or_else(|| format!("`{cell}` is not one of {:?}", self.categories)),
        }
    }

    /// Inverse of [`encode`](Self::encode) for observed values.
    pub fn decode(&self, value: Option<f64>) -> String {
        match (value, self.kind) {
            (None, _) => String::new(),
            (Some(v), ParameterKind::Boolean) => if v != 0.0 { "1" } else { "0" }.to_string(),
            (Some(v), ParameterKind::Categorical) => self
                .categories
                .get(v as usize)
                .cloned()
                .unwrap_or_else(|| v.to_string()),
            (Some(v), ParameterKind::Real) => v.to_string(),
        }
    }

    pub fn is_plausible(&self, value: f64) -> bool {
        match (self.kind, self.plausible_range) {
            (ParameterKind::Real, Some([lo, hi])) => (lo..=hi).contains(&value),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterDictionary {
    parameters: Vec<ParameterDescriptor>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl ParameterDictionary {
    pub fn new(parameters: Vec<ParameterDescriptor>) -> Result<Self> {
        let mut index = HashMap::with_capacity(parameters.len());
        for (i, p) in parameters.iter().enumerate() {
            if p.name.is_empty() || p.name == "patient_id" {
                return Err(Error::Config(format!("invalid parameter name `{}`", p.name)));
            }
            if index.insert(p.name.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate parameter `{}`", p.name)));
            }
            if p.kind == ParameterKind::Categorical && p.categories.is_empty() {
                return Err(Error::Config(format!(
                    "categorical parameter `{}` has no categories",
                    p.name
                )));
            }
            if let Some([lo, hi]) = p.plausible_range {
                if lo.is_nan() || hi.is_nan() || lo > hi {
                    return Err(Error::Config(format!(
                        "parameter `{}` has an empty plausible range",
                        p.name
                    )));
                }
            }
        }
        Ok(ParameterDictionary { parameters, index })
    }

    pub fn parameters(&self) -> &[ParameterDescriptor] {
        &self.parameters
    }

    pub fn len(&self) -> usize {
        self.parameters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parameters.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&ParameterDescriptor> {
        self.position(name).map(|i| &self.parameters[i])
    }

    pub fn tier_count(&self, tier: Tier) -> usize {
        self.parameters.iter().filter(|p| p.tier == tier).count()
    }

    /// Indices of parameters usable at the given availability horizon. The
    /// ten-hour set includes everything available within one hour.
    pub fn available_at(&self, tier: Tier) -> Vec<usize> {
        (0..self.parameters.len())
            .filter(|&i| self.parameters[i].tier <= tier)
            .collect()
    }
}

impl<'de> Deserialize<'de> for ParameterDictionary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            parameters: Vec<ParameterDescriptor>,
        }
        let raw = Raw::deserialize(d)?;
        ParameterDictionary::new(raw.parameters).map_err(serde::de::Error::custom)
    }
}

pub fn default_dictionary() -> ParameterDictionary {
    parse_dictionary(include_str!("../../config/params.dictionary.json"))
        .expect("shipped parameter dictionary is valid")
}

pub fn parse_dictionary(text: &str) -> Result<ParameterDictionary> {
    Ok(serde_json::from_str(text)?)
}

pub fn load_dictionary(path: &Path) -> Result<ParameterDictionary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dictionary(&text)
}

macro_rules! label_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s.trim() {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("unknown {} `{other}`", stringify!($name))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

label_enum!(SepsisLabel {
    Sepsis => "sepsis",
    NoSepsis => "no_sepsis",
    Unsure => "unsure",
});

label_enum!(SurvivalLabel {
    Survived => "survived",
    Died => "died",
    LostToFollowup => "lost_to_followup",
});

label_enum!(Task {
    Sepsis => "sepsis",
    Mortality => "mortality",
});

impl Task {
    /// Positive-class membership, or `None` when the patient is excluded
    /// from this task.
    pub fn label(self, record: &PatientRecord) -> Option<bool> {
        match self {
            Task::Sepsis => match record.sepsis_label {
                SepsisLabel::Sepsis => Some(true),
                SepsisLabel::NoSepsis => Some(false),
                SepsisLabel::Unsure => None,
            },
            Task::Mortality => match record.survival_label {
                SurvivalLabel::Died => Some(true),
                SurvivalLabel::Survived => Some(false),
                SurvivalLabel::LostToFollowup => None,
            },
        }
    }

    pub fn positive_name(self) -> &'static str {
        match self {
            Task::Sepsis => "sepsis",
            Task::Mortality => "died",
        }
    }
}

/// One patient; `values` follows the dictionary order and holds encoded
/// values (booleans as 0/1, categoricals as ordinal positions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub sepsis_label: SepsisLabel,
    pub survival_label: SurvivalLabel,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub dictionary: ParameterDictionary,
    pub records: Vec<PatientRecord>,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn value(&self, record: usize, name: &str) -> Option<f64> {
        self.dictionary
            .position(name)
            .and_then(|j| self.records[record].values[j])
    }

    pub fn patient_ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.patient_id.clone()).collect()
    }

    pub fn find(&self, patient_id: &str) -> Option<&PatientRecord> {
        self.records.iter().find(|r| r.patient_id == patient_id)
    }

    /// Fraction of missing cells over all records and parameters.
    pub fn missing_fraction(&self) -> f64 {
        let total = self.records.len() * self.dictionary.len();
        if total == 0 {
            return 0.0;
        }
        let missing: usize = self
            .records
            .iter()
            .map(|r| r.values.iter().filter(|v| v.is_none()).count())
            .sum();
        missing as f64 / total as f64
    }

    /// Binary labels for `task`; fails if any record is excluded from it.
    pub fn labels(&self, task: Task) -> Result<Vec<bool>> {
        self.records
            .iter()
            .map(|r| {
                task.label(r).ok_or_else(|| {
                    Error::State(format!(
                        "patient `{}` has no {} label; filter the cohort first",
                        r.patient_id, task
                    ))
                })
            })
            .collect()
    }

    /// Model input for the given parameter columns after imputation.
    pub fn feature_matrix(&self, columns: &[usize]) -> Result<(Vec<String>, Matrix)> {
        let names = columns
            .iter()
            .map(|&j| self.dictionary.parameters()[j].name.clone())
            .collect();
        let mut data = Vec::with_capacity(self.records.len() * columns.len());
        for r in &self.records {
            data.extend(columns.iter().map(|&j| r.values[j].unwrap_or(MISSING_FILL)));
        }
        Ok((names, Matrix::new(self.records.len(), columns.len(), data)?))
    }
}

/// Replaces every missing value by [`MISSING_FILL`]. Observed values are
/// left untouched; categorical missingness becomes its own code.
pub fn impute(cohort: &Cohort) -> Cohort {
    let mut out = cohort.clone();
    for r in &mut out.records {
        for v in &mut r.values {
            v.get_or_insert(MISSING_FILL);
        }
    }
    out
}

/// Drops records excluded from `task`, preserving order.
pub fn cohort_filter(cohort: &Cohort, task: Task) -> Result<Cohort> {
    let records: Vec<PatientRecord> = cohort
        .records
        .iter()
        .filter(|r| task.label(r).is_some())
        .cloned()
        .collect();
    if records.is_empty() {
        return Err(Error::Data(format!("no patients remain for the {task} task")));
    }
    Ok(Cohort {
        dictionary: cohort.dictionary.clone(),
        records,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn record(
        id: &str,
        dict: &ParameterDictionary,
        sepsis: SepsisLabel,
        survival: SurvivalLabel,
    ) -> PatientRecord {
        PatientRecord {
            patient_id: id.into(),
            sepsis_label: sepsis,
            survival_label: survival,
            values: vec![None; dict.len()],
        }
    }

    #[test]
    fn shipped_dictionary_has_both_tiers() {
        let d = default_dictionary();
        assert_eq!(d.tier_count(Tier::OneHour), 33);
        assert_eq!(d.tier_count(Tier::TenHour), 12);
        assert_eq!(d.len(), 45);
        assert_eq!(d.available_at(Tier::OneHour).len(), 33);
        assert_eq!(d.available_at(Tier::TenHour).len(), 45);
        for name in ["lactate", "ph", "noradrenaline", "crp", "pct", "crt", "mottling_score"] {
            assert!(d.get(name).is_some(), "{name}");
        }
    }

    #[test]
    fn dictionary_rejects_duplicates() {
        let mut p = default_dictionary().parameters().to_vec();
        p.push(p[0].clone());
        assert!(ParameterDictionary::new(p).is_err());
    }

    #[test]
    fn encode_decode_kinds() {
        let d = default_dictionary();
        let sex = d.get("sex").unwrap();
        assert_eq!(sex.encode("male").unwrap(), Some(1.0));
        assert_eq!(sex.decode(Some(1.0)), "male");
        assert!(sex.encode("x").is_err());
        let ecmo = d.get("ecmo").unwrap();
        assert_eq!(ecmo.encode("true").unwrap(), Some(1.0));
        assert_eq!(ecmo.encode(" ").unwrap(), None);
        let ph = d.get("ph").unwrap();
        assert_eq!(ph.encode("7.31").unwrap(), Some(7.31));
        assert!(ph.encode("abc").is_err());
        assert!(ph.is_plausible(7.3) && !ph.is_plausible(9.0));
    }

    #[test]
    fn impute_fills_missing_only() {
        let d = default_dictionary();
        let mut r = record("a", &d, SepsisLabel::Sepsis, SurvivalLabel::Died);
        let ph = d.position("ph").unwrap();
        let age = d.position("age").unwrap();
        r.values[age] = Some(61.0);
        let full: Vec<Option<f64>> = (0..d.len()).map(|i| Some(i as f64)).collect();
        let mut r2 = record("b", &d, SepsisLabel::NoSepsis, SurvivalLabel::Survived);
        r2.values = full.clone();
        let c = Cohort {
            dictionary: d,
            records: vec![r, r2],
        };
        assert!(c.missing_fraction() > 0.0);
        let imp = impute(&c);
        assert_eq!(imp.records[0].values[ph], Some(-1.0));
        assert_eq!(imp.records[0].values[age], Some(61.0));
        assert_eq!(imp.records[1].values, full);
        assert_eq!(imp.missing_fraction(), 0.0);
    }

    #[test]
    fn filter_counts() {
        let d = default_dictionary();
        let mut records = Vec::new();
        for i in 0..508 {
            let sepsis = if i < 71 {
                SepsisLabel::Unsure
            } else if i % 3 == 0 {
                SepsisLabel::Sepsis
            } else {
                SepsisLabel::NoSepsis
            };
            let survival = if i >= 483 {
                SurvivalLabel::LostToFollowup
            } else {
                SurvivalLabel::Survived
            };
            records.push(record(&format!("p{i}"), &d, sepsis, survival));
        }
        let c = Cohort { dictionary: d, records };
        assert_eq!(cohort_filter(&c, Task::Sepsis).unwrap().len(), 437);
        assert_eq!(cohort_filter(&c, Task::Mortality).unwrap().len(), 483);
        let s = cohort_filter(&c, Task::Sepsis).unwrap();
        assert_eq!(cohort_filter(&s, Task::Sepsis).unwrap(), s);
        assert!(s.labels(Task::Sepsis).is_ok());
        assert!(c.labels(Task::Sepsis).is_err());
        let unsure = Cohort {
            dictionary: c.dictionary.clone(),
            records: c.records[..5].to_vec(),
        };
        assert!(cohort_filter(&unsure, Task::Sepsis).is_err());
    }

    proptest! {
        #[test]
        fn filter_is_idempotent_and_order_preserving(labels in proptest::collection::vec(0usize..3, 1..40)) {
            let d = default_dictionary();
            let records: Vec<PatientRecord> = labels
                .iter()
                .enumerate()
                .map(|(i, &l)| record(&format!("p{i}"), &d, SepsisLabel::ALL[l], SurvivalLabel::ALL[l]))
                .collect();
            let c = Cohort { dictionary: d, records };
            if let Ok(f) = cohort_filter(&c, Task::Sepsis) {
                prop_assert_eq!(&cohort_filter(&f, Task::Sepsis).unwrap(), &f);
                let ids: Vec<usize> = f.records.iter().map(|r| r.patient_id[1..].parse().unwrap()).collect();
                prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
            }
        }

        #[test]
        fn encoding_inverts_for_observed_values(v in -1e6f64..1e6, b: bool, cat in 0usize..4) {
            let d = default_dictionary();
            let real = d.get("lactate").unwrap();
            prop_assert_eq!(real.encode(&real.decode(Some(v))).unwrap(), Some(v));
            let flag = d.get("dialysis").unwrap();
            let fv = f64::from(u8::from(b));
            prop_assert_eq!(flag.encode(&flag.decode(Some(fv))).unwrap(), Some(fv));
            let mode = d.get("ventilation_mode").unwrap();
            prop_assert_eq!(mode.encode(&mode.decode(Some(cat as f64))).unwrap(), Some(cat as f64));
        }
    }
}
