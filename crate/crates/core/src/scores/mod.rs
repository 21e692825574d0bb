//! Table-driven clinical scores, the vasoactive-inotropic score and raw
//! biomarkers as classifier inputs.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clinical::{Cohort, ParameterDictionary, PatientRecord};
use crate::error::{Error, Result};

/// Scores shipped with the crate, by table name.
pub const SHIPPED_TABLES: [&str; 5] = ["qsofa", "sirs", "news", "sofa", "apache2"];

/// Raw biomarkers compared as-is.
pub const BIOMARKERS: [&str; 5] = ["crp", "pct", "lactate", "crt", "mottling_score"];

/// Parameters computed from recorded ones: `pf_ratio = po2 / fio2` and
/// `supplemental_oxygen` (FiO2 above room air or invasive ventilation).
pub const DERIVED_PARAMETERS: [&str; 2] = ["pf_ratio", "supplemental_oxygen"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
    /// Half-open `[lo, hi)`.
    #[serde(rename = "in_range")]
    InRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Rules on missing parameters simply do not fire.
    #[default]
    SkipRule,
    /// Any missing parameter marks the whole score invalid.
    ScoreInvalid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRule {
    pub parameter: String,
    pub comparator: Comparator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    pub points: f64,
    /// Rules sharing a group are alternative bands: only the highest
    /// satisfied one counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl ScoreRule {
    pub fn fires(&self, value: f64) -> bool {
        let t = self.threshold.unwrap_or(f64::NAN);
        match self.comparator {
            Comparator::Lt => value < t,
            Comparator::Le => value <= t,
            Comparator::Gt => value > t,
            Comparator::Ge => value >= t,
            Comparator::Eq => value == t,
            Comparator::InRange => {
                let [lo, hi] = self.range.unwrap_or([f64::NAN; 2]);
                lo <= value && value < hi
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreTable {
    pub score_name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub missing_policy: MissingPolicy,
    pub rules: Vec<ScoreRule>,
}

impl ScoreTable {
    /// Checks thresholds, points and that every parameter is known.
    pub fn validate(&self, dictionary: &ParameterDictionary) -> Result<()> {
        for (i, r) in self.rules.iter().enumerate() {
            let at = || format!("score `{}` rule {i}", self.score_name);
            if dictionary.get(&r.parameter).is_none() && !DERIVED_PARAMETERS.contains(&r.parameter.as_str()) {
                return Err(Error::Config(format!(
                    "{} references unknown parameter `{}`",
                    at(),
                    r.parameter
                )));
            }
            if !(r.points.is_finite() && r.points >= 0.0) {
                return Err(Error::Config(format!("{} has invalid points {}", at(), r.points)));
            }
            match (r.comparator, r.threshold, r.range) {
                (Comparator::InRange, _, Some([lo, hi])) if lo < hi => {}
                (Comparator::InRange, _, _) => {
                    return Err(Error::Config(format!("{} needs a nonempty `range`", at())));
                }
                (_, Some(t), _) if t.is_finite() => {}
                _ => return Err(Error::Config(format!("{} needs a finite `threshold`", at()))),
            }
        }
        Ok(())
    }

    pub fn with_policy(mut self, policy: MissingPolicy) -> Self {
        self.missing_policy = policy;
        self
    }
}

pub fn parse_score_table(text: &str) -> Result<ScoreTable> {
    Ok(serde_json::from_str(text)?)
}

pub fn load_score_table(path: &Path) -> Result<ScoreTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_score_table(&text)
}

pub fn shipped_table(name: &str) -> Result<ScoreTable> {
    let text = match name {
        "qsofa" => include_str!("../../config/scores/qsofa.table.json"),
        "sirs" => include_str!("../../config/scores/sirs.table.json"),
        "news" => include_str!("../../config/scores/news.table.json"),
        "sofa" => include_str!("../../config/scores/sofa.table.json"),
        "apache2" => include_str!("../../config/scores/apache2.table.json"),
        other => {
            return Err(Error::Config(format!(
                "no shipped score table `{other}` (available: {})",
                SHIPPED_TABLES.join(", ")
            )))
        }
    };
    parse_score_table(text)
}

/// Value of a recorded or derived parameter for one record.
pub fn parameter_value(dictionary: &ParameterDictionary, record: &PatientRecord, name: &str) -> Result<Option<f64>> {
    let get = |n: &str| dictionary.position(n).and_then(|j| record.values[j]);
    match name {
        "pf_ratio" => Ok(match (get("po2"), get("fio2")) {
            (Some(p), Some(f)) if f > 0.0 => Some(p / f),
            _ => None,
        }),
        "supplemental_oxygen" => {
            let fio2 = get("fio2").map(|f| f > 0.21 + 1e-9);
            let vent = get("mechanical_ventilation").map(|v| v != 0.0);
            Ok(match (fio2, vent) {
                (Some(true), _) | (_, Some(true)) => Some(1.0),
                (Some(false), Some(false)) => Some(0.0),
                (Some(false), None) | (None, Some(false)) => Some(0.0),
                (None, None) => None,
            })
        }
        _ => match dictionary.position(name) {
            Some(j) => Ok(record.values[j]),
            None => Err(Error::Config(format!("unknown parameter `{name}`"))),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreResult {
    pub patient_id: String,
    pub score_name: String,
    pub value: f64,
    pub valid: bool,
    /// Indices of the rules that contributed points.
    pub contributing_rules: Vec<usize>,
    /// Referenced parameters that were missing.
    pub missing_parameters: Vec<String>,
}

/// Sums points over satisfied rules; within a group only the highest
/// satisfied band counts (lowest rule index among equal points).
pub fn evaluate_score(
    dictionary: &ParameterDictionary,
    record: &PatientRecord,
    table: &ScoreTable,
) -> Result<ScoreResult> {
    table.validate(dictionary)?;
    let mut ungrouped = Vec::new();
    let mut groups: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    let mut missing: Vec<String> = Vec::new();
    for (i, rule) in table.rules.iter().enumerate() {
        let Some(v) = parameter_value(dictionary, record, &rule.parameter)? else {
            if !missing.contains(&rule.parameter) {
                missing.push(rule.parameter.clone());
            }
            continue;
        };
        if !rule.fires(v) {
            continue;
        }
        match &rule.group {
            None => ungrouped.push(i),
            Some(g) => {
                let slot = groups.entry(g.as_str()).or_insert((rule.points, i));
                if rule.points > slot.0 || (rule.points == slot.0 && i < slot.1) {
                    *slot = (rule.points, i);
                }
            }
        }
    }
    let mut contributing: Vec<usize> = ungrouped;
    contributing.extend(groups.values().map(|&(_, i)| i));
    contributing.sort_unstable();
    let value = contributing.iter().fold(0.0, |acc, &i| acc + table.rules[i].points);
    let valid = !(table.missing_policy == MissingPolicy::ScoreInvalid && !missing.is_empty());
    Ok(ScoreResult {
        patient_id: record.patient_id.clone(),
        score_name: table.score_name.clone(),
        value,
        valid,
        contributing_rules: contributing,
        missing_parameters: missing,
    })
}

pub fn evaluate_cohort(cohort: &Cohort, table: &ScoreTable) -> Result<Vec<ScoreResult>> {
    cohort
        .records
        .iter()
        .map(|r| evaluate_score(&cohort.dictionary, r, table))
        .collect()
}

/// Agent name to weight, e.g. `{"noradrenaline": 100}`.
pub type VisWeights = BTreeMap<String, f64>;

pub fn default_vis_weights() -> VisWeights {
    serde_json::from_str(include_str!("../../config/vis.weights.json")).expect("shipped weights are valid")
}

pub fn load_vis_weights(path: &Path) -> Result<VisWeights> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Weighted sum of vasoactive doses. Missing doses count as zero when
/// `missing_as_zero` is set; otherwise the score is unavailable (`None`).
pub fn vasoactive_inotropic_score(
    dictionary: &ParameterDictionary,
    record: &PatientRecord,
    weights: &VisWeights,
    missing_as_zero: bool,
) -> Result<Option<f64>> {
    let mut total = 0.0;
    for (agent, w) in weights {
        let Some(j) = dictionary.position(agent) else {
            return Err(Error::Config(format!("VIS weight for unknown agent `{agent}`")));
        };
        match record.values[j] {
            Some(d) if d < 0.0 => {
                return Err(Error::Data(format!(
                    "patient `{}` has negative {agent} dose {d}",
                    record.patient_id
                )))
            }
            Some(d) => total += w * d,
            None if missing_as_zero => {}
            None => return Ok(None),
        }
    }
    Ok(Some(total))
}

pub fn vis_results(cohort: &Cohort, weights: &VisWeights, missing_as_zero: bool) -> Result<Vec<ScoreResult>> {
    cohort
        .records
        .iter()
        .map(|r| {
            let v = vasoactive_inotropic_score(&cohort.dictionary, r, weights, missing_as_zero)?;
            Ok(ScoreResult {
                patient_id: r.patient_id.clone(),
                score_name: "vis".into(),
                value: v.unwrap_or(f64::NAN),
                valid: v.is_some(),
                contributing_rules: Vec::new(),
                missing_parameters: Vec::new(),
            })
        })
        .collect()
}

/// A recorded biomarker reported unchanged as a score.
pub fn biomarker_results(cohort: &Cohort, parameter: &str) -> Result<Vec<ScoreResult>> {
    let j = cohort
        .dictionary
        .position(parameter)
        .ok_or_else(|| Error::Config(format!("unknown biomarker `{parameter}`")))?;
    Ok(cohort
        .records
        .iter()
        .map(|r| ScoreResult {
            patient_id: r.patient_id.clone(),
            score_name: parameter.to_string(),
            value: r.values[j].unwrap_or(f64::NAN),
            valid: r.values[j].is_some(),
            contributing_rules: Vec::new(),
            missing_parameters: if r.values[j].is_none() {
                vec![parameter.to_string()]
            } else {
                Vec::new()
            },
        })
        .collect())
}

/// Any supported comparator by name: a shipped table, `vis` or a biomarker.
pub fn named_results(cohort: &Cohort, name: &str, policy: MissingPolicy) -> Result<Vec<ScoreResult>> {
    if name == "vis" {
        return vis_results(cohort, &default_vis_weights(), policy == MissingPolicy::SkipRule);
    }
    if SHIPPED_TABLES.contains(&name) {
        return evaluate_cohort(cohort, &shipped_table(name)?.with_policy(policy));
    }
    biomarker_results(cohort, name)
}

/// `(decision value, positive)` pairs of the valid results whose patients
/// carry a label; both classes must be represented.
pub fn score_as_classifier(results: &[ScoreResult], labels: &HashMap<String, bool>) -> Result<Vec<(f64, bool)>> {
    let pairs: Vec<(f64, bool)> = results
        .iter()
        .filter(|r| r.valid)
        .filter_map(|r| labels.get(&r.patient_id).map(|&l| (r.value, l)))
        .collect();
    for class in [true, false] {
        if !pairs.iter().any(|p| p.1 == class) {
            let name = results.first().map_or("score", |r| r.score_name.as_str());
            return Err(Error::Data(format!(
                "{name} has no valid results for the {} class",
                if class { "positive" } else { "negative" }
            )));
        }
    }
    Ok(pairs)
}

pub fn write_scores_csv<W: Write>(results: &[ScoreResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["patient_id", "score_name", "value", "valid"])?;
    for r in results {
        let value = if r.value.is_nan() {
            String::new()
        } else {
            r.value.to_string()
        };
        w.write_record([
            r.patient_id.as_str(),
            &r.score_name,
            &value,
            if r.valid { "true" } else { "false" },
        ])?;
    }
    w.flush().map_err(|e| Error::io("scores.csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clinical::{default_dictionary, SepsisLabel, SurvivalLabel};
    use proptest::prelude::*;

    fn rec(d: &ParameterDictionary, values: &[(&str, f64)]) -> PatientRecord {
        let mut r = PatientRecord {
            patient_id: "x".into(),
            sepsis_label: SepsisLabel::Sepsis,
            survival_label: SurvivalLabel::Survived,
            values: vec![None; d.len()],
        };
        for (n, v) in values {
            r.values[d.position(n).unwrap()] = Some(*v);
        }
        r
    }

    #[test]
    fn shipped_tables_validate() {
        let d = default_dictionary();
        for name in SHIPPED_TABLES {
            let t = shipped_table(name).unwrap();
            assert_eq!(t.score_name, name);
            t.validate(&d).unwrap();
        }
        assert!(shipped_table("nope").is_err());
    }

    #[test]
    fn qsofa_extremes() {
        let d = default_dictionary();
        let q = shipped_table("qsofa").unwrap();
        let normal = rec(&d, &[("respiratory_rate", 14.0), ("systolic_bp", 125.0), ("gcs", 15.0)]);
        let zero = evaluate_score(&d, &normal, &q).unwrap().value;
        assert_eq!(zero, 0.0);
        assert!(zero.is_sign_positive(), "an empty score must not print as -0");
        let sick = rec(&d, &[("respiratory_rate", 28.0), ("systolic_bp", 85.0), ("gcs", 11.0)]);
        let r = evaluate_score(&d, &sick, &q).unwrap();
        assert_eq!(r.value, 3.0);
        assert_eq!(r.contributing_rules, vec![0, 1, 2]);
    }

    #[test]
    fn sofa_fixture_by_hand() {
        let d = default_dictionary();
        let sofa = shipped_table("sofa").unwrap();
        let r = rec(
            &d,
            &[
                ("po2", 75.0),
                ("fio2", 0.5),       // P/F 150 -> 3
                ("platelets", 90.0), // -> 2
                ("bilirubin", 1.5),  // -> 1
                ("map", 62.0),
                ("noradrenaline", 0.08), // -> 3
                ("dobutamine", 5.0),
                ("gcs", 12.0),       // -> 2
                ("creatinine", 2.4), // -> 2
                ("dialysis", 0.0),
            ],
        );
        assert_eq!(evaluate_score(&d, &r, &sofa).unwrap().value, 13.0);
    }

    #[test]
    fn news_and_apache_fixtures() {
        let d = default_dictionary();
        let news = shipped_table("news").unwrap();
        // rr 22 -> 2, spo2 94 -> 1, fio2 .4 -> 2, temp 38.5 -> 1, sbp 105 -> 1, hr 115 -> 2, gcs 15 -> 0
        let r = rec(
            &d,
            &[
                ("respiratory_rate", 22.0),
                ("spo2", 94.0),
                ("fio2", 0.4),
                ("temperature", 38.5),
                ("systolic_bp", 105.0),
                ("heart_rate", 115.0),
                ("gcs", 15.0),
            ],
        );
        assert_eq!(evaluate_score(&d, &r, &news).unwrap().value, 9.0);
        let ap = shipped_table("apache2").unwrap();
        // temp 39.2 -> 3, map 65 -> 2, hr 120 -> 2, rr 30 -> 1, po2 80 -> 0, ph 7.2 -> 3,
        // na 140 -> 0, k 5.7 -> 1, crea 1.0 -> 0, hct 35 -> 0, wbc 18 -> 1, gcs 13 -> 2, age 67 -> 5
        let r = rec(
            &d,
            &[
                ("temperature", 39.2),
                ("map", 65.0),
                ("heart_rate", 120.0),
                ("respiratory_rate", 30.0),
                ("po2", 80.0),
                ("ph", 7.2),
                ("sodium", 140.0),
                ("potassium", 5.7),
                ("creatinine", 1.0),
                ("hematocrit", 35.0),
                ("leukocytes", 18.0),
                ("gcs", 13.0),
                ("age", 67.0),
            ],
        );
        assert_eq!(evaluate_score(&d, &r, &ap).unwrap().value, 20.0);
    }

    #[test]
    fn missing_policies() {
        let d = default_dictionary();
        let r = rec(&d, &[("respiratory_rate", 28.0)]);
        let q = shipped_table("qsofa").unwrap();
        let skip = evaluate_score(&d, &r, &q).unwrap();
        assert!(skip.valid);
        assert_eq!(skip.value, 1.0);
        assert_eq!(skip.missing_parameters, vec!["systolic_bp", "gcs"]);
        let strict = evaluate_score(&d, &r, &q.with_policy(MissingPolicy::ScoreInvalid)).unwrap();
        assert!(!strict.valid);
    }

    #[test]
    fn unknown_parameter_is_config_error() {
        let d = default_dictionary();
        let mut t = shipped_table("qsofa").unwrap();
        t.rules[0].parameter = "shoe_size".into();
        assert!(matches!(evaluate_score(&d, &rec(&d, &[]), &t), Err(Error::Config(_))));
        t.rules[0].parameter = "gcs".into();
        t.rules[0].points = -1.0;
        assert!(t.validate(&d).is_err());
    }

    #[test]
    fn vis_linearity_and_errors() {
        let d = default_dictionary();
        let w = default_vis_weights();
        let zeros: Vec<(&str, f64)> = w.keys().map(|k| (k.as_str(), 0.0)).collect();
        assert_eq!(
            vasoactive_inotropic_score(&d, &rec(&d, &zeros), &w, false).unwrap(),
            Some(0.0)
        );
        let single = rec(&d, &[("noradrenaline", 0.2)]);
        assert!((vasoactive_inotropic_score(&d, &single, &w, true).unwrap().unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(vasoactive_inotropic_score(&d, &single, &w, false).unwrap(), None);
        let multi = rec(
            &d,
            &[
                ("dopamine", 3.0),
                ("dobutamine", 5.0),
                ("adrenaline", 0.05),
                ("noradrenaline", 0.1),
                ("vasopressin", 0.0004),
                ("milrinone", 0.5),
            ],
        );
        // 3 + 5 + 5 + 10 + 4 + 5
        let v = vasoactive_inotropic_score(&d, &multi, &w, false).unwrap().unwrap();
        assert!((v - 32.0).abs() < 1e-9);
        let neg = rec(&d, &[("dopamine", -1.0)]);
        assert!(vasoactive_inotropic_score(&d, &neg, &w, true).is_err());
    }

    #[test]
    fn classifier_pairs_and_passthrough() {
        let d = default_dictionary();
        let records: Vec<PatientRecord> = [(1.0, true), (8.0, false), (4.5, true)]
            .iter()
            .enumerate()
            .map(|(i, &(crp, sep))| {
                let mut r = rec(&d, &[("crp", crp)]);
                r.patient_id = format!("p{i}");
                r.sepsis_label = if sep {
                    SepsisLabel::Sepsis
                } else {
                    SepsisLabel::NoSepsis
                };
                r
            })
            .collect();
        let c = Cohort { dictionary: d, records };
        let res = biomarker_results(&c, "crp").unwrap();
        let labels: HashMap<String, bool> = c
            .records
            .iter()
            .map(|r| (r.patient_id.clone(), r.sepsis_label == SepsisLabel::Sepsis))
            .collect();
        let pairs = score_as_classifier(&res, &labels).unwrap();
        assert_eq!(pairs, vec![(1.0, true), (8.0, false), (4.5, true)]);
        let only_pos: HashMap<String, bool> = [("p0".to_string(), true)].into();
        assert!(score_as_classifier(&res, &only_pos).is_err());
    }

    proptest! {
        #[test]
        fn sofa_monotone_in_bilirubin(a in 0.0f64..30.0, b in 0.0f64..30.0) {
            let d = default_dictionary();
            let sofa = shipped_table("sofa").unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let s_lo = evaluate_score(&d, &rec(&d, &[("bilirubin", lo)]), &sofa).unwrap().value;
            let s_hi = evaluate_score(&d, &rec(&d, &[("bilirubin", hi)]), &sofa).unwrap().value;
            prop_assert!(s_hi >= s_lo);
        }

        #[test]
        fn rule_order_does_not_matter(seed in 0u64..1000, rr in 5.0f64..40.0, hr in 30.0f64..180.0, t in 33.0f64..41.0) {
            use rand::seq::SliceRandom;
            let d = default_dictionary();
            let r = rec(&d, &[("respiratory_rate", rr), ("heart_rate", hr), ("temperature", t), ("spo2", 93.0)]);
            let news = shipped_table("news").unwrap();
            let mut shuffled = news.clone();
            shuffled.rules.shuffle(&mut crate::seed::rng(seed, 0));
            prop_assert_eq!(
                evaluate_score(&d, &r, &news).unwrap().value,
                evaluate_score(&d, &r, &shuffled).unwrap().value
            );
        }
    }
}
