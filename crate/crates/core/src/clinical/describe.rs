use std::io::Write;

use serde::Serialize;

use super::{Cohort, ParameterKind, SepsisLabel, SurvivalLabel, Task};
use crate::error::{Error, Result};
use crate::stats::{mean, sample_variance};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupSummary {
    Real {
        n: usize,
        mean: Option<f64>,
        sd: Option<f64>,
    },
    Boolean {
        n: usize,
        n_true: usize,
        percent_true: Option<f64>,
    },
    Categorical {
        n: usize,
        counts: Vec<(String, usize)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSummary {
    pub name: String,
    pub unit: Option<String>,
    /// One entry per group, aligned with [`DescriptiveTable::groups`].
    pub groups: Vec<GroupSummary>,
    pub missing_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescriptiveTable {
    pub grouping: Task,
    pub groups: Vec<String>,
    pub group_sizes: Vec<usize>,
    pub parameters: Vec<ParameterSummary>,
    pub overall_missing_percent: f64,
}

fn group_key(task: Task, cohort: &Cohort, i: usize) -> &'static str {
    let r = &cohort.records[i];
    match task {
        Task::Sepsis => r.sepsis_label.as_str(),
        Task::Mortality => r.survival_label.as_str(),
    }
}

/// Per-group summaries of the observed (pre-imputation) values: mean and
/// sample SD for real parameters, percentage for flags, counts for
/// categories, plus the missing percentage over the whole cohort.
pub fn descriptive_stats(cohort: &Cohort, grouping: Task) -> Result<DescriptiveTable> {
    if cohort.is_empty() {
        return Err(Error::Data("cannot describe an empty cohort".into()));
    }
    let all: Vec<&'static str> = match grouping {
        Task::Sepsis => SepsisLabel::ALL.iter().map(|l| l.as_str()).collect(),
        Task::Mortality => SurvivalLabel::ALL.iter().map(|l| l.as_str()).collect(),
    };
    let members: Vec<Vec<usize>> = all
        .iter()
        .map(|g| {
            (0..cohort.len())
                .filter(|&i| group_key(grouping, cohort, i) == *g)
                .collect()
        })
        .collect();
    let (groups, members): (Vec<String>, Vec<Vec<usize>>) = all
        .iter()
        .zip(members)
        .filter(|(_, m)| !m.is_empty())
        .map(|(g, m)| (g.to_string(), m))
        .unzip();

    let mut parameters = Vec::with_capacity(cohort.dictionary.len());
    for (j, desc) in cohort.dictionary.parameters().iter().enumerate() {
        let observed =
            |rows: &[usize]| -> Vec<f64> { rows.iter().filter_map(|&i| cohort.records[i].values[j]).collect() };
        let summaries = members
            .iter()
            .map(|rows| {
                let v = observed(rows);
                match desc.kind {
                    ParameterKind::Real => GroupSummary::Real {
                        n: v.len(),
                        mean: (!v.is_empty()).then(|| mean(&v)),
                        sd: (v.len() > 1).then(|| sample_variance(&v).sqrt()),
                    },
                    ParameterKind::Boolean => {
                        let n_true = v.iter().filter(|x| **x != 0.0).count();
                        GroupSummary::Boolean {
                            n: v.len(),
                            n_true,
                            percent_true: (!v.is_empty()).then(|| 100.0 * n_true as f64 / v.len() as f64),
                        }
                    }
                    ParameterKind::Categorical => {
                        let mut counts: Vec<(String, usize)> = desc.categories.iter().map(|c| (c.clone(), 0)).collect();
                        for x in &v {
                            if let Some(slot) = counts.get_mut(*x as usize) {
                                slot.1 += 1;
                            }
                        }
                        GroupSummary::Categorical { n: v.len(), counts }
                    }
                }
            })
            .collect();
        let missing = cohort.records.iter().filter(|r| r.values[j].is_none()).count();
        parameters.push(ParameterSummary {
            name: desc.name.clone(),
            unit: desc.unit.clone(),
            groups: summaries,
            missing_percent: 100.0 * missing as f64 / cohort.len() as f64,
        });
    }
    Ok(DescriptiveTable {
        grouping,
        group_sizes: members.iter().map(Vec::len).collect(),
        groups,
        parameters,
        overall_missing_percent: 100.0 * cohort.missing_fraction(),
    })
}

impl DescriptiveTable {
    /// One row per parameter and group: `parameter,group,n,summary,missing_percent`,
    /// where `summary` reads `mean (sd)`, `k/n (p%)` or `cat:count;...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["parameter", "unit", "group", "n", "summary", "missing_percent"])?;
        for p in &self.parameters {
            for (g, s) in self.groups.iter().zip(&p.groups) {
                let (n, text) = match s {
                    GroupSummary::Real { n, mean, sd } => (
                        *n,
                        match (mean, sd) {
                            (Some(m), Some(s)) => format!("{m:.3} ({s:.3})"),
                            (Some(m), None) => format!("{m:.3}"),
                            _ => String::new(),
                        },
                    ),
                    GroupSummary::Boolean {
                        n,
                        n_true,
                        percent_true,
                    } => (
                        *n,
                        percent_true.map_or(String::new(), |p| format!("{n_true}/{n} ({p:.1}%)")),
                    ),
                    GroupSummary::Categorical { n, counts } => (
                        *n,
                        counts
                            .iter()
                            .map(|(c, k)| format!("{c}:{k}"))
                            .collect::<Vec<_>>()
                            .join(";"),
                    ),
                };
                w.write_record([
                    p.name.as_str(),
                    p.unit.as_deref().unwrap_or(""),
                    g,
                    &n.to_string(),
                    &text,
                    &format!("{:.2}", p.missing_percent),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("descriptive table", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::record;
    use super::super::{default_dictionary, SepsisLabel as S, SurvivalLabel as V};
    use super::*;

    fn summary<'a>(t: &'a DescriptiveTable, name: &str, group: &str) -> &'a GroupSummary {
        let g = t.groups.iter().position(|x| x == group).unwrap();
        &t.parameters.iter().find(|p| p.name == name).unwrap().groups[g]
    }

    #[test]
    fn constant_and_boolean() {
        let d = default_dictionary();
        let lac = d.position("lactate").unwrap();
        let dia = d.position("dialysis").unwrap();
        let mut records = Vec::new();
        for i in 0..4 {
            let mut r = record(&format!("p{i}"), &d, S::Sepsis, V::Survived);
            r.values[lac] = Some(5.0);
            r.values[dia] = Some(f64::from(u8::from(i < 2)));
            records.push(r);
        }
        let c = Cohort { dictionary: d, records };
        let t = descriptive_stats(&c, Task::Sepsis).unwrap();
        assert_eq!(t.groups, vec!["sepsis"]);
        assert_eq!(
            summary(&t, "lactate", "sepsis"),
            &GroupSummary::Real {
                n: 4,
                mean: Some(5.0),
                sd: Some(0.0)
            }
        );
        match summary(&t, "dialysis", "sepsis") {
            GroupSummary::Boolean { percent_true, .. } => assert_eq!(*percent_true, Some(50.0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn matches_recomputation_on_ten_records() {
        let d = default_dictionary();
        let age = d.position("age").unwrap();
        let sex = d.position("sex").unwrap();
        let ages = [71.0, 64.0, 55.0, 80.0, 45.0, 68.0, 77.0, 59.0, 62.0, 50.0];
        let mut records = Vec::new();
        for (i, &a) in ages.iter().enumerate() {
            let label = if i % 2 == 0 { S::Sepsis } else { S::NoSepsis };
            let mut r = record(&format!("p{i}"), &d, label, V::Survived);
            r.values[age] = if i == 9 { None } else { Some(a) };
            r.values[sex] = Some((i % 3 == 0) as u8 as f64);
            records.push(r);
        }
        let c = Cohort { dictionary: d, records };
        let t = descriptive_stats(&c, Task::Sepsis).unwrap();

        // spreadsheet-style: even rows are septic, row 9 has no age
        let sep: Vec<f64> = (0..10).step_by(2).map(|i| ages[i]).collect();
        let non: Vec<f64> = vec![ages[1], ages[3], ages[5], ages[7]];
        let msd = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let ss = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
            (m, (ss / (v.len() as f64 - 1.0)).sqrt())
        };
        for (group, v) in [("sepsis", &sep), ("no_sepsis", &non)] {
            let (m, s) = msd(v);
            match summary(&t, "age", group) {
                GroupSummary::Real {
                    n,
                    mean: Some(gm),
                    sd: Some(gs),
                } => {
                    assert_eq!(*n, v.len());
                    assert!((gm - m).abs() < 1e-12 && (gs - s).abs() < 1e-12);
                }
                other => panic!("{other:?}"),
            }
        }
        // males at rows 0, 3, 6, 9 -> septic {0, 6}, non-septic {3, 9}
        match summary(&t, "sex", "sepsis") {
            GroupSummary::Categorical { n, counts } => {
                assert_eq!(*n, 5);
                assert_eq!(counts, &vec![("female".to_string(), 3), ("male".to_string(), 2)]);
            }
            other => panic!("{other:?}"),
        }
        let age_row = t.parameters.iter().find(|p| p.name == "age").unwrap();
        assert!((age_row.missing_percent - 10.0).abs() < 1e-12);
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().contains("age,years,sepsis,5,"));
    }
}
