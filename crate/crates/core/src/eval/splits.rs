use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clinical::Task;
use crate::error::{Error, Result};
use crate::seed;

pub const OUTER_FOLDS: usize = 5;
pub const INNER_FOLDS: usize = 5;
pub const SPLIT_PLAN_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub patient_id: String,
    pub label: bool,
    pub outer_fold: usize,
    /// Inner fold used whenever the patient belongs to an outer training set.
    pub inner_fold: usize,
}

/// Stratified patient-level nested cross-validation plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub format_version: u32,
    pub task: Task,
    pub seed: u64,
    pub n_outer: usize,
    pub n_inner: usize,
    pub assignments: Vec<FoldAssignment>,
}

/// Builds the plan: each class is shuffled on its own stream, positives are
/// listed before negatives and the list is dealt round-robin over the outer
/// folds, which keeps every fold within one patient of the stratified ideal.
/// Inner folds are dealt the same way inside each outer fold, starting at an
/// offset equal to the outer index so inner fold sizes stay balanced across
/// the union of four outer folds.
pub fn make_nested_splits(patient_ids: &[String], labels: &[bool], task: Task, seed: u64) -> Result<SplitPlan> {
    if patient_ids.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} patient ids but {} labels",
            patient_ids.len(),
            labels.len()
        )));
    }
    let mut unique = HashSet::new();
    if let Some(dup) = patient_ids.iter().find(|id| !unique.insert(id.as_str())) {
        return Err(Error::Data(format!("duplicate patient id `{dup}`")));
    }
    let mut order = Vec::with_capacity(labels.len());
    for (stream, class) in [(0u64, true), (1u64, false)] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < OUTER_FOLDS {
            return Err(Error::Data(format!(
                "the {} class has {} patients; at least {OUTER_FOLDS} are needed",
                if class { "positive" } else { "negative" },
                members.len()
            )));
        }
        members.shuffle(&mut seed::rng(seed, stream));
        order.extend(members);
    }
    let mut outer = vec![0usize; labels.len()];
    let mut per_fold: Vec<Vec<usize>> = vec![Vec::new(); OUTER_FOLDS];
    for (k, &i) in order.iter().enumerate() {
        outer[i] = k % OUTER_FOLDS;
        per_fold[k % OUTER_FOLDS].push(i);
    }
    let mut inner = vec![0usize; labels.len()];
    for (o, members) in per_fold.iter().enumerate() {
        for (k, &i) in members.iter().enumerate() {
            inner[i] = (k + o) % INNER_FOLDS;
        }
    }
    let assignments = (0..labels.len())
        .map(|i| FoldAssignment {
            patient_id: patient_ids[i].clone(),
            label: labels[i],
            outer_fold: outer[i],
            inner_fold: inner[i],
        })
        .collect();
    Ok(SplitPlan {
        format_version: SPLIT_PLAN_VERSION,
        task,
        seed,
        n_outer: OUTER_FOLDS,
        n_inner: INNER_FOLDS,
        assignments,
    })
}

impl SplitPlan {
    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn patient_ids(&self) -> Vec<String> {
        self.assignments.iter().map(|a| a.patient_id.clone()).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.assignments.iter().map(|a| a.label).collect()
    }

    fn rows(&self, keep: impl Fn(&FoldAssignment) -> bool) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| keep(&self.assignments[i]))
            .collect()
    }

    /// Row indices (into `assignments`) of the outer test fold.
    pub fn outer_test(&self, outer: usize) -> Vec<usize> {
        self.rows(|a| a.outer_fold == outer)
    }

    pub fn outer_train(&self, outer: usize) -> Vec<usize> {
        self.rows(|a| a.outer_fold != outer)
    }

    pub fn inner_validation(&self, outer: usize, inner: usize) -> Vec<usize> {
        self.rows(|a| a.outer_fold != outer && a.inner_fold == inner)
    }

    pub fn inner_train(&self, outer: usize, inner: usize) -> Vec<usize> {
        self.rows(|a| a.outer_fold != outer && a.inner_fold != inner)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<SplitPlan> {
        let plan: SplitPlan = serde_json::from_str(text)?;
        if plan.format_version != SPLIT_PLAN_VERSION {
            return Err(Error::format(
                0,
                format!("unsupported split plan version {}", plan.format_version),
            ));
        }
        if plan
            .assignments
            .iter()
            .any(|a| a.outer_fold >= plan.n_outer || a.inner_fold >= plan.n_inner)
        {
            return Err(Error::format(0, "split plan assigns a fold index out of range"));
        }
        Ok(plan)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<SplitPlan> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SplitPlan::from_json(&text)
    }
}

/// Fails if any patient id occurs in both sets.
pub fn assert_disjoint(plan: &SplitPlan, train: &[usize], test: &[usize]) -> Result<()> {
    let train_ids: HashSet<&str> = train.iter().map(|&i| plan.assignments[i].patient_id.as_str()).collect();
    if let Some(&i) = test
        .iter()
        .find(|&&i| train_ids.contains(plan.assignments[i].patient_id.as_str()))
    {
        return Err(Error::State(format!(
            "patient `{}` is in both training and test data",
            plan.assignments[i].patient_id
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i:03}")).collect()
    }

    #[test]
    fn cohort_of_437() {
        let labels: Vec<bool> = (0..437).map(|i| i < 129).collect();
        let plan = make_nested_splits(&ids(437), &labels, Task::Sepsis, 3).unwrap();
        let mut sizes: Vec<usize> = (0..5).map(|o| plan.outer_test(o).len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![87, 87, 87, 88, 88]);
        for o in 0..5 {
            let test = plan.outer_test(o);
            let pos = test.iter().filter(|&&i| labels[i]).count() as f64;
            let ideal = test.len() as f64 * 129.0 / 437.0;
            assert!((pos - ideal).abs() <= 1.0, "fold {o}: {pos} vs {ideal}");
            assert_disjoint(&plan, &plan.outer_train(o), &test).unwrap();
            let mut inner_total = 0;
            for j in 0..5 {
                let v = plan.inner_validation(o, j);
                inner_total += v.len();
                assert_disjoint(&plan, &plan.inner_train(o, j), &v).unwrap();
                assert_eq!(plan.inner_train(o, j).len() + v.len(), 437 - test.len());
            }
            assert_eq!(inner_total, 437 - test.len());
        }
    }

    #[test]
    fn errors_and_json() {
        let labels: Vec<bool> = (0..20).map(|i| i < 4).collect();
        assert!(make_nested_splits(&ids(20), &labels, Task::Sepsis, 0).is_err());
        let labels: Vec<bool> = (0..20).map(|i| i < 5).collect();
        let plan = make_nested_splits(&ids(20), &labels, Task::Mortality, 0).unwrap();
        assert_eq!(SplitPlan::from_json(&plan.to_json().unwrap()).unwrap(), plan);
        let mut dup = ids(20);
        dup[3] = dup[2].clone();
        assert!(make_nested_splits(&dup, &labels, Task::Sepsis, 0).is_err());
        let mut bad = plan.clone();
        bad.assignments[0].outer_fold = 9;
        assert!(SplitPlan::from_json(&bad.to_json().unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn every_patient_in_one_outer_test_fold(n_pos in 5usize..60, n_neg in 5usize..120, seed: u64) {
            let labels: Vec<bool> = (0..n_pos + n_neg).map(|i| i < n_pos).collect();
            let plan = make_nested_splits(&ids(labels.len()), &labels, Task::Sepsis, seed).unwrap();
            let mut seen = vec![0usize; labels.len()];
            for o in 0..5 {
                for i in plan.outer_test(o) {
                    seen[i] += 1;
                }
                let test = plan.outer_test(o);
                let pos = test.iter().filter(|&&i| labels[i]).count() as f64;
                let ideal = test.len() as f64 * n_pos as f64 / labels.len() as f64;
                prop_assert!((pos - ideal).abs() <= 1.0);
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            prop_assert_eq!(&plan, &make_nested_splits(&ids(labels.len()), &labels, Task::Sepsis, seed).unwrap());
        }
    }
}
