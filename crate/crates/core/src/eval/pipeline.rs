use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::predictions::{ensemble, PredictionRow};
use super::report::{evaluate_predictions, EvaluationReport};
use super::splits::{assert_disjoint, SplitPlan};
use super::table::FeatureTable;
use crate::error::{Error, Result};
use crate::forest::{fit, rfe_rank, ForestParams, RfeRanking};
use crate::seed;

/// Seed repetitions per inner fold; with five inner folds this yields the
/// 15-member ensemble per outer fold.
pub const REPETITIONS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestPipeline {
    pub forest: ForestParams,
    pub repetitions: usize,
    pub n_bootstrap: usize,
}

impl Default for ForestPipeline {
    fn default() -> Self {
        ForestPipeline {
            forest: ForestParams::default(),
            repetitions: REPETITIONS,
            n_bootstrap: super::bootstrap::DEFAULT_BOOTSTRAPS,
        }
    }
}

fn check_alignment(plan: &SplitPlan, table: &FeatureTable) -> Result<()> {
    if table.patient_ids.len() != plan.len()
        || table
            .patient_ids
            .iter()
            .zip(&plan.assignments)
            .any(|(id, a)| *id != a.patient_id)
    {
        return Err(Error::Data(
            "feature rows must follow the split plan's patient order; align the table first".into(),
        ));
    }
    Ok(())
}

fn member_seed(seed: u64, outer: usize, inner: usize, rep: usize) -> u64 {
    seed::derive(seed::derive(seed::derive(seed, outer as u64), inner as u64), rep as u64)
}

/// Outer-test predictions of every ensemble member. For each outer fold and
/// each inner fold `j`, `repetitions` forests are trained on the outer
/// training set minus inner fold `j` and applied to the outer test fold.
/// `columns(outer)` selects the feature columns used for that outer fold.
pub fn forest_predictions_with(
    plan: &SplitPlan,
    table: &FeatureTable,
    columns: &(dyn Fn(usize) -> Vec<usize> + Sync),
    pipeline: &ForestPipeline,
    seed: u64,
) -> Result<Vec<PredictionRow>> {
    check_alignment(plan, table)?;
    let labels: Vec<usize> = plan.assignments.iter().map(|a| usize::from(a.label)).collect();
    let jobs: Vec<(usize, usize, usize)> = (0..plan.n_outer)
        .flat_map(|o| (0..plan.n_inner).flat_map(move |j| (0..pipeline.repetitions).map(move |r| (o, j, r))))
        .collect();
    let per_job: Vec<Vec<PredictionRow>> = jobs
        .par_iter()
        .map(|&(o, j, r)| {
            let test = plan.outer_test(o);
            let train = plan.inner_train(o, j);
            assert_disjoint(plan, &train, &test)?;
            let cols = columns(o);
            let x = table.matrix.select_cols(&cols);
            let y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let model = fit(&x.select_rows(&train), &y, &pipeline.forest, member_seed(seed, o, j, r))?;
            let proba = model.predict_proba(&x.select_rows(&test))?;
            Ok(test
                .iter()
                .zip(proba)
                .map(|(&i, p)| PredictionRow {
                    patient_id: plan.assignments[i].patient_id.clone(),
                    fold: j,
                    repetition: r,
                    values: p,
                    label: labels[i],
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_job.into_iter().flatten().collect())
}

pub fn forest_predictions(
    plan: &SplitPlan,
    table: &FeatureTable,
    pipeline: &ForestPipeline,
    seed: u64,
) -> Result<Vec<PredictionRow>> {
    let all: Vec<usize> = (0..table.names.len()).collect();
    forest_predictions_with(plan, table, &|_| all.clone(), pipeline, seed)
}

/// Nested cross-validated forest evaluation; returns the member predictions
/// and the report of their ensemble.
pub fn evaluate_forest(
    plan: &SplitPlan,
    table: &FeatureTable,
    model: &str,
    pipeline: &ForestPipeline,
    seed: u64,
) -> Result<(Vec<PredictionRow>, EvaluationReport)> {
    let rows = forest_predictions(plan, table, pipeline, seed)?;
    let report = report_for(plan, &rows, model, pipeline, seed)?;
    Ok((rows, report))
}

fn report_for(
    plan: &SplitPlan,
    rows: &[PredictionRow],
    model: &str,
    pipeline: &ForestPipeline,
    seed: u64,
) -> Result<EvaluationReport> {
    let ens = ensemble(rows)?;
    evaluate_predictions(
        &ens,
        Some(plan),
        plan.task,
        model,
        pipeline.n_bootstrap,
        seed::derive(seed, u64::MAX),
    )
}

/// One elimination ranking per outer fold, each averaged over that fold's
/// inner training sets.
pub fn rfe_per_outer_fold(
    plan: &SplitPlan,
    table: &FeatureTable,
    params: &ForestParams,
    seed: u64,
) -> Result<Vec<RfeRanking>> {
    check_alignment(plan, table)?;
    let labels: Vec<usize> = plan.assignments.iter().map(|a| usize::from(a.label)).collect();
    (0..plan.n_outer)
        .map(|o| {
            let folds: Vec<_> = (0..plan.n_inner)
                .map(|j| {
                    let train = plan.inner_train(o, j);
                    assert_disjoint(plan, &train, &plan.outer_test(o))?;
                    Ok((
                        table.matrix.select_rows(&train),
                        train.iter().map(|&i| labels[i]).collect(),
                    ))
                })
                .collect::<Result<_>>()?;
            rfe_rank(&folds, params, seed::derive(seed, o as u64))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureStep {
    /// The `k` highest-ranked clinical features (0 = image features only).
    Top(usize),
    All,
}

impl FeatureStep {
    pub fn label(self) -> String {
        match self {
            FeatureStep::Top(k) => format!("top{k}"),
            FeatureStep::All => "all".into(),
        }
    }
}

/// Steps evaluated for each availability tier.
pub const SEQUENTIAL_STEPS: [FeatureStep; 4] = [
    FeatureStep::Top(1),
    FeatureStep::Top(2),
    FeatureStep::Top(3),
    FeatureStep::All,
];

/// Image features plus the clinical features chosen by `step`, where the
/// ranking of each outer fold picks that fold's clinical columns.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_feature_step(
    plan: &SplitPlan,
    image: &FeatureTable,
    clinical: &FeatureTable,
    rankings: &[RfeRanking],
    step: FeatureStep,
    model: &str,
    pipeline: &ForestPipeline,
    seed: u64,
) -> Result<EvaluationReport> {
    if rankings.len() != plan.n_outer {
        return Err(Error::Data(format!(
            "{} rankings for {} outer folds",
            rankings.len(),
            plan.n_outer
        )));
    }
    let p = clinical.names.len();
    for r in rankings {
        let mut order = r.elimination_order.clone();
        order.sort_unstable();
        if order != (0..p).collect::<Vec<_>>() {
            return Err(Error::Data(format!(
                "ranking covers {} features but the clinical table has {p}",
                r.elimination_order.len()
            )));
        }
    }
    if let FeatureStep::Top(k) = step {
        if k > p {
            return Err(Error::Data(format!("cannot take the top {k} of {p} clinical features")));
        }
    }
    let joined = image.join(clinical)?;
    let n_image = image.names.len();
    let columns = |o: usize| -> Vec<usize> {
        let mut cols: Vec<usize> = (0..n_image).collect();
        let chosen = match step {
            FeatureStep::Top(k) => rankings[o].top(k),
            FeatureStep::All => (0..p).collect(),
        };
        cols.extend(chosen.into_iter().map(|c| n_image + c));
        cols
    };
    let rows = forest_predictions_with(plan, &joined, &columns, pipeline, seed)?;
    report_for(plan, &rows, model, pipeline, seed)
}

/// Image features plus the top one, two and three clinical features and the
/// full clinical set: four reports named `{prefix}_{step}`.
pub fn sequential_feature_experiment(
    plan: &SplitPlan,
    image: &FeatureTable,
    clinical: &FeatureTable,
    rankings: &[RfeRanking],
    prefix: &str,
    pipeline: &ForestPipeline,
    seed: u64,
) -> Result<Vec<EvaluationReport>> {
    SEQUENTIAL_STEPS
        .iter()
        .map(|&step| {
            let name = format!("{prefix}_{}", step.label());
            evaluate_feature_step(plan, image, clinical, rankings, step, &name, pipeline, seed)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clinical::Task;
    use crate::eval::make_nested_splits;
    use rand::Rng;

    fn cohort(n: usize, p: usize, seed: u64) -> (SplitPlan, FeatureTable) {
        let mut rng = crate::seed::rng(seed, 0);
        let ids: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| {
                (0..p)
                    .map(|j| rng.random::<f64>() + if j == 0 && l { 0.7 } else { 0.0 })
                    .collect()
            })
            .collect();
        let names = (0..p).map(|j| format!("f{j}")).collect();
        let plan = make_nested_splits(&ids, &labels, Task::Sepsis, seed).unwrap();
        (plan, FeatureTable::from_rows(ids, names, &rows).unwrap())
    }

    fn small() -> ForestPipeline {
        ForestPipeline {
            forest: ForestParams {
                n_trees: 10,
                ..Default::default()
            },
            repetitions: 3,
            n_bootstrap: 50,
        }
    }

    #[test]
    fn fifteen_members_per_test_patient() {
        let (plan, table) = cohort(60, 3, 1);
        let rows = forest_predictions(&plan, &table, &small(), 0).unwrap();
        assert_eq!(rows.len(), 60 * 15);
        let ens = ensemble(&rows).unwrap();
        assert!(ens.iter().all(|e| e.members == 15));
        let (_, report) = evaluate_forest(&plan, &table, "rf", &small(), 0).unwrap();
        assert!(report.auroc > 0.7, "{}", report.auroc);
        assert_eq!(report.fold_aurocs.len(), 5);
    }

    #[test]
    fn misaligned_table_is_rejected() {
        let (plan, table) = cohort(30, 2, 2);
        let mut ids = table.patient_ids.clone();
        ids.reverse();
        let flipped = table.align(&ids).unwrap();
        assert!(forest_predictions(&plan, &flipped, &small(), 0).is_err());
    }

    #[test]
    fn sequential_steps_and_top_zero() {
        let (plan, image) = cohort(45, 2, 3);
        let (_, clinical) = cohort(45, 4, 4);
        let clinical = FeatureTable {
            names: (0..4).map(|j| format!("c{j}")).collect(),
            ..clinical
        };
        let params = small().forest;
        let rankings = rfe_per_outer_fold(&plan, &clinical, &params, 0).unwrap();
        assert_eq!(rankings.len(), 5);
        let reports =
            sequential_feature_experiment(&plan, &image, &clinical, &rankings, "one_hour", &small(), 1).unwrap();
        let names: Vec<&str> = reports.iter().map(|r| r.model.as_str()).collect();
        assert_eq!(
            names,
            vec!["one_hour_top1", "one_hour_top2", "one_hour_top3", "one_hour_all"]
        );
        let top0 = evaluate_feature_step(
            &plan,
            &image,
            &clinical,
            &rankings,
            FeatureStep::Top(0),
            "x",
            &small(),
            1,
        )
        .unwrap();
        let (_, image_only) = evaluate_forest(&plan, &image, "x", &small(), 1).unwrap();
        assert_eq!(top0, image_only);
        assert!(evaluate_feature_step(
            &plan,
            &image,
            &clinical,
            &rankings[..4],
            FeatureStep::All,
            "x",
            &small(),
            1
        )
        .is_err());
        assert!(evaluate_feature_step(
            &plan,
            &image,
            &clinical,
            &rankings,
            FeatureStep::Top(9),
            "x",
            &small(),
            1
        )
        .is_err());
    }
}
