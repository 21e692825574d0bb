use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bootstrap::bootstrap_ci;
use super::predictions::EnsembledPrediction;
use super::roc::{roc_auroc, RocPoint};
use super::splits::SplitPlan;
use crate::clinical::Task;
use crate::error::{Error, Result};
use crate::stats::{boxplot_stats, BoxplotStats};

/// Unit resampled by the bootstrap: one ensembled prediction per patient.
pub const BOOTSTRAP_UNIT: &str = "patient";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task: Task,
    pub model: String,
    pub n_patients: usize,
    pub n_positive: usize,
    /// AUROC of the full, non-resampled prediction set.
    pub auroc: f64,
    pub auroc_mean: f64,
    pub auroc_sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_bootstrap: usize,
    pub bootstrap_unit: String,
    pub bootstrap_seed: u64,
    pub degenerate_resamples_redrawn: usize,
    /// AUROC per outer test fold; `None` where a fold holds one class.
    pub fold_aurocs: Vec<Option<f64>>,
    pub auroc_boxplot: BoxplotStats,
    pub roc: Vec<RocPoint>,
}

/// Scores ensembled predictions: ROC on the full set, bootstrap summary and
/// per-fold AUROCs where `plan` is given.
pub fn evaluate_predictions(
    predictions: &[EnsembledPrediction],
    plan: Option<&SplitPlan>,
    task: Task,
    model: &str,
    n_bootstrap: usize,
    seed: u64,
) -> Result<EvaluationReport> {
    let values: Vec<f64> = predictions.iter().map(EnsembledPrediction::decision).collect();
    let labels: Vec<bool> = predictions.iter().map(|p| p.label == 1).collect();
    evaluate_values(
        &values,
        &labels,
        &predictions.iter().map(|p| p.patient_id.as_str()).collect::<Vec<_>>(),
        plan,
        task,
        model,
        n_bootstrap,
        seed,
    )
}

/// As [`evaluate_predictions`] for plain decision values (e.g. a score).
#[allow(clippy::too_many_arguments)]
pub fn evaluate_values(
    values: &[f64],
    labels: &[bool],
    patient_ids: &[&str],
    plan: Option<&SplitPlan>,
    task: Task,
    model: &str,
    n_bootstrap: usize,
    seed: u64,
) -> Result<EvaluationReport> {
    let roc = roc_auroc(values, labels)?;
    let boot = bootstrap_ci(values, labels, n_bootstrap, seed)?;
    let fold_aurocs = match plan {
        None => Vec::new(),
        Some(plan) => {
            let fold_of: HashMap<&str, usize> = plan
                .assignments
                .iter()
                .map(|a| (a.patient_id.as_str(), a.outer_fold))
                .collect();
            let mut per: Vec<(Vec<f64>, Vec<bool>)> = vec![(Vec::new(), Vec::new()); plan.n_outer];
            for ((id, &v), &l) in patient_ids.iter().zip(values).zip(labels) {
                let f = *fold_of
                    .get(id)
                    .ok_or_else(|| Error::Data(format!("patient `{id}` is not in the split plan")))?;
                per[f].0.push(v);
                per[f].1.push(l);
            }
            per.iter().map(|(v, l)| roc_auroc(v, l).ok().map(|r| r.auroc)).collect()
        }
    };
    Ok(EvaluationReport {
        task,
        model: model.to_string(),
        n_patients: values.len(),
        n_positive: labels.iter().filter(|&&l| l).count(),
        auroc: roc.auroc,
        auroc_mean: boot.mean,
        auroc_sd: boot.sd,
        ci_low: boot.ci_low,
        ci_high: boot.ci_high,
        n_bootstrap: boot.n_bootstrap,
        bootstrap_unit: BOOTSTRAP_UNIT.to_string(),
        bootstrap_seed: seed,
        degenerate_resamples_redrawn: boot.redrawn,
        fold_aurocs,
        auroc_boxplot: boxplot_stats(&boot.aurocs)?,
        roc: roc.points,
    })
}

pub fn write_report_json(reports: &[EvaluationReport], path: &Path) -> Result<()> {
    let text = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0])?
    } else {
        serde_json::to_string_pretty(reports)?
    };
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// `model,fpr,tpr,threshold` rows; the leading +inf threshold is written as `inf`.
pub fn write_roc_csv<W: Write>(reports: &[EvaluationReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "fpr", "tpr", "threshold"])?;
    for r in reports {
        for p in &r.roc {
            w.write_record([
                r.model.clone(),
                p.fpr.to_string(),
                p.tpr.to_string(),
                p.threshold.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("roc.csv", e))?;
    Ok(())
}

/// Box plot of each model's bootstrap AUROC distribution.
pub fn write_boxplot_csv<W: Write>(reports: &[EvaluationReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "model",
        "whisker_low",
        "q1",
        "median",
        "q3",
        "whisker_high",
        "mean",
        "n_outliers",
    ])?;
    for r in reports {
        let b = &r.auroc_boxplot;
        w.write_record([
            r.model.clone(),
            b.whisker_low.to_string(),
            b.q1.to_string(),
            b.median.to_string(),
            b.q3.to_string(),
            b.whisker_high.to_string(),
            b.mean.to_string(),
            b.outliers.len().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("boxplot.csv", e))?;
    Ok(())
}

/// Writes `report.json`, `roc.csv` and `boxplot.csv` into `dir`.
pub fn write_report_files(reports: &[EvaluationReport], dir: &Path) -> Result<()> {
    write_report_json(reports, &dir.join("report.json"))?;
    let create = |name: &str| {
        let p = dir.join(name);
        std::fs::File::create(&p).map_err(|e| Error::io(&p, e))
    };
    write_roc_csv(reports, create("roc.csv")?)?;
    write_boxplot_csv(reports, create("boxplot.csv")?)?;
    Ok(())
}
