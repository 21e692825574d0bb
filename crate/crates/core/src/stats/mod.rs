//! Two-sample testing and distribution summaries for the tissue indices.

pub mod special;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use special::{student_t_two_sided, student_t_upper_quantile};

/// Family-wise significance level for each grouping.
pub const FAMILY_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t_statistic: f64,
    pub dof: f64,
    pub p_two_sided: f64,
    /// 95% confidence interval of `mean(a) - mean(b)`.
    pub ci95_mean_difference: [f64; 2],
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with the `n - 1` denominator.
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

/// Two-sided Welch's unequal-variance t-test of `mean(a) - mean(b)`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Stats(format!(
            "Welch's test needs at least two values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Stats("samples contain non-finite values".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let va = sample_variance(a) / na;
    let vb = sample_variance(b) / nb;
    let se2 = va + vb;
    if se2 <= 0.0 {
        return Err(Error::Stats("both samples are constant; t is undefined".into()));
    }
    let se = se2.sqrt();
    let diff = mean(a) - mean(b);
    let t = diff / se;
    let dof = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let p = student_t_two_sided(t, dof);
    let q = student_t_upper_quantile(0.025, dof);
    Ok(WelchResult {
        t_statistic: t,
        dof,
        p_two_sided: p,
        ci95_mean_difference: [diff - q * se, diff + q * se],
    })
}

/// Per-test level under Bonferroni correction.
pub fn bonferroni(alpha_family: f64, m: usize) -> Result<f64> {
    if m == 0 || !(alpha_family > 0.0 && alpha_family < 1.0) {
        return Err(Error::Stats(format!(
            "Bonferroni needs m >= 1 and alpha in (0, 1), got m={m}, alpha={alpha_family}"
        )));
    }
    Ok(alpha_family / m as f64)
}

/// Linear-interpolation quantile (type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub mean: f64,
    pub outliers: Vec<f64>,
}

/// Quartiles, 1.5 IQR whiskers and outliers.
pub fn boxplot_stats(values: &[f64]) -> Result<BoxplotStats> {
    if values.is_empty() {
        return Err(Error::Stats("boxplot of an empty sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (fence_lo, fence_hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || sorted.iter().copied().filter(|&v| v >= fence_lo && v <= fence_hi);
    Ok(BoxplotStats {
        q1,
        median,
        q3,
        whisker_low: inside().fold(f64::INFINITY, f64::min),
        whisker_high: inside().fold(f64::NEG_INFINITY, f64::max),
        mean: mean(values),
        outliers: sorted
            .iter()
            .copied()
            .filter(|&v| v < fence_lo || v > fence_hi)
            .collect(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexTest {
    pub index: String,
    pub n_positive: usize,
    pub n_negative: usize,
    pub result: WelchResult,
    pub significant: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupTests {
    pub grouping: String,
    pub alpha_family: f64,
    pub alpha_per_test: f64,
    pub tests: Vec<IndexTest>,
}

/// One Welch test per index between the positive and negative group, with
/// Bonferroni-corrected significance flags. The t statistic is
/// `positive - negative`.
pub fn group_tests(
    grouping: &str,
    index_names: &[String],
    features: &[Vec<f64>],
    positive: &[bool],
) -> Result<GroupTests> {
    if features.len() != positive.len() {
        return Err(Error::Data(format!(
            "{} feature rows but {} group labels",
            features.len(),
            positive.len()
        )));
    }
    if let Some(row) = features.iter().find(|r| r.len() != index_names.len()) {
        return Err(Error::Data(format!(
            "feature row has {} values, expected {}",
            row.len(),
            index_names.len()
        )));
    }
    let alpha = bonferroni(FAMILY_ALPHA, index_names.len())?;
    let mut tests = Vec::with_capacity(index_names.len());
    for (j, name) in index_names.iter().enumerate() {
        let pos: Vec<f64> = features
            .iter()
            .zip(positive)
            .filter(|(_, &p)| p)
            .map(|(r, _)| r[j])
            .collect();
        let neg: Vec<f64> = features
            .iter()
            .zip(positive)
            .filter(|(_, &p)| !p)
            .map(|(r, _)| r[j])
            .collect();
        let result = welch_t_test(&pos, &neg)?;
        tests.push(IndexTest {
            index: name.clone(),
            n_positive: pos.len(),
            n_negative: neg.len(),
            significant: result.p_two_sided < alpha,
            result,
        });
    }
    Ok(GroupTests {
        grouping: grouping.to_string(),
        alpha_family: FAMILY_ALPHA,
        alpha_per_test: alpha,
        tests,
    })
}
