use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Values `>= threshold` are called positive; the first point uses +inf,
    /// stored as `null` in JSON.
    #[serde(with = "infinite_as_null")]
    pub threshold: f64,
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auroc: f64,
}

fn check(values: &[f64], labels: &[bool]) -> Result<(u64, u64)> {
    if values.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} values but {} labels",
            values.len(),
            labels.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("decision value {v} is not finite")));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Data("ROC analysis needs both classes".into()));
    }
    Ok((pos, neg))
}

/// ROC curve by a descending threshold sweep with tied values grouped into
/// one step, and its area. The trapezoid area is accumulated in integers,
/// which makes it equal to the Mann-Whitney form
/// `P(pos > neg) + P(pos = neg) / 2`.
pub fn roc_auroc(values: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (pos, neg) = check(values, labels)?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the area in units of one (pos x neg) cell
    let mut area2: u128 = 0;
    let mut k = 0;
    while k < order.len() {
        let v = values[order[k]];
        let (mut dtp, mut dfp) = (0u64, 0u64);
        while k < order.len() && values[order[k]] == v {
            if labels[order[k]] {
                dtp += 1;
            } else {
                dfp += 1;
            }
            k += 1;
        }
        area2 += dfp as u128 * (2 * tp as u128 + dtp as u128);
        tp += dtp;
        fp += dfp;
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: v,
        });
    }
    let auroc = area2 as f64 / (2.0 * pos as f64 * neg as f64);
    Ok(RocCurve { points, auroc })
}

pub fn auroc(values: &[f64], labels: &[bool]) -> Result<f64> {
    Ok(roc_auroc(values, labels)?.auroc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn pair_oracle(values: &[f64], labels: &[bool]) -> f64 {
        let (mut s, mut n) = (0.0, 0.0);
        for i in 0..values.len() {
            for j in 0..values.len() {
                if labels[i] && !labels[j] {
                    n += 1.0;
                    if values[i] > values[j] {
                        s += 1.0;
                    } else if values[i] == values[j] {
                        s += 0.5;
                    }
                }
            }
        }
        s / n
    }

    #[test]
    fn trivial_cases() {
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[true, true, false, false]).unwrap(), 0.0);
        assert_eq!(auroc(&[3.0; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert!(auroc(&[1.0, 2.0], &[true, true]).is_err());
        assert!(auroc(&[1.0, f64::NAN], &[true, false]).is_err());
    }

    #[test]
    fn random_fixtures_match_pair_counting() {
        let mut rng = crate::seed::rng(404, 0);
        for _ in 0..50 {
            let labels: Vec<bool> = (0..200).map(|_| rng.random_bool(0.35)).collect();
            let values: Vec<f64> = labels
                .iter()
                .map(|&l| (rng.random_range(0..40) as f64 + if l { 6.0 } else { 0.0 }) / 10.0)
                .collect();
            let got = auroc(&values, &labels).unwrap();
            assert!((got - pair_oracle(&values, &labels)).abs() < 1e-12);
        }
    }

    #[test]
    fn curve_is_monotone_step_from_origin_to_corner() {
        let values = [0.3, 0.3, 0.9, 0.1, 0.5, 0.5, 0.7];
        let labels = [true, false, true, false, false, true, true];
        let c = roc_auroc(&values, &labels).unwrap();
        assert_eq!((c.points[0].fpr, c.points[0].tpr), (0.0, 0.0));
        let last = c.points.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert_eq!(c.points.len(), 6);
        for w in c.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr && w[1].threshold < w[0].threshold);
        }
    }

    #[test]
    fn json_keeps_the_infinite_threshold() {
        let c = roc_auroc(&[0.2, 0.7], &[false, true]).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"threshold\":null"));
        assert_eq!(serde_json::from_str::<RocCurve>(&text).unwrap(), c);
    }

    proptest! {
        #[test]
        fn invariant_under_increasing_transform(
            data in proptest::collection::vec((0i32..30, any::<bool>()), 2..80)
        ) {
            let values: Vec<f64> = data.iter().map(|d| d.0 as f64).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let a = auroc(&values, &labels).unwrap();
            let moved: Vec<f64> = values.iter().map(|v| (0.3 * v).exp() - 7.0).collect();
            prop_assert_eq!(a, auroc(&moved, &labels).unwrap());
            prop_assert!((a - pair_oracle(&values, &labels)).abs() < 1e-12);
        }
    }
}
