use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::ClinicalShift;
use crate::clinical::{ParameterDescriptor, ParameterKind};

/// How an ICU population value is drawn.
#[derive(Debug, Clone, Copy)]
enum Baseline {
    Normal {
        mean: f64,
        sd: f64,
        decimals: i32,
    },
    /// Zero unless the drug is given, then normally distributed.
    Dose {
        p_on: f64,
        mean: f64,
        sd: f64,
        decimals: i32,
    },
    Flag {
        p: f64,
    },
}

use Baseline::{Dose, Flag, Normal};

const fn normal(mean: f64, sd: f64, decimals: i32) -> Baseline {
    Normal { mean, sd, decimals }
}

const BASELINES: &[(&str, Baseline)] = &[
    ("age", normal(62.0, 15.0, 0)),
    ("bmi", normal(27.0, 5.0, 1)),
    ("heart_rate", normal(88.0, 18.0, 0)),
    ("map", normal(78.0, 14.0, 0)),
    ("systolic_bp", normal(120.0, 22.0, 0)),
    ("respiratory_rate", normal(19.0, 5.0, 0)),
    ("temperature", normal(37.0, 0.8, 1)),
    ("spo2", normal(95.0, 3.0, 0)),
    ("gcs", normal(13.0, 3.0, 0)),
    ("crt", normal(2.5, 1.2, 1)),
    ("mottling_score", normal(0.8, 1.0, 0)),
    ("ph", normal(7.38, 0.07, 2)),
    ("pco2", normal(41.0, 8.0, 0)),
    ("po2", normal(95.0, 30.0, 0)),
    ("hb_bga", normal(11.0, 2.2, 1)),
    ("lactate", normal(1.8, 1.2, 1)),
    ("base_excess", normal(-1.0, 4.0, 1)),
    ("sodium", normal(139.0, 4.5, 0)),
    ("potassium", normal(4.2, 0.6, 1)),
    ("dialysis", Flag { p: 0.08 }),
    ("ecmo", Flag { p: 0.03 }),
    ("mechanical_ventilation", Flag { p: 0.35 }),
    ("fio2", normal(0.40, 0.15, 2)),
    ("peep", normal(7.0, 3.0, 0)),
    ("ppeak", normal(22.0, 6.0, 0)),
    (
        "noradrenaline",
        Dose {
            p_on: 0.30,
            mean: 0.15,
            sd: 0.10,
            decimals: 3,
        },
    ),
    (
        "adrenaline",
        Dose {
            p_on: 0.05,
            mean: 0.08,
            sd: 0.05,
            decimals: 3,
        },
    ),
    (
        "vasopressin",
        Dose {
            p_on: 0.05,
            mean: 0.001,
            sd: 0.0005,
            decimals: 5,
        },
    ),
    (
        "dobutamine",
        Dose {
            p_on: 0.08,
            mean: 5.0,
            sd: 2.0,
            decimals: 1,
        },
    ),
    (
        "milrinone",
        Dose {
            p_on: 0.04,
            mean: 0.4,
            sd: 0.15,
            decimals: 2,
        },
    ),
    (
        "dopamine",
        Dose {
            p_on: 0.03,
            mean: 5.0,
            sd: 2.0,
            decimals: 1,
        },
    ),
    ("creatinine", normal(1.3, 0.8, 2)),
    ("gfr", normal(70.0, 30.0, 0)),
    ("urea", normal(50.0, 30.0, 0)),
    ("bilirubin", normal(1.0, 0.8, 2)),
    ("ldh", normal(300.0, 150.0, 0)),
    ("crp", normal(60.0, 50.0, 1)),
    ("pct", normal(1.0, 1.5, 2)),
    ("leukocytes", normal(10.0, 4.0, 1)),
    ("platelets", normal(220.0, 80.0, 0)),
    ("hb_lab", normal(11.0, 2.2, 1)),
    ("inr", normal(1.2, 0.3, 2)),
    ("hematocrit", normal(33.0, 6.0, 0)),
];

fn baseline(p: &ParameterDescriptor) -> Baseline {
    if let Some((_, b)) = BASELINES.iter().find(|(name, _)| *name == p.name) {
        return *b;
    }
    match (p.kind, p.plausible_range) {
        (ParameterKind::Boolean, _) => Flag { p: 0.2 },
        (_, Some([lo, hi])) => normal(0.5 * (lo + hi), (hi - lo) / 8.0, 3),
        _ => normal(0.0, 1.0, 3),
    }
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

/// Draws one encoded value. `shift` is the summed effect for the patient's
/// positive labels, in baseline standard deviations.
pub(super) fn draw_value(p: &ParameterDescriptor, shift: f64, rng: &mut ChaCha8Rng) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let u: f64 = rng.random();
    let v = match p.kind {
        ParameterKind::Categorical => {
            let k = p.categories.len().max(1);
            let pick = ((u * k as f64) as usize + (shift.max(0.0).round() as usize)).min(k - 1);
            return pick as f64;
        }
        ParameterKind::Boolean => {
            let base = match baseline(p) {
                Flag { p } => p,
                _ => 0.2,
            };
            return f64::from(u < (base + 0.15 * shift).clamp(0.0, 1.0));
        }
        ParameterKind::Real => match baseline(p) {
            Normal { mean, sd, decimals } => round_to(mean + sd * (z + shift), decimals),
            Dose {
                p_on,
                mean,
                sd,
                decimals,
            } => {
                if u < (p_on + 0.25 * shift).clamp(0.0, 0.95) {
                    round_to((mean + sd * (z + shift)).max(0.0), decimals)
                } else {
                    0.0
                }
            }
            Flag { .. } => f64::from(u < 0.5),
        },
    };
    match p.plausible_range {
        Some([lo, hi]) => v.clamp(lo, hi),
        None => v,
    }
}

/// Sum of the configured shifts that apply to a patient with these labels.
pub(super) fn total_shift(shifts: &[ClinicalShift], parameter: &str, sepsis: bool, died: bool) -> f64 {
    shifts
        .iter()
        .filter(|s| s.parameter == parameter)
        .filter(|s| match s.task {
            crate::clinical::Task::Sepsis => sepsis,
            crate::clinical::Task::Mortality => died,
        })
        .map(|s| s.shift_sd)
        .sum()
}
