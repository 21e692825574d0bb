//! Band-ratio tissue indices over absorbance spectra.
//!
//! An index is the ratio of mean absorbance inside a numerator band to mean
//! absorbance inside a denominator band, mapped affinely onto `[0, 1]` and
//! clamped. An optional second stage is evaluated the same way and the two
//! stage values are averaged.
//!
//! The band limits and scale constants ship as configuration
//! (`config/indices.default.json`) and can be replaced at run time.

mod features;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{CalibrationState, SpectralCube};
use crate::error::{Error, Result};

pub use features::{extract_feature_vector, feature_dictionary, FeatureConfig, FeatureVector};

/// Offset added to reflectance before taking the logarithm.
pub const ABSORBANCE_OFFSET: f64 = 1e-6;

pub const STO2: &str = "StO2";
pub const NPI: &str = "NPI";
pub const THI: &str = "THI";
pub const TWI: &str = "TWI";

/// Names of the four functional tissue parameters, in feature order.
pub const FUNCTIONAL_INDICES: [&str; 4] = [STO2, NPI, THI, TWI];

const DEFAULT_CONFIG: &str = include_str!("../../config/indices.default.json");
const SPECTRAL_RANGE_NM: (f64, f64) = (500.0, 1000.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRatioSpec {
    pub name: String,
    pub numerator_band: [f64; 2],
    pub denominator_band: [f64; 2],
    pub scale_min: f64,
    pub scale_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_stage: Option<Box<BandRatioSpec>>,
}

impl BandRatioSpec {
    pub fn validate(&self) -> Result<()> {
        for (label, [lo, hi]) in [
            ("numerator", self.numerator_band),
            ("denominator", self.denominator_band),
        ] {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::Config(format!(
                    "{}: {label} band [{lo}, {hi}] is empty",
                    self.name
                )));
            }
            if lo < SPECTRAL_RANGE_NM.0 || hi > SPECTRAL_RANGE_NM.1 {
                return Err(Error::Config(format!(
                    "{}: {label} band [{lo}, {hi}] leaves the 500-1000 nm range",
                    self.name
                )));
            }
        }
        if self.scale_min.is_nan() || self.scale_max.is_nan() || self.scale_min >= self.scale_max {
            return Err(Error::Config(format!(
                "{}: scale_min {} must be below scale_max {}",
                self.name, self.scale_min, self.scale_max
            )));
        }
        if let Some(stage) = &self.second_stage {
            stage.validate()?;
        }
        Ok(())
    }

    /// Maps the band definition onto channel indices of a cube's wavelength axis.
    pub fn resolve(&self, cube: &SpectralCube) -> Result<ResolvedBandRatio> {
        self.validate()?;
        let channels_in = |[lo, hi]: [f64; 2]| -> Result<Vec<usize>> {
            let picked: Vec<usize> = (0..cube.channels())
                .filter(|&c| {
                    let wl = cube.wavelength(c);
                    wl >= lo && wl <= hi
                })
                .collect();
            if picked.is_empty() {
                Err(Error::Config(format!(
                    "{}: band [{lo}, {hi}] nm contains no channel centre",
                    self.name
                )))
            } else {
                Ok(picked)
            }
        };
        Ok(ResolvedBandRatio {
            name: self.name.clone(),
            numerator: channels_in(self.numerator_band)?,
            denominator: channels_in(self.denominator_band)?,
            scale_min: self.scale_min,
            scale_max: self.scale_max,
            second_stage: match &self.second_stage {
                Some(s) => Some(Box::new(s.resolve(cube)?)),
                None => None,
            },
        })
    }
}

/// A [`BandRatioSpec`] bound to channel indices.
#[derive(Debug, Clone)]
pub struct ResolvedBandRatio {
    pub name: String,
    pub numerator: Vec<usize>,
    pub denominator: Vec<usize>,
    pub scale_min: f64,
    pub scale_max: f64,
    pub second_stage: Option<Box<ResolvedBandRatio>>,
}

impl ResolvedBandRatio {
    fn mean_over(absorbance: &[f64], channels: &[usize]) -> f64 {
        channels.iter().map(|&c| absorbance[c]).sum::<f64>() / channels.len() as f64
    }

    /// Numerator-band mean over denominator-band mean of this stage.
    pub fn ratio(&self, absorbance: &[f64]) -> f64 {
        Self::mean_over(absorbance, &self.numerator) / Self::mean_over(absorbance, &self.denominator)
    }

    /// Affinely scaled ratio of this stage before clamping.
    pub fn unclamped(&self, absorbance: &[f64]) -> f64 {
        (self.ratio(absorbance) - self.scale_min) / (self.scale_max - self.scale_min)
    }

    fn stage_value(&self, absorbance: &[f64]) -> f64 {
        let v = self.unclamped(absorbance);
        if v.is_nan() {
            // 0/0 ratio: no absorbance in either band
            0.0
        } else {
            v.clamp(0.0, 1.0)
        }
    }

    /// Final index value in `[0, 1]`.
    pub fn value(&self, absorbance: &[f64]) -> f64 {
        let first = self.stage_value(absorbance);
        match &self.second_stage {
            Some(stage) => 0.5 * (first + stage.value(absorbance)),
            None => first,
        }
    }
}

/// Loads an array of band-ratio specs from JSON.
pub fn load_index_config(path: impl AsRef<Path>) -> Result<Vec<BandRatioSpec>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_index_config(&text)
}

pub fn parse_index_config(text: &str) -> Result<Vec<BandRatioSpec>> {
    let specs: Vec<BandRatioSpec> = serde_json::from_str(text)?;
    if specs.is_empty() {
        return Err(Error::Config("index configuration is empty".into()));
    }
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

/// The shipped StO2/NPI/THI/TWI configuration.
pub fn default_index_config() -> Vec<BandRatioSpec> {
    parse_index_config(DEFAULT_CONFIG).expect("shipped index configuration is valid")
}

/// Per-element `-log10(R + 1e-6)` of a calibrated cube.
#[derive(Debug, Clone)]
pub struct AbsorbanceCube {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Channel-major, like [`SpectralCube`].
    pub values: Vec<f64>,
}

impl AbsorbanceCube {
    pub fn band(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.values[c * n..(c + 1) * n]
    }
}

fn absorbance_of(r: f32) -> f64 {
    -(r as f64 + ABSORBANCE_OFFSET).log10()
}

fn require_calibrated(cube: &SpectralCube) -> Result<()> {
    if cube.state() == CalibrationState::RawCounts {
        Err(Error::State(
            "absorbance needs a reflectance or l1-normalized cube".into(),
        ))
    } else {
        Ok(())
    }
}

pub fn absorbance(cube: &SpectralCube) -> Result<AbsorbanceCube> {
    require_calibrated(cube)?;
    Ok(AbsorbanceCube {
        width: cube.width(),
        height: cube.height(),
        channels: cube.channels(),
        values: cube.values().par_iter().map(|&r| absorbance_of(r)).collect(),
    })
}

/// A per-pixel index image; `NaN` outside the mask.
#[derive(Debug, Clone)]
pub struct IndexMap {
    pub index_name: String,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

fn check_mask(mask: &[bool], pixels: usize) -> Result<()> {
    if mask.len() != pixels {
        return Err(Error::Geometry(format!(
            "mask has {} entries for {pixels} pixels",
            mask.len()
        )));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::Data("ROI mask is empty".into()));
    }
    Ok(())
}

pub fn compute_index(cube: &SpectralCube, spec: &BandRatioSpec, mask: &[bool]) -> Result<IndexMap> {
    require_calibrated(cube)?;
    check_mask(mask, cube.pixels())?;
    let resolved = spec.resolve(cube)?;
    let n = cube.pixels();
    let channels = cube.channels();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0f64; channels],
            |spectrum, p| {
                if !mask[p] {
                    return f64::NAN;
                }
                for (c, a) in spectrum.iter_mut().enumerate() {
                    *a = absorbance_of(cube.values()[c * n + p]);
                }
                resolved.value(spectrum)
            },
        )
        .collect();
    Ok(IndexMap {
        index_name: spec.name.clone(),
        width: cube.width(),
        height: cube.height(),
        values,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoiStatistic {
    #[default]
    Median,
    Mean,
}

impl std::str::FromStr for RoiStatistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(RoiStatistic::Median),
            "mean" => Ok(RoiStatistic::Mean),
            other => Err(Error::Config(format!("unknown ROI statistic `{other}`"))),
        }
    }
}

/// Median of a non-empty slice (mean of the two central values for even sizes).
pub(crate) fn median_of(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn roi_statistic(map: &IndexMap, mask: &[bool], stat: RoiStatistic) -> Result<f64> {
    check_mask(mask, map.values.len())?;
    let picked: Vec<f64> = map
        .values
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .collect();
    Ok(match stat {
        RoiStatistic::Median => median_of(picked),
        RoiStatistic::Mean => picked.iter().sum::<f64>() / picked.len() as f64,
    })
}

/// Index position → feature name, as emitted alongside feature tables.
pub type FeatureDictionary = BTreeMap<usize, String>;
