use serde::{Deserialize, Serialize};

use super::{
    compute_index, default_index_config, median_of, roi_statistic, BandRatioSpec, FeatureDictionary, RoiStatistic,
};
use crate::cube::{disk_mask, l1_normalize, CalibrationState, RegionAnnotation, SpectralCube};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub indices: Vec<BandRatioSpec>,
    /// Append the per-channel ROI median of the l1-normalized spectrum.
    pub include_spectrum: bool,
    pub statistic: RoiStatistic,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            indices: default_index_config(),
            include_spectrum: false,
            statistic: RoiStatistic::Median,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

/// Name of the spectrum feature for a channel centred at `wavelength_nm`.
pub fn spectrum_feature_name(wavelength_nm: f64) -> String {
    format!("spectrum_{wavelength_nm:.0}nm")
}

/// Computes ROI-level features from a calibrated cube.
///
/// Order: one value per configured index (ROI statistic of the index map over
/// the l1-normalized cube), then, if enabled, the per-channel ROI median of
/// the l1-normalized spectrum in wavelength order.
pub fn extract_feature_vector(
    cube: &SpectralCube,
    roi: &RegionAnnotation,
    config: &FeatureConfig,
) -> Result<FeatureVector> {
    let normalized = match cube.state() {
        CalibrationState::RawCounts => return Err(Error::State("feature extraction needs a calibrated cube".into())),
        CalibrationState::Reflectance => l1_normalize(cube)?,
        CalibrationState::L1Normalized => cube.clone(),
    };
    roi.validate(cube.width(), cube.height())?;
    let mask = disk_mask(cube.width(), cube.height(), roi);
    let mut names = Vec::new();
    let mut values = Vec::new();
    for spec in &config.indices {
        let map = compute_index(&normalized, spec, &mask)?;
        names.push(spec.name.clone());
        values.push(roi_statistic(&map, &mask, config.statistic)?);
    }
    if config.include_spectrum {
        for c in 0..normalized.channels() {
            let band = normalized.band(c);
            let picked: Vec<f64> = band
                .iter()
                .zip(&mask)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v as f64)
                .collect();
            names.push(spectrum_feature_name(normalized.wavelength(c)));
            values.push(median_of(picked));
        }
    }
    Ok(FeatureVector { names, values })
}

pub fn feature_dictionary(names: &[String]) -> FeatureDictionary {
    names.iter().cloned().enumerate().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::{Site, HSI_CHANNELS};
    use rand::Rng;

    fn cube(seed: u64, scale: f32) -> SpectralCube {
        let (w, h) = (40, 40);
        let mut rng = crate::seed::rng(seed, 0);
        let values = (0..w * h * HSI_CHANNELS)
            .map(|_| scale * rng.random_range(0.05f32..0.8))
            .collect();
        SpectralCube::hsi(w, h, CalibrationState::Reflectance, values).unwrap()
    }

    fn roi() -> RegionAnnotation {
        RegionAnnotation::with_default_radius("p", Site::Finger, 20, 20)
    }

    #[test]
    fn feature_lengths() {
        let c = cube(1, 1.0);
        let mut cfg = FeatureConfig::default();
        assert_eq!(extract_feature_vector(&c, &roi(), &cfg).unwrap().values.len(), 4);
        cfg.include_spectrum = true;
        let fv = extract_feature_vector(&c, &roi(), &cfg).unwrap();
        assert_eq!(fv.values.len(), 104);
        assert_eq!(fv.names[4], "spectrum_500nm");
        assert_eq!(fv.names[103], "spectrum_995nm");
        let dict = feature_dictionary(&fv.names);
        assert_eq!(dict[&0], "StO2");
        assert_eq!(dict.len(), 104);
    }

    #[test]
    fn deterministic_and_scale_invariant() {
        let cfg = FeatureConfig {
            include_spectrum: true,
            ..FeatureConfig::default()
        };
        let a = extract_feature_vector(&cube(3, 1.0), &roi(), &cfg).unwrap();
        let b = extract_feature_vector(&cube(3, 1.0), &roi(), &cfg).unwrap();
        assert_eq!(a, b);
        // 0.5 and 2.0 are exact in binary, so the normalized spectra match closely
        let half = extract_feature_vector(&cube(3, 0.5), &roi(), &cfg).unwrap();
        for (x, y) in a.values.iter().zip(&half.values) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
        for v in &a.values[..4] {
            assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn raw_cube_rejected() {
        let c = SpectralCube::filled(10, 10, HSI_CHANNELS, CalibrationState::RawCounts, 5.0).unwrap();
        let r = RegionAnnotation { radius: 3, ..roi() };
        let r = RegionAnnotation {
            center_x: 5,
            center_y: 5,
            ..r
        };
        assert!(matches!(
            extract_feature_vector(&c, &r, &FeatureConfig::default()),
            Err(Error::State(_))
        ));
    }
}
