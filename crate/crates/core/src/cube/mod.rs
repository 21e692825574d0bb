//! Hyperspectral and RGB cubes: storage, calibration and geometric preprocessing.
//!
//! Values are stored band-sequential (channel-major): the element for channel
//! `c`, row `y`, column `x` lives at `c * height * width + y * width + x`.

mod annotation;
mod io;
mod preprocess;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use annotation::{load_annotations, save_annotations, RegionAnnotation, Site};
pub use io::{load_cube, read_cube, save_cube, write_cube, MAGIC};
pub use preprocess::{
    apply_roi, calibrate, disk_mask, l1_normalize, rescale, PreprocessedSample, RoiCrop, CALIBRATION_CLAMP_MAX,
    CALIBRATION_EPSILON, TARGET_SIZE,
};

/// Number of channels of the hyperspectral camera.
pub const HSI_CHANNELS: usize = 100;
/// Centre wavelength of the first HSI channel.
pub const HSI_WAVELENGTH_START_NM: f64 = 500.0;
/// Channel spacing of the HSI camera.
pub const HSI_WAVELENGTH_STEP_NM: f64 = 5.0;
/// Number of channels of the paired RGB image.
pub const RGB_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationState {
    RawCounts,
    Reflectance,
    L1Normalized,
}

impl CalibrationState {
    pub fn as_str(self) -> &'static str {
        match self {
            CalibrationState::RawCounts => "raw_counts",
            CalibrationState::Reflectance => "reflectance",
            CalibrationState::L1Normalized => "l1_normalized",
        }
    }
}

/// An immutable image volume with a wavelength axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    width: usize,
    height: usize,
    channels: usize,
    wavelength_start_nm: f64,
    wavelength_step_nm: f64,
    state: CalibrationState,
    values: Vec<f32>,
}

impl SpectralCube {
    /// Builds a cube from channel-major values, checking the element count,
    /// finiteness, and non-negativity of calibrated data.
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        wavelength_start_nm: f64,
        wavelength_step_nm: f64,
        state: CalibrationState,
        values: Vec<f32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::Geometry(format!(
                "cube dimensions must be positive, got {width}x{height}x{channels}"
            )));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Error::Geometry("cube dimensions overflow".into()))?;
        if values.len() != expected {
            return Err(Error::Geometry(format!(
                "{width}x{height}x{channels} cube needs {expected} values, got {}",
                values.len()
            )));
        }
        if !wavelength_start_nm.is_finite() || !wavelength_step_nm.is_finite() {
            return Err(Error::Geometry("wavelength axis must be finite".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at element {i}")));
        }
        if state != CalibrationState::RawCounts {
            if let Some(i) = values.iter().position(|&v| v < 0.0) {
                return Err(Error::Data(format!(
                    "negative value {} at element {i} in a {} cube",
                    values[i],
                    state.as_str()
                )));
            }
        }
        Ok(Self {
            width,
            height,
            channels,
            wavelength_start_nm,
            wavelength_step_nm,
            state,
            values,
        })
    }

    /// A cube on the standard 500-995 nm, 100-channel HSI axis.
    pub fn hsi(width: usize, height: usize, state: CalibrationState, values: Vec<f32>) -> Result<Self> {
        Self::new(
            width,
            height,
            HSI_CHANNELS,
            HSI_WAVELENGTH_START_NM,
            HSI_WAVELENGTH_STEP_NM,
            state,
            values,
        )
    }

    /// A cube filled with one value.
    pub fn filled(width: usize, height: usize, channels: usize, state: CalibrationState, value: f32) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            HSI_WAVELENGTH_START_NM,
            HSI_WAVELENGTH_STEP_NM,
            state,
            vec![value; width * height * channels],
        )
    }

    /// Same geometry and wavelength axis, new state and values.
    pub fn with_values(&self, state: CalibrationState, values: Vec<f32>) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.channels,
            self.wavelength_start_nm,
            self.wavelength_step_nm,
            state,
            values,
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn wavelength_start_nm(&self) -> f64 {
        self.wavelength_start_nm
    }

    pub fn wavelength_step_nm(&self) -> f64 {
        self.wavelength_step_nm
    }

    pub fn state(&self) -> CalibrationState {
        self.state
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Centre wavelength of channel `c`.
    pub fn wavelength(&self, c: usize) -> f64 {
        self.wavelength_start_nm + c as f64 * self.wavelength_step_nm
    }

    /// One spectral band as a row-major image.
    pub fn band(&self, c: usize) -> &[f32] {
        let n = self.pixels();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.values[c * self.pixels() + y * self.width + x]
    }

    /// The spectrum of pixel `p` (row-major pixel index).
    pub fn spectrum(&self, p: usize) -> Vec<f32> {
        let n = self.pixels();
        (0..self.channels).map(|c| self.values[c * n + p]).collect()
    }

    pub fn same_geometry(&self, other: &SpectralCube) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_value_count() {
        let err = SpectralCube::new(2, 2, 3, 500.0, 5.0, CalibrationState::RawCounts, vec![0.0; 11]);
        assert!(matches!(err, Err(Error::Geometry(_))));
    }

    #[test]
    fn rejects_non_finite_and_negative_reflectance() {
        let mut v = vec![0.5; 8];
        v[3] = f32::NAN;
        assert!(SpectralCube::new(2, 2, 2, 500.0, 5.0, CalibrationState::RawCounts, v).is_err());
        let mut v = vec![0.5; 8];
        v[5] = -0.1;
        assert!(SpectralCube::new(2, 2, 2, 500.0, 5.0, CalibrationState::Reflectance, v.clone()).is_err());
        assert!(SpectralCube::new(2, 2, 2, 500.0, 5.0, CalibrationState::RawCounts, v).is_ok());
    }

    #[test]
    fn hsi_axis_spans_500_to_1000() {
        let cube = SpectralCube::filled(1, 1, HSI_CHANNELS, CalibrationState::Reflectance, 0.5).unwrap();
        assert_eq!(cube.wavelength(0), 500.0);
        assert_eq!(cube.wavelength(99), 995.0);
        assert!(cube.wavelength(99) + cube.wavelength_step_nm() <= 1000.0 + 1e-9);
    }

    #[test]
    fn band_sequential_indexing() {
        let values: Vec<f32> = (0..12).map(|v| v as f32).collect();
        let cube = SpectralCube::new(3, 2, 2, 500.0, 5.0, CalibrationState::RawCounts, values).unwrap();
        assert_eq!(cube.get(1, 0, 0), 6.0);
        assert_eq!(cube.get(0, 1, 2), 5.0);
        assert_eq!(cube.spectrum(4), vec![4.0, 10.0]);
        assert_eq!(cube.band(1), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
    }
}
