use rayon::prelude::*;

use super::{CalibrationState, RegionAnnotation, SpectralCube, HSI_CHANNELS, RGB_CHANNELS};
use crate::error::{Error, Result};

/// Floor applied to the white-minus-dark denominator.
pub const CALIBRATION_EPSILON: f64 = 1e-6;
/// Upper clamp of calibrated reflectance; values above 1 are kept up to here.
pub const CALIBRATION_CLAMP_MAX: f64 = 2.0;
/// Side length of network input tensors.
pub const TARGET_SIZE: usize = 224;

const MAX_DEGENERATE_FRACTION: f64 = 0.01;

/// Converts raw sensor counts to reflectance using white and dark references.
pub fn calibrate(raw: &SpectralCube, white: &SpectralCube, dark: &SpectralCube) -> Result<SpectralCube> {
    if !raw.same_geometry(white) || !raw.same_geometry(dark) {
        return Err(Error::Geometry(format!(
            "raw {}x{}x{}, white {}x{}x{}, dark {}x{}x{}",
            raw.width(),
            raw.height(),
            raw.channels(),
            white.width(),
            white.height(),
            white.channels(),
            dark.width(),
            dark.height(),
            dark.channels()
        )));
    }
    if raw.state() != CalibrationState::RawCounts {
        return Err(Error::State(format!(
            "calibration expects raw counts, cube is {}",
            raw.state().as_str()
        )));
    }
    let degenerate = white
        .values()
        .par_iter()
        .zip(dark.values().par_iter())
        .filter(|(w, d)| w <= d)
        .count();
    let total = raw.values().len();
    if degenerate as f64 > MAX_DEGENERATE_FRACTION * total as f64 {
        return Err(Error::Calibration(format!(
            "white reference does not exceed dark reference in {degenerate} of {total} elements"
        )));
    }
    let values: Vec<f32> = raw
        .values()
        .par_iter()
        .zip(white.values().par_iter().zip(dark.values().par_iter()))
        .map(|(&r, (&w, &d))| {
            let denom = (w as f64 - d as f64).max(CALIBRATION_EPSILON);
            ((r as f64 - d as f64) / denom).clamp(0.0, CALIBRATION_CLAMP_MAX) as f32
        })
        .collect();
    raw.with_values(CalibrationState::Reflectance, values)
}

/// Divides every pixel spectrum by the sum of its absolute values.
///
/// All-zero spectra stay zero. Accepts reflectance or already normalized cubes.
pub fn l1_normalize(cube: &SpectralCube) -> Result<SpectralCube> {
    if cube.state() == CalibrationState::RawCounts {
        return Err(Error::State("l1 normalization requires a calibrated cube".into()));
    }
    let n = cube.pixels();
    let mut sums = vec![0.0f64; n];
    for c in 0..cube.channels() {
        for (s, v) in sums.iter_mut().zip(cube.band(c)) {
            *s += v.abs() as f64;
        }
    }
    let mut values = cube.values().to_vec();
    values.par_chunks_mut(n).for_each(|band| {
        for (v, &s) in band.iter_mut().zip(&sums) {
            *v = if s > 0.0 { (*v as f64 / s) as f32 } else { 0.0 };
        }
    });
    cube.with_values(CalibrationState::L1Normalized, values)
}

/// Row-major boolean mask of the in-image pixels covered by `roi`.
pub fn disk_mask(width: usize, height: usize, roi: &RegionAnnotation) -> Vec<bool> {
    let mut mask = vec![false; width * height];
    for y in 0..height {
        for x in 0..width {
            mask[y * width + x] = roi.contains(x as i64, y as i64);
        }
    }
    mask
}

/// A square crop around a circular ROI.
#[derive(Debug, Clone)]
pub struct RoiCrop {
    pub cube: SpectralCube,
    /// True where the pixel lies in the disk and inside the source image.
    pub mask: Vec<bool>,
    pub annotation: RegionAnnotation,
}

/// Crops the `2r x 2r` square around the annotation, zeroing everything
/// outside the disk and zero-padding beyond the image border.
pub fn apply_roi(cube: &SpectralCube, roi: &RegionAnnotation) -> Result<RoiCrop> {
    roi.validate(cube.width(), cube.height())?;
    let r = roi.radius as i64;
    let side = 2 * roi.radius as usize;
    let x0 = roi.center_x as i64 - r;
    let y0 = roi.center_y as i64 - r;
    let mut mask = vec![false; side * side];
    // (crop pixel, source pixel) pairs
    let mut picks = Vec::new();
    for j in 0..side {
        for i in 0..side {
            let (x, y) = (x0 + i as i64, y0 + j as i64);
            let in_image = x >= 0 && y >= 0 && (x as usize) < cube.width() && (y as usize) < cube.height();
            if in_image && roi.contains(x, y) {
                mask[j * side + i] = true;
                picks.push((j * side + i, y as usize * cube.width() + x as usize));
            }
        }
    }
    let n_out = side * side;
    let mut values = vec![0.0f32; n_out * cube.channels()];
    values.par_chunks_mut(n_out).enumerate().for_each(|(c, out)| {
        let band = cube.band(c);
        for &(dst, src) in &picks {
            out[dst] = band[src];
        }
    });
    let cropped = SpectralCube::new(
        side,
        side,
        cube.channels(),
        cube.wavelength_start_nm(),
        cube.wavelength_step_nm(),
        cube.state(),
        values,
    )?;
    Ok(RoiCrop {
        cube: cropped,
        mask,
        annotation: roi.clone(),
    })
}

/// Network-ready `target x target x C` tensor with its ROI mask.
#[derive(Debug, Clone)]
pub struct PreprocessedSample {
    pub tensor: SpectralCube,
    pub mask: Vec<bool>,
    pub source_annotation: RegionAnnotation,
}

struct AxisTap {
    lo: usize,
    hi: usize,
    frac: f64,
    nearest: usize,
}

fn axis_taps(src: usize, dst: usize) -> Vec<AxisTap> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let pos = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            let nearest = (((o as f64 + 0.5) * scale).floor() as usize).min(src - 1);
            AxisTap {
                lo,
                hi,
                frac: pos - lo as f64,
                nearest,
            }
        })
        .collect()
}

/// Resamples a square crop to `target x target`.
///
/// Values use bilinear interpolation restricted to in-mask source pixels
/// (weights renormalized over the mask), the mask uses nearest neighbour, and
/// values outside the resampled mask are zero.
pub fn rescale(crop: &RoiCrop, target: usize) -> Result<PreprocessedSample> {
    let cube = &crop.cube;
    if cube.width() != cube.height() {
        return Err(Error::Geometry(format!(
            "rescale needs a square crop, got {}x{}",
            cube.width(),
            cube.height()
        )));
    }
    if cube.channels() != HSI_CHANNELS && cube.channels() != RGB_CHANNELS {
        return Err(Error::Geometry(format!(
            "samples carry {HSI_CHANNELS} (HSI) or {RGB_CHANNELS} (RGB) channels, got {}",
            cube.channels()
        )));
    }
    if target == 0 {
        return Err(Error::Geometry("target size must be positive".into()));
    }
    let side = cube.width();
    let taps = axis_taps(side, target);
    let n_out = target * target;
    let mut mask = vec![false; n_out];
    for (oy, ty) in taps.iter().enumerate() {
        for (ox, tx) in taps.iter().enumerate() {
            mask[oy * target + ox] = crop.mask[ty.nearest * side + tx.nearest];
        }
    }
    let mut values = vec![0.0f32; n_out * cube.channels()];
    values.par_chunks_mut(n_out).enumerate().for_each(|(c, out)| {
        let band = cube.band(c);
        for (oy, ty) in taps.iter().enumerate() {
            for (ox, tx) in taps.iter().enumerate() {
                let o = oy * target + ox;
                if !mask[o] {
                    continue;
                }
                let corners = [
                    (ty.lo, tx.lo, (1.0 - ty.frac) * (1.0 - tx.frac)),
                    (ty.lo, tx.hi, (1.0 - ty.frac) * tx.frac),
                    (ty.hi, tx.lo, ty.frac * (1.0 - tx.frac)),
                    (ty.hi, tx.hi, ty.frac * tx.frac),
                ];
                let (mut acc, mut wsum) = (0.0f64, 0.0f64);
                for (y, x, w) in corners {
                    let s = y * side + x;
                    if crop.mask[s] && w > 0.0 {
                        acc += w * band[s] as f64;
                        wsum += w;
                    }
                }
                out[o] = if wsum > 0.0 {
                    (acc / wsum) as f32
                } else {
                    band[ty.nearest * side + tx.nearest]
                };
            }
        }
    });
    let tensor = SpectralCube::new(
        target,
        target,
        cube.channels(),
        cube.wavelength_start_nm(),
        cube.wavelength_step_nm(),
        cube.state(),
        values,
    )?;
    Ok(PreprocessedSample {
        tensor,
        mask,
        source_annotation: crop.annotation.clone(),
    })
}
