use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::BandShift;
use crate::cube::{CalibrationState, Site, SpectralCube, HSI_CHANNELS};
use crate::error::Result;

/// Absorption bump in log10 units: `height * exp(-(l - centre)^2 / (2 width^2))`.
#[derive(Debug, Clone, Copy)]
struct Bump {
    centre: f64,
    width: f64,
    height: f64,
}

const BUMPS: [Bump; 6] = [
    // oxyhaemoglobin Q bands
    Bump {
        centre: 542.0,
        width: 14.0,
        height: 0.30,
    },
    Bump {
        centre: 577.0,
        width: 11.0,
        height: 0.32,
    },
    // deoxyhaemoglobin shoulder
    Bump {
        centre: 760.0,
        width: 14.0,
        height: 0.08,
    },
    // lipid and water
    Bump {
        centre: 930.0,
        width: 16.0,
        height: 0.05,
    },
    Bump {
        centre: 970.0,
        width: 24.0,
        height: 0.16,
    },
    // broad haemoglobin tail into the red
    Bump {
        centre: 620.0,
        width: 60.0,
        height: 0.06,
    },
];

fn gauss(l: f64, b: &Bump) -> f64 {
    let z = (l - b.centre) / b.width;
    b.height * (-0.5 * z * z).exp()
}

pub(super) fn wavelength(c: usize) -> f64 {
    500.0 + 5.0 * c as f64
}

/// Per-patient absorbance spectrum on the HSI axis, with optional planted
/// band shifts already applied.
#[derive(Debug, Clone)]
pub(super) struct PatientSpectrum {
    absorbance: Vec<f64>,
}

impl PatientSpectrum {
    pub(super) fn draw(rng: &mut ChaCha8Rng, variability: f64, shifts: &[&BandShift]) -> Self {
        let jitter = |rng: &mut ChaCha8Rng| (1.0 + variability * rng.sample::<f64, _>(StandardNormal)).max(0.0);
        let baseline = 0.30 * jitter(rng);
        let slope = 0.25 * jitter(rng);
        let bumps: Vec<Bump> = BUMPS
            .iter()
            .map(|b| Bump {
                height: b.height * jitter(rng),
                ..*b
            })
            .collect();
        let absorbance = (0..HSI_CHANNELS)
            .map(|c| {
                let l = wavelength(c);
                let mut a = baseline + slope * (1000.0 - l) / 500.0 + bumps.iter().map(|b| gauss(l, b)).sum::<f64>();
                for s in shifts {
                    if (s.band_nm[0]..=s.band_nm[1]).contains(&l) {
                        a += s.delta;
                    }
                }
                a
            })
            .collect();
        PatientSpectrum { absorbance }
    }

    fn reflectance(&self, site: Site) -> Vec<f64> {
        // fingers read slightly darker than the palm
        let offset = match site {
            Site::Palm => 0.0,
            Site::Finger => 0.04,
        };
        self.absorbance.iter().map(|a| 10f64.powf(-(a + offset))).collect()
    }
}

/// Shared white and dark references for a `width x height` sensor.
pub(super) fn references(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Result<(SpectralCube, SpectralCube)> {
    let n = width * height;
    let mut white = vec![0f32; n * HSI_CHANNELS];
    let mut dark = vec![0f32; n * HSI_CHANNELS];
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let r_max = (cx * cx + cy * cy).sqrt();
    let pattern: Vec<f64> = (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    for c in 0..HSI_CHANNELS {
        let l = wavelength(c);
        let lamp = 3000.0 * (0.7 + 0.3 * (-((l - 700.0) / 200.0).powi(2)).exp());
        for p in 0..n {
            let (x, y) = ((p % width) as f64 + 0.5, (p / width) as f64 + 0.5);
            let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() / r_max;
            let d = 60.0 + 0.02 * (l - 500.0) + 2.0 * pattern[p];
            dark[c * n + p] = d as f32;
            white[c * n + p] = (d + lamp * (1.0 - 0.15 * r * r)) as f32;
        }
    }
    Ok((
        SpectralCube::hsi(width, height, CalibrationState::RawCounts, white)?,
        SpectralCube::hsi(width, height, CalibrationState::RawCounts, dark)?,
    ))
}

pub(super) struct Noise {
    /// Relative spectrum-wide brightness variation between pixels.
    pub texture: f64,
    /// Relative per-element reflectance noise.
    pub pixel: f64,
    /// Additive sensor noise in counts.
    pub read: f64,
}

/// Raw counts for one image of a patient.
pub(super) fn raw_cube(
    spectrum: &PatientSpectrum,
    site: Site,
    white: &SpectralCube,
    dark: &SpectralCube,
    noise: &Noise,
    rng: &mut ChaCha8Rng,
) -> Result<SpectralCube> {
    let n = white.pixels();
    let reflectance = spectrum.reflectance(site);
    let (w, d) = (white.values(), dark.values());
    let mut values = vec![0f32; n * HSI_CHANNELS];
    for p in 0..n {
        let texture = 1.0 + noise.texture * rng.sample::<f64, _>(StandardNormal);
        for (c, r) in reflectance.iter().enumerate() {
            let k = c * n + p;
            let refl = (r * texture * (1.0 + noise.pixel * rng.sample::<f64, _>(StandardNormal))).max(0.0);
            let counts =
                d[k] as f64 + refl * (w[k] as f64 - d[k] as f64) + noise.read * rng.sample::<f64, _>(StandardNormal);
            values[k] = counts.max(0.0) as f32;
        }
    }
    white.with_values(CalibrationState::RawCounts, values)
}
