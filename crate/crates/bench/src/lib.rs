//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectrasep::cube::{CalibrationState, RegionAnnotation, Site, SpectralCube, HSI_CHANNELS};
use spectrasep::forest::Matrix;

/// Reflectance cube of uniform noise in [0.1, 0.9).
pub fn reflectance_cube(width: usize, height: usize, seed: u64) -> SpectralCube {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..width * height * HSI_CHANNELS)
        .map(|_| rng.random_range(0.1f32..0.9))
        .collect();
    SpectralCube::hsi(width, height, CalibrationState::Reflectance, values).expect("fixture geometry is valid")
}

pub fn centred_roi(cube: &SpectralCube, radius: u32) -> RegionAnnotation {
    RegionAnnotation {
        image_id: "bench".into(),
        site: Site::Palm,
        center_x: cube.width() as u32 / 2,
        center_y: cube.height() as u32 / 2,
        radius,
    }
}

/// Two-class data where the first column carries the signal.
pub fn classification(n: usize, p: usize, seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let data = y
        .iter()
        .flat_map(|&c| {
            let shift = c as f64;
            (0..p)
                .map(|j| rng.random::<f64>() + if j == 0 { shift } else { 0.0 })
                .collect::<Vec<_>>()
        })
        .collect();
    (Matrix::new(n, p, data).expect("fixture shape is valid"), y)
}

/// Scores and labels with a moderate separation.
pub fn scored_labels(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
    let values = labels
        .iter()
        .map(|&l| rng.random::<f64>() + if l { 0.4 } else { 0.0 })
        .collect();
    (values, labels)
}
