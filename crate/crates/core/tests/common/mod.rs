#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use secdetect::linalg_frames::MeasurementMatrix;
use secdetect::secrecy_model::NoiseInjectionProfile;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// A generic full-rank measurement matrix.
pub fn gaussian_measurement(rng: &mut ChaCha8Rng, m: usize, n: usize) -> MeasurementMatrix {
    loop {
        if let Ok(phi) = MeasurementMatrix::new(gaussian_matrix(rng, m, n)) {
            return phi;
        }
    }
}

/// Profile with every parameter drawn uniformly over its valid range.
pub fn random_profile(rng: &mut ChaCha8Rng, max_gamma: f64) -> NoiseInjectionProfile {
    let split = |rng: &mut ChaCha8Rng| {
        let (a, b, c): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let total = a + b + c;
        (a / total, b / total)
    };
    let alpha: f64 = rng.random();
    let gamma = max_gamma * rng.random::<f64>();
    let (p10, p20) = split(rng);
    let (p11, p21) = split(rng);
    NoiseInjectionProfile::new(alpha, gamma, p10, p20, p11, p21).unwrap()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
