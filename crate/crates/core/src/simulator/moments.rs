use nalgebra::{DMatrix, DVector};

use super::SimError;
use crate::secrecy_model::{quadratic_deflection, SecrecyError};

/// Running sample mean and scatter matrix. Merging uses Chan's pairwise
/// update, so a fixed merge order gives bit-identical results.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    count: u64,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: DVector::zeros(dim),
            scatter: DMatrix::zeros(dim, dim),
        }
    }

    pub fn from_samples(dim: usize, samples: &[DVector<f64>]) -> Self {
        let mut acc = Self::new(dim);
        for s in samples {
            acc.push(s);
        }
        acc
    }

    pub fn push(&mut self, x: &DVector<f64>) {
        self.count += 1;
        let delta = x - &self.mean;
        self.mean.axpy(1.0 / self.count as f64, &delta, 1.0);
        let after = x - &self.mean;
        self.scatter.ger(1.0, &delta, &after, 1.0);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let total = na + nb;
        let delta = &other.mean - &self.mean;
        self.mean.axpy(nb / total, &delta, 1.0);
        self.scatter += &other.scatter;
        self.scatter.ger(na * nb / total, &delta, &delta, 1.0);
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let denom = (self.count.max(2) - 1) as f64;
        &self.scatter / denom
    }
}

/// Plug-in deflection `(μ̂₁ − μ̂₀)ᵀ Σ̂₀⁻¹ (μ̂₁ − μ̂₀)` from accumulated moments.
pub fn empirical_deflection_from_moments(
    h0: &MomentAccumulator,
    h1: &MomentAccumulator,
) -> Result<f64, SimError> {
    let need = h0.mean.len() as u64 + 1;
    for acc in [h0, h1] {
        if acc.count < need {
            return Err(SimError::InsufficientSamples {
                need,
                got: acc.count,
            });
        }
    }
    quadratic_deflection(&h0.mean, &h1.mean, &h0.covariance()).map_err(|e| match e {
        SecrecyError::SingularCovariance { condition } => {
            SimError::SingularCovariance { condition }
        }
        other => SimError::Secrecy(other),
    })
}

/// Plug-in deflection from raw samples under each hypothesis.
pub fn empirical_deflection(
    samples_h0: &[DVector<f64>],
    samples_h1: &[DVector<f64>],
) -> Result<f64, SimError> {
    let dim = samples_h0
        .first()
        .or(samples_h1.first())
        .map(|s| s.len())
        .ok_or(SimError::InsufficientSamples { need: 1, got: 0 })?;
    empirical_deflection_from_moments(
        &MomentAccumulator::from_samples(dim, samples_h0),
        &MomentAccumulator::from_samples(dim, samples_h1),
    )
}
