use nalgebra::{DMatrix, DVector};

use super::SimError;

#[derive(Debug, Clone, PartialEq)]
struct Factor {
    covariance: DMatrix<f64>,
    lower: DMatrix<f64>,
    log_det: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Component {
    log_weight: f64,
    factor: usize,
    /// `L⁻¹μ` for the component's Cholesky factor `L`.
    white_mean: DVector<f64>,
}

/// Finite mixture of multivariate Gaussians. Components that share a
/// covariance share its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    dim: usize,
    factors: Vec<Factor>,
    components: Vec<Component>,
}

impl GaussianMixture {
    /// `(weight, mean, covariance)` triples. Zero-weight components are
    /// dropped; weights must sum to one.
    pub fn new(parts: Vec<(f64, DVector<f64>, DMatrix<f64>)>) -> Result<Self, SimError> {
        let dim = parts
            .first()
            .map(|p| p.1.len())
            .ok_or_else(|| SimError::InvalidMixture("no components".into()))?;
        let total: f64 = parts.iter().map(|p| p.0).sum();
        if (total - 1.0).abs() > 1e-12 || parts.iter().any(|p| p.0.is_nan() || p.0 < 0.0) {
            return Err(SimError::InvalidMixture(format!(
                "weights must be nonnegative and sum to 1 (sum = {total})"
            )));
        }
        let mut factors: Vec<Factor> = Vec::new();
        let mut components = Vec::new();
        for (weight, mean, cov) in parts {
            if mean.len() != dim || cov.shape() != (dim, dim) {
                return Err(SimError::InvalidMixture("inconsistent dimensions".into()));
            }
            if weight == 0.0 {
                continue;
            }
            let index = match factors.iter().position(|f| f.covariance == cov) {
                Some(i) => i,
                None => {
                    let chol = cov.clone().cholesky().ok_or_else(|| {
                        SimError::InvalidMixture("covariance is not positive definite".into())
                    })?;
                    let lower = chol.l();
                    let log_det = 2.0 * lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
                    factors.push(Factor {
                        covariance: cov,
                        lower,
                        log_det,
                    });
                    factors.len() - 1
                }
            };
            let white_mean = factors[index]
                .lower
                .solve_lower_triangular(&mean)
                .expect("Cholesky factor is invertible");
            components.push(Component {
                log_weight: weight.ln(),
                factor: index,
                white_mean,
            });
        }
        Ok(Self {
            dim,
            factors,
            components,
        })
    }

    /// All components with covariance `cov`.
    pub fn shared(parts: Vec<(f64, DVector<f64>)>, cov: &DMatrix<f64>) -> Result<Self, SimError> {
        Self::new(
            parts
                .into_iter()
                .map(|(w, m)| (w, m, cov.clone()))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn log_density(&self, y: &DVector<f64>) -> f64 {
        let white: Vec<DVector<f64>> = self
            .factors
            .iter()
            .map(|f| {
                f.lower
                    .solve_lower_triangular(y)
                    .expect("Cholesky factor is invertible")
            })
            .collect();
        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln() * self.dim as f64;
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| {
                let f = &self.factors[c.factor];
                let r2 = (&white[c.factor] - &c.white_mean).norm_squared();
                c.log_weight - half_log_2pi - 0.5 * f.log_det - 0.5 * r2
            })
            .collect();
        log_sum_exp(&terms)
    }
}

/// `log Σ exp(t)` with the maximum shifted out.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Densities of one node's observation under H0 and H1.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePair {
    pub h0: GaussianMixture,
    pub h1: GaussianMixture,
}

impl MixturePair {
    pub fn llr(&self, y: &DVector<f64>) -> f64 {
        llr(y, self)
    }
}

/// `log p₁(y) − log p₀(y)`.
pub fn llr(y: &DVector<f64>, pair: &MixturePair) -> f64 {
    pair.h1.log_density(y) - pair.h0.log_density(y)
}
