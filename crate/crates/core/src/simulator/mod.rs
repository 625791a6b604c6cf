//! Monte Carlo simulation of the node network: seeded sampling under both
//! hypotheses, plug-in deflection estimates, mixture LLR detectors and ROC
//! curves.

mod llr;
mod moments;
mod roc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg_frames::{LinalgError, MeasurementMatrix};
use crate::secrecy_model::{
    mixture_components, Hypothesis, MixtureView, NoiseInjectionProfile, SecrecyError,
};

pub use llr::{llr, log_sum_exp, GaussianMixture, MixturePair};
pub use moments::{empirical_deflection, empirical_deflection_from_moments, MomentAccumulator};
pub use roc::{roc_curve, Detector, RocPoint, RocResult, ROC_CSV_HEADER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("need at least {need} samples per hypothesis, got {got}")]
    InsufficientSamples { need: u64, got: u64 },
    #[error("sample covariance is singular (condition number {condition:.3e})")]
    SingularCovariance { condition: f64 },
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Secrecy(#[from] SecrecyError),
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub nodes: usize,
    pub matrix: MeasurementMatrix,
    /// Signal as seen by the sensors, after any precoding.
    pub signal: DVector<f64>,
    pub sigma2: f64,
    pub profile: NoiseInjectionProfile,
    pub trials: usize,
    pub seed: u64,
    pub thresholds: Vec<f64>,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.nodes == 0 {
            return bad("node count must be at least 1".into());
        }
        if self.trials == 0 {
            return bad("trial count must be at least 1".into());
        }
        if self.signal.len() != self.matrix.n() {
            return bad(format!(
                "signal has length {}, matrix has {} columns",
                self.signal.len(),
                self.matrix.n()
            ));
        }
        if self.signal.iter().any(|v| !v.is_finite()) {
            return bad("signal has non-finite entries".into());
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        if self.thresholds.iter().any(|t| t.is_nan()) {
            return bad("thresholds must not be NaN".into());
        }
        Ok(())
    }

    /// `round(α·L)`.
    pub fn injecting_count(&self) -> usize {
        ((self.profile.alpha() * self.nodes as f64).round() as usize).min(self.nodes)
    }

    /// Per-node injection flags. The injecting set is the first
    /// `injecting_count` entries of a seeded permutation of the nodes.
    pub fn injection_flags(&self) -> Vec<bool> {
        let mut order: Vec<usize> = (0..self.nodes).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        order.shuffle(&mut rng);
        let mut flags = vec![false; self.nodes];
        for &node in &order[..self.injecting_count()] {
            flags[node] = true;
        }
        flags
    }

    /// Fraction of injecting nodes actually realised, `B/L`.
    pub fn injecting_fraction(&self) -> f64 {
        self.injecting_count() as f64 / self.nodes as f64
    }
}

/// Observations of every node for one trial under one hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialBatch {
    pub hypothesis: Hypothesis,
    pub observations: Vec<DVector<f64>>,
    pub injecting: Vec<bool>,
}

impl TrialBatch {
    /// What the fusion center sees: observations with injection flags.
    pub fn fc_view(&self) -> impl Iterator<Item = (&DVector<f64>, bool)> {
        self.observations.iter().zip(self.injecting.iter().copied())
    }

    /// What the eavesdropper sees: observations only.
    pub fn eve_view(&self) -> &[DVector<f64>] {
        &self.observations
    }
}

/// Quantities shared by every trial of a run.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    phi: DMatrix<f64>,
    n: usize,
    sigma: f64,
    profile: NoiseInjectionProfile,
    injecting: Vec<bool>,
    seed: u64,
}

impl Prepared {
    pub(crate) fn new(config: &SimulationConfig) -> Result<Self, SimError> {
        config.validate()?;
        Ok(Self {
            phi: config.matrix.as_matrix().clone(),
            n: config.matrix.n(),
            sigma: config.sigma2.sqrt(),
            profile: config.profile,
            injecting: config.injection_flags(),
            seed: config.seed,
        })
    }

    /// Calls `visit(node, observation)` for every node in order.
    pub(crate) fn sample_with(
        &self,
        signal: &DVector<f64>,
        hypothesis: Hypothesis,
        trial: u64,
        mut visit: impl FnMut(usize, &DVector<f64>),
    ) {
        let mut rng = trial_rng(self.seed, hypothesis, trial);
        let (plus, minus) = self.profile.branch_probabilities(hypothesis);
        let base = match hypothesis {
            Hypothesis::H0 => 0.0,
            Hypothesis::H1 => 1.0,
        };
        let mut x = DVector::zeros(self.n);
        let mut y = DVector::zeros(self.phi.nrows());
        for (node, &injects) in self.injecting.iter().enumerate() {
            // Both draws happen for every node so streams stay aligned
            // across profiles.
            let u: f64 = rng.random();
            for v in x.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = self.sigma * z;
            }
            let branch = if !injects {
                0.0
            } else if u < plus {
                self.profile.gamma()
            } else if u < plus + minus {
                -self.profile.gamma()
            } else {
                0.0
            };
            x.axpy(base + branch, signal, 1.0);
            y.gemv(1.0, &self.phi, &x, 0.0);
            visit(node, &y);
        }
    }
}

fn trial_rng(seed: u64, hypothesis: Hypothesis, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = match hypothesis {
        Hypothesis::H0 => 0,
        Hypothesis::H1 => 1,
    };
    // Stream 0 is reserved for the node permutation.
    rng.set_stream(1 + 2 * trial + h);
    rng
}

/// Samples one trial. The result depends only on the config and the
/// `(hypothesis, trial_index)` pair.
pub fn sample_trial(
    config: &SimulationConfig,
    hypothesis: Hypothesis,
    trial_index: u64,
) -> Result<TrialBatch, SimError> {
    let prepared = Prepared::new(config)?;
    let mut observations = Vec::with_capacity(config.nodes);
    prepared.sample_with(&config.signal, hypothesis, trial_index, |_, y| {
        observations.push(y.clone())
    });
    Ok(TrialBatch {
        hypothesis,
        observations,
        injecting: prepared.injecting,
    })
}

/// Exact per-node densities under both hypotheses.
pub fn node_densities(
    matrix: &MeasurementMatrix,
    signal: &DVector<f64>,
    sigma2: f64,
    view: MixtureView,
    profile: &NoiseInjectionProfile,
) -> Result<MixturePair, SimError> {
    let phi = matrix.as_matrix();
    let phi_s = phi * signal;
    let cov = phi * phi.transpose() * sigma2;
    let density = |h| {
        let parts = mixture_components(view, profile, h)
            .into_iter()
            .map(|(w, c)| (w, &phi_s * c))
            .collect();
        GaussianMixture::shared(parts, &cov)
    };
    Ok(MixturePair {
        h0: density(Hypothesis::H0)?,
        h1: density(Hypothesis::H1)?,
    })
}
