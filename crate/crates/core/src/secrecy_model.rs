//! Noise-injection parameters, closed-form deflection coefficients at the
//! fusion center and the eavesdropper, the secrecy budget, and an
//! exact-moment oracle that recomputes every deflection from first
//! principles.
//!
//! An injecting node replaces its observation `u` by `u + γs`, `u − γs` or
//! `u` with hypothesis-dependent probabilities. The fusion center knows which
//! nodes inject; the eavesdropper only knows that each node injects with
//! probability `α`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::linalg_frames::MeasurementMatrix;
use crate::tolerance;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SecrecyError {
    #[error("invalid noise-injection profile: {0}")]
    InvalidProfile(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("signal has zero energy")]
    ZeroSignal,
    #[error("covariance is singular (condition number {condition:.3e})")]
    SingularCovariance { condition: f64 },
    #[error("signal length {got} does not match matrix width {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    pub const BOTH: [Hypothesis; 2] = [Hypothesis::H0, Hypothesis::H1];
}

/// Fraction `α` of injecting nodes, injection strength `γ`, and the branch
/// probabilities `p10, p20` (under H0) and `p11, p21` (under H1) of adding
/// `+γs` and `−γs` respectively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileFields", into = "ProfileFields")]
pub struct NoiseInjectionProfile {
    alpha: f64,
    gamma: f64,
    p10: f64,
    p20: f64,
    p11: f64,
    p21: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFields {
    alpha: f64,
    gamma: f64,
    p10: f64,
    p20: f64,
    p11: f64,
    p21: f64,
}

impl TryFrom<ProfileFields> for NoiseInjectionProfile {
    type Error = SecrecyError;

    fn try_from(f: ProfileFields) -> Result<Self, Self::Error> {
        Self::new(f.alpha, f.gamma, f.p10, f.p20, f.p11, f.p21)
    }
}

impl From<NoiseInjectionProfile> for ProfileFields {
    fn from(p: NoiseInjectionProfile) -> Self {
        Self {
            alpha: p.alpha,
            gamma: p.gamma,
            p10: p.p10,
            p20: p.p20,
            p11: p.p11,
            p21: p.p21,
        }
    }
}

fn check_probability(name: &str, p: f64) -> Result<(), SecrecyError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SecrecyError::InvalidProfile(format!(
            "{name} = {p} is not in [0, 1]"
        )))
    }
}

impl NoiseInjectionProfile {
    pub fn new(
        alpha: f64,
        gamma: f64,
        p10: f64,
        p20: f64,
        p11: f64,
        p21: f64,
    ) -> Result<Self, SecrecyError> {
        check_probability("alpha", alpha)?;
        for (name, p) in [("p10", p10), ("p20", p20), ("p11", p11), ("p21", p21)] {
            check_probability(name, p)?;
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(SecrecyError::InvalidProfile(format!(
                "gamma = {gamma} must be finite and >= 0"
            )));
        }
        if p10 + p20 > 1.0 {
            return Err(SecrecyError::InvalidProfile("p10 + p20 exceeds 1".into()));
        }
        if p11 + p21 > 1.0 {
            return Err(SecrecyError::InvalidProfile("p11 + p21 exceeds 1".into()));
        }
        Ok(Self {
            alpha,
            gamma,
            p10,
            p20,
            p11,
            p21,
        })
    }

    /// No injecting nodes.
    pub fn silent() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0).unwrap()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn p10(&self) -> f64 {
        self.p10
    }
    pub fn p20(&self) -> f64 {
        self.p20
    }
    pub fn p11(&self) -> f64 {
        self.p11
    }
    pub fn p21(&self) -> f64 {
        self.p21
    }

    pub fn with_alpha(self, alpha: f64) -> Result<Self, SecrecyError> {
        Self::new(alpha, self.gamma, self.p10, self.p20, self.p11, self.p21)
    }

    pub fn with_gamma(self, gamma: f64) -> Result<Self, SecrecyError> {
        Self::new(self.alpha, gamma, self.p10, self.p20, self.p11, self.p21)
    }

    /// `(P(+γs), P(−γs))` for an injecting node under `hypothesis`.
    pub fn branch_probabilities(&self, hypothesis: Hypothesis) -> (f64, f64) {
        match hypothesis {
            Hypothesis::H0 => (self.p10, self.p20),
            Hypothesis::H1 => (self.p11, self.p21),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub p_b: f64,
    pub p_t: f64,
    pub p_t_e: f64,
}

pub fn derive_constants(profile: &NoiseInjectionProfile) -> DerivedConstants {
    let NoiseInjectionProfile {
        alpha,
        p10,
        p20,
        p11,
        p21,
        ..
    } = *profile;
    let bias = p10 - p20;
    DerivedConstants {
        p_b: bias + (p21 - p11),
        p_t: p10 + p20 - bias * bias,
        p_t_e: alpha * (p10 + p20 - alpha * bias * bias),
    }
}

/// `num / (spread + σ²/x)`, with the limit 0 at zero capture.
fn deflection_form(x: f64, sigma2: f64, num: f64, spread: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return if spread > 0.0 {
            num / spread
        } else {
            f64::INFINITY
        };
    }
    num / (spread + sigma2 / x)
}

/// Deflection of a node that never injects: `x/σ²`.
pub fn deflection_clean(x: f64, sigma2: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x / sigma2
    }
}

/// Deflection of an injecting node as seen by the fusion center.
pub fn deflection_injecting(x: f64, sigma2: f64, profile: &NoiseInjectionProfile) -> f64 {
    let c = derive_constants(profile);
    let g = profile.gamma;
    deflection_form(x, sigma2, (1.0 - c.p_b * g).powi(2), g * g * c.p_t)
}

/// Per-node fusion-center deflection as a function of the capture
/// `x = ‖P̂s‖²`: `α·(1 − P_b γ)²/(γ²P_t + σ²/x) + (1 − α)·x/σ²`.
pub fn deflection_fc(x: f64, sigma2: f64, profile: &NoiseInjectionProfile) -> f64 {
    let alpha = profile.alpha;
    alpha * deflection_injecting(x, sigma2, profile) + (1.0 - alpha) * deflection_clean(x, sigma2)
}

/// Eavesdropper deflection: `(1 − α P_b γ)²/(γ²P_tᴱ + σ²/x)`.
pub fn deflection_ev(x: f64, sigma2: f64, profile: &NoiseInjectionProfile) -> f64 {
    let (num, spread) = ev_terms(profile);
    deflection_form(x, sigma2, num, spread)
}

fn ev_terms(profile: &NoiseInjectionProfile) -> (f64, f64) {
    let c = derive_constants(profile);
    let g = profile.gamma;
    ((1.0 - profile.alpha * c.p_b * g).powi(2), g * g * c.p_t_e)
}

/// `sup_x deflection_ev(x)`; infinite when the injected noise has no spread.
pub fn deflection_ev_sup(profile: &NoiseInjectionProfile) -> f64 {
    let (num, spread) = ev_terms(profile);
    if num == 0.0 {
        0.0
    } else if spread > 0.0 {
        num / spread
    } else {
        f64::INFINITY
    }
}

/// The secrecy bound `τ` is allowed to be `+∞`; configuration files spell
/// that as the string `"inf"`.
pub mod tau_serde {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(tau: &f64, s: S) -> Result<S::Ok, S::Error> {
        if tau.is_infinite() && *tau > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*tau)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got \"{t}\""
            ))),
        }
    }
}

/// Everything the designers need besides the dimensions: the injection
/// profile, the noise variance `σ²` and the secrecy bound `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioFields", into = "ScenarioFields")]
pub struct Scenario {
    profile: NoiseInjectionProfile,
    sigma2: f64,
    tau: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFields {
    alpha: f64,
    gamma: f64,
    p10: f64,
    p20: f64,
    p11: f64,
    p21: f64,
    sigma2: f64,
    #[serde(with = "tau_serde")]
    tau: f64,
}

impl TryFrom<ScenarioFields> for Scenario {
    type Error = SecrecyError;

    fn try_from(f: ScenarioFields) -> Result<Self, Self::Error> {
        let profile = NoiseInjectionProfile::new(f.alpha, f.gamma, f.p10, f.p20, f.p11, f.p21)?;
        Scenario::new(profile, f.sigma2, f.tau)
    }
}

impl From<Scenario> for ScenarioFields {
    fn from(s: Scenario) -> Self {
        let p = s.profile;
        Self {
            alpha: p.alpha,
            gamma: p.gamma,
            p10: p.p10,
            p20: p.p20,
            p11: p.p11,
            p21: p.p21,
            sigma2: s.sigma2,
            tau: s.tau,
        }
    }
}

impl Scenario {
    pub fn new(
        profile: NoiseInjectionProfile,
        sigma2: f64,
        tau: f64,
    ) -> Result<Self, SecrecyError> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(SecrecyError::InvalidScenario(format!(
                "sigma2 = {sigma2} must be finite and > 0"
            )));
        }
        if tau.is_nan() || tau < 0.0 {
            return Err(SecrecyError::InvalidScenario(format!(
                "tau = {tau} must be >= 0"
            )));
        }
        Ok(Self {
            profile,
            sigma2,
            tau,
        })
    }

    /// No secrecy constraint.
    pub fn unconstrained(
        profile: NoiseInjectionProfile,
        sigma2: f64,
    ) -> Result<Self, SecrecyError> {
        Self::new(profile, sigma2, f64::INFINITY)
    }

    pub fn profile(&self) -> &NoiseInjectionProfile {
        &self.profile
    }
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn with_tau(self, tau: f64) -> Result<Self, SecrecyError> {
        Self::new(self.profile, self.sigma2, tau)
    }

    pub fn with_profile(self, profile: NoiseInjectionProfile) -> Self {
        Self { profile, ..self }
    }

    pub fn budget(&self) -> SecrecyBudget {
        secrecy_budget(&self.profile, self.sigma2, self.tau)
    }

    pub fn deflection_fc(&self, x: f64) -> f64 {
        deflection_fc(x, self.sigma2, &self.profile)
    }

    pub fn deflection_ev(&self, x: f64) -> f64 {
        deflection_ev(x, self.sigma2, &self.profile)
    }
}

/// Largest admissible capture `Δ` for a secrecy bound `τ`; `θ` is filled in
/// once a reference signal energy is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecrecyBudget {
    #[serde(with = "tau_serde")]
    pub tau: f64,
    pub sigma2: f64,
    /// `+∞` when the constraint is vacuous.
    #[serde(with = "tau_serde")]
    pub delta: f64,
    pub theta: Option<f64>,
}

impl SecrecyBudget {
    pub fn is_vacuous(&self) -> bool {
        self.delta.is_infinite()
    }

    pub fn with_reference_energy(self, energy: f64) -> Result<Self, SecrecyError> {
        let theta = secrecy_angle(energy, &self)?;
        Ok(Self {
            theta: Some(theta),
            ..self
        })
    }
}

/// `Δ = σ²/((1 − αP_bγ)²/τ − γ²P_tᴱ)`.
///
/// A non-positive denominator means `sup_x D_EV ≤ τ` and yields `Δ = +∞`.
/// With `τ = 0` and a positive numerator, `Δ = 0`.
pub fn secrecy_budget(profile: &NoiseInjectionProfile, sigma2: f64, tau: f64) -> SecrecyBudget {
    let (num, spread) = ev_terms(profile);
    let delta = if num == 0.0 {
        f64::INFINITY
    } else if tau == 0.0 {
        0.0
    } else {
        let denom = num / tau - spread;
        if denom > 0.0 {
            sigma2 / denom
        } else {
            f64::INFINITY
        }
    };
    SecrecyBudget {
        tau,
        sigma2,
        delta,
        theta: None,
    }
}

/// Angle with `cos²θ·energy = min(energy, Δ)`.
pub fn secrecy_angle(energy: f64, budget: &SecrecyBudget) -> Result<f64, SecrecyError> {
    if energy.is_nan() || energy <= 0.0 {
        return Err(SecrecyError::ZeroSignal);
    }
    let delta = budget.delta;
    if delta >= energy {
        Ok(0.0)
    } else if delta <= 0.0 {
        Ok(FRAC_PI_2)
    } else {
        Ok((delta / energy).sqrt().acos())
    }
}

/// Whose statistics the moment oracle describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixtureView {
    /// A node that never injects.
    CleanNode,
    /// An injecting node, seen by the fusion center which knows its identity.
    InjectingNode,
    /// Any node, seen by the eavesdropper which only knows `α`.
    Eavesdropper,
}

/// Weighted Gaussian components `(weight, c)` of one node's observation: the
/// component mean is `c·φs` and every component has covariance `σ²φφᵀ`.
/// Zero-weight components are dropped.
pub fn mixture_components(
    view: MixtureView,
    profile: &NoiseInjectionProfile,
    hypothesis: Hypothesis,
) -> Vec<(f64, f64)> {
    let signal = match hypothesis {
        Hypothesis::H0 => 0.0,
        Hypothesis::H1 => 1.0,
    };
    let (plus, minus) = profile.branch_probabilities(hypothesis);
    let scale = match view {
        MixtureView::CleanNode => return vec![(1.0, signal)],
        MixtureView::InjectingNode => 1.0,
        MixtureView::Eavesdropper => profile.alpha,
    };
    let g = profile.gamma;
    let (plus, minus) = (scale * plus, scale * minus);
    [
        (plus, signal + g),
        (minus, signal - g),
        (1.0 - plus - minus, signal),
    ]
    .into_iter()
    .filter(|&(w, _)| w > 0.0)
    .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Exact mean and covariance of one node's compressed observation.
pub fn mixture_moments(
    phi: &MeasurementMatrix,
    s: &DVector<f64>,
    sigma2: f64,
    view: MixtureView,
    profile: &NoiseInjectionProfile,
    hypothesis: Hypothesis,
) -> Result<MixtureMoments, SecrecyError> {
    if s.len() != phi.n() {
        return Err(SecrecyError::DimensionMismatch {
            expected: phi.n(),
            got: s.len(),
        });
    }
    let rows = phi.as_matrix();
    let a = rows * s;
    let components = mixture_components(view, profile, hypothesis);
    let mean_coef: f64 = components.iter().map(|(w, c)| w * c).sum();
    let spread: f64 = components
        .iter()
        .map(|(w, c)| w * (c - mean_coef).powi(2))
        .sum();
    let covariance = rows * rows.transpose() * sigma2 + &a * a.transpose() * spread;
    Ok(MixtureMoments {
        mean: a * mean_coef,
        covariance,
    })
}

/// `(μ₁ − μ₀)ᵀ Σ₀⁻¹ (μ₁ − μ₀)` with a condition-number guard on `Σ₀`.
pub fn quadratic_deflection(
    mean0: &DVector<f64>,
    mean1: &DVector<f64>,
    cov0: &DMatrix<f64>,
) -> Result<f64, SecrecyError> {
    let eig = SymmetricEigen::new(cov0.clone()).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > tolerance::MAX_CONDITION {
        return Err(SecrecyError::SingularCovariance { condition });
    }
    let chol = cov0
        .clone()
        .cholesky()
        .ok_or(SecrecyError::SingularCovariance { condition })?;
    let diff = mean1 - mean0;
    let solved = chol.solve(&diff);
    Ok(diff.dot(&solved))
}

/// Deflection computed from the exact mixture moments of `view`, with no use
/// of the closed forms.
pub fn moment_oracle_deflection(
    phi: &MeasurementMatrix,
    s: &DVector<f64>,
    sigma2: f64,
    view: MixtureView,
    profile: &NoiseInjectionProfile,
) -> Result<f64, SecrecyError> {
    let h0 = mixture_moments(phi, s, sigma2, view, profile, Hypothesis::H0)?;
    let h1 = mixture_moments(phi, s, sigma2, view, profile, Hypothesis::H1)?;
    quadratic_deflection(&h0.mean, &h1.mean, &h0.covariance)
}

/// Fusion-center composite `α·D(injecting) + (1 − α)·D(clean)`.
pub fn moment_oracle_fc(
    phi: &MeasurementMatrix,
    s: &DVector<f64>,
    sigma2: f64,
    profile: &NoiseInjectionProfile,
) -> Result<f64, SecrecyError> {
    let alpha = profile.alpha;
    let clean = moment_oracle_deflection(phi, s, sigma2, MixtureView::CleanNode, profile)?;
    let injecting = if alpha > 0.0 {
        moment_oracle_deflection(phi, s, sigma2, MixtureView::InjectingNode, profile)?
    } else {
        0.0
    };
    Ok(alpha * injecting + (1.0 - alpha) * clean)
}
