//! Secrecy-constrained measurement matrix designs for a known signal, a
//! signal in a low-dimensional subspace, and a sparse signal, plus the exact
//! worst-case evaluators used to check them.
//!
//! Every design targets the largest capture `‖P̂s‖²` allowed by the secrecy
//! budget `Δ`. The capture is reduced by a factor `cos²θ`, realized either
//! inside `φ` by rotating part of the signal into a discarded direction
//! (known signal), or as a scalar attenuation applied to the signal before
//! the noise is added (subspace and sparse signals). A scalar precoder that
//! multiplies signal and noise together would not change `P̂`, so both
//! readings are recorded in the outcome.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::etf_construction::{
    build_etf_alternating_projections, build_known_etf, build_uniform_tight_frame, etf_existence,
    welch_bound, EtfError, EtfExistence, FrameReport, FrameRequest,
};
use crate::linalg_frames::{
    gram_schmidt_basis, random_stiefel, secrecy_rotation, LinalgError, MeasurementMatrix,
};
use crate::secrecy_model::{secrecy_angle, tau_serde, Scenario, SecrecyError};
use crate::tolerance;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error(
        "m = n leaves no discarded direction to rotate the signal into; \
         use the signal-attenuation design instead"
    )]
    NoDiscardedDirection,
    #[error("basis is not orthonormal (‖DᵀD − I‖_max = {defect:.3e})")]
    BasisNotOrthonormal { defect: f64 },
    #[error("exhaustive search over {supports} supports exceeds the limit")]
    TooLarge { supports: u128 },
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("no equiangular tight frame available: {0}")]
    EtfUnavailable(EtfUnavailable),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Secrecy(#[from] SecrecyError),
    #[error(transparent)]
    Etf(#[from] EtfError),
}

/// Why a sparse design had to settle for a best-effort frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "reason")]
pub enum EtfUnavailable {
    /// `n > m(m+1)/2`; no real ETF exists.
    Impossible,
    /// The solver stopped above the Welch bound.
    NotConverged { coherence: f64, welch_bound: f64 },
}

impl std::fmt::Display for EtfUnavailable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Impossible => write!(f, "n exceeds m(m+1)/2"),
            Self::NotConverged {
                coherence,
                welch_bound,
            } => write!(
                f,
                "solver reached coherence {coherence:.6} against Welch bound {welch_bound:.6}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignalSpec {
    Known(DVector<f64>),
    /// `s = Dβ` with `‖β‖ = 1`; the basis is designed when `None`.
    Subspace {
        n: usize,
        k: usize,
        basis: Option<DMatrix<f64>>,
    },
    /// `K`-sparse in the canonical basis with `‖s‖ = 1`.
    Sparse {
        n: usize,
        k: usize,
    },
}

impl SignalSpec {
    pub fn n(&self) -> usize {
        match self {
            Self::Known(s) => s.len(),
            Self::Subspace { n, .. } | Self::Sparse { n, .. } => *n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    Rotation,
    ScaledSubspace,
    UniformFrame,
    Etf,
}

/// Where the `cos θ` factor acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttenuationMode {
    /// Built into `φ`; the signal is used as is.
    InMatrix,
    /// Multiplies the signal component before noise is added.
    SignalPrecoding,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignOutcome {
    #[serde(skip)]
    pub matrix: MeasurementMatrix,
    pub construction: Construction,
    pub theta: f64,
    pub attenuation: f64,
    pub attenuation_mode: AttenuationMode,
    /// Energy the angle was computed against.
    pub reference_energy: f64,
    #[serde(with = "tau_serde")]
    pub budget_delta: f64,
    /// Worst-case (or exact) capture of `φ` before attenuation. This is also
    /// the capture under the literal reading `y = φ·(cos θ·I)·u`.
    pub unattenuated_delta: f64,
    pub achieved_delta: f64,
    pub predicted_d_fc: f64,
    pub predicted_d_ev: f64,
    /// Whether `achieved_delta` is the optimum rather than a measured value.
    pub exact: bool,
    /// Upper bound on the worst-case capture, for the sparse designs.
    pub capture_bound: Option<f64>,
    pub worst_support: Option<Vec<usize>>,
    pub frame: Option<FrameReport>,
    pub etf_unavailable: Option<EtfUnavailable>,
    pub diagnostics: Vec<String>,
}

impl DesignOutcome {
    /// Fails with [`DesignError::EtfUnavailable`] for best-effort sparse
    /// designs.
    pub fn require_exact(self) -> Result<Self, DesignError> {
        match &self.etf_unavailable {
            Some(reason) => Err(DesignError::EtfUnavailable(reason.clone())),
            None => Ok(self),
        }
    }

    /// The signal as it enters the nodes: scaled by `cos θ` under
    /// [`AttenuationMode::SignalPrecoding`], unchanged otherwise.
    pub fn effective_signal(&self, s: &DVector<f64>) -> DVector<f64> {
        match self.attenuation_mode {
            AttenuationMode::InMatrix => s.clone(),
            AttenuationMode::SignalPrecoding => s * self.attenuation,
        }
    }
}

/// Result of the free-basis subspace design: the orthonormal basis `D`; the
/// attenuated dictionary is `cos θ·D`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceDesign {
    pub outcome: DesignOutcome,
    pub basis: DMatrix<f64>,
}

impl SubspaceDesign {
    pub fn scaled_basis(&self) -> DMatrix<f64> {
        &self.basis * self.outcome.attenuation
    }
}

#[allow(clippy::too_many_arguments)]
fn outcome(
    matrix: MeasurementMatrix,
    construction: Construction,
    theta: f64,
    attenuation_mode: AttenuationMode,
    reference_energy: f64,
    unattenuated_delta: f64,
    achieved_delta: f64,
    scenario: &Scenario,
) -> DesignOutcome {
    DesignOutcome {
        matrix,
        construction,
        theta,
        attenuation: theta.cos(),
        attenuation_mode,
        reference_energy,
        budget_delta: scenario.budget().delta,
        unattenuated_delta,
        achieved_delta,
        predicted_d_fc: scenario.deflection_fc(achieved_delta),
        predicted_d_ev: scenario.deflection_ev(achieved_delta),
        exact: true,
        capture_bound: None,
        worst_support: None,
        frame: None,
        etf_unavailable: None,
        diagnostics: Vec::new(),
    }
}

fn check_m(m: usize, n: usize) -> Result<(), DesignError> {
    if m == 0 || m > n {
        Err(DesignError::InvalidDimensions(format!(
            "need 1 <= m <= n, got m = {m}, n = {n}"
        )))
    } else {
        Ok(())
    }
}

/// Known signal: rows are the first `m` columns of `V*·R(θ)`, where `V*` is
/// the Gram–Schmidt basis started at `s` and `R(θ)` rotates `v₁` towards the
/// discarded direction `v_n`. The capture is exactly `min(‖s‖², Δ)`.
pub fn design_known(
    s: &DVector<f64>,
    m: usize,
    scenario: &Scenario,
) -> Result<DesignOutcome, DesignError> {
    let n = s.len();
    check_m(m, n)?;
    let energy = s.norm_squared();
    let budget = scenario.budget();
    let theta = secrecy_angle(energy, &budget)?;
    if theta > 0.0 && m == n {
        return Err(DesignError::NoDiscardedDirection);
    }

    let basis = gram_schmidt_basis(n, std::slice::from_ref(s))?;
    let rotated = if n >= 2 {
        basis * secrecy_rotation(n, theta)?
    } else {
        basis
    };
    let matrix = MeasurementMatrix::leading_rows(&rotated, m)?;
    let achieved = matrix.projector().capture(s);
    Ok(outcome(
        matrix,
        Construction::Rotation,
        theta,
        AttenuationMode::InMatrix,
        energy,
        achieved,
        achieved,
        scenario,
    ))
}

/// Known signal with the attenuation applied to the signal instead of inside
/// `φ`. Works for `m = n`, where [`design_known`] cannot rotate.
pub fn design_known_attenuated(
    s: &DVector<f64>,
    m: usize,
    scenario: &Scenario,
) -> Result<DesignOutcome, DesignError> {
    let n = s.len();
    check_m(m, n)?;
    let energy = s.norm_squared();
    let theta = secrecy_angle(energy, &scenario.budget())?;
    let basis = gram_schmidt_basis(n, std::slice::from_ref(s))?;
    let matrix = MeasurementMatrix::leading_rows(&basis, m)?;
    let raw = matrix.projector().capture(s);
    let achieved = theta.cos().powi(2) * raw;
    let mut out = outcome(
        matrix,
        Construction::Rotation,
        theta,
        AttenuationMode::SignalPrecoding,
        energy,
        raw,
        achieved,
        scenario,
    );
    out.diagnostics
        .push("attenuation applied to the signal; φ keeps s in its row space".into());
    Ok(out)
}

fn orthonormality_defect(d: &DMatrix<f64>) -> f64 {
    let k = d.ncols();
    (d.transpose() * d - DMatrix::identity(k, k)).amax()
}

/// `min_{‖β‖=1} ‖P̂Dβ‖² = λ_min(DᵀP̂D)`.
pub fn worst_case_subspace(phi: &MeasurementMatrix, d: &DMatrix<f64>) -> Result<f64, DesignError> {
    if d.nrows() != phi.n() {
        return Err(DesignError::InvalidDimensions(format!(
            "basis has {} rows, matrix has {} columns",
            d.nrows(),
            phi.n()
        )));
    }
    let defect = orthonormality_defect(d);
    if defect > tolerance::CONSTRUCTION {
        return Err(DesignError::BasisNotOrthonormal { defect });
    }
    let restricted = d.transpose() * phi.projector().as_matrix() * d;
    let restricted = (&restricted + restricted.transpose()) * 0.5;
    Ok(SymmetricEigen::new(restricted).eigenvalues.min())
}

fn subspace_outcome(
    matrix: MeasurementMatrix,
    basis: &DMatrix<f64>,
    scenario: &Scenario,
) -> Result<DesignOutcome, DesignError> {
    let k = basis.ncols();
    let theta = secrecy_angle(1.0, &scenario.budget())?;
    let raw = worst_case_subspace(&matrix, basis)?;
    let achieved = theta.cos().powi(2) * raw;
    let m = matrix.m();
    let mut out = outcome(
        matrix,
        Construction::ScaledSubspace,
        theta,
        AttenuationMode::SignalPrecoding,
        1.0,
        raw,
        achieved,
        scenario,
    );
    if k > m {
        out.diagnostics.push(format!(
            "K = {k} exceeds m = {m}: some unit β is annihilated, worst-case capture is 0"
        ));
    }
    Ok(out)
}

/// Subspace signal with a designable basis: `φ` is a random Stiefel matrix
/// and `D` its first `K` right singular vectors (completed to a basis of
/// `R^n` when `K > m`).
pub fn design_subspace_free(
    n: usize,
    m: usize,
    k: usize,
    scenario: &Scenario,
    seed: u64,
) -> Result<SubspaceDesign, DesignError> {
    check_m(m, n)?;
    if k == 0 || k > n {
        return Err(DesignError::InvalidDimensions(format!(
            "need 1 <= K <= n, got K = {k}, n = {n}"
        )));
    }
    let matrix = random_stiefel(m, n, seed)?;
    let rows: Vec<DVector<f64>> = matrix
        .as_matrix()
        .row_iter()
        .map(|r| r.transpose())
        .collect();
    let v = gram_schmidt_basis(n, &rows)?;
    let basis = v.columns(0, k).into_owned();
    let outcome = subspace_outcome(matrix, &basis, scenario)?;
    Ok(SubspaceDesign { outcome, basis })
}

/// Subspace signal with a fixed orthonormal basis `D`: rows are the first `m`
/// columns of the Gram–Schmidt completion of `D`.
pub fn design_subspace_fixed(
    d: &DMatrix<f64>,
    m: usize,
    scenario: &Scenario,
) -> Result<DesignOutcome, DesignError> {
    let n = d.nrows();
    check_m(m, n)?;
    if d.ncols() == 0 {
        return Err(DesignError::InvalidDimensions("empty basis".into()));
    }
    let defect = orthonormality_defect(d);
    if defect > tolerance::CONSTRUCTION {
        return Err(DesignError::BasisNotOrthonormal { defect });
    }
    let columns: Vec<DVector<f64>> = d.column_iter().map(|c| c.into_owned()).collect();
    let v = gram_schmidt_basis(n, &columns)?;
    let matrix = MeasurementMatrix::leading_rows(&v, m)?;
    subspace_outcome(matrix, d, scenario)
}

/// Smallest and largest `‖P̂s‖²` over unit `K`-sparse signals, with the
/// lexicographically first support attaining each.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparseCaptureRange {
    pub min: f64,
    pub min_support: Vec<usize>,
    pub max: f64,
    pub max_support: Vec<usize>,
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Extreme eigenvalues of the principal submatrix of `p` on `support`.
pub fn principal_extremes(p: &DMatrix<f64>, support: &[usize]) -> (f64, f64) {
    match support {
        [i] => (p[(*i, *i)], p[(*i, *i)]),
        [i, j] => {
            let (a, b, d) = (p[(*i, *i)], p[(*i, *j)], p[(*j, *j)]);
            let mid = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            (mid - rad, mid + rad)
        }
        _ => {
            let sub = DMatrix::from_fn(support.len(), support.len(), |r, c| {
                p[(support[r], support[c])]
            });
            let eig = SymmetricEigen::new(sub).eigenvalues;
            (eig.min(), eig.max())
        }
    }
}

/// Visits every increasing `r`-subset of `start..n`, in lexicographic order,
/// appended to `prefix`.
fn for_each_subset(
    prefix: &mut Vec<usize>,
    start: usize,
    n: usize,
    r: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if r == 0 {
        visit(prefix);
        return;
    }
    for i in start..=(n - r) {
        prefix.push(i);
        for_each_subset(prefix, i + 1, n, r - 1, visit);
        prefix.pop();
    }
}

/// Exhaustive search over all `C(n, K)` supports, parallel over the first
/// index. Ties resolve to the lexicographically smallest support regardless
/// of thread count.
pub fn sparse_capture_range(
    phi: &MeasurementMatrix,
    k: usize,
) -> Result<SparseCaptureRange, DesignError> {
    let n = phi.n();
    if k == 0 || k > n {
        return Err(DesignError::InvalidDimensions(format!(
            "need 1 <= K <= n, got K = {k}, n = {n}"
        )));
    }
    let supports = binomial(n, k);
    if supports > tolerance::MAX_SUPPORTS {
        return Err(DesignError::TooLarge { supports });
    }
    let p = phi.projector().as_matrix();
    let partial: Vec<SparseCaptureRange> = (0..=(n - k))
        .into_par_iter()
        .map(|first| {
            let mut best = SparseCaptureRange {
                min: f64::INFINITY,
                min_support: Vec::new(),
                max: f64::NEG_INFINITY,
                max_support: Vec::new(),
            };
            let mut prefix = vec![first];
            for_each_subset(&mut prefix, first + 1, n, k - 1, &mut |support| {
                let (lo, hi) = principal_extremes(p, support);
                if lo < best.min {
                    best.min = lo;
                    best.min_support = support.to_vec();
                }
                if hi > best.max {
                    best.max = hi;
                    best.max_support = support.to_vec();
                }
            });
            best
        })
        .collect();
    Ok(partial
        .into_iter()
        .reduce(|mut acc, next| {
            if next.min < acc.min {
                acc.min = next.min;
                acc.min_support = next.min_support;
            }
            if next.max > acc.max {
                acc.max = next.max;
                acc.max_support = next.max_support;
            }
            acc
        })
        .expect("at least one support"))
}

/// `min` over `K`-subsets `T` of `λ_min(P̂[T,T])`: the exact worst-case
/// capture of a unit `K`-sparse signal.
pub fn worst_case_sparse(
    phi: &MeasurementMatrix,
    k: usize,
) -> Result<(f64, Vec<usize>), DesignError> {
    let range = sparse_capture_range(phi, k)?;
    Ok((range.min, range.min_support))
}

/// Upper bound on the worst-case sparse capture of a row-orthonormal `φ`:
/// `m/n` for `K = 1` and `(m/n)(1 − μ_Welch)` for `K ≥ 2`.
pub fn sparse_capture_bound(m: usize, n: usize, k: usize) -> f64 {
    let ratio = m as f64 / n as f64;
    if k <= 1 {
        ratio
    } else {
        ratio * (1.0 - welch_bound(m, n))
    }
}

/// Sparse signal: a uniform tight frame for `K = 1`, an equiangular tight
/// frame for `K ≥ 2`, attenuated so the worst-case capture meets the budget.
///
/// Where no ETF is available the solver's best frame is used and the outcome
/// carries [`EtfUnavailable`]; `achieved_delta` is always the exact
/// brute-forced worst case.
pub fn design_sparse(
    n: usize,
    m: usize,
    k: usize,
    scenario: &Scenario,
    seed: u64,
) -> Result<DesignOutcome, DesignError> {
    if m == 0 || m >= n {
        return Err(DesignError::InvalidDimensions(format!(
            "sparse design needs 1 <= m < n, got m = {m}, n = {n}"
        )));
    }
    let mut unavailable = None;
    let (frame, construction) = if k == 1 {
        (build_uniform_tight_frame(m, n)?, Construction::UniformFrame)
    } else {
        let existence = etf_existence(m, n);
        let frame = match build_known_etf(m, n)? {
            Some(frame) => frame,
            None => build_etf_alternating_projections(&FrameRequest::etf(m, n).with_seed(seed))?,
        };
        if existence == EtfExistence::Impossible {
            unavailable = Some(EtfUnavailable::Impossible);
        } else if let Some(trace) = frame.solver {
            if !trace.converged {
                unavailable = Some(EtfUnavailable::NotConverged {
                    coherence: frame.achieved_coherence,
                    welch_bound: frame.welch_bound,
                });
            }
        }
        (frame, Construction::Etf)
    };

    let matrix = frame.frame.clone();
    let range = sparse_capture_range(&matrix, k)?;
    let raw = range.min;
    let budget = scenario.budget();
    let theta = if raw > 0.0 {
        secrecy_angle(raw, &budget)?
    } else {
        0.0
    };
    let gain = theta.cos().powi(2);
    let achieved = gain * raw;
    let bound = sparse_capture_bound(m, n, k);

    let mut out = outcome(
        matrix,
        construction,
        theta,
        AttenuationMode::SignalPrecoding,
        raw,
        raw,
        achieved,
        scenario,
    );
    out.exact = k <= 2 && unavailable.is_none();
    out.capture_bound = Some(bound);
    out.worst_support = Some(range.min_support.clone());
    if k >= 3 {
        out.diagnostics.push(format!(
            "K = {k}: capture bound {bound:.6} is not known to be attainable; \
             measured worst case {raw:.6} (gap {:.3e})",
            bound - raw
        ));
    }
    if let Some(reason) = &unavailable {
        out.diagnostics.push(format!(
            "best-effort frame: {reason}; worst case {raw:.6} is exact"
        ));
    }
    let peak = gain * range.max;
    out.diagnostics.push(format!(
        "peak capture over {k}-sparse signals is {peak:.6} (eavesdropper deflection {:.6})",
        scenario.deflection_ev(peak)
    ));
    out.frame = Some(frame);
    out.etf_unavailable = unavailable;
    Ok(out)
}

/// Dispatches on the signal model; the free-basis subspace design returns its
/// outcome only.
pub fn design(
    spec: &SignalSpec,
    m: usize,
    scenario: &Scenario,
    seed: u64,
) -> Result<DesignOutcome, DesignError> {
    match spec {
        SignalSpec::Known(s) => design_known(s, m, scenario),
        SignalSpec::Subspace { basis: Some(d), .. } => design_subspace_fixed(d, m, scenario),
        SignalSpec::Subspace { n, k, basis: None } => {
            design_subspace_free(*n, m, *k, scenario, seed).map(|d| d.outcome)
        }
        SignalSpec::Sparse { n, k } => design_sparse(*n, m, *k, scenario, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::etf_construction::build_simplex_etf;
    use crate::secrecy_model::NoiseInjectionProfile;
    use std::f64::consts::FRAC_PI_4;

    fn symmetric() -> NoiseInjectionProfile {
        NoiseInjectionProfile::new(0.5, 1.0, 0.25, 0.25, 0.25, 0.25).unwrap()
    }

    /// With the symmetric profile and σ² = 1, `Δ = 1/(1/τ − 1/4)`.
    fn scenario_with_delta(delta: f64) -> Scenario {
        let tau = 1.0 / (1.0 / delta + 0.25);
        Scenario::new(symmetric(), 1.0, tau).unwrap()
    }

    fn unconstrained() -> Scenario {
        Scenario::unconstrained(symmetric(), 1.0).unwrap()
    }

    #[test]
    fn known_unconstrained_keeps_all_energy() {
        let s = DVector::from_vec(vec![0.3, -1.2, 2.0, 0.5, 0.0, 1.0]);
        let out = design_known(&s, 2, &unconstrained()).unwrap();
        assert_eq!(out.theta, 0.0);
        assert!((out.achieved_delta - s.norm_squared()).abs() < 1e-12);
        assert!(out.matrix.stiefel_defect() < 1e-12);
    }

    #[test]
    fn known_canonical_signal() {
        let s = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let out = design_known(&s, 2, &scenario_with_delta(3.0)).unwrap();
        assert!((out.achieved_delta - 1.0).abs() < 1e-15);
        assert_eq!(out.matrix.as_matrix(), &DMatrix::identity(2, 4));
    }

    #[test]
    fn known_binding_constraint() {
        let s = DVector::from_vec(vec![2.0, 0.0, 0.0, 0.0, 0.0]);
        let scenario = scenario_with_delta(2.0);
        assert!((scenario.tau() - 4.0 / 3.0).abs() < 1e-15);
        let out = design_known(&s, 3, &scenario).unwrap();
        assert!((out.theta - FRAC_PI_4).abs() < 1e-15);
        assert!((out.achieved_delta - 2.0).abs() < 1e-9);
        assert!((scenario.deflection_ev(out.achieved_delta) - scenario.tau()).abs() < 1e-9);
        assert!((out.predicted_d_ev - scenario.tau()).abs() < 1e-9);
    }

    #[test]
    fn known_square_matrix_cannot_rotate() {
        let s = DVector::from_vec(vec![2.0, 1.0, 0.0]);
        assert_eq!(
            design_known(&s, 3, &scenario_with_delta(1.0)),
            Err(DesignError::NoDiscardedDirection)
        );
        let out = design_known_attenuated(&s, 3, &scenario_with_delta(1.0)).unwrap();
        assert!((out.achieved_delta - 1.0).abs() < 1e-12);
        assert!((out.unattenuated_delta - 5.0).abs() < 1e-12);
        // Slack constraint with m = n is fine.
        assert!(design_known(&s, 3, &unconstrained()).is_ok());
    }

    #[test]
    fn known_rejects_zero_signal() {
        assert!(matches!(
            design_known(&DVector::zeros(4), 2, &unconstrained()),
            Err(DesignError::Secrecy(SecrecyError::ZeroSignal))
        ));
    }

    #[test]
    fn subspace_free_cases() {
        let d = design_subspace_free(8, 3, 2, &unconstrained(), 0).unwrap();
        assert!((d.outcome.achieved_delta - 1.0).abs() < 1e-9);

        let over = design_subspace_free(8, 3, 4, &unconstrained(), 0).unwrap();
        assert!(over.outcome.achieved_delta.abs() < 1e-12);
        assert!(!over.outcome.diagnostics.is_empty());

        let d = design_subspace_free(6, 3, 2, &scenario_with_delta(0.5), 1).unwrap();
        assert!((d.outcome.achieved_delta - 0.5).abs() < 1e-9);
        let scaled = d.scaled_basis();
        assert!((scaled.column(0).norm_squared() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn subspace_fixed_cases() {
        let d = DMatrix::identity(6, 2);
        let out = design_subspace_fixed(&d, 3, &unconstrained()).unwrap();
        assert_eq!(out.matrix.as_matrix(), &DMatrix::identity(3, 6));
        assert!((out.achieved_delta - 1.0).abs() < 1e-12);

        let out = design_subspace_fixed(&d, 3, &scenario_with_delta(0.25)).unwrap();
        assert!((out.attenuation - 0.5).abs() < 1e-12);
        assert!((out.achieved_delta - 0.25).abs() < 1e-9);

        let mut bad = d.clone();
        bad[(0, 0)] = 1.1;
        assert!(matches!(
            design_subspace_fixed(&bad, 3, &unconstrained()),
            Err(DesignError::BasisNotOrthonormal { .. })
        ));
    }

    #[test]
    fn worst_case_subspace_extremes() {
        let phi = MeasurementMatrix::canonical(3, 6).unwrap();
        let inside = DMatrix::identity(6, 2);
        assert!((worst_case_subspace(&phi, &inside).unwrap() - 1.0).abs() < 1e-15);
        let outside = DMatrix::from_fn(6, 2, |i, j| if i == j + 3 { 1.0 } else { 0.0 });
        assert!(worst_case_subspace(&phi, &outside).unwrap().abs() < 1e-15);
    }

    #[test]
    fn worst_case_sparse_trivial_cases() {
        let phi = random_stiefel(3, 7, 5).unwrap();
        let (full, support) = worst_case_sparse(&phi, 7).unwrap();
        assert!(full.abs() < 1e-12);
        assert_eq!(support, (0..7).collect::<Vec<_>>());
        let (single, support) = worst_case_sparse(&phi, 1).unwrap();
        let diag = phi.projector().as_matrix().diagonal();
        assert_eq!(single, diag.min());
        assert_eq!(diag[support[0]], diag.min());
    }

    #[test]
    fn worst_case_sparse_simplex() {
        let simplex = build_simplex_etf(3).unwrap().frame;
        let (value, _) = worst_case_sparse(&simplex, 2).unwrap();
        assert!((value - 0.5).abs() < 1e-12);
        // Equiangularity: every support gives the same value.
        let p = simplex.projector().as_matrix();
        for i in 0..4 {
            for j in (i + 1)..4 {
                let (lo, hi) = principal_extremes(p, &[i, j]);
                assert!((lo - 0.5).abs() < 1e-12);
                assert!((hi - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sparse_guard() {
        let phi = random_stiefel(5, 40, 1).unwrap();
        assert_eq!(
            worst_case_sparse(&phi, 20),
            Err(DesignError::TooLarge {
                supports: binomial(40, 20)
            })
        );
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(40, 20), 137_846_528_820);
    }

    #[test]
    fn sparse_designs() {
        let out = design_sparse(4, 2, 1, &unconstrained(), 0).unwrap();
        assert!((out.achieved_delta - 0.5).abs() < 1e-12);
        assert_eq!(out.construction, Construction::UniformFrame);

        let out = design_sparse(4, 3, 2, &unconstrained(), 0).unwrap();
        assert!((out.achieved_delta - 0.5).abs() < 1e-9);
        assert!(out.exact);

        let out = design_sparse(4, 3, 2, &scenario_with_delta(0.25), 0).unwrap();
        assert!((out.attenuation.powi(2) * 0.5 - 0.25).abs() < 1e-12);
        assert!((out.achieved_delta - 0.25).abs() < 1e-9);
    }

    #[test]
    fn sparse_best_effort_is_tagged() {
        let out = design_sparse(7, 3, 2, &unconstrained(), 0).unwrap();
        assert_eq!(out.etf_unavailable, Some(EtfUnavailable::Impossible));
        assert!(!out.exact);
        assert!(out.achieved_delta < sparse_capture_bound(3, 7, 2));
        assert!(matches!(
            out.require_exact(),
            Err(DesignError::EtfUnavailable(EtfUnavailable::Impossible))
        ));
    }

    #[test]
    fn dispatcher_matches_direct_calls() {
        let s = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let scenario = scenario_with_delta(5.0);
        assert_eq!(
            design(&SignalSpec::Known(s.clone()), 2, &scenario, 0).unwrap(),
            design_known(&s, 2, &scenario).unwrap()
        );
        let sparse = SignalSpec::Sparse { n: 4, k: 2 };
        assert_eq!(sparse.n(), 4);
        assert_eq!(
            design(&sparse, 3, &scenario, 0).unwrap(),
            design_sparse(4, 3, 2, &scenario, 0).unwrap()
        );
    }
}
