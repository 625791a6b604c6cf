//! Uniform tight frames and real equiangular tight frames (ETFs).
//!
//! Every frame produced here is normalized the same way: rows orthonormal
//! (`φφᵀ = I`) and every column of norm `√(m/n)`. Analytic families cover the
//! regular simplex and a small table of classical real ETFs; everything else
//! goes through an alternating-projection solver that always returns its best
//! iterate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg_frames::{
    coherence_of, column_norms, random_stiefel, tightness_defect, LinalgError, MeasurementMatrix,
};
use crate::tolerance;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EtfError {
    #[error("frame needs 1 <= m < n, got m = {m}, n = {n}")]
    BadDimensions { m: usize, n: usize },
    #[error("simplex frame needs m >= 2, got {m}")]
    SimplexTooSmall { m: usize },
    #[error("coherence tolerance must be positive, got {tol}")]
    BadTolerance { tol: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameKind {
    UniformTight,
    EquiangularTight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtfExistence {
    Impossible,
    KnownConstruction,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRequest {
    pub m: usize,
    pub n: usize,
    pub kind: FrameKind,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
}

impl FrameRequest {
    pub const DEFAULT_TOL: f64 = 1e-6;
    pub const DEFAULT_MAX_ITER: usize = 20_000;

    pub fn etf(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            kind: FrameKind::EquiangularTight,
            seed: 0,
            tol: Self::DEFAULT_TOL,
            max_iter: Self::DEFAULT_MAX_ITER,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_tol(self, tol: f64) -> Self {
        Self { tol, ..self }
    }

    pub fn with_max_iter(self, max_iter: usize) -> Self {
        Self { max_iter, ..self }
    }
}

/// Progress of the alternating-projection solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverTrace {
    pub iterations: usize,
    pub best_iteration: usize,
    pub converged: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameReport {
    #[serde(skip)]
    pub frame: MeasurementMatrix,
    pub m: usize,
    pub n: usize,
    pub kind: FrameKind,
    pub achieved_coherence: f64,
    pub welch_bound: f64,
    pub is_equiangular: bool,
    pub is_tight: bool,
    /// All column norms equal `√(m/n)`.
    pub is_uniform: bool,
    pub zero_columns: Vec<usize>,
    /// Whether the frame has the structure `kind` asks for.
    pub meets_kind: bool,
    pub solver: Option<SolverTrace>,
}

/// `√((n − m)/(m(n − 1)))`, the smallest possible coherence of `n` unit
/// vectors in `R^m`.
pub fn welch_bound(m: usize, n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let (m, n) = (m as f64, n as f64);
    ((n - m).max(0.0) / (m * (n - 1.0))).sqrt()
}

/// Real ETFs need `n ≤ m(m+1)/2`.
pub fn etf_existence(m: usize, n: usize) -> EtfExistence {
    if n > m * (m + 1) / 2 {
        EtfExistence::Impossible
    } else if n == m + 1 || matches!((m, n), (3, 6) | (5, 10) | (6, 16)) {
        EtfExistence::KnownConstruction
    } else {
        EtfExistence::Unknown
    }
}

fn check_dims(m: usize, n: usize) -> Result<(), EtfError> {
    if m == 0 || m >= n {
        Err(EtfError::BadDimensions { m, n })
    } else {
        Ok(())
    }
}

/// Recomputes every report field from the frame alone, using `tol` for the
/// equiangularity test.
pub fn verify_frame_with_tol(phi: &MeasurementMatrix, kind: FrameKind, tol: f64) -> FrameReport {
    let rows = phi.as_matrix();
    let (m, n) = rows.shape();
    let norms = column_norms(rows);
    let zero_columns: Vec<usize> = (0..n)
        .filter(|&j| norms[j] < tolerance::ZERO_COLUMN)
        .collect();
    let achieved_coherence = coherence_of(rows, &norms, &zero_columns);

    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            if zero_columns.contains(&i) || zero_columns.contains(&j) {
                continue;
            }
            let c = rows.column(i).dot(&rows.column(j)).abs() / (norms[i] * norms[j]);
            lo = lo.min(c);
            hi = hi.max(c);
        }
    }
    let is_equiangular = zero_columns.is_empty() && (n < 2 || hi - lo <= tol);
    let is_tight = tightness_defect(rows) <= tolerance::TIGHTNESS;
    let target = (m as f64 / n as f64).sqrt();
    let is_uniform = norms
        .iter()
        .all(|c| (c - target).abs() <= tolerance::CONSTRUCTION);
    let meets_kind = match kind {
        FrameKind::UniformTight => is_tight && is_uniform,
        FrameKind::EquiangularTight => is_tight && is_uniform && is_equiangular,
    };
    FrameReport {
        frame: phi.clone(),
        m,
        n,
        kind,
        achieved_coherence,
        welch_bound: welch_bound(m, n),
        is_equiangular,
        is_tight,
        is_uniform,
        zero_columns,
        meets_kind,
        solver: None,
    }
}

pub fn verify_frame(phi: &MeasurementMatrix, kind: FrameKind) -> FrameReport {
    verify_frame_with_tol(phi, kind, FrameRequest::DEFAULT_TOL)
}

/// The `m + 1` vertices of a regular simplex centred at the origin, as the
/// columns of the transposed Helmert basis of `1^⊥`.
pub fn build_simplex_etf(m: usize) -> Result<FrameReport, EtfError> {
    if m < 2 {
        return Err(EtfError::SimplexTooSmall { m });
    }
    let n = m + 1;
    let mut rows = DMatrix::zeros(m, n);
    for k in 1..=m {
        let scale = 1.0 / ((k * (k + 1)) as f64).sqrt();
        for j in 0..k {
            rows[(k - 1, j)] = scale;
        }
        rows[(k - 1, k)] = -(k as f64) * scale;
    }
    let phi = MeasurementMatrix::new(rows)?;
    Ok(verify_frame(&phi, FrameKind::EquiangularTight))
}

/// Six diagonals of the icosahedron.
fn icosahedron_lines() -> DMatrix<f64> {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let cols = [
        [0.0, 1.0, g],
        [0.0, -1.0, g],
        [1.0, g, 0.0],
        [-1.0, g, 0.0],
        [g, 0.0, 1.0],
        [g, 0.0, -1.0],
    ];
    let mut rows = DMatrix::zeros(3, 6);
    let norm = (1.0 + g * g).sqrt();
    for (j, c) in cols.iter().enumerate() {
        for i in 0..3 {
            // Unit columns give φφᵀ = 2I; rescale to orthonormal rows.
            rows[(i, j)] = c[i] / norm / 2f64.sqrt();
        }
    }
    rows
}

/// Seidel matrix `J − I − 2A` of a graph.
fn seidel(adjacent: impl Fn(usize, usize) -> bool, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else if adjacent(i, j) {
            -1.0
        } else {
            1.0
        }
    })
}

/// Petersen graph: 2-subsets of {0..5}, adjacent when disjoint.
fn petersen_seidel() -> DMatrix<f64> {
    let pairs: Vec<(usize, usize)> = (0..5)
        .flat_map(|a| ((a + 1)..5).map(move |b| (a, b)))
        .collect();
    seidel(
        |i, j| {
            let (a, b) = pairs[i];
            let (c, d) = pairs[j];
            a != c && a != d && b != c && b != d
        },
        10,
    )
}

/// Clebsch graph: 4-bit words, adjacent at Hamming distance 1 or 4.
fn clebsch_seidel() -> DMatrix<f64> {
    seidel(|i, j| matches!((i ^ j).count_ones(), 1 | 4), 16)
}

/// Frame whose Gram matrix is `I − S/λ` for the eigenvalue `λ` of the
/// two-eigenvalue Seidel matrix `S` that leaves rank `m`.
fn frame_from_seidel(seidel: DMatrix<f64>, m: usize) -> Result<DMatrix<f64>, EtfError> {
    let n = seidel.nrows();
    let eig = SymmetricEigen::new(seidel.clone());
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    let count_hi = eig
        .eigenvalues
        .iter()
        .filter(|&&v| (v - hi).abs() < 1e-8)
        .count();
    // Dividing by λ zeroes the λ-eigenspace.
    let lambda = if count_hi == m { lo } else { hi };
    let gram = DMatrix::identity(n, n) - seidel / lambda;
    Ok(factor_tight_gram(&gram, m))
}

/// Top-`m` eigenvectors of a Gram matrix as the rows of an `m × n` frame.
/// Ties in the eigenvalue ordering break towards the lower index.
fn factor_tight_gram(gram: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(gram.clone());
    let mut order: Vec<usize> = (0..gram.nrows()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let n = gram.nrows();
    DMatrix::from_fn(m, n, |i, j| eig.eigenvectors[(j, order[i])])
}

/// Analytic ETF for `(m, n)` when one is in the built-in table.
pub fn build_known_etf(m: usize, n: usize) -> Result<Option<FrameReport>, EtfError> {
    check_dims(m, n)?;
    let rows = match (m, n) {
        _ if n == m + 1 && m >= 2 => return build_simplex_etf(m).map(Some),
        (3, 6) => icosahedron_lines(),
        (5, 10) => frame_from_seidel(petersen_seidel(), 5)?,
        (6, 16) => frame_from_seidel(clebsch_seidel(), 6)?,
        _ => return Ok(None),
    };
    let phi = MeasurementMatrix::new(rows)?;
    Ok(Some(verify_frame(&phi, FrameKind::EquiangularTight)))
}

/// Real harmonic frame: rows `√(2/n)·cos(2πkj/n)` and `√(2/n)·sin(2πkj/n)`
/// for `k = 1..⌊m/2⌋`, plus the constant row `1/√n` when `m` is odd.
pub fn build_uniform_tight_frame(m: usize, n: usize) -> Result<FrameReport, EtfError> {
    check_dims(m, n)?;
    let mut rows = DMatrix::zeros(m, n);
    let mut r = 0;
    if m % 2 == 1 {
        rows.row_mut(0).fill(1.0 / (n as f64).sqrt());
        r = 1;
    }
    let amp = (2.0 / n as f64).sqrt();
    for k in 1..=(m / 2) {
        for j in 0..n {
            let angle = 2.0 * std::f64::consts::PI * (k * j % n) as f64 / n as f64;
            rows[(r, j)] = amp * angle.cos();
            rows[(r + 1, j)] = amp * angle.sin();
        }
        r += 2;
    }
    let phi = MeasurementMatrix::new(rows)?;
    Ok(verify_frame(&phi, FrameKind::UniformTight))
}

fn normalize_columns(x: &mut DMatrix<f64>) {
    for mut col in x.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
}

fn unit_coherence(x: &DMatrix<f64>) -> f64 {
    let gram = x.transpose() * x;
    let n = gram.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max(gram[(i, j)].abs());
        }
    }
    worst
}

/// Alternating projections between unit-diagonal Gram matrices whose
/// off-diagonal magnitudes are clipped at the Welch value and rank-`m` Gram
/// matrices with all nonzero eigenvalues equal to `n/m`.
///
/// Never fails on convergence: the best iterate is returned together with a
/// [`SolverTrace`]. Impossible dimension pairs are accepted and give a
/// best-effort Grassmannian packing.
pub fn build_etf_alternating_projections(request: &FrameRequest) -> Result<FrameReport, EtfError> {
    let FrameRequest {
        m,
        n,
        seed,
        tol,
        max_iter,
        ..
    } = *request;
    check_dims(m, n)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(EtfError::BadTolerance { tol });
    }
    let welch = welch_bound(m, n);
    let level = n as f64 / m as f64;

    let mut x = random_stiefel(m, n, seed)?.into_inner();
    normalize_columns(&mut x);
    let mut best = x.clone();
    let mut best_coherence = unit_coherence(&x);
    let mut best_iteration = 0;
    let mut iterations = 0;

    while best_coherence > welch + tol && iterations < max_iter {
        iterations += 1;
        let mut gram = x.transpose() * &x;
        for j in 0..n {
            for i in 0..n {
                let v = gram[(i, j)];
                gram[(i, j)] = if i == j {
                    1.0
                } else if v.abs() > welch {
                    welch.copysign(v)
                } else {
                    v
                };
            }
        }
        let spectral = factor_tight_gram(&gram, m);
        x = spectral * level.sqrt();
        normalize_columns(&mut x);
        let coherence = unit_coherence(&x);
        if coherence < best_coherence {
            best_coherence = coherence;
            best = x.clone();
            best_iteration = iterations;
        }
    }

    let phi = MeasurementMatrix::new(best * level.recip().sqrt())?;
    let mut report = verify_frame_with_tol(&phi, FrameKind::EquiangularTight, tol);
    report.solver = Some(SolverTrace {
        iterations,
        best_iteration,
        converged: best_coherence <= welch + tol,
        seed,
    });
    Ok(report)
}

/// Runs the solver from seeds `request.seed .. request.seed + restarts` in
/// parallel and keeps the lowest coherence, ties going to the lowest seed.
pub fn build_etf_best_of(request: &FrameRequest, restarts: usize) -> Result<FrameReport, EtfError> {
    let runs: Vec<FrameReport> = (0..restarts.max(1) as u64)
        .into_par_iter()
        .map(|k| build_etf_alternating_projections(&request.clone().with_seed(request.seed + k)))
        .collect::<Result<_, _>>()?;
    Ok(runs
        .into_iter()
        .reduce(|a, b| {
            if b.achieved_coherence < a.achieved_coherence {
                b
            } else {
                a
            }
        })
        .expect("at least one run"))
}

/// ETF for `(m, n)`: analytic when tabulated, otherwise the solver.
pub fn build_etf(request: &FrameRequest) -> Result<FrameReport, EtfError> {
    match build_known_etf(request.m, request.n)? {
        Some(report) => Ok(report),
        None => build_etf_alternating_projections(request),
    }
}

/// Diagonal of a frame's projector; constant `m/n` for uniform tight frames.
pub fn projector_diagonal(phi: &MeasurementMatrix) -> DVector<f64> {
    phi.projector().as_matrix().diagonal()
}
