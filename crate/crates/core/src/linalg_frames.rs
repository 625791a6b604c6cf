//! Dense linear-algebra primitives for measurement matrices: orthogonal
//! projectors, Gram–Schmidt bases, the secrecy rotation, random Stiefel
//! samples and frame quality metrics.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::tolerance;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix has non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("measurement matrix must have 1 <= m <= n, got {m}x{n}")]
    BadShape { m: usize, n: usize },
    #[error("matrix is rank deficient (eigenvalue ratio of φφᵀ is {ratio:.3e})")]
    RankDeficient { ratio: f64 },
    #[error("first Gram–Schmidt input is zero")]
    DegenerateInput,
    #[error("rotation needs dimension >= 2, got {n}")]
    DimensionTooSmall { n: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("column {index} is zero; coherence is undefined")]
    ZeroColumn { index: usize },
}

/// An `m × n` real matrix with full row rank.
#[derive(Debug, Clone)]
pub struct MeasurementMatrix {
    entries: DMatrix<f64>,
    projector: OnceLock<Projector>,
}

impl PartialEq for MeasurementMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl MeasurementMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self, LinalgError> {
        let (m, n) = entries.shape();
        if m == 0 || m > n {
            return Err(LinalgError::BadShape { m, n });
        }
        for col in 0..n {
            for row in 0..m {
                if !entries[(row, col)].is_finite() {
                    return Err(LinalgError::NonFinite { row, col });
                }
            }
        }
        let gram = &entries * entries.transpose();
        let eig = SymmetricEigen::new(gram).eigenvalues;
        let max = eig.max();
        let min = eig.min();
        let ratio = if max > 0.0 { min / max } else { 0.0 };
        if ratio < tolerance::RANK_RATIO {
            return Err(LinalgError::RankDeficient { ratio });
        }
        Ok(Self {
            entries,
            projector: OnceLock::new(),
        })
    }

    /// `[I_m | 0]`.
    pub fn canonical(m: usize, n: usize) -> Result<Self, LinalgError> {
        Self::new(DMatrix::identity(m, n))
    }

    /// Rows of `[I_m | 0]·Vᵀ`, i.e. the first `m` columns of `V` laid out as rows.
    pub fn leading_rows(basis: &DMatrix<f64>, m: usize) -> Result<Self, LinalgError> {
        if m > basis.ncols() {
            return Err(LinalgError::BadShape {
                m,
                n: basis.ncols(),
            });
        }
        Self::new(basis.columns(0, m).transpose())
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n(&self) -> usize {
        self.entries.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn projector(&self) -> &Projector {
        self.projector.get_or_init(|| orthogonal_projector(self))
    }

    /// Row-orthonormal matrix with the same row space.
    pub fn row_orthonormalized(&self) -> Self {
        let q = self.entries.transpose().qr().q();
        Self::new(q.transpose()).expect("orthonormal rows have full rank")
    }

    /// `‖φφᵀ − I‖_max`.
    pub fn stiefel_defect(&self) -> f64 {
        let gram = &self.entries * self.entries.transpose();
        (gram - DMatrix::identity(self.m(), self.m())).amax()
    }
}

/// Orthogonal projector onto the row space of a measurement matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    entries: DMatrix<f64>,
    rank: usize,
}

impl Projector {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Signal capture `‖P̂s‖²`.
    pub fn capture(&self, s: &DVector<f64>) -> f64 {
        (&self.entries * s).norm_squared()
    }

    pub fn apply(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.entries * s
    }

    pub fn idempotence_defect(&self) -> f64 {
        (&self.entries * &self.entries - &self.entries).amax()
    }

    pub fn symmetry_defect(&self) -> f64 {
        (&self.entries - self.entries.transpose()).amax()
    }
}

/// `P̂ = φᵀ(φφᵀ)⁻¹φ`.
///
/// Row-orthonormal inputs take the exact shortcut `φᵀφ`; everything else goes
/// through a thin QR of `φᵀ`, which keeps `P̂` idempotent to rounding error
/// even for poorly conditioned `φ`.
pub fn orthogonal_projector(phi: &MeasurementMatrix) -> Projector {
    let rows = phi.as_matrix();
    let entries = if phi.stiefel_defect() <= tolerance::STIEFEL_SHORTCUT {
        rows.transpose() * rows
    } else {
        let q = rows.transpose().qr().q();
        let p = &q * q.transpose();
        (&p + p.transpose()) * 0.5
    };
    Projector {
        entries,
        rank: phi.m(),
    }
}

/// Orthonormal basis of `R^n` whose leading columns span the accepted inputs
/// in order.
///
/// Inputs that are (numerically) dependent on earlier ones are skipped, and
/// the basis is completed with canonical vectors `e_1, e_2, …` in index
/// order, skipping any whose residual falls below
/// [`tolerance::GRAM_SCHMIDT_RESIDUAL`].
pub fn gram_schmidt_basis(n: usize, inputs: &[DVector<f64>]) -> Result<DMatrix<f64>, LinalgError> {
    let first = inputs.first().ok_or(LinalgError::DegenerateInput)?;
    if first.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            got: first.len(),
        });
    }
    if first.norm() == 0.0 || !first.norm().is_finite() {
        return Err(LinalgError::DegenerateInput);
    }

    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n);
    let canonical = (0..n).map(|i| {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        e
    });
    for w in inputs.iter().cloned().chain(canonical) {
        if basis.len() == n {
            break;
        }
        if w.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                got: w.len(),
            });
        }
        let scale = w.norm();
        if scale == 0.0 {
            continue;
        }
        let mut u = w;
        // Two passes of modified Gram–Schmidt.
        for _ in 0..2 {
            for v in &basis {
                let c = v.dot(&u);
                u.axpy(-c, v, 1.0);
            }
        }
        let residual = u.norm();
        if residual < tolerance::GRAM_SCHMIDT_RESIDUAL * scale {
            continue;
        }
        basis.push(u / residual);
    }
    Ok(DMatrix::from_columns(&basis))
}

/// Plane rotation in coordinates `(1, n)`: `cos θ` in both corners, `sin θ`
/// top-right, `−sin θ` bottom-left, identity elsewhere.
pub fn secrecy_rotation(n: usize, theta: f64) -> Result<DMatrix<f64>, LinalgError> {
    if n < 2 {
        return Err(LinalgError::DimensionTooSmall { n });
    }
    let (sin, cos) = theta.sin_cos();
    let mut r = DMatrix::identity(n, n);
    r[(0, 0)] = cos;
    r[(n - 1, n - 1)] = cos;
    r[(0, n - 1)] = sin;
    r[(n - 1, 0)] = -sin;
    Ok(r)
}

/// Uniformly distributed point on the Stiefel manifold `{φ : φφᵀ = I}`.
///
/// Draws an i.i.d. standard Gaussian `m × n` matrix (row-major fill order)
/// from a ChaCha8 stream seeded with `seed`, then orthonormalizes its rows by
/// QR with the sign of `diag(R)` fixed positive.
pub fn random_stiefel(m: usize, n: usize, seed: u64) -> Result<MeasurementMatrix, LinalgError> {
    if m == 0 || m > n {
        return Err(LinalgError::BadShape { m, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaussian = DMatrix::zeros(m, n);
    for row in 0..m {
        for col in 0..n {
            gaussian[(row, col)] = StandardNormal.sample(&mut rng);
        }
    }
    let qr = gaussian.transpose().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    MeasurementMatrix::new(q.transpose())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameMetrics {
    pub coherence: f64,
    pub column_norms: Vec<f64>,
    /// `‖φφᵀ − (‖φ‖_F²/m)·I‖_F`
    pub tightness_defect: f64,
}

pub fn column_norms(phi: &DMatrix<f64>) -> Vec<f64> {
    phi.column_iter().map(|c| c.norm()).collect()
}

pub fn tightness_defect(phi: &DMatrix<f64>) -> f64 {
    let m = phi.nrows();
    let gram = phi * phi.transpose();
    let level = phi.norm_squared() / m as f64;
    (gram - DMatrix::identity(m, m) * level).norm()
}

/// Largest absolute normalized inner product between distinct columns,
/// ignoring columns listed in `skip`.
pub(crate) fn coherence_of(phi: &DMatrix<f64>, norms: &[f64], skip: &[usize]) -> f64 {
    let n = phi.ncols();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        if skip.contains(&i) {
            continue;
        }
        for j in (i + 1)..n {
            if skip.contains(&j) {
                continue;
            }
            let ip = phi.column(i).dot(&phi.column(j));
            worst = worst.max(ip.abs() / (norms[i] * norms[j]));
        }
    }
    worst
}

pub fn frame_metrics(phi: &MeasurementMatrix) -> Result<FrameMetrics, LinalgError> {
    let rows = phi.as_matrix();
    let column_norms = column_norms(rows);
    if let Some(index) = column_norms
        .iter()
        .position(|&c| c < tolerance::ZERO_COLUMN)
    {
        return Err(LinalgError::ZeroColumn { index });
    }
    Ok(FrameMetrics {
        coherence: coherence_of(rows, &column_norms, &[]),
        tightness_defect: tightness_defect(rows),
        column_norms,
    })
}
