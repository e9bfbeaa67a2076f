//! Homogeneous quadratic forms q(x) = ½x·Ax with Tr A = 1 (the blowup
//! candidates), the positive class Q⁺, the diagonal pencil Bᵗ, and the
//! uniqueness argument replayed as a decision procedure: diagonalize A − Ã,
//! differentiate the sphere integral f(t) along the pencil in closed form,
//! and read off whether any eigenvalue gap survives.

use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::io_util::fmt_full;
use crate::matrix::{self, max_abs};
use crate::sphere::MomentTable;

/// Relative tolerance for symmetry and trace validation.
pub const VALIDATION_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum QuadraticFormError {
    #[error("matrix is not symmetric: |a_ij - a_ji| up to {max_asym:.3e}")]
    NonSymmetric { max_asym: f64 },
    #[error("trace must be 1, got {trace}")]
    TraceViolation { trace: f64 },
    #[error("matrix is not positive semidefinite: min eigenvalue {min_eigenvalue:.3e}")]
    NotPsd { min_eigenvalue: f64 },
    #[error("index pair ({i0},{j0}) out of range for dimension {n} (need i0 < j0 < n)")]
    IndexOutOfRange { i0: usize, j0: usize, n: usize },
    #[error("pencil parameter t = {t} outside [-1, 1]")]
    PencilParamOutOfRange { t: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix entries must be finite")]
    NonFinite,
    #[error("bad matrix shape: expected {expected} entries, got {got}")]
    BadShape { expected: usize, got: usize },
    #[error("matrix file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Symmetric n×n matrix, stored row-major exactly as given. Construction
/// checks |a_ij − a_ji| ≤ 1e-12 · max(1, max|a|).
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self, QuadraticFormError> {
        if data.len() != n * n {
            return Err(QuadraticFormError::BadShape {
                expected: n * n,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(QuadraticFormError::NonFinite);
        }
        let scale = max_abs(&data).max(1.0);
        let mut max_asym = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                max_asym = max_asym.max((data[i * n + j] - data[j * n + i]).abs());
            }
        }
        if max_asym > VALIDATION_TOL * scale {
            return Err(QuadraticFormError::NonSymmetric { max_asym });
        }
        Ok(SymMatrix { n, data })
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in entries.iter().enumerate() {
            data[i * n + i] = *v;
        }
        SymMatrix { n, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.entry(i, i)).sum()
    }

    /// x · A x.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n);
        let mut acc = 0.0;
        for (i, xi) in x.iter().enumerate() {
            let row: f64 = x
                .iter()
                .enumerate()
                .map(|(j, xj)| self.entry(i, j) * xj)
                .sum();
            acc += xi * row;
        }
        acc
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.entry(i, j) * x[j]).sum())
            .collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        matrix::min_eigenvalue(self.n, &self.data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn frobenius_distance(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    fn difference(&self, other: &SymMatrix) -> Vec<f64> {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a - b)
            .collect()
    }
}

/// Which class a blowup candidate claims: Q (trace 1) or Q⁺ (trace 1 and
/// q ≥ 0, i.e. positive semidefinite).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassTag {
    Q,
    Qplus,
}

/// q(x) = ½x·Ax with Tr A = 1; with `ClassTag::Qplus` the matrix must also
/// be positive semidefinite.
#[derive(Debug, Clone)]
pub struct QuadraticBlowup {
    mat: SymMatrix,
    class_tag: ClassTag,
}

impl QuadraticBlowup {
    pub fn new(mat: SymMatrix, class_tag: ClassTag) -> Result<Self, QuadraticFormError> {
        let trace = mat.trace();
        if (trace - 1.0).abs() > VALIDATION_TOL {
            return Err(QuadraticFormError::TraceViolation { trace });
        }
        if class_tag == ClassTag::Qplus {
            let min_eigenvalue = mat.min_eigenvalue();
            if min_eigenvalue < -VALIDATION_TOL {
                return Err(QuadraticFormError::NotPsd { min_eigenvalue });
            }
        }
        Ok(QuadraticBlowup { mat, class_tag })
    }

    pub fn from_entries(
        n: usize,
        entries: &[f64],
        class_tag: ClassTag,
    ) -> Result<Self, QuadraticFormError> {
        Self::new(SymMatrix::new(n, entries.to_vec())?, class_tag)
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.mat
    }

    pub fn class_tag(&self) -> ClassTag {
        self.class_tag
    }

    /// q(x) = ½ x·Ax.
    pub fn eval(&self, x: &[f64]) -> f64 {
        0.5 * self.mat.quad_form(x)
    }

    /// Whether the matrix is actually positive semidefinite (regardless of
    /// the declared tag) — Monneau monotonicity is only guaranteed on Q⁺.
    pub fn is_psd(&self) -> bool {
        self.mat.min_eigenvalue() >= -VALIDATION_TOL
    }
}

/// The diagonal pencil Bᵗ ∈ Q⁺: (½ − t/2) at i0, (½ + t/2) at j0, zero
/// elsewhere. PSD with trace exactly 1 for t ∈ [−1, 1]; the closed interval
/// keeps sweep endpoints legal.
pub fn pencil(
    n: usize,
    i0: usize,
    j0: usize,
    t: f64,
) -> Result<QuadraticBlowup, QuadraticFormError> {
    check_pair(n, i0, j0)?;
    if !t.is_finite() || t.abs() > 1.0 {
        return Err(QuadraticFormError::PencilParamOutOfRange { t });
    }
    let mut entries = vec![0.0; n];
    entries[i0] = 0.5 - 0.5 * t;
    entries[j0] = 0.5 + 0.5 * t;
    QuadraticBlowup::new(SymMatrix::diag(&entries), ClassTag::Qplus)
}

fn check_pair(n: usize, i0: usize, j0: usize) -> Result<(), QuadraticFormError> {
    if i0 < j0 && j0 < n {
        Ok(())
    } else {
        Err(QuadraticFormError::IndexOutOfRange { i0, j0, n })
    }
}

/// Eigendecomposition of A − Ã: eigenvalues descending, and an orthogonal
/// matrix whose columns diagonalize the difference.
#[derive(Debug, Clone)]
pub struct EigenSplit {
    n: usize,
    lambdas: Vec<f64>,
    rotation: Vec<f64>,
}

impl EigenSplit {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Row-major orthogonal matrix R with Rᵀ(A−Ã)R diagonal.
    pub fn rotation(&self) -> &[f64] {
        &self.rotation
    }

    pub fn rotation_entry(&self, i: usize, j: usize) -> f64 {
        self.rotation[i * self.n + j]
    }

    /// R · diag(λ) · Rᵀ, for reconstruction checks.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n)
                    .map(|k| self.rotation[i * n + k] * self.lambdas[k] * self.rotation[j * n + k])
                    .sum();
            }
        }
        out
    }
}

pub fn eigen_split(
    a: &QuadraticBlowup,
    at: &QuadraticBlowup,
) -> Result<EigenSplit, QuadraticFormError> {
    let n = check_same_dim(a, at)?;
    let diff = a.matrix().difference(at.matrix());
    let (lambdas, rotation) = matrix::sorted_eigen_desc(n, &diff);
    Ok(EigenSplit {
        n,
        lambdas,
        rotation,
    })
}

fn check_same_dim(a: &QuadraticBlowup, at: &QuadraticBlowup) -> Result<usize, QuadraticFormError> {
    if a.dim() != at.dim() {
        return Err(QuadraticFormError::DimensionMismatch {
            left: a.dim(),
            right: at.dim(),
        });
    }
    Ok(a.dim())
}

fn check_moments_dim(n: usize, moments: &MomentTable) -> Result<(), QuadraticFormError> {
    if moments.dim != n {
        return Err(QuadraticFormError::DimensionMismatch {
            left: n,
            right: moments.dim,
        });
    }
    Ok(())
}

/// f(t) = ∫_{∂B₁} (x·(A−Ã)x)(x·(A+Ã−2Bᵗ)x) dH^{n−1}, expanded exactly in the
/// moment table. The computation works in the eigenbasis of A − Ã, where the
/// first factor is Σλᵢxᵢ² and Bᵗ is built on the chosen diagonal pair; only
/// the rotated diagonal of A + Ã enters. Affine in t.
pub fn f_of_t(
    a: &QuadraticBlowup,
    at: &QuadraticBlowup,
    i0: usize,
    j0: usize,
    t: f64,
    moments: &MomentTable,
) -> Result<f64, QuadraticFormError> {
    let n = check_same_dim(a, at)?;
    check_moments_dim(n, moments)?;
    check_pair(n, i0, j0)?;
    if !t.is_finite() || t.abs() > 1.0 {
        return Err(QuadraticFormError::PencilParamOutOfRange { t });
    }
    let split = eigen_split(a, at)?;
    let mut sum = vec![0.0; n * n];
    for (s, (p, q)) in sum
        .iter_mut()
        .zip(a.matrix().entries().iter().zip(at.matrix().entries()))
    {
        *s = p + q;
    }
    let mut m_diag = matrix::rotated_diagonal(n, split.rotation(), &sum);
    m_diag[i0] -= 2.0 * (0.5 - 0.5 * t);
    m_diag[j0] -= 2.0 * (0.5 + 0.5 * t);
    let lambda_sum: f64 = split.lambdas().iter().sum();
    let m_trace: f64 = m_diag.iter().sum();
    let paired: f64 = split
        .lambdas()
        .iter()
        .zip(m_diag.iter())
        .map(|(l, m)| l * m)
        .sum();
    Ok((moments.s4 - moments.s22) * paired + moments.s22 * m_trace * lambda_sum)
}

/// f′(t) = (λ_{i0} − λ_{j0}) (∫x₁⁴ − ∫x₁²x₂²), with λ the descending
/// eigenvalues of A − Ã.
pub fn fprime_closed(
    a: &QuadraticBlowup,
    at: &QuadraticBlowup,
    i0: usize,
    j0: usize,
    moments: &MomentTable,
) -> Result<f64, QuadraticFormError> {
    let n = check_same_dim(a, at)?;
    check_moments_dim(n, moments)?;
    check_pair(n, i0, j0)?;
    let split = eigen_split(a, at)?;
    Ok((split.lambdas()[i0] - split.lambdas()[j0]) * (moments.s4 - moments.s22))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayVerdict {
    Equal,
    Distinct,
}

/// One diagonal pair of the sweep: the eigenvalue gap and the closed-form
/// derivative it forces.
#[derive(Debug, Clone, Copy)]
pub struct PairResult {
    pub i0: usize,
    pub j0: usize,
    pub lambda_diff: f64,
    pub fprime: f64,
}

/// Outcome of sweeping every pencil pair: if any eigenvalue of A − Ã
/// survives the tolerance the matrices are distinct, and some pair carries a
/// nonzero gap witnessing it (the eigenvalues sum to zero).
#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub pair_results: Vec<PairResult>,
    pub verdict: ReplayVerdict,
    pub witness: Option<(usize, usize)>,
    pub lambdas: Vec<f64>,
    pub tol: f64,
}

pub fn replay_uniqueness(
    a: &QuadraticBlowup,
    at: &QuadraticBlowup,
    tol: f64,
) -> Result<ReplayReport, QuadraticFormError> {
    let n = check_same_dim(a, at)?;
    let moments = crate::sphere::exact_moments(n)
        .map_err(|_| QuadraticFormError::DimensionMismatch { left: n, right: n })?;
    let split = eigen_split(a, at)?;
    let lambdas = split.lambdas().to_vec();
    let mut pair_results = Vec::new();
    let mut witness = None;
    for i0 in 0..n {
        for j0 in (i0 + 1)..n {
            let lambda_diff = lambdas[i0] - lambdas[j0];
            pair_results.push(PairResult {
                i0,
                j0,
                lambda_diff,
                fprime: lambda_diff * (moments.s4 - moments.s22),
            });
            if witness.is_none() && lambda_diff.abs() > tol {
                witness = Some((i0, j0));
            }
        }
    }
    let max_lambda = lambdas.iter().fold(0.0_f64, |acc, l| acc.max(l.abs()));
    let verdict = if max_lambda <= tol {
        ReplayVerdict::Equal
    } else {
        ReplayVerdict::Distinct
    };
    Ok(ReplayReport {
        pair_results,
        verdict,
        witness,
        lambdas,
        tol,
    })
}

impl fmt::Display for ReplayReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "lambdas: [{}]",
            self.lambdas
                .iter()
                .map(|l| format!("{l:.6e}"))
                .collect::<Vec<_>>()
                .join(", ")
        )?;
        for p in &self.pair_results {
            writeln!(
                f,
                "pair ({},{}): lambda_diff={:.6e} fprime={:.6e}",
                p.i0 + 1,
                p.j0 + 1,
                p.lambda_diff,
                p.fprime
            )?;
        }
        match self.verdict {
            ReplayVerdict::Equal => write!(f, "verdict: equal (tol {:.1e})", self.tol),
            ReplayVerdict::Distinct => {
                let (i, j) = self.witness.unwrap_or((0, 0));
                write!(
                    f,
                    "verdict: distinct, witness pair ({},{}) (tol {:.1e})",
                    i + 1,
                    j + 1,
                    self.tol
                )
            }
        }
    }
}

/// Matrix file format: line 1 is the dimension n, then n lines of n
/// whitespace-separated entries at full precision.
pub fn write_matrix(path: &Path, mat: &SymMatrix) -> Result<(), QuadraticFormError> {
    let mut out = String::new();
    out.push_str(&format!("{}\n", mat.dim()));
    for i in 0..mat.dim() {
        let row: Vec<String> = (0..mat.dim()).map(|j| fmt_full(mat.entry(i, j))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<SymMatrix, QuadraticFormError> {
    let text = fs::read_to_string(path)?;
    parse_matrix(&text)
}

pub fn parse_matrix(text: &str) -> Result<SymMatrix, QuadraticFormError> {
    let mut tokens = text.split_whitespace();
    let n: usize = tokens
        .next()
        .ok_or_else(|| QuadraticFormError::Parse("empty matrix file".into()))?
        .parse()
        .map_err(|e| QuadraticFormError::Parse(format!("bad dimension: {e}")))?;
    if n == 0 {
        return Err(QuadraticFormError::Parse(
            "dimension must be positive".into(),
        ));
    }
    let mut data = Vec::with_capacity(n * n);
    for tok in tokens {
        let v: f64 = tok
            .parse()
            .map_err(|e| QuadraticFormError::Parse(format!("bad entry {tok:?}: {e}")))?;
        data.push(v);
    }
    if data.len() != n * n {
        return Err(QuadraticFormError::Parse(format!(
            "expected {} entries for dimension {n}, found {}",
            n * n,
            data.len()
        )));
    }
    SymMatrix::new(n, data)
}
