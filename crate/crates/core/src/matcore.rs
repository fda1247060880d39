//! Dense complex linear algebra used by every other module.
//!
//! Operators on a finite-dimensional Hilbert space are plain
//! [`DMatrix<Complex64>`]s. Spectral work (Hermitian eigendecomposition,
//! SVD, Schur form) is delegated to nalgebra; the functions here turn those
//! factorizations into certified answers: PSD verdicts with witnesses,
//! square roots, orthonormal range bases, a deterministic unitary completion
//! and the Douglas factorization `A = BC`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Default relative tolerance for positivity verdicts.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default relative threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-10;
/// Relative asymmetry accepted before symmetrizing.
pub const SYM_TOL: f64 = 1e-8;
/// Eigenvalues below this (relative to `max(1, λ_max)`) are zeroed before a
/// square root, so rounding noise does not become `1e-8`-sized singular values.
pub const SQRT_FLOOR: f64 = 1e-14;

const EIG_MAX_ITER: usize = 10_000;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(rows, cols)
}

/// Builds a complex matrix from real row-major data.
pub fn from_real_rows(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
    CMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| c(x, 0.0)))
}

pub fn ensure_finite(m: &CMatrix) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

pub fn ensure_square(m: &CMatrix) -> Result<()> {
    if m.nrows() == m.ncols() {
        Ok(())
    } else {
        Err(Error::NonSquare { rows: m.nrows(), cols: m.ncols() })
    }
}

/// Largest singular value; zero for empty matrices.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// `(M + M*) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Relative distance of `m` from its adjoint.
pub fn asymmetry(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let diff = op_norm(&(m - m.adjoint()));
    diff / op_norm(m).max(1.0)
}

/// Spectral radius from the complex Schur form.
pub fn spectral_radius(m: &CMatrix) -> Result<f64> {
    ensure_square(m)?;
    if m.is_empty() {
        return Ok(0.0);
    }
    let schur =
        m.clone().try_schur(f64::EPSILON, EIG_MAX_ITER).ok_or(Error::EigenFailed { iterations: EIG_MAX_ITER })?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)].norm()).fold(0.0, f64::max))
}

/// Eigenpairs of a Hermitian matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub values: DVector<f64>,
    pub vectors: CMatrix,
}

/// Hermitian eigendecomposition `M = V Λ V*`.
///
/// The input is symmetrized first; asymmetry above [`SYM_TOL`] is rejected.
pub fn hermitian_eig(m: &CMatrix) -> Result<HermitianEig> {
    ensure_square(m)?;
    ensure_finite(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(HermitianEig { values: DVector::zeros(0), vectors: zeros(0, 0) });
    }
    let asym = asymmetry(m);
    if asym > SYM_TOL {
        return Err(Error::NotHermitian { asymmetry: asym });
    }
    let h = hermitian_part(m);
    let eig = nalgebra::SymmetricEigen::try_new(h, f64::EPSILON, EIG_MAX_ITER)
        .ok_or(Error::EigenFailed { iterations: EIG_MAX_ITER })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianEig { values, vectors })
}

/// Outcome of a numerical positivity test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdCertificate {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
    pub tolerance_used: f64,
    pub scale: f64,
    /// Unit eigenvector for `min_eigenvalue`, as `[re, im]` pairs.
    pub witness: Vec<[f64; 2]>,
}

impl PsdCertificate {
    pub fn witness_vector(&self) -> DVector<Complex64> {
        DVector::from_iterator(self.witness.len(), self.witness.iter().map(|p| c(p[0], p[1])))
    }
}

/// Decides `M >= 0` with the relative rule `λ_min >= -tol * max(1, ‖M‖)`.
pub fn psd_check(m: &CMatrix, tol: f64) -> Result<PsdCertificate> {
    let eig = hermitian_eig(m)?;
    let n = eig.values.len();
    if n == 0 {
        return Ok(PsdCertificate {
            is_psd: true,
            min_eigenvalue: 0.0,
            tolerance_used: tol,
            scale: 1.0,
            witness: Vec::new(),
        });
    }
    let max_abs = eig.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let scale = max_abs.max(1.0);
    let min_eigenvalue = eig.values[n - 1];
    let witness = eig.vectors.column(n - 1).iter().map(|z| [z.re, z.im]).collect();
    Ok(PsdCertificate { is_psd: min_eigenvalue >= -tol * scale, min_eigenvalue, tolerance_used: tol, scale, witness })
}

/// Like [`psd_check`] but fails with `NotPsd` carrying the certificate.
pub fn require_psd(m: &CMatrix, tol: f64, what: &str) -> Result<PsdCertificate> {
    let cert = psd_check(m, tol)?;
    if cert.is_psd {
        Ok(cert)
    } else {
        Err(Error::NotPsd { what: what.to_string(), certificate: Box::new(cert) })
    }
}

/// Positive square root through the eigendecomposition. Eigenvalues below
/// [`SQRT_FLOOR`] (including the small negative ones admitted by the
/// tolerance) are set to zero.
pub fn psd_sqrt(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    require_psd(m, tol, "square-root argument")?;
    let eig = hermitian_eig(m)?;
    let n = eig.values.len();
    let floor = SQRT_FLOOR * eig.values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut scaled = eig.vectors.clone();
    for j in 0..n {
        let s = if eig.values[j] > floor { eig.values[j].sqrt() } else { 0.0 };
        scaled.column_mut(j).scale_mut(s);
    }
    Ok(hermitian_part(&(scaled * eig.vectors.adjoint())))
}

/// Singular triples `(U, σ, V)` with `σ_i > tol_rank * σ_max`, largest first.
///
/// Read off the positive eigenpairs of `[[0, M], [M*, 0]]`, whose
/// eigenvectors are `(u_i; v_i) / √2`.
pub fn thin_svd(m: &CMatrix, tol_rank: f64) -> (CMatrix, Vec<f64>, CMatrix) {
    let (rows, cols) = m.shape();
    if m.is_empty() {
        return (zeros(rows, 0), Vec::new(), zeros(cols, 0));
    }
    let mut big = zeros(rows + cols, rows + cols);
    big.view_mut((0, rows), (rows, cols)).copy_from(m);
    big.view_mut((rows, 0), (cols, rows)).copy_from(&m.adjoint());
    let eig = hermitian_eig(&big).expect("finite hermitian dilation");
    let smax = eig.values[0];
    let keep: Vec<usize> =
        (0..eig.values.len()).take_while(|&i| eig.values[i] > tol_rank * smax && smax > 0.0).collect();
    let mut u = zeros(rows, keep.len());
    let mut v = zeros(cols, keep.len());
    let scale = std::f64::consts::SQRT_2;
    for (j, &i) in keep.iter().enumerate() {
        let col = eig.vectors.column(i);
        u.set_column(j, &col.rows(0, rows).scale(scale));
        v.set_column(j, &col.rows(rows, cols).scale(scale));
    }
    let sigma = keep.iter().map(|&i| eig.values[i]).collect();
    (u, sigma, v)
}

/// Orthonormal basis of the column space; columns for singular values above
/// `tol_rank * σ_max`. A zero matrix yields a zero-column result.
pub fn range_basis(m: &CMatrix, tol_rank: f64) -> CMatrix {
    thin_svd(m, tol_rank).0
}

/// Numerical rank with the same threshold as [`range_basis`].
pub fn numerical_rank(m: &CMatrix, tol_rank: f64) -> usize {
    thin_svd(m, tol_rank).1.len()
}

/// Moore–Penrose pseudo-inverse, singular values below `tol_rank * σ_max`
/// treated as zero.
pub fn pinv(m: &CMatrix, tol_rank: f64) -> CMatrix {
    let (u, sigma, v) = thin_svd(m, tol_rank);
    let mut out = zeros(m.ncols(), m.nrows());
    for (i, s) in sigma.iter().enumerate() {
        out += (v.column(i) * u.column(i).adjoint()).unscale(*s);
    }
    out
}

/// Orthonormal basis of the orthogonal complement of the (orthonormal)
/// columns of `a` in `C^ambient`.
///
/// Columns of `I - AA*` are orthonormalized by Gram–Schmidt with column
/// pivoting (largest remaining norm first, lowest index on ties), which makes
/// the result deterministic.
pub fn orthogonal_complement(a: &CMatrix, ambient: usize) -> CMatrix {
    let target = ambient.saturating_sub(a.ncols());
    let mut work = identity(ambient) - a * a.adjoint();
    let mut basis = zeros(ambient, target);
    for found in 0..target {
        let (mut best, mut best_norm) = (0usize, -1.0f64);
        for j in 0..ambient {
            let nrm = work.column(j).norm();
            if nrm > best_norm + 1e-14 {
                best = j;
                best_norm = nrm;
            }
        }
        if best_norm <= 1e-12 {
            break;
        }
        let q = work.column(best).unscale(best_norm);
        for j in 0..ambient {
            let proj = q.dotc(&work.column(j));
            let update = &q * proj;
            let mut col = work.column_mut(j);
            col -= update;
        }
        basis.set_column(found, &q);
    }
    basis
}

fn gram_mismatch(a: &CMatrix, b: &CMatrix) -> f64 {
    op_norm(&(a.adjoint() * a - b.adjoint() * b))
}

/// Unitary `U` on `C^ambient` with `U A = B`, completed on the orthogonal
/// complements by pairing the deterministic complement bases in order.
///
/// `a` and `b` must have orthonormal columns (same count).
pub fn unitary_completion(a: &CMatrix, b: &CMatrix, ambient: usize, tol: f64) -> Result<CMatrix> {
    if a.nrows() != ambient || b.nrows() != ambient || a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "unitary completion of {}x{} onto {}x{} in dimension {ambient}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if a.ncols() > ambient {
        return Err(Error::DimensionMismatch("more basis vectors than ambient dimension".into()));
    }
    let mismatch = gram_mismatch(a, b);
    let orth = op_norm(&(a.adjoint() * a - identity(a.ncols())));
    if mismatch > tol || orth > tol {
        return Err(Error::NonIsometric { mismatch: mismatch.max(orth) });
    }
    let ac = orthogonal_complement(a, ambient);
    let bc = orthogonal_complement(b, ambient);
    if ac.ncols() != bc.ncols() || ac.ncols() + a.ncols() != ambient {
        return Err(Error::Internal(format!(
            "complement dimensions {} and {} do not complete rank {} to {ambient}",
            ac.ncols(),
            bc.ncols(),
            a.ncols()
        )));
    }
    Ok(b * a.adjoint() + &bc * ac.adjoint())
}

/// Douglas factorization: a contraction `C` with `A = B C`.
///
/// Requires `AA* <= BB*` (certified), computes `C = B⁺A` and checks the
/// residual and the norm bound.
pub fn douglas_solve(a: &CMatrix, b: &CMatrix, tol: f64) -> Result<CMatrix> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "Douglas factorization needs equal row counts, got {} and {}",
            a.nrows(),
            b.nrows()
        )));
    }
    ensure_finite(a)?;
    ensure_finite(b)?;
    let gap = b * b.adjoint() - a * a.adjoint();
    require_psd(&gap, tol, "BB* - AA*")?;
    let cmat = pinv(b, RANK_TOL) * a;
    let residual = op_norm(&(b * &cmat - a));
    let bound = 1e-8 * op_norm(a).max(1.0);
    if residual > bound {
        return Err(Error::IllConditioned { residual, tolerance: bound });
    }
    let norm = op_norm(&cmat);
    if norm > 1.0 + 1e-8 {
        return Err(Error::IllConditioned { residual: norm - 1.0, tolerance: 1e-8 });
    }
    Ok(cmat)
}

/// `‖X - I‖` for `X = M*M`, i.e. how far `M` is from an isometry.
pub fn isometry_defect(m: &CMatrix) -> f64 {
    op_norm(&(m.adjoint() * m - identity(m.ncols())))
}
