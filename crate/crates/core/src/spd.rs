//! Symmetric positive-definite matrices and the affine-invariant geometry.
//!
//! Everything the classifier needs from the SPD manifold lives here: spectral
//! matrix functions, the geodesic distance, the Karcher (Fréchet) mean and
//! the tangent-space map used to turn covariance matrices into feature
//! vectors.
//!
//! All functions are pure and operate on immutable values.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative tolerance for the symmetry check.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Smallest admissible eigenvalue relative to the largest one.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Default Karcher-iteration tolerance on the tangent-mean norm.
pub const FRECHET_TOL: f64 = 1e-8;
/// Default Karcher-iteration budget.
pub const FRECHET_MAX_ITER: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpdError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (eigenvalues {min:.3e} .. {max:.3e})")]
    NotPositiveDefinite { min: f64, max: f64 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("cannot average an empty set of matrices")]
    Empty,

    #[error("Karcher mean did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
}

/// A validated symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    values: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates symmetry and positive definiteness. The stored matrix is the
    /// exact symmetrization `(M + Mᵀ)/2` of the input.
    pub fn new(m: DMatrix<f64>) -> Result<Self, SpdError> {
        let sym = symmetrize_checked(&m)?;
        let eig = eigen_of_symmetric(&sym);
        check_spectrum(&eig.values)?;
        Ok(Self { values: sym })
    }

    pub fn identity(p: usize) -> Self {
        Self {
            values: DMatrix::identity(p, p),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self, SpdError> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Wraps a matrix that is symmetric and positive definite by construction
    /// (e.g. the output of a spectral map with positive function values).
    pub(crate) fn from_trusted(values: DMatrix<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.values
    }

    /// Stable fingerprint of the matrix bits, used to tag tangent vectors
    /// with the base point they were projected at.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.values.iter() {
            for b in v.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues in descending
/// order and orthonormal eigenvectors stored as columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// `V diag(f(λ)) Vᵀ`.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> DMatrix<f64> {
        let p = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..p {
            let s = f(self.values[j]);
            scaled.column_mut(j).scale_mut(s);
        }
        let mut out = &scaled * self.vectors.transpose();
        force_symmetric(&mut out);
        out
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn symmetrize_checked(m: &DMatrix<f64>) -> Result<DMatrix<f64>, SpdError> {
    if !m.is_square() {
        return Err(SpdError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SpdError::NonFinite);
    }
    let p = m.nrows();
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let mut asym = 0.0_f64;
    for i in 0..p {
        for j in (i + 1)..p {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale {
        return Err(SpdError::NotSymmetric { asymmetry: asym });
    }
    let mut sym = m.clone();
    force_symmetric(&mut sym);
    Ok(sym)
}

fn force_symmetric(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn check_spectrum(values: &DVector<f64>) -> Result<(), SpdError> {
    let max = values.max();
    let min = values.min();
    if !(min > 0.0) || min <= EIGEN_FLOOR * max {
        return Err(SpdError::NotPositiveDefinite { min, max });
    }
    Ok(())
}

fn eigen_of_symmetric(m: &DMatrix<f64>) -> SymEigen {
    let p = m.nrows();
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(p, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        // Fix the sign so the largest-magnitude component is positive.
        let (imax, _) = col
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best });
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    SymEigen { values, vectors }
}

/// Symmetric eigen-decomposition: `M = V diag(λ) Vᵀ`, λ descending.
pub fn sym_eig(m: &DMatrix<f64>) -> Result<SymEigen, SpdError> {
    let sym = symmetrize_checked(m)?;
    Ok(eigen_of_symmetric(&sym))
}

fn spd_eigen(m: &SpdMatrix) -> Result<SymEigen, SpdError> {
    let eig = eigen_of_symmetric(m.as_matrix());
    check_spectrum(&eig.values)?;
    Ok(eig)
}

pub fn matrix_log(m: &SpdMatrix) -> Result<DMatrix<f64>, SpdError> {
    Ok(spd_eigen(m)?.map(f64::ln))
}

/// Matrix exponential of a symmetric matrix. The result is SPD.
pub fn matrix_exp(m: &DMatrix<f64>) -> Result<SpdMatrix, SpdError> {
    let eig = sym_eig(m)?;
    Ok(SpdMatrix::from_trusted(eig.map(f64::exp)))
}

pub fn matrix_sqrt(m: &SpdMatrix) -> Result<SpdMatrix, SpdError> {
    Ok(SpdMatrix::from_trusted(spd_eigen(m)?.map(f64::sqrt)))
}

pub fn matrix_inv_sqrt(m: &SpdMatrix) -> Result<SpdMatrix, SpdError> {
    Ok(SpdMatrix::from_trusted(spd_eigen(m)?.map(|l| 1.0 / l.sqrt())))
}

pub fn matrix_inv(m: &SpdMatrix) -> Result<SpdMatrix, SpdError> {
    Ok(SpdMatrix::from_trusted(spd_eigen(m)?.map(|l| 1.0 / l)))
}

/// `W M W` for symmetric `W`, re-symmetrized to remove rounding asymmetry.
fn congruence(w: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = w * m * w;
    force_symmetric(&mut out);
    out
}

fn check_dims(a: &SpdMatrix, b: &SpdMatrix) -> Result<(), SpdError> {
    if a.dim() != b.dim() {
        return Err(SpdError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(())
}

/// Affine-invariant geodesic distance `‖log(A^{-1/2} B A^{-1/2})‖_F`.
pub fn geodesic_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64, SpdError> {
    check_dims(a, b)?;
    let w = matrix_inv_sqrt(a)?;
    let whitened = congruence(w.as_matrix(), b.as_matrix());
    let eig = eigen_of_symmetric(&whitened);
    check_spectrum(&eig.values)?;
    Ok(eig.values.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt())
}

/// Point at parameter `t` on the geodesic from `a` (t = 0) to `b` (t = 1).
pub fn geodesic_point(a: &SpdMatrix, b: &SpdMatrix, t: f64) -> Result<SpdMatrix, SpdError> {
    check_dims(a, b)?;
    let eig_a = spd_eigen(a)?;
    let sq = eig_a.map(f64::sqrt);
    let isq = eig_a.map(|l| 1.0 / l.sqrt());
    let inner = eigen_of_symmetric(&congruence(&isq, b.as_matrix()));
    check_spectrum(&inner.values)?;
    let powered = inner.map(|l| l.powf(t));
    Ok(SpdMatrix::from_trusted(congruence(&sq, &powered)))
}

/// Result of the Karcher iteration.
#[derive(Debug, Clone)]
pub struct FrechetMean {
    pub mean: SpdMatrix,
    pub iterations: usize,
    /// Frobenius norm of the tangent mean at the returned point.
    pub residual: f64,
    pub converged: bool,
}

impl FrechetMean {
    pub fn into_converged(self) -> Result<SpdMatrix, SpdError> {
        if self.converged {
            Ok(self.mean)
        } else {
            Err(SpdError::NotConverged {
                iterations: self.iterations,
                residual: self.residual,
            })
        }
    }
}

/// Karcher fixed-point iteration for the affine-invariant Fréchet mean,
/// started at the arithmetic mean.
///
/// Non-convergence is not an error here: the result carries `converged =
/// false` and the final residual so the caller can decide.
pub fn frechet_mean(mats: &[SpdMatrix], tol: f64, max_iter: usize) -> Result<FrechetMean, SpdError> {
    let first = mats.first().ok_or(SpdError::Empty)?;
    let p = first.dim();
    for m in mats {
        check_dims(first, m)?;
    }
    let n = mats.len() as f64;

    let mut g = DMatrix::zeros(p, p);
    for m in mats {
        g += m.as_matrix();
    }
    g /= n;
    force_symmetric(&mut g);

    let mut residual = f64::INFINITY;
    for it in 0..=max_iter {
        let eig_g = eigen_of_symmetric(&g);
        check_spectrum(&eig_g.values)?;
        let sq = eig_g.map(f64::sqrt);
        let isq = eig_g.map(|l| 1.0 / l.sqrt());

        let mut tangent_mean = DMatrix::zeros(p, p);
        for m in mats {
            let inner = eigen_of_symmetric(&congruence(&isq, m.as_matrix()));
            check_spectrum(&inner.values)?;
            tangent_mean += inner.map(f64::ln);
        }
        tangent_mean /= n;
        residual = tangent_mean.norm();
        if residual < tol {
            return Ok(FrechetMean {
                mean: SpdMatrix::from_trusted(g),
                iterations: it,
                residual,
                converged: true,
            });
        }
        if it == max_iter {
            break;
        }
        let step = eigen_of_symmetric(&tangent_mean).map(f64::exp);
        g = congruence(&sq, &step);
    }
    Ok(FrechetMean {
        mean: SpdMatrix::from_trusted(g),
        iterations: max_iter,
        residual,
        converged: false,
    })
}

/// Vectorized tangent-space coordinates at a base point.
///
/// Components are the upper triangle of the tangent matrix in row-major
/// order, off-diagonal entries scaled by √2, so the Euclidean norm equals the
/// Frobenius norm of the tangent matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub components: Vec<f64>,
    pub base_ref: u64,
}

impl TangentVector {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Number of tangent coordinates for a `p × p` matrix.
pub const fn tangent_dim(p: usize) -> usize {
    p * (p + 1) / 2
}

/// Upper-triangle vectorization with √2 off-diagonal weighting.
pub fn vectorize_upper(s: &DMatrix<f64>) -> Vec<f64> {
    let p = s.nrows();
    let mut out = Vec::with_capacity(tangent_dim(p));
    for i in 0..p {
        out.push(s[(i, i)]);
        for j in (i + 1)..p {
            out.push(std::f64::consts::SQRT_2 * s[(i, j)]);
        }
    }
    out
}

/// Inverse of [`vectorize_upper`].
pub fn unvectorize_upper(v: &[f64], p: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(p, p);
    let mut k = 0;
    for i in 0..p {
        s[(i, i)] = v[k];
        k += 1;
        for j in (i + 1)..p {
            let x = v[k] / std::f64::consts::SQRT_2;
            s[(i, j)] = x;
            s[(j, i)] = x;
            k += 1;
        }
    }
    s
}

/// A fixed tangent space: caches the whitening at the reference point so
/// many matrices can be projected cheaply.
#[derive(Debug, Clone)]
pub struct TangentSpace {
    reference: SpdMatrix,
    inv_sqrt: DMatrix<f64>,
    base_ref: u64,
}

impl TangentSpace {
    pub fn new(reference: SpdMatrix) -> Result<Self, SpdError> {
        let inv_sqrt = matrix_inv_sqrt(&reference)?.into_matrix();
        let base_ref = reference.fingerprint();
        Ok(Self {
            reference,
            inv_sqrt,
            base_ref,
        })
    }

    pub fn reference(&self) -> &SpdMatrix {
        &self.reference
    }

    pub fn project(&self, x: &SpdMatrix) -> Result<TangentVector, SpdError> {
        check_dims(&self.reference, x)?;
        let inner = eigen_of_symmetric(&congruence(&self.inv_sqrt, x.as_matrix()));
        check_spectrum(&inner.values)?;
        Ok(TangentVector {
            components: vectorize_upper(&inner.map(f64::ln)),
            base_ref: self.base_ref,
        })
    }
}

/// `log(C^{-1/2} X C^{-1/2})`, vectorized.
pub fn tangent_project(x: &SpdMatrix, c: &SpdMatrix) -> Result<TangentVector, SpdError> {
    TangentSpace::new(c.clone())?.project(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mat(p: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(p, p, v)
    }

    fn spd(p: usize, v: &[f64]) -> SpdMatrix {
        SpdMatrix::new(mat(p, v)).unwrap()
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = sym_eig(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0, 1.0]);
        let vtv = e.vectors.transpose() * &e.vectors;
        assert_relative_eq!(vtv, DMatrix::identity(3, 3), epsilon = 1e-12);

        let e = sym_eig(&mat(2, &[1.0, 0.0, 0.0, 4.0])).unwrap();
        assert_eq!(e.values.as_slice(), &[4.0, 1.0]);
        assert_relative_eq!(e.vectors[(1, 0)].abs(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(e.vectors[(0, 1)].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eig_two_by_two_characteristic_polynomial() {
        // (2 - λ)² - 1 = 0  →  λ ∈ {3, 1}
        let m = mat(2, &[2.0, 1.0, 1.0, 2.0]);
        let e = sym_eig(&m).unwrap();
        assert_relative_eq!(e.values[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(e.values[1], 1.0, epsilon = 1e-12);
        let rebuilt = e.map(|l| l);
        assert_relative_eq!(rebuilt, m, epsilon = 1e-12);
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let err = sym_eig(&mat(2, &[1.0, 0.5, 0.0, 1.0])).unwrap_err();
        assert!(matches!(err, SpdError::NotSymmetric { .. }));
    }

    #[test]
    fn spd_rejects_singular_and_negative() {
        assert!(matches!(
            SpdMatrix::from_diagonal(&[1.0, 0.0]),
            Err(SpdError::NotPositiveDefinite { .. })
        ));
        assert!(matches!(
            SpdMatrix::from_diagonal(&[1.0, 1e-13]),
            Err(SpdError::NotPositiveDefinite { .. })
        ));
        assert!(SpdMatrix::from_diagonal(&[1.0, -2.0]).is_err());
    }

    #[test]
    fn log_of_diagonals() {
        let z = matrix_log(&SpdMatrix::identity(4)).unwrap();
        assert_relative_eq!(z, DMatrix::zeros(4, 4), epsilon = 1e-15);

        let l = matrix_log(&SpdMatrix::from_diagonal(&[std::f64::consts::E, 1.0]).unwrap()).unwrap();
        assert_relative_eq!(l, mat(2, &[1.0, 0.0, 0.0, 0.0]), epsilon = 1e-14);

        let l = matrix_log(&SpdMatrix::from_diagonal(&[2.0, 0.5]).unwrap()).unwrap();
        let ln2 = 2.0_f64.ln();
        assert_relative_eq!(l, mat(2, &[ln2, 0.0, 0.0, -ln2]), epsilon = 1e-14);
    }

    #[test]
    fn sqrt_exp_inv_sqrt_basics() {
        let s = matrix_sqrt(&SpdMatrix::from_diagonal(&[4.0, 9.0]).unwrap()).unwrap();
        assert_relative_eq!(*s.as_matrix(), mat(2, &[2.0, 0.0, 0.0, 3.0]), epsilon = 1e-14);
        let i = matrix_inv_sqrt(&SpdMatrix::identity(3)).unwrap();
        assert_relative_eq!(*i.as_matrix(), DMatrix::identity(3, 3), epsilon = 1e-15);
        let e = matrix_exp(&DMatrix::zeros(3, 3)).unwrap();
        assert_relative_eq!(*e.as_matrix(), DMatrix::identity(3, 3), epsilon = 1e-15);

        let a = spd(2, &[2.0, 0.3, 0.3, 1.0]);
        let r = matrix_sqrt(&a).unwrap();
        assert_relative_eq!(r.as_matrix() * r.as_matrix(), *a.as_matrix(), epsilon = 1e-12);
    }

    #[test]
    fn distance_closed_forms() {
        let a = spd(2, &[2.0, 0.3, 0.3, 1.0]);
        assert!(geodesic_distance(&a, &a).unwrap() < 1e-12);
        let e2 = std::f64::consts::E.powi(2);
        let d = geodesic_distance(&SpdMatrix::identity(2), &SpdMatrix::from_diagonal(&[e2, 1.0]).unwrap()).unwrap();
        assert_relative_eq!(d, 2.0, epsilon = 1e-12);
        let b = spd(2, &[1.0, -0.2, -0.2, 3.0]);
        assert_relative_eq!(
            geodesic_distance(&a, &b).unwrap(),
            geodesic_distance(&b, &a).unwrap(),
            epsilon = 1e-12
        );
        assert!(matches!(
            geodesic_distance(&a, &SpdMatrix::identity(3)),
            Err(SpdError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn frechet_mean_small_cases() {
        let a = spd(2, &[2.0, 0.3, 0.3, 1.0]);
        let m = frechet_mean(&[a.clone(), a.clone()], FRECHET_TOL, FRECHET_MAX_ITER).unwrap();
        assert!(m.converged);
        assert_relative_eq!(*m.mean.as_matrix(), *a.as_matrix(), epsilon = 1e-12);

        // With A = I the two-point mean is B^{1/2}.
        let m = frechet_mean(
            &[SpdMatrix::identity(2), SpdMatrix::from_diagonal(&[4.0, 1.0]).unwrap()],
            FRECHET_TOL,
            FRECHET_MAX_ITER,
        )
        .unwrap();
        assert_relative_eq!(*m.mean.as_matrix(), mat(2, &[2.0, 0.0, 0.0, 1.0]), epsilon = 1e-9);

        assert!(matches!(frechet_mean(&[], FRECHET_TOL, 5), Err(SpdError::Empty)));
    }

    #[test]
    fn frechet_mean_reports_non_convergence() {
        let mats = vec![
            SpdMatrix::from_diagonal(&[100.0, 1.0]).unwrap(),
            SpdMatrix::from_diagonal(&[0.01, 5.0]).unwrap(),
            spd(2, &[3.0, 1.0, 1.0, 2.0]),
        ];
        let r = frechet_mean(&mats, 1e-30, 2).unwrap();
        assert!(!r.converged);
        assert!(r.residual > 0.0);
        assert!(matches!(r.into_converged(), Err(SpdError::NotConverged { iterations: 2, .. })));
    }

    #[test]
    fn tangent_projection_cases() {
        let c = spd(2, &[2.0, 0.3, 0.3, 1.0]);
        let v = tangent_project(&c, &c).unwrap();
        assert_eq!(v.dim(), 3);
        assert!(v.norm() < 1e-12);

        let x = SpdMatrix::from_diagonal(&[std::f64::consts::E, 1.0]).unwrap();
        let v = tangent_project(&x, &SpdMatrix::identity(2)).unwrap();
        assert_relative_eq!(v.components[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(v.components[1], 0.0, epsilon = 1e-14);
        assert_relative_eq!(v.components[2], 0.0, epsilon = 1e-14);
        assert_eq!(tangent_dim(16), 136);
    }

    #[test]
    fn vectorization_round_trip() {
        let s = mat(3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let v = vectorize_upper(&s);
        assert_relative_eq!(v.iter().map(|x| x * x).sum::<f64>().sqrt(), s.norm(), epsilon = 1e-12);
        assert_relative_eq!(unvectorize_upper(&v, 3), s, epsilon = 1e-14);
    }
}
