//! Dense matrix substrate: symmetric/PSD wrappers, Gram-orthonormal
//! coordinates, orthogonal projection pairs, pseudoinverse, spectral radius
//! and operator norms.
//!
//! Every filter in this crate runs in coordinates where the physical inner
//! product of the state space is the Euclidean one, so adjoints are plain
//! transposes. [`CoordinateMap`] converts between FEM-style coefficient
//! vectors and those orthonormal coordinates.

use std::ops::Deref;

use nalgebra::{Cholesky, DMatrix, DVector, QR};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Numerical tolerance for positive semidefiniteness.
pub const PSD_EPS: f64 = 1e-10;

/// Default relative eigenvalue cutoff for [`pseudoinverse`].
pub const PINV_REL_TOL: f64 = 1e-12;

/// Tolerance used to validate projection pairs.
pub const PROJECTION_TOL: f64 = 1e-10;

/// Returns `(m + mᵀ) / 2`.
pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

/// Largest absolute entry.
pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

/// Square matrix that is exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix<T: Real>(DMatrix<T>);

impl<T: Real> SymmetricMatrix<T> {
    /// Symmetrizes `m`. Fails if `m` is not square.
    pub fn new(m: DMatrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self(symmetrize(&m)))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_row_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<T> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.0
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<T> {
        let mut ev: Vec<T> = self.0.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }

    /// `(min, max)` eigenvalue; `(0, 0)` for an empty matrix.
    pub fn eigen_range(&self) -> (T, T) {
        let ev = self.eigenvalues();
        match (ev.first(), ev.last()) {
            (Some(lo), Some(hi)) => (*lo, *hi),
            _ => (T::zero(), T::zero()),
        }
    }
}

impl<T: Real> Deref for SymmetricMatrix<T> {
    type Target = DMatrix<T>;
    fn deref(&self) -> &DMatrix<T> {
        &self.0
    }
}

/// Symmetric matrix with min eigenvalue ≥ −[`PSD_EPS`]·(1 + max eigenvalue).
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix<T: Real>(SymmetricMatrix<T>);

impl<T: Real> PsdMatrix<T> {
    pub fn new(m: DMatrix<T>) -> Result<Self> {
        Self::from_symmetric(SymmetricMatrix::new(m)?)
    }

    pub fn from_symmetric(s: SymmetricMatrix<T>) -> Result<Self> {
        let (lo, hi) = s.eigen_range();
        let floor = -lit::<T>(PSD_EPS) * (T::one() + hi.abs());
        if lo < floor {
            return Err(Error::NotPositiveDefinite(format!(
                "min eigenvalue {:.3e} below PSD floor {:.3e}",
                to_f64(lo),
                to_f64(floor)
            )));
        }
        Ok(Self(s))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(SymmetricMatrix::zeros(dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(SymmetricMatrix::identity(dim))
    }

    /// Diagonal PSD matrix; fails on a negative entry.
    pub fn from_diagonal(diag: &[T]) -> Result<Self> {
        Self::from_symmetric(SymmetricMatrix::from_diagonal(diag))
    }

    pub fn symmetric(&self) -> &SymmetricMatrix<T> {
        &self.0
    }

    pub fn as_matrix(&self) -> &DMatrix<T> {
        self.0.as_matrix()
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.0.into_inner()
    }

    /// Strict positive definiteness: min eigenvalue > `rel`·max eigenvalue.
    pub fn is_positive_definite(&self, rel: T) -> bool {
        let (lo, hi) = self.0.eigen_range();
        lo > T::zero() && lo > rel * hi
    }
}

impl<T: Real> Deref for PsdMatrix<T> {
    type Target = DMatrix<T>;
    fn deref(&self) -> &DMatrix<T> {
        &self.0
    }
}

/// Minimum eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(T::max_value().unwrap_or(T::one()), |a, b| a.min(b))
}

/// PSD-ordering check `lower ⪯ upper`.
///
/// Returns the minimum eigenvalue of `upper − lower` and whether it clears
/// `−floor·(1 + ‖upper − lower‖_∞)`.
pub fn psd_leq<T: Real>(lower: &DMatrix<T>, upper: &DMatrix<T>, floor: T) -> (bool, T) {
    let diff = upper - lower;
    let lo = min_eigenvalue(&diff);
    (lo >= -floor * (T::one() + max_abs(&diff)), lo)
}

/// Gram-orthonormal coordinates: a factor `T` with `TᵀT = G`.
///
/// Coefficient vectors `a` map to orthonormal coordinates `T a`, so that
/// `⟨a, b⟩_G = (T a)·(T b)`.
#[derive(Debug, Clone)]
pub struct CoordinateMap<T: Real> {
    gram: PsdMatrix<T>,
    factor: DMatrix<T>,
}

impl<T: Real> CoordinateMap<T> {
    pub fn gram(&self) -> &PsdMatrix<T> {
        &self.gram
    }

    /// Upper-triangular factor `T` with positive diagonal.
    pub fn factor(&self) -> &DMatrix<T> {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// `T a`.
    pub fn to_orthonormal(&self, coeffs: &DVector<T>) -> DVector<T> {
        &self.factor * coeffs
    }

    /// `T⁻¹ x`.
    pub fn to_physical(&self, x: &DVector<T>) -> DVector<T> {
        self.factor
            .solve_upper_triangular(x)
            .expect("factor has positive diagonal")
    }

    /// `T⁻¹` as a dense matrix.
    pub fn factor_inverse(&self) -> DMatrix<T> {
        let n = self.dim();
        self.factor
            .solve_upper_triangular(&DMatrix::identity(n, n))
            .expect("factor has positive diagonal")
    }

    /// Physical inner product `aᵀ G b`.
    pub fn inner(&self, a: &DVector<T>, b: &DVector<T>) -> T {
        (self.gram.deref() * b).dot(a)
    }

    /// Expresses an operator given in coefficient form in orthonormal
    /// coordinates: `T M T⁻¹`.
    pub fn conjugate(&self, m: &DMatrix<T>) -> DMatrix<T> {
        &self.factor * m * self.factor_inverse()
    }
}

/// Cholesky-type factorization of a Gram matrix.
pub fn gram_orthonormalize<T: Real>(gram: &PsdMatrix<T>) -> Result<CoordinateMap<T>> {
    if !gram.is_positive_definite(lit(1e-12)) {
        return Err(Error::NotPositiveDefinite(
            "Gram matrix must be strictly positive definite".into(),
        ));
    }
    let chol = Cholesky::new(gram.deref().clone())
        .ok_or_else(|| Error::NotPositiveDefinite("non-positive Cholesky pivot".into()))?;
    let factor = chol.l().transpose();
    Ok(CoordinateMap {
        gram: gram.clone(),
        factor,
    })
}

/// The pair `(Π, Π_s)`: `Π` maps orthonormal fine coordinates to orthonormal
/// coarse coordinates, `Π_s = ΠᵀΠ` is the orthogonal projector in the fine
/// space, and `ΠΠᵀ = I`.
#[derive(Debug, Clone)]
pub struct ProjectionPair<T: Real> {
    pi: DMatrix<T>,
    pi_s: DMatrix<T>,
}

impl<T: Real> ProjectionPair<T> {
    /// Builds the pair from a matrix with orthonormal rows.
    pub fn from_rows(pi: DMatrix<T>) -> Result<Self> {
        if pi.nrows() > pi.ncols() {
            return Err(Error::Dimension(format!(
                "projection has more rows ({}) than columns ({})",
                pi.nrows(),
                pi.ncols()
            )));
        }
        let gram = &pi * pi.transpose();
        let err = max_abs(&(gram - DMatrix::identity(pi.nrows(), pi.nrows())));
        if err > lit(PROJECTION_TOL) {
            return Err(Error::InvalidParameter(format!(
                "projection rows are not orthonormal (deviation {:.3e})",
                to_f64(err)
            )));
        }
        let pi_s = symmetrize(&(pi.transpose() * &pi));
        Ok(Self { pi, pi_s })
    }

    /// The trivial pair `Π = I`.
    pub fn identity(dim: usize) -> Self {
        Self {
            pi: DMatrix::identity(dim, dim),
            pi_s: DMatrix::identity(dim, dim),
        }
    }

    pub fn pi(&self) -> &DMatrix<T> {
        &self.pi
    }

    pub fn pi_adjoint(&self) -> DMatrix<T> {
        self.pi.transpose()
    }

    pub fn pi_s(&self) -> &DMatrix<T> {
        &self.pi_s
    }

    /// `I − Π_s`.
    pub fn complement(&self) -> DMatrix<T> {
        DMatrix::identity(self.fine_dim(), self.fine_dim()) - &self.pi_s
    }

    pub fn coarse_dim(&self) -> usize {
        self.pi.nrows()
    }

    pub fn fine_dim(&self) -> usize {
        self.pi.ncols()
    }

    /// Largest deviations `(‖ΠΠᵀ − I‖, ‖Π_s² − Π_s‖, ‖Π_s − Π_sᵀ‖)`.
    pub fn residuals(&self) -> (T, T, T) {
        let nc = self.coarse_dim();
        let a = max_abs(&(&self.pi * self.pi.transpose() - DMatrix::identity(nc, nc)));
        let b = max_abs(&(&self.pi_s * &self.pi_s - &self.pi_s));
        let c = max_abs(&(&self.pi_s - self.pi_s.transpose()));
        (a, b, c)
    }
}

/// Orthogonal projection onto the range of `embedding`, with the coarse
/// coordinates chosen orthonormal.
///
/// `embedding` maps coarse coefficients to fine coefficients. In orthonormal
/// fine coordinates the subspace is `range(T E)`; the thin QR `T E = Q R`
/// with positive diagonal gives `Π = Qᵀ`, i.e. the coarse coordinates are the
/// Gram-orthonormalized coarse coefficients `R a`.
pub fn orthogonal_projection<T: Real>(
    embedding: &DMatrix<T>,
    fine_map: &CoordinateMap<T>,
) -> Result<ProjectionPair<T>> {
    if embedding.nrows() != fine_map.dim() {
        return Err(Error::Dimension(format!(
            "embedding has {} rows, fine space has dimension {}",
            embedding.nrows(),
            fine_map.dim()
        )));
    }
    if embedding.ncols() > embedding.nrows() {
        return Err(Error::Dimension("coarse dimension exceeds fine dimension".into()));
    }
    let w = fine_map.factor() * embedding;
    let qr = QR::new(w);
    let r = qr.r();
    let mut q = qr.q();
    let scale = r.diagonal().iter().fold(T::zero(), |m, v| m.max(v.abs()));
    for j in 0..r.ncols() {
        let d = r[(j, j)];
        if d.abs() <= lit::<T>(1e-10) * scale {
            return Err(Error::RankDeficient {
                pivot: to_f64(d.abs()),
                scale: to_f64(scale),
            });
        }
        if d < T::zero() {
            q.column_mut(j).neg_mut();
        }
    }
    ProjectionPair::from_rows(q.transpose())
}

/// Moore–Penrose pseudoinverse of a symmetric matrix by truncated
/// eigendecomposition: eigenvalues with `|λ| ≤ rel_tol·max|λ|` are dropped.
pub fn pseudoinverse<T: Real>(m: &SymmetricMatrix<T>, rel_tol: T) -> SymmetricMatrix<T> {
    let n = m.dim();
    if n == 0 {
        return SymmetricMatrix::zeros(0);
    }
    let eig = m.as_matrix().clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    if lmax == T::zero() {
        return SymmetricMatrix::zeros(n);
    }
    let cut = rel_tol * lmax;
    let mut scaled = eig.eigenvectors.clone();
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let inv = if lam.abs() > cut { T::one() / *lam } else { T::zero() };
        scaled.column_mut(j).scale_mut(inv);
    }
    SymmetricMatrix(symmetrize(&(scaled * eig.eigenvectors.transpose())))
}

/// Largest eigenvalue modulus, from the real Schur form.
pub fn spectral_radius<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| (z.re * z.re + z.im * z.im).sqrt())
        .fold(T::zero(), |a, b| a.max(b))
}

/// Spectral norm (largest singular value), via the smaller Gram matrix.
pub fn op_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    let g = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    let lmax = symmetrize(&g)
        .symmetric_eigenvalues()
        .iter()
        .fold(T::zero(), |a, v| a.max(*v));
    lmax.max(T::zero()).sqrt()
}

/// Operator norm of `t` between weighted spaces: the largest singular value
/// of `T_r t T_d⁻¹`, with `T_d`, `T_r` the factors of the two Gram matrices.
pub fn weighted_operator_norm<T: Real>(
    t: &DMatrix<T>,
    gram_domain: &PsdMatrix<T>,
    gram_range: &PsdMatrix<T>,
) -> Result<T> {
    let dom = gram_orthonormalize(gram_domain)?;
    let ran = gram_orthonormalize(gram_range)?;
    if t.ncols() != dom.dim() || t.nrows() != ran.dim() {
        return Err(Error::Dimension("operator does not match Gram dimensions".into()));
    }
    let weighted = ran.factor() * t * dom.factor_inverse();
    Ok(weighted.singular_values().iter().fold(T::zero(), |a, v| a.max(*v)))
}

pub fn trace<T: Real>(m: &DMatrix<T>) -> T {
    m.trace()
}

/// Hilbert–Schmidt (Frobenius) norm.
pub fn hs_norm<T: Real>(m: &DMatrix<T>) -> T {
    m.norm()
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let chol =
        Cholesky::new(symmetrize(m)).ok_or_else(|| Error::NotPositiveDefinite("matrix to invert is not SPD".into()))?;
    Ok(symmetrize(&chol.inverse()))
}

/// A factor `L` with `L Lᵀ = m` for a PSD matrix (Cholesky when definite,
/// clipped eigendecomposition otherwise).
pub fn psd_factor<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if let Some(chol) = Cholesky::new(symmetrize(m)) {
        return chol.l();
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut f = eig.eigenvectors;
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        f.column_mut(j).scale_mut(lam.max(T::zero()).sqrt());
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    macro_rules! assert_close {
        ($a:expr, $b:expr, $tol:expr) => {{
            let (a, b): (f64, f64) = ($a, $b);
            assert!((a - b).abs() <= $tol, "{} != {} (tol {})", a, b, $tol);
        }};
    }

    fn mat(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn identity_gram_gives_identity_factor() {
        let map = gram_orthonormalize(&PsdMatrix::<f64>::identity(3)).unwrap();
        assert_eq!(map.factor(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn diagonal_gram_gives_square_roots() {
        let g = PsdMatrix::from_diagonal(&[4.0, 9.0]).unwrap();
        let map = gram_orthonormalize(&g).unwrap();
        assert!((map.factor() - mat(2, 2, &[2.0, 0.0, 0.0, 3.0])).abs().max() < 1e-15);
    }

    #[test]
    fn singular_gram_is_rejected() {
        let g = PsdMatrix::new(mat(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert!(matches!(gram_orthonormalize(&g), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn coordinate_map_preserves_inner_product() {
        let g = PsdMatrix::new(mat(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0])).unwrap();
        let map = gram_orthonormalize(&g).unwrap();
        let a = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let b = DVector::from_vec(vec![0.3, 0.7, -1.1]);
        let lhs = map.inner(&a, &b);
        let rhs = map.to_orthonormal(&a).dot(&map.to_orthonormal(&b));
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        let back = map.to_physical(&map.to_orthonormal(&a));
        assert!((back - a).amax() < 1e-14);
    }

    #[test]
    fn full_embedding_gives_square_orthogonal_pi() {
        let g = PsdMatrix::new(mat(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let map = gram_orthonormalize(&g).unwrap();
        let pair = orthogonal_projection(&DMatrix::identity(2, 2), &map).unwrap();
        assert!((pair.pi_s() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        assert!((pair.pi().transpose() * pair.pi() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn axis_aligned_subspace() {
        let map = gram_orthonormalize(&PsdMatrix::<f64>::identity(4)).unwrap();
        let e = DMatrix::identity(4, 2);
        let pair = orthogonal_projection(&e, &map).unwrap();
        assert!((pair.pi() - DMatrix::<f64>::identity(2, 4)).amax() < 1e-15);
        let mut expect = DMatrix::zeros(4, 4);
        expect[(0, 0)] = 1.0;
        expect[(1, 1)] = 1.0;
        assert!((pair.pi_s() - expect).amax() < 1e-15);
    }

    #[test]
    fn dependent_embedding_is_rank_deficient() {
        let map = gram_orthonormalize(&PsdMatrix::<f64>::identity(3)).unwrap();
        let e = mat(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(
            orthogonal_projection(&e, &map),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn pseudoinverse_examples() {
        let id = SymmetricMatrix::<f64>::identity(3);
        assert_eq!(pseudoinverse(&id, 1e-12).as_matrix(), id.as_matrix());
        let d = SymmetricMatrix::from_diagonal(&[2.0, 0.0]);
        let p = pseudoinverse(&d, 1e-12);
        assert!((p.as_matrix() - mat(2, 2, &[0.5, 0.0, 0.0, 0.0])).amax() < 1e-15);
        let z = SymmetricMatrix::<f64>::zeros(3);
        assert_eq!(pseudoinverse(&z, 1e-12).as_matrix(), z.as_matrix());
    }

    #[test]
    fn rank_two_pseudoinverse_identities() {
        let g = mat(4, 2, &[1.0, 0.2, -0.4, 1.3, 0.7, -0.5, 0.1, 0.9]);
        let m = SymmetricMatrix::new(&g * g.transpose()).unwrap();
        let p = pseudoinverse(&m, 1e-12);
        let (m, p) = (m.as_matrix(), p.as_matrix());
        assert!((m * p * m - m).amax() < 1e-8);
        assert!((p * m * p - p).amax() < 1e-8);
        assert!(((m * p).transpose() - m * p).amax() < 1e-8);
    }

    #[test]
    fn spectral_radius_examples() {
        assert_close!(spectral_radius(&mat(2, 2, &[0.0, 1.0, 0.0, 0.0])), 0.0, 1e-15);
        assert_close!(spectral_radius(&mat(2, 2, &[0.5, 0.0, 0.0, -0.9])), 0.9, 1e-15);
        // rotation scaled by 0.8 has a complex pair of modulus 0.8
        let (c, s) = (0.6 * 0.8, 0.8 * 0.8);
        assert_close!(spectral_radius(&mat(2, 2, &[c, -s, s, c])), 0.8, 1e-14);
    }

    #[test]
    fn weighted_norm_examples() {
        let g = PsdMatrix::new(mat(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let one = weighted_operator_norm(&DMatrix::identity(2, 2), &g, &g).unwrap();
        assert_close!(one, 1.0, 1e-12);
        let zero = weighted_operator_norm(&DMatrix::zeros(2, 2), &g, &g).unwrap();
        assert_close!(zero, 0.0, 0.0);
    }

    #[test]
    fn trace_and_hs_norm() {
        let d = mat(3, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0]);
        assert_close!(trace(&d), 6.0, 0.0);
        assert_close!(hs_norm(&d), 14f64.sqrt(), 1e-15);
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!((trace(&z), hs_norm(&z)), (0.0, 0.0));
    }

    #[test]
    fn psd_wrapper_rejects_indefinite() {
        assert!(PsdMatrix::new(mat(2, 2, &[1.0, 0.0, 0.0, -1e-3])).is_err());
        assert!(PsdMatrix::new(mat(2, 2, &[1.0, 0.0, 0.0, -1e-13])).is_ok());
        assert!(SymmetricMatrix::new(DMatrix::<f64>::zeros(2, 3)).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let g = PsdMatrix::<f32>::from_diagonal(&[4.0, 9.0]).unwrap();
        let map = gram_orthonormalize(&g).unwrap();
        assert!((map.factor()[(1, 1)] - 3.0).abs() < 1e-6);
        let p = pseudoinverse(&SymmetricMatrix::<f32>::from_diagonal(&[2.0, 0.0]), 1e-6);
        assert!((p[(0, 0)] - 0.5).abs() < 1e-6);
    }
}
