//! Random model instances for property tests and cross-checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::Result;
use crate::lgss::LgssModel;
use crate::linalg::{spectral_radius, symmetrize, ProjectionPair, PsdMatrix};

/// Dimensions of a random model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub state: usize,
    pub input: usize,
    pub output: usize,
}

impl Dims {
    /// State in `1..=max_state`, input in `1..=state`, output in `1..=max_output`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, max_state: usize, max_output: usize) -> Self {
        let state = rng.random_range(1..=max_state);
        Self {
            state,
            input: rng.random_range(1..=state),
            output: rng.random_range(1..=max_output),
        }
    }
}

/// Matrix with independent standard normal entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

/// `G Gᵀ / rank` with `G` of size `n × rank`.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, n: usize, rank: usize) -> PsdMatrix<f64> {
    let g = gaussian_matrix(rng, n, rank);
    let scale = rank.max(1) as f64;
    PsdMatrix::new(symmetrize(&(&g * g.transpose() / scale))).expect("Gram matrix is PSD")
}

/// A PSD matrix bounded below by `floor·I`.
pub fn random_pd<R: Rng + ?Sized>(rng: &mut R, n: usize, floor: f64) -> PsdMatrix<f64> {
    let m = random_psd(rng, n, n).into_inner() + DMatrix::identity(n, n) * floor;
    PsdMatrix::new(m).expect("shifted Gram matrix is PSD")
}

/// Gaussian matrix rescaled to spectral radius `radius`.
pub fn random_stable<R: Rng + ?Sized>(rng: &mut R, n: usize, radius: f64) -> DMatrix<f64> {
    let a = gaussian_matrix(rng, n, n);
    let rho = spectral_radius(&a);
    if rho > 0.0 {
        a * (radius / rho)
    } else {
        a
    }
}

/// Model with spectral radius of `A` drawn from `[0.3, max_radius]`, a
/// random nonzero mean and a random rank-deficient `S₀`.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, dims: Dims, max_radius: f64) -> Result<LgssModel<f64>> {
    let radius = Uniform::new_inclusive(0.3, max_radius.max(0.3))
        .expect("valid range")
        .sample(rng);
    let a = random_stable(rng, dims.state, radius);
    let b = gaussian_matrix(rng, dims.state, dims.input);
    let c = gaussian_matrix(rng, dims.output, dims.state);
    let u = random_pd(rng, dims.input, 0.1);
    let r = random_pd(rng, dims.output, 0.2);
    let mean0 = gaussian_vector(rng, dims.state);
    let s0_rank = rng.random_range(0..=dims.state);
    let s0 = random_psd(rng, dims.state, s0_rank);
    LgssModel::new(a, b, c, u, r, mean0, s0)
}

/// Projection onto a random `coarse`-dimensional subspace.
pub fn random_projection<R: Rng + ?Sized>(rng: &mut R, fine: usize, coarse: usize) -> Result<ProjectionPair<f64>> {
    let q = gaussian_matrix(rng, fine, coarse).qr().q();
    ProjectionPair::from_rows(q.columns(0, coarse).transpose())
}
