//! Approximate stationary reduced filter.
//!
//! The lift is frozen at the static reconstruction `Q̂ = Πᵀ + (I−Π_s)SΠᵀ(ΠSΠᵀ)⁺`
//! from the stationary state covariance `S`, and the unresolved part
//! `x − Q̂Πx ~ N(0, V̂)` is treated as extra white process noise in a coarse
//! algebraic Riccati equation.

use nalgebra::{DMatrix, DVector};

use super::OnlineFilter;
use crate::error::Result;
use crate::lgss::LgssModel;
use crate::linalg::{pseudoinverse, symmetrize, ProjectionPair, SymmetricMatrix, PINV_REL_TOL};
use crate::riccati::{dare_solve, lyapunov_solve, DareSolution};
use crate::scalar::{lit, Real};

/// Tolerances of [`approx_stationary_filter`].
#[derive(Debug, Clone, Copy)]
pub struct StationaryOptions<T> {
    /// Residual tolerance of the Lyapunov solve.
    pub lyapunov_tol: T,
    /// Cauchy tolerance of the coarse DARE.
    pub dare_tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for StationaryOptions<T> {
    fn default() -> Self {
        Self {
            lyapunov_tol: lit(1e-12),
            dare_tol: lit(1e-12),
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StationaryFilter<T: Real> {
    pub projection: ProjectionPair<T>,
    /// Stationary state covariance `S_∞`.
    pub s_inf: DMatrix<T>,
    /// `Q̂_∞`.
    pub q_hat: DMatrix<T>,
    /// `V̂_∞`.
    pub v_hat: DMatrix<T>,
    /// `Π A Q̂_∞`.
    pub coarse_transition: DMatrix<T>,
    /// `C Q̂_∞`.
    pub coarse_output: DMatrix<T>,
    /// Coarse DARE solution; its gain is the stationary coarse gain.
    pub dare: DareSolution<T>,
    pub initial: DVector<T>,
    horizon: usize,
}

impl<T: Real> StationaryFilter<T> {
    pub fn gain(&self) -> &DMatrix<T> {
        &self.dare.gain
    }

    /// Allows online use for `horizon` steps.
    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }
}

/// Builds `Q̂_∞`, `V̂_∞` from the Lyapunov fixed point and solves
/// `P̃ = ΠAQ̂PQ̂ᵀAᵀΠᵀ + ΠBUBᵀΠᵀ + ΠAV̂AᵀΠᵀ`,
/// `P = P̃ − P̃Q̂ᵀCᵀ(CQ̂P̃Q̂ᵀCᵀ+R)⁻¹CQ̂P̃`.
pub fn approx_stationary_filter<T: Real>(
    model: &LgssModel<T>,
    projection: &ProjectionPair<T>,
    opts: StationaryOptions<T>,
) -> Result<StationaryFilter<T>> {
    let w = model.process_noise();
    let s_inf = lyapunov_solve(&model.a, &w, opts.lyapunov_tol, opts.max_iter.min(200))?;
    let pi = projection.pi();
    let pt = projection.pi_adjoint();
    let comp = projection.complement();
    let s_pt = &s_inf * &pt;
    let coarse = SymmetricMatrix::new(pi * &s_pt)?;
    let coarse_pinv = pseudoinverse(&coarse, lit(PINV_REL_TOL));
    let cs = &comp * &s_pt;
    let q_hat = &pt + &cs * coarse_pinv.as_matrix();
    let v_hat = symmetrize(&(&comp * &s_inf * &comp - &cs * coarse_pinv.as_matrix() * cs.transpose()));

    let a_c = pi * &model.a * &q_hat;
    let pa = pi * &model.a;
    let w_c = symmetrize(&(pi * &w * &pt + &pa * &v_hat * pa.transpose()));
    let c_c = &model.c * &q_hat;
    let nc = projection.coarse_dim();
    let dare = dare_solve(
        &a_c,
        &w_c,
        &c_c,
        model.r_cov.as_matrix(),
        &DMatrix::zeros(nc, nc),
        opts.dare_tol,
        opts.max_iter,
    )?;
    Ok(StationaryFilter {
        projection: projection.clone(),
        initial: pi * &model.mean0,
        s_inf,
        q_hat,
        v_hat,
        coarse_transition: a_c,
        coarse_output: c_c,
        dare,
        horizon: usize::MAX,
    })
}

impl<T: Real> OnlineFilter<T> for StationaryFilter<T> {
    fn name(&self) -> &str {
        "stationary"
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn initial(&self) -> DVector<T> {
        self.initial.clone()
    }

    /// `x̃_k = ΠAQ̂ x̃_{k-1} + K (y_k − CQ̂ ΠAQ̂ x̃_{k-1})`.
    fn step(&self, _k: usize, prev: &DVector<T>, y: &DVector<T>) -> DVector<T> {
        let pred = &self.coarse_transition * prev;
        let innov = y - &self.coarse_output * &pred;
        pred + &self.dare.gain * innov
    }

    fn fine_estimate(&self, _k: usize, state: &DVector<T>) -> DVector<T> {
        &self.q_hat * state
    }
}
