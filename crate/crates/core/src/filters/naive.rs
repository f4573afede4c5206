use nalgebra::DVector;

use super::full::{full_kf_offline, full_kf_step, FullKfSchedule};
use super::{OnlineFilter, Storage};
use crate::error::{Error, Result};
use crate::lgss::LgssModel;
use crate::linalg::{symmetrize, ProjectionPair, PsdMatrix};
use crate::scalar::Real;

/// The model restricted to the coarse space:
/// `(ΠAΠᵀ, ΠB, CΠᵀ, U, R, ΠS₀Πᵀ, Πm)`.
pub fn projected_model<T: Real>(model: &LgssModel<T>, projection: &ProjectionPair<T>) -> Result<LgssModel<T>> {
    if projection.fine_dim() != model.state_dim() {
        return Err(Error::Dimension(
            "projection does not match the model state space".into(),
        ));
    }
    let pi = projection.pi();
    let pt = projection.pi_adjoint();
    LgssModel::new(
        pi * &model.a * &pt,
        pi * &model.b,
        &model.c * &pt,
        model.u_cov.clone(),
        model.r_cov.clone(),
        pi * &model.mean0,
        PsdMatrix::new(symmetrize(&(pi * model.s0.as_matrix() * &pt)))?,
    )
}

/// Kalman filter of the projected model. Its covariances are nominal: they
/// describe the projected model, not the error against the true state.
pub fn naive_coarse_offline<T: Real>(
    model: &LgssModel<T>,
    projection: &ProjectionPair<T>,
    horizon: usize,
    storage: Storage,
) -> Result<FullKfSchedule<T>> {
    full_kf_offline(&projected_model(model, projection)?, horizon, storage)
}

/// Naive coarse filter with its estimates lifted by `Πᵀ`.
#[derive(Debug, Clone)]
pub struct NaiveFilter<T: Real> {
    pub projection: ProjectionPair<T>,
    pub schedule: FullKfSchedule<T>,
}

impl<T: Real> NaiveFilter<T> {
    pub fn new(model: &LgssModel<T>, projection: &ProjectionPair<T>, horizon: usize) -> Result<Self> {
        Ok(Self {
            projection: projection.clone(),
            schedule: naive_coarse_offline(model, projection, horizon, Storage::Compact)?,
        })
    }
}

impl<T: Real> OnlineFilter<T> for NaiveFilter<T> {
    fn name(&self) -> &str {
        "naive"
    }

    fn horizon(&self) -> usize {
        self.schedule.horizon()
    }

    fn initial(&self) -> DVector<T> {
        self.schedule.initial_estimate()
    }

    fn step(&self, k: usize, prev: &DVector<T>, y: &DVector<T>) -> DVector<T> {
        full_kf_step(&self.schedule, k, prev, y)
    }

    fn fine_estimate(&self, _k: usize, state: &DVector<T>) -> DVector<T> {
        self.projection.pi().tr_mul(state)
    }
}
