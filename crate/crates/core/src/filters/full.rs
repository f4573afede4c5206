use nalgebra::{DMatrix, DVector};

use super::{OnlineFilter, Storage};
use crate::error::{Error, Result};
use crate::lgss::LgssModel;
use crate::riccati::{rde_step, RdeState};
use crate::scalar::Real;

/// Offline quantities of one full-filter step.
#[derive(Debug, Clone)]
pub struct FullStep<T: Real> {
    pub gain: DMatrix<T>,
    pub tr_p: T,
    pub tr_pred: T,
    pub gain_norm: T,
}

/// Gains `K_k` and covariances `P̃_k`, `P_k` of the full Kalman filter.
#[derive(Debug, Clone)]
pub struct FullKfSchedule<T: Real> {
    a: DMatrix<T>,
    c: DMatrix<T>,
    mean0: DVector<T>,
    steps: Vec<FullStep<T>>,
    /// `(P̃_k, P_k)` for `k = 0..=horizon` under [`Storage::Full`].
    covs: Option<Vec<(DMatrix<T>, DMatrix<T>)>>,
    last: RdeState<T>,
}

impl<T: Real> FullKfSchedule<T> {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Step `k ≥ 1`.
    pub fn step(&self, k: usize) -> &FullStep<T> {
        &self.steps[k - 1]
    }

    pub fn steps(&self) -> &[FullStep<T>] {
        &self.steps
    }

    pub fn gain(&self, k: usize) -> &DMatrix<T> {
        &self.steps[k - 1].gain
    }

    /// `P_k`, when stored.
    pub fn cov(&self, k: usize) -> Option<&DMatrix<T>> {
        self.covs.as_ref().map(|c| &c[k].1)
    }

    /// `P̃_k`, when stored.
    pub fn pred_cov(&self, k: usize) -> Option<&DMatrix<T>> {
        self.covs.as_ref().map(|c| &c[k].0)
    }

    /// Covariances at the last step.
    pub fn last(&self) -> &RdeState<T> {
        &self.last
    }

    pub fn initial_estimate(&self) -> DVector<T> {
        self.mean0.clone()
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
}

/// Runs the Riccati difference equation from `P_0 = S₀` for `horizon` steps.
pub fn full_kf_offline<T: Real>(model: &LgssModel<T>, horizon: usize, storage: Storage) -> Result<FullKfSchedule<T>> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let w = model.process_noise();
    let r = model.r_cov.as_matrix();
    let mut state = RdeState::initial(model.s0.as_matrix().clone(), model.output_dim());
    let mut steps = Vec::with_capacity(horizon);
    let mut covs = (storage == Storage::Full).then(|| vec![(state.p_pred.clone(), state.p.clone())]);
    for _ in 0..horizon {
        state = rde_step(&state, &model.a, &w, &model.c, r)?;
        steps.push(FullStep {
            gain: state.gain.clone(),
            tr_p: state.p.trace(),
            tr_pred: state.p_pred.trace(),
            gain_norm: state.gain.norm(),
        });
        if let Some(c) = covs.as_mut() {
            c.push((state.p_pred.clone(), state.p.clone()));
        }
    }
    Ok(FullKfSchedule {
        a: model.a.clone(),
        c: model.c.clone(),
        mean0: model.mean0.clone(),
        steps,
        covs,
        last: state,
    })
}

/// `x̂_k = A x̂_{k-1} + K_k (y_k − C A x̂_{k-1})`.
pub fn full_kf_step<T: Real>(schedule: &FullKfSchedule<T>, k: usize, prev: &DVector<T>, y: &DVector<T>) -> DVector<T> {
    let pred = &schedule.a * prev;
    let innov = y - &schedule.c * &pred;
    pred + schedule.gain(k) * innov
}

impl<T: Real> OnlineFilter<T> for FullKfSchedule<T> {
    fn name(&self) -> &str {
        "full"
    }

    fn horizon(&self) -> usize {
        self.steps.len()
    }

    fn initial(&self) -> DVector<T> {
        self.initial_estimate()
    }

    fn step(&self, k: usize, prev: &DVector<T>, y: &DVector<T>) -> DVector<T> {
        full_kf_step(self, k, prev, y)
    }

    fn fine_estimate(&self, _k: usize, state: &DVector<T>) -> DVector<T> {
        state.clone()
    }
}
