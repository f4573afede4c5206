//! Estimators: the full-state Kalman filter, the optimal reduced-order
//! filter, a naive filter on the projected model and the approximate
//! stationary reduced filter.
//!
//! Each filter splits into an offline part (gain schedules, computed once and
//! immutable) and an online step that maps the previous estimate and the new
//! output to the next estimate.

mod full;
mod naive;
mod reduced;
mod stationary;

use nalgebra::DVector;
use serde::Serialize;

use crate::scalar::{to_f64, Real};

pub use full::{full_kf_offline, full_kf_step, FullKfSchedule, FullStep};
pub use naive::{naive_coarse_offline, projected_model, NaiveFilter};
pub use reduced::{
    lift, reduced_offline, reduced_step, ReducedCovariances, ReducedGainSchedule, ReducedRecursion, ReducedStep,
};
pub use stationary::{approx_stationary_filter, StationaryFilter, StationaryOptions};

/// Whether a schedule keeps every per-step covariance or only the final one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Storage {
    /// Gains, lifts, traces and the last covariances.
    Compact,
    /// Additionally every covariance matrix (memory grows as `horizon·n²`).
    Full,
}

/// A filter that can be run online on an output sequence.
///
/// States are vectors in the filter's own coordinates; [`fine_estimate`]
/// maps them to the fine state space.
///
/// [`fine_estimate`]: OnlineFilter::fine_estimate
pub trait OnlineFilter<T: Real>: Sync {
    fn name(&self) -> &str;
    /// Number of steps the filter can be run for.
    fn horizon(&self) -> usize;
    fn initial(&self) -> DVector<T>;
    fn step(&self, k: usize, prev: &DVector<T>, y: &DVector<T>) -> DVector<T>;
    fn fine_estimate(&self, k: usize, state: &DVector<T>) -> DVector<T>;
}

/// One row of a schedule trace export.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub k: usize,
    pub tr_s: f64,
    pub tr_p_reduced: f64,
    pub tr_p_full: f64,
    pub tr_m: f64,
    pub gain_norm_reduced: f64,
    pub gain_norm_full: f64,
}

/// Per-step traces of a reduced and a full schedule over their common range.
pub fn trace_rows<T: Real>(reduced: &ReducedGainSchedule<T>, full: &FullKfSchedule<T>) -> Vec<TraceRow> {
    let horizon = reduced.horizon().min(full.horizon());
    (1..=horizon)
        .map(|k| {
            let r = reduced.step(k);
            let f = full.step(k);
            TraceRow {
                k,
                tr_s: to_f64(r.tr_s),
                tr_p_reduced: to_f64(r.tr_p),
                tr_p_full: to_f64(f.tr_p),
                tr_m: to_f64(r.tr_m),
                gain_norm_reduced: to_f64(r.gain_norm),
                gain_norm_full: to_f64(f.gain_norm),
            }
        })
        .collect()
}
