//! Brute-force conditioning oracles for the filters.
//!
//! Every quantity is computed from the joint Gaussian of states and outputs,
//! independently of the Riccati recursions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filters::ReducedGainSchedule;
use crate::lgss::{build_joint, condition, condition_two_stage, JointGaussian, LgssModel};
use crate::linalg::PsdMatrix;
use crate::scalar::Real;

fn stack<T: Real>(parts: &[DVector<T>]) -> DVector<T> {
    let len = parts.iter().map(|v| v.len()).sum();
    let mut out = DVector::zeros(len);
    let mut at = 0;
    for v in parts {
        out.rows_mut(at, v.len()).copy_from(v);
        at += v.len();
    }
    out
}

fn output_names(k: usize) -> Vec<String> {
    (1..=k).map(|j| format!("y{j}")).collect()
}

/// `E[x_K | y_1..y_K]` and its error covariance, `K = outputs.len()`.
pub fn full_conditional<T: Real>(model: &LgssModel<T>, outputs: &[DVector<T>]) -> Result<(DVector<T>, PsdMatrix<T>)> {
    let k = outputs.len();
    let joint = build_joint(model, k)?;
    let names = output_names(k);
    let given: Vec<&str> = names.iter().map(String::as_str).collect();
    condition(&joint, "x", &given, &stack(outputs))
}

/// Joint of `[x_k, x̃_{k-1}, y_k]` (blocks `x`, `xt`, `y`), with `x̃_{k-1}`
/// written as the affine function of `y_1..y_{k-1}` the schedule implements.
pub fn reduced_joint<T: Real>(
    model: &LgssModel<T>,
    schedule: &ReducedGainSchedule<T>,
    k: usize,
) -> Result<JointGaussian<T>> {
    if k == 0 || k > schedule.horizon() {
        return Err(Error::InvalidParameter(format!("step {k} outside schedule")));
    }
    let n = model.state_dim();
    let p = model.output_dim();
    let nc = schedule.projection().coarse_dim();
    let pi = schedule.projection().pi();
    let joint = build_joint(model, k)?;

    // x̃_j − Πμ_j = L_j (Y − E Y) over Y = [y_1..y_k]
    let mut l = DMatrix::<T>::zeros(nc, k * p);
    for j in 1..k {
        let st = schedule.step(j);
        let f = &st.coarse_transition - &st.coarse_gain * &st.output_transition;
        let mut next = &f * &l;
        let mut block = next.view_mut((0, (j - 1) * p), (nc, p));
        block += &st.coarse_gain;
        l = next;
    }

    let dim = n + k * p;
    let mut map = DMatrix::<T>::zeros(n + nc + p, dim);
    map.view_mut((0, 0), (n, n)).fill_with_identity();
    map.view_mut((n, n), (nc, k * p)).copy_from(&l);
    map.view_mut((n + nc, n + (k - 1) * p), (p, p)).fill_with_identity();
    let mean_y = joint.mean.rows(n, k * p).into_owned();
    let mut shift = DVector::<T>::zeros(n + nc + p);
    shift
        .rows_mut(n, nc)
        .copy_from(&(pi * schedule.mean(k - 1) - &l * mean_y));
    joint.affine(&map, &shift, &[("x", n), ("xt", nc), ("y", p)])
}

/// `Π E[x_k | x̃_{k-1}, y_k]` through the two-stage conditioning formula.
pub fn reduced_conditional<T: Real>(
    model: &LgssModel<T>,
    schedule: &ReducedGainSchedule<T>,
    k: usize,
    prev: &DVector<T>,
    y: &DVector<T>,
) -> Result<DVector<T>> {
    let joint = reduced_joint(model, schedule, k)?;
    let two = condition_two_stage(&joint, "x", &["xt"], &["y"], prev, y)?;
    Ok(schedule.projection().pi() * two.mean)
}
