//! Lyapunov and Riccati recursions, DARE fixed-point solving, the
//! discretization load bound and the stationary reduced/full discrepancy.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::filters::{ReducedGainSchedule, ReducedRecursion};
use crate::lgss::LgssModel;
use crate::linalg::{
    max_abs, psd_leq, pseudoinverse, spd_inverse, spectral_radius, symmetrize, ProjectionPair, PsdMatrix,
    SymmetricMatrix, PINV_REL_TOL,
};
use crate::scalar::{lit, to_f64, Real};

/// Floor used for PSD-ordering checks, relative to `1 + ‖·‖`.
pub const ORDERING_FLOOR: f64 = 1e-9;

/// Length of the Cauchy window used to declare convergence.
pub const CAUCHY_WINDOW: usize = 10;

/// `A s Aᵀ + w`, symmetrized.
pub fn lyapunov_step<T: Real>(s: &DMatrix<T>, a: &DMatrix<T>, w: &DMatrix<T>) -> DMatrix<T> {
    symmetrize(&(a * s * a.transpose() + w))
}

/// Fixed point of `S = A S Aᵀ + W` for a stable `A`, i.e. `Σ_j A^j W (Aᵀ)^j`.
///
/// Summed by squaring (`S ← S + A_i S A_iᵀ`, `A_i ← A_i²`); each squaring
/// counts as one iteration.
pub fn lyapunov_solve<T: Real>(a: &DMatrix<T>, w: &DMatrix<T>, tol: T, max_iter: usize) -> Result<DMatrix<T>> {
    let rho = spectral_radius(a);
    if rho >= T::one() {
        return Err(Error::Unstable { rho: to_f64(rho) });
    }
    let mut s = symmetrize(w);
    let mut ap = a.clone();
    let mut residual = max_abs(&(lyapunov_step(&s, a, w) - &s));
    for _ in 0..max_iter {
        if residual <= tol {
            return Ok(s);
        }
        s = symmetrize(&(&s + &ap * &s * ap.transpose()));
        ap = &ap * &ap;
        residual = max_abs(&(lyapunov_step(&s, a, w) - &s));
    }
    if residual <= tol {
        return Ok(s);
    }
    Err(Error::NoConvergence {
        what: "Lyapunov equation".into(),
        iterations: max_iter,
        residual: to_f64(residual),
    })
}

/// Filtered/predicted covariance pair of a Riccati difference equation.
#[derive(Debug, Clone)]
pub struct RdeState<T: Real> {
    pub p: DMatrix<T>,
    pub p_pred: DMatrix<T>,
    /// Gain `P̃ Cᵀ (C P̃ Cᵀ + R)⁻¹` of the last update.
    pub gain: DMatrix<T>,
    pub step: usize,
}

impl<T: Real> RdeState<T> {
    /// State at step 0 with `P = P̃ = p0`.
    pub fn initial(p0: DMatrix<T>, outputs: usize) -> Self {
        let n = p0.nrows();
        Self {
            p_pred: p0.clone(),
            p: p0,
            gain: DMatrix::zeros(n, outputs),
            step: 0,
        }
    }
}

/// `P̃ = A P Aᵀ + W`, `P = P̃ − P̃Cᵀ(CP̃Cᵀ+R)⁻¹CP̃`.
pub fn rde_step<T: Real>(
    state: &RdeState<T>,
    a: &DMatrix<T>,
    w: &DMatrix<T>,
    c: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<RdeState<T>> {
    let p_pred = lyapunov_step(&state.p, a, w);
    let (p, gain) = measurement_update(&p_pred, c, r)?;
    Ok(RdeState {
        p,
        p_pred,
        gain,
        step: state.step + 1,
    })
}

/// Returns `(P̃ − K C P̃, K)` with `K = P̃Cᵀ(CP̃Cᵀ+R)⁻¹`.
pub fn measurement_update<T: Real>(
    p_pred: &DMatrix<T>,
    c: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let cp = c * p_pred;
    let innov = symmetrize(&(&cp * c.transpose() + r));
    let inv = spd_inverse(&innov).map_err(|_| Error::SingularInnovation {
        min_eig: to_f64(crate::linalg::min_eigenvalue(&innov)),
    })?;
    let gain = cp.transpose() * inv;
    let p = symmetrize(&(p_pred - &gain * cp));
    Ok((p, gain))
}

/// Converged DARE solution.
#[derive(Debug, Clone)]
pub struct DareSolution<T: Real> {
    pub p: DMatrix<T>,
    pub p_pred: DMatrix<T>,
    pub gain: DMatrix<T>,
    /// `‖P − RdeStep(P)‖_∞` at the returned solution.
    pub residual: T,
    pub iterations: usize,
    /// `(k, tr P_k, ‖P_k − P_{k-1}‖_∞)` per iteration.
    pub history: Vec<(usize, T, T)>,
}

impl<T: Real> DareSolution<T> {
    /// Closed-loop operator `A − K C A`.
    pub fn closed_loop(&self, a: &DMatrix<T>, c: &DMatrix<T>) -> DMatrix<T> {
        a - &self.gain * c * a
    }

    pub fn p_psd(&self) -> Result<PsdMatrix<T>> {
        PsdMatrix::new(self.p.clone())
    }
}

/// Iterates [`rde_step`] from `p0` until the step differences stay below
/// `tol` over a full Cauchy window and the DARE residual is at most `10·tol`.
pub fn dare_solve<T: Real>(
    a: &DMatrix<T>,
    w: &DMatrix<T>,
    c: &DMatrix<T>,
    r: &DMatrix<T>,
    p0: &DMatrix<T>,
    tol: T,
    max_iter: usize,
) -> Result<DareSolution<T>> {
    let mut state = RdeState::initial(symmetrize(p0), c.nrows());
    let mut history = Vec::new();
    let mut quiet = 0usize;
    let mut last_diff = T::zero();
    for k in 1..=max_iter {
        let next = rde_step(&state, a, w, c, r)?;
        last_diff = max_abs(&(&next.p - &state.p));
        history.push((k, next.p.trace(), last_diff));
        state = next;
        quiet = if last_diff <= tol { quiet + 1 } else { 0 };
        if quiet >= CAUCHY_WINDOW {
            let check = rde_step(&state, a, w, c, r)?;
            let residual = max_abs(&(&check.p - &state.p));
            if residual <= lit::<T>(10.0) * tol {
                return Ok(DareSolution {
                    p: state.p,
                    p_pred: state.p_pred,
                    gain: state.gain,
                    residual,
                    iterations: k,
                    history,
                });
            }
        }
    }
    Err(Error::NoConvergence {
        what: "DARE fixed-point iteration".into(),
        iterations: max_iter,
        residual: to_f64(last_diff),
    })
}

/// Literal recomputation of the reduced error covariance through the load
/// form `P_k = P̃_k − G_k + (I − Q_kΠ)(A V_{k-1} S̃_{k-1}⁺ V_{k-1}ᵀ Aᵀ + G_k)(I − Q_kΠ)ᵀ`,
/// `G_k = P̃_kCᵀ(CP̃_kCᵀ+R)⁻¹CP̃_k`, compared entrywise with the schedule's
/// `P_k`. Needs a schedule built with [`Storage::Full`].
pub fn rde_err_consistency<T: Real>(schedule: &ReducedGainSchedule<T>, model: &LgssModel<T>) -> Result<T> {
    let covs = schedule.covariances().ok_or_else(|| {
        Error::InvalidParameter("consistency check needs a schedule with full covariance storage".into())
    })?;
    let pi = schedule.projection().pi();
    let n = model.state_dim();
    let id = DMatrix::<T>::identity(n, n);
    let mut worst = T::zero();
    for k in 1..covs.len() {
        let prev = &covs[k - 1];
        let cur = &covs[k];
        let (_, gain) = measurement_update(&cur.pred_cov, &model.c, &model.r_cov)?;
        let g = symmetrize(&(&gain * &model.c * &cur.pred_cov));
        let st_pinv = pseudoinverse(&SymmetricMatrix::new(prev.est_cov.clone())?, lit(PINV_REL_TOL));
        let av = &model.a * &prev.cross_cov;
        let load_inner = &av * st_pinv.as_matrix() * av.transpose() + &g;
        let d = &id - &schedule.steps()[k - 1].lift * pi;
        let p23 = &cur.pred_cov - &g + &d * load_inner * d.transpose();
        worst = worst.max(max_abs(&(symmetrize(&p23) - &cur.err_cov)));
    }
    Ok(worst)
}

/// One step of the augmented recursion for the covariance of `[x_k; x̃_k]`:
/// `S̄_k = Ā_k S̄_{k-1} Ā_kᵀ + B̄_k Ū B̄_kᵀ`, with
/// `Ā_k = [[A, 0], [ΠK_kCA, Π(A − K_kCA)Q_{k-1}]]`,
/// `B̄_k = [[B, 0], [ΠK_kCB, ΠK_k]]`, `Ū = diag(U, R)`.
pub fn augmented_lyapunov_step<T: Real>(
    aug_cov: &DMatrix<T>,
    model: &LgssModel<T>,
    schedule: &ReducedGainSchedule<T>,
    k: usize,
) -> Result<DMatrix<T>> {
    let n = model.state_dim();
    let nc = schedule.projection().coarse_dim();
    let (q, m) = (model.input_dim(), model.output_dim());
    if k == 0 || k > schedule.horizon() {
        return Err(Error::InvalidParameter(format!("step {k} outside schedule")));
    }
    if aug_cov.nrows() != n + nc {
        return Err(Error::Dimension("augmented covariance has wrong size".into()));
    }
    let pi = schedule.projection().pi();
    let gain = &schedule.step(k).gain;
    let pk = pi * gain;
    let q_prev = schedule.lift(k - 1);
    let mut a_bar = DMatrix::zeros(n + nc, n + nc);
    a_bar.view_mut((0, 0), (n, n)).copy_from(&model.a);
    a_bar.view_mut((n, 0), (nc, n)).copy_from(&(&pk * &model.c * &model.a));
    let closed = &model.a - gain * &model.c * &model.a;
    a_bar.view_mut((n, n), (nc, nc)).copy_from(&(pi * closed * q_prev));
    let mut b_bar = DMatrix::zeros(n + nc, q + m);
    b_bar.view_mut((0, 0), (n, q)).copy_from(&model.b);
    b_bar.view_mut((n, 0), (nc, q)).copy_from(&(&pk * &model.c * &model.b));
    b_bar.view_mut((n, q), (nc, m)).copy_from(&pk);
    let mut u_bar = DMatrix::zeros(q + m, q + m);
    u_bar.view_mut((0, 0), (q, q)).copy_from(model.u_cov.as_matrix());
    u_bar.view_mut((q, q), (m, m)).copy_from(model.r_cov.as_matrix());
    Ok(symmetrize(
        &(&a_bar * aug_cov * a_bar.transpose() + &b_bar * u_bar * b_bar.transpose()),
    ))
}

/// `M = (I − Π_s) S (I − Π_s)` and the per-step load traces `tr M_k`.
#[derive(Debug, Clone)]
pub struct DiscretizationBound<T: Real> {
    pub m_bound: DMatrix<T>,
    pub m_k_trace: Vec<T>,
    /// Smallest eigenvalue of `M − M_k` over all steps.
    pub worst_margin: T,
}

/// Assembles `M` from `s_stationary` and checks `M_k ⪯ M` at every step of a
/// [`Storage::Full`] schedule.
pub fn m_bound<T: Real>(
    schedule: &ReducedGainSchedule<T>,
    s_stationary: &DMatrix<T>,
    projection: &ProjectionPair<T>,
) -> Result<DiscretizationBound<T>> {
    let covs = schedule
        .covariances()
        .ok_or_else(|| Error::InvalidParameter("M-bound check needs a schedule with full covariance storage".into()))?;
    let comp = projection.complement();
    let m = symmetrize(&(&comp * s_stationary * &comp));
    let mut traces = Vec::with_capacity(covs.len());
    let mut worst = T::max_value().unwrap_or(T::one());
    for k in 1..covs.len() {
        let mk = schedule.load_matrix(k).expect("full storage");
        let (ok, lo) = psd_leq(&mk, &m, lit(ORDERING_FLOOR));
        worst = worst.min(lo);
        traces.push(mk.trace());
        if !ok {
            return Err(Error::OrderingViolation {
                step: k,
                min_eig: to_f64(lo),
            });
        }
    }
    Ok(DiscretizationBound {
        m_bound: m,
        m_k_trace: traces,
        worst_margin: worst,
    })
}

/// Options for the stationary discrepancy computation.
#[derive(Debug, Clone, Copy)]
pub struct DiscrepancyOptions<T> {
    /// Absolute Cauchy tolerance on the discrepancy over the window.
    pub tol: T,
    pub max_iter: usize,
    pub min_iter: usize,
}

impl<T: Real> Default for DiscrepancyOptions<T> {
    fn default() -> Self {
        Self {
            tol: lit(1e-13),
            max_iter: 50_000,
            min_iter: 100,
        }
    }
}

/// Converged traces of the reduced and full covariance recursions.
#[derive(Debug, Clone)]
pub struct StationaryDiscrepancy<T: Real> {
    /// `lim (tr P_k − tr P^F_k)`.
    pub discrepancy: T,
    pub tr_p_reduced: T,
    pub tr_p_full: T,
    pub tr_m: T,
    pub iterations: usize,
    /// Converged reduced gain `K_∞`, lift `Q_∞` and load `M_∞`.
    pub gain_reduced: DMatrix<T>,
    pub lift: DMatrix<T>,
    pub load: DMatrix<T>,
    pub full: RdeState<T>,
    pub p_reduced: DMatrix<T>,
    pub p_pred_reduced: DMatrix<T>,
}

/// Runs the reduced and full recursions side by side until
/// `tr P_k − tr P^F_k` is Cauchy within `tol` over a window.
pub fn stationary_discrepancy<T: Real>(
    model: &LgssModel<T>,
    projection: &ProjectionPair<T>,
    opts: DiscrepancyOptions<T>,
) -> Result<StationaryDiscrepancy<T>> {
    let w = model.process_noise();
    let mut reduced = ReducedRecursion::new(model, projection);
    let mut full = RdeState::initial(model.s0.as_matrix().clone(), model.output_dim());
    let mut window: Vec<T> = Vec::new();
    for k in 1..=opts.max_iter {
        reduced.advance()?;
        full = rde_step(&full, &model.a, &w, &model.c, model.r_cov.as_matrix())?;
        let d = reduced.err_cov().trace() - full.p.trace();
        window.push(d);
        if window.len() > CAUCHY_WINDOW {
            window.remove(0);
        }
        if k >= opts.min_iter && window.len() == CAUCHY_WINDOW {
            let lo = window.iter().copied().fold(d, |a, b| a.min(b));
            let hi = window.iter().copied().fold(d, |a, b| a.max(b));
            if hi - lo <= opts.tol {
                let load = reduced.load_matrix();
                return Ok(StationaryDiscrepancy {
                    discrepancy: d,
                    tr_p_reduced: reduced.err_cov().trace(),
                    tr_p_full: full.p.trace(),
                    tr_m: load.trace(),
                    iterations: k,
                    gain_reduced: reduced.gain().clone(),
                    lift: reduced.lift().clone(),
                    load,
                    full,
                    p_reduced: reduced.err_cov().clone(),
                    p_pred_reduced: reduced.pred_cov().clone(),
                });
            }
        }
    }
    Err(Error::NoConvergence {
        what: "stationary discrepancy".into(),
        iterations: opts.max_iter,
        residual: window.iter().map(|v| to_f64(*v)).fold(f64::NEG_INFINITY, f64::max)
            - window.iter().map(|v| to_f64(*v)).fold(f64::INFINITY, f64::min),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn lyapunov_examples() {
        let w = s(1.0);
        assert_eq!(lyapunov_step(&s(4.0 / 3.0), &s(0.5), &w)[(0, 0)], 4.0 / 3.0);
        assert_eq!(lyapunov_solve(&s(0.0), &w, 1e-14, 60).unwrap()[(0, 0)], 1.0);
        let x = lyapunov_solve(&s(0.9), &w, 1e-13, 60).unwrap()[(0, 0)];
        assert!((x - 1.0 / (1.0 - 0.81)).abs() < 1e-12);
        let a: DMatrix<f64> = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 0.2]));
        let sol = lyapunov_solve(&a, &DMatrix::identity(2, 2), 1e-14, 60).unwrap();
        assert!((sol[(0, 0)] - 4.0 / 3.0).abs() < 1e-13);
        assert!((sol[(1, 1)] - 25.0 / 24.0).abs() < 1e-13);
        assert!(matches!(
            lyapunov_solve(&s(1.0), &w, 1e-12, 60),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn rde_examples() {
        let st = RdeState::initial(s(0.0), 1);
        let next = rde_step(&st, &s(0.0), &s(1.0), &s(1.0), &s(1.0)).unwrap();
        assert!((next.p[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((next.gain[(0, 0)] - 0.5).abs() < 1e-15);
        let blind = rde_step(&st, &s(0.7), &s(2.0), &s(0.0), &s(1.0)).unwrap();
        assert_eq!(blind.p, blind.p_pred);
    }

    #[test]
    fn scalar_dare_matches_quadratic_formula() {
        // p̃ = p/4 + 1 and p = p̃/(p̃ + 1) give p² + 7p − 4 = 0
        let expect = (-7.0 + 65f64.sqrt()) / 2.0;
        let sol = dare_solve(&s(0.5), &s(1.0), &s(1.0), &s(1.0), &s(0.0), 1e-14, 1000).unwrap();
        assert!((sol.p[(0, 0)] - expect).abs() < 1e-12);
        assert!(sol.residual <= 1e-13);
        let traces: Vec<f64> = sol.history.iter().map(|h| h.1).collect();
        assert!(traces.windows(2).all(|w| w[1] >= w[0] - 1e-15));
    }

    #[test]
    fn dare_without_measurements_is_lyapunov() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let c = DMatrix::zeros(1, 2);
        let sol = dare_solve(&a, &w, &c, &s(1.0), &DMatrix::zeros(2, 2), 1e-14, 1000).unwrap();
        let lyap = lyapunov_solve(&a, &w, 1e-15, 60).unwrap();
        assert!((sol.p - lyap).amax() < 1e-12);
    }
}
