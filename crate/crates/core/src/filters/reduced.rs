//! The one-step optimal reduced-order filter.
//!
//! The offline recursion is carried in the form
//!
//! ```text
//! S_k = A S_{k-1} Aᵀ + W
//! Σ_k = A Λ_{k-1} Aᵀ + G_k,          G_k = P̃_kCᵀ(CP̃_kCᵀ+R)⁻¹CP̃_k
//! P̃_k = S_k − A Λ_{k-1} Aᵀ           (= A P_{k-1} Aᵀ + W)
//! V_k = Σ_k Πᵀ,  S̃_k = Π V_k
//! Q_k = Πᵀ + (I − Π_s) V_k S̃_k⁺
//! Λ_k = Q_k V_kᵀ + V_k Q_kᵀ − Q_k S̃_k Q_kᵀ
//! P_k = S_k − Λ_k
//! ```
//!
//! where `Σ_k` is the covariance of the unprojected one-step estimate and
//! `Λ_k = Cov(Q_k x̃_k)`. `Λ_k` equals `Q_k S̃_k Q_kᵀ` exactly but is first-order
//! insensitive to rounding in `Q_k`, and it has rank at most `2·n_coarse`, so
//! `A Λ Aᵀ` is formed from thin factors.

use nalgebra::{DMatrix, DVector};

use super::{OnlineFilter, Storage};
use crate::error::{Error, Result};
use crate::lgss::LgssModel;
use crate::linalg::{pseudoinverse, symmetrize, ProjectionPair, SymmetricMatrix, PINV_REL_TOL, PSD_EPS};
use crate::riccati::measurement_update;
use crate::scalar::{lit, Real};

/// Offline quantities of one reduced step `k ≥ 1` needed online.
#[derive(Debug, Clone)]
pub struct ReducedStep<T: Real> {
    /// `K_k` (fine × outputs).
    pub gain: DMatrix<T>,
    /// `Q_k` (fine × coarse).
    pub lift: DMatrix<T>,
    /// `Π A Q_{k-1}`.
    pub coarse_transition: DMatrix<T>,
    /// `Π K_k`.
    pub coarse_gain: DMatrix<T>,
    /// `C A Q_{k-1}`.
    pub output_transition: DMatrix<T>,
    /// `μ_k = A^k m`.
    pub mean: DVector<T>,
    /// `Π μ_k`.
    pub coarse_mean: DVector<T>,
    /// `C μ_k`.
    pub output_mean: DVector<T>,
    pub tr_s: T,
    pub tr_pred: T,
    pub tr_p: T,
    /// `tr M_k`, the discretization load.
    pub tr_m: T,
    pub gain_norm: T,
}

/// Covariances of one reduced step.
#[derive(Debug, Clone)]
pub struct ReducedCovariances<T: Real> {
    /// `S_k = Cov(x_k)`.
    pub s: DMatrix<T>,
    /// `P̃_k`.
    pub pred_cov: DMatrix<T>,
    /// `V_k = Cov(x_k, x̃_k)`.
    pub cross_cov: DMatrix<T>,
    /// `S̃_k = Cov(x̃_k)`.
    pub est_cov: DMatrix<T>,
    /// `P_k = Cov(x_k − Q_k x̃_k)`.
    pub err_cov: DMatrix<T>,
    /// `Σ_k`.
    pub sigma: DMatrix<T>,
    /// `Q_k`.
    pub lift: DMatrix<T>,
}

/// Incremental form of the offline recursion.
#[derive(Debug, Clone)]
pub struct ReducedRecursion<'a, T: Real> {
    model: &'a LgssModel<T>,
    pi: DMatrix<T>,
    pi_t: DMatrix<T>,
    complement: DMatrix<T>,
    w: DMatrix<T>,
    pinv_tol: T,
    k: usize,
    mean: DVector<T>,
    s: DMatrix<T>,
    pred: DMatrix<T>,
    gain: DMatrix<T>,
    sigma: DMatrix<T>,
    v: DMatrix<T>,
    st: DMatrix<T>,
    q: DMatrix<T>,
    p: DMatrix<T>,
}

impl<'a, T: Real> ReducedRecursion<'a, T> {
    /// Step 0: `P_0 = S_0`, `S̃_0 = 0`, `V_0 = 0`, `Q_0 = Πᵀ`.
    pub fn new(model: &'a LgssModel<T>, projection: &ProjectionPair<T>) -> Self {
        let n = model.state_dim();
        let nc = projection.coarse_dim();
        let s0 = model.s0.as_matrix().clone();
        Self {
            model,
            pi: projection.pi().clone(),
            pi_t: projection.pi_adjoint(),
            complement: projection.complement(),
            w: model.process_noise(),
            pinv_tol: lit(PINV_REL_TOL),
            k: 0,
            mean: model.mean0.clone(),
            s: s0.clone(),
            pred: s0.clone(),
            gain: DMatrix::zeros(n, model.output_dim()),
            sigma: DMatrix::zeros(n, n),
            v: DMatrix::zeros(n, nc),
            st: DMatrix::zeros(nc, nc),
            q: projection.pi_adjoint(),
            p: s0,
        }
    }

    /// Overrides the relative pseudoinverse cutoff for `S̃_k⁺`.
    pub fn with_pinv_tol(mut self, tol: T) -> Self {
        self.pinv_tol = tol;
        self
    }

    pub fn step_index(&self) -> usize {
        self.k
    }

    /// Advances to the next step and returns its online quantities.
    pub fn advance(&mut self) -> Result<ReducedStep<T>> {
        let m = self.model;
        let aq = &m.a * &self.q;
        let av = &m.a * &self.v;
        // A Λ_{k-1} Aᵀ from thin factors
        let aq_st = &aq * &self.st;
        let cross = &aq * av.transpose();
        let a_lam = symmetrize(&(&cross + cross.transpose() - &aq_st * aq.transpose()));

        let s = symmetrize(&(&m.a * &self.s * m.a.transpose() + &self.w));
        let pred = symmetrize(&(&s - &a_lam));
        let (_, gain) = measurement_update(&pred, &m.c, m.r_cov.as_matrix())?;
        let g = symmetrize(&(&gain * (&m.c * &pred)));
        let sigma = symmetrize(&(&a_lam + g));
        let v = &sigma * &self.pi_t;
        let st = symmetrize(&(&self.pi * &v));
        let st_pinv = pseudoinverse(&SymmetricMatrix::new(st.clone())?, self.pinv_tol);
        // project the completion again so that ΠQ = I survives a large S̃⁺
        let completion = &self.complement * &v * st_pinv.as_matrix();
        let completion = &completion - &self.pi_t * (&self.pi * &completion);
        let q = &self.pi_t + completion;
        let qv = &q * v.transpose();
        let lam = symmetrize(&(&qv + qv.transpose() - &q * &st * q.transpose()));
        let p = symmetrize(&(&s - &lam));

        let n = p.nrows();
        let scale = (0..n).fold(T::zero(), |acc, i| acc.max(p[(i, i)].abs()));
        let floor = -lit::<T>(PSD_EPS) * (T::one() + scale);
        if let Some(i) = (0..n).find(|&i| p[(i, i)] < floor) {
            return Err(Error::NotPositiveDefinite(format!(
                "reduced error covariance at step {} has negative diagonal entry {i}",
                self.k + 1
            )));
        }

        // tr M_k = tr((I − QΠ) Σ (I − QΠ)ᵀ) = tr Σ − 2 tr(Q Vᵀ) + tr(Q S̃ Qᵀ)
        let q_st = &q * &st;
        let tr_m = sigma.trace() - lit::<T>(2.0) * qv.trace() + q_st.component_mul(&q).sum();

        let mean = &m.a * &self.mean;
        let step = ReducedStep {
            coarse_transition: &self.pi * &aq,
            coarse_gain: &self.pi * &gain,
            output_transition: &m.c * &aq,
            gain_norm: gain.norm(),
            tr_s: s.trace(),
            tr_pred: pred.trace(),
            tr_p: p.trace(),
            tr_m,
            gain: gain.clone(),
            lift: q.clone(),
            coarse_mean: &self.pi * &mean,
            output_mean: &m.c * &mean,
            mean: mean.clone(),
        };
        self.k += 1;
        self.mean = mean;
        self.s = s;
        self.pred = pred;
        self.gain = gain;
        self.sigma = sigma;
        self.v = v;
        self.st = st;
        self.q = q;
        self.p = p;
        Ok(step)
    }

    pub fn err_cov(&self) -> &DMatrix<T> {
        &self.p
    }

    pub fn pred_cov(&self) -> &DMatrix<T> {
        &self.pred
    }

    pub fn gain(&self) -> &DMatrix<T> {
        &self.gain
    }

    pub fn lift(&self) -> &DMatrix<T> {
        &self.q
    }

    /// `M_k = (I − Q_kΠ) Σ_k (I − Q_kΠ)ᵀ`.
    pub fn load_matrix(&self) -> DMatrix<T> {
        let n = self.s.nrows();
        let d = DMatrix::identity(n, n) - &self.q * &self.pi;
        symmetrize(&(&d * &self.sigma * d.transpose()))
    }

    pub fn covariances(&self) -> ReducedCovariances<T> {
        ReducedCovariances {
            s: self.s.clone(),
            pred_cov: self.pred.clone(),
            cross_cov: self.v.clone(),
            est_cov: self.st.clone(),
            err_cov: self.p.clone(),
            sigma: self.sigma.clone(),
            lift: self.q.clone(),
        }
    }
}

/// Offline schedule of the reduced filter over a fixed horizon.
#[derive(Debug, Clone)]
pub struct ReducedGainSchedule<T: Real> {
    projection: ProjectionPair<T>,
    mean0: DVector<T>,
    steps: Vec<ReducedStep<T>>,
    /// Index `k = 0..=horizon` under [`Storage::Full`].
    covs: Option<Vec<ReducedCovariances<T>>>,
    last: ReducedCovariances<T>,
}

impl<T: Real> ReducedGainSchedule<T> {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn projection(&self) -> &ProjectionPair<T> {
        &self.projection
    }

    /// Step `k ≥ 1`.
    pub fn step(&self, k: usize) -> &ReducedStep<T> {
        &self.steps[k - 1]
    }

    pub fn steps(&self) -> &[ReducedStep<T>] {
        &self.steps
    }

    /// `Q_k`, with `Q_0 = Πᵀ`.
    pub fn lift(&self, k: usize) -> DMatrix<T> {
        if k == 0 {
            self.projection.pi_adjoint()
        } else {
            self.steps[k - 1].lift.clone()
        }
    }

    /// `μ_k`.
    pub fn mean(&self, k: usize) -> &DVector<T> {
        if k == 0 {
            &self.mean0
        } else {
            &self.steps[k - 1].mean
        }
    }

    pub fn covariances(&self) -> Option<&[ReducedCovariances<T>]> {
        self.covs.as_deref()
    }

    pub fn last(&self) -> &ReducedCovariances<T> {
        &self.last
    }

    /// `M_k`, when covariances are stored.
    pub fn load_matrix(&self, k: usize) -> Option<DMatrix<T>> {
        let c = &self.covs.as_ref()?[k];
        let n = c.s.nrows();
        let d = DMatrix::identity(n, n) - &c.lift * self.projection.pi();
        Some(symmetrize(&(&d * &c.sigma * d.transpose())))
    }

    /// `x̃_0 = Π m`.
    pub fn initial_estimate(&self) -> DVector<T> {
        self.projection.pi() * &self.mean0
    }
}

/// Runs the offline recursion for `horizon` steps.
pub fn reduced_offline<T: Real>(
    model: &LgssModel<T>,
    projection: &ProjectionPair<T>,
    horizon: usize,
    storage: Storage,
) -> Result<ReducedGainSchedule<T>> {
    reduced_offline_with(ReducedRecursion::new(model, projection), projection, horizon, storage)
}

pub(crate) fn reduced_offline_with<T: Real>(
    mut rec: ReducedRecursion<'_, T>,
    projection: &ProjectionPair<T>,
    horizon: usize,
    storage: Storage,
) -> Result<ReducedGainSchedule<T>> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    if projection.fine_dim() != rec.model.state_dim() {
        return Err(Error::Dimension(
            "projection does not match the model state space".into(),
        ));
    }
    let mut covs = (storage == Storage::Full).then(|| vec![rec.covariances()]);
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        steps.push(rec.advance()?);
        if let Some(c) = covs.as_mut() {
            c.push(rec.covariances());
        }
    }
    Ok(ReducedGainSchedule {
        projection: projection.clone(),
        mean0: rec.model.mean0.clone(),
        steps,
        covs,
        last: rec.covariances(),
    })
}

/// `x̃_k = Πμ_k + ΠAQ_{k-1} d + ΠK_k (y_k − Cμ_k − CAQ_{k-1} d)`,
/// `d = x̃_{k-1} − Πμ_{k-1}`; with `m = 0` this is
/// `ΠAQ_{k-1} x̃_{k-1} + ΠK_k (y_k − CAQ_{k-1} x̃_{k-1})`.
pub fn reduced_step<T: Real>(
    schedule: &ReducedGainSchedule<T>,
    k: usize,
    prev: &DVector<T>,
    y: &DVector<T>,
) -> DVector<T> {
    let st = schedule.step(k);
    let pi = schedule.projection.pi();
    let prev_mean = schedule.mean(k - 1);
    let d = prev - pi * prev_mean;
    let innov = y - &st.output_mean - &st.output_transition * &d;
    &st.coarse_mean + &st.coarse_transition * &d + &st.coarse_gain * innov
}

/// `μ_k + Q_k (x̃_k − Πμ_k)`; equals `Q_k x̃_k` for a zero-mean model.
pub fn lift<T: Real>(schedule: &ReducedGainSchedule<T>, k: usize, estimate: &DVector<T>) -> DVector<T> {
    let mean = schedule.mean(k);
    let d = estimate - schedule.projection.pi() * mean;
    if k == 0 {
        mean + schedule.projection.pi_adjoint() * d
    } else {
        mean + &schedule.steps[k - 1].lift * d
    }
}

impl<T: Real> OnlineFilter<T> for ReducedGainSchedule<T> {
    fn name(&self) -> &str {
        "reduced"
    }

    fn horizon(&self) -> usize {
        self.steps.len()
    }

    fn initial(&self) -> DVector<T> {
        self.initial_estimate()
    }

    fn step(&self, k: usize, prev: &DVector<T>, y: &DVector<T>) -> DVector<T> {
        reduced_step(self, k, prev, y)
    }

    fn fine_estimate(&self, k: usize, state: &DVector<T>) -> DVector<T> {
        lift(self, k, state)
    }
}
