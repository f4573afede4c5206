//! Computable constants and upper bounds for the stationary discrepancy
//! `lim E‖Q_k x̃_k − x̂_k‖²` between the reduced and the full filter.
//!
//! Notation: `Φ = A − K^F C A` is the converged full closed loop,
//! `M = (I−Π_s) S (I−Π_s)` the discretization load built from the
//! stationary state covariance `S`, and `ΔP = P^b − P^F` the difference of
//! the DARE solutions with process noise `BUBᵀ + AMAᵀ` and `BUBᵀ`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lgss::LgssModel;
use crate::linalg::{
    max_abs, min_eigenvalue, op_norm, spd_inverse, spectral_radius, symmetrize, weighted_operator_norm, ProjectionPair,
    PsdMatrix,
};
use crate::riccati::{dare_solve, lyapunov_solve, lyapunov_step, DareSolution, StationaryDiscrepancy};
use crate::scalar::{lit, to_f64, Real};

/// Relative size of the remaining tail at which the `L₀` series stops.
pub const L0_REL_TOL: f64 = 1e-10;
const L0_MAX_TERMS: usize = 2_000_000;
const STABLE_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct StabilityReport<T: Real> {
    pub closed_loop: DMatrix<T>,
    pub rho: T,
    pub stable: bool,
}

impl<T: Real> StabilityReport<T> {
    pub fn new(closed_loop: DMatrix<T>) -> Self {
        let rho = spectral_radius(&closed_loop);
        Self {
            stable: rho < T::one() - lit(STABLE_MARGIN),
            closed_loop,
            rho,
        }
    }

    /// `A − K C A`.
    pub fn from_gain(a: &DMatrix<T>, gain: &DMatrix<T>, c: &DMatrix<T>) -> Self {
        Self::new(a - gain * c * a)
    }
}

/// `L₀ = Σ_j ‖Φ^{2j}‖`, returned as a guaranteed upper bound.
///
/// With `t_j = ‖Φ^{2j}‖` and `q = t_p < 1`, submultiplicativity gives
/// `Σ_{j≥p} t_j ≤ (t_p + … + t_{2p−1})/(1 − q)`; terms are added until the
/// part of that estimate beyond `2p` falls below `rel_tol` of the total.
pub fn l0_constant<T: Real>(phi: &DMatrix<T>, rel_tol: T) -> Result<T> {
    let rho = spectral_radius(phi);
    if rho >= T::one() {
        return Err(Error::Unstable { rho: to_f64(rho) });
    }
    let n = phi.nrows();
    let phi2 = phi * phi;
    let mut power = DMatrix::<T>::identity(n, n);
    let mut terms: Vec<T> = vec![T::one()];
    let mut p = 1usize;
    loop {
        while terms.len() < 2 * p {
            power = &power * &phi2;
            terms.push(op_norm(&power));
        }
        let q = terms[p];
        if q < T::one() {
            let head: T = terms[..p].iter().copied().fold(T::zero(), |a, b| a + b);
            let block: T = terms[p..2 * p].iter().copied().fold(T::zero(), |a, b| a + b);
            let upper = head + block / (T::one() - q);
            if block * q / (T::one() - q) <= rel_tol * upper {
                return Ok(upper);
            }
        }
        p += 1;
        if 2 * p > L0_MAX_TERMS {
            return Err(Error::NoConvergence {
                what: "L0 series".into(),
                iterations: L0_MAX_TERMS,
                residual: to_f64(q),
            });
        }
    }
}

/// `Σ_j Φ^j X (Φᵀ)^j`, the inverse of `W ↦ W − Φ W Φᵀ` applied to `X`.
pub fn lyapunov_l_apply<T: Real>(phi: &DMatrix<T>, x: &PsdMatrix<T>, tol: T) -> Result<PsdMatrix<T>> {
    PsdMatrix::new(lyapunov_solve(phi, x.as_matrix(), tol, 200)?)
}

/// `K^F − K^b` in closed form:
/// `(K^b C − I) D Cᵀ (C P̃^F Cᵀ + R)⁻¹` with `D = A(M + ΔP)Aᵀ = P̃^b − P̃^F`.
pub fn delta_k_exact<T: Real>(
    model: &LgssModel<T>,
    dare_f: &DareSolution<T>,
    dare_b: &DareSolution<T>,
) -> Result<DMatrix<T>> {
    let n = model.state_dim();
    let d = &dare_b.p_pred - &dare_f.p_pred;
    let s_f = innovation_cov(model, &dare_f.p_pred);
    let s_inv = spd_inverse(&s_f)?;
    Ok((&dare_b.gain * &model.c - DMatrix::identity(n, n)) * d * model.c.transpose() * s_inv)
}

/// The gain change caused by adding `AMAᵀ` to `P̃^F` once:
/// `((P̃^F + AMAᵀ)Cᵀ(C(P̃^F + AMAᵀ)Cᵀ + R)⁻¹C − I) AMAᵀ Cᵀ (CP̃^F Cᵀ + R)⁻¹`.
/// It agrees with [`delta_k_exact`] only to first order in `M`.
pub fn delta_k_first_order<T: Real>(
    model: &LgssModel<T>,
    m: &DMatrix<T>,
    dare_f: &DareSolution<T>,
) -> Result<DMatrix<T>> {
    let n = model.state_dim();
    let ama = symmetrize(&(&model.a * m * model.a.transpose()));
    let shifted = &dare_f.p_pred + &ama;
    let shifted_inv = spd_inverse(&innovation_cov(model, &shifted))?;
    let s_inv = spd_inverse(&innovation_cov(model, &dare_f.p_pred))?;
    let ct = model.c.transpose();
    Ok((&shifted * &ct * shifted_inv * &model.c - DMatrix::identity(n, n)) * ama * &ct * s_inv)
}

fn innovation_cov<T: Real>(model: &LgssModel<T>, p_pred: &DMatrix<T>) -> DMatrix<T> {
    symmetrize(&(&model.c * p_pred * model.c.transpose() + model.r_cov.as_matrix()))
}

/// Operator norms entering the bound constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormInputs {
    /// `‖A‖`.
    pub a: f64,
    /// `‖C‖`.
    pub c: f64,
    /// `‖CA‖`.
    pub ca: f64,
    /// `‖K^F C‖`.
    pub kc: f64,
    /// `‖A − K^F C A‖`.
    pub closed_loop: f64,
    /// `‖P̃^F‖`.
    pub p_pred: f64,
    /// `‖(C P̃^F Cᵀ + R)⁻¹‖`.
    pub innovation_inv: f64,
    /// `tr (C P̃^F Cᵀ + R)⁻¹`.
    pub innovation_inv_trace: f64,
}

impl NormInputs {
    /// Exact norms from a converged full filter with gain `gain` and
    /// predicted covariance `p_pred`.
    pub fn from_full<T: Real>(model: &LgssModel<T>, gain: &DMatrix<T>, p_pred: &DMatrix<T>) -> Result<Self> {
        let s_inv = spd_inverse(&innovation_cov(model, p_pred))?;
        let ca = &model.c * &model.a;
        Ok(Self {
            a: to_f64(op_norm(&model.a)),
            c: to_f64(op_norm(&model.c)),
            ca: to_f64(op_norm(&ca)),
            kc: to_f64(op_norm(&(gain * &model.c))),
            closed_loop: to_f64(op_norm(&(&model.a - gain * &ca))),
            p_pred: to_f64(op_norm(p_pred)),
            innovation_inv: to_f64(op_norm(&s_inv)),
            innovation_inv_trace: to_f64(s_inv.trace()),
        })
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        [
            ("A", self.a),
            ("C", self.c),
            ("CA", self.ca),
            ("KF_C", self.kc),
            ("A_minus_KF_CA", self.closed_loop),
            ("P_pred_F", self.p_pred),
            ("innovation_inv", self.innovation_inv),
            ("tr_innovation_inv", self.innovation_inv_trace),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// `(ĉ₁, ĉ₂)` of the gain-perturbation estimate.
pub fn gain_constants(norms: &NormInputs) -> (f64, f64) {
    let s = norms.innovation_inv;
    let c_hat1 = (1.0 + norms.p_pred * norms.c.powi(2) * s) * norms.c * norms.a.powi(2) * s;
    let c_hat2 = norms.a.powi(4) * norms.c.powi(3) * s.powi(2);
    (c_hat1, c_hat2)
}

/// `‖ΔK‖_HS ≤ (ĉ₁ + ĉ₂ tr M) tr M`.
pub fn delta_k_bound(norms: &NormInputs, tr_m: f64) -> f64 {
    let (c_hat1, c_hat2) = gain_constants(norms);
    (c_hat1 + c_hat2 * tr_m) * tr_m
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundConstants {
    /// `L₀`, used wherever the sharpest trace constant `L` is called for.
    pub l0: f64,
    pub c_hat1: f64,
    pub c_hat2: f64,
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub tr_m: f64,
    pub norms: BTreeMap<String, f64>,
}

impl BoundConstants {
    /// Assembles `a, b, c₁…c₄` from the norms and the trace constant.
    pub fn assemble(norms: &NormInputs, l0: f64, tr_m: f64) -> Self {
        let (c_hat1, c_hat2) = gain_constants(norms);
        let phi = norms.closed_loop;
        let ca2 = norms.ca.powi(2);
        Self {
            l0,
            c_hat1,
            c_hat2,
            a: l0 * phi.powi(2),
            b: l0 * norms.kc.powi(2) * norms.a.powi(4) * norms.c.powi(2) * norms.innovation_inv_trace,
            c1: 2.0 * l0 * phi * norms.ca * c_hat1,
            c2: 2.0 * l0 * phi * norms.ca * c_hat2 + l0 * ca2 * c_hat1.powi(2),
            c3: 2.0 * l0 * ca2 * c_hat1 * c_hat2,
            c4: l0 * ca2 * c_hat2.powi(2),
            tr_m,
            norms: norms.to_map(),
        }
    }
}

/// `tr ΔP ≤ (a t + b t²)/(1 − (c₁t + c₂t² + c₃t³ + c₄t⁴))`; infinite when the
/// denominator is not positive.
pub fn tr_dp_bound(constants: &BoundConstants, tr_m: f64) -> (f64, bool) {
    let t = tr_m;
    let numerator = constants.a * t + constants.b * t * t;
    let denominator =
        1.0 - (constants.c1 * t + constants.c2 * t.powi(2) + constants.c3 * t.powi(3) + constants.c4 * t.powi(4));
    if denominator > 0.0 {
        (numerator / denominator, true)
    } else {
        (f64::INFINITY, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    APriori,
    APosteriori,
    Remark43,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionFlags {
    pub lyapunov_converged: bool,
    pub closed_loop_stable: bool,
    pub denominator_ok: bool,
    /// `ρ(Φ) + ‖CA‖·(ĉ₁ + ĉ₂ tr M) tr M < 1`.
    pub perturbation_margin_ok: bool,
    pub rho: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub theorem: Theorem,
    pub constants: BoundConstants,
    /// Value of the `tr ΔP` estimate, `None` when its denominator fails.
    pub tr_dp_bound: Option<f64>,
    /// `tr ΔP estimate + tr M`, `None` when its denominator fails.
    pub total_bound: Option<f64>,
    pub denominator_ok: bool,
    /// `‖I − Π_s‖_{L(X₁, X)}`.
    pub projection_norm: f64,
    /// `sup_k E‖x_k‖²_{X₁}`.
    pub sup_x1: f64,
    /// Coefficient of `‖I − Π_s‖²`.
    pub leading_constant: f64,
    /// Coefficient of `‖I − Π_s‖⁴` when the bound has one.
    pub second_constant: Option<f64>,
    /// The bound on the stationary discrepancy.
    pub value: f64,
    pub flags: AssumptionFlags,
}

/// `sup_k tr(W₁ S_k)`: the stationary value when `S₀ = 0`, otherwise the
/// maximum over the transient of `S_k = A S_{k-1} Aᵀ + W` and the limit.
pub fn sup_x1_energy<T: Real>(model: &LgssModel<T>, s_inf: &DMatrix<T>, x1_weight: &DMatrix<T>, tol: T) -> T {
    let stationary = (x1_weight * s_inf).trace();
    if max_abs(model.s0.as_matrix()) == T::zero() {
        return stationary;
    }
    let w = model.process_noise();
    let mut s = model.s0.as_matrix().clone();
    let mut best = (x1_weight * &s).trace();
    for _ in 0..100_000 {
        let next = lyapunov_step(&s, &model.a, &w);
        let done = max_abs(&(&next - &s)) <= tol;
        s = next;
        best = best.max((x1_weight * &s).trace());
        if done {
            break;
        }
    }
    best.max(stationary)
}

/// `‖I − Π_s‖` from `X₁` (Gram `x1_weight` in orthonormal coordinates)
/// into `X`.
pub fn projection_norm<T: Real>(projection: &ProjectionPair<T>, x1_weight: &PsdMatrix<T>) -> Result<T> {
    let n = projection.fine_dim();
    weighted_operator_norm(&projection.complement(), x1_weight, &PsdMatrix::identity(n))
}

/// Stationary load `M = (I−Π_s) S (I−Π_s)`.
pub fn discretization_load<T: Real>(projection: &ProjectionPair<T>, s_inf: &DMatrix<T>) -> DMatrix<T> {
    let comp = projection.complement();
    symmetrize(&(&comp * s_inf * &comp))
}

/// Tolerances for the bound computations.
#[derive(Debug, Clone, Copy)]
pub struct BoundOptions<T> {
    pub lyapunov_tol: T,
    pub dare_tol: T,
    pub dare_max_iter: usize,
    pub l0_rel_tol: T,
}

impl<T: Real> Default for BoundOptions<T> {
    fn default() -> Self {
        Self {
            lyapunov_tol: lit(1e-12),
            dare_tol: lit(1e-13),
            dare_max_iter: 200_000,
            l0_rel_tol: lit(L0_REL_TOL),
        }
    }
}

/// Converged full filter plus the quantities shared by all bounds.
#[derive(Debug, Clone)]
pub struct BoundSetup<T: Real> {
    pub s_inf: DMatrix<T>,
    pub m: DMatrix<T>,
    pub tr_m: T,
    pub dare_f: DareSolution<T>,
    pub stability: StabilityReport<T>,
    pub l0: T,
    pub norms: NormInputs,
    pub projection_norm: T,
    pub sup_x1: T,
}

impl<T: Real> BoundSetup<T> {
    pub fn new(
        model: &LgssModel<T>,
        projection: &ProjectionPair<T>,
        x1_weight: &PsdMatrix<T>,
        opts: BoundOptions<T>,
    ) -> Result<Self> {
        let w = model.process_noise();
        let s_inf = lyapunov_solve(&model.a, &w, opts.lyapunov_tol, 200)
            .map_err(|e| Error::AssumptionFailed(format!("stationary state covariance: {e}")))?;
        let dare_f = dare_solve(
            &model.a,
            &w,
            &model.c,
            model.r_cov.as_matrix(),
            &DMatrix::zeros(model.state_dim(), model.state_dim()),
            opts.dare_tol,
            opts.dare_max_iter,
        )?;
        Self::with_dare(model, projection, x1_weight, s_inf, dare_f, opts)
    }

    /// Reuses an already converged full DARE.
    pub fn with_dare(
        model: &LgssModel<T>,
        projection: &ProjectionPair<T>,
        x1_weight: &PsdMatrix<T>,
        s_inf: DMatrix<T>,
        dare_f: DareSolution<T>,
        opts: BoundOptions<T>,
    ) -> Result<Self> {
        let stability = StabilityReport::from_gain(&model.a, &dare_f.gain, &model.c);
        if !stability.stable {
            return Err(Error::AssumptionFailed(format!(
                "full closed loop not exponentially stable (rho = {})",
                to_f64(stability.rho)
            )));
        }
        let l0 = l0_constant(&stability.closed_loop, opts.l0_rel_tol)?;
        let norms = NormInputs::from_full(model, &dare_f.gain, &dare_f.p_pred)?;
        let m = discretization_load(projection, &s_inf);
        Ok(Self {
            tr_m: m.trace(),
            m,
            sup_x1: sup_x1_energy(model, &s_inf, x1_weight.as_matrix(), opts.lyapunov_tol),
            projection_norm: projection_norm(projection, x1_weight)?,
            s_inf,
            dare_f,
            stability,
            l0,
            norms,
        })
    }
}

fn flags(rho: f64, norms: &NormInputs, tr_m: f64, denominator_ok: bool) -> AssumptionFlags {
    let margin = rho + norms.ca * delta_k_bound(norms, tr_m);
    AssumptionFlags {
        lyapunov_converged: true,
        closed_loop_stable: rho < 1.0 - STABLE_MARGIN,
        denominator_ok,
        perturbation_margin_ok: margin < 1.0,
        rho,
        margin,
    }
}

/// A-priori bound `C‖I−Π_s‖² + (tr ΔP estimate − a·tr M)`, with
/// `C = (1 + L₀‖Φ‖²) sup_k E‖x_k‖²_{X₁}`.
pub fn a_priori_bound<T: Real>(setup: &BoundSetup<T>) -> Result<BoundReport> {
    let tr_m = to_f64(setup.tr_m);
    let l0 = to_f64(setup.l0);
    let constants = BoundConstants::assemble(&setup.norms, l0, tr_m);
    let (dp, denominator_ok) = tr_dp_bound(&constants, tr_m);
    if !denominator_ok {
        return Err(Error::AssumptionFailed(format!(
            "trace estimate denominator is not positive at tr M = {tr_m:e}"
        )));
    }
    let sup = to_f64(setup.sup_x1);
    let pn = to_f64(setup.projection_norm);
    let leading = (1.0 + constants.a) * sup;
    let value = leading * pn * pn + (dp - constants.a * tr_m);
    Ok(BoundReport {
        theorem: Theorem::APriori,
        flags: flags(to_f64(setup.stability.rho), &setup.norms, tr_m, true),
        tr_dp_bound: Some(dp),
        total_bound: Some(dp + tr_m),
        denominator_ok,
        projection_norm: pn,
        sup_x1: sup,
        leading_constant: leading,
        second_constant: None,
        value,
        constants,
    })
}

fn posteriori_report<T: Real>(
    setup: &BoundSetup<T>,
    reduced: &StationaryDiscrepancy<T>,
    model: &LgssModel<T>,
    theorem: Theorem,
    opts: BoundOptions<T>,
) -> Result<BoundReport> {
    let reduced_loop = StabilityReport::from_gain(&model.a, &reduced.gain_reduced, &model.c);
    if !reduced_loop.stable {
        return Err(Error::AssumptionFailed(format!(
            "reduced closed loop not exponentially stable (rho = {})",
            to_f64(reduced_loop.rho)
        )));
    }
    let l_tilde = to_f64(l0_constant(&reduced_loop.closed_loop, opts.l0_rel_tol)?);
    let tr_m = to_f64(reduced.tr_m);
    let sup = to_f64(setup.sup_x1);
    let pn = to_f64(setup.projection_norm);

    let norms = match theorem {
        Theorem::Remark43 => {
            let r = model.r_cov.as_matrix();
            let r_min = to_f64(min_eigenvalue(r));
            let r_inv_trace = to_f64(spd_inverse(r)?.trace());
            let p_pred = to_f64(op_norm(&reduced.p_pred_reduced));
            let mut relaxed = NormInputs {
                p_pred,
                innovation_inv: 1.0 / r_min,
                innovation_inv_trace: r_inv_trace,
                kc: p_pred * setup.norms.c.powi(2) / r_min,
                ..setup.norms
            };
            let dk = delta_k_bound(&relaxed, tr_m);
            let reduced_phi = to_f64(op_norm(&reduced_loop.closed_loop));
            relaxed.closed_loop = (2.0 * reduced_phi.powi(2) + 2.0 * relaxed.ca.powi(2) * dk.powi(2)).sqrt();
            relaxed
        }
        _ => setup.norms,
    };
    let constants = BoundConstants::assemble(&norms, l_tilde, tr_m);
    let (dp, denominator_ok) = tr_dp_bound(&constants, tr_m);
    let leading = (1.0 + constants.a) * sup;
    let second = constants.b * sup * sup;
    let value = leading * pn.powi(2) + second * pn.powi(4);
    Ok(BoundReport {
        theorem,
        flags: flags(to_f64(setup.stability.rho), &setup.norms, tr_m, denominator_ok),
        tr_dp_bound: denominator_ok.then_some(dp),
        total_bound: denominator_ok.then_some(dp + tr_m),
        denominator_ok,
        projection_norm: pn,
        sup_x1: sup,
        leading_constant: leading,
        second_constant: Some(second),
        value,
        constants,
    })
}

/// A-posteriori bound `C₁‖I−Π_s‖² + C₂‖I−Π_s‖⁴` with the trace constant
/// `L̃₀` of the converged reduced closed loop `A − K_∞CA`.
pub fn a_posteriori_bound<T: Real>(
    setup: &BoundSetup<T>,
    reduced: &StationaryDiscrepancy<T>,
    model: &LgssModel<T>,
    opts: BoundOptions<T>,
) -> Result<BoundReport> {
    posteriori_report(setup, reduced, model, Theorem::APosteriori, opts)
}

/// The a-posteriori bound with every full-filter quantity replaced by an
/// upper estimate from reduced-filter data and `R`.
pub fn remark43_bound<T: Real>(
    setup: &BoundSetup<T>,
    reduced: &StationaryDiscrepancy<T>,
    model: &LgssModel<T>,
    opts: BoundOptions<T>,
) -> Result<BoundReport> {
    posteriori_report(setup, reduced, model, Theorem::Remark43, opts)
}

/// `ΔP` with the terms of its two fixed-point representations.
#[derive(Debug, Clone)]
pub struct DeltaPDecomposition<T: Real> {
    pub delta_p: DMatrix<T>,
    pub delta_k: DMatrix<T>,
    pub e1: DMatrix<T>,
    pub e2: DMatrix<T>,
    pub h1: DMatrix<T>,
    pub h2: DMatrix<T>,
    /// `‖ΔP − ΦΔPΦᵀ − E₁ − E₂ − h₁ − h₂‖_∞`.
    pub residual_full_form: T,
    /// `‖ΔP − Φ_bΔPΦ_bᵀ − E₁ − E₂ − h₂‖_∞`, `Φ_b = A − K^b C A`.
    pub residual_alt_form: T,
    /// `‖ΔP − ΦΔPΦᵀ − E₁ + ΔK S_b ΔKᵀ‖_∞`, `S_b = CP̃^bCᵀ + R`.
    pub residual_joseph_full: T,
    /// `‖ΔP − Φ_bΔPΦ_bᵀ − (I−K^bC)AMAᵀ(I−K^bC)ᵀ − ΔK S_F ΔKᵀ‖_∞`.
    pub residual_joseph_b: T,
    pub dare_f: DareSolution<T>,
    pub dare_b: DareSolution<T>,
}

/// Solves both DAREs and assembles `E₁, E₂, h₁, h₂` term by term.
pub fn delta_p_exact<T: Real>(
    model: &LgssModel<T>,
    m: &PsdMatrix<T>,
    dare_f: Option<DareSolution<T>>,
    opts: BoundOptions<T>,
) -> Result<DeltaPDecomposition<T>> {
    let n = model.state_dim();
    let w = model.process_noise();
    let zero = DMatrix::zeros(n, n);
    let (a, c, r) = (&model.a, &model.c, model.r_cov.as_matrix());
    let dare_f = match dare_f {
        Some(d) => d,
        None => dare_solve(a, &w, c, r, &zero, opts.dare_tol, opts.dare_max_iter)?,
    };
    let ama = symmetrize(&(a * m.as_matrix() * a.transpose()));
    let dare_b = dare_solve(a, &(&w + &ama), c, r, &zero, opts.dare_tol, opts.dare_max_iter)?;

    let eye = DMatrix::<T>::identity(n, n);
    let ct = c.transpose();
    let delta_p = symmetrize(&(&dare_b.p - &dare_f.p));
    let delta_k = &dare_f.gain - &dare_b.gain;
    let ikc = &eye - &dare_f.gain * c;
    let ikc_b = &eye - &dare_b.gain * c;
    let ca = c * a;
    let phi = a - &dare_f.gain * &ca;
    let phi_b = a - &dare_b.gain * &ca;
    let dkca = &delta_k * &ca;

    let e1 = &ikc * &ama * ikc.transpose();
    let shifted_inv = spd_inverse(&innovation_cov(model, &(&dare_f.p_pred + &ama)))?;
    let cama = c * &ama;
    let e2 = -(&ikc * cama.transpose() * &shifted_inv * &cama * ikc.transpose())
        + &dare_f.gain * &cama * &ct * &shifted_inv * &cama * &ct * dare_f.gain.transpose();
    let h1 =
        &dkca * &delta_p * phi.transpose() + &phi * &delta_p * dkca.transpose() + &dkca * &delta_p * dkca.transpose();
    let full_shift = &dare_f.p_pred + &ama + a * &delta_p * a.transpose();
    let s_b = innovation_cov(model, &full_shift);
    let s_b_inv = spd_inverse(&s_b)?;
    let h2 = -(&phi_b * &delta_p * a.transpose() * &ct * &s_b_inv * &ca * &delta_p * phi_b.transpose());

    let residual_full_form = max_abs(&(&delta_p - &phi * &delta_p * phi.transpose() - &e1 - &e2 - &h1 - &h2));
    let residual_alt_form = max_abs(&(&delta_p - &phi_b * &delta_p * phi_b.transpose() - &e1 - &e2 - &h2));
    let s_f = innovation_cov(model, &dare_f.p_pred);
    let residual_joseph_full =
        max_abs(&(&delta_p - &phi * &delta_p * phi.transpose() - &e1 + &delta_k * &s_b * delta_k.transpose()));
    let residual_joseph_b = max_abs(
        &(&delta_p
            - &phi_b * &delta_p * phi_b.transpose()
            - &ikc_b * &ama * ikc_b.transpose()
            - &delta_k * &s_f * delta_k.transpose()),
    );
    Ok(DeltaPDecomposition {
        delta_p,
        delta_k,
        e1,
        e2,
        h1,
        h2,
        residual_full_form,
        residual_alt_form,
        residual_joseph_full,
        residual_joseph_b,
        dare_f,
        dare_b,
    })
}

/// Exact `tr ΔP` and `‖ΔK‖_HS` for a load `M` next to their estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceCheck {
    pub tr_m: f64,
    pub tr_dp_exact: f64,
    pub tr_dp_bound: Option<f64>,
    pub denominator_ok: bool,
    pub delta_k_hs: f64,
    pub delta_k_bound: f64,
    pub residual_full_form: f64,
    pub residual_alt_form: f64,
}

impl TraceCheck {
    /// Whether every available estimate dominates its exact value.
    pub fn dominated(&self) -> bool {
        self.delta_k_hs <= self.delta_k_bound && self.tr_dp_bound.is_none_or(|b| self.tr_dp_exact <= b)
    }
}

/// Solves the perturbed DARE for `m` and compares with the trace and gain
/// estimates built on `setup`.
pub fn trace_check<T: Real>(
    model: &LgssModel<T>,
    setup: &BoundSetup<T>,
    m: &PsdMatrix<T>,
    opts: BoundOptions<T>,
) -> Result<TraceCheck> {
    let dp = delta_p_exact(model, m, Some(setup.dare_f.clone()), opts)?;
    let tr_m = to_f64(m.as_matrix().trace());
    let constants = BoundConstants::assemble(&setup.norms, to_f64(setup.l0), tr_m);
    let (bound, denominator_ok) = tr_dp_bound(&constants, tr_m);
    Ok(TraceCheck {
        tr_m,
        tr_dp_exact: to_f64(dp.delta_p.trace()),
        tr_dp_bound: denominator_ok.then_some(bound),
        denominator_ok,
        delta_k_hs: to_f64(dp.delta_k.norm()),
        delta_k_bound: delta_k_bound(&setup.norms, tr_m),
        residual_full_form: to_f64(dp.residual_full_form),
        residual_alt_form: to_f64(dp.residual_alt_form),
    })
}
