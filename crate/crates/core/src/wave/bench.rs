//! Monte Carlo error study and refinement sweep on the wave benchmark.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::model::{build_mesh_projection, build_wave_model, WaveParams, WaveSystem};
use crate::bounds::{
    a_posteriori_bound, a_priori_bound, projection_norm, remark43_bound, trace_check, BoundOptions, BoundReport,
    BoundSetup, TraceCheck,
};
use crate::error::{Error, Result};
use crate::filters::{
    approx_stationary_filter, full_kf_offline, reduced_offline, NaiveFilter, OnlineFilter, StationaryFilter,
    StationaryOptions, Storage,
};
use crate::lgss::{LgssModel, Simulator};
use crate::linalg::{psd_factor, spectral_radius, symmetrize, ProjectionPair, PsdMatrix};
use crate::riccati::{dare_solve, lyapunov_solve, stationary_discrepancy, DiscrepancyOptions};
use crate::scalar::{lit, to_f64, Real};

/// Monte Carlo protocol.
#[derive(Debug, Clone, Copy)]
pub struct McOptions {
    pub n_sims: usize,
    pub burn_in: usize,
    pub eval_steps: usize,
    /// Trajectory `i` uses seed `seed + i`.
    pub seed: u64,
    /// Number of leading coordinates reported as "position".
    pub split: usize,
}

/// Per-method Monte Carlo statistics; every mean is over simulations of the
/// per-trajectory time average over the evaluation window.
#[derive(Debug, Clone, Serialize)]
pub struct MethodStats {
    pub name: String,
    pub position: f64,
    pub velocity: f64,
    pub se_position: f64,
    pub se_velocity: f64,
    /// `E‖x̂ − x̂_first‖²` against the first filter of the run.
    pub dist_to_first: f64,
    pub se_dist_to_first: f64,
    /// `E⟨x̂, x − x̂⟩`.
    pub orthogonality: f64,
    pub se_orthogonality: f64,
}

fn mean_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every filter on the same simulated trajectories.
pub fn monte_carlo<T: Real>(
    model: &LgssModel<T>,
    filters: &[&dyn OnlineFilter<T>],
    opts: McOptions,
) -> Result<Vec<MethodStats>> {
    let total = opts.burn_in + opts.eval_steps;
    if opts.n_sims == 0 || opts.eval_steps == 0 {
        return Err(Error::InvalidParameter("n_sims and eval_steps must be positive".into()));
    }
    if let Some(f) = filters.iter().find(|f| f.horizon() < total) {
        return Err(Error::InvalidParameter(format!(
            "filter `{}` covers {} steps, the run needs {total}",
            f.name(),
            f.horizon()
        )));
    }
    let input_factor = psd_factor(&model.u_cov);
    let output_factor = psd_factor(&model.r_cov);
    let nf = filters.len();
    let per_sim: Vec<Vec<[f64; 4]>> = (0..opts.n_sims)
        .into_par_iter()
        .map(|i| {
            let seed = opts.seed.wrapping_add(i as u64);
            let mut sim = Simulator::with_factors(model, input_factor.clone(), output_factor.clone(), seed);
            let mut x = sim.initial_state();
            let mut states: Vec<DVector<T>> = filters.iter().map(|f| f.initial()).collect();
            let mut acc = vec![[0.0f64; 4]; nf];
            for k in 1..=total {
                let (xn, y) = sim.step(&x);
                x = xn;
                for (s, f) in states.iter_mut().zip(filters) {
                    *s = f.step(k, s, &y);
                }
                if k > opts.burn_in {
                    let mut first: Option<DVector<T>> = None;
                    for (j, (s, f)) in states.iter().zip(filters).enumerate() {
                        let est = f.fine_estimate(k, s);
                        let err = &x - &est;
                        let pos = to_f64(err.rows(0, opts.split).norm_squared());
                        let vel = to_f64(err.rows(opts.split, err.len() - opts.split).norm_squared());
                        let dist = first.as_ref().map_or(0.0, |e0| to_f64((&est - e0).norm_squared()));
                        let orth = to_f64(est.dot(&err));
                        let a = &mut acc[j];
                        a[0] += pos;
                        a[1] += vel;
                        a[2] += dist;
                        a[3] += orth;
                        if j == 0 {
                            first = Some(est);
                        }
                    }
                }
            }
            let scale = 1.0 / opts.eval_steps as f64;
            acc.iter().map(|a| a.map(|v| v * scale)).collect()
        })
        .collect();
    Ok(filters
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let col = |c: usize| per_sim.iter().map(move |s| s[j][c]);
            let (position, se_position) = mean_se(col(0));
            let (velocity, se_velocity) = mean_se(col(1));
            let (dist_to_first, se_dist_to_first) = mean_se(col(2));
            let (orthogonality, se_orthogonality) = mean_se(col(3));
            MethodStats {
                name: f.name().to_string(),
                position,
                velocity,
                se_position,
                se_velocity,
                dist_to_first,
                se_dist_to_first,
                orthogonality,
                se_orthogonality,
            }
        })
        .collect())
}

/// Stationary covariance of `x − H x̃` for a time-invariant filter
/// `x̃_k = F x̃_{k-1} + G y_k` run on `model`.
pub fn stationary_error_covariance<T: Real>(
    model: &LgssModel<T>,
    f: &DMatrix<T>,
    g: &DMatrix<T>,
    h: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let n = model.state_dim();
    let nc = f.nrows();
    let (q, m) = (model.input_dim(), model.output_dim());
    let mut a_bar = DMatrix::zeros(n + nc, n + nc);
    a_bar.view_mut((0, 0), (n, n)).copy_from(&model.a);
    a_bar.view_mut((n, 0), (nc, n)).copy_from(&(g * &model.c * &model.a));
    a_bar.view_mut((n, n), (nc, nc)).copy_from(f);
    let mut b_bar = DMatrix::zeros(n + nc, q + m);
    b_bar.view_mut((0, 0), (n, q)).copy_from(&model.b);
    b_bar.view_mut((n, 0), (nc, q)).copy_from(&(g * &model.c * &model.b));
    b_bar.view_mut((n, q), (nc, m)).copy_from(g);
    let mut u_bar = DMatrix::zeros(q + m, q + m);
    u_bar.view_mut((0, 0), (q, q)).copy_from(model.u_cov.as_matrix());
    u_bar.view_mut((q, q), (m, m)).copy_from(model.r_cov.as_matrix());
    let w_bar = symmetrize(&(&b_bar * u_bar * b_bar.transpose()));
    let s_bar = lyapunov_solve(&a_bar, &w_bar, lit(1e-12), 200)?;
    let mut l = DMatrix::zeros(n, n + nc);
    l.view_mut((0, 0), (n, n)).fill_with_identity();
    l.view_mut((0, n), (n, nc)).copy_from(&(-h));
    Ok(symmetrize(&(&l * s_bar * l.transpose())))
}

/// Method tags of the error table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    /// Full fine-mesh Kalman filter.
    F,
    /// Optimal reduced-order filter.
    A,
    /// Kalman filter of the projected coarse model.
    C,
    #[serde(rename = "approx_stationary")]
    ApproxStationary,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::F => "F",
            Method::A => "A",
            Method::C => "C",
            Method::ApproxStationary => "approx_stationary",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchResult {
    pub method: Method,
    pub mean_sq_err_position: f64,
    pub mean_sq_err_velocity: f64,
    pub se_position: f64,
    pub se_velocity: f64,
    /// Monte Carlo `E‖x̂_method − x̂_F‖²`.
    pub mean_sq_dist_to_full: f64,
    pub se_dist_to_full: f64,
    /// `E⟨x̂, x − x̂⟩`, zero for a conditional mean.
    pub orthogonality: f64,
    pub se_orthogonality: f64,
    /// Exact stationary error traces (position, velocity) from covariances.
    pub analytic_position: f64,
    pub analytic_velocity: f64,
    pub n_sims: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1Report {
    pub results: Vec<BenchResult>,
    /// `ρ(A − K C A)` with the final full gain.
    pub spectral_radius_full: f64,
    /// `ρ(A − K C A)` with the final reduced gain.
    pub spectral_radius_reduced: f64,
    /// `tr P_K − tr P^F_K` at the end of the schedules.
    pub trace_discrepancy: f64,
}

impl Table1Report {
    pub fn get(&self, method: Method) -> Option<&BenchResult> {
        self.results.iter().find(|r| r.method == method)
    }
}

fn split_traces<T: Real>(cov: &DMatrix<T>, split: usize) -> (f64, f64) {
    let d = cov.diagonal();
    let pos: T = d.rows(0, split).sum();
    let vel: T = d.rows(split, d.len() - split).sum();
    (to_f64(pos), to_f64(vel))
}

fn bench_result(method: Method, stats: &MethodStats, analytic: (f64, f64), n_sims: usize, seed: u64) -> BenchResult {
    BenchResult {
        method,
        mean_sq_err_position: stats.position,
        mean_sq_err_velocity: stats.velocity,
        se_position: stats.se_position,
        se_velocity: stats.se_velocity,
        mean_sq_dist_to_full: stats.dist_to_first,
        se_dist_to_full: stats.se_dist_to_first,
        orthogonality: stats.orthogonality,
        se_orthogonality: stats.se_orthogonality,
        analytic_position: analytic.0,
        analytic_velocity: analytic.1,
        n_sims,
        seed,
    }
}

fn mc_options(params: &WaveParams, seed: u64) -> McOptions {
    McOptions {
        n_sims: params.n_sims,
        burn_in: params.burn_in,
        eval_steps: params.eval_steps,
        seed,
        split: params.n_f,
    }
}

fn stationary_filter_for<T: Real>(
    sys: &WaveSystem<T>,
    proj: &ProjectionPair<T>,
    horizon: usize,
) -> Result<(StationaryFilter<T>, (f64, f64))> {
    let st = approx_stationary_filter(&sys.model, proj, StationaryOptions::default())?.with_horizon(horizon);
    let nc = proj.coarse_dim();
    let f = (DMatrix::identity(nc, nc) - st.gain() * &st.coarse_output) * &st.coarse_transition;
    let cov = stationary_error_covariance(&sys.model, &f, st.gain(), &st.q_hat)?;
    Ok((st, split_traces(&cov, sys.split())))
}

/// Full, reduced, naive and approximate stationary filters on common
/// trajectories.
pub fn run_table1(params: &WaveParams, seed: u64) -> Result<Table1Report> {
    let sys = build_wave_model::<f64>(params)?;
    let proj = build_mesh_projection(params.n_f, params.n_c, &sys.fine_map)?;
    let model = &sys.model;
    let horizon = params.burn_in + params.eval_steps;
    let split = sys.split();

    let full = full_kf_offline(model, horizon, Storage::Compact)?;
    let reduced = reduced_offline(model, &proj, horizon, Storage::Compact)?;
    let naive = NaiveFilter::new(model, &proj, horizon)?;
    let (stationary, stationary_analytic) = stationary_filter_for(&sys, &proj, horizon)?;

    let nc = proj.coarse_dim();
    let naive_gain = naive.schedule.gain(horizon).clone();
    let naive_model = crate::filters::projected_model(model, &proj)?;
    let naive_f = (DMatrix::identity(nc, nc) - &naive_gain * &naive_model.c) * &naive_model.a;
    let naive_cov = stationary_error_covariance(model, &naive_f, &naive_gain, &proj.pi_adjoint())?;

    let filters: [&dyn OnlineFilter<f64>; 4] = [&full, &reduced, &naive, &stationary];
    let stats = monte_carlo(model, &filters, mc_options(params, seed))?;
    let analytic = [
        split_traces(&full.last().p, split),
        split_traces(&reduced.last().err_cov, split),
        split_traces(&naive_cov, split),
        stationary_analytic,
    ];
    let methods = [Method::F, Method::A, Method::C, Method::ApproxStationary];
    let results = methods
        .iter()
        .zip(&stats)
        .zip(analytic)
        .map(|((m, s), an)| bench_result(*m, s, an, params.n_sims, seed))
        .collect();

    let closed = |k: &DMatrix<f64>| &model.a - k * &model.c * &model.a;
    Ok(Table1Report {
        results,
        spectral_radius_full: spectral_radius(&closed(&full.last().gain)),
        spectral_radius_reduced: spectral_radius(&closed(&reduced.step(horizon).gain)),
        trace_discrepancy: reduced.last().err_cov.trace() - full.last().p.trace(),
    })
}

/// Monte Carlo evaluation of the approximate stationary filter alone.
pub fn run_stationary_approx(params: &WaveParams, seed: u64) -> Result<BenchResult> {
    let sys = build_wave_model::<f64>(params)?;
    let proj = build_mesh_projection(params.n_f, params.n_c, &sys.fine_map)?;
    let horizon = params.burn_in + params.eval_steps;
    let (st, analytic) = stationary_filter_for(&sys, &proj, horizon)?;
    let stats = monte_carlo(&sys.model, &[&st], mc_options(params, seed))?;
    Ok(bench_result(
        Method::ApproxStationary,
        &stats[0],
        analytic,
        params.n_sims,
        seed,
    ))
}

/// `‖I − Π_s‖` from the smoother space into the energy space.
pub fn projection_error_norm<T: Real>(sys: &WaveSystem<T>, proj: &ProjectionPair<T>) -> Result<T> {
    projection_norm(proj, &PsdMatrix::new(sys.x1_weight())?)
}

/// Bound values at one sweep point.
#[derive(Debug, Clone, Serialize)]
pub struct SweepBounds {
    /// A-priori report, `None` when its hypotheses fail.
    pub a_priori: Option<BoundReport>,
    pub a_priori_failure: Option<String>,
    pub a_posteriori: BoundReport,
    pub remark43: BoundReport,
    /// `tr M` with `M = (I−Π_s)S(I−Π_s)` from the stationary state covariance.
    pub tr_m_state: f64,
    /// Trace and gain estimates against exact values, at the converged load `M_∞`.
    pub check_converged_load: TraceCheck,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub n_c: usize,
    pub h_c: f64,
    /// Stationary `tr P − tr P^F`.
    pub discrepancy: f64,
    /// `tr M_∞`.
    pub tr_m: f64,
    /// `‖I − Π_s‖_{L(X₁, X)}`.
    pub projection_norm: f64,
    pub iterations: usize,
    pub bounds: Option<SweepBounds>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub n_f: usize,
    pub points: Vec<SweepPoint>,
    /// Least-squares fit `log d = log_coef + exponent·log h`.
    pub log_coef: f64,
    pub coefficient: f64,
    pub exponent: f64,
}

impl SweepReport {
    /// Whether the discrepancy decreases strictly along the sweep order.
    pub fn strictly_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].discrepancy < w[0].discrepancy)
    }
}

/// Least-squares line through `(log h, log d)`; returns `(intercept, slope)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 || points.iter().any(|(h, d)| *h <= 0.0 || *d <= 0.0) {
        return Err(Error::InvalidParameter(
            "power-law fit needs at least two points with positive coordinates".into(),
        ));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "power-law fit needs distinct mesh widths".into(),
        ));
    }
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

/// Coarse mesh sizes of the default refinement study.
pub const DEFAULT_SWEEP: [usize; 4] = [1, 2, 5, 10];

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    pub discrepancy: DiscrepancyOptions<f64>,
    /// Evaluate the bounds at every point when set.
    pub bounds: Option<BoundOptions<f64>>,
}

/// Stationary discrepancy for each coarse mesh, the power-law fit and
/// optionally the bounds. Points are evaluated in parallel.
pub fn convergence_study(params: &WaveParams, coarse_sizes: &[usize], opts: SweepOptions) -> Result<SweepReport> {
    let sys = build_wave_model::<f64>(params)?;
    let x1 = PsdMatrix::new(sys.x1_weight())?;
    let shared = match opts.bounds {
        Some(b) => {
            let w = sys.model.process_noise();
            let s_inf = lyapunov_solve(&sys.model.a, &w, b.lyapunov_tol, 200)?;
            let n = sys.model.state_dim();
            let dare_f = dare_solve(
                &sys.model.a,
                &w,
                &sys.model.c,
                sys.model.r_cov.as_matrix(),
                &DMatrix::zeros(n, n),
                b.dare_tol,
                b.dare_max_iter,
            )?;
            Some((s_inf, dare_f, b))
        }
        None => None,
    };
    let points = coarse_sizes
        .par_iter()
        .map(|&n_c| -> Result<SweepPoint> {
            let proj = build_mesh_projection(params.n_f, n_c, &sys.fine_map)?;
            let disc = stationary_discrepancy(&sys.model, &proj, opts.discrepancy)?;
            let bounds = match &shared {
                Some((s_inf, dare_f, b)) => {
                    let setup = BoundSetup::with_dare(&sys.model, &proj, &x1, s_inf.clone(), dare_f.clone(), *b)?;
                    let (a_priori, a_priori_failure) = match a_priori_bound(&setup) {
                        Ok(r) => (Some(r), None),
                        Err(Error::AssumptionFailed(why)) => (None, Some(why)),
                        Err(e) => return Err(e),
                    };
                    Some(SweepBounds {
                        a_priori,
                        a_priori_failure,
                        a_posteriori: a_posteriori_bound(&setup, &disc, &sys.model, *b)?,
                        remark43: remark43_bound(&setup, &disc, &sys.model, *b)?,
                        tr_m_state: setup.tr_m,
                        check_converged_load: trace_check(&sys.model, &setup, &PsdMatrix::new(disc.load.clone())?, *b)?,
                    })
                }
                None => None,
            };
            Ok(SweepPoint {
                n_c,
                h_c: 1.0 / (n_c + 1) as f64,
                discrepancy: disc.discrepancy,
                tr_m: disc.tr_m,
                projection_norm: projection_norm(&proj, &x1)?,
                iterations: disc.iterations,
                bounds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.h_c, p.discrepancy)).collect();
    let (log_coef, exponent) = fit_power_law(&pairs)?;
    Ok(SweepReport {
        n_f: params.n_f,
        points,
        log_coef,
        coefficient: log_coef.exp(),
        exponent,
    })
}
