use std::path::{Path, PathBuf};

use rokf::bounds::{a_posteriori_bound, a_priori_bound, remark43_bound, trace_check, BoundReport, BoundSetup};
use rokf::filters::{full_kf_offline, reduced_offline, trace_rows, Storage};
use rokf::lgss::simulate;
use rokf::linalg::{spectral_radius, ProjectionPair, PsdMatrix};
use rokf::riccati::stationary_discrepancy;
use rokf::wave::{
    build_mesh_projection, build_wave_model, convergence_study, run_stationary_approx, run_table1, BenchResult, Method,
    SweepOptions, SweepReport,
};
use rokf::{Error, LgssModelF64};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ModelSource, RunConfig, Tolerances};
use crate::report::{num, write_csv, write_summary};
use crate::CliError;

/// Resolved inputs of one invocation; echoed into every summary.
#[derive(Debug, Clone, Serialize)]
pub struct Context {
    pub config: RunConfig,
    pub seed: u64,
    pub tolerances: Tolerances,
    #[serde(skip)]
    pub out: PathBuf,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn wave_only(&self, command: &str) -> Result<(), CliError> {
        match &self.config.model {
            ModelSource::WaveBuiltin => Ok(()),
            ModelSource::JsonPath(_) => Err(CliError::Config(format!("`{command}` needs the built-in wave model"))),
        }
    }

    /// Model and projection for commands that accept either source.
    fn model_and_projection(&self) -> Result<(LgssModelF64, ProjectionPair<f64>, PsdMatrix<f64>), CliError> {
        match &self.config.model {
            ModelSource::WaveBuiltin => {
                let p = &self.config.params;
                let sys = build_wave_model::<f64>(p)?;
                let proj = build_mesh_projection(p.n_f, p.n_c, &sys.fine_map)?;
                let x1 = PsdMatrix::new(sys.x1_weight())?;
                Ok((sys.model, proj, x1))
            }
            ModelSource::JsonPath(path) => {
                let (model, proj, x1) = self.config.file_model(path)?;
                let proj = proj.ok_or_else(|| CliError::Config("a model file needs `projection` rows".into()))?;
                Ok((model, proj, x1))
            }
        }
    }

    fn model(&self) -> Result<LgssModelF64, CliError> {
        match &self.config.model {
            ModelSource::WaveBuiltin => Ok(build_wave_model::<f64>(&self.config.params)?.model),
            ModelSource::JsonPath(path) => Ok(self.config.file_model(path)?.0),
        }
    }
}

fn relative_spread(values: &[f64]) -> f64 {
    let last = *values.last().unwrap_or(&0.0);
    let spread = values.iter().map(|v| (v - last).abs()).fold(0.0, f64::max);
    if last == 0.0 {
        spread
    } else {
        spread / last.abs()
    }
}

pub fn offline(ctx: &Context) -> Result<String, CliError> {
    let (model, proj, _) = ctx.model_and_projection()?;
    let horizon = ctx.config.horizon();
    if horizon == 0 {
        return Err(CliError::Config("horizon must be positive".into()));
    }
    let full = full_kf_offline(&model, horizon, Storage::Compact)?;
    let reduced = reduced_offline(&model, &proj, horizon, Storage::Compact)?;
    let rows = trace_rows(&reduced, &full);
    let header = [
        "k",
        "tr_s",
        "tr_p_reduced",
        "tr_p_full",
        "tr_m",
        "gain_norm_reduced",
        "gain_norm_full",
    ];
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                num(r.tr_s),
                num(r.tr_p_reduced),
                num(r.tr_p_full),
                num(r.tr_m),
                num(r.gain_norm_reduced),
                num(r.gain_norm_full),
            ]
        })
        .collect();
    write_csv(&ctx.path("offline_traces.csv"), &header, &csv)?;

    let tail = &rows[rows.len().saturating_sub(100)..];
    let last = rows.last().expect("horizon is positive");
    let closed = |k: &nalgebra::DMatrix<f64>| spectral_radius(&(&model.a - k * &model.c * &model.a));
    let results = json!({
        "horizon": horizon,
        "final": last,
        "discrepancy": last.tr_p_reduced - last.tr_p_full,
        "tail_rows": tail.len(),
        "tail_relative_spread_tr_p_reduced": relative_spread(&tail.iter().map(|r| r.tr_p_reduced).collect::<Vec<_>>()),
        "tail_relative_spread_tr_p_full": relative_spread(&tail.iter().map(|r| r.tr_p_full).collect::<Vec<_>>()),
        "spectral_radius_full": closed(&full.last().gain),
        "spectral_radius_reduced": closed(&reduced.step(horizon).gain),
    });
    write_summary(&ctx.path("offline.json"), "offline", ctx, results)?;
    Ok(format!(
        "offline: {horizon} steps, final tr P = {} (reduced), {} (full)",
        num(last.tr_p_reduced),
        num(last.tr_p_full)
    ))
}

pub fn simulate_cmd(ctx: &Context) -> Result<String, CliError> {
    let model = ctx.model()?;
    let horizon = ctx.config.horizon();
    let traj = simulate(&model, horizon, ctx.seed)?;
    let (n, m) = (model.state_dim(), model.output_dim());
    let mut header: Vec<String> = vec!["k".into()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("y{i}")));
    let rows: Vec<Vec<String>> = traj
        .states
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let mut row = vec![k.to_string()];
            row.extend(x.iter().map(|v| num(*v)));
            match k.checked_sub(1).and_then(|j| traj.outputs.get(j)) {
                Some(y) => row.extend(y.iter().map(|v| num(*v))),
                None => row.extend((0..m).map(|_| String::new())),
            }
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&ctx.path("trajectory.csv"), &header_refs, &rows)?;
    let mean_sq = traj.states.iter().map(|x| x.norm_squared()).sum::<f64>() / traj.states.len() as f64;
    let results = json!({
        "horizon": horizon,
        "state_dim": n,
        "output_dim": m,
        "mean_sq_state_norm": mean_sq,
    });
    write_summary(&ctx.path("simulate.json"), "simulate", ctx, results)?;
    Ok(format!("simulate: {horizon} steps, seed {}", ctx.seed))
}

fn bench_rows(results: &[BenchResult]) -> Vec<Vec<String>> {
    results
        .iter()
        .flat_map(|r| {
            [
                ("position", r.mean_sq_err_position, r.se_position, r.analytic_position),
                ("velocity", r.mean_sq_err_velocity, r.se_velocity, r.analytic_velocity),
            ]
            .map(|(metric, mean, se, analytic)| {
                vec![
                    r.method.tag().to_string(),
                    metric.to_string(),
                    num(mean),
                    num(se),
                    num(analytic),
                    r.n_sims.to_string(),
                    r.seed.to_string(),
                ]
            })
        })
        .collect()
}

const BENCH_HEADER: [&str; 7] = [
    "method",
    "metric",
    "mean_sq_err",
    "std_err",
    "analytic",
    "n_sims",
    "seed",
];

pub fn table1(ctx: &Context) -> Result<String, CliError> {
    ctx.wave_only("table1")?;
    let report = run_table1(&ctx.config.params, ctx.seed)?;
    write_csv(&ctx.path("table1.csv"), &BENCH_HEADER, &bench_rows(&report.results))?;
    let get = |m| report.get(m).expect("all methods are run");
    let (f, a, c) = (get(Method::F), get(Method::A), get(Method::C));
    let ordered = f.mean_sq_err_position <= a.mean_sq_err_position
        && a.mean_sq_err_position <= c.mean_sq_err_position
        && f.mean_sq_err_velocity <= a.mean_sq_err_velocity
        && a.mean_sq_err_velocity <= c.mean_sq_err_velocity;
    let results = json!({ "report": report, "ordering_f_a_c": ordered });
    write_summary(&ctx.path("table1.json"), "table1", ctx, results)?;
    let mut out = String::from("method  position      velocity\n");
    for r in &report.results {
        out.push_str(&format!(
            "{:<7} {:.6}  {:.6}\n",
            r.method.tag(),
            r.mean_sq_err_position,
            r.mean_sq_err_velocity
        ));
    }
    Ok(out.trim_end().to_string())
}

pub fn stationary(ctx: &Context) -> Result<String, CliError> {
    ctx.wave_only("stationary")?;
    let result = run_stationary_approx(&ctx.config.params, ctx.seed)?;
    write_csv(
        &ctx.path("stationary.csv"),
        &BENCH_HEADER,
        &bench_rows(std::slice::from_ref(&result)),
    )?;
    write_summary(&ctx.path("stationary.json"), "stationary", ctx, json!(result))?;
    Ok(format!(
        "stationary: position {:.6}, velocity {:.6}",
        result.mean_sq_err_position, result.mean_sq_err_velocity
    ))
}

fn sweep_summary(report: &SweepReport) -> Value {
    json!({
        "report": report,
        "strictly_decreasing": report.strictly_decreasing(),
    })
}

pub fn sweep(ctx: &Context) -> Result<String, CliError> {
    ctx.wave_only("sweep")?;
    let opts = SweepOptions {
        discrepancy: ctx.tolerances.discrepancy(),
        bounds: None,
    };
    let report = convergence_study(&ctx.config.params, &ctx.config.sweep, opts)?;
    let header = ["n_c", "h_c", "discrepancy", "tr_m", "projection_norm", "iterations"];
    let rows: Vec<Vec<String>> = report
        .points
        .iter()
        .map(|p| {
            vec![
                p.n_c.to_string(),
                num(p.h_c),
                num(p.discrepancy),
                num(p.tr_m),
                num(p.projection_norm),
                p.iterations.to_string(),
            ]
        })
        .collect();
    write_csv(&ctx.path("sweep.csv"), &header, &rows)?;
    write_summary(&ctx.path("sweep.json"), "sweep", ctx, sweep_summary(&report))?;
    Ok(format!(
        "sweep: discrepancy ≈ {} h^{}",
        num(report.coefficient),
        num(report.exponent)
    ))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), num)
}

pub fn bounds(ctx: &Context) -> Result<String, CliError> {
    match &ctx.config.model {
        ModelSource::WaveBuiltin => wave_bounds(ctx),
        ModelSource::JsonPath(path) => file_bounds(ctx, path),
    }
}

fn wave_bounds(ctx: &Context) -> Result<String, CliError> {
    let opts = SweepOptions {
        discrepancy: ctx.tolerances.discrepancy(),
        bounds: Some(ctx.tolerances.bounds()),
    };
    let report = convergence_study(&ctx.config.params, &ctx.config.sweep, opts)?;
    let header = [
        "n_c",
        "h_c",
        "projection_norm",
        "discrepancy",
        "tr_m_converged",
        "tr_m_state",
        "a_priori",
        "a_posteriori",
        "remark43",
        "tr_dp_exact",
        "tr_dp_bound",
        "delta_k_hs",
        "delta_k_bound",
    ];
    let rows: Vec<Vec<String>> = report
        .points
        .iter()
        .filter_map(|p| p.bounds.as_ref().map(|b| (p, b)))
        .map(|(p, b)| {
            let chk = &b.check_converged_load;
            vec![
                p.n_c.to_string(),
                num(p.h_c),
                num(p.projection_norm),
                num(p.discrepancy),
                num(p.tr_m),
                num(b.tr_m_state),
                opt(b.a_priori.as_ref().map(|r| r.value)),
                num(b.a_posteriori.value),
                num(b.remark43.value),
                num(chk.tr_dp_exact),
                opt(chk.tr_dp_bound),
                num(chk.delta_k_hs),
                num(chk.delta_k_bound),
            ]
        })
        .collect();
    write_csv(&ctx.path("bounds.csv"), &header, &rows)?;
    write_summary(&ctx.path("bounds.json"), "bounds", ctx, sweep_summary(&report))?;
    Ok(format!("bounds: {} sweep points", report.points.len()))
}

fn report_or_reason(r: rokf::Result<BoundReport>) -> Result<Value, CliError> {
    match r {
        Ok(report) => Ok(json!({ "applicable": true, "report": report })),
        Err(Error::AssumptionFailed(why)) => Ok(json!({ "applicable": false, "reason": why })),
        Err(e) => Err(e.into()),
    }
}

fn file_bounds(ctx: &Context, path: &Path) -> Result<String, CliError> {
    let (model, proj, x1) = ctx.config.file_model(path)?;
    let proj = proj.unwrap_or_else(|| ProjectionPair::identity(model.state_dim()));
    let opts = ctx.tolerances.bounds();
    let header = ["bound", "applicable", "value"];
    let (results, rows) = match BoundSetup::new(&model, &proj, &x1, opts) {
        Err(e @ (Error::AssumptionFailed(_) | Error::Unstable { .. })) => {
            let reason = e.to_string();
            let lyapunov_converged = !reason.contains("state covariance");
            let results = json!({
                "applicable": false,
                "reason": reason,
                "flags": {
                    "lyapunov_converged": lyapunov_converged,
                    "closed_loop_stable": lyapunov_converged && !reason.contains("closed loop"),
                },
            });
            let rows = ["a_priori", "a_posteriori", "remark43"]
                .map(|b| vec![b.to_string(), "false".to_string(), "n/a".to_string()])
                .to_vec();
            (results, rows)
        }
        Err(e) => return Err(e.into()),
        Ok(setup) => {
            let disc = stationary_discrepancy(&model, &proj, ctx.tolerances.discrepancy())?;
            let prior = report_or_reason(a_priori_bound(&setup))?;
            let post = report_or_reason(a_posteriori_bound(&setup, &disc, &model, opts))?;
            let r43 = report_or_reason(remark43_bound(&setup, &disc, &model, opts))?;
            let check = trace_check(&model, &setup, &PsdMatrix::new(disc.load.clone())?, opts)?;
            let rows = [("a_priori", &prior), ("a_posteriori", &post), ("remark43", &r43)]
                .map(|(name, v)| {
                    let value = v["report"]["value"].as_f64();
                    vec![name.to_string(), value.is_some().to_string(), opt(value)]
                })
                .to_vec();
            let results = json!({
                "applicable": true,
                "discrepancy": disc.discrepancy,
                "tr_m_converged": disc.tr_m,
                "rho_full": setup.stability.rho,
                "l0": setup.l0,
                "a_priori": prior,
                "a_posteriori": post,
                "remark43": r43,
                "check_converged_load": check,
            });
            (results, rows)
        }
    };
    write_csv(&ctx.path("bounds.csv"), &header, &rows)?;
    let applicable = results["applicable"].as_bool().unwrap_or(false);
    write_summary(&ctx.path("bounds.json"), "bounds", ctx, results)?;
    Ok(if applicable {
        "bounds: evaluated".to_string()
    } else {
        "bounds: assumptions fail, bounds not applicable".to_string()
    })
}
