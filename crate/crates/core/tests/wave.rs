use rokf::bounds::{a_priori_bound, BoundOptions, BoundSetup};
use rokf::filters::{full_kf_offline, lift, reduced_offline, reduced_step, Storage};
use rokf::lgss::{max_abs_diff, simulate};
use rokf::linalg::{spectral_radius, PsdMatrix};
use rokf::riccati::{lyapunov_solve, m_bound, rde_err_consistency};
use rokf::wave::{build_mesh_projection, build_wave_model, projection_error_norm, WaveParams};
use rokf::Error;

#[test]
fn load_grows_towards_its_stationary_bound() {
    let params = WaveParams::default();
    let sys = build_wave_model::<f64>(&params).unwrap();
    let proj = build_mesh_projection(params.n_f, params.n_c, &sys.fine_map).unwrap();
    let sched = reduced_offline(&sys.model, &proj, 200, Storage::Full).unwrap();
    let s_inf = lyapunov_solve(&sys.model.a, &sys.model.process_noise(), 1e-12, 200).unwrap();
    let bound = m_bound(&sched, &s_inf, &proj).unwrap();
    let tr_m = bound.m_bound.trace();
    let traces = &bound.m_k_trace;
    // the growth is oscillatory rather than monotone
    assert!(traces[199] > 10.0 * traces[49] && traces[49] > 10.0 * traces[19]);
    let falls = traces.windows(2).filter(|t| t[1] < t[0] - 1e-9).count();
    assert!(falls > 0 && falls < 50);
    assert!(traces.iter().all(|&t| t <= tr_m));
    assert!(rde_err_consistency(&sched, &sys.model).unwrap() <= 1e-7);
}

#[test]
fn lifted_benchmark_estimates_project_back() {
    let params = WaveParams::default();
    let sys = build_wave_model::<f64>(&params).unwrap();
    let proj = build_mesh_projection(params.n_f, params.n_c, &sys.fine_map).unwrap();
    let sched = reduced_offline(&sys.model, &proj, 50, Storage::Compact).unwrap();
    let traj = simulate(&sys.model, 50, 4).unwrap();
    let mut est = sched.initial_estimate();
    for k in 1..=50 {
        est = reduced_step(&sched, k, &est, &traj.outputs[k - 1]);
        assert!(max_abs_diff(&(proj.pi() * lift(&sched, k, &est)), &est) < 1e-9);
    }
}

#[test]
fn projection_error_scales_with_mesh_width() {
    let params = WaveParams::default();
    let sys = build_wave_model::<f64>(&params).unwrap();
    let norms: Vec<(f64, f64)> = [1usize, 2, 5, 10]
        .iter()
        .map(|&nc| {
            let proj = build_mesh_projection(params.n_f, nc, &sys.fine_map).unwrap();
            (1.0 / (nc + 1) as f64, projection_error_norm(&sys, &proj).unwrap())
        })
        .collect();
    for w in norms.windows(2) {
        let ratio = (w[0].1 / w[1].1) / (w[0].0 / w[1].0);
        assert!(ratio > 0.7 && ratio < 1.4, "{norms:?}");
    }
}

#[test]
fn full_filter_loop_is_stable_but_slow() {
    let params = WaveParams::default();
    let sys = build_wave_model::<f64>(&params).unwrap();
    let m = &sys.model;
    assert!(spectral_radius(&m.a) < 1.0);
    let sched = full_kf_offline(m, 3000, Storage::Compact).unwrap();
    let rho = spectral_radius(&(&m.a - &sched.last().gain * &m.c * &m.a));
    assert!(rho > 0.99 && rho < 1.0, "{rho}");
}

#[test]
fn a_priori_estimate_is_inapplicable_on_the_benchmark() {
    let params = WaveParams::default();
    let sys = build_wave_model::<f64>(&params).unwrap();
    let proj = build_mesh_projection(params.n_f, params.n_c, &sys.fine_map).unwrap();
    let x1 = PsdMatrix::new(sys.x1_weight()).unwrap();
    let setup = BoundSetup::new(&sys.model, &proj, &x1, BoundOptions::default()).unwrap();
    assert!(setup.stability.stable);
    assert!(matches!(a_priori_bound(&setup), Err(Error::AssumptionFailed(_))));
}
