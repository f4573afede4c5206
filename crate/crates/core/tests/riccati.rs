use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rokf::filters::{approx_stationary_filter, full_kf_offline, reduced_offline, StationaryOptions, Storage};
use rokf::lgss::{simulate, LgssModel};
use rokf::linalg::{max_abs, psd_leq, ProjectionPair, PsdMatrix};
use rokf::random::{gaussian_matrix, random_model, random_pd, random_projection, random_psd, random_stable, Dims};
use rokf::riccati::{
    augmented_lyapunov_step, dare_solve, lyapunov_solve, m_bound, rde_err_consistency, rde_step,
    stationary_discrepancy, DiscrepancyOptions, RdeState,
};

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn random_reduced(seed: u64, max_radius: f64) -> (LgssModel<f64>, ProjectionPair<f64>) {
    let mut r = rng(seed);
    let n = r.random_range(2..=6);
    let dims = Dims {
        state: n,
        input: r.random_range(1..=n),
        output: r.random_range(1..=3),
    };
    let model = random_model(&mut r, dims, max_radius).unwrap();
    let nc = r.random_range(1..n);
    let proj = random_projection(&mut r, n, nc).unwrap();
    (model, proj)
}

#[test]
fn load_form_agrees_with_the_recursion() {
    for seed in 0..30 {
        let (model, proj) = random_reduced(seed, 1.0);
        let sched = reduced_offline(&model, &proj, 30, Storage::Full).unwrap();
        let dev = rde_err_consistency(&sched, &model).unwrap();
        assert!(dev <= 1e-8, "seed {seed}: {dev:e}");
    }
    let (model, _) = random_reduced(99, 1.0);
    let id = ProjectionPair::identity(model.state_dim());
    let sched = reduced_offline(&model, &id, 20, Storage::Full).unwrap();
    assert!(rde_err_consistency(&sched, &model).unwrap() <= 1e-9);
}

#[test]
fn load_is_dominated_by_the_stationary_complement() {
    for seed in 0..30 {
        let (model, proj) = random_reduced(1000 + seed, 0.95);
        let s_inf = lyapunov_solve(&model.a, &model.process_noise(), 1e-13, 200).unwrap();
        let theta = (seed % 4) as f64 / 3.0;
        let model = LgssModel {
            s0: PsdMatrix::new(&s_inf * theta).unwrap(),
            ..model
        };
        let sched = reduced_offline(&model, &proj, 25, Storage::Full).unwrap();
        let bound = m_bound(&sched, &s_inf, &proj).unwrap();
        assert!(bound.worst_margin > -1e-9, "seed {seed}");
        let tr_m = bound.m_bound.trace();
        assert!(bound.m_k_trace.iter().all(|&t| t <= tr_m + 1e-9));
    }
}

#[test]
fn axis_projector_load_bound() {
    let model = LgssModel::new(
        DMatrix::identity(3, 3) * 0.5,
        DMatrix::identity(3, 3),
        DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 1.0]),
        PsdMatrix::identity(3),
        PsdMatrix::identity(1),
        DVector::zeros(3),
        PsdMatrix::zeros(3),
    )
    .unwrap();
    let proj = ProjectionPair::from_rows(DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0])).unwrap();
    let sched = reduced_offline(&model, &proj, 5, Storage::Full).unwrap();
    let s = DMatrix::identity(3, 3) * 2.0;
    let bound = m_bound(&sched, &s, &proj).unwrap();
    let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 2.0, 2.0]));
    assert_eq!(bound.m_bound, expect);

    let id = ProjectionPair::identity(3);
    let sched = reduced_offline(&model, &id, 5, Storage::Full).unwrap();
    let bound = m_bound(&sched, &s, &id).unwrap();
    assert_eq!(max_abs(&bound.m_bound), 0.0);
    assert!(bound.m_k_trace.iter().all(|t: &f64| t.abs() < 1e-12));
}

#[test]
fn riccati_map_is_monotone() {
    for seed in 0..30 {
        let mut r = rng(2000 + seed);
        let n = r.random_range(1..=5);
        let m = r.random_range(1..=3);
        let a = gaussian_matrix(&mut r, n, n);
        let c = gaussian_matrix(&mut r, m, n);
        let rr = random_pd(&mut r, m, 0.1).into_inner();
        let w1 = random_psd(&mut r, n, n).into_inner();
        let w2 = &w1 + random_psd(&mut r, n, 1).into_inner();
        let p1 = random_psd(&mut r, n, n).into_inner();
        let p2 = &p1 + random_psd(&mut r, n, 2).into_inner();
        let (mut s1, mut s2) = (RdeState::initial(p1, m), RdeState::initial(p2, m));
        for k in 1..=20 {
            s1 = rde_step(&s1, &a, &w1, &c, &rr).unwrap();
            s2 = rde_step(&s2, &a, &w2, &c, &rr).unwrap();
            let (ok, lo) = psd_leq(&s1.p, &s2.p, 1e-9);
            assert!(ok, "seed {seed} step {k}: {lo:e}");
        }
    }
}

fn scalar_dare(a: f64, w: f64, c: f64, r: f64) -> f64 {
    // fixed point of p̃ = a²p + w with p = p̃ r / (c²p̃ + r)
    let b = r * (1.0 - a * a) - w * c * c;
    let pred = (-b + (b * b + 4.0 * c * c * w * r).sqrt()) / (2.0 * c * c);
    pred * r / (c * c * pred + r)
}

#[test]
fn scalar_dare_family_matches_quadratic_formula() {
    let s = |v: f64| DMatrix::from_element(1, 1, v);
    let mut r = rng(3);
    for _ in 0..25 {
        let a: f64 = r.random_range(-1.5..1.5);
        let w: f64 = r.random_range(0.1..3.0);
        let c: f64 = r.random_range(0.2..2.0);
        let rr: f64 = r.random_range(0.1..2.0);
        let sol = dare_solve(&s(a), &s(w), &s(c), &s(rr), &s(0.0), 1e-14, 100_000).unwrap();
        let expect = scalar_dare(a, w, c, rr);
        assert!(
            (sol.p[(0, 0)] - expect).abs() <= 1e-10 * (1.0 + expect),
            "a={a} w={w} c={c} r={rr}"
        );
    }
}

#[test]
fn dare_residual_and_monotone_convergence() {
    for seed in 0..20 {
        let (model, _) = random_reduced(3000 + seed, 1.2);
        let w = model.process_noise();
        let n = model.state_dim();
        let sol = dare_solve(
            &model.a,
            &w,
            &model.c,
            &model.r_cov,
            &DMatrix::zeros(n, n),
            1e-12,
            200_000,
        )
        .unwrap();
        assert!(sol.residual <= 1e-11);
        let pred = &model.a * &sol.p * model.a.transpose() + &w;
        assert!(max_abs(&(pred - &sol.p_pred)) < 1e-9);
        let traces: Vec<f64> = sol.history.iter().map(|h| h.1).collect();
        assert!(traces.windows(2).all(|t| t[1] >= t[0] - 1e-12 * (1.0 + t[0])));
    }
}

#[test]
fn augmented_covariance_reproduces_error_covariance() {
    for seed in 0..10 {
        let (model, proj) = random_reduced(4000 + seed, 1.0);
        let n = model.state_dim();
        let nc = proj.coarse_dim();
        let sched = reduced_offline(&model, &proj, 8, Storage::Full).unwrap();
        let covs = sched.covariances().unwrap();
        let s0 = model.s0.as_matrix();
        let mut aug = DMatrix::zeros(n + nc, n + nc);
        aug.view_mut((0, 0), (n, n)).copy_from(s0);
        for k in 1..=8 {
            aug = augmented_lyapunov_step(&aug, &model, &sched, k).unwrap();
            let mut sel = DMatrix::zeros(n, n + nc);
            sel.view_mut((0, 0), (n, n)).fill_with_identity();
            sel.view_mut((0, n), (n, nc)).copy_from(&(-&covs[k].lift));
            let err = &sel * &aug * sel.transpose();
            assert!(max_abs(&(err - &covs[k].err_cov)) < 1e-9, "seed {seed} step {k}");
        }
    }
}

#[test]
fn identity_projection_has_no_discrepancy() {
    let (model, _) = random_reduced(5000, 0.9);
    let id = ProjectionPair::identity(model.state_dim());
    let d = stationary_discrepancy(&model, &id, DiscrepancyOptions::default()).unwrap();
    assert!(d.discrepancy.abs() < 1e-10);
    assert!(d.tr_m.abs() < 1e-10);
}

#[test]
fn approximate_stationary_filter_with_identity_is_the_full_dare() {
    let mut r = rng(6000);
    let model = random_model(
        &mut r,
        Dims {
            state: 4,
            input: 2,
            output: 2,
        },
        0.9,
    )
    .unwrap();
    let id = ProjectionPair::identity(4);
    let st = approx_stationary_filter(&model, &id, StationaryOptions::default()).unwrap();
    assert!(max_abs(&st.v_hat) < 1e-10);
    assert!(max_abs(&(&st.q_hat - DMatrix::identity(4, 4))) < 1e-10);
    let w = model.process_noise();
    let full = dare_solve(
        &model.a,
        &w,
        &model.c,
        &model.r_cov,
        &DMatrix::zeros(4, 4),
        1e-13,
        100_000,
    )
    .unwrap();
    assert!(max_abs(&(&st.dare.p - &full.p)) < 1e-10);

    let proj = random_projection(&mut r, 4, 2).unwrap();
    let st = approx_stationary_filter(&model, &proj, StationaryOptions::default()).unwrap();
    assert!(max_abs(&(proj.pi() * &st.v_hat * proj.pi_adjoint())) < 1e-9);
    assert!(rokf::linalg::min_eigenvalue(&st.v_hat) > -1e-9);
    assert!(max_abs(&(proj.pi() * &st.q_hat - DMatrix::identity(2, 2))) < 1e-9);
}

#[test]
fn full_filter_never_increases_covariance() {
    let (model, _) = random_reduced(7000, 1.1);
    let sched = full_kf_offline(&model, 15, Storage::Full).unwrap();
    for k in 1..=15 {
        assert!(psd_leq(sched.cov(k).unwrap(), sched.pred_cov(k).unwrap(), 1e-9).0);
    }
}

#[test]
fn simulated_moments_match_one_step_covariance() {
    let mut r = rng(8000);
    let model = random_model(
        &mut r,
        Dims {
            state: 3,
            input: 2,
            output: 1,
        },
        0.8,
    )
    .unwrap();
    let model = model.with_mean(DVector::zeros(3)).unwrap();
    let expect = &model.a * model.s0.as_matrix() * model.a.transpose() + model.process_noise();
    let draws = 100_000;
    let mut acc = DMatrix::zeros(3, 3);
    for i in 0..draws {
        let x = &simulate(&model, 1, i).unwrap().states[1];
        acc += x * x.transpose();
    }
    let emp = acc / draws as f64;
    assert!((emp - &expect).norm() <= 0.05 * expect.norm());
}

#[test]
fn stable_generator_has_requested_radius() {
    let mut r = rng(1);
    let a = random_stable(&mut r, 5, 0.7);
    assert!((rokf::linalg::spectral_radius(&a) - 0.7).abs() < 1e-10);
}
