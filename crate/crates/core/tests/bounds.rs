use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rokf::bounds::{
    a_posteriori_bound, delta_k_exact, delta_k_first_order, delta_p_exact, remark43_bound, trace_check, BoundOptions,
    BoundSetup,
};
use rokf::lgss::LgssModel;
use rokf::linalg::{max_abs, ProjectionPair, PsdMatrix};
use rokf::random::{random_model, random_projection, random_psd, Dims};
use rokf::riccati::{stationary_discrepancy, DiscrepancyOptions};

fn instance(seed: u64) -> (LgssModel<f64>, ProjectionPair<f64>) {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    let n = r.random_range(2..=5);
    let dims = Dims {
        state: n,
        input: r.random_range(1..=n),
        output: r.random_range(1..=2),
    };
    let model = random_model(&mut r, dims, 0.9).unwrap();
    let nc = r.random_range(1..n);
    let proj = random_projection(&mut r, n, nc).unwrap();
    (model, proj)
}

fn load(seed: u64, n: usize, scale: f64) -> PsdMatrix<f64> {
    let mut r = ChaCha20Rng::seed_from_u64(seed ^ 0xabcd);
    PsdMatrix::new(random_psd(&mut r, n, n).into_inner() * scale).unwrap()
}

#[test]
fn gain_difference_closed_form_is_exact() {
    for seed in 0..20 {
        let (model, _) = instance(seed);
        let m = load(seed, model.state_dim(), 0.5);
        let dp = delta_p_exact(&model, &m, None, BoundOptions::default()).unwrap();
        let dk = delta_k_exact(&model, &dp.dare_f, &dp.dare_b).unwrap();
        assert!(max_abs(&(dk - &dp.delta_k)) <= 1e-8, "seed {seed}");
    }
}

#[test]
fn joseph_forms_of_the_covariance_gap_are_exact() {
    for seed in 0..20 {
        let (model, _) = instance(100 + seed);
        let m = load(seed, model.state_dim(), 0.5);
        let dp = delta_p_exact(&model, &m, None, BoundOptions::default()).unwrap();
        let scale = 1.0 + max_abs(&dp.delta_p);
        assert!(
            dp.residual_joseph_full <= 1e-9 * scale,
            "seed {seed}: {:e}",
            dp.residual_joseph_full
        );
        assert!(
            dp.residual_joseph_b <= 1e-9 * scale,
            "seed {seed}: {:e}",
            dp.residual_joseph_b
        );
        assert!(rokf::linalg::min_eigenvalue(&dp.delta_p) > -1e-9 * scale);
    }
}

#[test]
fn one_step_gain_perturbation_misses_the_covariance_gap() {
    let (model, _) = instance(7);
    let n = model.state_dim();
    let defects = |eps: f64| {
        let m = load(7, n, eps);
        let dp = delta_p_exact(&model, &m, None, BoundOptions::default()).unwrap();
        let dk1 = delta_k_first_order(&model, m.as_matrix(), &dp.dare_f).unwrap();
        (
            max_abs(&(dk1 - &dp.delta_k)),
            dp.residual_full_form,
            max_abs(&dp.delta_p),
        )
    };
    let (k_big, p_big, dp_big) = defects(1e-2);
    let (k_small, p_small, dp_small) = defects(1e-3);
    // the gap and the gain defect are both first order in M, while the
    // fixed-point residual of the expanded form is second order
    let first_order = |big: f64, small: f64| big / small > 5.0 && big / small < 20.0;
    assert!(first_order(dp_big, dp_small));
    assert!(first_order(k_big, k_small), "{k_big:e} {k_small:e}");
    assert!(p_big / p_small > 50.0, "{p_big:e} {p_small:e}");
}

#[test]
fn trace_estimate_dominates_exact_gap() {
    let mut checked = 0;
    for seed in 0..20 {
        let (model, proj) = instance(200 + seed);
        let x1 = PsdMatrix::identity(model.state_dim());
        let Ok(setup) = BoundSetup::new(&model, &proj, &x1, BoundOptions::default()) else {
            continue;
        };
        for scale in [1e-4, 1e-3, 1e-2] {
            let m = load(seed, model.state_dim(), scale);
            let check = trace_check(&model, &setup, &m, BoundOptions::default()).unwrap();
            assert!(check.delta_k_hs <= check.delta_k_bound, "seed {seed} scale {scale}");
            if let Some(b) = check.tr_dp_bound {
                assert!(
                    check.tr_dp_exact <= b,
                    "seed {seed} scale {scale}: {} > {b}",
                    check.tr_dp_exact
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 10);
}

#[test]
fn posteriori_bounds_are_ordered_above_the_discrepancy() {
    let mut checked = 0;
    for seed in 0..15 {
        let (model, proj) = instance(300 + seed);
        let x1 = PsdMatrix::identity(model.state_dim());
        let opts = BoundOptions::default();
        let setup = BoundSetup::new(&model, &proj, &x1, opts).unwrap();
        let Ok(disc) = stationary_discrepancy(&model, &proj, DiscrepancyOptions::default()) else {
            continue;
        };
        checked += 1;
        let post = a_posteriori_bound(&setup, &disc, &model, opts).unwrap();
        let r43 = remark43_bound(&setup, &disc, &model, opts).unwrap();
        assert!(disc.discrepancy >= -1e-12);
        assert!(
            disc.discrepancy <= post.value,
            "seed {seed}: {} > {}",
            disc.discrepancy,
            post.value
        );
        assert!(post.value <= r43.value, "seed {seed}: {} > {}", post.value, r43.value);
    }
    assert!(checked >= 12);
}

#[test]
fn periodic_reduced_recursion_is_not_declared_stationary() {
    // this instance settles into a two-cycle of the reduced covariances
    let (model, proj) = instance(302);
    let err = stationary_discrepancy(&model, &proj, DiscrepancyOptions::default()).unwrap_err();
    assert!(matches!(err, rokf::Error::NoConvergence { .. }), "{err}");
}

#[test]
fn unstable_full_loop_is_reported() {
    // an unobserved unstable mode cannot be stabilized
    let model = LgssModel::new(
        DMatrix::from_row_slice(2, 2, &[1.2, 0.0, 0.0, 0.5]),
        DMatrix::identity(2, 2),
        DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        PsdMatrix::identity(2),
        PsdMatrix::identity(1),
        nalgebra::DVector::zeros(2),
        PsdMatrix::zeros(2),
    )
    .unwrap();
    let proj = ProjectionPair::identity(2);
    let err = BoundSetup::new(&model, &proj, &PsdMatrix::identity(2), BoundOptions::default()).unwrap_err();
    assert!(matches!(err, rokf::Error::AssumptionFailed(_)), "{err}");
}

fn scalar_model(a: f64, w: f64, c: f64, r: f64) -> LgssModel<f64> {
    let s = |v: f64| DMatrix::from_element(1, 1, v);
    LgssModel::new(
        s(a),
        s(1.0),
        s(c),
        PsdMatrix::new(s(w)).unwrap(),
        PsdMatrix::new(s(r)).unwrap(),
        nalgebra::DVector::zeros(1),
        PsdMatrix::zeros(1),
    )
    .unwrap()
}

/// Filtered and predicted scalar DARE solutions.
fn scalar_dare(a: f64, w: f64, c: f64, r: f64) -> (f64, f64) {
    let b = r * (1.0 - a * a) - w * c * c;
    let pred = (-b + (b * b + 4.0 * c * c * w * r).sqrt()) / (2.0 * c * c);
    (pred * r / (c * c * pred + r), pred)
}

#[test]
fn scalar_gap_matches_two_quadratic_solves() {
    let (a, w, c, r, m) = (0.8, 0.5, 1.3, 0.4, 0.2);
    let model = scalar_model(a, w, c, r);
    let dp = delta_p_exact(
        &model,
        &PsdMatrix::from_diagonal(&[m]).unwrap(),
        None,
        BoundOptions::default(),
    )
    .unwrap();
    let (p_f, pred_f) = scalar_dare(a, w, c, r);
    let (p_b, pred_b) = scalar_dare(a, w + a * a * m, c, r);
    assert!((dp.delta_p[(0, 0)] - (p_b - p_f)).abs() < 1e-10);
    let gain = |pred: f64| pred * c / (c * c * pred + r);
    assert!((dp.delta_k[(0, 0)] - (gain(pred_f) - gain(pred_b))).abs() < 1e-10);
    assert!(dp.residual_joseph_full < 1e-10 && dp.residual_joseph_b < 1e-10);

    let zero = delta_p_exact(&model, &PsdMatrix::zeros(1), None, BoundOptions::default()).unwrap();
    assert_eq!(max_abs(&zero.delta_p), 0.0);
    assert_eq!(max_abs(&zero.delta_k), 0.0);
    assert!(max_abs(&zero.e1) == 0.0 && max_abs(&zero.h1) == 0.0);
}

#[test]
fn identity_projection_gives_zero_bounds() {
    let (model, _) = instance(400);
    let n = model.state_dim();
    let id = ProjectionPair::identity(n);
    let opts = BoundOptions::default();
    let setup = BoundSetup::new(&model, &id, &PsdMatrix::identity(n), opts).unwrap();
    assert_eq!(setup.tr_m, 0.0);
    assert_eq!(rokf::bounds::a_priori_bound(&setup).unwrap().value, 0.0);
    let disc = stationary_discrepancy(&model, &id, DiscrepancyOptions::default()).unwrap();
    assert!(a_posteriori_bound(&setup, &disc, &model, opts).unwrap().value.abs() < 1e-12);
}

#[test]
fn relaxed_constants_use_the_output_noise() {
    let model = scalar_model(0.5, 1.0, 1.0, 1.0);
    let id = ProjectionPair::identity(1);
    let opts = BoundOptions::default();
    let setup = BoundSetup::new(&model, &id, &PsdMatrix::identity(1), opts).unwrap();
    let disc = stationary_discrepancy(&model, &id, DiscrepancyOptions::default()).unwrap();
    let r43 = remark43_bound(&setup, &disc, &model, opts).unwrap();
    assert_eq!(r43.constants.norms["tr_innovation_inv"], 1.0);
    // with ΔK = 0 the relaxed closed-loop norm is √2 times the exact one
    let exact = setup.norms.closed_loop;
    assert!((r43.constants.norms["A_minus_KF_CA"] - 2f64.sqrt() * exact).abs() < 1e-9);
}
