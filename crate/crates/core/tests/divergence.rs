use haptic_core::divergence::{
    discretize, feature_jsd, jsd, jsd_grad, jsd_value_and_grad, kl, pair_jsd, DiscretizedDist, Grid, Source,
};
use haptic_core::GaussianPredictive;
use proptest::prelude::*;
use std::f64::consts::LN_2;

fn grid(lo: f64, hi: f64, bins: usize) -> Grid {
    Grid::spanning(lo, hi, bins).unwrap()
}

#[test]
fn kl_of_unit_shift_matches_closed_form_at_201_bins() {
    let g = grid(-8.0, 9.0, 201);
    let p = discretize(0.0, 1.0, &g);
    let q = discretize(1.0, 1.0, &g);
    let v = kl(&p, &q).unwrap();
    assert!((v - 0.5).abs() < 2e-3, "KL = {v}");
}

#[test]
fn kl_of_unit_shift_is_tighter_at_801_bins() {
    let g = grid(-10.0, 11.0, 801);
    let p = discretize(0.0, 1.0, &g);
    let q = discretize(1.0, 1.0, &g);
    let v = kl(&p, &q).unwrap();
    assert!((v - 0.5).abs() < 1e-4, "KL = {v}");
}

#[test]
fn kl_with_different_variances_matches_closed_form() {
    // KL(N(0, 1) || N(0.5, 4)) = ln 2 + (1 + 0.25) / 8 - 0.5
    let want = LN_2 + 1.25 / 8.0 - 0.5;
    let g = grid(-14.0, 14.0, 1601);
    let v = kl(&discretize(0.0, 1.0, &g), &discretize(0.5, 4.0, &g)).unwrap();
    assert!((v - want).abs() < 1e-4, "KL = {v}, want {want}");
}

#[test]
fn disjoint_supports_saturate_jsd() {
    let g = grid(-10.0, 10.0, 201);
    let p = discretize(-5.0, 0.0, &g);
    let q = discretize(5.0, 0.0, &g);
    assert!((jsd(&p, &q).unwrap() - LN_2).abs() < 1e-12);
}

#[test]
fn mismatched_grids_are_rejected() {
    let p = discretize(0.0, 1.0, &grid(-5.0, 5.0, 101));
    let q = discretize(0.0, 1.0, &grid(-5.0, 5.0, 201));
    assert!(jsd(&p, &q).is_err());
    assert!(kl(&p, &q).is_err());
}

#[test]
fn discretized_moments_track_the_gaussian() {
    let g = grid(-4.0, 6.0, 401);
    let d = discretize(1.0, 0.25, &g);
    let total: f64 = d.probs.iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!((d.mean() - 1.0).abs() < 1e-6);
    assert!((d.variance() - 0.25).abs() < 1e-3);
}

/// Subnormal `q` against a zero `p` must not turn the midpoint into zero.
#[test]
fn subnormal_mass_keeps_gradient_finite() {
    let g = grid(-1.0, 1.0, 201);
    let p = discretize(0.9, 1e-6, &g);
    let (v, dm, dlv) = jsd_value_and_grad(&p, -0.95, (1e-4f64).ln(), &g).unwrap();
    assert!(v.is_finite() && dm.is_finite() && dlv.is_finite(), "{v} {dm} {dlv}");

    let mut tiny = vec![0.0; 201];
    tiny[0] = 1.0;
    tiny[1] = 1e-310;
    let a = DiscretizedDist::new(g, tiny, Source::Other).unwrap();
    let mut one_hot = vec![0.0; 201];
    one_hot[0] = 1.0;
    let b = DiscretizedDist::new(g, one_hot, Source::Other).unwrap();
    let v = jsd(&a, &b).unwrap();
    assert!(v.is_finite() && v >= 0.0);
}

#[test]
fn feature_jsd_is_per_channel() {
    let p = [GaussianPredictive::new(0.0, 1.0), GaussianPredictive::new(0.0, 1.0)];
    let q = [GaussianPredictive::new(0.0, 1.0), GaussianPredictive::new(3.0, 1.0)];
    let v = feature_jsd(&p, &q);
    assert!(v[0] < 1e-12);
    assert!((v[1] - pair_jsd(&p[1], &q[1])).abs() < 1e-15);
    assert!(v[1] > 0.1);
}

fn fd_check(p_mean: f64, p_var: f64, q_mean: f64, q_lv: f64) {
    let g = Grid::for_pair(
        &GaussianPredictive::new(p_mean, p_var),
        &GaussianPredictive::new(q_mean, q_lv.exp()),
        201,
        6.0,
    )
    .unwrap();
    let p = discretize(p_mean, p_var, &g);
    let f = |m: f64, lv: f64| jsd(&p, &discretize(m, lv.exp(), &g)).unwrap();
    let (dm, dlv) = jsd_grad(&p, q_mean, q_lv, &g).unwrap();
    let h = 1e-6;
    let num_m = (f(q_mean + h, q_lv) - f(q_mean - h, q_lv)) / (2.0 * h);
    let num_lv = (f(q_mean, q_lv + h) - f(q_mean, q_lv - h)) / (2.0 * h);
    let tol = |x: f64| 1e-5 + 1e-4 * x.abs();
    assert!((dm - num_m).abs() < tol(num_m), "d mean {dm} vs {num_m}");
    assert!((dlv - num_lv).abs() < tol(num_lv), "d logvar {dlv} vs {num_lv}");
}

#[test]
fn gradient_matches_finite_differences_on_fixed_cases() {
    fd_check(0.0, 1.0, 0.5, 0.0);
    fd_check(0.0, 1.0, -1.5, 1.0);
    fd_check(2.0, 0.1, 1.0, -0.5);
    fd_check(0.0, 4.0, 0.0, -2.0);
}

fn predictive() -> impl Strategy<Value = (f64, f64)> {
    (-3.0..3.0f64, 0.05..4.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn jsd_is_bounded_and_symmetric((ma, va) in predictive(), (mb, vb) in predictive()) {
        let a = GaussianPredictive::new(ma, va);
        let b = GaussianPredictive::new(mb, vb);
        let g = Grid::for_pair(&a, &b, 201, 6.0).unwrap();
        let p = discretize(ma, va, &g);
        let q = discretize(mb, vb, &g);
        let pq = jsd(&p, &q).unwrap();
        let qp = jsd(&q, &p).unwrap();
        prop_assert!((0.0..=LN_2).contains(&pq));
        prop_assert!((pq - qp).abs() < 1e-12);
        prop_assert!((pair_jsd(&a, &b) - pair_jsd(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn jsd_vanishes_only_for_equal_inputs((m, v) in predictive(), shift in 0.05..2.0f64) {
        let a = GaussianPredictive::new(m, v);
        let same = pair_jsd(&a, &a);
        prop_assert!(same.abs() < 1e-12);
        let b = GaussianPredictive::new(m + shift * v.sqrt(), v);
        prop_assert!(pair_jsd(&a, &b) > 1e-6);
    }

    #[test]
    fn kl_is_non_negative_and_zero_on_self((ma, va) in predictive(), (mb, vb) in predictive()) {
        let a = GaussianPredictive::new(ma, va);
        let b = GaussianPredictive::new(mb, vb);
        let g = Grid::for_pair(&a, &b, 201, 6.0).unwrap();
        let p = discretize(ma, va, &g);
        let q = discretize(mb, vb, &g);
        prop_assert!(kl(&p, &q).unwrap() >= 0.0);
        prop_assert!(kl(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn discretized_mass_sums_to_one((m, v) in predictive()) {
        let a = GaussianPredictive::new(m, v);
        let g = Grid::for_pair(&a, &a, 201, 6.0).unwrap();
        let total: f64 = discretize(m, v, &g).probs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_gradient_agrees_with_finite_differences(
        (pm, pv) in predictive(),
        qm in -3.0..3.0f64,
        qlv in -2.0..1.5f64,
    ) {
        fd_check(pm, pv, qm, qlv);
    }
}
