use current_coupon::coupon_solvers::{
    approx_current_coupon, contraction_solve, solve_m0_const_intensity, solve_m0_general,
    solve_m0_zero_intensity, solve_m1,
};
use current_coupon::factor_model::{simulate_paths, uniform_time_grid, CirParams, PathSet};
use current_coupon::intensity::{Decomposition, RefiIncentiveIntensity};
use current_coupon::numerics::{adaptive_simpson, bisect};
use current_coupon::{CouponCurve, IntensityModel, MortgageSpec};

const KAPPA: f64 = 0.25;
const THETA: f64 = 0.06;

fn paper() -> CirParams {
    CirParams::new(KAPPA, THETA, 0.1, 0.06).unwrap()
}

fn spec() -> MortgageSpec {
    MortgageSpec::new(30.0).unwrap()
}

/// `int_0^t r` on the noiseless path from `x`.
fn det_integral(x: f64, t: f64) -> f64 {
    THETA * t + (x - THETA) * (1.0 - (-KAPPA * t).exp()) / KAPPA
}

/// Par rate on the noiseless path from the valuation identity
/// `int_0^T p(t,m) (m - r_t) e^{-int (r + gamma)} dt = 0`.
fn det_par_rate(x: f64, gamma: f64) -> f64 {
    let big_t = 30.0;
    let p = |t: f64, m: f64| (-m * (big_t - t)).exp_m1() / (-m * big_t).exp_m1();
    let r = |t: f64| THETA + (x - THETA) * (-KAPPA * t).exp();
    let value = |m: f64| {
        adaptive_simpson(
            |t| p(t, m) * (m - r(t)) * (-det_integral(x, t) - gamma * t).exp(),
            0.0,
            big_t,
            1e-14,
        )
    };
    bisect("oracle", value, 1e-6, 1.0, 1e-13).unwrap()
}

#[test]
fn zero_intensity_noiseless_limit() {
    let p = CirParams::new(KAPPA, THETA, 1e-7, 0.06).unwrap();
    for x in [0.02, 0.06, 0.11] {
        let got = solve_m0_zero_intensity(&p, &spec(), x).unwrap();
        let want = det_par_rate(x, 0.0);
        assert!((got - want).abs() < 1e-8, "x={x}: {got} vs {want}");
    }
}

#[test]
fn const_intensity_noiseless_limit() {
    let p = CirParams::new(KAPPA, THETA, 1e-7, 0.06).unwrap();
    for x in [0.02, 0.06, 0.11] {
        for g in [0.02, 0.045, 0.2] {
            let got = solve_m0_const_intensity(&p, &spec(), x, g).unwrap();
            let want = det_par_rate(x, g);
            assert!((got - want).abs() < 1e-8, "x={x} g={g}: {got} vs {want}");
        }
    }
}

#[test]
fn general_solver_reduces_to_closed_forms() {
    let p = paper();
    for x in [0.02, 0.04, 0.06, 0.09, 0.13] {
        let paths = simulate_paths(&p.with_r0(x), 30.0, 12, 20_000, 17).unwrap();
        let zero = solve_m0_general(&paths, &spec(), &IntensityModel::zero()).unwrap();
        let closed = solve_m0_zero_intensity(&p, &spec(), x).unwrap();
        assert!(
            (zero.value - closed).abs() <= 2.0 * (zero.std_error + 1e-6),
            "x={x}: {} (se {}) vs {closed}",
            zero.value,
            zero.std_error
        );
        let cons = solve_m0_general(&paths, &spec(), &IntensityModel::constant(0.045)).unwrap();
        let closed = solve_m0_const_intensity(&p, &spec(), x, 0.045).unwrap();
        assert!(
            (cons.value - closed).abs() <= 2.0 * (cons.std_error + 1e-6),
            "x={x}: {} (se {}) vs {closed}",
            cons.value,
            cons.std_error
        );
    }
}

fn frozen_sets(grid: &[f64], n: usize) -> Vec<PathSet> {
    grid.iter()
        .map(|&x| simulate_paths(&paper().with_r0(x), 30.0, 12, n, 23).unwrap())
        .collect()
}

#[test]
fn correction_is_the_derivative_of_the_fixed_point() {
    let grid: Vec<f64> = (0..6).map(|i| 0.02 + 0.02 * i as f64).collect();
    let sets = frozen_sets(&grid, 600);
    let model = RefiIncentiveIntensity::new(0.045, 5.0)
        .unwrap()
        .decompose(Decomposition::ConstantBaseline);
    let start = CouponCurve::from_fn(grid.clone(), |x| {
        solve_m0_const_intensity(&paper(), &spec(), x, 0.045).unwrap()
    })
    .unwrap();
    let solve = |eps: f64| {
        let r = contraction_solve(&sets, &spec(), &model.with_epsilon(eps), &start, 1e-13, 200).unwrap();
        assert!(r.converged);
        r.final_curve().clone()
    };
    let base = solve(0.0);
    let eps = 1e-3;
    let bumped = solve(eps);
    for (i, &x) in grid.iter().enumerate() {
        let slope = (bumped.values()[i] - base.values()[i]) / eps;
        let m1 = solve_m1(&sets[i], &spec(), &model, &base, x).unwrap().value;
        assert!(
            (slope - m1).abs() <= 5e-3 * m1.abs() + 1e-8,
            "x={x}: slope {slope} vs m1 {m1}"
        );
    }
}

#[test]
fn correction_scales_linearly_and_vanishes_without_perturbation() {
    let grid = vec![0.03, 0.06, 0.09];
    let sets = frozen_sets(&grid, 300);
    let refi = RefiIncentiveIntensity::new(0.045, 5.0).unwrap();
    for d in [Decomposition::ZeroBaseline, Decomposition::ConstantBaseline] {
        let model = refi.decompose(d);
        let a = approx_current_coupon(&paper(), &spec(), &model, &grid, &sets, Some(d)).unwrap();
        for s in [0.5, 2.0, 4.0] {
            let b = approx_current_coupon(&paper(), &spec(), &model.with_epsilon(s), &grid, &sets, Some(d))
                .unwrap();
            for (u, v) in a.m1.iter().zip(&b.m1) {
                assert_eq!(v.value, s * u.value);
            }
        }
        let z = approx_current_coupon(&paper(), &spec(), &model.with_epsilon(0.0), &grid, &sets, Some(d))
            .unwrap();
        assert!(z.m1.iter().all(|r| r.value == 0.0));
        assert_eq!(z.approx, z.m0.values());
    }
}

#[test]
fn noiseless_constant_intensity_contraction_matches_closed_form() {
    let p = CirParams::new(KAPPA, THETA, 1e-7, 0.06).unwrap();
    let grid: Vec<f64> = vec![0.02, 0.05, 0.08, 0.11];
    let time = uniform_time_grid(30.0, 96).unwrap();
    let sets: Vec<PathSet> = grid
        .iter()
        .map(|&x| {
            let path: Vec<f64> = time.iter().map(|&t| THETA + (x - THETA) * (-KAPPA * t).exp()).collect();
            PathSet::from_rates(time.clone(), &[path]).unwrap()
        })
        .collect();
    let model = RefiIncentiveIntensity::new(0.045, 0.0)
        .unwrap()
        .decompose(Decomposition::ConstantBaseline);
    let a = approx_current_coupon(&p, &spec(), &model, &grid, &sets, None).unwrap();
    let r = contraction_solve(&sets, &spec(), &model, &a.m0, 1e-12, 100).unwrap();
    for (u, v) in a.approx.iter().zip(r.final_curve().values()) {
        // f32 path storage and the trapezoidal rule limit agreement to ~1e-6
        assert!((u - v).abs() < 2e-6, "{u} vs {v}");
    }
}
