use current_coupon::factor_model::{simulate_paths, uniform_time_grid, CirParams, PathSet};
use current_coupon::intensity::{Baseline, Perturbation};
use current_coupon::numerics::mean_and_se;
use current_coupon::pool_simulator::{
    compare_estimators, large_pool_convergence, loan_uniforms, price_loan_direct,
    price_pool_intensity_form, sample_prepayment_time, survival_consistency, LoanPoolConfig,
};
use current_coupon::{CouponCurve, IntensityModel, MortgageSpec};

fn spec() -> MortgageSpec {
    MortgageSpec::new(30.0).unwrap()
}

fn paper() -> CirParams {
    CirParams::new(0.25, 0.06, 0.1, 0.06).unwrap()
}

fn refi(gamma: f64, k: f64) -> IntensityModel {
    IntensityModel::new(
        Baseline::Zero,
        Perturbation::RefiIncentive {
            level: gamma,
            rate_slope: 0.0,
            k,
        },
        1.0,
    )
    .unwrap()
}

fn z_curve() -> CouponCurve {
    CouponCurve::from_fn((0..20).map(|i| 0.005 + 0.01 * i as f64).collect(), |x| 0.03 + 0.5 * x).unwrap()
}

#[test]
fn exponential_survival_law() {
    let grid = uniform_time_grid(30.0, 12).unwrap();
    let g = 0.045;
    let cum: Vec<f64> = grid.iter().map(|t| g * t).collect();
    let u = loan_uniforms(4, 0, 100_000);
    let taus: Vec<Option<f64>> = u
        .iter()
        .map(|&u| sample_prepayment_time(&grid, &cum, u).unwrap())
        .collect();
    for t in [1.0, 5.0, 15.0, 30.0] {
        let alive: Vec<f64> = taus
            .iter()
            .map(|tau| if tau.is_none_or(|s| s > t) { 1.0 } else { 0.0 })
            .collect();
        let (p, se) = mean_and_se(&alive);
        let want = (-g * t).exp();
        assert!((p - want).abs() < 3.0 * se, "t={t}: {p} vs {want}");
    }
}

#[test]
fn survival_matches_model_on_paths() {
    let paths = simulate_paths(&paper(), 30.0, 12, 20_000, 8).unwrap();
    let pool = LoanPoolConfig::new(5, 0.07, spec(), refi(0.045, 5.0), z_curve()).unwrap();
    for s in survival_consistency(&paths, &pool, 8, &[1.0, 5.0, 15.0, 30.0]).unwrap() {
        assert!(s.within(3.0), "{s:?}");
    }
}

#[test]
fn flat_rate_without_prepayment_is_par() {
    // rates exactly representable in the f32 path storage; the second takes
    // the linear-balance branch
    for (r, tol) in [(0.0625, 1e-12), (2f64.powi(-20), 1e-9)] {
        for steps in [1, 12, 96] {
            let grid = uniform_time_grid(30.0, steps).unwrap();
            let paths = PathSet::from_rates(grid.clone(), &[vec![r; grid.len()]]).unwrap();
            let pool = LoanPoolConfig::new(3, r, spec(), IntensityModel::zero(), z_curve()).unwrap();
            let d = price_loan_direct(&paths, &pool, 1).unwrap();
            let f = price_pool_intensity_form(&paths, &pool).unwrap();
            for v in [d.value, f.value.value, f.cash_flow_form.value] {
                assert!((v - 1.0).abs() < tol, "r={r} steps={steps}: {v}");
            }
        }
    }
}

#[test]
fn estimators_agree_across_configurations() {
    let paths = simulate_paths(&paper(), 30.0, 12, 20_000, 21).unwrap();
    for m in [0.04, 0.06, 0.08] {
        for g in [0.0, 0.045, 0.1] {
            let pool = LoanPoolConfig::new(4, m, spec(), refi(g, 5.0), z_curve()).unwrap();
            let c = compare_estimators(&paths, &pool, 21).unwrap();
            assert!(c.within(3.0), "m={m} g={g}: {c:?}");
            let f = price_pool_intensity_form(&paths, &pool).unwrap();
            // the two forms telescope cell by cell
            assert!(f.max_path_discrepancy < 1e-12, "{}", f.max_path_discrepancy);
            assert_eq!(f.value, c.intensity_form);
        }
    }
}

#[test]
fn large_pool_rate() {
    let paths = simulate_paths(&paper(), 30.0, 12, 3_000, 2).unwrap();
    let pool = LoanPoolConfig::new(1, 0.06, spec(), refi(0.045, 5.0), z_curve()).unwrap();
    let table = large_pool_convergence(&paths, &pool, 2, &[1, 10, 100, 1000]).unwrap();
    assert!((table.slope + 0.5).abs() <= 0.15, "slope {}", table.slope);
    assert!(table.rows[0].paired_se > table.rows[3].paired_se);
    for r in &table.rows {
        assert!(r.deviation < 4.0 * r.combined_se, "{r:?}");
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let paths = simulate_paths(&paper(), 30.0, 12, 500, 6).unwrap();
    let pool = LoanPoolConfig::new(7, 0.06, spec(), refi(0.045, 5.0), z_curve()).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| price_loan_direct(&paths, &pool, 6).unwrap());
    let b = four.install(|| price_loan_direct(&paths, &pool, 6).unwrap());
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
}

#[test]
fn immediate_prepayment_returns_principal() {
    let grid = uniform_time_grid(30.0, 12).unwrap();
    let cum: Vec<f64> = grid.iter().map(|t| 0.045 * t).collect();
    let tau = sample_prepayment_time(&grid, &cum, 1.0 - 1e-15).unwrap().unwrap();
    assert!(tau < 1e-12);
    assert_eq!(sample_prepayment_time(&grid, &vec![0.0; grid.len()], 0.5).unwrap(), None);
    let exact = sample_prepayment_time(&grid, &cum, (-0.45f64).exp()).unwrap().unwrap();
    assert!((exact - 10.0).abs() < 1e-12);
    // a huge constant hazard prepays every loan within the first step
    let paths = simulate_paths(&paper(), 30.0, 12, 200, 3).unwrap();
    let pool = LoanPoolConfig::new(4, 0.06, spec(), IntensityModel::constant(500.0), z_curve()).unwrap();
    let d = price_loan_direct(&paths, &pool, 3).unwrap();
    assert!((d.value - 1.0).abs() < 1e-2, "{}", d.value);
}

#[test]
fn value_increases_with_coupon_under_constant_hazard() {
    let paths = simulate_paths(&paper(), 30.0, 12, 2_000, 12).unwrap();
    let mut prev = 0.0;
    for i in 0..15 {
        let m = 0.02 + 0.01 * i as f64;
        let pool = LoanPoolConfig::new(1, m, spec(), IntensityModel::constant(0.045), z_curve()).unwrap();
        let v = price_pool_intensity_form(&paths, &pool).unwrap().value.value;
        assert!(v > prev, "m={m}: {v} <= {prev}");
        prev = v;
    }
}
