//! Current-coupon solvers.
//!
//! * Baseline coupons `m0` for factor-only intensities: closed forms for a
//!   zero or constant intensity under the CIR bond formula, and a Monte Carlo
//!   solver for a general baseline.
//! * The first-order correction `m1` and the approximation `m0 + m1`.
//! * Naive contraction `m_n = A[m_{n-1}]` on frozen paths, used as the
//!   reference fixed point.

use serde::{Deserialize, Serialize};

use crate::amortization::MortgageSpec;
use crate::curve::CouponCurve;
use crate::error::{CouponError, Result};
use crate::factor_model::{CirParams, FactorProcess, PathSet};
use crate::intensity::{Baseline, Decomposition, IntensityModel};
use crate::numerics::{adaptive_simpson, bisect, mean_and_se, trapezoid, BISECTION_TOL, RATE_BRACKET};
use crate::path_engine::{
    baseline_integrals, baseline_residual_samples, m1_integrals, valuation_integrals,
    RatioIntegrals,
};

/// Absolute tolerance for the closed-form quadratures.
const QUAD_TOL: f64 = 1e-13;

/// Default contraction tolerance: 0.1 bp.
pub const DEFAULT_TOL: f64 = 1e-5;
pub const DEFAULT_MAX_ITER: usize = 25;

/// A solved rate with its Monte Carlo standard error (zero for closed forms).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolvedRate {
    pub value: f64,
    pub std_error: f64,
}

/// `(1 - e^{-y}) / y`, strictly decreasing from 1 at `y = 0`.
pub fn annuity_ratio(y: f64) -> f64 {
    if y.abs() < 1e-12 {
        return 1.0 - 0.5 * y;
    }
    -(-y).exp_m1() / y
}

fn check_x(op: &'static str, x: f64) -> Result<()> {
    if !(x.is_finite() && x > 0.0) {
        return Err(CouponError::domain(op, format!("factor value {x} must be > 0")));
    }
    Ok(())
}

/// Baseline coupon when nothing prepays: the unique `m0` with
/// `(1 - e^{-m0 T}) / (m0 T) = (1/T) int_0^T P_x(t) dt`.
pub fn solve_m0_zero_intensity(params: &CirParams, spec: &MortgageSpec, x: f64) -> Result<f64> {
    const OP: &str = "solve_m0_zero_intensity";
    check_x(OP, x)?;
    let big_t = spec.maturity();
    let target = adaptive_simpson(|t| params.bond_price(x, t), 0.0, big_t, QUAD_TOL) / big_t;
    if !(target > 0.0 && target < 1.0) {
        return Err(CouponError::solver(
            OP,
            x,
            format!("average bond price {target} outside (0, 1)"),
        ));
    }
    let (lo, hi) = RATE_BRACKET;
    bisect(OP, |m| annuity_ratio(m * big_t) - target, lo, hi, BISECTION_TOL)
}

/// Baseline coupon under a constant intensity `gamma`: the unique `m0` with
/// `(1 - e^{-m0 T}) / m0 = int_0^T e^{-gamma t} P_x(t) (1 + gamma (1 - e^{-m0 (T-t)}) / m0) dt`.
pub fn solve_m0_const_intensity(
    params: &CirParams,
    spec: &MortgageSpec,
    x: f64,
    gamma: f64,
) -> Result<f64> {
    const OP: &str = "solve_m0_const_intensity";
    check_x(OP, x)?;
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(CouponError::domain(OP, format!("gamma = {gamma} must be >= 0")));
    }
    if gamma == 0.0 {
        return solve_m0_zero_intensity(params, spec, x);
    }
    let big_t = spec.maturity();
    // Increasing in m: negative at 0, positive as m grows.
    let residual = |m: f64| {
        let rhs = adaptive_simpson(
            |t| {
                let amort = -(-m * (big_t - t)).exp_m1() / m;
                (-gamma * t).exp() * params.bond_price(x, t) * (1.0 + gamma * amort)
            },
            0.0,
            big_t,
            QUAD_TOL,
        );
        rhs - big_t * annuity_ratio(m * big_t)
    };
    let (lo, hi) = RATE_BRACKET;
    bisect(OP, residual, lo, hi, BISECTION_TOL)
}

/// Closed-form baseline coupon for a constant baseline intensity.
pub fn solve_m0_closed_form(
    params: &CirParams,
    spec: &MortgageSpec,
    baseline: &Baseline,
    x: f64,
) -> Result<f64> {
    match baseline.as_constant() {
        Some(0.0) => solve_m0_zero_intensity(params, spec, x),
        Some(g) => solve_m0_const_intensity(params, spec, x, g),
        None => Err(CouponError::Config(format!(
            "closed-form baseline coupon needs a constant baseline, got {baseline:?}"
        ))),
    }
}

/// Baseline coupon for a general factor-only intensity from Monte Carlo
/// estimates of `F` and `H`: the root of
/// `F(T) - int_0^T e^{-m (T-t)} H(t) dt`, which is increasing in `m`.
///
/// Only the baseline of `model` is used; `paths` must start at the factor
/// value of interest.
pub fn solve_m0_general(paths: &PathSet, spec: &MortgageSpec, model: &IntensityModel) -> Result<SolvedRate> {
    const OP: &str = "solve_m0_general";
    let baseline = model.baseline_only();
    let bi = baseline_integrals(paths, &baseline)?;
    let grid = &bi.time_grid;
    let big_t = spec.maturity();
    if (paths.horizon() - big_t).abs() > 1e-9 * big_t {
        return Err(CouponError::Config(format!(
            "{OP}: path horizon {} differs from maturity {big_t}",
            paths.horizon()
        )));
    }
    let f_total = *bi.big_f.last().expect("nonempty grid");
    let weighted = |m: f64, power: bool| {
        let vals: Vec<f64> = grid
            .iter()
            .zip(&bi.h)
            .map(|(&t, &h)| {
                let w = (-m * (big_t - t)).exp() * h;
                if power {
                    (big_t - t) * w
                } else {
                    w
                }
            })
            .collect();
        trapezoid(grid, &vals)
    };
    let (lo, hi) = RATE_BRACKET;
    let root = bisect(OP, |m| f_total - weighted(m, false), lo, hi, BISECTION_TOL).map_err(|e| {
        match e {
            CouponError::Bracket { f_lo, f_hi, .. } => CouponError::solver(
                OP,
                paths.initial_rate(),
                format!("residuals do not bracket a root: {f_lo:.6e} at {lo}, {f_hi:.6e} at {hi}"),
            ),
            other => other,
        }
    })?;
    let samples = baseline_residual_samples(paths, &baseline, root);
    let (_, se_resid) = mean_and_se(&samples);
    let slope = weighted(root, true);
    Ok(SolvedRate {
        value: root,
        std_error: se_resid / slope,
    })
}

/// First-order correction at `x` (the start of `paths`): ratio of the
/// [`m1_integrals`] around `m0_curve(x)`. Includes the model's `epsilon`.
pub fn solve_m1(
    paths: &PathSet,
    spec: &MortgageSpec,
    model: &IntensityModel,
    m0_curve: &CouponCurve,
    x: f64,
) -> Result<SolvedRate> {
    const OP: &str = "solve_m1";
    let m0 = m0_curve.eval(x);
    let est = m1_integrals(paths, spec, model, m0, m0_curve)?;
    if est.denominator_indistinct_from_zero(3.0) {
        return Err(CouponError::solver(
            OP,
            x,
            format!(
                "denominator {:.3e} within 3 standard errors ({:.3e}) of zero",
                est.denominator.value, est.denominator.std_error
            ),
        ));
    }
    Ok(SolvedRate {
        value: est.ratio(),
        std_error: est.ratio_std_error,
    })
}

/// How `m0` was obtained in [`approx_current_coupon`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMethod {
    ClosedForm,
    MonteCarlo,
}

/// The approximation `m0 + m1` on a reporting grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxCurve {
    pub decomposition: Option<Decomposition>,
    pub baseline_method: BaselineMethod,
    pub m0: CouponCurve,
    pub m0_std_error: Vec<f64>,
    pub m1: Vec<SolvedRate>,
    /// `m0 + m1` at each grid point.
    pub approx: Vec<f64>,
}

impl ApproxCurve {
    pub fn grid(&self) -> &[f64] {
        self.m0.grid()
    }

    /// Whether `m0 + m1 > 0` at every grid point.
    pub fn all_positive(&self) -> bool {
        self.approx.iter().all(|&v| v > 0.0)
    }

    /// Standard error of `m0 + m1` at grid point `i`.
    pub fn approx_std_error(&self, i: usize) -> f64 {
        self.m0_std_error[i].hypot(self.m1[i].std_error)
    }
}

fn check_path_sets(grid: &[f64], path_sets: &[PathSet]) -> Result<()> {
    if grid.len() != path_sets.len() {
        return Err(CouponError::Config(format!(
            "{} grid points but {} path sets",
            grid.len(),
            path_sets.len()
        )));
    }
    for (x, p) in grid.iter().zip(path_sets) {
        if (p.initial_rate() - x).abs() > 1e-6 * x.max(1e-3) {
            return Err(CouponError::Config(format!(
                "path set for x = {x} starts at {}",
                p.initial_rate()
            )));
        }
    }
    Ok(())
}

/// `m0 + m1` on `grid`, with one frozen path set per grid point.
///
/// `m0` comes from the closed forms when the baseline of `model` is constant
/// and from [`solve_m0_general`] otherwise.
pub fn approx_current_coupon(
    params: &CirParams,
    spec: &MortgageSpec,
    model: &IntensityModel,
    grid: &[f64],
    path_sets: &[PathSet],
    decomposition: Option<Decomposition>,
) -> Result<ApproxCurve> {
    check_path_sets(grid, path_sets)?;
    let (m0_values, m0_std_error, baseline_method) = if model.baseline.as_constant().is_some() {
        let vals = grid
            .iter()
            .map(|&x| solve_m0_closed_form(params, spec, &model.baseline, x))
            .collect::<Result<Vec<_>>>()?;
        (vals, vec![0.0; grid.len()], BaselineMethod::ClosedForm)
    } else {
        let solved = path_sets
            .iter()
            .map(|p| solve_m0_general(p, spec, model))
            .collect::<Result<Vec<_>>>()?;
        (
            solved.iter().map(|s| s.value).collect(),
            solved.iter().map(|s| s.std_error).collect(),
            BaselineMethod::MonteCarlo,
        )
    };
    let m0 = CouponCurve::new(grid.to_vec(), m0_values)?;
    let m1 = grid
        .iter()
        .zip(path_sets)
        .map(|(&x, p)| solve_m1(p, spec, model, &m0, x))
        .collect::<Result<Vec<_>>>()?;
    let approx = m0.values().iter().zip(&m1).map(|(a, b)| a + b.value).collect();
    Ok(ApproxCurve {
        decomposition,
        baseline_method,
        m0,
        m0_std_error,
        m1,
        approx,
    })
}

/// Valuation-operator integrals at every grid point for the candidate `curve`.
pub fn operator_integrals(
    path_sets: &[PathSet],
    spec: &MortgageSpec,
    model: &IntensityModel,
    curve: &CouponCurve,
) -> Result<Vec<RatioIntegrals>> {
    check_path_sets(curve.grid(), path_sets)?;
    curve
        .grid()
        .iter()
        .zip(curve.values())
        .zip(path_sets)
        .map(|((&x, &m), paths)| {
            let est = valuation_integrals(paths, spec, model, m, curve)?;
            if est.denominator_indistinct_from_zero(3.0) {
                return Err(CouponError::solver(
                    "contraction_step",
                    x,
                    format!("denominator {:.3e} indistinct from zero", est.denominator.value),
                ));
            }
            Ok(est)
        })
        .collect()
}

/// One application of the valuation operator: `A[prev](x)` at each grid point,
/// with `prev` substituted for both the contract and the refinancing rate.
pub fn contraction_step(
    path_sets: &[PathSet],
    spec: &MortgageSpec,
    model: &IntensityModel,
    prev: &CouponCurve,
) -> Result<CouponCurve> {
    let est = operator_integrals(path_sets, spec, model, prev)?;
    let values = est.iter().map(RatioIntegrals::ratio).collect();
    CouponCurve::new(prev.grid().to_vec(), values)
}

/// Iterates of the naive contraction and their sup-norm changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub initial: CouponCurve,
    pub iterates: Vec<CouponCurve>,
    pub sup_deltas: Vec<f64>,
    pub converged: bool,
    pub iterations_used: usize,
    pub tol: f64,
}

impl ContractionReport {
    pub fn final_curve(&self) -> &CouponCurve {
        self.iterates.last().unwrap_or(&self.initial)
    }
}

/// Iterates [`contraction_step`] from `initial` until the sup-norm change
/// drops below `tol` or `max_iter` steps are used. Not converging is not an
/// error; check [`ContractionReport::converged`].
pub fn contraction_solve(
    path_sets: &[PathSet],
    spec: &MortgageSpec,
    model: &IntensityModel,
    initial: &CouponCurve,
    tol: f64,
    max_iter: usize,
) -> Result<ContractionReport> {
    if !(tol > 0.0) || max_iter == 0 {
        return Err(CouponError::Config(format!(
            "contraction needs tol > 0 and max_iter >= 1, got {tol} and {max_iter}"
        )));
    }
    let mut report = ContractionReport {
        initial: initial.clone(),
        iterates: Vec::new(),
        sup_deltas: Vec::new(),
        converged: false,
        iterations_used: 0,
        tol,
    };
    let mut prev = initial.clone();
    for _ in 0..max_iter {
        let next = contraction_step(path_sets, spec, model, &prev)?;
        let delta = next.sup_distance(&prev);
        report.sup_deltas.push(delta);
        report.iterations_used += 1;
        report.iterates.push(next.clone());
        prev = next;
        if delta < tol {
            report.converged = true;
            break;
        }
    }
    Ok(report)
}

/// Operator-level checks of a candidate fixed point at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointCheck {
    pub x: f64,
    pub m: f64,
    /// `A[m](x)`
    pub operator_value: f64,
    /// `E[int (m - r) p e^{-int (r + gamma)} dt] = m * den - num`
    pub par_gap: f64,
    pub denominator: f64,
    /// Standard error of `A[m](x)`.
    pub std_error: f64,
}

impl FixedPointCheck {
    pub fn residual(&self) -> f64 {
        (self.operator_value - self.m).abs()
    }
}

/// Re-applies the operator to `curve` on the same frozen paths.
pub fn fixed_point_checks(
    path_sets: &[PathSet],
    spec: &MortgageSpec,
    model: &IntensityModel,
    curve: &CouponCurve,
) -> Result<Vec<FixedPointCheck>> {
    let est = operator_integrals(path_sets, spec, model, curve)?;
    Ok(curve
        .grid()
        .iter()
        .zip(curve.values())
        .zip(est)
        .map(|((&x, &m), e)| FixedPointCheck {
            x,
            m,
            operator_value: e.ratio(),
            par_gap: m * e.denominator.value - e.numerator.value,
            denominator: e.denominator.value,
            std_error: e.ratio_std_error,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor_model::simulate_paths;
    use crate::intensity::{Perturbation, RefiIncentiveIntensity};

    fn paper_params() -> CirParams {
        CirParams::new(0.25, 0.06, 0.1, 0.06).unwrap()
    }

    #[test]
    fn annuity_ratio_decreasing_from_one() {
        assert!((annuity_ratio(1e-14) - 1.0).abs() < 1e-13);
        let mut prev = annuity_ratio(1e-6);
        for k in 1..200 {
            let v = annuity_ratio(k as f64 * 0.1);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn zero_intensity_deterministic_limit() {
        let p = CirParams::new(0.25, 0.06, 1e-8, 0.06).unwrap();
        let spec = MortgageSpec::new(30.0).unwrap();
        let m0 = solve_m0_zero_intensity(&p, &spec, 0.06).unwrap();
        assert!((m0 - 0.06).abs() < 1e-6, "{m0}");
    }

    #[test]
    fn zero_intensity_short_maturity() {
        let spec = MortgageSpec::new(0.01).unwrap();
        let m0 = solve_m0_zero_intensity(&paper_params(), &spec, 0.08).unwrap();
        assert!((m0 - 0.08).abs() < 1e-3);
    }

    #[test]
    fn const_intensity_reduces_to_zero_intensity() {
        let spec = MortgageSpec::new(30.0).unwrap();
        for x in [0.02, 0.06, 0.12] {
            let a = solve_m0_zero_intensity(&paper_params(), &spec, x).unwrap();
            let b = solve_m0_const_intensity(&paper_params(), &spec, x, 0.0).unwrap();
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn const_intensity_root_in_range() {
        let spec = MortgageSpec::new(30.0).unwrap();
        let m0 = solve_m0_const_intensity(&paper_params(), &spec, 0.06, 0.045).unwrap();
        assert!(m0 > 0.0 && m0 < 0.2);
        assert!(solve_m0_const_intensity(&paper_params(), &spec, 0.06, -0.1).is_err());
        assert!(solve_m0_zero_intensity(&paper_params(), &spec, 0.0).is_err());
    }

    #[test]
    fn closed_form_rejects_non_constant_baseline() {
        let spec = MortgageSpec::new(30.0).unwrap();
        let b = Baseline::RateLinear {
            level: 0.01,
            slope: 0.5,
        };
        assert!(matches!(
            solve_m0_closed_form(&paper_params(), &spec, &b, 0.06),
            Err(CouponError::Config(_))
        ));
    }

    #[test]
    fn general_solver_sign_endpoints() {
        let paths = simulate_paths(&paper_params(), 30.0, 12, 500, 2).unwrap();
        let bi = baseline_integrals(&paths, &IntensityModel::constant(0.045)).unwrap();
        let f_total = *bi.big_f.last().unwrap();
        let at_zero = f_total - trapezoid(&bi.time_grid, &bi.h);
        assert!(at_zero < 0.0);
        assert!(f_total > 0.0);
    }

    #[test]
    fn m1_zero_without_perturbation_and_linear_in_scale() {
        let spec = MortgageSpec::new(30.0).unwrap();
        let paths = simulate_paths(&paper_params(), 30.0, 12, 400, 8).unwrap();
        let grid = vec![0.02, 0.06, 0.1];
        let m0 = CouponCurve::from_fn(grid, |x| {
            solve_m0_const_intensity(&paper_params(), &spec, x, 0.045).unwrap()
        })
        .unwrap();
        let base = IntensityModel::constant(0.045);
        assert_eq!(solve_m1(&paths, &spec, &base, &m0, 0.06).unwrap().value, 0.0);

        let model = RefiIncentiveIntensity::new(0.045, 5.0)
            .unwrap()
            .decompose(Decomposition::ConstantBaseline);
        let one = solve_m1(&paths, &spec, &model, &m0, 0.06).unwrap().value;
        let two = solve_m1(&paths, &spec, &model.with_epsilon(2.0), &m0, 0.06).unwrap().value;
        assert_eq!(two, 2.0 * one);
        let third = solve_m1(&paths, &spec, &model.with_epsilon(0.3), &m0, 0.06).unwrap().value;
        assert!((third - 0.3 * one).abs() <= 1e-13 * one.abs());
    }

    #[test]
    fn constant_intensity_contraction_matches_baseline() {
        let spec = MortgageSpec::new(30.0).unwrap();
        let grid = vec![0.03, 0.06, 0.09];
        let sets: Vec<PathSet> = grid
            .iter()
            .map(|&x| simulate_paths(&paper_params().with_r0(x), 30.0, 12, 300, 4).unwrap())
            .collect();
        let model = IntensityModel::new(Baseline::Constant(0.045), Perturbation::Zero, 1.0).unwrap();
        let initial = CouponCurve::from_fn(grid.clone(), |x| x).unwrap();
        let report = contraction_solve(&sets, &spec, &model, &initial, 1e-9, 50).unwrap();
        assert!(report.converged);
        // the fixed point is the frozen-path baseline solution, up to the
        // O(dt^2) gap between the two trapezoidal discretizations
        for (i, p) in sets.iter().enumerate() {
            let general = solve_m0_general(p, &spec, &model).unwrap();
            let fixed = report.final_curve().values()[i];
            assert!((general.value - fixed).abs() < 5e-6, "{} {}", general.value, fixed);
        }
        let checks = fixed_point_checks(&sets, &spec, &model, report.final_curve()).unwrap();
        assert!(checks.iter().all(|c| c.residual() < 1e-8 && c.par_gap.abs() < 1e-7));
    }

    #[test]
    fn contraction_argument_checks() {
        let spec = MortgageSpec::new(30.0).unwrap();
        let c = CouponCurve::constant(vec![0.06], 0.06).unwrap();
        assert!(contraction_solve(&[], &spec, &IntensityModel::zero(), &c, 0.0, 5).is_err());
        assert!(contraction_solve(&[], &spec, &IntensityModel::zero(), &c, 1e-5, 0).is_err());
        assert!(contraction_solve(&[], &spec, &IntensityModel::zero(), &c, 1e-5, 5).is_err());
    }
}
