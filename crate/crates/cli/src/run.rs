//! Subcommand implementations.

use serde::Serialize;

use current_coupon::amortization::xi;
use current_coupon::coupon_solvers::{
    approx_current_coupon, contraction_solve, fixed_point_checks, solve_m0_closed_form,
    solve_m0_general, ApproxCurve, ContractionReport, SolvedRate,
};
use current_coupon::factor_model::simulate_paths;
use current_coupon::intensity::{admissibility_report, Decomposition};
use current_coupon::pool_simulator::{
    compare_estimators, large_pool_convergence, price_loan_direct, survival_consistency,
    LlnTable, LoanPoolConfig,
};
use current_coupon::{CirParams, CouponCurve, IntensityModel, MortgageSpec, PathSet};

use crate::config::ExperimentConfig;
use crate::report::{version_string, ComparisonReport, ReportRow};
use crate::CliError;

/// Runs `f` on a pool of `workers` threads (all cores when 0).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Model, grid and one frozen path set per grid point.
///
/// Every grid point uses the same seed, so the rate noise is common across
/// grid points and only the starting value differs.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub params: CirParams,
    pub spec: MortgageSpec,
    pub grid: Vec<f64>,
    pub path_sets: Vec<PathSet>,
}

impl Experiment {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self, CliError> {
        config.validate()?;
        let params = config.cir_params()?;
        let spec = config.mortgage_spec()?;
        let grid = config.rate_grid()?;
        let mc = config.mc_config()?;
        let path_sets = grid
            .iter()
            .map(|&x| {
                simulate_paths(
                    &params.with_r0(x),
                    spec.maturity(),
                    mc.steps_per_year,
                    mc.n_paths,
                    mc.seed,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            config: config.clone(),
            params,
            spec,
            grid,
            path_sets,
        })
    }

    pub fn model(&self, decomposition: Decomposition) -> Result<IntensityModel, CliError> {
        self.config.model_for(decomposition)
    }

    pub fn approx(&self, decomposition: Decomposition) -> Result<ApproxCurve, CliError> {
        let model = self.model(decomposition)?;
        Ok(approx_current_coupon(
            &self.params,
            &self.spec,
            &model,
            &self.grid,
            &self.path_sets,
            Some(decomposition),
        )?)
    }

    /// Naive contraction on the frozen paths from `initial`.
    pub fn contraction(&self, initial: &CouponCurve) -> Result<ContractionReport, CliError> {
        let model = self.config.model()?;
        Ok(contraction_solve(
            &self.path_sets,
            &self.spec,
            &model,
            initial,
            self.config.contraction_tol(),
            self.config.contraction.max_iter,
        )?)
    }

    /// Report rows comparing `approx` with the contraction fixed point.
    pub fn rows(&self, approx: &ApproxCurve, fixed: &CouponCurve) -> Result<Vec<ReportRow>, CliError> {
        self.grid
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let m = fixed.values()[i];
                Ok(ReportRow {
                    x,
                    m0: approx.m0.values()[i],
                    m1: approx.m1[i].value,
                    approx: approx.approx[i],
                    m_contraction: m,
                    error_bps: (approx.approx[i] - m).abs() * 1e4,
                    approx_se_bps: approx.approx_std_error(i) * 1e4,
                    invariant_pdf: self.params.invariant_pdf(x)?,
                })
            })
            .collect()
    }

    /// Index of the grid point closest to the invariant quantile `q`.
    pub fn nearest_to_quantile(&self, q: f64) -> Result<usize, CliError> {
        let target = self.params.invariant_quantile(q)?;
        Ok(self
            .grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0))
    }
}

/// Everything behind one comparison report.
pub struct CompareOutcome {
    pub report: ComparisonReport,
    /// `None` for an empty grid.
    pub approx: Option<ApproxCurve>,
    pub contraction: Option<ContractionReport>,
}

/// `m0 + m1` under the configured decomposition against the contraction
/// fixed point started from `m0`, all on the same frozen paths.
pub fn run_compare(config: &ExperimentConfig) -> Result<CompareOutcome, CliError> {
    let exp = Experiment::prepare(config)?;
    compare_on(&exp)
}

pub fn compare_on(exp: &Experiment) -> Result<CompareOutcome, CliError> {
    let decomposition: Decomposition = exp.config.decomposition.into();
    if exp.grid.is_empty() {
        return Ok(CompareOutcome {
            report: empty_report(&exp.config, decomposition),
            approx: None,
            contraction: None,
        });
    }
    let approx = exp.approx(decomposition)?;
    let contraction = exp.contraction(&approx.m0)?;
    let rows = exp.rows(&approx, contraction.final_curve())?;
    let report = ComparisonReport {
        config_echo: exp.config.echo(),
        seed: exp.config.mc.seed,
        version: version_string(),
        decomposition: decomposition.label().into(),
        contraction_iterations: contraction.iterations_used,
        contraction_converged: contraction.converged,
        rows,
    };
    Ok(CompareOutcome {
        report,
        approx: Some(approx),
        contraction: Some(contraction),
    })
}

fn empty_report(config: &ExperimentConfig, d: Decomposition) -> ComparisonReport {
    ComparisonReport {
        config_echo: config.echo(),
        seed: config.mc.seed,
        version: version_string(),
        decomposition: d.label().into(),
        contraction_iterations: 0,
        contraction_converged: true,
        rows: vec![],
    }
}

/// Baseline coupons on the grid: the closed form where the decomposition
/// has a constant baseline, and the Monte Carlo solver for the factor-only
/// part of the intensity.
#[derive(Debug, Clone, Serialize)]
pub struct BaselineRow {
    pub x: f64,
    pub closed_form: Option<f64>,
    pub monte_carlo: SolvedRate,
}

pub fn run_baseline(config: &ExperimentConfig) -> Result<Vec<BaselineRow>, CliError> {
    let exp = Experiment::prepare(config)?;
    let model = exp.config.model()?;
    let factor_model = exp.config.factor_baseline_model()?;
    let mc_model = if config.intensity.rate_slope == 0.0 {
        model.clone()
    } else {
        factor_model
    };
    exp.grid
        .iter()
        .zip(&exp.path_sets)
        .map(|(&x, paths)| {
            let closed_form = match model.baseline.as_constant() {
                Some(_) => Some(solve_m0_closed_form(&exp.params, &exp.spec, &model.baseline, x)?),
                None => None,
            };
            Ok(BaselineRow {
                x,
                closed_form,
                monte_carlo: solve_m0_general(paths, &exp.spec, &mc_model)?,
            })
        })
        .collect()
}

/// Naive contraction started from the closed-form baseline coupon of the
/// configured decomposition.
pub fn run_contract(config: &ExperimentConfig) -> Result<ContractionReport, CliError> {
    let exp = Experiment::prepare(config)?;
    let model = exp.config.model()?;
    let m0 = exp
        .grid
        .iter()
        .map(|&x| solve_m0_closed_form(&exp.params, &exp.spec, &model.baseline, x))
        .collect::<Result<Vec<_>, _>>()?;
    exp.contraction(&CouponCurve::new(exp.grid.clone(), m0)?)
}

/// Summary of where the configured intensity breaks `0 <= gamma_m <= Xi(m T)`
/// over the reporting grid, or `None` when it holds everywhere. Solving
/// proceeds either way.
pub fn admissibility_warning(config: &ExperimentConfig) -> Result<Option<String>, CliError> {
    let model = config.model()?;
    let spec = config.mortgage_spec()?;
    let mut rates = config.rate_grid()?;
    if rates.is_empty() {
        rates.push(config.cir.theta);
    }
    let report = admissibility_report(&model, &spec, &rates, &rates, &rates);
    Ok(report.violations.iter().max_by(|a, b| (a.gamma_m - a.bound).total_cmp(&(b.gamma_m - b.bound))).map(|v| {
        format!(
            "intensity outside 0 <= gamma_m <= Xi(m T) at {} of {} grid points (worst: m = {:.4}, z = {:.4}, gamma_m = {:.3}, bound {:.3})",
            report.violations.len(),
            report.points_checked,
            v.m,
            v.z,
            v.gamma_m,
            v.bound
        )
    }))
}

pub fn xi_table(points: &[f64]) -> Result<Vec<(f64, f64, f64)>, CliError> {
    if let Some(x) = points.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(CliError::Config(format!("xi points must be positive, got {x}")));
    }
    points
        .iter()
        .map(|&x| Ok((x, xi(x)?, 1.0 / x)))
        .collect()
}

/// Per-path spread of single-loan values at which prepayment is treated as
/// absent (roundoff of an exact integral).
const NO_LOAN_NOISE: f64 = 1e-10;

/// One pass/fail line of the verification summary.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub checks: Vec<Check>,
    pub lln: LlnTable,
}

impl VerifySummary {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Par property at the contraction coupon nearest each quantile in `levels`:
/// direct cash-flow value within `3 SE + 2 tol den` of 1.
pub fn par_checks(
    exp: &Experiment,
    fixed: &CouponCurve,
    levels: &[f64],
) -> Result<Vec<Check>, CliError> {
    let model = exp.config.model()?;
    let tol = exp.config.contraction_tol();
    let fp = fixed_point_checks(&exp.path_sets, &exp.spec, &model, fixed)?;
    levels
        .iter()
        .map(|&q| {
            let i = exp.nearest_to_quantile(q)?;
            let pool = LoanPoolConfig::new(
                exp.config.verify.n_loans,
                fixed.values()[i],
                exp.spec,
                model.clone(),
                fixed.clone(),
            )?;
            let v = price_loan_direct(&exp.path_sets[i], &pool, exp.config.mc.seed)?;
            let band = 3.0 * v.std_error + 2.0 * tol * fp[i].denominator;
            let dev = (v.value - 1.0).abs();
            Ok(Check::new(
                format!("par at q{:.0} (x = {:.5})", q * 100.0, exp.grid[i]),
                dev <= band,
                format!(
                    "value {:.6} (se {:.2e}), |value - 1| = {:.2e} <= {:.2e}",
                    v.value, v.std_error, dev, band
                ),
            ))
        })
        .collect()
}

/// Direct against intensity-form prices on a 3 x 3 grid of contract rates
/// and baseline intensities, with refinancing against the zero-intensity
/// baseline coupon.
pub fn equivalence_checks(config: &ExperimentConfig, n_paths: usize) -> Result<Vec<Check>, CliError> {
    let params = config.cir_params()?;
    let spec = config.mortgage_spec()?;
    let mc = config.mc_config()?;
    let grid = config.rate_grid()?;
    let z_grid = if grid.len() >= 2 { grid } else { vec![params.theta, 2.0 * params.theta] };
    let z = CouponCurve::from_fn(z_grid, |x| {
        solve_m0_closed_form(&params, &spec, &current_coupon::Baseline::Zero, x).unwrap_or(x)
    })?;
    let paths = simulate_paths(&params, spec.maturity(), mc.steps_per_year, n_paths, mc.seed)?;
    let mut out = Vec::new();
    for &m in &[0.04, 0.06, 0.08] {
        for &g in &[0.0, 0.045, 0.1] {
            let mut c = config.clone();
            c.intensity.gamma_base = g;
            let model = c.model_for(Decomposition::ZeroBaseline)?;
            let pool = LoanPoolConfig::new(config.verify.n_loans, m, spec, model, z.clone())?;
            let cmp = compare_estimators(&paths, &pool, mc.seed)?;
            out.push(Check::new(
                format!("estimators agree (m = {m}, gamma = {g})"),
                cmp.within(3.0),
                format!(
                    "direct {:.6} vs intensity {:.6}, |diff| {:.2e} <= 3 x {:.2e}",
                    cmp.direct.value,
                    cmp.intensity_form.value,
                    cmp.difference().abs(),
                    cmp.combined_se
                ),
            ));
        }
    }
    Ok(out)
}

pub fn run_verify(config: &ExperimentConfig) -> Result<VerifySummary, CliError> {
    let exp = Experiment::prepare(config)?;
    let mut checks = Vec::new();
    if !exp.grid.is_empty() {
        let approx = exp.approx(config.decomposition.into())?;
        let contraction = exp.contraction(&approx.m0)?;
        checks.push(Check::new(
            "contraction converged",
            contraction.converged,
            format!(
                "{} iterations, last sup change {:.3e}",
                contraction.iterations_used,
                contraction.sup_deltas.last().copied().unwrap_or(0.0)
            ),
        ));
        checks.extend(par_checks(&exp, contraction.final_curve(), &[0.25, 0.5, 0.75])?);
    }
    checks.extend(equivalence_checks(config, config.verify.n_paths)?);

    let params = exp.params;
    let mc = config.mc_config()?;
    let model = config.model()?;
    let z = CouponCurve::constant(vec![params.theta], params.theta)?;
    let paths = simulate_paths(&params, exp.spec.maturity(), mc.steps_per_year, config.verify.n_paths, mc.seed)?;
    let pool = LoanPoolConfig::new(config.verify.n_loans, params.theta, exp.spec, model.clone(), z.clone())?;
    let horizon = exp.spec.maturity();
    let times: Vec<f64> = [1.0, 5.0, 15.0, 30.0].iter().map(|t: &f64| t.min(horizon)).collect();
    for s in survival_consistency(&paths, &pool, mc.seed, &times)? {
        checks.push(Check::new(
            format!("survival at t = {}", s.t),
            s.within(3.0),
            format!(
                "empirical {:.6} vs model {:.6} (se {:.2e})",
                s.empirical, s.model, s.std_error
            ),
        ));
    }

    let lln_paths = simulate_paths(&params, horizon, mc.steps_per_year, config.verify.lln_paths, mc.seed)?;
    let lln = large_pool_convergence(&lln_paths, &pool, mc.seed, &[1, 10, 100, 1000])?;
    let single = lln.rows.first().map_or(0.0, |r| r.rms_path_deviation);
    if single <= NO_LOAN_NOISE {
        checks.push(Check::new(
            "large-pool rate",
            true,
            format!("no loan-level randomness (rms deviation {single:.2e} at N = 1), nothing to average"),
        ));
    } else {
        checks.push(Check::new(
            "large-pool rate",
            (lln.slope + 0.5).abs() <= 0.15,
            format!("slope of log rms deviation vs log N = {:.3}", lln.slope),
        ));
    }
    for row in &lln.rows {
        checks.push(Check::new(
            format!("large-pool N = {}", row.n_loans),
            row.deviation <= 4.0 * row.combined_se,
            format!(
                "|mean deviation| {:.2e} <= 4 x {:.2e}, rms {:.2e}",
                row.deviation, row.combined_se, row.rms_path_deviation
            ),
        ));
    }
    Ok(VerifySummary { checks, lln })
}
