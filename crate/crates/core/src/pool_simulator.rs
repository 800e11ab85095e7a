//! Doubly stochastic loan-pool simulation.
//!
//! Each loan prepays at `tau = inf{t : exp(-int_0^t gamma) <= U}` with `U`
//! uniform and independent of the rate path. Uniforms come from their own
//! substream, keyed by path index, so a loan's draw does not depend on how
//! many paths or workers are used.

use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::amortization::MortgageSpec;
use crate::curve::CouponCurve;
use crate::error::{CouponError, Result};
use crate::factor_model::PathSet;
use crate::intensity::IntensityModel;
use crate::numerics::{exp_cell_weights, mean_and_se};
use crate::path_engine::{per_path, FunctionalEstimate};
use crate::streams::{substream, DOMAIN_PREPAYMENT};

/// An `n_loans` pool of equal loans of size `1 / n_loans`.
#[derive(Debug, Clone)]
pub struct LoanPoolConfig {
    pub n_loans: usize,
    pub contract_rate: f64,
    pub spec: MortgageSpec,
    pub model: IntensityModel,
    /// Refinancing-rate function used inside the intensity.
    pub z_curve: CouponCurve,
}

impl LoanPoolConfig {
    pub fn new(
        n_loans: usize,
        contract_rate: f64,
        spec: MortgageSpec,
        model: IntensityModel,
        z_curve: CouponCurve,
    ) -> Result<Self> {
        let cfg = Self {
            n_loans,
            contract_rate,
            spec,
            model,
            z_curve,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_loans == 0 {
            return Err(CouponError::Config("pool needs at least one loan".into()));
        }
        if !(self.contract_rate.is_finite() && self.contract_rate >= 0.0) {
            return Err(CouponError::Config(format!(
                "contract rate {} must be finite and >= 0",
                self.contract_rate
            )));
        }
        Ok(())
    }

    pub fn with_n_loans(&self, n_loans: usize) -> Self {
        Self {
            n_loans,
            ..self.clone()
        }
    }
}

/// First time the cumulative intensity reaches `-ln u`, linearly
/// interpolated within the bracketing grid cell; `None` if it is not reached
/// by the end of the grid.
pub fn sample_prepayment_time(time_grid: &[f64], cum_gamma: &[f64], u: f64) -> Result<Option<f64>> {
    const OP: &str = "sample_prepayment_time";
    if !(u > 0.0 && u < 1.0) {
        return Err(CouponError::domain(OP, format!("uniform draw {u} outside (0, 1)")));
    }
    if time_grid.len() != cum_gamma.len() || cum_gamma.is_empty() {
        return Err(CouponError::domain(OP, "grid and cumulative intensity lengths differ"));
    }
    if cum_gamma[0] != 0.0 || cum_gamma.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(CouponError::domain(
            OP,
            "cumulative intensity must start at 0 and be nondecreasing",
        ));
    }
    Ok(locate(time_grid, cum_gamma, -u.ln()))
}

/// Cell index and interpolated time where `cum` first reaches `level > 0`.
fn locate_cell(time_grid: &[f64], cum: &[f64], level: f64) -> Option<(usize, f64)> {
    let j = cum.partition_point(|&g| g < level);
    if j == cum.len() {
        return None;
    }
    // level > 0 = cum[0], so j >= 1 and cum[j-1] < level <= cum[j]
    let w = (level - cum[j - 1]) / (cum[j] - cum[j - 1]);
    let tau = time_grid[j - 1] + w * (time_grid[j] - time_grid[j - 1]);
    Some((j, tau))
}

fn locate(time_grid: &[f64], cum: &[f64], level: f64) -> Option<f64> {
    locate_cell(time_grid, cum, level).map(|(_, t)| t)
}

/// Per-path quantities on the shared grid.
///
/// The cumulative rate and intensity are piecewise linear in time and the
/// balance is affine in `e^{m t}`, so every cell integral is exact.
struct PathFlows {
    /// `int_0^t r`
    cum_rate: Vec<f64>,
    /// `int_0^t gamma`
    cum_gamma: Vec<f64>,
    /// `int_0^t c e^{-int r}`
    cum_coupon: Vec<f64>,
    /// `1 + int_0^T p (m - r) e^{-int (r + gamma)}`
    value_a: f64,
    /// `int_0^T (c + p gamma) e^{-int (r + gamma)}`
    value_b: f64,
}

struct Precomputed {
    balance: Vec<f64>,
    coupon: f64,
    /// `p(t) = level - growth[t]` with `growth` exponential in `t`; `None`
    /// when the contract rate is small enough for `p` to be linear.
    level: Option<f64>,
    growth: Vec<f64>,
}

impl Precomputed {
    fn new(paths: &PathSet, pool: &LoanPoolConfig) -> Self {
        let m = pool.contract_rate;
        let big_t = pool.spec.maturity();
        let grid = paths.time_grid();
        // below this the exponential split cancels badly and p is linear to 1e-9
        let linear = m * big_t < 1e-4;
        let level = (!linear).then(|| -1.0 / (-m * big_t).exp_m1());
        let growth = match level {
            Some(a) => grid.iter().map(|&t| a * (-m * (big_t - t)).exp()).collect(),
            None => Vec::new(),
        };
        Self {
            balance: grid.iter().map(|&t| pool.spec.balance_unchecked(t, m)).collect(),
            coupon: pool.spec.coupon_rate_unchecked(m),
            level,
            growth,
        }
    }

    /// `int` over cell `j` of `p e^{-L}`, divided by `h e^{-L(t_{j-1})}`,
    /// for `L` rising linearly by `d` across the cell.
    fn balance_weight(&self, j: usize, d: f64, mh: f64) -> f64 {
        match self.level {
            Some(a) => a * exp_cell_weights(d).0 - self.growth[j - 1] * exp_cell_weights(d - mh).0,
            None => {
                let (w0, w1) = exp_cell_weights(d);
                self.balance[j - 1] * w0 + (self.balance[j] - self.balance[j - 1]) * w1
            }
        }
    }
}

fn path_flows(paths: &PathSet, pool: &LoanPoolConfig, pre: &Precomputed, i: usize) -> PathFlows {
    let grid = paths.time_grid();
    let r = paths.rates(i);
    let m = pool.contract_rate;
    let n = grid.len();
    let gamma: Vec<f64> = r
        .iter()
        .map(|&x| {
            let x = x as f64;
            pool.model.eval_unchecked(x, m, pool.z_curve.eval(x))
        })
        .collect();
    let mut cum_rate: Vec<f64> = Vec::with_capacity(n);
    let mut cum_gamma: Vec<f64> = Vec::with_capacity(n);
    let mut cum_coupon = Vec::with_capacity(n);
    cum_rate.push(0.0);
    cum_gamma.push(0.0);
    cum_coupon.push(0.0);
    let c = pre.coupon;
    let (mut a, mut b) = (0.0, 0.0);
    for j in 1..n {
        let h = grid[j] - grid[j - 1];
        let d_rate = 0.5 * h * (r[j - 1] as f64 + r[j] as f64);
        let d_gamma = 0.5 * h * (gamma[j - 1] + gamma[j]);
        let (cr0, cg0) = (cum_rate[j - 1], cum_gamma[j - 1]);
        let (w0, _) = exp_cell_weights(d_rate);
        cum_coupon.push(cum_coupon[j - 1] + c * h * (-cr0).exp() * w0);
        let d = d_rate + d_gamma;
        let scale = h * (-(cr0 + cg0)).exp();
        let balance = scale * pre.balance_weight(j, d, m * h);
        // cell-average rate and intensity, the slopes of the linear integrals
        a += (m - d_rate / h) * balance;
        b += c * scale * exp_cell_weights(d).0 + d_gamma / h * balance;
        cum_rate.push(cr0 + d_rate);
        cum_gamma.push(cg0 + d_gamma);
    }
    PathFlows {
        cum_rate,
        cum_gamma,
        cum_coupon,
        value_a: 1.0 + a,
        value_b: b,
    }
}

/// Discounted cash flows of one loan with uniform draw `u` on this path:
/// coupons up to `tau ^ T`, plus the balance repaid at `tau` if `tau <= T`.
fn loan_value(grid: &[f64], flows: &PathFlows, pool: &LoanPoolConfig, coupon: f64, u: f64) -> f64 {
    match locate_cell(grid, &flows.cum_gamma, -u.ln()) {
        None => *flows.cum_coupon.last().expect("nonempty grid"),
        Some((j, tau)) => {
            let w = (tau - grid[j - 1]) / (grid[j] - grid[j - 1]);
            let cr0 = flows.cum_rate[j - 1];
            let d_rate = w * (flows.cum_rate[j] - cr0);
            let (w0, _) = exp_cell_weights(d_rate);
            let coupons = flows.cum_coupon[j - 1] + coupon * (tau - grid[j - 1]) * (-cr0).exp() * w0;
            coupons + pool.spec.balance_unchecked(tau, pool.contract_rate) * (-(cr0 + d_rate)).exp()
        }
    }
}

fn check(op: &str, paths: &PathSet, pool: &LoanPoolConfig) -> Result<()> {
    pool.validate()?;
    if paths.n_paths() == 0 {
        return Err(CouponError::Config(format!("{op}: empty path set")));
    }
    let big_t = pool.spec.maturity();
    if (paths.horizon() - big_t).abs() > 1e-9 * big_t {
        return Err(CouponError::Config(format!(
            "{op}: path horizon {} differs from maturity {big_t}",
            paths.horizon()
        )));
    }
    Ok(())
}

/// `n` uniforms in `(0, 1)` for the loans on path `i`.
pub fn loan_uniforms(seed: u64, path_index: usize, n: usize) -> Vec<f64> {
    let mut rng = substream(seed, DOMAIN_PREPAYMENT, path_index as u64);
    (0..n).map(|_| rng.sample(Open01)).collect()
}

/// Per-path pool averages of loan values for each prefix size in `sizes`,
/// together with the path's intensity-form value.
fn pool_samples(
    paths: &PathSet,
    pool: &LoanPoolConfig,
    seed: u64,
    sizes: &[usize],
) -> Vec<(Vec<f64>, f64)> {
    let pre = Precomputed::new(paths, pool);
    let grid = paths.time_grid();
    let n_max = sizes.iter().copied().max().unwrap_or(0);
    per_path(paths, |i| {
        let flows = path_flows(paths, pool, &pre, i);
        let u = loan_uniforms(seed, i, n_max);
        let mut out = Vec::with_capacity(sizes.len());
        let mut acc = 0.0;
        let mut done = 0;
        let mut order: Vec<usize> = (0..sizes.len()).collect();
        order.sort_by_key(|&k| sizes[k]);
        let mut by_size = vec![0.0; sizes.len()];
        for k in order {
            while done < sizes[k] {
                acc += loan_value(grid, &flows, pool, pre.coupon, u[done]);
                done += 1;
            }
            by_size[k] = acc / sizes[k] as f64;
        }
        out.extend(by_size);
        (out, flows.value_a)
    })
}

/// Direct cash-flow value of the pool: each path carries `n_loans` loans
/// with uniforms from `(seed, path)`; the per-path pool average is the sample.
pub fn price_loan_direct(paths: &PathSet, pool: &LoanPoolConfig, seed: u64) -> Result<FunctionalEstimate> {
    check("price_loan_direct", paths, pool)?;
    let samples: Vec<f64> = pool_samples(paths, pool, seed, &[pool.n_loans])
        .into_iter()
        .map(|(v, _)| v[0])
        .collect();
    Ok(FunctionalEstimate::from_samples(&samples))
}

/// The intensity-form value in both algebraic forms on shared paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityFormPrice {
    /// `1 + E[int p (m - r) e^{-int (r + gamma)}]`
    pub value: FunctionalEstimate,
    /// `E[int (c + p gamma) e^{-int (r + gamma)}]`
    pub cash_flow_form: FunctionalEstimate,
    /// Largest per-path difference between the two forms.
    pub max_path_discrepancy: f64,
}

pub fn price_pool_intensity_form(paths: &PathSet, pool: &LoanPoolConfig) -> Result<IntensityFormPrice> {
    check("price_pool_intensity_form", paths, pool)?;
    let pre = Precomputed::new(paths, pool);
    let pairs = per_path(paths, |i| {
        let f = path_flows(paths, pool, &pre, i);
        (f.value_a, f.value_b)
    });
    let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let max_path_discrepancy = pairs.iter().map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(IntensityFormPrice {
        value: FunctionalEstimate::from_samples(&a),
        cash_flow_form: FunctionalEstimate::from_samples(&b),
        max_path_discrepancy,
    })
}

/// Direct and intensity-form values on the same paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorComparison {
    pub direct: FunctionalEstimate,
    pub intensity_form: FunctionalEstimate,
    /// `sqrt(se_direct^2 + se_intensity^2)`
    pub combined_se: f64,
    /// Standard error of the per-path difference.
    pub paired_se: f64,
}

impl EstimatorComparison {
    pub fn difference(&self) -> f64 {
        self.direct.value - self.intensity_form.value
    }

    pub fn within(&self, k: f64) -> bool {
        self.difference().abs() <= k * self.combined_se
    }
}

pub fn compare_estimators(paths: &PathSet, pool: &LoanPoolConfig, seed: u64) -> Result<EstimatorComparison> {
    check("compare_estimators", paths, pool)?;
    let samples = pool_samples(paths, pool, seed, &[pool.n_loans]);
    let direct: Vec<f64> = samples.iter().map(|(v, _)| v[0]).collect();
    let intensity: Vec<f64> = samples.iter().map(|(_, a)| *a).collect();
    let diff: Vec<f64> = direct.iter().zip(&intensity).map(|(d, a)| d - a).collect();
    let direct = FunctionalEstimate::from_samples(&direct);
    let intensity_form = FunctionalEstimate::from_samples(&intensity);
    Ok(EstimatorComparison {
        direct,
        intensity_form,
        combined_se: direct.std_error.hypot(intensity_form.std_error),
        paired_se: mean_and_se(&diff).1,
    })
}

/// One pool size in the large-pool table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LlnRow {
    pub n_loans: usize,
    /// `|mean over paths of (pool average - intensity-form value)|`
    pub deviation: f64,
    pub combined_se: f64,
    pub paired_se: f64,
    /// Root mean square of the per-path deviation.
    pub rms_path_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnTable {
    pub rows: Vec<LlnRow>,
    /// Least-squares slope of `ln rms_path_deviation` against `ln n_loans`.
    pub slope: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Finite-pool averages against the intensity-form value for each pool size.
/// Pools are nested: the pool of size `n` holds the first `n` loans.
pub fn large_pool_convergence(
    paths: &PathSet,
    pool: &LoanPoolConfig,
    seed: u64,
    sizes: &[usize],
) -> Result<LlnTable> {
    check("large_pool_convergence", paths, pool)?;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(CouponError::Config(
            "large-pool table needs at least two positive pool sizes".into(),
        ));
    }
    let samples = pool_samples(paths, pool, seed, sizes);
    let intensity: Vec<f64> = samples.iter().map(|(_, a)| *a).collect();
    let se_intensity = mean_and_se(&intensity).1;
    let rows: Vec<LlnRow> = sizes
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let avg: Vec<f64> = samples.iter().map(|(v, _)| v[k]).collect();
            let diff: Vec<f64> = avg.iter().zip(&intensity).map(|(d, a)| d - a).collect();
            let (mean_diff, paired_se) = mean_and_se(&diff);
            let rms = (diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64).sqrt();
            LlnRow {
                n_loans: n,
                deviation: mean_diff.abs(),
                combined_se: mean_and_se(&avg).1.hypot(se_intensity),
                paired_se,
                rms_path_deviation: rms,
            }
        })
        .collect();
    let x: Vec<f64> = rows.iter().map(|r| r.n_loans as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.rms_path_deviation).collect();
    Ok(LlnTable {
        slope: log_log_slope(&x, &y),
        rows,
    })
}

/// Empirical survival against the model survival at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub t: f64,
    /// Fraction of loans with `tau > t`.
    pub empirical: f64,
    /// `E[e^{-int_0^t gamma}]`
    pub model: f64,
    /// Standard error of the per-path difference.
    pub std_error: f64,
}

impl SurvivalPoint {
    pub fn within(&self, k: f64) -> bool {
        (self.empirical - self.model).abs() <= k * self.std_error
    }
}

/// Survival consistency at each time in `times` (clamped to the grid).
pub fn survival_consistency(
    paths: &PathSet,
    pool: &LoanPoolConfig,
    seed: u64,
    times: &[f64],
) -> Result<Vec<SurvivalPoint>> {
    check("survival_consistency", paths, pool)?;
    let pre = Precomputed::new(paths, pool);
    let grid = paths.time_grid();
    let n = pool.n_loans;
    let per = per_path(paths, |i| {
        let flows = path_flows(paths, pool, &pre, i);
        let u = loan_uniforms(seed, i, n);
        let taus: Vec<Option<f64>> = u
            .iter()
            .map(|&u| locate(grid, &flows.cum_gamma, -u.ln()))
            .collect();
        times
            .iter()
            .map(|&t| {
                let t = t.clamp(0.0, paths.horizon());
                let alive = taus.iter().filter(|tau| tau.is_none_or(|s| s > t)).count();
                let g = crate::numerics::interp_flat(grid, &flows.cum_gamma, t);
                (alive as f64 / n as f64, (-g).exp())
            })
            .collect::<Vec<_>>()
    });
    Ok(times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let emp: Vec<f64> = per.iter().map(|v| v[k].0).collect();
            let model: Vec<f64> = per.iter().map(|v| v[k].1).collect();
            let diff: Vec<f64> = emp.iter().zip(&model).map(|(a, b)| a - b).collect();
            SurvivalPoint {
                t,
                empirical: mean_and_se(&emp).0,
                model: mean_and_se(&model).0,
                std_error: mean_and_se(&diff).1,
            }
        })
        .collect())
}
