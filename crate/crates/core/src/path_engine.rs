//! Monte Carlo estimates of the discounted path functionals behind the
//! valuation operator, the baseline characterisation and the first-order
//! correction.
//!
//! All time integrals share the path grid. Inner integrals (`int r`,
//! `int gamma`) are running trapezoids, outer `dt` integrals are trapezoids
//! of the resulting integrands. Each path contributes one sample per
//! functional and samples are reduced in path order, so estimates do not
//! depend on the rayon pool size.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amortization::MortgageSpec;
use crate::curve::CouponCurve;
use crate::error::{CouponError, Result};
use crate::factor_model::PathSet;
use crate::intensity::IntensityModel;
use crate::numerics::mean_and_se;

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

impl FunctionalEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let (value, std_error) = mean_and_se(samples);
        Self {
            value,
            std_error,
            n_paths: samples.len(),
        }
    }
}

/// Size and seeding of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub steps_per_year: usize,
    pub seed: u64,
    /// Simulation horizon in years.
    pub horizon: f64,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.steps_per_year == 0 || !(self.horizon > 0.0) {
            return Err(CouponError::Config(format!(
                "Monte Carlo sizes must be >= 1 (paths {}, steps/year {}, horizon {})",
                self.n_paths, self.steps_per_year, self.horizon
            )));
        }
        Ok(())
    }
}

/// Numerator and denominator of a ratio estimated on common paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioIntegrals {
    pub numerator: FunctionalEstimate,
    pub denominator: FunctionalEstimate,
    /// Delta-method standard error of `numerator / denominator`.
    pub ratio_std_error: f64,
}

impl RatioIntegrals {
    fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        let nums: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let dens: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let numerator = FunctionalEstimate::from_samples(&nums);
        let denominator = FunctionalEstimate::from_samples(&dens);
        let ratio = numerator.value / denominator.value;
        let resid: Vec<f64> = pairs.iter().map(|(n, d)| n - ratio * d).collect();
        let (_, se) = mean_and_se(&resid);
        Self {
            numerator,
            denominator,
            ratio_std_error: se / denominator.value.abs(),
        }
    }

    pub fn ratio(&self) -> f64 {
        self.numerator.value / self.denominator.value
    }

    /// Whether the denominator is within `k` standard errors of zero.
    pub fn denominator_indistinct_from_zero(&self, k: f64) -> bool {
        !(self.denominator.value.abs() > k * self.denominator.std_error)
            || !self.denominator.value.is_finite()
    }
}

fn check_paths(op: &'static str, paths: &PathSet, spec: &MortgageSpec) -> Result<()> {
    if paths.n_paths() == 0 {
        return Err(CouponError::Config(format!("{op}: empty path set")));
    }
    if (paths.horizon() - spec.maturity()).abs() > 1e-9 * spec.maturity() {
        return Err(CouponError::Config(format!(
            "{op}: path horizon {} differs from maturity {}",
            paths.horizon(),
            spec.maturity()
        )));
    }
    Ok(())
}

/// Runs `f` on every path index in parallel, preserving index order.
pub(crate) fn per_path<T, F>(paths: &PathSet, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..paths.n_paths()).into_par_iter().map(f).collect()
}

/// Valuation-operator integrals for a loan at `m_contract`:
///
/// * numerator `E[int_0^T p(t,m) r_t exp(-int_0^t (r + gamma)) dt]`
/// * denominator `E[int_0^T p(t,m) exp(-int_0^t (r + gamma)) dt]`
///
/// with `gamma_u = gamma(X_u, m_contract, z_curve(X_u))`.
pub fn valuation_integrals(
    paths: &PathSet,
    spec: &MortgageSpec,
    model: &IntensityModel,
    m_contract: f64,
    z_curve: &CouponCurve,
) -> Result<RatioIntegrals> {
    check_paths("valuation_integrals", paths, spec)?;
    if !(m_contract >= 0.0) {
        return Err(CouponError::domain(
            "valuation_integrals",
            format!("contract rate {m_contract} must be >= 0"),
        ));
    }
    let grid = paths.time_grid();
    let balance: Vec<f64> = grid
        .iter()
        .map(|&t| spec.balance_unchecked(t, m_contract))
        .collect();
    let pairs = per_path(paths, |i| {
        let r = paths.rates(i);
        let mut r_prev = r[0] as f64;
        let mut g_prev = model.eval_unchecked(r_prev, m_contract, z_curve.eval(r_prev));
        let mut exponent = 0.0;
        let mut num_prev = balance[0] * r_prev;
        let mut den_prev = balance[0];
        let (mut num, mut den) = (0.0, 0.0);
        for j in 1..r.len() {
            let dt = grid[j] - grid[j - 1];
            let rj = r[j] as f64;
            let gj = model.eval_unchecked(rj, m_contract, z_curve.eval(rj));
            exponent += 0.5 * dt * (r_prev + g_prev + rj + gj);
            let disc = (-exponent).exp();
            let den_j = balance[j] * disc;
            let num_j = den_j * rj;
            num += 0.5 * dt * (num_prev + num_j);
            den += 0.5 * dt * (den_prev + den_j);
            r_prev = rj;
            g_prev = gj;
            num_prev = num_j;
            den_prev = den_j;
        }
        (num, den)
    });
    Ok(RatioIntegrals::from_pairs(&pairs))
}

/// First-order correction integrals around the baseline coupon `m0_at_x`:
///
/// * numerator `E[int (m0 - r_t) p(t,m0) (int_0^t eps gamma_1(X_u, m0, m0(X_u)) du) e^{-int (r + gamma_0)} dt]`
/// * denominator `E[int ((m0 - r_t) p_m(t,m0) + p(t,m0)) e^{-int (r + gamma_0)} dt]`
///
/// The perturbation enters scaled by the model's `epsilon`.
pub fn m1_integrals(
    paths: &PathSet,
    spec: &MortgageSpec,
    model: &IntensityModel,
    m0_at_x: f64,
    m0_curve: &CouponCurve,
) -> Result<RatioIntegrals> {
    check_paths("m1_integrals", paths, spec)?;
    if !(m0_at_x >= 0.0) {
        return Err(CouponError::domain(
            "m1_integrals",
            format!("baseline coupon {m0_at_x} must be >= 0"),
        ));
    }
    let grid = paths.time_grid();
    let balance: Vec<f64> = grid.iter().map(|&t| spec.balance_unchecked(t, m0_at_x)).collect();
    let balance_dm: Vec<f64> = grid
        .iter()
        .map(|&t| spec.balance_dm_unchecked(t, m0_at_x))
        .collect();
    let perturbed = !model.perturbation.is_zero();
    let pairs = per_path(paths, |i| {
        let r = paths.rates(i);
        let mut r_prev = r[0] as f64;
        let g1 = |x: f64| {
            if perturbed {
                model.scaled_perturbation(x, m0_at_x, m0_curve.eval(x))
            } else {
                0.0
            }
        };
        let mut g0_prev = model.baseline_value(r_prev);
        let mut g1_prev = g1(r_prev);
        let mut exponent = 0.0;
        let mut inner = 0.0;
        // at t = 0 the inner integral vanishes
        let mut num_prev = 0.0;
        let mut den_prev = (m0_at_x - r_prev) * balance_dm[0] + balance[0];
        let (mut num, mut den) = (0.0, 0.0);
        for j in 1..r.len() {
            let dt = grid[j] - grid[j - 1];
            let rj = r[j] as f64;
            let g0j = model.baseline_value(rj);
            let g1j = g1(rj);
            exponent += 0.5 * dt * (r_prev + g0_prev + rj + g0j);
            inner += 0.5 * dt * (g1_prev + g1j);
            let disc = (-exponent).exp();
            let spread = m0_at_x - rj;
            let num_j = spread * balance[j] * inner * disc;
            let den_j = (spread * balance_dm[j] + balance[j]) * disc;
            num += 0.5 * dt * (num_prev + num_j);
            den += 0.5 * dt * (den_prev + den_j);
            r_prev = rj;
            g0_prev = g0j;
            g1_prev = g1j;
            num_prev = num_j;
            den_prev = den_j;
        }
        (num, den)
    });
    Ok(RatioIntegrals::from_pairs(&pairs))
}

/// Pointwise baseline quantities on the path grid:
/// `f(t) = E[e^{-int_0^t (r + gamma_0)}]`, `F(t) = int_0^t f` and
/// `H(t) = 1 - E[int_0^t gamma_0(X_u) e^{-int_0^u (r + gamma_0)} du]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineIntegrals {
    pub time_grid: Vec<f64>,
    pub f: Vec<f64>,
    pub f_se: Vec<f64>,
    pub big_f: Vec<f64>,
    pub h: Vec<f64>,
    pub h_se: Vec<f64>,
}

/// Paths per block when accumulating pointwise sums.
const BLOCK: usize = 512;

/// Per-path discount `e^{-int (r + gamma_0)}` and prepaid mass
/// `int gamma_0 e^{-int (r + gamma_0)}` on the grid.
fn baseline_path(
    paths: &PathSet,
    model: &IntensityModel,
    i: usize,
    disc: &mut [f64],
    prepaid: &mut [f64],
) {
    let grid = paths.time_grid();
    let r = paths.rates(i);
    let mut r_prev = r[0] as f64;
    let mut g_prev = model.baseline_value(r_prev);
    let mut exponent = 0.0;
    let mut mass = 0.0;
    disc[0] = 1.0;
    prepaid[0] = 0.0;
    for j in 1..r.len() {
        let dt = grid[j] - grid[j - 1];
        let rj = r[j] as f64;
        let gj = model.baseline_value(rj);
        exponent += 0.5 * dt * (r_prev + g_prev + rj + gj);
        disc[j] = (-exponent).exp();
        mass += 0.5 * dt * (g_prev * disc[j - 1] + gj * disc[j]);
        prepaid[j] = mass;
        r_prev = rj;
        g_prev = gj;
    }
}

/// Estimates `f`, `F` and `H` from paths using only the baseline intensity.
pub fn baseline_integrals(paths: &PathSet, model: &IntensityModel) -> Result<BaselineIntegrals> {
    if paths.n_paths() == 0 {
        return Err(CouponError::Config("baseline_integrals: empty path set".into()));
    }
    let grid = paths.time_grid().to_vec();
    let n = grid.len();
    let n_blocks = paths.n_paths().div_ceil(BLOCK);
    // Fixed blocks, summed in block order.
    let blocks: Vec<[Vec<f64>; 4]> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut sums = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
            let mut disc = vec![0.0; n];
            let mut prepaid = vec![0.0; n];
            for i in b * BLOCK..((b + 1) * BLOCK).min(paths.n_paths()) {
                baseline_path(paths, model, i, &mut disc, &mut prepaid);
                for j in 0..n {
                    sums[0][j] += disc[j];
                    sums[1][j] += disc[j] * disc[j];
                    sums[2][j] += prepaid[j];
                    sums[3][j] += prepaid[j] * prepaid[j];
                }
            }
            sums
        })
        .collect();
    let mut tot = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for block in &blocks {
        for (acc, part) in tot.iter_mut().zip(block) {
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        }
    }
    let np = paths.n_paths() as f64;
    let moments = |s: &[f64], s2: &[f64]| -> (Vec<f64>, Vec<f64>) {
        s.iter()
            .zip(s2)
            .map(|(&a, &b)| {
                let mean = a / np;
                let var = if np > 1.0 {
                    ((b - np * mean * mean) / (np - 1.0)).max(0.0)
                } else {
                    0.0
                };
                (mean, (var / np).sqrt())
            })
            .unzip()
    };
    let (f, f_se) = moments(&tot[0], &tot[1]);
    let (mass, h_se) = moments(&tot[2], &tot[3]);
    let h: Vec<f64> = mass.iter().map(|m| 1.0 - m).collect();
    let big_f = crate::numerics::cumulative_trapezoid(&grid, &f);
    Ok(BaselineIntegrals {
        time_grid: grid,
        f,
        f_se,
        big_f,
        h,
        h_se,
    })
}

/// Per-path samples of the baseline residual
/// `int_0^T e^{-int (r + gamma_0)} dt - int_0^T e^{-m (T - t)} (1 - int_0^t gamma_0 e^{-int (r + gamma_0)}) dt`,
/// whose mean is `F(T) - int_0^T e^{-m (T-t)} H(t) dt`.
pub fn baseline_residual_samples(paths: &PathSet, model: &IntensityModel, m: f64) -> Vec<f64> {
    let grid = paths.time_grid();
    let n = grid.len();
    let big_t = paths.horizon();
    let weights: Vec<f64> = grid.iter().map(|&t| (-m * (big_t - t)).exp()).collect();
    per_path(paths, |i| {
        let mut disc = vec![0.0; n];
        let mut prepaid = vec![0.0; n];
        baseline_path(paths, model, i, &mut disc, &mut prepaid);
        let mut acc = 0.0;
        for j in 1..n {
            let dt = grid[j] - grid[j - 1];
            let a = disc[j - 1] - weights[j - 1] * (1.0 - prepaid[j - 1]);
            let b = disc[j] - weights[j] * (1.0 - prepaid[j]);
            acc += 0.5 * dt * (a + b);
        }
        acc
    })
}
