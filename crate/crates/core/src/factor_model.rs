//! One-factor short-rate model driving prepayments and discounting.
//!
//! The factor `X` is the short rate itself. [`CirParams`] implements
//! [`FactorProcess`] with exact (noncentral chi-square) transitions, the
//! affine zero-coupon bond formula and its Gamma invariant law.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{CouponError, Result};
use crate::numerics::bisect;
use crate::streams::{substream, DOMAIN_RATES};

/// A one-dimensional factor process whose value is the short rate.
pub trait FactorProcess: Sync {
    /// Sampler for the transition over a fixed step.
    type Transition: TransitionSampler;

    fn transition(&self, dt: f64) -> Self::Transition;

    /// `E^x[exp(-int_0^t r_u du)]`.
    fn bond_price(&self, x: f64, t: f64) -> f64;
}

pub trait TransitionSampler: Sync {
    /// Draw `X_{t+dt}` given `X_t = x`.
    fn sample<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64;
}

/// Cox-Ingersoll-Ross short rate `dr = kappa (theta - r) dt + sigma sqrt(r) dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirParams {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub r0: f64,
}

impl CirParams {
    pub fn new(kappa: f64, theta: f64, sigma: f64, r0: f64) -> Result<Self> {
        let p = Self {
            kappa,
            theta,
            sigma,
            r0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa", self.kappa),
            ("theta", self.theta),
            ("sigma", self.sigma),
            ("r0", self.r0),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CouponError::Config(format!(
                    "CIR parameter {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Same dynamics started from `r0`.
    pub fn with_r0(&self, r0: f64) -> Self {
        Self { r0, ..*self }
    }

    /// `2 kappa theta >= sigma^2`: the rate never touches zero.
    pub fn feller_satisfied(&self) -> bool {
        2.0 * self.kappa * self.theta >= self.sigma * self.sigma
    }

    /// Shape of the Gamma invariant law.
    pub fn invariant_shape(&self) -> f64 {
        2.0 * self.kappa * self.theta / (self.sigma * self.sigma)
    }

    /// Scale of the Gamma invariant law.
    pub fn invariant_scale(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.kappa)
    }

    /// Conditional mean of `r_t` given `r_0 = x`.
    pub fn conditional_mean(&self, x: f64, t: f64) -> f64 {
        self.theta + (x - self.theta) * (-self.kappa * t).exp()
    }

    /// Conditional variance of `r_t` given `r_0 = x`.
    pub fn conditional_variance(&self, x: f64, t: f64) -> f64 {
        let e = (-self.kappa * t).exp();
        let s2 = self.sigma * self.sigma;
        x * s2 * e * (1.0 - e) / self.kappa + self.theta * s2 * (1.0 - e).powi(2) / (2.0 * self.kappa)
    }

    /// Density of the invariant distribution at `r`.
    pub fn invariant_pdf(&self, r: f64) -> Result<f64> {
        if !(r.is_finite() && r > 0.0) {
            return Err(CouponError::domain("invariant_pdf", format!("r = {r} must be > 0")));
        }
        let a = self.invariant_shape();
        let s = self.invariant_scale();
        Ok(((a - 1.0) * r.ln() - r / s - ln_gamma(a) - a * s.ln()).exp())
    }

    /// Distribution function of the invariant law.
    pub fn invariant_cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let a = self.invariant_shape();
        let y = r / self.invariant_scale();
        if a <= LARGE_SHAPE {
            return gamma_lr(a, y);
        }
        // Wilson-Hilferty; the incomplete-gamma series stalls once a + 1 == a
        let v = 1.0 / (9.0 * a);
        let z = ((y / a).cbrt() - (1.0 - v)) / v.sqrt();
        0.5 * erfc(-z / std::f64::consts::SQRT_2)
    }

    /// `q`-quantile of the invariant law.
    pub fn invariant_quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(CouponError::domain(
                "invariant_quantile",
                format!("q = {q} outside (0, 1)"),
            ));
        }
        let mut hi = self.theta.max(self.invariant_scale());
        while self.invariant_cdf(hi) < q {
            hi *= 2.0;
        }
        bisect(
            "invariant_quantile",
            |r| self.invariant_cdf(r) - q,
            0.0,
            hi,
            1e-15 * hi,
        )
    }

    /// `B(t)` in `P(t, x) = A(t) exp(-B(t) x)`.
    fn bond_b(&self, t: f64) -> f64 {
        let h = (self.kappa * self.kappa + 2.0 * self.sigma * self.sigma).sqrt();
        let em1 = (h * t).exp_m1();
        2.0 * em1 / (2.0 * h + (self.kappa + h) * em1)
    }

    /// `ln A(t)`, arranged to stay accurate as sigma goes to zero.
    fn bond_ln_a(&self, t: f64) -> f64 {
        let k = self.kappa;
        let s2 = self.sigma * self.sigma;
        let h = (k * k + 2.0 * s2).sqrt();
        // h - kappa without cancellation
        let h_minus_k = 2.0 * s2 / (h + k);
        let u = h_minus_k * -(-h * t).exp_m1() / (2.0 * h);
        let pref = 2.0 * k * self.theta / s2;
        -(pref * h_minus_k) * t / 2.0 - pref * (-u).ln_1p()
    }
}

impl FactorProcess for CirParams {
    type Transition = CirTransition;

    fn transition(&self, dt: f64) -> CirTransition {
        CirTransition::new(self, dt)
    }

    fn bond_price(&self, x: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        (self.bond_ln_a(t) - self.bond_b(t) * x).exp()
    }
}

/// Invariant shape above which the distribution function switches to the
/// Wilson-Hilferty normal approximation (error of order `1 / shape`).
const LARGE_SHAPE: f64 = 1e10;

/// Exact CIR transition over a fixed step: `r' = c * chi'^2(d, r e^{-kappa dt} / c)`.
#[derive(Debug, Clone)]
pub struct CirTransition {
    scale: f64,
    decay: f64,
    dof: f64,
    central: Option<ChiSquared<f64>>,
}

impl CirTransition {
    fn new(p: &CirParams, dt: f64) -> Self {
        let decay = (-p.kappa * dt).exp();
        let scale = p.sigma * p.sigma * -(-p.kappa * dt).exp_m1() / (4.0 * p.kappa);
        let dof = 4.0 * p.kappa * p.theta / (p.sigma * p.sigma);
        let central = (dof > 1.0).then(|| ChiSquared::new(dof - 1.0).expect("dof - 1 > 0"));
        Self {
            scale,
            decay,
            dof,
            central,
        }
    }
}

impl TransitionSampler for CirTransition {
    fn sample<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let lambda = x * self.decay / self.scale;
        let draw = match &self.central {
            Some(chi) => {
                let z: f64 = StandardNormal.sample(rng);
                let shifted = z + lambda.sqrt();
                shifted * shifted + chi.sample(rng)
            }
            None => {
                // Poisson mixture of central chi-squares.
                let n = if lambda > 0.0 {
                    Poisson::new(0.5 * lambda).expect("lambda > 0").sample(rng)
                } else {
                    0.0
                };
                let shape = 0.5 * self.dof + n;
                Gamma::new(shape, 2.0).expect("shape > 0").sample(rng)
            }
        };
        self.scale * draw
    }
}

/// Simulated short-rate paths on a shared time grid.
///
/// Rates are stored in single precision, path-major. Cumulative rate
/// integrals are rebuilt on demand by the trapezoidal rule.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    time_grid: Vec<f64>,
    n_paths: usize,
    rates: Vec<f32>,
    seed: u64,
}

impl PathSet {
    /// Paths from explicit rate arrays, e.g. frozen deterministic scenarios.
    pub fn from_rates(time_grid: Vec<f64>, paths: &[Vec<f64>]) -> Result<Self> {
        validate_grid(&time_grid)?;
        if paths.is_empty() {
            return Err(CouponError::Config("path set must not be empty".into()));
        }
        let n = time_grid.len();
        let mut rates = Vec::with_capacity(n * paths.len());
        for p in paths {
            if p.len() != n {
                return Err(CouponError::Config(format!(
                    "path length {} does not match grid length {n}",
                    p.len()
                )));
            }
            rates.extend(p.iter().map(|&r| r as f32));
        }
        Ok(Self {
            time_grid,
            n_paths: paths.len(),
            rates,
            seed: 0,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn time_grid(&self) -> &[f64] {
        &self.time_grid
    }

    pub fn horizon(&self) -> f64 {
        *self.time_grid.last().expect("grid is nonempty")
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Starting value of the factor (shared by all paths).
    pub fn initial_rate(&self) -> f64 {
        self.rates[0] as f64
    }

    /// Rates of path `i` on the grid.
    pub fn rates(&self, i: usize) -> &[f32] {
        let n = self.time_grid.len();
        &self.rates[i * n..(i + 1) * n]
    }

    /// Writes `int_0^{t_j} r_u du` for path `i` into `out`.
    pub fn fill_cum_rate_integral(&self, i: usize, out: &mut Vec<f64>) {
        let r = self.rates(i);
        out.clear();
        let mut acc = 0.0;
        out.push(acc);
        for j in 1..r.len() {
            let dt = self.time_grid[j] - self.time_grid[j - 1];
            acc += 0.5 * dt * (r[j - 1] as f64 + r[j] as f64);
            out.push(acc);
        }
    }

    /// `int_0^{t_j} r_u du` for path `i`.
    pub fn cum_rate_integral(&self, i: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.time_grid.len());
        self.fill_cum_rate_integral(i, &mut out);
        out
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid[0] != 0.0 {
        return Err(CouponError::Config(
            "time grid needs at least two points starting at 0".into(),
        ));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CouponError::Config("time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Uniform grid from 0 to `horizon` with `ceil(horizon * steps_per_year)` steps.
pub fn uniform_time_grid(horizon: f64, steps_per_year: usize) -> Result<Vec<f64>> {
    if !(horizon.is_finite() && horizon > 0.0) || steps_per_year == 0 {
        return Err(CouponError::Config(format!(
            "need horizon > 0 and steps_per_year >= 1, got {horizon} and {steps_per_year}"
        )));
    }
    let n_steps = ((horizon * steps_per_year as f64) - 1e-9).ceil().max(1.0) as usize;
    let dt = horizon / n_steps as f64;
    let mut grid: Vec<f64> = (0..=n_steps).map(|j| j as f64 * dt).collect();
    grid[n_steps] = horizon;
    Ok(grid)
}

/// Simulates `n_paths` paths of `process` started at `x0` on `time_grid`.
///
/// Path `i` draws only from substream `(seed, i)`, so the output is
/// identical for any rayon pool size.
pub fn simulate_process<P: FactorProcess>(
    process: &P,
    x0: f64,
    time_grid: Vec<f64>,
    n_paths: usize,
    seed: u64,
) -> Result<PathSet> {
    validate_grid(&time_grid)?;
    if n_paths == 0 {
        return Err(CouponError::Config("n_paths must be >= 1".into()));
    }
    let n = time_grid.len();
    // Uniform grids share one transition sampler.
    let steps: Vec<f64> = time_grid.windows(2).map(|w| w[1] - w[0]).collect();
    let uniform = steps.iter().all(|&d| (d - steps[0]).abs() <= 1e-12 * steps[0]);
    let transitions: Vec<P::Transition> = if uniform {
        vec![process.transition(steps[0])]
    } else {
        steps.iter().map(|&d| process.transition(d)).collect()
    };

    let mut rates = vec![0f32; n * n_paths];
    rates
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, out)| {
            let mut rng = substream(seed, DOMAIN_RATES, i as u64);
            let mut x = x0;
            out[0] = x as f32;
            for j in 1..n {
                let tr = if uniform { &transitions[0] } else { &transitions[j - 1] };
                x = tr.sample(x, &mut rng);
                out[j] = x as f32;
            }
        });
    Ok(PathSet {
        time_grid,
        n_paths,
        rates,
        seed,
    })
}

/// CIR paths from `params.r0` over `[0, horizon]`.
pub fn simulate_paths(
    params: &CirParams,
    horizon: f64,
    steps_per_year: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathSet> {
    params.validate()?;
    let grid = uniform_time_grid(horizon, steps_per_year)?;
    simulate_process(params, params.r0, grid, n_paths, seed)
}
