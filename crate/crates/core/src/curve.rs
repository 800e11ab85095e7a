use serde::{Deserialize, Serialize};

use crate::error::{CouponError, Result};
use crate::numerics::interp_flat;

/// A current-coupon function sampled on a grid of factor values.
///
/// Evaluation interpolates linearly between nodes and is flat beyond the
/// end nodes. Values at nodes are returned exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawCurve")]
pub struct CouponCurve {
    rate_grid: Vec<f64>,
    values: Vec<f64>,
    /// `1 / spacing` when the grid is evenly spaced.
    #[serde(skip)]
    inv_step: Option<f64>,
}

#[derive(Deserialize)]
struct RawCurve {
    rate_grid: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawCurve> for CouponCurve {
    type Error = CouponError;

    fn try_from(raw: RawCurve) -> Result<Self> {
        Self::new(raw.rate_grid, raw.values)
    }
}

impl PartialEq for CouponCurve {
    fn eq(&self, other: &Self) -> bool {
        self.rate_grid == other.rate_grid && self.values == other.values
    }
}

impl CouponCurve {
    pub fn new(rate_grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if rate_grid.is_empty() || rate_grid.len() != values.len() {
            return Err(CouponError::Config(format!(
                "curve needs matching nonempty grid and values ({} vs {})",
                rate_grid.len(),
                values.len()
            )));
        }
        if rate_grid.windows(2).any(|w| !(w[1] > w[0])) || rate_grid.iter().any(|x| !x.is_finite()) {
            return Err(CouponError::Config("curve grid must be strictly increasing".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(CouponError::Config(format!(
                "curve values must be finite and nonnegative, got {v}"
            )));
        }
        let inv_step = even_spacing(&rate_grid).map(|h| 1.0 / h);
        Ok(Self {
            rate_grid,
            values,
            inv_step,
        })
    }

    /// `f(x)` sampled at each grid point.
    pub fn from_fn(rate_grid: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = rate_grid.iter().map(|&x| f(x)).collect();
        Self::new(rate_grid, values)
    }

    pub fn constant(rate_grid: Vec<f64>, value: f64) -> Result<Self> {
        Self::from_fn(rate_grid, |_| value)
    }

    pub fn grid(&self) -> &[f64] {
        &self.rate_grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let g = &self.rate_grid;
        let n = g.len();
        match self.inv_step {
            Some(inv) if x > g[0] && x < g[n - 1] => {
                // cell guess from the spacing, then exact correction so the
                // result matches the bracketing search bit for bit
                let mut j = (((x - g[0]) * inv) as usize).min(n - 2);
                while j > 0 && g[j] > x {
                    j -= 1;
                }
                while j + 2 < n && g[j + 1] <= x {
                    j += 1;
                }
                let w = (x - g[j]) / (g[j + 1] - g[j]);
                self.values[j] + w * (self.values[j + 1] - self.values[j])
            }
            _ => interp_flat(g, &self.values, x),
        }
    }

    /// Largest absolute difference at the grid nodes.
    pub fn sup_distance(&self, other: &CouponCurve) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn even_spacing(grid: &[f64]) -> Option<f64> {
    if grid.len() < 3 {
        return None;
    }
    let h = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    grid.windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h)
        .then_some(h)
}
