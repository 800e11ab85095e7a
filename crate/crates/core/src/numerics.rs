//! Scalar numerical building blocks: bracketed bisection, golden-section
//! minimisation, adaptive Simpson quadrature, grid trapezoids and
//! exponentially fitted cell weights.

use crate::error::{CouponError, Result};

/// Bracket width at which bisection stops.
pub const BISECTION_TOL: f64 = 1e-10;

/// Default search interval for contract rates.
pub const RATE_BRACKET: (f64, f64) = (1e-8, 1.0);

/// Root of `f` on `[lo, hi]` by bisection.
///
/// `f(lo)` and `f(hi)` must have opposite signs (or one of them be zero).
/// Iterates until the bracket is narrower than `tol` and returns its midpoint.
pub fn bisect<F>(op: &'static str, mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a);
    let fb = f(b);
    if !(fa.is_finite() && fb.is_finite()) || fa * fb > 0.0 {
        return Err(CouponError::Bracket {
            op,
            lo,
            hi,
            f_lo: fa,
            f_hi: fb,
        });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    // 200 halvings exhausts any f64 interval.
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Minimiser of a unimodal `f` on `[a, b]` by golden-section search.
///
/// Returns `(argmin, min)`.
pub fn golden_section_min<F>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    // Return the best point seen in the final bracket.
    [(x, fx), (c, fc), (d, fd)]
        .into_iter()
        .fold((x, fx), |best, cand| if cand.1 < best.1 { cand } else { best })
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(&f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Trapezoidal integral of samples `values` on `grid`.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(grid.len(), values.len());
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Running trapezoidal integral; `out[0] = 0`.
pub fn cumulative_trapezoid(grid: &[f64], values: &[f64]) -> Vec<f64> {
    debug_assert_eq!(grid.len(), values.len());
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(acc);
    for (t, v) in grid.windows(2).zip(values.windows(2)) {
        acc += 0.5 * (t[1] - t[0]) * (v[0] + v[1]);
        out.push(acc);
    }
    out
}

/// `(int_0^1 e^{-d s} ds, int_0^1 s e^{-d s} ds)`.
///
/// With these, `int_0^h f(t) e^{-L(t)} dt` for linear `f` and `L` on a cell
/// of width `h` is `h e^{-L(0)} (f(0) w0 + (f(h) - f(0)) w1)`, `d = L(h) - L(0)`.
pub fn exp_cell_weights(d: f64) -> (f64, f64) {
    if d.abs() < 0.05 {
        // sum_k (-d)^k / (k+1)!  and  sum_k (-d)^k / (k! (k+2))
        let (mut w0, mut w1) = (0.0, 0.0);
        let mut term = 1.0;
        for k in 0..12 {
            let kf = k as f64;
            w0 += term / (kf + 1.0);
            w1 += term / (kf + 2.0);
            term *= -d / (kf + 1.0);
        }
        return (w0, w1);
    }
    let e = (-d).exp();
    let w0 = -(-d).exp_m1() / d;
    (w0, (w0 - e) / d)
}

/// Linear interpolation of `values` on a strictly increasing `grid`,
/// flat beyond either end.
pub fn interp_flat(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let n = grid.len();
    if x <= grid[0] {
        return values[0];
    }
    if x >= grid[n - 1] {
        return values[n - 1];
    }
    // First index with grid[i] > x; i is in 1..n.
    let i = grid.partition_point(|&g| g <= x);
    let (x0, x1) = (grid[i - 1], grid[i]);
    let w = (x - x0) / (x1 - x0);
    values[i - 1] + w * (values[i] - values[i - 1])
}

/// Mean and standard error of a sample, summed in index order.
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = samples.iter().map(|s| (s - mean) * (s - mean)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    (mean, sd / (n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_cell_weights_match_quadrature() {
        for d in [-0.7, -0.05, -1e-3, 0.0, 1e-9, 0.01, 0.049, 0.05, 0.3, 2.0] {
            let (w0, w1) = exp_cell_weights(d);
            let q0 = adaptive_simpson(|s| (-d * s).exp(), 0.0, 1.0, 1e-15);
            let q1 = adaptive_simpson(|s| s * (-d * s).exp(), 0.0, 1.0, 1e-15);
            assert!((w0 - q0).abs() < 1e-14, "d={d}: {w0} vs {q0}");
            assert!((w1 - q1).abs() < 1e-14, "d={d}: {w1} vs {q1}");
        }
    }

    #[test]
    fn bisect_finds_sqrt_two() {
        let r = bisect("t", |x| x * x - 2.0, 0.0, 2.0, 1e-12).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn bisect_reports_endpoint_residuals() {
        let err = bisect("t", |x| x * x + 1.0, -1.0, 2.0, 1e-12).unwrap_err();
        match err {
            CouponError::Bracket { f_lo, f_hi, .. } => {
                assert_eq!(f_lo, 2.0);
                assert_eq!(f_hi, 5.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn golden_section_parabola() {
        let (x, fx) = golden_section_min(|x| (x - 0.3).powi(2) + 1.0, 0.0, 1.0, 1e-10);
        // a quadratic minimum is flat to rounding within ~sqrt(eps) of the argmin
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 1.0).abs() < 1e-15);
        let (x, _) = golden_section_min(|x| (x - 0.3).abs(), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-9);
    }

    #[test]
    fn simpson_integrates_exponential() {
        let v = adaptive_simpson(|t| (-0.06 * t).exp(), 0.0, 30.0, 1e-13);
        let exact = (1.0 - (-1.8f64).exp()) / 0.06;
        assert!((v - exact).abs() < 1e-10);
    }

    #[test]
    fn trapezoid_exact_for_linear() {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.3).collect();
        let vals: Vec<f64> = grid.iter().map(|t| 2.0 * t + 1.0).collect();
        let exact = 3.0f64.powi(2) + 3.0;
        assert!((trapezoid(&grid, &vals) - exact).abs() < 1e-12);
        let cum = cumulative_trapezoid(&grid, &vals);
        assert_eq!(cum[0], 0.0);
        assert!((cum[10] - exact).abs() < 1e-12);
    }

    #[test]
    fn interp_is_flat_outside() {
        let g = [0.0, 1.0, 2.0];
        let v = [1.0, 3.0, 2.0];
        assert_eq!(interp_flat(&g, &v, -1.0), 1.0);
        assert_eq!(interp_flat(&g, &v, 5.0), 2.0);
        assert_eq!(interp_flat(&g, &v, 1.0), 3.0);
        assert!((interp_flat(&g, &v, 0.5) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn standard_error_of_constant_is_zero() {
        let (m, se) = mean_and_se(&[2.0; 5]);
        assert_eq!(m, 2.0);
        assert_eq!(se, 0.0);
    }
}
