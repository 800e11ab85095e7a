//! Level-payment amortization of a continuously paying fixed-rate mortgage.
//!
//! The balance `p(t, m)` solves `p_t = m p - c(m)` with `p(0) = 1` and
//! `p(T) = 0`. Every function here is pure.

use serde::{Deserialize, Serialize};

use crate::error::{CouponError, Result};
use crate::numerics::golden_section_min;

/// Below this value of `m * T` the `m = 0` limits are used.
pub const SMALL_RATE_THRESHOLD: f64 = 1e-8;

/// A fully amortizing mortgage with unit origination balance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MortgageSpec {
    maturity_years: f64,
}

impl MortgageSpec {
    pub fn new(maturity_years: f64) -> Result<Self> {
        if !(maturity_years.is_finite() && maturity_years > 0.0) {
            return Err(CouponError::Config(format!(
                "maturity must be positive, got {maturity_years}"
            )));
        }
        Ok(Self { maturity_years })
    }

    /// Contract maturity `T` in years.
    pub fn maturity(&self) -> f64 {
        self.maturity_years
    }

    /// Balances are normalised so that the loan starts at one.
    pub fn origination_balance(&self) -> f64 {
        1.0
    }

    fn check(&self, op: &'static str, t: f64, m: f64) -> Result<()> {
        if !(0.0..=self.maturity_years).contains(&t) {
            return Err(CouponError::domain(
                op,
                format!("t = {t} outside [0, {}]", self.maturity_years),
            ));
        }
        check_rate(op, m)
    }

    /// Scheduled outstanding principal at time `t` for contract rate `m`.
    pub fn balance(&self, t: f64, m: f64) -> Result<f64> {
        self.check("balance", t, m)?;
        Ok(self.balance_unchecked(t, m))
    }

    /// [`balance`](Self::balance) without domain checks, for inner loops.
    #[inline]
    pub fn balance_unchecked(&self, t: f64, m: f64) -> f64 {
        let big_t = self.maturity_years;
        if t <= 0.0 {
            return 1.0;
        }
        if t >= big_t {
            return 0.0;
        }
        if m * big_t < SMALL_RATE_THRESHOLD {
            return 1.0 - t / big_t;
        }
        (-m * (big_t - t)).exp_m1() / (-m * big_t).exp_m1()
    }

    /// Continuous payment rate `c(m)` of the level-pay stream.
    pub fn coupon_rate(&self, m: f64) -> Result<f64> {
        check_rate("coupon_rate", m)?;
        Ok(self.coupon_rate_unchecked(m))
    }

    #[inline]
    pub fn coupon_rate_unchecked(&self, m: f64) -> f64 {
        let big_t = self.maturity_years;
        if m * big_t < SMALL_RATE_THRESHOLD {
            return 1.0 / big_t;
        }
        -m / (-m * big_t).exp_m1()
    }

    /// Sensitivity `dp/dm` of the scheduled balance to the contract rate.
    pub fn balance_dm(&self, t: f64, m: f64) -> Result<f64> {
        self.check("balance_dm", t, m)?;
        Ok(self.balance_dm_unchecked(t, m))
    }

    #[inline]
    pub fn balance_dm_unchecked(&self, t: f64, m: f64) -> f64 {
        let big_t = self.maturity_years;
        if t <= 0.0 || t >= big_t {
            return 0.0;
        }
        if m * big_t < SMALL_RATE_THRESHOLD {
            return t * (big_t - t) / (2.0 * big_t);
        }
        // d/dm log p = s / (e^{ms} - 1) - T / (e^{mT} - 1), with s = T - t.
        let s = big_t - t;
        let p = self.balance_unchecked(t, m);
        p * (s / (m * s).exp_m1() - big_t / (m * big_t).exp_m1())
    }
}

fn check_rate(op: &'static str, m: f64) -> Result<()> {
    if !(m.is_finite() && m >= 0.0) {
        return Err(CouponError::domain(op, format!("rate m = {m} must be >= 0")));
    }
    Ok(())
}

/// Golden-section tolerance on the weight in [`xi`].
const XI_TOL: f64 = 1e-10;

/// The objective minimised in [`xi`]: `b e^{-b x} / ((1 - b)(1 - e^{-b x}))`.
pub fn xi_objective(beta: f64, x: f64) -> f64 {
    beta * (-beta * x).exp() / ((1.0 - beta) * -(-beta * x).exp_m1())
}

/// Upper bound on the contract-rate sensitivity of an admissible intensity:
/// the infimum of [`xi_objective`] over weights in `(0, 1)`.
///
/// Equals `1/x` exactly for `x <= 2`.
pub fn xi(x: f64) -> Result<f64> {
    if !(x.is_finite() && x > 0.0) {
        return Err(CouponError::domain("xi", format!("x = {x} must be > 0")));
    }
    if x <= 2.0 {
        return Ok(1.0 / x);
    }
    let (_, v) = golden_section_min(|b| xi_objective(b, x), 0.0, 1.0, XI_TOL);
    // The objective tends to 1/x at the lower end of the interval.
    Ok(v.min(1.0 / x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> MortgageSpec {
        MortgageSpec::new(30.0).unwrap()
    }

    #[test]
    fn endpoints() {
        let s = spec();
        assert_eq!(s.balance(0.0, 0.06).unwrap(), 1.0);
        assert_eq!(s.balance(30.0, 0.06).unwrap(), 0.0);
        assert_eq!(s.balance(15.0, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn coupon_values() {
        let s = spec();
        assert!((s.coupon_rate(0.0).unwrap() - 1.0 / 30.0).abs() < 1e-15);
        let expected = 0.06 / (1.0 - (-1.8f64).exp());
        assert!((s.coupon_rate(0.06).unwrap() - expected).abs() < 1e-15);
        // continuity across the small-rate switch
        let tiny = s.coupon_rate(1e-12).unwrap();
        let above = s.coupon_rate(1e-9).unwrap();
        assert!((tiny - 1.0 / 30.0).abs() < 1e-9);
        assert!((above - 1.0 / 30.0).abs() < 1e-9);
    }

    #[test]
    fn balance_dm_matches_central_difference() {
        let s = spec();
        let h = 1e-6;
        let fd = (s.balance(10.0, 0.05 + h).unwrap() - s.balance(10.0, 0.05 - h).unwrap())
            / (2.0 * h);
        assert!((s.balance_dm(10.0, 0.05).unwrap() - fd).abs() < 1e-6);
        assert_eq!(s.balance_dm(0.0, 0.05).unwrap(), 0.0);
        assert_eq!(s.balance_dm(30.0, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn balance_dm_limit_at_zero() {
        let s = spec();
        let h = 1e-5;
        // one-sided difference from the m = 0 branch
        let fd = (s.balance(10.0, h).unwrap() - s.balance(10.0, 0.0).unwrap()) / h;
        assert!((s.balance_dm(10.0, 0.0).unwrap() - fd).abs() < 1e-3);
        let above = s.balance_dm(10.0, 2e-9).unwrap();
        assert!((above - s.balance_dm(10.0, 0.0).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn domain_errors() {
        let s = spec();
        assert!(s.balance(-0.1, 0.05).is_err());
        assert!(s.balance(30.1, 0.05).is_err());
        assert!(s.balance(1.0, -0.01).is_err());
        assert!(s.coupon_rate(-1.0).is_err());
        assert!(s.balance_dm(31.0, 0.05).is_err());
        assert!(xi(0.0).is_err());
        assert!(xi(-1.0).is_err());
        assert!(MortgageSpec::new(0.0).is_err());
    }

    #[test]
    fn xi_closed_form_region() {
        assert_eq!(xi(2.0).unwrap(), 0.5);
        assert_eq!(xi(1.0).unwrap(), 1.0);
    }
}
