//! Endogenous current-coupon functions for fixed-rate mortgage pools.
//!
//! A contract rate `m(x)` is the current coupon at factor state `x` when a
//! mortgage written at that rate is worth par, given prepayments arriving
//! with an intensity that depends on the factor, the contract rate and the
//! refinancing rate `m(X_t)`. This crate provides:
//!
//! * closed-form amortization math ([`amortization`]),
//! * a CIR short-rate factor with exact path simulation ([`factor_model`]),
//! * prepayment intensities split into baseline and perturbation
//!   ([`intensity`]),
//! * Monte Carlo path functionals ([`path_engine`]),
//! * baseline solvers, the first-order perturbation correction and a naive
//!   contraction oracle ([`coupon_solvers`]),
//! * a doubly stochastic loan-pool simulator for par checks
//!   ([`pool_simulator`]).

pub mod amortization;
pub mod coupon_solvers;
pub mod curve;
pub mod error;
pub mod factor_model;
pub mod intensity;
pub mod numerics;
pub mod path_engine;
pub mod pool_simulator;
pub mod streams;

pub use amortization::{xi, MortgageSpec};
pub use curve::CouponCurve;
pub use error::{CouponError, Result};
pub use factor_model::{simulate_paths, CirParams, FactorProcess, PathSet};
pub use intensity::{Baseline, IntensityModel, Perturbation, RefiIncentiveIntensity};
pub use path_engine::{FunctionalEstimate, McConfig};
