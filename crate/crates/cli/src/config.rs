//! Experiment configuration: a TOML document with nested sections, every
//! field optional, plus command-line overrides applied on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use current_coupon::intensity::{Baseline, Decomposition, Perturbation};
use current_coupon::{CirParams, CouponError, IntensityModel, McConfig, MortgageSpec};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CirSection {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    /// Only used by subcommands that need a single starting rate.
    pub r0: f64,
}

impl Default for CirSection {
    fn default() -> Self {
        Self {
            kappa: 0.25,
            theta: 0.06,
            sigma: 0.1,
            r0: 0.06,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MortgageSection {
    pub maturity_years: f64,
}

impl Default for MortgageSection {
    fn default() -> Self {
        Self { maturity_years: 30.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntensityKind {
    /// `gamma_base + k (m - z)^+`
    RefiIncentive,
    /// `gamma_base + rate_slope * x + k (m - z)^+`
    RateLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntensitySection {
    pub model: IntensityKind,
    pub gamma_base: f64,
    pub k: f64,
    pub rate_slope: f64,
    pub epsilon: f64,
}

impl Default for IntensitySection {
    fn default() -> Self {
        Self {
            model: IntensityKind::RefiIncentive,
            gamma_base: 0.045,
            k: 5.0,
            rate_slope: 0.0,
            epsilon: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DecompositionArg {
    Zero,
    Const,
}

impl From<DecompositionArg> for Decomposition {
    fn from(d: DecompositionArg) -> Self {
        match d {
            DecompositionArg::Zero => Decomposition::ZeroBaseline,
            DecompositionArg::Const => Decomposition::ConstantBaseline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub n_paths: usize,
    pub steps_per_year: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every available core. Does not affect results.
    pub workers: usize,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            n_paths: 50_000,
            steps_per_year: 12,
            seed: 20_240_601,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridUnits {
    /// `lo` and `hi` are levels of the invariant distribution.
    Quantile,
    /// `lo` and `hi` are short rates.
    Rate,
}

/// `n` equally spaced rates between `lo` and `hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub units: GridUnits,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            lo: 0.005,
            hi: 0.995,
            n: 31,
            units: GridUnits::Quantile,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractionSection {
    pub tol_bps: f64,
    pub max_iter: usize,
}

impl Default for ContractionSection {
    fn default() -> Self {
        Self {
            tol_bps: 0.1,
            max_iter: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Paths for the estimator-equivalence and survival checks.
    pub n_paths: usize,
    /// Loans per path in the direct cash-flow estimator.
    pub n_loans: usize,
    /// Paths for the large-pool table, which carries up to 1000 loans per path.
    pub lln_paths: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            n_paths: 200_000,
            n_loans: 10,
            lln_paths: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cir: CirSection,
    pub mortgage: MortgageSection,
    pub intensity: IntensitySection,
    pub decomposition: DecompositionArg,
    pub mc: McSection,
    pub grid: GridSection,
    pub contraction: ContractionSection,
    pub verify: VerifySection,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            cir: CirSection::default(),
            mortgage: MortgageSection::default(),
            intensity: IntensitySection::default(),
            decomposition: DecompositionArg::Zero,
            mc: McSection::default(),
            grid: GridSection::default(),
            contraction: ContractionSection::default(),
            verify: VerifySection::default(),
            out: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub steps_per_year: Option<usize>,
    pub grid_lo: Option<f64>,
    pub grid_hi: Option<f64>,
    pub grid_n: Option<usize>,
    pub decomposition: Option<DecompositionArg>,
    pub tol_bps: Option<f64>,
    pub max_iter: Option<usize>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.mc.seed = v;
        }
        if let Some(v) = o.paths {
            self.mc.n_paths = v;
        }
        if let Some(v) = o.steps_per_year {
            self.mc.steps_per_year = v;
        }
        if let Some(v) = o.grid_lo {
            self.grid.lo = v;
        }
        if let Some(v) = o.grid_hi {
            self.grid.hi = v;
        }
        if let Some(v) = o.grid_n {
            self.grid.n = v;
        }
        if let Some(v) = o.decomposition {
            self.decomposition = v;
        }
        if let Some(v) = o.tol_bps {
            self.contraction.tol_bps = v;
        }
        if let Some(v) = o.max_iter {
            self.contraction.max_iter = v;
        }
        if let Some(v) = o.workers {
            self.mc.workers = v;
        }
        if let Some(v) = &o.out {
            self.out = Some(v.clone());
        }
    }

    pub fn cir_params(&self) -> Result<CirParams, CliError> {
        let c = &self.cir;
        Ok(CirParams::new(c.kappa, c.theta, c.sigma, c.r0)?)
    }

    pub fn mortgage_spec(&self) -> Result<MortgageSpec, CliError> {
        Ok(MortgageSpec::new(self.mortgage.maturity_years)?)
    }

    pub fn mc_config(&self) -> Result<McConfig, CliError> {
        let mc = McConfig {
            n_paths: self.mc.n_paths,
            steps_per_year: self.mc.steps_per_year,
            seed: self.mc.seed,
            horizon: self.mortgage.maturity_years,
        };
        mc.validate()?;
        Ok(mc)
    }

    pub fn contraction_tol(&self) -> f64 {
        self.contraction.tol_bps * 1e-4
    }

    /// The configured intensity under `decomposition`.
    pub fn model_for(&self, decomposition: Decomposition) -> Result<IntensityModel, CliError> {
        let i = &self.intensity;
        if !(i.gamma_base >= 0.0 && i.k >= 0.0 && i.rate_slope >= 0.0) || !i.epsilon.is_finite() {
            return Err(CliError::Config(format!(
                "intensity needs gamma_base, k, rate_slope >= 0 and finite epsilon, got {i:?}"
            )));
        }
        if i.model == IntensityKind::RefiIncentive && i.rate_slope != 0.0 {
            return Err(CliError::Config(
                "rate_slope applies only to the rate-linear intensity".into(),
            ));
        }
        let (baseline, perturbation) = match decomposition {
            Decomposition::ZeroBaseline => (
                Baseline::Zero,
                Perturbation::RefiIncentive {
                    level: i.gamma_base,
                    rate_slope: i.rate_slope,
                    k: i.k,
                },
            ),
            Decomposition::ConstantBaseline => {
                let baseline = match i.model {
                    IntensityKind::RefiIncentive => Baseline::Constant(i.gamma_base),
                    IntensityKind::RateLinear => Baseline::RateLinear {
                        level: i.gamma_base,
                        slope: i.rate_slope,
                    },
                };
                if baseline.as_constant().is_none() {
                    return Err(CliError::Config(format!(
                        "decomposition 'const' needs a constant baseline, but {baseline:?} varies with the factor"
                    )));
                }
                (
                    baseline,
                    Perturbation::RefiIncentive {
                        level: 0.0,
                        rate_slope: 0.0,
                        k: i.k,
                    },
                )
            }
        };
        Ok(IntensityModel::new(baseline, perturbation, i.epsilon)?)
    }

    pub fn model(&self) -> Result<IntensityModel, CliError> {
        self.model_for(self.decomposition.into())
    }

    /// The factor-only part `gamma_base + rate_slope * x` as a baseline.
    pub fn factor_baseline_model(&self) -> Result<IntensityModel, CliError> {
        let i = &self.intensity;
        Ok(IntensityModel::new(
            Baseline::RateLinear {
                level: i.gamma_base,
                slope: i.rate_slope,
            },
            Perturbation::Zero,
            1.0,
        )?)
    }

    /// Reporting grid in rate units.
    pub fn rate_grid(&self) -> Result<Vec<f64>, CliError> {
        let g = &self.grid;
        if g.n == 0 {
            return Ok(Vec::new());
        }
        let params = self.cir_params()?;
        let (lo, hi) = match g.units {
            GridUnits::Quantile => {
                if !(g.lo > 0.0 && g.lo <= g.hi && g.hi < 1.0) {
                    return Err(CliError::Config(format!(
                        "quantile grid needs 0 < lo <= hi < 1, got [{}, {}]",
                        g.lo, g.hi
                    )));
                }
                (params.invariant_quantile(g.lo)?, params.invariant_quantile(g.hi)?)
            }
            GridUnits::Rate => (g.lo, g.hi),
        };
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) || (g.n > 1 && lo == hi) {
            return Err(CliError::Config(format!(
                "rate grid needs 0 < lo < hi, got [{lo}, {hi}]"
            )));
        }
        if g.n == 1 {
            return Ok(vec![lo]);
        }
        Ok((0..g.n)
            .map(|i| lo + (hi - lo) * i as f64 / (g.n - 1) as f64)
            .collect())
    }

    /// Checks every nested invariant before any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        self.cir_params()?;
        self.mortgage_spec()?;
        self.mc_config()?;
        self.model()?;
        self.rate_grid()?;
        if !(self.contraction.tol_bps > 0.0) || self.contraction.max_iter == 0 {
            return Err(CliError::Config(
                "contraction needs tol_bps > 0 and max_iter >= 1".into(),
            ));
        }
        let v = &self.verify;
        if v.n_paths == 0 || v.n_loans == 0 || v.lln_paths == 0 {
            return Err(CliError::Config("verify sizes must be positive".into()));
        }
        Ok(())
    }

    /// The configuration as TOML without runtime-only settings (worker
    /// count and output path), which do not affect results.
    pub fn echo(&self) -> String {
        let mut c = self.clone();
        c.mc.workers = 0;
        c.out = None;
        let mut text = toml::to_string(&c).expect("config serializes");
        text = text
            .lines()
            .filter(|l| !l.starts_with("workers"))
            .collect::<Vec<_>>()
            .join("\n");
        text
    }
}

impl From<CouponError> for CliError {
    fn from(e: CouponError) -> Self {
        match e {
            CouponError::Config(msg) => CliError::Config(msg),
            other => CliError::Solver(other),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let g = c.rate_grid().unwrap();
        assert_eq!(g.len(), 31);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = ExperimentConfig::from_toml_str("decomposition = \"const\"\n[mc]\nn_paths = 100\n").unwrap();
        assert_eq!(c.mc.n_paths, 100);
        assert_eq!(c.mc.steps_per_year, 12);
        assert_eq!(c.decomposition, DecompositionArg::Const);
        assert!(ExperimentConfig::from_toml_str("[mc]\nbogus = 1\n").is_err());
    }

    #[test]
    fn flags_win() {
        let mut c = ExperimentConfig::from_toml_str("[mc]\nseed = 1\n").unwrap();
        c.apply(&Overrides {
            seed: Some(9),
            grid_n: Some(5),
            ..Default::default()
        });
        assert_eq!(c.mc.seed, 9);
        assert_eq!(c.grid.n, 5);
    }

    #[test]
    fn const_decomposition_needs_constant_baseline() {
        let text = "decomposition = \"const\"\n[intensity]\nmodel = \"rate-linear\"\nrate_slope = 0.5\n";
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let mut ok = c.clone();
        ok.decomposition = DecompositionArg::Zero;
        ok.validate().unwrap();
    }

    #[test]
    fn echo_excludes_runtime_settings() {
        let mut a = ExperimentConfig::default();
        let mut b = a.clone();
        a.mc.workers = 1;
        b.mc.workers = 8;
        b.out = Some("x.csv".into());
        assert_eq!(a.echo(), b.echo());
        assert!(a.echo().contains("kappa = 0.25"));
    }
}
