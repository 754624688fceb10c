//! Run configuration: a single TOML file with four blocks — `[model]`,
//! `[numerics]`, `[simulation]`, `[output]` — every key optional, unknown
//! keys rejected. The defaults reproduce the reference three-regime
//! economy and its solver settings, so an empty file (or no file at all)
//! is a complete, runnable configuration.
//!
//! The effective configuration (after defaults and any `--seed` override)
//! has a canonical serialization whose FNV-1a hash is stamped into every
//! artifact header, making outputs traceable to the exact inputs.

use serde::{Deserialize, Serialize};

use regrowth::{
    validate_chain, IncomeGrid, ModelSpec, QuadratureRule, ShockModel, SimulationConfig, StopRule,
};

use crate::error::AppError;

/// Economic primitives.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub beta: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub r: f64,
    pub omega: Vec<f64>,
    /// Row-stochastic regime transition matrix, one row per regime.
    pub transition: Vec<Vec<f64>>,
    pub shock: ShockBlock,
}

impl Default for ModelBlock {
    fn default() -> Self {
        ModelBlock {
            beta: 0.9,
            gamma: 1.0,
            sigma: 0.5,
            r: 633.0,
            omega: vec![0.3, 0.5, 0.9],
            transition: vec![
                vec![0.50, 0.40, 0.10],
                vec![0.25, 0.50, 0.25],
                vec![0.10, 0.40, 0.50],
            ],
            shock: ShockBlock::Lognormal {
                mu: 0.0,
                sigma: 1.0,
            },
        }
    }
}

/// Shock distribution, selected by `kind`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ShockBlock {
    Lognormal { mu: f64, sigma: f64 },
    Discrete { support: Vec<f64>, masses: Vec<f64> },
}

/// Grid, menu, quadrature, and stopping-rule settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsBlock {
    pub x_max: f64,
    pub x_count: usize,
    pub y_count: usize,
    pub quad_intervals: usize,
    pub max_iters: usize,
    pub tol_w: f64,
}

impl Default for NumericsBlock {
    fn default() -> Self {
        NumericsBlock {
            x_max: 10.0,
            x_count: 121,
            y_count: 30,
            quad_intervals: 18,
            max_iters: 3,
            tol_w: 0.0,
        }
    }
}

/// Path simulation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationBlock {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub x0: f64,
    /// Starting regime, 1-based like the `regime` column in every output
    /// file (1 = first row of `omega` and `transition`).
    pub theta0: usize,
    pub bins: usize,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        SimulationBlock {
            horizon: 100_000,
            burn_in: 1_000,
            seed: 20240801,
            x0: 1.0,
            theta0: 1,
            bins: 40,
        }
    }
}

/// Artifact destination and toggles.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: String,
    pub formats: Vec<String>,
    /// Also write the raw simulated path (large) from `simulate`.
    pub write_path: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: "out".to_string(),
            formats: vec!["csv".to_string()],
            write_path: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub numerics: NumericsBlock,
    pub simulation: SimulationBlock,
    pub output: OutputBlock,
}

impl RunConfig {
    /// Parses a TOML file; diagnostics carry the offending line/key.
    pub fn load(path: &std::path::Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Cross-field checks that serde cannot express.
    pub fn validate(&self) -> Result<(), AppError> {
        for format in &self.output.formats {
            if format != "csv" {
                return Err(AppError::Config(format!(
                    "output.formats: unsupported format {format:?} (only \"csv\")"
                )));
            }
        }
        if self.numerics.y_count < 2 {
            return Err(AppError::Config(
                "numerics.y_count must be at least 2".to_string(),
            ));
        }
        if self.numerics.max_iters < 1 {
            return Err(AppError::Config(
                "numerics.max_iters must be at least 1".to_string(),
            ));
        }
        if self.simulation.bins == 0 {
            return Err(AppError::Config(
                "simulation.bins must be at least 1".to_string(),
            ));
        }
        if self.simulation.horizon < 1 {
            return Err(AppError::Config(
                "simulation.T must be at least 1".to_string(),
            ));
        }
        if self.simulation.burn_in >= self.simulation.horizon {
            return Err(AppError::Config(
                "simulation.burn_in must be smaller than simulation.T".to_string(),
            ));
        }
        if !(self.simulation.x0 > 0.0) || !self.simulation.x0.is_finite() {
            return Err(AppError::Config(
                "simulation.x0 must be positive and finite".to_string(),
            ));
        }
        if self.simulation.theta0 < 1 || self.simulation.theta0 > self.model.omega.len() {
            return Err(AppError::Config(format!(
                "simulation.theta0 = {} is not a regime label (1-based; model has {})",
                self.simulation.theta0,
                self.model.omega.len()
            )));
        }
        Ok(())
    }

    /// Builds the validated model; parameter errors are reported as
    /// configuration problems.
    pub fn spec(&self) -> Result<ModelSpec, AppError> {
        let chain = validate_chain(&self.model.transition)
            .map_err(|e| AppError::Config(format!("model.transition: {e}")))?;
        let shock = match &self.model.shock {
            ShockBlock::Lognormal { mu, sigma } => ShockModel::lognormal(*mu, *sigma)
                .map_err(|e| AppError::Config(format!("model.shock: {e}")))?,
            ShockBlock::Discrete { support, masses } => ShockModel::discrete(support, masses)
                .map_err(|e| AppError::Config(format!("model.shock: {e}")))?,
        };
        ModelSpec::new(
            self.model.beta,
            self.model.gamma,
            self.model.sigma,
            self.model.r,
            self.model.omega.clone(),
            chain,
            shock,
        )
        .map_err(|e| AppError::Config(format!("model: {e}")))
    }

    pub fn grid(&self) -> Result<IncomeGrid, AppError> {
        IncomeGrid::linear(self.numerics.x_max, self.numerics.x_count)
            .map_err(|e| AppError::Config(format!("numerics grid: {e}")))
    }

    pub fn rule(&self) -> Result<QuadratureRule, AppError> {
        QuadratureRule::new(self.numerics.quad_intervals, 1e-6)
            .map_err(|e| AppError::Config(format!("numerics.quad_intervals: {e}")))
    }

    pub fn stop(&self) -> StopRule {
        StopRule {
            max_iters: self.numerics.max_iters,
            tol_w: self.numerics.tol_w,
        }
    }

    pub fn sim_config(&self) -> SimulationConfig {
        SimulationConfig {
            horizon: self.simulation.horizon,
            burn_in: self.simulation.burn_in,
            seed: self.simulation.seed,
            x0: self.simulation.x0,
            theta0: self.simulation.theta0 - 1,
        }
    }

    /// One-line description of the income grid for artifact headers.
    pub fn grid_label(&self) -> String {
        format!(
            "linear [0, {}] x_count={} y_count={}",
            self.numerics.x_max, self.numerics.x_count, self.numerics.y_count
        )
    }

    /// Canonical serialization of the effective configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// FNV-1a hash of the canonical serialization, stamped into artifact
    /// headers so outputs are traceable to their exact inputs.
    pub fn hash(&self) -> u64 {
        fnv1a64(self.canonical().as_bytes())
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
