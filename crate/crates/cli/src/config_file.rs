//! On-disk configuration format.
//!
//! Firms and allocation rules may be listed explicitly or given as a pair of endpoint
//! profiles that are spread linearly across `count` firms.

use std::path::Path;

use permit_sim::config::{interpolate_allocation, interpolate_firms, AllocationRule, ModelOptions};
use permit_sim::scenario;
use permit_sim::{EconomyParams, FirmParams, ModelParams, PolicyParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub policy: PolicySpec,
    pub economy: EconomySpec,
    pub firms: FirmsSpec,
    #[serde(default)]
    pub options: ModelOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub horizon: usize,
    pub penalty: f64,
    #[serde(default)]
    pub price_support: f64,
    pub allocation: AllocationSpec,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationSpec {
    Bounds { high: AlphaBeta, low: AlphaBeta },
    Explicit(Vec<AllocationRule>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Probabilities {
    Constant(f64),
    PerPeriod(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomySpec {
    pub q: Probabilities,
    pub r: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirmsSpec {
    Bounds {
        count: usize,
        high: FirmParams,
        low: FirmParams,
    },
    Explicit(Vec<FirmParams>),
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Expands bounds, checks shapes and validates every parameter.
    pub fn resolve(&self) -> Result<ModelParams, CliError> {
        let firms = match &self.firms {
            FirmsSpec::Bounds { count, high, low } => {
                interpolate_firms(high, low, *count).map_err(|e| CliError::Config(e.to_string()))?
            }
            FirmsSpec::Explicit(list) => list.clone(),
        };
        let allocation = match &self.policy.allocation {
            AllocationSpec::Bounds { high, low } => {
                interpolate_allocation((high.alpha, high.beta), (low.alpha, low.beta), firms.len())
                    .map_err(|e| CliError::Config(e.to_string()))?
            }
            AllocationSpec::Explicit(rules) => rules.clone(),
        };
        let horizon = self.policy.horizon;
        let q = match &self.economy.q {
            Probabilities::Constant(p) => vec![*p; horizon],
            Probabilities::PerPeriod(v) => v.clone(),
        };
        let params = ModelParams {
            policy: PolicyParams {
                horizon,
                penalty: self.policy.penalty,
                price_support: self.policy.price_support,
                allocation,
            },
            economy: EconomyParams {
                q,
                r: self.economy.r,
                rho: self.economy.rho,
            },
            firms,
            options: self.options,
        };
        params.validated().map_err(CliError::from)
    }

    /// The built-in reference scenario in file form.
    pub fn reference() -> Self {
        let (ah, bh) = scenario::ALLOCATION_HIGH;
        let (al, bl) = scenario::ALLOCATION_LOW;
        ConfigFile {
            policy: PolicySpec {
                horizon: scenario::HORIZON,
                penalty: scenario::PENALTY,
                price_support: scenario::PRICE_SUPPORT,
                allocation: AllocationSpec::Bounds {
                    high: AlphaBeta { alpha: ah, beta: bh },
                    low: AlphaBeta { alpha: al, beta: bl },
                },
            },
            economy: EconomySpec {
                q: Probabilities::Constant(scenario::UP_PROBABILITY),
                r: scenario::INTEREST_RATE,
                rho: scenario::PROFIT_GROWTH,
            },
            firms: FirmsSpec::Bounds {
                count: scenario::FIRMS,
                high: scenario::high_emitter(),
                low: scenario::low_emitter(),
            },
            options: ModelOptions::default(),
        }
    }
}
