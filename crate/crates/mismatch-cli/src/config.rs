//! Experiment configuration: a flat TOML document with explicit list syntax
//! for grid axes. The full schema is documented in the repository README and
//! carries a `schema_version` field.

use std::fmt;

use mismatch_core::error::{Error, Result};
use mismatch_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub grid: GridConfig,
    pub run: RunConfig,
}

/// Grid axes; the experiment visits their cartesian product in declaration
/// order (n, d, m, k_frac, q, sigma, missing_frac, many_to_one_frac).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    /// Response dimensions; omitted means m = d at every grid point.
    #[serde(default)]
    pub m: Option<Vec<usize>>,
    pub k_frac: Vec<f64>,
    pub q: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(default = "zero_axis")]
    pub missing_frac: Vec<f64>,
    #[serde(default = "zero_axis")]
    pub many_to_one_frac: Vec<f64>,
}

fn zero_axis() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub estimators: Vec<EstimatorKind>,
    pub match_modes: Vec<MatchModeKind>,
    pub lambda_rule: LambdaRule,
    /// Replications per grid point; the benchmark default is 100 (lowered
    /// to 20 in the shipped relaxation configs).
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub base_seed: u64,
    /// Multiplier on the default threshold for threshold-mode matching.
    #[serde(default = "one")]
    pub tau_multiplier: f64,
}

fn one() -> f64 {
    1.0
}

fn default_replications() -> usize {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Naive,
    Oracle,
    Proposed,
    ProposedPlus,
    Crr,
    DsReg,
    DsCons,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            EstimatorKind::Naive => "naive",
            EstimatorKind::Oracle => "oracle",
            EstimatorKind::Proposed => "proposed",
            EstimatorKind::ProposedPlus => "proposed_plus",
            EstimatorKind::Crr => "crr",
            EstimatorKind::DsReg => "ds_reg",
            EstimatorKind::DsCons => "ds_cons",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchModeKind {
    Threshold,
    Permutation,
    Constrained,
}

impl fmt::Display for MatchModeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            MatchModeKind::Threshold => "threshold",
            MatchModeKind::Permutation => "permutation",
            MatchModeKind::Constrained => "constrained",
        };
        f.write_str(name)
    }
}

/// How the penalty level is chosen per grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaRule {
    /// `4 sigma / sqrt(n m)`.
    LambdaStar,
    /// Twice the closed-form noise level.
    TwoLambda0,
    /// A fixed value.
    Explicit { value: f64 },
    /// `multiplier * sigma0_hat / sqrt(n m)` with `sigma0_hat` the RMSE of
    /// the naive least-squares fit.
    Sigma0Multiplier { multiplier: f64 },
}

/// One point of the expanded grid.
#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub k_frac: f64,
    pub q: f64,
    pub sigma: f64,
    pub missing_frac: f64,
    pub many_to_one_frac: f64,
}

impl GridPoint {
    pub fn synth_config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            n: self.n,
            d: self.d,
            m: self.m,
            k_frac: self.k_frac,
            q: self.q,
            sigma: self.sigma,
            missing_frac: self.missing_frac,
            many_to_one_frac: self.many_to_one_frac,
            seed,
        }
    }

    pub fn k(&self) -> usize {
        (self.k_frac * self.n as f64).floor() as usize
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("toml: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        for (name, empty) in [
            ("grid.n", self.grid.n.is_empty()),
            ("grid.d", self.grid.d.is_empty()),
            ("grid.k_frac", self.grid.k_frac.is_empty()),
            ("grid.q", self.grid.q.is_empty()),
            ("grid.sigma", self.grid.sigma.is_empty()),
            ("grid.missing_frac", self.grid.missing_frac.is_empty()),
            ("grid.many_to_one_frac", self.grid.many_to_one_frac.is_empty()),
            ("run.estimators", self.run.estimators.is_empty()),
            ("run.match_modes", self.run.match_modes.is_empty()),
        ] {
            if empty {
                return Err(Error::InvalidConfig(format!("{name} must be non-empty")));
            }
        }
        if let Some(m) = &self.grid.m {
            if m.is_empty() {
                return Err(Error::InvalidConfig("grid.m must be non-empty if given".into()));
            }
        }
        if self.run.replications == 0 {
            return Err(Error::InvalidConfig("run.replications must be at least 1".into()));
        }
        if self.run.tau_multiplier < 0.0 {
            return Err(Error::InvalidConfig("run.tau_multiplier must be nonnegative".into()));
        }
        Ok(())
    }

    /// Cartesian product of the grid axes, in declaration order.
    pub fn expand_grid(&self) -> Vec<GridPoint> {
        let m_axis: Vec<Option<usize>> = match &self.grid.m {
            Some(ms) => ms.iter().map(|&m| Some(m)).collect(),
            None => vec![None],
        };
        let mut points = Vec::new();
        for &n in &self.grid.n {
            for &d in &self.grid.d {
                for m in &m_axis {
                    for &k_frac in &self.grid.k_frac {
                        for &q in &self.grid.q {
                            for &sigma in &self.grid.sigma {
                                for &missing_frac in &self.grid.missing_frac {
                                    for &many in &self.grid.many_to_one_frac {
                                        points.push(GridPoint {
                                            n,
                                            d,
                                            m: m.unwrap_or(d),
                                            k_frac,
                                            q,
                                            sigma,
                                            missing_frac,
                                            many_to_one_frac: many,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        points
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1

[grid]
n = [200, 500]
d = [6]
k_frac = [0.2]
q = [0.0]
sigma = [0.01, 2.0]

[run]
estimators = ["naive", "proposed", "proposed_plus"]
match_modes = ["permutation"]
replications = 20
base_seed = 42
lambda_rule = { kind = "lambda_star" }
"#;

    #[test]
    fn minimal_config_parses_and_expands() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let grid = cfg.expand_grid();
        assert_eq!(grid.len(), 4);
        assert_eq!(grid[0].m, 6);
        assert_eq!(grid[0].k(), 40);
        assert_eq!(cfg.run.tau_multiplier, 1.0);
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 7");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn empty_estimators_are_rejected() {
        let text = MINIMAL.replace(
            "estimators = [\"naive\", \"proposed\", \"proposed_plus\"]",
            "estimators = []",
        );
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn lambda_rules_roundtrip() {
        for rule in [
            "lambda_rule = { kind = \"two_lambda0\" }",
            "lambda_rule = { kind = \"explicit\", value = 0.01 }",
            "lambda_rule = { kind = \"sigma0_multiplier\", multiplier = 0.5 }",
        ] {
            let text = MINIMAL.replace("lambda_rule = { kind = \"lambda_star\" }", rule);
            let cfg = ExperimentConfig::from_toml(&text).unwrap();
            let back = toml::to_string(&cfg).unwrap();
            let again = ExperimentConfig::from_toml(&back).unwrap();
            assert_eq!(cfg.run.replications, again.run.replications);
        }
    }
}
