//! Run configuration: JSON file plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use homoglab_core::cell::Centering;
use homoglab_core::fields::{CoefficientSpec, ScalarMode};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Where the coefficient problem comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    /// Path relative to the config file.
    Path(PathBuf),
    Inline(Box<CoefficientSpec>),
}

/// Which `dtn` checks to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checks {
    #[serde(default = "yes")]
    pub shift: bool,
    #[serde(default = "yes")]
    pub rescale: bool,
    #[serde(default = "yes")]
    pub monotone: bool,
    #[serde(default = "yes")]
    pub barrier: bool,
}

fn yes() -> bool {
    true
}

impl Default for Checks {
    fn default() -> Self {
        Self {
            shift: true,
            rescale: true,
            monotone: true,
            barrier: true,
        }
    }
}

/// Condition on the `s = 0` row for `strip`; Dirichlet uses `g` as the value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bc {
    #[default]
    Neumann,
    Dirichlet,
}

fn default_eps() -> Vec<f64> {
    vec![0.25, 0.125, 0.0625]
}

fn default_resolution() -> usize {
    8
}

fn default_periods() -> usize {
    1
}

fn default_cell_n() -> usize {
    64
}

fn default_rho() -> Vec<f64> {
    vec![0.2, 0.1, 0.05]
}

fn default_datum() -> Vec<ScalarMode> {
    Vec::new()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSource,
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_periods")]
    pub periods: usize,
    #[serde(default = "default_cell_n")]
    pub cell_n: usize,
    #[serde(default)]
    pub bc: Bc,
    /// Strip height for `strip`, in macro units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    #[serde(default = "default_rho")]
    pub rho: Vec<f64>,
    /// Irrational normal slope for `period`; the problem direction is used otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default)]
    pub checks: Checks,
    /// Dirichlet datum for `rates`; empty means `f ≡ 1`.
    #[serde(default = "default_datum")]
    pub datum: Vec<ScalarMode>,
    #[serde(default)]
    pub centering: Centering,
    #[serde(default)]
    pub seed: u64,
}

/// Values given on the command line take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub eps: Option<Vec<f64>>,
    pub resolution: Option<usize>,
    pub seed: Option<u64>,
    pub checks: Option<Checks>,
}

impl RunConfig {
    /// Reads `path`, inlines the problem file and applies overrides.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::ConfigParse(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::ConfigParse(format!("{}: {e}", path.display())))?;
        if let ProblemSource::Path(rel) = &cfg.problem {
            let full = path.parent().unwrap_or(Path::new(".")).join(rel);
            let text = fs::read_to_string(&full)
                .map_err(|e| CliError::ConfigParse(format!("{}: {e}", full.display())))?;
            let spec: CoefficientSpec = serde_json::from_str(&text)
                .map_err(|e| CliError::ConfigParse(format!("{}: {e}", full.display())))?;
            cfg.problem = ProblemSource::Inline(Box::new(spec));
        }
        if let Some(eps) = &overrides.eps {
            cfg.eps = eps.clone();
        }
        if let Some(r) = overrides.resolution {
            cfg.resolution = r;
        }
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(c) = overrides.checks {
            cfg.checks = c;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.eps.is_empty() {
            return Err(CliError::Validation("eps list is empty".into()));
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return Err(CliError::Validation(format!("eps {e} outside (0, 1]")));
        }
        if let Some(r) = self.rho.iter().find(|r| !(**r > 0.0 && **r < 0.5)) {
            return Err(CliError::Validation(format!("rho {r} outside (0, 1/2)")));
        }
        if self.resolution < 8 {
            return Err(CliError::Validation(format!(
                "resolution {} below the minimum of 8",
                self.resolution
            )));
        }
        if let Some(h) = self.height.filter(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(CliError::Validation(format!("height {h} must be positive")));
        }
        if self.periods == 0 {
            return Err(CliError::Validation("periods must be positive".into()));
        }
        Ok(())
    }

    pub fn spec(&self) -> &CoefficientSpec {
        match &self.problem {
            ProblemSource::Inline(s) => s,
            ProblemSource::Path(_) => unreachable!("problem paths are inlined on load"),
        }
    }
}
