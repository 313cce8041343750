//! Run configuration: JSON file, unknown and duplicate keys rejected,
//! defaults filled in and echoed into every report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use bubbler_core::domain::HSpec;
use bubbler_core::params::{validate_alpha, ProblemSpec};
use bubbler_core::Error;

pub const DEFAULT_GRID_N: usize = 768;
pub const DEFAULT_QUADRATURE_BUDGET: usize = 200_000;

/// Largest `t` at which the corrector grid resolves the bubbles at desk scale;
/// the solve stage only runs on ladder points in `[CORRECTOR_T_MIN, CORRECTOR_T_MAX]`.
pub const CORRECTOR_T_MIN: f64 = 5.0;
pub const CORRECTOR_T_MAX: f64 = 9.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Largest admissible `|U|` on the boundary.
    pub boundary: f64,
    /// Relative mass error admitted at the largest ladder point.
    pub mass_rel: f64,
    /// Bound on `|slope of R in log t| / |coefficient of t|` along the ladder.
    pub remainder_slope: f64,
    /// Fixed-point increment tolerance of the corrector.
    pub corrector_increment: f64,
    /// Discrete residual tolerance of the corrector.
    pub corrector_residual: f64,
    /// Relative stopping tolerance of the reduced maximizer.
    pub maximizer_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            boundary: 1e-9,
            mass_rel: 0.05,
            remainder_slope: 0.01,
            corrector_increment: 1e-10,
            corrector_residual: 1e-9,
            maximizer_rel: 1e-6,
        }
    }
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, f64); 6] {
        [
            ("boundary", self.boundary),
            ("mass_rel", self.mass_rel),
            ("remainder_slope", self.remainder_slope),
            ("corrector_increment", self.corrector_increment),
            ("corrector_residual", self.corrector_residual),
            ("maximizer_rel", self.maximizer_rel),
        ]
    }
}

fn default_grid_n() -> usize {
    DEFAULT_GRID_N
}

fn default_budget() -> usize {
    DEFAULT_QUADRATURE_BUDGET
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    pub m: usize,
    pub t_ladder: Vec<f64>,
    #[serde(default = "default_h")]
    pub h_spec: HSpec,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    #[serde(default = "default_budget")]
    pub quadrature_budget: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_h() -> HSpec {
    HSpec::Zero
}

impl RunConfig {
    /// Problem data at ladder point `t`.
    pub fn spec(&self, t: f64) -> Result<ProblemSpec, Error> {
        ProblemSpec::new(self.alpha, self.m, t, self.h_spec.clone())
    }

    /// Ladder points inside the corrector window.
    pub fn corrector_points(&self) -> Vec<f64> {
        self.t_ladder
            .iter()
            .copied()
            .filter(|t| (CORRECTOR_T_MIN..=CORRECTOR_T_MAX).contains(t))
            .collect()
    }

    pub fn validate(&self) -> Result<(), Error> {
        validate_alpha(self.alpha)?;
        if self.t_ladder.is_empty() {
            return Err(Error::Config("t_ladder must hold at least one value".into()));
        }
        for w in self.t_ladder.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(format!(
                    "t_ladder must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if self.grid_n < 4 {
            return Err(Error::Config(format!("grid_n = {} is below the minimum 4", self.grid_n)));
        }
        if self.quadrature_budget == 0 {
            return Err(Error::Config("quadrature_budget must be positive".into()));
        }
        for (name, v) in self.tolerances.entries() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("tolerances.{name} = {v} must be positive")));
            }
        }
        for &t in &self.t_ladder {
            self.spec(t)?;
        }
        Ok(())
    }
}

/// Parses and validates a configuration. Errors name the offending line and
/// field.
pub fn parse_config_str(text: &str) -> Result<RunConfig, Error> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}
