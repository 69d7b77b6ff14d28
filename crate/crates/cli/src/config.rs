//! Resolved run configuration: command-line flags merged with an optional
//! JSON config file (file values win), scenario defaults applied, and the
//! content hash that ties plan outputs to later commands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;
use qsd_core::belief::Belief;
use qsd_core::planner::CounterMode;

pub const DEFAULT_GRID_CAP: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Binary,
    Trine,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CounterModeArg {
    Raw,
    Memoized,
}

impl From<CounterModeArg> for CounterMode {
    fn from(arg: CounterModeArg) -> Self {
        match arg {
            CounterModeArg::Raw => CounterMode::Raw,
            CounterModeArg::Memoized => CounterMode::Memoized,
        }
    }
}

/// Semantic run parameters; everything that affects computed artifacts and
/// nothing that does not (paths stay out so moving an output directory
/// never changes a hash).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    /// Rotation angle of the second binary state; binary scenarios only.
    pub theta: Option<f64>,
    /// Custom-ensemble definition, inlined so the hash covers it.
    pub ensemble: Option<qsd_core::export::EnsembleFile>,
    pub horizon: usize,
    pub cost: f64,
    pub grid: u32,
    pub library: usize,
    pub counter_mode: CounterModeArg,
    pub prior: Option<Vec<f64>>,
    pub episodes: u64,
    pub seed: u64,
    pub grid_cap: usize,
}

/// Optional overrides read from `--config`; any present field replaces the
/// flag value.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Option<ScenarioKind>,
    pub theta: Option<f64>,
    pub ensemble: Option<PathBuf>,
    pub horizon: Option<usize>,
    pub cost: Option<f64>,
    pub grid: Option<u32>,
    pub library: Option<usize>,
    pub counter_mode: Option<CounterModeArg>,
    pub prior: Option<Vec<f64>>,
    pub episodes: Option<u64>,
    pub seed: Option<u64>,
    pub grid_cap: Option<usize>,
}

pub fn load_config_file(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Config(format!(
            "config file {} line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

impl RunConfig {
    pub fn scenario_defaults(kind: ScenarioKind) -> (u32, usize, f64) {
        // (grid, library, theta-or-nan)
        match kind {
            ScenarioKind::Binary => (2000, 181, std::f64::consts::FRAC_PI_3),
            ScenarioKind::Trine => (60, 24, f64::NAN),
            ScenarioKind::Custom => (200, 24, f64::NAN),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match self.scenario {
            ScenarioKind::Binary => {
                let theta = self.theta.ok_or_else(|| {
                    CliError::Config("binary scenarios need --theta".into())
                })?;
                if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) {
                    return Err(CliError::Config(format!(
                        "--theta must lie strictly inside (0, pi/2), got {theta}"
                    )));
                }
            }
            ScenarioKind::Trine => {}
            ScenarioKind::Custom => {
                if self.ensemble.is_none() {
                    return Err(CliError::Config(
                        "custom scenarios need --ensemble FILE".into(),
                    ));
                }
            }
        }
        if self.library == 0 {
            return Err(CliError::Config("--library must be at least 1".into()));
        }
        if self.grid == 0 {
            return Err(CliError::Config("--grid must be at least 1".into()));
        }
        if self.cost < 0.0 {
            return Err(CliError::Config("--cost must be nonnegative".into()));
        }
        if self.cost * self.horizon as f64 > 1.0 {
            return Err(CliError::Config(format!(
                "horizon x cost = {} exceeds 1; values would leave [-1, 1]",
                self.cost * self.horizon as f64
            )));
        }
        if let Some(prior) = &self.prior {
            Belief::new(prior.clone())
                .map_err(|e| CliError::Config(format!("--prior: {e}")))?;
        }
        Ok(())
    }

    /// Hash of the semantic configuration; plan outputs embed it and later
    /// commands verify it.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        crate::manifest::sha256_hex(canonical.as_bytes())
    }
}

pub fn parse_prior(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("--prior entry `{part}`: {e}")))
        })
        .collect()
}

pub fn parse_grid_list(text: &str) -> Result<Vec<u32>, CliError> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<u32>()
                .map_err(|e| CliError::Config(format!("--grids entry `{part}`: {e}")))
        })
        .collect()
}

/// Output root: `QSD_OUT_ROOT` prefixes relative output directories.
pub fn resolve_out_dir(out: &Path) -> PathBuf {
    if out.is_absolute() {
        return out.to_path_buf();
    }
    match std::env::var_os("QSD_OUT_ROOT") {
        Some(root) => PathBuf::from(root).join(out),
        None => out.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> RunConfig {
        RunConfig {
            scenario: ScenarioKind::Binary,
            theta: Some(1.0),
            ensemble: None,
            horizon: 2,
            cost: 0.01,
            grid: 100,
            library: 21,
            counter_mode: CounterModeArg::Raw,
            prior: None,
            episodes: 1000,
            seed: 0,
            grid_cap: DEFAULT_GRID_CAP,
        }
    }

    #[test]
    fn config_file_overrides_flag_values() {
        let file: ConfigFile = serde_json::from_str(r#"{"cost": 0.02, "grid": 50}"#).unwrap();
        let mut cfg = base_config();
        if let Some(cost) = file.cost {
            cfg.cost = cost;
        }
        if let Some(grid) = file.grid {
            cfg.grid = grid;
        }
        assert_eq!(cfg.cost, 0.02);
        assert_eq!(cfg.grid, 50);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = serde_json::from_str::<ConfigFile>(r#"{"costt": 0.02}"#);
        assert!(err.is_err());
    }

    #[test]
    fn hash_tracks_semantic_changes_only() {
        let a = base_config();
        let mut b = base_config();
        assert_eq!(a.content_hash(), b.content_hash());
        b.cost = 0.02;
        assert_ne!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let mut cfg = base_config();
        cfg.theta = Some(2.0);
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let mut cfg = base_config();
        cfg.cost = 0.6;
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let mut cfg = base_config();
        cfg.prior = Some(vec![0.9, 0.3]);
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        assert!(base_config().validate().is_ok());
    }
}
