//! Run configuration files and command-line overrides.

use std::path::{Path, PathBuf};

use knockoff_core::simulation::{ResponseModel, SimConfig};
use knockoff_core::{StatKind, ThresholdRule};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Top level of a configuration file.
///
/// ```json
/// {
///   "output_dir": "out/table2",
///   "cells": [
///     {"n": 300, "p": 300, "rho": 0.0, "response": "linear", "statistic": "mc",
///      "q": 0.2, "replications": 100, "seed": 1}
///   ]
/// }
/// ```
///
/// Every cell is a full [`SimConfig`]; omitted optional fields take their
/// defaults. Cell `i` draws its random streams under cell id `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub cells: Vec<SimConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub diagnostics: DiagnoseOptions,
}

/// Settings used only by `diagnose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseOptions {
    /// Grid of thresholds; derived from the reference tail when absent.
    pub t_grid: Option<Vec<f64>>,
    /// Pooled frequency floor for the indicator diagnostic.
    pub min_freq: f64,
    /// Strong-signal count; defaults to the number of planted signals.
    pub a_n: Option<usize>,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self {
            t_grid: None,
            min_freq: 0.01,
            a_n: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(CliError::Config("`cells` is empty".into()));
        }
        for (i, c) in self.cells.iter().enumerate() {
            c.validate()
                .map_err(|e| CliError::Config(format!("cell {i}: {e}")))?;
        }
        if !(self.diagnostics.min_freq > 0.0 && self.diagnostics.min_freq < 1.0) {
            return Err(CliError::Config(
                "diagnostics.min_freq must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Applies the overrides to every cell and revalidates.
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        for c in &mut self.cells {
            if let Some(s) = o.statistic {
                c.statistic = s;
            }
            if let Some(q) = o.q {
                c.q = q;
            }
            if let Some(r) = o.replications {
                c.replications = r;
            }
            if let Some(s) = o.seed {
                c.seed = s;
            }
            if let Some(r) = o.rule {
                c.rule = r;
            }
        }
        self.validate()
    }
}

/// Values given on the command line that replace those of every cell.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub statistic: Option<StatKind>,
    pub q: Option<f64>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub rule: Option<ThresholdRule>,
}

/// Response setting of a single command-line cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setting {
    Linear,
    Nonlinear,
    Null,
}

impl std::str::FromStr for Setting {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "1" => Ok(Setting::Linear),
            "2" => Ok(Setting::Nonlinear),
            "null" | "0" => Ok(Setting::Null),
            other => Err(format!("unknown setting {other:?} (expected 1, 2 or null)")),
        }
    }
}

/// One cell built from `--n --p --rho --setting`, with the simulation
/// defaults for everything else.
pub fn single_cell(n: usize, p: usize, rho: f64, setting: Setting) -> Result<SimConfig> {
    let base = match setting {
        Setting::Nonlinear => 2,
        _ => 1,
    };
    let mut cfg = SimConfig::setting(base, n, p, rho, StatKind::MarginalCorr)
        .map_err(|e| CliError::Config(e.to_string()))?;
    if setting == Setting::Null {
        cfg.response = ResponseModel::Null;
    }
    Ok(cfg)
}
