//! The `simulate` and `diagnose` commands.

use std::path::Path;
use std::time::Instant;

use knockoff_core::diagnostics::{
    gaussian_null_tails, indicator_approx_diag, localization_from_thresholds, null_sample_matrix,
    symmetry_ratio_diag, tail_inverse, BivariateTail, DiagnosticsConfig, IndicatorReport,
    LocalizationReport, SymmetryReport,
};
use knockoff_core::simulation::{cell_knockoff_model, run_cell_with_id, CellResult, SimConfig};
use nalgebra::DVector;
use serde::Serialize;

use crate::config::{DiagnoseOptions, RunConfig};
use crate::error::Result;
use crate::report::{
    cell_row, config_hash, csv_bytes, fmt_f64, setting_label, to_json, write_outputs, CellReport,
    Provenance, Timing, Written, CELL_COLUMNS, SCHEMA_VERSION,
};

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: &'static str,
    pub command: &'static str,
    pub provenance: Provenance,
    pub cells: Vec<CellReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Vec<CellDiagnostics>>,
    /// Kept apart from everything else so that reruns differ only here.
    pub timing: Timing,
}

impl RunReport {
    pub fn csv(&self) -> Vec<u8> {
        let mut header: Vec<String> = CELL_COLUMNS.iter().map(|s| s.to_string()).collect();
        let diag = self.diagnostics.as_ref();
        if diag.is_some() {
            header.extend(DIAG_COLUMNS.iter().map(|s| s.to_string()));
        }
        let rows: Vec<Vec<String>> = self
            .cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut row = cell_row(c);
                if let Some(d) = diag {
                    row.extend(d[i].csv_fields());
                }
                row
            })
            .collect();
        csv_bytes(&header, &rows)
    }

    pub fn json(&self) -> Vec<u8> {
        to_json(self)
    }

    pub fn write(&self, dir: &Path) -> Result<Written> {
        write_outputs(dir, &self.json(), &self.csv())
    }
}

fn provenance(cfg: &RunConfig) -> Provenance {
    #[derive(Serialize)]
    struct Hashed<'a> {
        cells: &'a [SimConfig],
        diagnostics: &'a DiagnoseOptions,
    }
    Provenance {
        config_sha256: config_hash(&Hashed {
            cells: &cfg.cells,
            diagnostics: &cfg.diagnostics,
        }),
        seeds: cfg.cells.iter().map(|c| c.seed).collect(),
    }
}

fn run_cells(cells: &[SimConfig]) -> Result<(Vec<CellResult>, Timing)> {
    let start = Instant::now();
    let mut results = Vec::with_capacity(cells.len());
    let mut secs = Vec::with_capacity(cells.len());
    for (i, cfg) in cells.iter().enumerate() {
        let t = Instant::now();
        results.push(run_cell_with_id(cfg, i as u64)?);
        secs.push(t.elapsed().as_secs_f64());
    }
    Ok((
        results,
        Timing {
            cells: secs,
            total: start.elapsed().as_secs_f64(),
        },
    ))
}

fn cell_reports(results: Vec<CellResult>) -> Vec<CellReport> {
    results
        .into_iter()
        .enumerate()
        .map(|(cell, result)| CellReport {
            cell,
            setting: setting_label(result.config.response),
            result,
        })
        .collect()
}

/// Runs every cell of `cfg` in order.
pub fn run_simulate(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let (results, timing) = run_cells(&cfg.cells)?;
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        command: "simulate",
        provenance: provenance(cfg),
        cells: cell_reports(results),
        diagnostics: None,
        timing,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CellDiagnostics {
    pub cell: usize,
    pub null_count: usize,
    pub t_grid: Vec<f64>,
    pub symmetry: SymmetryReport,
    pub indicator: IndicatorReport,
    /// Absent for statistics without a Gaussian reference tail and for
    /// models without signals.
    pub localization: Option<LocalizationReport>,
}

const DIAG_COLUMNS: [&str; 7] = [
    "null_count",
    "symmetry_sup_deviation",
    "symmetry_sup_z",
    "indicator_mean_sup_deviation",
    "indicator_flagged",
    "alpha_n",
    "localization_frequency",
];

impl CellDiagnostics {
    fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), fmt_f64);
        vec![
            self.null_count.to_string(),
            opt(self.symmetry.sup_deviation),
            opt(self.symmetry.sup_z),
            opt(self.indicator.mean_sup_deviation),
            self.indicator.flagged.to_string(),
            opt(self.localization.as_ref().map(|l| l.alpha_n)),
            opt(self.localization.as_ref().map(|l| l.frequency)),
        ]
    }
}

/// Grid points where the reference tail equals 20 log-spaced levels
/// between 0.45 and 0.005.
fn reference_grid(tails: &[BivariateTail]) -> Result<Vec<f64>> {
    let (hi, lo) = (0.45f64, 0.005f64);
    let mut grid = Vec::new();
    for k in 0..20 {
        let x = hi * (lo / hi).powf(k as f64 / 19.0);
        let t = tail_inverse(tails, x)?;
        if t > 0.0 && grid.last().is_none_or(|last| t > *last) {
            grid.push(t);
        }
    }
    Ok(grid)
}

/// Quantiles 0.05, 0.10, ..., 0.95 of the pooled `|W|` of null features.
fn quantile_grid(null_w: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let mut abs: Vec<f64> = null_w
        .iter()
        .map(|v| v.abs())
        .filter(|v| *v > 0.0)
        .collect();
    abs.sort_by(f64::total_cmp);
    let mut grid: Vec<f64> = Vec::new();
    if abs.is_empty() {
        return grid;
    }
    for k in 1..20 {
        let idx = ((k as f64 / 20.0) * (abs.len() - 1) as f64).round() as usize;
        let t = abs[idx];
        if grid.last().is_none_or(|last| t > *last) {
            grid.push(t);
        }
    }
    grid
}

fn diagnose_cell(
    cell: usize,
    result: &CellResult,
    opts: &DiagnoseOptions,
) -> Result<CellDiagnostics> {
    let cfg = &result.config;
    let h0: Vec<usize> = (0..cfg.p)
        .filter(|j| result.h1.binary_search(j).is_err())
        .collect();
    let per_rep: Vec<DVector<f64>> = result
        .per_rep
        .iter()
        .map(|r| DVector::from_vec(r.statistics.clone().expect("statistics are kept")))
        .collect();
    let null_w = null_sample_matrix(&per_rep, &h0);
    let model = cell_knockoff_model(cfg, cell as u64)?;
    let joint = model.joint_covariance();
    let tails = gaussian_null_tails(cfg.statistic, joint.matrix(), cfg.n, 1.0, &h0)?;
    let t_grid = match (&opts.t_grid, &tails) {
        (Some(g), _) => g.clone(),
        (None, Some(t)) => reference_grid(t)?,
        (None, None) => quantile_grid(&null_w),
    };
    let a_n = opts.a_n.unwrap_or(result.h1.len());
    let dcfg = DiagnosticsConfig {
        t_grid: t_grid.clone(),
        q: cfg.q,
        a_n,
        p: cfg.p,
        replications: cfg.replications,
        seed: cfg.seed,
    };
    dcfg.validate()?;
    let symmetry = symmetry_ratio_diag(&null_w, &t_grid)?;
    let indicator = indicator_approx_diag(&null_w, &t_grid, opts.min_freq)?;
    let localization = match &tails {
        Some(t) if a_n > 0 => Some(localization_from_thresholds(
            &result.thresholds(),
            &dcfg,
            t,
        )?),
        _ => None,
    };
    Ok(CellDiagnostics {
        cell,
        null_count: h0.len(),
        t_grid,
        symmetry,
        indicator,
        localization,
    })
}

/// Runs every cell with statistics kept, then evaluates the symmetry,
/// indicator and localization diagnostics on the null features.
pub fn run_diagnose(cfg: &RunConfig) -> Result<RunReport> {
    let mut cfg = cfg.clone();
    for c in &mut cfg.cells {
        c.keep_statistics = true;
    }
    cfg.validate()?;
    let (results, timing) = run_cells(&cfg.cells)?;
    let diagnostics = results
        .iter()
        .enumerate()
        .map(|(i, r)| diagnose_cell(i, r, &cfg.diagnostics))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        command: "diagnose",
        provenance: provenance(&cfg),
        cells: cell_reports(results),
        diagnostics: Some(diagnostics),
        timing,
    })
}
