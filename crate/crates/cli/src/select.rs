//! The `select` command: knockoff selection on a dataset read from CSV.

use std::path::{Path, PathBuf};
use std::time::Instant;

use knockoff_core::knockoff_gen::{estimated_model, KnockoffModel};
use knockoff_core::rng::{stream, Purpose};
use knockoff_core::selection::{false_discovery_proportion, select_with};
use knockoff_core::simulation::center_pipeline;
use knockoff_core::statistics::{compute_stats, DebiasedLassoConfig};
use knockoff_core::{
    gaussian_knockoffs, DataMatrix, GroundTruth, RMethod, ResponseVector, StatKind, ThresholdRule,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{load_csv, preprocess_mutation_panel, read_truth_names, subsample};
use crate::error::{CliError, Result};
use crate::report::{
    config_hash, csv_bytes, fmt_f64, to_json, write_outputs, Timing, Written, SCHEMA_VERSION,
};

#[derive(Debug, Clone, Serialize)]
pub struct SelectOptions {
    pub data: PathBuf,
    /// File listing the names of the relevant columns.
    pub truth: Option<PathBuf>,
    pub statistic: StatKind,
    pub q: f64,
    pub rule: ThresholdRule,
    /// Apply the mutation-panel preprocessing (binary covariates, rare
    /// columns dropped). Otherwise only rows with a missing response go.
    pub panel: bool,
    pub min_count: usize,
    /// Rows drawn per replication; all rows when absent.
    pub subsample: Option<usize>,
    pub replications: usize,
    pub seed: u64,
    /// Added to the diagonal of the estimated covariance.
    pub ridge: f64,
    pub r_method: Option<RMethod>,
    pub center: bool,
    pub debiased_lasso: DebiasedLassoConfig,
}

impl SelectOptions {
    pub fn new(data: impl Into<PathBuf>) -> Self {
        Self {
            data: data.into(),
            truth: None,
            statistic: StatKind::MarginalCorr,
            q: 0.2,
            rule: ThresholdRule::Knockoff,
            panel: false,
            min_count: 3,
            subsample: None,
            replications: 1,
            seed: 1,
            ridge: 0.0,
            r_method: None,
            center: true,
            debiased_lasso: DebiasedLassoConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(knockoff_core::Error::InvalidQ(self.q).into());
        }
        if self.replications == 0 {
            return Err(CliError::Config("replications must be positive".into()));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(CliError::Config("ridge must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DataSummary {
    pub rows: usize,
    pub columns: Vec<String>,
    pub dropped_rows: usize,
    pub dropped_columns: Vec<String>,
    /// Ground-truth names that match no remaining column.
    pub unmatched_truth: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectRun {
    pub rows: usize,
    /// `null` when nothing can be selected.
    pub threshold: Option<f64>,
    pub selected: Vec<String>,
    pub w: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fdp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectReport {
    pub schema_version: &'static str,
    pub command: &'static str,
    pub options: SelectOptions,
    pub config_sha256: String,
    pub data: DataSummary,
    pub runs: Vec<SelectRun>,
    /// Fraction of runs selecting each column, in column order.
    pub selection_frequency: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_fdr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_power: Option<f64>,
    pub timing: Timing,
}

impl SelectReport {
    pub fn csv(&self) -> Vec<u8> {
        let header: Vec<String> = [
            "run",
            "rows",
            "threshold",
            "selected_count",
            "fdp",
            "power",
            "selected",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), fmt_f64);
        let rows: Vec<Vec<String>> = self
            .runs
            .iter()
            .enumerate()
            .map(|(i, r)| {
                vec![
                    i.to_string(),
                    r.rows.to_string(),
                    r.threshold.map_or_else(|| "inf".to_string(), fmt_f64),
                    r.selected.len().to_string(),
                    opt(r.fdp),
                    opt(r.power),
                    r.selected.join(";"),
                ]
            })
            .collect();
        csv_bytes(&header, &rows)
    }

    pub fn write(&self, dir: &Path) -> Result<Written> {
        write_outputs(dir, &to_json(self), &self.csv())
    }
}

struct Prepared {
    x: DataMatrix,
    y: ResponseVector,
    dropped_rows: usize,
    dropped_columns: Vec<String>,
}

fn prepare(opts: &SelectOptions) -> Result<Prepared> {
    let data = load_csv(&opts.data)?;
    if opts.panel {
        let y = data
            .y
            .as_ref()
            .ok_or_else(|| CliError::Data("dataset has no `y` column".into()))?;
        let p = preprocess_mutation_panel(&data.x, y, opts.min_count)?;
        Ok(Prepared {
            x: p.x,
            y: p.y,
            dropped_rows: p.dropped_rows,
            dropped_columns: p.dropped_columns,
        })
    } else {
        let (x, y) = data.complete_rows()?;
        Ok(Prepared {
            dropped_rows: data.x.rows() - x.rows(),
            x,
            y,
            dropped_columns: Vec::new(),
        })
    }
}

fn one_run(
    opts: &SelectOptions,
    prep: &Prepared,
    model: &KnockoffModel,
    truth: Option<&GroundTruth>,
    r: usize,
) -> Result<SelectRun> {
    let (x, y) = match opts.subsample {
        Some(m) => subsample(
            &prep.x,
            &prep.y,
            m,
            &mut stream(opts.seed, 0, Purpose::Subsample, r as u64),
        )?,
        None => (prep.x.clone(), prep.y.clone()),
    };
    let mut rng = stream(opts.seed, 0, Purpose::Replication, r as u64);
    let xhat = gaussian_knockoffs(&x, model, &mut rng)?;
    let stats = if opts.center {
        let (xc, xhatc, yc) = center_pipeline(&x, &xhat, &y, model.cov().mean())?;
        compute_stats(opts.statistic, &xc, &xhatc, &yc, &opts.debiased_lasso)?
    } else {
        compute_stats(opts.statistic, &x, &xhat, &y, &opts.debiased_lasso)?
    };
    let w: Vec<f64> = stats.w.iter().copied().collect();
    let sel = match truth {
        Some(t) if !t.h1().is_empty() => select_with(&w, opts.q, Some(t), opts.rule)?,
        _ => select_with(&w, opts.q, None, opts.rule)?,
    };
    let fdp = match truth {
        Some(t) if t.h1().is_empty() => Some(false_discovery_proportion(&sel.selected, t)),
        _ => sel.fdp,
    };
    Ok(SelectRun {
        rows: x.rows(),
        threshold: sel.threshold.is_finite().then_some(sel.threshold),
        selected: sel.selected.iter().map(|&j| prep.x.col_name(j)).collect(),
        w,
        fdp,
        power: sel.power,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Preprocess, then per replication: optional subsample, knockoffs from the
/// moments of the full preprocessed data, statistics and selection.
pub fn run_select(opts: &SelectOptions) -> Result<SelectReport> {
    opts.validate()?;
    let start = Instant::now();
    let prep = prepare(opts)?;
    if let Some(m) = opts.subsample {
        if m > prep.x.rows() {
            return Err(CliError::MTooLarge {
                m,
                n: prep.x.rows(),
            });
        }
    }
    let columns: Vec<String> = (0..prep.x.cols()).map(|j| prep.x.col_name(j)).collect();
    let (truth, unmatched) = match &opts.truth {
        Some(path) => {
            let names = read_truth_names(path)?;
            let mut h1: Vec<usize> = names
                .iter()
                .filter_map(|n| columns.iter().position(|c| c == n))
                .collect();
            h1.sort_unstable();
            h1.dedup();
            let unmatched: Vec<String> =
                names.into_iter().filter(|n| !columns.contains(n)).collect();
            (Some(GroundTruth::new(columns.len(), h1, None)?), unmatched)
        }
        None => (None, Vec::new()),
    };
    let model = estimated_model(&prep.x, opts.r_method, opts.ridge)?;
    let runs = (0..opts.replications)
        .into_par_iter()
        .map(|r| one_run(opts, &prep, &model, truth.as_ref(), r))
        .collect::<Result<Vec<_>>>()?;

    let mut freq = vec![0.0; columns.len()];
    for run in &runs {
        for name in &run.selected {
            let j = columns
                .iter()
                .position(|c| c == name)
                .expect("selected column exists");
            freq[j] += 1.0 / runs.len() as f64;
        }
    }
    let fdps: Option<Vec<f64>> = runs.iter().map(|r| r.fdp).collect();
    let powers: Option<Vec<f64>> = runs.iter().map(|r| r.power).collect();
    let elapsed = start.elapsed().as_secs_f64();
    Ok(SelectReport {
        schema_version: SCHEMA_VERSION,
        command: "select",
        config_sha256: config_hash(opts),
        options: opts.clone(),
        data: DataSummary {
            rows: prep.x.rows(),
            columns,
            dropped_rows: prep.dropped_rows,
            dropped_columns: prep.dropped_columns.clone(),
            unmatched_truth: unmatched,
        },
        runs,
        selection_frequency: freq,
        mean_fdr: fdps.filter(|v| !v.is_empty()).map(|v| mean(&v)),
        mean_power: powers.filter(|v| !v.is_empty()).map(|v| mean(&v)),
        timing: Timing {
            cells: vec![elapsed],
            total: elapsed,
        },
    })
}
