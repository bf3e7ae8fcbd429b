//! CSV ingestion, mutation-panel preprocessing and row subsampling.

use std::io::{Read, Write};
use std::path::Path;

use knockoff_core::{DataMatrix, ResponseVector};
use nalgebra::DVector;
use rand::Rng;

use crate::error::{CliError, Result};
use crate::report::fmt_f64;

/// Covariates plus an optional response whose entries may be missing.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DataMatrix,
    pub y: Option<Vec<Option<f64>>>,
}

impl Dataset {
    /// Drops rows with a missing response and returns complete data.
    pub fn complete_rows(&self) -> Result<(DataMatrix, ResponseVector)> {
        let y = self
            .y
            .as_ref()
            .ok_or_else(|| CliError::Data("dataset has no `y` column".into()))?;
        let keep: Vec<usize> = (0..y.len()).filter(|&i| y[i].is_some()).collect();
        if keep.is_empty() {
            return Err(CliError::AllRowsDropped);
        }
        let values: Vec<f64> = keep.iter().map(|&i| y[i].unwrap()).collect();
        Ok((self.x.select_rows(&keep), ResponseVector::from_vec(values)?))
    }
}

fn is_missing(token: &str) -> bool {
    token.is_empty() || token.eq_ignore_ascii_case("na")
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|source| CliError::ReadData {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file)
}

/// Parses a header row followed by numeric rows. A column named `y` (any
/// case) is the response; empty or `NA` response cells are missing.
pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("bad header row: {e}")))?
        .clone();
    let y_col = headers.iter().position(|h| h.eq_ignore_ascii_case("y"));
    let x_cols: Vec<usize> = (0..headers.len()).filter(|c| Some(*c) != y_col).collect();
    if x_cols.is_empty() {
        return Err(CliError::NoNumericColumns);
    }
    let names: Vec<String> = x_cols.iter().map(|&c| headers[c].to_string()).collect();

    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<Option<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CliError::Data(format!("row {row}: {e}")))?;
        for &c in &x_cols {
            let token = &record[c];
            match token.parse::<f64>() {
                Ok(v) if v.is_finite() => xs.push(v),
                _ => {
                    return Err(CliError::Parse {
                        row,
                        col: c + 1,
                        token: token.to_string(),
                    })
                }
            }
        }
        if let Some(c) = y_col {
            let token = &record[c];
            if is_missing(token) {
                ys.push(None);
            } else {
                match token.parse::<f64>() {
                    Ok(v) if v.is_finite() => ys.push(Some(v)),
                    _ => {
                        return Err(CliError::Parse {
                            row,
                            col: c + 1,
                            token: token.to_string(),
                        })
                    }
                }
            }
        }
    }
    let n = xs.len() / x_cols.len();
    if n == 0 {
        return Err(CliError::Data("dataset has no rows".into()));
    }
    let x = DataMatrix::from_row_slice(n, x_cols.len(), &xs)?.with_col_names(names)?;
    Ok(Dataset {
        x,
        y: y_col.map(|_| ys),
    })
}

/// Writes `x` (and `y` as a trailing `y` column) with 17 significant digits;
/// missing responses become `NA`.
pub fn write_csv<W: Write>(out: W, x: &DataMatrix, y: Option<&[Option<f64>]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..x.cols()).map(|j| x.col_name(j)).collect();
    if y.is_some() {
        header.push("y".into());
    }
    let err = |e: csv::Error| CliError::Data(format!("csv write: {e}"));
    w.write_record(&header).map_err(err)?;
    for i in 0..x.rows() {
        let mut row: Vec<String> = x.values().row(i).iter().map(|v| fmt_f64(*v)).collect();
        if let Some(y) = y {
            row.push(y[i].map_or_else(|| "NA".to_string(), fmt_f64));
        }
        w.write_record(&row).map_err(err)?;
    }
    w.flush()
        .map_err(|e| CliError::Data(format!("csv write: {e}")))?;
    Ok(())
}

/// Outcome of [`preprocess_mutation_panel`] with the bookkeeping needed
/// for reports.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub x: DataMatrix,
    pub y: ResponseVector,
    pub dropped_rows: usize,
    pub dropped_columns: Vec<String>,
}

/// Drops rows with a missing response, then columns with fewer than
/// `min_count` ones among the remaining rows.
pub fn preprocess_mutation_panel(
    x: &DataMatrix,
    y: &[Option<f64>],
    min_count: usize,
) -> Result<Preprocessed> {
    if y.len() != x.rows() {
        return Err(CliError::Data(format!(
            "response has {} entries for {} rows",
            y.len(),
            x.rows()
        )));
    }
    for (j, col) in x.values().column_iter().enumerate() {
        if col.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(CliError::NotBinary {
                column: x.col_name(j),
            });
        }
    }
    let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i].is_some()).collect();
    if rows.is_empty() {
        return Err(CliError::AllRowsDropped);
    }
    let kept = x.select_rows(&rows);
    let (cols, dropped): (Vec<usize>, Vec<usize>) =
        (0..x.cols()).partition(|&j| kept.values().column(j).sum() >= min_count as f64);
    if cols.is_empty() {
        return Err(CliError::AllColumnsDropped);
    }
    let yv = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i].unwrap()));
    Ok(Preprocessed {
        x: kept.select_cols(&cols),
        y: ResponseVector::new(yv)?,
        dropped_rows: y.len() - rows.len(),
        dropped_columns: dropped.iter().map(|&j| x.col_name(j)).collect(),
    })
}

/// `m` rows drawn uniformly without replacement, in draw order.
pub fn subsample<R: Rng + ?Sized>(
    x: &DataMatrix,
    y: &ResponseVector,
    m: usize,
    rng: &mut R,
) -> Result<(DataMatrix, ResponseVector)> {
    let n = x.rows();
    if m > n {
        return Err(CliError::MTooLarge { m, n });
    }
    let rows = rand::seq::index::sample(rng, n, m).into_vec();
    Ok((x.select_rows(&rows), y.select_rows(&rows)))
}

/// Column names listed in a ground-truth file, separated by commas or
/// whitespace.
pub fn read_truth_names(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::ReadData {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect())
}
