//! Report assembly and writing.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use knockoff_core::simulation::{CellResult, CovariateLaw, ResponseModel};
use knockoff_core::{MomentOrigin, ThresholdRule};
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: &str = "1.0.0";

/// 17 significant digits, which round-trips every `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NA".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), fmt_f64)
}

/// Pretty JSON whose numbers carry 17 significant digits.
struct SigFigs(PrettyFormatter<'static>);

impl Formatter for SigFigs {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigFigs(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("report types serialize");
    out.push(b'\n');
    out
}

/// SHA-256 of the canonical (compact) JSON form of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// `"1"` / `"2"` for the linear and nonlinear response, `"null"` otherwise.
pub fn setting_label(model: ResponseModel) -> &'static str {
    match model {
        ResponseModel::Linear => "1",
        ResponseModel::TanhNonlinear => "2",
        ResponseModel::Null => "null",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    /// Wall-clock seconds per cell, in cell order.
    pub cells: Vec<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub cell: usize,
    pub setting: &'static str,
    #[serde(flatten)]
    pub result: CellResult,
}

pub const CELL_COLUMNS: [&str; 16] = [
    "cell",
    "n",
    "p",
    "rho",
    "setting",
    "covariate_law",
    "statistic",
    "rule",
    "q",
    "replications",
    "seed",
    "moments",
    "mean_fdr",
    "fdr_se",
    "mean_power",
    "power_se",
];

fn law_label(law: CovariateLaw) -> String {
    match law {
        CovariateLaw::BinaryThreshold => "binary_threshold".into(),
        CovariateLaw::Gaussian => "gaussian".into(),
        CovariateLaw::Rademacher => "rademacher".into(),
        CovariateLaw::StudentT { dof } => format!("student_t({dof})"),
    }
}

fn moments_label(m: MomentOrigin) -> String {
    match m {
        MomentOrigin::Analytic => "analytic".into(),
        MomentOrigin::Estimated { train_size } => format!("estimated({train_size})"),
    }
}

fn rule_label(rule: ThresholdRule) -> &'static str {
    match rule {
        ThresholdRule::Knockoff => "knockoff",
        ThresholdRule::KnockoffPlus => "knockoff_plus",
    }
}

pub fn cell_row(c: &CellReport) -> Vec<String> {
    let r = &c.result;
    let cfg = &r.config;
    vec![
        c.cell.to_string(),
        cfg.n.to_string(),
        cfg.p.to_string(),
        fmt_f64(cfg.rho),
        c.setting.to_string(),
        law_label(cfg.covariate_law),
        cfg.statistic.short_name().to_string(),
        rule_label(cfg.rule).to_string(),
        fmt_f64(cfg.q),
        cfg.replications.to_string(),
        cfg.seed.to_string(),
        moments_label(r.moments),
        fmt_f64(r.mean_fdr),
        fmt_f64(r.fdr_se),
        fmt_opt(r.mean_power),
        fmt_opt(r.power_se),
    ]
}

pub fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct Written {
    pub json: PathBuf,
    pub csv: PathBuf,
}

fn create_new(path: &Path) -> io::Result<File> {
    OpenOptions::new().write(true).create_new(true).open(path)
}

/// Writes `report.json` and `report.csv` under `dir`. Existing reports are
/// never touched: if either name is taken, both files get a
/// `report-<unix seconds>[-k]` stem instead.
pub fn write_outputs(dir: &Path, json: &[u8], csv: &[u8]) -> Result<Written> {
    let werr = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Write { path, source }
    };
    std::fs::create_dir_all(dir).map_err(werr(dir))?;
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let mut attempt = 0usize;
    loop {
        let stem = match attempt {
            0 => "report".to_string(),
            1 => format!("report-{secs}"),
            k => format!("report-{secs}-{}", k - 1),
        };
        attempt += 1;
        let json_path = dir.join(format!("{stem}.json"));
        let csv_path = dir.join(format!("{stem}.csv"));
        if json_path.exists() || csv_path.exists() {
            continue;
        }
        let jf = match create_new(&json_path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(werr(&json_path)(e)),
        };
        let cf = match create_new(&csv_path) {
            Ok(f) => f,
            Err(e) => {
                let _ = std::fs::remove_file(&json_path);
                if e.kind() == io::ErrorKind::AlreadyExists {
                    continue;
                }
                return Err(werr(&csv_path)(e));
            }
        };
        let mut jw = BufWriter::new(jf);
        jw.write_all(json)
            .and_then(|_| jw.flush())
            .map_err(werr(&json_path))?;
        let mut cw = BufWriter::new(cf);
        cw.write_all(csv)
            .and_then(|_| cw.flush())
            .map_err(werr(&csv_path))?;
        return Ok(Written {
            json: json_path,
            csv: csv_path,
        });
    }
}
