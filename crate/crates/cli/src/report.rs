//! Benchmark reports: a CSV of per-image metrics plus a JSON sidecar with
//! the run metadata.

use std::path::{Path, PathBuf};

use fftrelu::SolverConfig;
use serde::Serialize;

use crate::CliError;

/// CSV header, in column order.
pub const REPORT_COLUMNS: [&str; 7] = [
    "image",
    "kernel",
    "psnr_db",
    "ssim",
    "error_ratio",
    "kernel_sim",
    "seconds",
];

/// Label of the aggregate row.
pub const AGGREGATE_LABEL: &str = "mean";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub image: String,
    pub kernel: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub error_ratio: f64,
    pub kernel_sim: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub image: String,
    pub kernel: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct HostInfo {
    pub os: &'static str,
    pub arch: &'static str,
    pub hostname: Option<String>,
    pub available_threads: usize,
}

impl HostInfo {
    pub fn current() -> Self {
        let hostname = std::fs::read_to_string("/etc/hostname")
            .ok()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .or_else(|| std::env::var("HOSTNAME").ok());
        HostInfo {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            hostname,
            available_threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
    pub failures: Vec<Failure>,
    pub config: SolverConfig,
    pub sequential: bool,
    /// Seconds since the Unix epoch when the run started.
    pub timestamp: u64,
    pub host: HostInfo,
}

impl RunReport {
    /// Column means over the successful rows, or `None` if there are none.
    pub fn aggregate(&self) -> Option<ReportRow> {
        if self.rows.is_empty() {
            return None;
        }
        let n = self.rows.len() as f64;
        let mean = |f: fn(&ReportRow) -> f64| self.rows.iter().map(f).sum::<f64>() / n;
        Some(ReportRow {
            image: AGGREGATE_LABEL.into(),
            kernel: String::new(),
            psnr_db: mean(|r| r.psnr_db),
            ssim: mean(|r| r.ssim),
            error_ratio: mean(|r| r.error_ratio),
            kernel_sim: mean(|r| r.kernel_sim),
            seconds: mean(|r| r.seconds),
        })
    }

    /// Writes the CSV (rows then the aggregate row) and the JSON sidecar
    /// next to it; returns the sidecar path.
    pub fn write(&self, csv_path: &Path) -> Result<PathBuf, CliError> {
        let io_err =
            |e: &dyn std::fmt::Display, p: &Path| CliError::Output(format!("cannot write {}: {e}", p.display()));
        let mut w = csv::Writer::from_path(csv_path).map_err(|e| io_err(&e, csv_path))?;
        w.write_record(REPORT_COLUMNS).map_err(|e| io_err(&e, csv_path))?;
        for row in self.rows.iter().chain(self.aggregate().as_ref()) {
            w.write_record([
                row.image.clone(),
                row.kernel.clone(),
                row.psnr_db.to_string(),
                row.ssim.to_string(),
                row.error_ratio.to_string(),
                row.kernel_sim.to_string(),
                row.seconds.to_string(),
            ])
            .map_err(|e| io_err(&e, csv_path))?;
        }
        w.flush().map_err(|e| io_err(&e, csv_path))?;

        let json_path = csv_path.with_extension("json");
        #[derive(Serialize)]
        struct Sidecar<'a> {
            #[serde(flatten)]
            report: &'a RunReport,
            aggregate: Option<ReportRow>,
        }
        let text = serde_json::to_string_pretty(&Sidecar {
            report: self,
            aggregate: self.aggregate(),
        })
        .map_err(|e| io_err(&e, &json_path))?;
        std::fs::write(&json_path, text).map_err(|e| io_err(&e, &json_path))?;
        Ok(json_path)
    }
}

/// Reads a report CSV back as rows (the aggregate row included).
pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>, CliError> {
    let err = |e: &dyn std::fmt::Display| CliError::Input(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| err(&e))?;
    let header: Vec<String> = r.headers().map_err(|e| err(&e))?.iter().map(String::from).collect();
    if header != REPORT_COLUMNS {
        return Err(err(&format!("unexpected header {header:?}")));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| err(&e))?;
            let num = |i: usize| rec[i].parse::<f64>().map_err(|e| err(&e));
            Ok(ReportRow {
                image: rec[0].to_string(),
                kernel: rec[1].to_string(),
                psnr_db: num(2)?,
                ssim: num(3)?,
                error_ratio: num(4)?,
                kernel_sim: num(5)?,
                seconds: num(6)?,
            })
        })
        .collect()
}
