//! CSV and JSON carriers for sweep results.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cnvb_core::train::{median_beta_by_width, ExperimentRecord};
use serde::Deserialize;

use crate::error::{io_err, Error, Result};

pub const CSV_HEADER: [&str; 8] = ["width", "W", "seed", "train_err", "test_err", "gap", "beta", "W_times_beta"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn csv_row(r: &ExperimentRecord) -> Vec<String> {
    vec![
        r.width.to_string(),
        r.params.to_string(),
        r.seed.to_string(),
        fmt_num(r.train_error),
        fmt_num(r.test_error),
        fmt_num(r.gap),
        fmt_num(r.beta),
        fmt_num(r.w_times_beta()),
    ]
}

fn json_records(records: &[ExperimentRecord]) -> String {
    let mut s = String::from("[\n");
    for (i, r) in records.iter().enumerate() {
        let row = csv_row(r);
        s.push_str("  {");
        for (k, (name, v)) in CSV_HEADER.iter().zip(&row).enumerate() {
            if k > 0 {
                s.push_str(", ");
            }
            let _ = write!(s, "\"{name}\": {v}");
        }
        let trace: Vec<String> = r.beta_trace.iter().map(|&b| fmt_num(b)).collect();
        let _ = write!(s, ", \"beta_trace\": [{}]}}", trace.join(", "));
        s.push_str(if i + 1 < records.len() { ",\n" } else { "\n" });
    }
    s.push_str("]\n");
    s
}

pub fn emit_report(records: &[ExperimentRecord], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if records.is_empty() {
        return Err(Error::Usage("no records to report".into()));
    }
    match format {
        ReportFormat::Csv => write_csv(path, &CSV_HEADER, records.iter().map(csv_row)),
        ReportFormat::Json => fs::write(path, json_records(records)).map_err(io_err(path)),
    }
}

/// One parsed line of a report CSV.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReportRow {
    pub width: usize,
    #[serde(rename = "W")]
    pub params: usize,
    pub seed: u64,
    pub train_err: f64,
    pub test_err: f64,
    pub gap: f64,
    pub beta: f64,
    #[serde(rename = "W_times_beta")]
    pub w_times_beta: f64,
}

pub fn read_report_csv(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub const FIGURE_FILES: [&str; 4] = ["gap_vs_w_beta.csv", "gap_vs_w.csv", "beta_vs_w.csv", "median_beta_vs_w.csv"];

/// Write the gap against `W * beta`, gap against `W`, and `beta` against `W`
/// datasets, plus the per-width median of `beta`, into `dir`.
pub fn emit_figures(records: &[ExperimentRecord], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if records.is_empty() {
        return Err(Error::Usage("no records to report".into()));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let tag = |r: &ExperimentRecord| [r.width.to_string(), r.seed.to_string()];
    write_csv(
        &dir.join(FIGURE_FILES[0]),
        &["W_times_beta", "gap", "width", "seed"],
        records.iter().map(|r| {
            let [w, s] = tag(r);
            vec![fmt_num(r.w_times_beta()), fmt_num(r.gap), w, s]
        }),
    )?;
    write_csv(
        &dir.join(FIGURE_FILES[1]),
        &["W", "gap", "width", "seed"],
        records.iter().map(|r| {
            let [w, s] = tag(r);
            vec![r.params.to_string(), fmt_num(r.gap), w, s]
        }),
    )?;
    write_csv(
        &dir.join(FIGURE_FILES[2]),
        &["W", "beta", "width", "seed"],
        records.iter().map(|r| {
            let [w, s] = tag(r);
            vec![r.params.to_string(), fmt_num(r.beta), w, s]
        }),
    )?;
    let medians = median_beta_by_width(records);
    write_csv(
        &dir.join(FIGURE_FILES[3]),
        &["width", "W", "median_beta"],
        medians.iter().map(|&(w, b)| {
            let params = records.iter().find(|r| r.width == w).map_or(0, |r| r.params);
            vec![w.to_string(), params.to_string(), fmt_num(b)]
        }),
    )
}
