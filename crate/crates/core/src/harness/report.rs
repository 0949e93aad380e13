//! Tabular and JSON reports. Column order is fixed; non-finite limits are
//! written as `inf` / `-inf` in both formats so files parse back exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::config::OutputFormat;

/// Serde adapter writing non-finite floats as strings.
pub mod limit {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.trim().parse::<f64>().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub method: String,
    pub inference: String,
    pub rank: usize,
    pub fraction: f64,
    #[serde(with = "limit")]
    pub lower_limit: f64,
    #[serde(with = "limit")]
    pub upper_limit: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    #[serde(with = "limit")]
    pub threshold: f64,
    pub lower_count: usize,
    pub n: usize,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub gamma: f64,
    pub rank: usize,
    pub fraction: f64,
    #[serde(with = "limit")]
    pub lower_limit: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplificationRow {
    pub gamma: f64,
    pub lambda: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub inference: String,
    pub n1: usize,
    pub n0: usize,
    pub reps: usize,
    pub mean_ss: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianRow {
    pub method: String,
    pub inference: String,
    pub rank: usize,
    pub fraction: f64,
    #[serde(with = "limit")]
    pub median_lower_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SateRow {
    pub method: String,
    pub estimate: f64,
    #[serde(with = "limit")]
    pub lower_limit: f64,
    #[serde(with = "limit")]
    pub upper_limit: f64,
    pub level: f64,
}

/// Sections absent from a command's output are `None`; present but empty
/// sections still produce a header-only CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<ProfileRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<CountRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<Vec<SensitivityRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplification: Option<Vec<AmplificationRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation_summary: Option<Vec<SummaryRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation_medians: Option<Vec<MedianRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sate: Option<Vec<SateRow>>,
}

pub const PROFILE_HEADER: [&str; 7] = [
    "method",
    "inference",
    "rank",
    "fraction",
    "lower_limit",
    "upper_limit",
    "level",
];
pub const COUNT_HEADER: [&str; 4] = ["threshold", "lower_count", "n", "level"];
pub const SENSITIVITY_HEADER: [&str; 5] = ["gamma", "rank", "fraction", "lower_limit", "level"];
pub const AMPLIFICATION_HEADER: [&str; 3] = ["gamma", "lambda", "delta"];
pub const SUMMARY_HEADER: [&str; 7] = [
    "method",
    "inference",
    "n1",
    "n0",
    "reps",
    "mean_ss",
    "coverage",
];
pub const MEDIAN_HEADER: [&str; 5] = [
    "method",
    "inference",
    "rank",
    "fraction",
    "median_lower_limit",
];
pub const SATE_HEADER: [&str; 5] = ["method", "estimate", "lower_limit", "upper_limit", "level"];

/// CSV text with the header always present.
pub fn to_csv<T: Serialize>(header: &[&str], rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn from_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()?)
}

fn write_section<T: Serialize>(
    dir: &Path,
    name: &str,
    header: &[&str],
    rows: &Option<Vec<T>>,
) -> Result<()> {
    if let Some(rows) = rows {
        fs::write(dir.join(name), to_csv(header, rows)?)?;
    }
    Ok(())
}

/// Writes the report's sections into `dir`, creating it if needed.
pub fn emit_report(report: &Report, dir: &Path, format: OutputFormat) -> Result<()> {
    fs::create_dir_all(dir)?;
    if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
        write_section(dir, "profile.csv", &PROFILE_HEADER, &report.profile)?;
        write_section(dir, "counts.csv", &COUNT_HEADER, &report.counts)?;
        write_section(
            dir,
            "sensitivity.csv",
            &SENSITIVITY_HEADER,
            &report.sensitivity,
        )?;
        write_section(
            dir,
            "amplification.csv",
            &AMPLIFICATION_HEADER,
            &report.amplification,
        )?;
        write_section(
            dir,
            "simulation_summary.csv",
            &SUMMARY_HEADER,
            &report.simulation_summary,
        )?;
        write_section(
            dir,
            "simulation_medians.csv",
            &MEDIAN_HEADER,
            &report.simulation_medians,
        )?;
        write_section(dir, "sate.csv", &SATE_HEADER, &report.sate)?;
    }
    if matches!(format, OutputFormat::Json | OutputFormat::Both) {
        let mut text = serde_json::to_string_pretty(report)?;
        text.push('\n');
        fs::write(dir.join("report.json"), text)?;
    }
    Ok(())
}
