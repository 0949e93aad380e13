//! CSV ingestion with columns `id, arm, stratum (optional), outcome`.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{OutcomeTable, Participant};

/// How raw CSV values map onto an outcome table.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub treated_label: String,
    pub control_label: String,
    pub log10: bool,
    /// Limit of detection on the analysis scale.
    pub lod: Option<f64>,
    pub stratum_column: String,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            treated_label: "1".into(),
            control_label: "0".into(),
            log10: false,
            lod: None,
            stratum_column: "stratum".into(),
        }
    }
}

pub fn ingest_csv(path: &Path, opts: &IngestOptions) -> Result<OutcomeTable> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file, opts)
}

/// Data rows are numbered from 1 in diagnostics; the header is not counted.
pub fn ingest_reader(reader: impl Read, opts: &IngestOptions) -> Result<OutcomeTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::EmptyInput("no header row".into()));
    }
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let id_col = col("id").ok_or_else(|| Error::MissingColumn("id".into()))?;
    let arm_col = col("arm").ok_or_else(|| Error::MissingColumn("arm".into()))?;
    let out_col = col("outcome").ok_or_else(|| Error::MissingColumn("outcome".into()))?;
    let stratum_col = col(&opts.stratum_column);

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let arm = field(arm_col);
        let treated = if arm == opts.treated_label {
            true
        } else if arm == opts.control_label {
            false
        } else {
            return Err(Error::Parse {
                row,
                message: format!(
                    "arm '{arm}' is neither the treated label '{}' nor the control label '{}'",
                    opts.treated_label, opts.control_label
                ),
            });
        };
        let raw = field(out_col);
        let mut outcome: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::Parse {
                row,
                message: format!("outcome '{raw}' is not a finite number"),
            })?;
        if opts.log10 {
            if outcome <= 0.0 {
                return Err(Error::Parse {
                    row,
                    message: format!("outcome {outcome} has no base-10 logarithm"),
                });
            }
            outcome = outcome.log10();
        }
        let stratum = stratum_col
            .map(|c| field(c).to_string())
            .filter(|s| !s.is_empty());
        rows.push(Participant {
            id: field(id_col).to_string(),
            treated,
            stratum,
            outcome,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("no data rows".into()));
    }
    Ok(OutcomeTable::new(rows, opts.lod))
}
