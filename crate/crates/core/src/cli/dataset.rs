//! Trial data files: comma-delimited, header `id,time,status,arm[,...]`,
//! `status` and `arm` in `{0, 1}`. Extra columns may carry stratum labels.

use std::io::{Read, Write};

use thiserror::Error;

use crate::model::Arm;
use crate::simulator::TrialRecord;

const REQUIRED: [&str; 4] = ["id", "time", "status", "arm"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("empty data file")]
    Empty,
    #[error("header must start with `id,time,status,arm`; got `{0}`")]
    Header(String),
    #[error("no column named `{0}`")]
    MissingColumn(String),
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads trial records. `stratum_column` names the column copied into
/// [`TrialRecord::stratum`]. Row numbers in errors count the header as row 1.
pub fn read_trial_data<R: Read>(input: R, stratum_column: Option<&str>) -> Result<Vec<TrialRecord>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(DataError::Empty);
    }
    if header.len() < 4 || header[..4] != REQUIRED {
        return Err(DataError::Header(header.join(",")));
    }
    let stratum_index = match stratum_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .filter(|&i| i >= 4)
                .ok_or_else(|| DataError::MissingColumn(name.to_string()))?,
        ),
        None => None,
    };
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| DataError::Row {
            row,
            reason: e.to_string(),
        })?;
        let bad = |reason: String| DataError::Row { row, reason };
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(bad("empty id".into()));
        }
        let time: f64 = rec[1]
            .parse()
            .map_err(|_| bad(format!("time is not a number: `{}`", &rec[1])))?;
        if !(time.is_finite() && time > 0.0) {
            return Err(bad(format!("time must be finite and > 0, got {}", &rec[1])));
        }
        let event = match &rec[2] {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("status must be 0 or 1, got `{other}`"))),
        };
        let arm = match &rec[3] {
            "0" => Arm::Control,
            "1" => Arm::Treated,
            other => return Err(bad(format!("arm must be 0 or 1, got `{other}`"))),
        };
        let stratum = match stratum_index {
            Some(j) => {
                let label = rec.get(j).unwrap_or("");
                if label.is_empty() {
                    return Err(bad(format!("empty `{}`", header[j])));
                }
                Some(label.to_string())
            }
            None => None,
        };
        records.push(TrialRecord {
            id,
            time,
            event,
            arm,
            stratum,
        });
    }
    if records.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(records)
}

/// Writes records; a `stratum` column is added when any record carries one.
pub fn write_trial_data<W: Write>(out: W, records: &[TrialRecord]) -> Result<(), DataError> {
    let with_stratum = records.iter().any(|r| r.stratum.is_some());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header = REQUIRED.to_vec();
    if with_stratum {
        header.push("stratum");
    }
    w.write_record(&header)?;
    for r in records {
        let mut rec = vec![
            r.id.clone(),
            r.time.to_string(),
            u8::from(r.event).to_string(),
            r.arm.as_u8().to_string(),
        ];
        if with_stratum {
            rec.push(r.stratum.clone().unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
