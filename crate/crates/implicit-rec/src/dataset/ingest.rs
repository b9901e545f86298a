//! CSV ingestion with a configurable column mapping.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::matrix::InteractionRecord;
use crate::error::{Error, Result};

/// Column names expected in the input header. The user and item columns are
/// required; count and time columns are used when the header has them and
/// silently fall back (count=1, no timestamps) otherwise.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(default)]
pub struct CsvSchema {
    pub user_col: String,
    pub item_col: String,
    pub count_col: Option<String>,
    pub time_col: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            user_col: "user".to_string(),
            item_col: "item".to_string(),
            count_col: Some("count".to_string()),
            time_col: Some("timestamp".to_string()),
        }
    }
}

/// Row counters from one ingest pass. Skipped rows had an empty key, a
/// non-positive count, or an unparsable count.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_skipped: usize,
}

pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<(Vec<InteractionRecord>, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                Error::io(path.display().to_string(), std::io::Error::other(e.to_string()))
            }
            _ => Error::Csv(e),
        })?;

    let headers = reader.headers()?.clone();
    let position = |name: &str| headers.iter().position(|h| h == name);

    let user_pos = position(&schema.user_col).ok_or_else(|| Error::MissingColumn {
        column: schema.user_col.clone(),
    })?;
    let item_pos = position(&schema.item_col).ok_or_else(|| Error::MissingColumn {
        column: schema.item_col.clone(),
    })?;
    let count_pos = schema.count_col.as_deref().and_then(position);
    let time_pos = schema.time_col.as_deref().and_then(position);

    let mut records = Vec::new();
    let mut report = IngestReport::default();
    for row in reader.records() {
        let row = row?;
        report.rows_read += 1;
        let user_key = row.get(user_pos).unwrap_or("").trim();
        let item_key = row.get(item_pos).unwrap_or("").trim();
        if user_key.is_empty() || item_key.is_empty() {
            report.rows_skipped += 1;
            continue;
        }
        let count = match count_pos {
            None => 1,
            Some(pos) => match row.get(pos).unwrap_or("").trim().parse::<i64>() {
                Ok(c) if c >= 1 => c as u32,
                _ => {
                    report.rows_skipped += 1;
                    continue;
                }
            },
        };
        let timestamp = time_pos
            .and_then(|pos| row.get(pos))
            .and_then(|field| field.trim().parse::<i64>().ok());
        records.push(InteractionRecord {
            user_key: user_key.to_string(),
            item_key: item_key.to_string(),
            count,
            timestamp,
        });
    }
    Ok((records, report))
}
