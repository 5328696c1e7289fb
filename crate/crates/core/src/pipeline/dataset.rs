//! Dataset records, JSONL loading, and the `sample` subcommand's
//! random / top-by-field selection.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::errors::{Error, Result};
use crate::task::Task;

/// One evaluation prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub prompt: String,
    pub task: Task,
}

/// Filesystem-safe form of a record id, used in artifact names. Ids must
/// stay unique after sanitization; loading enforces that.
pub fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Parse a dataset from JSONL text, collecting every violation.
pub fn parse_dataset(jsonl: &str) -> Result<Vec<DatasetRecord>> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (lineno, line) in jsonl.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<DatasetRecord>(line) {
            Ok(record) => {
                if record.prompt.is_empty() {
                    errors.push(format!("line {}: prompt must be non-empty", lineno + 1));
                }
                if record.id.is_empty() {
                    errors.push(format!("line {}: id must be non-empty", lineno + 1));
                }
                records.push(record);
            }
            Err(e) => errors.push(format!("line {}: {e}", lineno + 1)),
        }
    }
    if records.is_empty() && errors.is_empty() {
        errors.push("dataset contains no records".to_string());
    }

    let mut seen = std::collections::BTreeMap::new();
    for record in &records {
        if let Some(previous) = seen.insert(sanitize_id(&record.id), record.id.clone()) {
            errors.push(format!(
                "duplicate id {:?} (collides with {:?} after sanitization)",
                record.id, previous
            ));
        }
    }

    if errors.is_empty() {
        Ok(records)
    } else {
        Err(Error::InvalidConfig(errors))
    }
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

/// Selection mode for [`sample_jsonl`].
#[derive(Debug, Clone)]
pub enum SampleMode {
    /// Seeded uniform sample without replacement, in shuffled order.
    Random { seed: u64 },
    /// The `n` records with the largest numeric `field`, descending; ties
    /// keep input order.
    TopByField { field: String },
}

/// Draw `n` records from arbitrary JSONL. Lines are treated as opaque JSON
/// objects so source datasets need not match the pipeline's record schema.
pub fn sample_jsonl(input: &str, n: usize, mode: &SampleMode) -> Result<Vec<serde_json::Value>> {
    let mut rows = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| Error::invalid_input(format!("line {}: {e}", lineno + 1)))?;
        rows.push(value);
    }
    if rows.is_empty() {
        return Err(Error::invalid_input("input contains no records"));
    }

    match mode {
        SampleMode::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            rows.shuffle(&mut rng);
            rows.truncate(n);
            Ok(rows)
        }
        SampleMode::TopByField { field } => {
            let mut keyed = Vec::with_capacity(rows.len());
            for (index, row) in rows.into_iter().enumerate() {
                let value = row
                    .get(field)
                    .and_then(serde_json::Value::as_f64)
                    .ok_or_else(|| {
                        Error::invalid_input(format!(
                            "record {} is missing numeric field {field:?}",
                            index + 1
                        ))
                    })?;
                keyed.push((value, index, row));
            }
            keyed.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.1.cmp(&b.1))
            });
            Ok(keyed.into_iter().take(n).map(|(_, _, row)| row).collect())
        }
    }
}
