//! Dataset manifests and CSV ingestion.
//!
//! A manifest names the CSV, the id/time/event columns, the feature columns
//! with their encodings, optional teacher columns, and the train/test split.
//! Loading drops (and counts) rows with a missing value in any used column,
//! maps ordinal and categorical strings through their encoding maps, and
//! min-max normalizes flagged numeric columns using train-row statistics
//! only, so test rows never influence the transform. Cells are treated as
//! missing when empty or one of NA, N/A, NaN, null (case-insensitive).

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::stream_rng;
use crate::survival::SurvivalOutcome;
use crate::table::FeatureTable;

/// How a feature column's raw strings become numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    /// Parsed as a number directly; may be min-max normalized.
    Numeric,
    /// Mapped through the encoding table; codes carry an order.
    Ordinal,
    /// Mapped through the encoding table; codes are nominal.
    Categorical,
}

/// One feature column declaration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: ColumnKind,
    /// Min-max normalize to [0, 1] using train-row min and max
    /// (numeric columns only).
    #[serde(default)]
    pub normalize: bool,
    /// Total mapping from observed category strings to codes
    /// (ordinal and categorical columns only).
    #[serde(default)]
    pub encoding: BTreeMap<String, f64>,
}

/// Declaration of a dataset: file, columns, encodings, and split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// CSV file; [`load_manifest`] resolves a relative path against the
    /// manifest's directory.
    pub csv_path: String,
    pub id_column: String,
    /// Survival time in days.
    pub time_column: String,
    /// Event indicator column holding 0 or 1.
    pub event_column: String,
    pub feature_columns: Vec<FeatureColumn>,
    /// Numeric columns treated as distillation targets.
    #[serde(default)]
    pub teacher_columns: Vec<String>,
    /// Column holding "train" or "test" per row; exclusive with
    /// `split_fraction`.
    #[serde(default)]
    pub split_column: Option<String>,
    /// Train fraction for a seeded random split; exclusive with
    /// `split_column`.
    #[serde(default)]
    pub split_fraction: Option<f64>,
    /// Seed for the `split_fraction` shuffle.
    #[serde(default)]
    pub split_seed: u64,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.feature_columns.is_empty() && self.teacher_columns.is_empty() {
            return Err(Error::InvalidConfig(
                "manifest declares neither feature nor teacher columns".into(),
            ));
        }
        match (&self.split_column, self.split_fraction) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "split_column and split_fraction are mutually exclusive".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidConfig(
                    "manifest needs split_column or split_fraction".into(),
                ))
            }
            (None, Some(f)) if !(f > 0.0 && f < 1.0) => {
                return Err(Error::InvalidConfig(format!(
                    "split_fraction must lie in (0, 1), got {f}"
                )))
            }
            _ => {}
        }
        let mut seen = std::collections::BTreeSet::new();
        for column in &self.feature_columns {
            if !seen.insert(column.name.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "feature column '{}' declared twice",
                    column.name
                )));
            }
            match column.kind {
                ColumnKind::Numeric => {
                    if !column.encoding.is_empty() {
                        return Err(Error::InvalidConfig(format!(
                            "numeric column '{}' must not carry an encoding map",
                            column.name
                        )));
                    }
                }
                ColumnKind::Ordinal | ColumnKind::Categorical => {
                    if column.encoding.is_empty() {
                        return Err(Error::InvalidConfig(format!(
                            "column '{}' needs an encoding map",
                            column.name
                        )));
                    }
                    if column.normalize {
                        return Err(Error::InvalidConfig(format!(
                            "encoded column '{}' cannot be min-max normalized",
                            column.name
                        )));
                    }
                }
            }
        }
        for teacher in &self.teacher_columns {
            if !seen.insert(teacher.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "column '{teacher}' declared as both feature and teacher, or twice"
                )));
            }
        }
        Ok(())
    }

    /// Declared codes of an ordinal column, for stage-baseline grouping.
    pub fn ordinal_codes(&self, name: &str) -> Option<Vec<f64>> {
        self.feature_columns
            .iter()
            .find(|c| c.name == name && c.kind == ColumnKind::Ordinal)
            .map(|c| {
                let mut codes: Vec<f64> = c.encoding.values().copied().collect();
                codes.sort_by(f64::total_cmp);
                codes.dedup();
                codes
            })
    }
}

/// Reads and validates a manifest, resolving a relative `csv_path` against
/// the manifest's own directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path)?;
    let mut manifest: DatasetManifest = toml::from_str(&text)?;
    manifest.validate()?;
    let csv = Path::new(&manifest.csv_path);
    if csv.is_relative() {
        if let Some(dir) = path.parent() {
            manifest.csv_path = dir.join(csv).to_string_lossy().into_owned();
        }
    }
    Ok(manifest)
}

/// An encoded dataset ready for the pipeline.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    /// Encoded feature columns in manifest order.
    pub features: FeatureTable,
    /// Teacher columns in manifest order.
    pub teachers: FeatureTable,
    pub outcomes: Vec<SurvivalOutcome>,
    pub ids: Vec<String>,
    /// Row indices (into the kept rows) of the training split, ascending.
    pub train_rows: Vec<usize>,
    /// Row indices of the test split, ascending.
    pub test_rows: Vec<usize>,
    /// Data rows present in the CSV.
    pub rows_in: usize,
    /// Rows dropped for a missing value in a used column.
    pub rows_dropped_missing: usize,
}

impl LoadedDataset {
    pub fn n_rows(&self) -> usize {
        self.outcomes.len()
    }
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || ["na", "n/a", "nan", "null"].contains(&t.to_ascii_lowercase().as_str())
}

fn parse_number(column: &str, cell: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| Error::NonNumericValue {
        column: column.to_string(),
        value: cell.trim().to_string(),
    })
}

/// Loads, encodes, splits, and normalizes the manifest's dataset.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<LoadedDataset> {
    manifest.validate()?;
    let mut reader = csv::Reader::from_path(&manifest.csv_path)?;
    let headers = reader.headers()?.clone();
    let index_of = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    };

    let id_idx = index_of(&manifest.id_column)?;
    let time_idx = index_of(&manifest.time_column)?;
    let event_idx = index_of(&manifest.event_column)?;
    let feature_idx: Vec<usize> = manifest
        .feature_columns
        .iter()
        .map(|c| index_of(&c.name))
        .collect::<Result<_>>()?;
    let teacher_idx: Vec<usize> = manifest
        .teacher_columns
        .iter()
        .map(|c| index_of(c))
        .collect::<Result<_>>()?;
    let split_idx = match &manifest.split_column {
        Some(name) => Some(index_of(name)?),
        None => None,
    };

    let mut ids = Vec::new();
    let mut outcomes = Vec::new();
    let mut feature_cols: Vec<Vec<f64>> = vec![Vec::new(); feature_idx.len()];
    let mut teacher_cols: Vec<Vec<f64>> = vec![Vec::new(); teacher_idx.len()];
    let mut split_marks: Vec<bool> = Vec::new();
    let mut rows_in = 0usize;
    let mut dropped = 0usize;

    for record in reader.records() {
        let record = record?;
        rows_in += 1;
        let mut used: Vec<usize> = vec![id_idx, time_idx, event_idx];
        used.extend(&feature_idx);
        used.extend(&teacher_idx);
        if let Some(s) = split_idx {
            used.push(s);
        }
        if used.iter().any(|&i| is_missing(&record[i])) {
            dropped += 1;
            continue;
        }

        let time = parse_number(&manifest.time_column, &record[time_idx])?;
        let event_value = parse_number(&manifest.event_column, &record[event_idx])?;
        let event = match event_value {
            v if v == 0.0 => false,
            v if v == 1.0 => true,
            v => {
                return Err(Error::InvalidInput(format!(
                    "event column '{}' holds {v}, expected 0 or 1",
                    manifest.event_column
                )))
            }
        };

        for ((spec, &idx), column) in manifest
            .feature_columns
            .iter()
            .zip(&feature_idx)
            .zip(feature_cols.iter_mut())
        {
            let cell = record[idx].trim();
            let value = match spec.kind {
                ColumnKind::Numeric => parse_number(&spec.name, cell)?,
                ColumnKind::Ordinal | ColumnKind::Categorical => {
                    *spec.encoding.get(cell).ok_or_else(|| Error::UnmappedCategory {
                        column: spec.name.clone(),
                        value: cell.to_string(),
                    })?
                }
            };
            column.push(value);
        }
        for ((name, &idx), column) in manifest
            .teacher_columns
            .iter()
            .zip(&teacher_idx)
            .zip(teacher_cols.iter_mut())
        {
            column.push(parse_number(name, record[idx].trim())?);
        }
        if let Some(idx) = split_idx {
            let cell = record[idx].trim().to_ascii_lowercase();
            match cell.as_str() {
                "train" => split_marks.push(true),
                "test" => split_marks.push(false),
                other => {
                    return Err(Error::InvalidInput(format!(
                        "split column '{}' holds '{other}', expected train or test",
                        manifest.split_column.as_deref().unwrap_or_default()
                    )))
                }
            }
        }

        ids.push(record[id_idx].trim().to_string());
        outcomes.push(SurvivalOutcome::new(time, event));
    }

    if outcomes.is_empty() {
        return Err(Error::EmptyInput("dataset rows after missing-value drops"));
    }

    let n = outcomes.len();
    let (train_rows, test_rows) = if split_idx.is_some() {
        let train: Vec<usize> = (0..n).filter(|&i| split_marks[i]).collect();
        let test: Vec<usize> = (0..n).filter(|&i| !split_marks[i]).collect();
        if train.is_empty() {
            return Err(Error::InvalidInput("split column marks no train rows".into()));
        }
        (train, test)
    } else {
        let fraction = manifest.split_fraction.expect("validated");
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream_rng(manifest.split_seed, 5));
        let n_train = ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1));
        if n < 2 {
            return Err(Error::InvalidInput(
                "split_fraction needs at least 2 rows".into(),
            ));
        }
        let mut train: Vec<usize> = order[..n_train].to_vec();
        let mut test: Vec<usize> = order[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        (train, test)
    };

    // Min-max normalization from train-row statistics only.
    for (spec, column) in manifest.feature_columns.iter().zip(feature_cols.iter_mut()) {
        if !(spec.kind == ColumnKind::Numeric && spec.normalize) {
            continue;
        }
        let min = train_rows
            .iter()
            .map(|&i| column[i])
            .fold(f64::INFINITY, f64::min);
        let max = train_rows
            .iter()
            .map(|&i| column[i])
            .fold(f64::NEG_INFINITY, f64::max);
        if max == min {
            return Err(Error::ZeroVariance(spec.name.clone()));
        }
        for v in column.iter_mut() {
            *v = (*v - min) / (max - min);
        }
    }

    let mut features = FeatureTable::with_rows(n);
    for (spec, column) in manifest.feature_columns.iter().zip(feature_cols) {
        features.push_column(spec.name.clone(), column)?;
    }
    let mut teachers = FeatureTable::with_rows(n);
    for (name, column) in manifest.teacher_columns.iter().zip(teacher_cols) {
        teachers.push_column(name.clone(), column)?;
    }

    Ok(LoadedDataset {
        features,
        teachers,
        outcomes,
        ids,
        train_rows,
        test_rows,
        rows_in,
        rows_dropped_missing: dropped,
    })
}
