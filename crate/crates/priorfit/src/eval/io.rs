//! CSV + schema-JSON dataset loading, saving and seeded splitting.
//!
//! Schema format:
//! ```json
//! { "target": "species",
//!   "columns": { "sepal_len": "numeric", "species": "categorical" } }
//! ```
//! Missing cells are written as "" or "NA".

use crate::error::{Error, Result};
use crate::infer::PredictTask;
use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub target: String,
    pub columns: BTreeMap<String, ColumnType>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Numeric,
    Categorical,
}

/// A fully labeled tabular dataset, before any train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub x: Vec<Vec<f32>>,
    pub mask: Vec<Vec<u8>>,
    pub y: Vec<u16>,
    pub n_classes: usize,
    pub label_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub categorical: Vec<usize>,
}

impl LabeledDataset {
    pub fn rows(&self) -> usize {
        self.x.len()
    }

    pub fn features(&self) -> usize {
        self.feature_names.len()
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

/// Read a CSV with a header row against its schema.
pub fn load_dataset(csv_path: &Path, schema_path: &Path) -> Result<LabeledDataset> {
    let schema: Schema = serde_json::from_str(&std::fs::read_to_string(schema_path)?)?;
    if !schema.columns.contains_key(&schema.target) {
        return Err(Error::Parse(format!(
            "target column {:?} is not declared in the schema",
            schema.target
        )));
    }
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(csv_path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    for h in &headers {
        if !schema.columns.contains_key(h) {
            return Err(Error::Parse(format!("CSV column {h:?} missing from the schema")));
        }
    }
    let target_idx = headers
        .iter()
        .position(|h| *h == schema.target)
        .ok_or_else(|| Error::Parse(format!("target column {:?} not in the CSV", schema.target)))?;

    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&i| i != target_idx).collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&i| headers[i].clone()).collect();
    let col_types: Vec<ColumnType> =
        feature_cols.iter().map(|&i| schema.columns[&headers[i]]).collect();

    let mut x: Vec<Vec<f32>> = Vec::new();
    let mut mask: Vec<Vec<u8>> = Vec::new();
    let mut y: Vec<u16> = Vec::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut cat_codes: Vec<Vec<String>> = vec![Vec::new(); feature_cols.len()];

    for (ri, record) in reader.records().enumerate() {
        let line = ri + 2; // 1-based, after the header
        let record = record.map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        if record.len() != headers.len() {
            return Err(Error::Parse(format!(
                "line {line}: {} fields, expected {}",
                record.len(),
                headers.len()
            )));
        }
        let target_cell = record.get(target_idx).unwrap_or("");
        if is_missing(target_cell) {
            return Err(Error::Parse(format!("line {line}: missing target value")));
        }
        let label = match label_names.iter().position(|l| l == target_cell) {
            Some(i) => i,
            None => {
                label_names.push(target_cell.to_owned());
                label_names.len() - 1
            }
        };
        y.push(label as u16);

        let mut row = Vec::with_capacity(feature_cols.len());
        let mut mrow = Vec::with_capacity(feature_cols.len());
        for (j, &ci) in feature_cols.iter().enumerate() {
            let cell = record.get(ci).unwrap_or("");
            if is_missing(cell) {
                row.push(0.0);
                mrow.push(1);
                continue;
            }
            let value = match col_types[j] {
                ColumnType::Numeric => cell.parse::<f32>().map_err(|_| {
                    Error::Parse(format!(
                        "line {line}: column {:?} has non-numeric value {cell:?}",
                        feature_names[j]
                    ))
                })?,
                ColumnType::Categorical => {
                    let code = match cat_codes[j].iter().position(|c| c == cell) {
                        Some(i) => i,
                        None => {
                            cat_codes[j].push(cell.to_owned());
                            cat_codes[j].len() - 1
                        }
                    };
                    code as f32
                }
            };
            row.push(value);
            mrow.push(0);
        }
        x.push(row);
        mask.push(mrow);
    }
    if x.is_empty() {
        return Err(Error::Parse("dataset has no data rows".into()));
    }
    let categorical: Vec<usize> = col_types
        .iter()
        .enumerate()
        .filter(|(_, t)| **t == ColumnType::Categorical)
        .map(|(i, _)| i)
        .collect();
    Ok(LabeledDataset {
        x,
        mask,
        y,
        n_classes: label_names.len(),
        label_names,
        feature_names,
        categorical,
    })
}

/// Write a dataset back to CSV + schema; numeric features only are emitted as
/// numbers, categorical codes as integers. Loading the result reproduces the
/// dataset.
pub fn save_dataset(ds: &LabeledDataset, csv_path: &Path, schema_path: &Path) -> Result<()> {
    let mut columns = BTreeMap::new();
    for (j, name) in ds.feature_names.iter().enumerate() {
        let t = if ds.categorical.contains(&j) {
            ColumnType::Categorical
        } else {
            ColumnType::Numeric
        };
        columns.insert(name.clone(), t);
    }
    columns.insert("target".into(), ColumnType::Categorical);
    let schema = Schema { target: "target".into(), columns };
    std::fs::write(schema_path, serde_json::to_string_pretty(&schema)?)?;

    let mut writer = csv::Writer::from_path(csv_path)?;
    let mut header = ds.feature_names.clone();
    header.push("target".into());
    writer.write_record(&header)?;
    for ((row, mrow), &label) in ds.x.iter().zip(ds.mask.iter()).zip(ds.y.iter()) {
        let mut record: Vec<String> = Vec::with_capacity(row.len() + 1);
        for (j, (&v, &m)) in row.iter().zip(mrow.iter()).enumerate() {
            if m == 1 {
                record.push("NA".into());
            } else if ds.categorical.contains(&j) {
                record.push(format!("{}", v as i64));
            } else {
                record.push(format!("{v}"));
            }
        }
        record.push(ds.label_names[label as usize].clone());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Rebuild the first-appearance string codes of the categorical feature
/// columns from a CSV.
fn categorical_codes(
    csv_path: &Path,
    headers: &[String],
    feature_cols: &[usize],
    col_types: &[ColumnType],
) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::Reader::from_path(csv_path)?;
    let file_headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    debug_assert_eq!(file_headers, headers);
    let mut codes: Vec<Vec<String>> = vec![Vec::new(); feature_cols.len()];
    for record in reader.records() {
        let record = record?;
        for (j, &ci) in feature_cols.iter().enumerate() {
            if col_types[j] != ColumnType::Categorical {
                continue;
            }
            let cell = record.get(ci).unwrap_or("");
            if !is_missing(cell) && !codes[j].iter().any(|c| c == cell) {
                codes[j].push(cell.to_owned());
            }
        }
    }
    Ok(codes)
}

/// Load a labeled train CSV and an unlabeled test CSV (its target column,
/// if present, is ignored) into one prediction task. Test-side categorical
/// strings unseen in training extend the train-side code list.
pub fn load_prediction_pair(
    train_csv: &Path,
    test_csv: &Path,
    schema_path: &Path,
) -> Result<PredictTask> {
    let train = load_dataset(train_csv, schema_path)?;
    let schema: Schema = serde_json::from_str(&std::fs::read_to_string(schema_path)?)?;

    let mut reader = csv::Reader::from_path(test_csv)?;
    let test_headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    for h in &test_headers {
        if !schema.columns.contains_key(h) {
            return Err(Error::Parse(format!("test column {h:?} missing from the schema")));
        }
    }
    // test feature columns matched to the train feature order by name
    let mut test_cols = Vec::with_capacity(train.feature_names.len());
    for name in &train.feature_names {
        let idx = test_headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Parse(format!("test CSV lacks feature column {name:?}"))
        })?;
        test_cols.push(idx);
    }

    // rebuild the train categorical codes so test strings map consistently
    let mut train_reader = csv::Reader::from_path(train_csv)?;
    let train_headers: Vec<String> =
        train_reader.headers()?.iter().map(str::to_owned).collect();
    let target_idx = train_headers.iter().position(|h| *h == schema.target).unwrap();
    let feature_cols: Vec<usize> =
        (0..train_headers.len()).filter(|&i| i != target_idx).collect();
    let col_types: Vec<ColumnType> =
        feature_cols.iter().map(|&i| schema.columns[&train_headers[i]]).collect();
    let mut codes = categorical_codes(train_csv, &train_headers, &feature_cols, &col_types)?;

    let mut x_test = Vec::new();
    let mut mask_test = Vec::new();
    for (ri, record) in reader.records().enumerate() {
        let line = ri + 2;
        let record = record.map_err(|e| Error::Parse(format!("test line {line}: {e}")))?;
        if record.len() != test_headers.len() {
            return Err(Error::Parse(format!(
                "test line {line}: {} fields, expected {}",
                record.len(),
                test_headers.len()
            )));
        }
        let mut row = Vec::with_capacity(test_cols.len());
        let mut mrow = Vec::with_capacity(test_cols.len());
        for (j, &ci) in test_cols.iter().enumerate() {
            let cell = record.get(ci).unwrap_or("");
            if is_missing(cell) {
                row.push(0.0);
                mrow.push(1);
                continue;
            }
            let value = match col_types[j] {
                ColumnType::Numeric => cell.parse::<f32>().map_err(|_| {
                    Error::Parse(format!(
                        "test line {line}: column {:?} has non-numeric value {cell:?}",
                        train.feature_names[j]
                    ))
                })?,
                ColumnType::Categorical => {
                    let code = match codes[j].iter().position(|c| c == cell) {
                        Some(i) => i,
                        None => {
                            codes[j].push(cell.to_owned());
                            codes[j].len() - 1
                        }
                    };
                    code as f32
                }
            };
            row.push(value);
            mrow.push(0);
        }
        x_test.push(row);
        mask_test.push(mrow);
    }
    if x_test.is_empty() {
        return Err(Error::Parse("test CSV has no data rows".into()));
    }
    Ok(PredictTask {
        x_train: train.x,
        mask_train: train.mask,
        y_train: train.y,
        x_test,
        mask_test,
        n_classes: train.n_classes,
        label_names: train.label_names,
        categorical: train.categorical,
    })
}

const SPLIT_RETRIES: usize = 16;

/// Seeded shuffle-then-split; retried until every class appears on the train
/// side. Returns the train-side task (test rows attached unlabeled) and the
/// held-out labels.
pub fn split(ds: &LabeledDataset, seed: u64, test_fraction: f64) -> Result<(PredictTask, Vec<u16>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Contract(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let n = ds.rows();
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..SPLIT_RETRIES {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let (test_idx, train_idx) = idx.split_at(n_test);
        let mut present = vec![false; ds.n_classes];
        for &i in train_idx {
            present[ds.y[i] as usize] = true;
        }
        if !present.iter().all(|&p| p) {
            continue;
        }
        let take = |ids: &[usize]| -> (Vec<Vec<f32>>, Vec<Vec<u8>>) {
            (
                ids.iter().map(|&i| ds.x[i].clone()).collect(),
                ids.iter().map(|&i| ds.mask[i].clone()).collect(),
            )
        };
        let (x_train, mask_train) = take(train_idx);
        let (x_test, mask_test) = take(test_idx);
        let task = PredictTask {
            x_train,
            mask_train,
            y_train: train_idx.iter().map(|&i| ds.y[i]).collect(),
            x_test,
            mask_test,
            n_classes: ds.n_classes,
            label_names: ds.label_names.clone(),
            categorical: ds.categorical.clone(),
        };
        let held_out = test_idx.iter().map(|&i| ds.y[i]).collect();
        return Ok((task, held_out));
    }
    Err(Error::Contract(format!(
        "no split kept every class on the train side after {SPLIT_RETRIES} tries"
    )))
}
