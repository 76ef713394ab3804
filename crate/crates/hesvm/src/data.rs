//! CSV ingestion: type inference, imputation, one-hot encoding, label
//! mapping, seeded splits and the prepared-split file format.

use std::collections::BTreeMap;
use std::path::Path;

use hesvm_core::matrix::Matrix;
use hesvm_core::svm::Dataset;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::f17;

/// Cell values treated as missing.
pub const MISSING: [&str; 3] = ["", "?", "NA"];

fn is_missing(v: &str) -> bool {
    MISSING.contains(&v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnSpec {
    Numeric {
        name: String,
        #[serde(with = "f17")]
        median: f64,
    },
    Categorical {
        name: String,
        categories: Vec<String>,
        mode: String,
    },
}

impl ColumnSpec {
    pub fn name(&self) -> &str {
        match self {
            ColumnSpec::Numeric { name, .. } | ColumnSpec::Categorical { name, .. } => name,
        }
    }

    fn width(&self) -> usize {
        match self {
            ColumnSpec::Numeric { .. } => 1,
            ColumnSpec::Categorical { categories, .. } => categories.len(),
        }
    }
}

/// Column layout and category vocabulary fitted at ingestion; re-applied to
/// later files so encoded columns line up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub label: String,
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn width(&self) -> usize {
        self.columns.iter().map(ColumnSpec::width).sum()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.width());
        for c in &self.columns {
            match c {
                ColumnSpec::Numeric { name, .. } => out.push(name.clone()),
                ColumnSpec::Categorical { name, categories, .. } => {
                    out.extend(categories.iter().map(|k| format!("{name}={k}")));
                }
            }
        }
        out
    }

    /// Encodes cells given in schema column order. Unseen categories encode
    /// as all zeros.
    fn encode_row(&self, cells: &[&str], out: &mut Vec<f64>) -> AppResult<()> {
        for (spec, &cell) in self.columns.iter().zip(cells) {
            match spec {
                ColumnSpec::Numeric { name, median } => {
                    let v = if is_missing(cell) {
                        *median
                    } else {
                        cell.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| AppError::Other(format!("column {name}: {cell:?} is not a finite number")))?
                    };
                    out.push(v);
                }
                ColumnSpec::Categorical { name, categories, mode } => {
                    let v = if is_missing(cell) { mode.as_str() } else { cell };
                    let hit = categories.iter().position(|k| k == v);
                    if hit.is_none() {
                        log::warn!("column {name}: unseen category {v:?} encodes as zeros");
                    }
                    out.extend((0..categories.len()).map(|i| if Some(i) == hit { 1.0 } else { 0.0 }));
                }
            }
        }
        Ok(())
    }
}

/// Label strings mapped to `+1` and `-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelMapping {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

impl Default for LabelMapping {
    fn default() -> Self {
        Self { positive: vec!["+".into()], negative: vec!["-".into(), "\u{2212}".into()] }
    }
}

impl LabelMapping {
    pub fn map(&self, v: &str) -> Option<i8> {
        if self.positive.iter().any(|p| p == v) {
            Some(1)
        } else if self.negative.iter().any(|n| n == v) {
            Some(-1)
        } else {
            None
        }
    }
}

/// Header plus trimmed string cells.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn read_table(path: &Path) -> AppResult<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| AppError::Other(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_owned).collect());
    }
    if header.iter().all(String::is_empty) || rows.is_empty() {
        return Err(AppError::Other(format!("{}: empty file", path.display())));
    }
    Ok(RawTable { header, rows })
}

fn label_index(table: &RawTable, label: &str) -> AppResult<usize> {
    table
        .header
        .iter()
        .position(|h| h == label)
        .ok_or_else(|| AppError::Config(format!("label column {label:?} not found in header {:?}", table.header)))
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Most frequent value; ties go to the lexicographically smallest.
fn mode(values: &[&str]) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    counts.into_iter().find(|&(_, c)| c == best).map(|(k, _)| k.to_owned()).unwrap_or_default()
}

fn fit_schema(table: &RawTable, label: &str, label_idx: usize) -> Schema {
    let mut columns = Vec::new();
    for (j, name) in table.header.iter().enumerate() {
        if j == label_idx {
            continue;
        }
        let present: Vec<&str> =
            table.rows.iter().filter_map(|r| r.get(j).map(String::as_str)).filter(|v| !is_missing(v)).collect();
        let parsed: Option<Vec<f64>> =
            present.iter().map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite())).collect();
        match parsed {
            Some(nums) if !nums.is_empty() => {
                columns.push(ColumnSpec::Numeric { name: name.clone(), median: median(nums) });
            }
            _ => {
                let mut categories: Vec<String> = present.iter().map(|s| (*s).to_owned()).collect();
                categories.sort();
                categories.dedup();
                columns.push(ColumnSpec::Categorical { name: name.clone(), categories, mode: mode(&present) });
            }
        }
    }
    Schema { label: label.to_owned(), columns }
}

/// Encodes a table with an existing schema.
pub fn encode_table(table: &RawTable, schema: &Schema, mapping: &LabelMapping) -> AppResult<Dataset> {
    let label_idx = label_index(table, &schema.label)?;
    let idx: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| {
            table
                .header
                .iter()
                .position(|h| h == c.name())
                .ok_or_else(|| AppError::Mismatch(format!("column {:?} missing from input", c.name())))
        })
        .collect::<AppResult<_>>()?;
    let width = schema.width();
    let mut data = Vec::with_capacity(table.rows.len() * width);
    let mut labels = Vec::with_capacity(table.rows.len());
    for (line, row) in table.rows.iter().enumerate() {
        let cell = |j: usize| row.get(j).map_or("", String::as_str);
        let raw = cell(label_idx);
        let y = mapping.map(raw).ok_or_else(|| {
            AppError::Config(format!(
                "row {}: label {raw:?} has no mapping (positive {:?}, negative {:?})",
                line + 2,
                mapping.positive,
                mapping.negative
            ))
        })?;
        labels.push(y);
        let cells: Vec<&str> = idx.iter().map(|&j| cell(j)).collect();
        schema.encode_row(&cells, &mut data)?;
    }
    let features = Matrix::new(labels.len(), width, data)?;
    Ok(Dataset::new(features, labels, schema.feature_names())?)
}

/// Fits the schema on `table` (medians, modes, vocabularies) and encodes it.
pub fn ingest_table(table: &RawTable, label: &str, mapping: &LabelMapping) -> AppResult<(Dataset, Schema)> {
    let label_idx = label_index(table, label)?;
    let schema = fit_schema(table, label, label_idx);
    let ds = encode_table(table, &schema, mapping)?;
    Ok((ds, schema))
}

pub fn ingest_csv(path: &Path, label: &str, mapping: &LabelMapping) -> AppResult<(Dataset, Schema)> {
    ingest_table(&read_table(path)?, label, mapping)
}

/// Seeded shuffle split; `floor(m * test_ratio)` rows go to the test side.
/// Both index lists come back sorted.
pub fn split_indices(m: usize, test_ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let n_test = ((m as f64 * test_ratio) + 1e-9).floor() as usize;
    let mut test = order[..n_test.min(m)].to_vec();
    let mut train = order[n_test.min(m)..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

pub const PREPARED_LABEL: &str = "label";

/// Prepared split: one column per model feature, then `label` in {-1, 1}.
pub fn write_prepared(path: &Path, ds: &Dataset) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| AppError::Other(format!("{}: {e}", path.display())))?;
    let mut header: Vec<String> = ds.feature_names().to_vec();
    header.push(PREPARED_LABEL.into());
    w.write_record(&header)?;
    for (row, y) in ds.features().iter_rows().zip(ds.labels()) {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        rec.push(y.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(AppError::io(path.display().to_string()))
}

pub fn read_prepared(path: &Path) -> AppResult<Dataset> {
    if !path.exists() {
        return Err(AppError::missing(path, "run `hesvm prepare` first"));
    }
    let table = read_table(path)?;
    let li = label_index(&table, PREPARED_LABEL)?;
    let names: Vec<String> =
        table.header.iter().enumerate().filter(|&(j, _)| j != li).map(|(_, h)| h.clone()).collect();
    let mut data = Vec::with_capacity(table.rows.len() * names.len());
    let mut labels = Vec::with_capacity(table.rows.len());
    for (line, row) in table.rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            let bad = || AppError::Other(format!("{}:{}: bad value {cell:?}", path.display(), line + 2));
            if j == li {
                labels.push(cell.parse::<i8>().map_err(|_| bad())?);
            } else {
                data.push(cell.parse::<f64>().map_err(|_| bad())?);
            }
        }
    }
    let features = Matrix::new(labels.len(), names.len(), data)?;
    Ok(Dataset::new(features, labels, names)?)
}

/// `+1 -> 1`, `-1 -> 0`.
pub fn to_binary(labels: &[i8]) -> Vec<u8> {
    labels.iter().map(|&l| u8::from(l > 0)).collect()
}
