//! Datasets, standardization and correlation-based feature selection.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;

/// Minimum stddev for a column to count as non-constant.
pub const MIN_STDDEV: f64 = 1e-12;
pub const DEFAULT_SELECTION_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<i8>,
    feature_names: Vec<String>,
    standardized: bool,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<i8>, feature_names: Vec<String>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::Mismatch(format!("{} labels for {} rows", labels.len(), features.rows())));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::Mismatch(format!("{} names for {} columns", feature_names.len(), features.cols())));
        }
        if features.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        if let Some(l) = labels.iter().find(|&&l| l != 1 && l != -1) {
            return Err(Error::InvalidInput(format!("label {l} not in {{-1, +1}}")));
        }
        Ok(Self { features, labels, feature_names, standardized: false })
    }

    /// Builds a dataset with generated names `f0, f1, ..`.
    pub fn unnamed(features: Matrix, labels: Vec<i8>) -> Result<Self> {
        let names = (0..features.cols()).map(|i| format!("f{i}")).collect();
        Self::new(features, labels, names)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }
    pub fn labels(&self) -> &[i8] {
        &self.labels
    }
    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }
    pub fn len(&self) -> usize {
        self.labels.len()
    }
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
    pub fn n_features(&self) -> usize {
        self.features.cols()
    }
    /// Whether a scaler has already been applied.
    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.contains(&1) && self.labels.contains(&-1)
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            standardized: self.standardized,
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&c) = cols.iter().find(|&&c| c >= self.n_features()) {
            return Err(Error::Mismatch(format!("column {c} out of range ({} features)", self.n_features())));
        }
        Ok(Self {
            features: self.features.select_cols(cols),
            labels: self.labels.clone(),
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            standardized: self.standardized,
        })
    }

    /// Mean per-feature population variance.
    pub fn mean_variance(&self) -> f64 {
        let n = self.n_features();
        if n == 0 || self.is_empty() {
            return 0.0;
        }
        (0..n)
            .map(|j| {
                let s = mean_std(&self.features.column(j)).1;
                s * s
            })
            .sum::<f64>()
            / n as f64
    }
}

fn mean_std(col: &[f64]) -> (f64, f64) {
    let m = col.len() as f64;
    let mean = col.iter().sum::<f64>() / m;
    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
    (mean, math::sqrt(var))
}

/// Per-column mean and population stddev over the retained (non-constant)
/// columns of the data the scaler was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerParams {
    pub columns: Vec<usize>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl ScalerParams {
    pub fn identity(n: usize) -> Self {
        Self { columns: (0..n).collect(), mu: alloc::vec![0.0; n], sigma: alloc::vec![1.0; n] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.len() != self.mu.len() || self.mu.len() != self.sigma.len() {
            return Err(Error::Mismatch("scaler vectors differ in length".into()));
        }
        if let Some(i) = self.sigma.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput(format!("zero-variance column {} reached the scaler", self.columns[i])));
        }
        if self.mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("non-finite mean".into()));
        }
        Ok(())
    }

    /// Scales one raw row.
    pub fn transform_row(&self, raw: &[f64]) -> Result<Vec<f64>> {
        self.columns
            .iter()
            .zip(self.mu.iter().zip(&self.sigma))
            .map(|(&c, (&m, &s))| {
                raw.get(c).map(|&v| (v - m) / s).ok_or_else(|| Error::Mismatch(format!("row lacks column {c}")))
            })
            .collect()
    }
}

/// Fits the scaler; constant columns are dropped rather than scaled.
pub fn fit_scaler(ds: &Dataset) -> Result<ScalerParams> {
    if ds.is_empty() {
        return Err(Error::InvalidInput("cannot fit a scaler on an empty dataset".into()));
    }
    let mut out = ScalerParams { columns: Vec::new(), mu: Vec::new(), sigma: Vec::new() };
    for j in 0..ds.n_features() {
        let (m, s) = mean_std(&ds.features.column(j));
        if s > MIN_STDDEV {
            out.columns.push(j);
            out.mu.push(m);
            out.sigma.push(s);
        }
    }
    if out.columns.is_empty() {
        return Err(Error::InvalidInput("every column is constant".into()));
    }
    Ok(out)
}

/// `(x - mu) / sigma` on the scaler's columns.
pub fn standardize(ds: &Dataset, scaler: &ScalerParams) -> Result<Dataset> {
    if ds.standardized {
        return Err(Error::InvalidInput("dataset is already standardized".into()));
    }
    scaler.validate()?;
    let mut data = Vec::with_capacity(ds.len() * scaler.columns.len());
    for r in ds.features.iter_rows() {
        data.extend(scaler.transform_row(r)?);
    }
    Ok(Dataset {
        features: Matrix::new(ds.len(), scaler.columns.len(), data)?,
        labels: ds.labels.clone(),
        feature_names: scaler.columns.iter().map(|&c| ds.feature_names[c].clone()).collect(),
        standardized: true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSelection {
    pub selected: Vec<usize>,
    pub scores: Vec<f64>,
    pub threshold: f64,
}

impl FeatureSelection {
    pub fn all(n: usize) -> Self {
        Self { selected: (0..n).collect(), scores: alloc::vec![1.0; n], threshold: 0.0 }
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.selected
            .iter()
            .map(|&i| row.get(i).copied().ok_or_else(|| Error::Mismatch(format!("row lacks feature {i}"))))
            .collect()
    }
}

/// Absolute Pearson correlation; zero when either side is constant.
pub fn abs_pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, sx) = mean_std(x);
    let (my, sy) = mean_std(y);
    if sx <= MIN_STDDEV || sy <= MIN_STDDEV {
        return 0.0;
    }
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64;
    math::abs(cov / (sx * sy)).min(1.0)
}

/// Keeps features with `|corr| >= threshold`, or the best two if fewer pass.
pub fn select_features(ds: &Dataset, threshold: f64) -> Result<FeatureSelection> {
    if ds.n_features() == 0 || ds.is_empty() {
        return Err(Error::InvalidInput("no features to select from".into()));
    }
    let y: Vec<f64> = ds.labels.iter().map(|&l| l as f64).collect();
    let scores: Vec<f64> = (0..ds.n_features()).map(|j| abs_pearson(&ds.features.column(j), &y)).collect();
    let mut selected: Vec<usize> = (0..scores.len()).filter(|&j| scores[j] >= threshold).collect();
    if selected.len() < 2 {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        selected = order.into_iter().take(2).collect();
        selected.sort_unstable();
    }
    Ok(FeatureSelection { selected, scores, threshold })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[Vec<f64>], labels: &[i8]) -> Dataset {
        Dataset::unnamed(Matrix::from_rows(rows).unwrap(), labels.to_vec()).unwrap()
    }

    #[test]
    fn scaler_hand_example() {
        let d = ds(&[alloc::vec![2.0], alloc::vec![4.0], alloc::vec![6.0]], &[1, -1, 1]);
        let s = fit_scaler(&d).unwrap();
        assert!((s.mu[0] - 4.0).abs() < 1e-15);
        assert!((s.sigma[0] - 1.632993161855452).abs() < 1e-12);
        let z = standardize(&d, &s).unwrap();
        let col = z.features().column(0);
        for (v, e) in col.iter().zip([-1.224744871391589, 0.0, 1.224744871391589]) {
            assert!((v - e).abs() < 1e-12);
        }
        assert!(standardize(&z, &s).is_err(), "second pass must be rejected");
    }

    #[test]
    fn constant_columns_are_dropped_and_rejected() {
        let d = ds(&[alloc::vec![1.0, 5.0], alloc::vec![2.0, 5.0]], &[1, -1]);
        let s = fit_scaler(&d).unwrap();
        assert_eq!(s.columns, alloc::vec![0]);
        let bad = ScalerParams { columns: alloc::vec![1], mu: alloc::vec![5.0], sigma: alloc::vec![0.0] };
        assert!(standardize(&d, &bad).is_err());
    }

    #[test]
    fn selection_rules() {
        let rows: Vec<Vec<f64>> =
            (0..8).map(|i| alloc::vec![if i % 2 == 0 { 1.0 } else { -1.0 }, (i % 3) as f64]).collect();
        let labels: Vec<i8> = (0..8).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let sel = select_features(&ds(&rows, &labels), 0.1).unwrap();
        assert!((sel.scores[0] - 1.0).abs() < 1e-12);
        assert!(sel.selected.contains(&0));

        let sel = select_features(&ds(&rows, &labels), 0.99).unwrap();
        assert_eq!(sel.selected, alloc::vec![0, 1], "top-2 fallback");
    }
}
