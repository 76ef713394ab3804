//! JSON documents for the fitted preprocessing and the trained model.

use std::path::Path;

use hesvm_core::approx::PolyApprox;
use hesvm_core::matrix::Matrix;
use hesvm_core::svm::{FeatureSelection, KernelConfig, Preprocessing, ScalerParams, SvmModel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::Schema;
use crate::error::{AppError, AppResult};
use crate::f17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalerJson {
    /// Encoded input columns kept by the scaler.
    pub columns: Vec<usize>,
    #[serde(with = "f17::vec")]
    pub mu: Vec<f64>,
    #[serde(with = "f17::vec")]
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionJson {
    pub indices: Vec<usize>,
    #[serde(with = "f17::vec")]
    pub scores: Vec<f64>,
    #[serde(with = "f17")]
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelJson {
    #[serde(with = "f17")]
    pub lambda1: f64,
    #[serde(with = "f17")]
    pub lambda2: f64,
    pub degree: u32,
    #[serde(with = "f17")]
    pub coef: f64,
    #[serde(with = "f17")]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxJson {
    #[serde(with = "f17::vec")]
    pub coeffs: Vec<f64>,
    #[serde(with = "f17::pair")]
    pub interval: (f64, f64),
    pub degree: usize,
    #[serde(with = "f17")]
    pub max_err: f64,
}

impl From<&Preprocessing> for ScalerJson {
    fn from(p: &Preprocessing) -> Self {
        let s = &p.scaler;
        Self { columns: s.columns.clone(), mu: s.mu.clone(), sigma: s.sigma.clone() }
    }
}

impl From<&Preprocessing> for SelectionJson {
    fn from(p: &Preprocessing) -> Self {
        let s = &p.selection;
        Self { indices: s.selected.clone(), scores: s.scores.clone(), threshold: s.threshold }
    }
}

fn preprocessing(scaler: &ScalerJson, selection: &SelectionJson) -> AppResult<Preprocessing> {
    let scaler = ScalerParams { columns: scaler.columns.clone(), mu: scaler.mu.clone(), sigma: scaler.sigma.clone() };
    scaler.validate()?;
    let selection = FeatureSelection {
        selected: selection.indices.clone(),
        scores: selection.scores.clone(),
        threshold: selection.threshold,
    };
    let sorted = selection.selected.windows(2).all(|w| w[0] < w[1]);
    if selection.selected.is_empty() || !sorted || selection.selected.iter().any(|&i| i >= scaler.columns.len()) {
        return Err(AppError::Other("selection indices must be sorted, unique and within the scaler".into()));
    }
    Ok(Preprocessing { scaler, selection })
}

/// Output of `prepare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessFile {
    pub categorical_vocab: Schema,
    pub scaler: ScalerJson,
    pub selection: SelectionJson,
    /// Names of the selected model features.
    pub feature_names: Vec<String>,
    pub split_seed: u64,
    #[serde(with = "f17")]
    pub test_ratio: f64,
}

impl PreprocessFile {
    pub fn preprocessing(&self) -> AppResult<Preprocessing> {
        preprocessing(&self.scaler, &self.selection)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub scaler: ScalerJson,
    pub selection: SelectionJson,
    pub kernel: KernelJson,
    #[serde(with = "f17::rows")]
    pub support_vectors: Vec<Vec<f64>>,
    #[serde(with = "f17::vec")]
    pub dual_coeffs: Vec<f64>,
    #[serde(with = "f17")]
    pub bias: f64,
    #[serde(rename = "C", with = "f17")]
    pub c: f64,
    pub categorical_vocab: Schema,
    pub split_seed: u64,
    pub feature_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rbf_approx: Option<ApproxJson>,
}

impl ModelFile {
    pub fn new(model: &SvmModel, prep: &PreprocessFile) -> Self {
        let k = &model.kernel;
        Self {
            scaler: ScalerJson::from(&model.preprocessing),
            selection: SelectionJson::from(&model.preprocessing),
            kernel: KernelJson {
                lambda1: k.lambda1,
                lambda2: k.lambda2,
                degree: k.degree,
                coef: k.coef,
                gamma: k.gamma,
            },
            support_vectors: model.support_vectors.iter_rows().map(<[f64]>::to_vec).collect(),
            dual_coeffs: model.dual_coeffs.clone(),
            bias: model.bias,
            c: model.c,
            categorical_vocab: prep.categorical_vocab.clone(),
            split_seed: prep.split_seed,
            feature_names: prep.feature_names.clone(),
            rbf_approx: model.rbf_approx.as_ref().map(|a| ApproxJson {
                coeffs: a.coeffs().to_vec(),
                interval: a.interval(),
                degree: a.degree(),
                max_err: a.max_err(),
            }),
        }
    }

    pub fn to_model(&self) -> AppResult<SvmModel> {
        let k = &self.kernel;
        let rbf_approx = match &self.rbf_approx {
            Some(a) => {
                if a.coeffs.len() != a.degree + 1 {
                    return Err(AppError::Other(format!(
                        "rbf_approx degree {} with {} coefficients",
                        a.degree,
                        a.coeffs.len()
                    )));
                }
                Some(PolyApprox::from_parts(a.coeffs.clone(), a.interval.0, a.interval.1, a.max_err)?)
            }
            None => None,
        };
        let model = SvmModel {
            support_vectors: Matrix::from_rows(&self.support_vectors)?,
            dual_coeffs: self.dual_coeffs.clone(),
            bias: self.bias,
            c: self.c,
            kernel: KernelConfig {
                lambda1: k.lambda1,
                lambda2: k.lambda2,
                degree: k.degree,
                coef: k.coef,
                gamma: k.gamma,
            },
            preprocessing: preprocessing(&self.scaler, &self.selection)?,
            rbf_approx,
        };
        model.validate()?;
        let sum: f64 = model.dual_coeffs.iter().sum();
        if sum.abs() > 1e-6 {
            return Err(AppError::Other(format!("dual coefficients sum to {sum:e}, expected 0")));
        }
        Ok(model)
    }
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(AppError::io(path.display().to_string()))
}

/// Loads a JSON artifact; a missing file is reported with `hint`.
pub fn load_json<T: DeserializeOwned>(path: &Path, hint: &str) -> AppResult<T> {
    if !path.exists() {
        return Err(AppError::missing(path, hint));
    }
    let text = std::fs::read_to_string(path).map_err(AppError::io(path.display().to_string()))?;
    serde_json::from_str(&text).map_err(|e| AppError::Other(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnSpec;

    fn sample() -> (SvmModel, PreprocessFile) {
        let model = SvmModel {
            support_vectors: Matrix::from_rows(&[vec![0.1, -1.0 / 3.0], vec![2.0, 1e-9]]).unwrap(),
            dual_coeffs: vec![0.7, -0.7],
            bias: -0.123_456_789_012_345_68,
            c: 1.0,
            kernel: KernelConfig { gamma: 0.5, ..Default::default() },
            preprocessing: Preprocessing {
                scaler: ScalerParams { columns: vec![0, 1, 2], mu: vec![1.0, 2.0, 0.5], sigma: vec![0.5, 1.5, 0.5] },
                selection: FeatureSelection { selected: vec![0, 2], scores: vec![0.4, 0.01, 0.3], threshold: 0.1 },
            },
            rbf_approx: Some(PolyApprox::fit_exp(0.0, 6.3, 2).unwrap()),
        };
        let prep = PreprocessFile {
            categorical_vocab: Schema {
                label: "class".into(),
                columns: vec![
                    ColumnSpec::Numeric { name: "x".into(), median: 1.5 },
                    ColumnSpec::Categorical {
                        name: "c".into(),
                        categories: vec!["a".into(), "b".into()],
                        mode: "a".into(),
                    },
                ],
            },
            scaler: ScalerJson::from(&model.preprocessing),
            selection: SelectionJson::from(&model.preprocessing),
            feature_names: vec!["x".into(), "c=b".into()],
            split_seed: 42,
            test_ratio: 0.2,
        };
        (model, prep)
    }

    #[test]
    fn model_json_roundtrips_bit_exact() {
        let (model, prep) = sample();
        let file = ModelFile::new(&model, &prep);
        let text = serde_json::to_string(&file).unwrap();
        assert!(text.contains("\"C\":1.0000000000000000e0"));
        assert!(text.contains("-1.2345678901234568e-1"));
        let back: ModelFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, file);
        let m = back.to_model().unwrap();
        assert_eq!(m, model);
    }

    #[test]
    fn unknown_fields_and_bad_models_rejected() {
        let (model, prep) = sample();
        let mut v = serde_json::to_value(ModelFile::new(&model, &prep)).unwrap();
        v["extra"] = 1.into();
        assert!(serde_json::from_value::<ModelFile>(v).is_err());

        let mut file = ModelFile::new(&model, &prep);
        file.dual_coeffs[1] = -0.5;
        assert!(file.to_model().is_err());
        let mut file = ModelFile::new(&model, &prep);
        file.rbf_approx.as_mut().unwrap().max_err *= 2.0;
        assert!(file.to_model().is_err());
    }
}
