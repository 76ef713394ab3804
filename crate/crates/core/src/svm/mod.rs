//! Hybrid polynomial + RBF kernel SVM.

mod data;
mod smo;

use alloc::format;
use alloc::vec::Vec;

pub use data::{
    abs_pearson, fit_scaler, select_features, standardize, Dataset, FeatureSelection, ScalerParams,
    DEFAULT_SELECTION_THRESHOLD, MIN_STDDEV,
};
pub use smo::{gram, train, Candidate, ScalingAttempt, TrainOptions, TrainReport, BETAS};

use crate::approx::PolyApprox;
use crate::error::{Error, Result};
use crate::math;
use crate::matrix::{self, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub degree: u32,
    pub coef: f64,
    pub gamma: f64,
}

impl KernelConfig {
    /// Defaults with `gamma = 1 / (n_features * variance)`.
    pub fn for_data(ds: &Dataset) -> Self {
        let var = ds.mean_variance();
        let denom = ds.n_features() as f64 * if var > 0.0 { var } else { 1.0 };
        Self { gamma: 1.0 / denom.max(1.0), ..Self::default() }
    }

    /// `x . sv` (d = 1, c = 0, no RBF part).
    pub fn linear() -> Self {
        Self { lambda1: 1.0, lambda2: 0.0, degree: 1, coef: 0.0, gamma: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda1 >= 0.0
            && self.lambda2 >= 0.0
            && self.lambda1 + self.lambda2 > 0.0
            && self.degree >= 1
            && self.gamma > 0.0
            && self.lambda1.is_finite()
            && self.lambda2.is_finite()
            && self.coef.is_finite()
            && self.gamma.is_finite();
        if !ok {
            return Err(Error::InvalidParams(format!("invalid kernel configuration {self:?}")));
        }
        Ok(())
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { lambda1: 0.7, lambda2: 0.3, degree: 2, coef: 1.0, gamma: 1.0 }
    }
}

/// `lambda1 (x.sv + c)^d + lambda2 rbf(gamma |x - sv|^2)`.
fn kernel_with(x: &[f64], sv: &[f64], cfg: &KernelConfig, rbf: impl Fn(f64) -> f64) -> f64 {
    let poly = math::powi(matrix::dot(x, sv) + cfg.coef, cfg.degree);
    let mut k = cfg.lambda1 * poly;
    if cfg.lambda2 != 0.0 {
        k += cfg.lambda2 * rbf(cfg.gamma * matrix::sq_dist(x, sv));
    }
    k
}

pub fn hybrid_kernel(x: &[f64], sv: &[f64], cfg: &KernelConfig) -> Result<f64> {
    if x.len() != sv.len() {
        return Err(Error::Mismatch(format!("kernel on vectors of length {} and {}", x.len(), sv.len())));
    }
    Ok(kernel_with(x, sv, cfg, |t| math::exp(-t)))
}

pub(crate) fn kernel_unchecked(x: &[f64], sv: &[f64], cfg: &KernelConfig) -> f64 {
    kernel_with(x, sv, cfg, |t| math::exp(-t))
}

/// Hybrid kernel with the RBF exponential replaced by `approx`, evaluated in
/// the same order as the encrypted pipeline.
pub fn hybrid_kernel_approx(x: &[f64], sv: &[f64], cfg: &KernelConfig, approx: &PolyApprox) -> Result<f64> {
    if x.len() != sv.len() {
        return Err(Error::Mismatch(format!("kernel on vectors of length {} and {}", x.len(), sv.len())));
    }
    Ok(kernel_with(x, sv, cfg, |t| approx.eval_power_tree(t)))
}

/// Fitted preprocessing: raw row -> scaled columns -> selected features.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessing {
    pub scaler: ScalerParams,
    pub selection: FeatureSelection,
}

impl Preprocessing {
    pub fn identity(n: usize) -> Self {
        Self { scaler: ScalerParams::identity(n), selection: FeatureSelection::all(n) }
    }

    /// Fits the scaler on `train` and selects features at `threshold`.
    pub fn fit(train: &Dataset, threshold: f64) -> Result<Self> {
        let scaler = fit_scaler(train)?;
        let z = standardize(train, &scaler)?;
        let selection = select_features(&z, threshold)?;
        Ok(Self { scaler, selection })
    }

    pub fn transform_row(&self, raw: &[f64]) -> Result<Vec<f64>> {
        self.selection.apply_row(&self.scaler.transform_row(raw)?)
    }

    /// Standardizes and selects; a dataset that was already standardized is
    /// rejected.
    pub fn transform(&self, ds: &Dataset) -> Result<Dataset> {
        standardize(ds, &self.scaler)?.select_columns(&self.selection.selected)
    }

    pub fn output_dim(&self) -> usize {
        self.selection.selected.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub support_vectors: Matrix,
    /// `alpha_j y_j` per support vector.
    pub dual_coeffs: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub kernel: KernelConfig,
    pub preprocessing: Preprocessing,
    pub rbf_approx: Option<PolyApprox>,
}

impl SvmModel {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        let k = self.support_vectors.rows();
        if k == 0 || self.dual_coeffs.len() != k {
            return Err(Error::InvalidInput(format!("{k} support vectors, {} coefficients", self.dual_coeffs.len())));
        }
        if self.dual_coeffs.iter().any(|&a| a == 0.0 || !a.is_finite() || math::abs(a) > self.c * (1.0 + 1e-12)) {
            return Err(Error::InvalidInput("dual coefficient outside (0, C]".into()));
        }
        if !self.bias.is_finite() || !(self.c > 0.0) {
            return Err(Error::InvalidInput("invalid bias or C".into()));
        }
        if self.support_vectors.cols() != self.preprocessing.output_dim() {
            return Err(Error::Mismatch("support vector width differs from preprocessing output".into()));
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.support_vectors.cols()
    }

    pub fn n_support(&self) -> usize {
        self.support_vectors.rows()
    }

    /// `sum_j dual_j K(sv_j, x) + b` for a prepared row.
    pub fn decision_score(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.score_with(x, |a, b| kernel_unchecked(a, b, &self.kernel)))
    }

    /// Decision score with the stored RBF approximation substituted.
    pub fn decision_score_approx(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let approx = self.rbf_approx.as_ref().ok_or_else(|| Error::InvalidInput("model has no rbf_approx".into()))?;
        Ok(self.score_with(x, |a, b| kernel_with(a, b, &self.kernel, |t| approx.eval_power_tree(t))))
    }

    fn score_with(&self, x: &[f64], k: impl Fn(&[f64], &[f64]) -> f64) -> f64 {
        self.support_vectors.iter_rows().zip(&self.dual_coeffs).map(|(sv, &a)| a * k(sv, x)).sum::<f64>() + self.bias
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::Mismatch(format!(
                "sample has {} features, model expects {}",
                x.len(),
                self.n_features()
            )));
        }
        Ok(())
    }

    /// `sign(score)` with `sign(0) = +1`.
    pub fn predict(&self, x: &[f64]) -> Result<i8> {
        Ok(if self.decision_score(x)? >= 0.0 { 1 } else { -1 })
    }

    /// Applies the stored preprocessing to a raw row, then scores it.
    pub fn decision_score_raw(&self, raw: &[f64]) -> Result<f64> {
        self.decision_score(&self.preprocessing.transform_row(raw)?)
    }

    /// Largest `gamma |x - sv|^2` over `samples` and the support vectors,
    /// widened as in [`crate::approx::calibrate_interval`].
    pub fn calibrate_interval(&self, samples: &Dataset) -> Result<(f64, f64)> {
        let svs: Vec<&[f64]> = self.support_vectors.iter_rows().collect();
        crate::approx::calibrate_interval(
            self.kernel.gamma,
            samples.features().iter_rows().chain(svs.iter().copied()),
            &svs,
        )
    }
}
