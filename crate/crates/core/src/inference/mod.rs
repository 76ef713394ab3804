//! Encrypted scoring: slot packing, SIMD dot products, the hybrid kernel
//! under encryption, and post-decryption adaptive thresholding.

mod kernel;
mod packing;
mod pipeline;

use alloc::format;
use alloc::vec::Vec;

pub use kernel::{enc_hybrid_kernel, kernel_depth};
pub use packing::{enc_dot, enc_matmul, encode_sv, encrypt_batch, replicate, EncryptedBatch, EncryptedMatrix, Layout};
pub use pipeline::{DepthLedger, EncryptedScore, Pipeline, PipelineOptions, SampleTrace, ServerKeys};

use crate::error::{Error, Result};
use crate::math;

/// Monotonic millisecond clock.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// Clock that always reads zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

impl<F: Fn() -> f64> Clock for F {
    fn now_ms(&self) -> f64 {
        self()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Enc,
    Kernel,
    Thresh,
    Dec,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Enc, Stage::Kernel, Stage::Thresh, Stage::Dec];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Enc => "enc",
            Stage::Kernel => "kernel",
            Stage::Thresh => "thresh",
            Stage::Dec => "dec",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub sigma_floor: f64,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        Self { lambda1: 0.5, lambda2: 0.1, sigma_floor: 1e-6 }
    }
}

impl ThresholdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_floor > 0.0) || !self.lambda1.is_finite() || !self.lambda2.is_finite() {
            return Err(Error::InvalidParams(format!("invalid threshold parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    /// The stddev fell below the floor (constant or single-sample batch).
    pub degenerate: bool,
}

/// `theta = lambda1 * mean + lambda2 / max(stddev, floor)`.
pub fn adaptive_threshold(scores: &[f64], tp: &ThresholdParams) -> Result<Threshold> {
    tp.validate()?;
    if scores.is_empty() {
        return Err(Error::InvalidInput("adaptive threshold needs at least one score".into()));
    }
    let n = scores.len() as f64;
    let mu = scores.iter().sum::<f64>() / n;
    let sd = math::sqrt(scores.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>() / n);
    let degenerate = !(sd >= tp.sigma_floor);
    if degenerate {
        log::warn!("degenerate score batch (stddev {sd:.3e}); using sigma floor {}", tp.sigma_floor);
    }
    let sigma = if degenerate { tp.sigma_floor } else { sd };
    Ok(Threshold { theta: tp.lambda1 * mu + tp.lambda2 / sigma, mu, sigma, degenerate })
}

/// `1` when `score > theta`, else `0`.
pub fn classify(scores: &[f64], theta: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s > theta)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceReport {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub threshold: Threshold,
    /// Mean per-sample milliseconds by stage.
    pub stage_ms: [f64; 4],
    /// Remaining budget (bits) after each stage; the minimum over samples.
    pub noise_bits: [f64; 4],
    pub total_ms: f64,
}

impl InferenceReport {
    /// Aggregates per-sample traces; `thresh_batch_ms` is spread evenly.
    pub fn from_traces(
        scores: Vec<f64>,
        traces: &[SampleTrace],
        tp: &ThresholdParams,
        thresh_batch_ms: f64,
    ) -> Result<Self> {
        let threshold = adaptive_threshold(&scores, tp)?;
        let labels = classify(&scores, threshold.theta);
        let n = traces.len().max(1) as f64;
        let mut stage_ms = [0.0; 4];
        let mut noise_bits = [f64::INFINITY; 4];
        for t in traces {
            for s in 0..4 {
                stage_ms[s] += t.ms[s];
                noise_bits[s] = noise_bits[s].min(t.noise_bits[s]);
            }
        }
        let total_ms = stage_ms.iter().sum::<f64>() + thresh_batch_ms;
        stage_ms.iter_mut().for_each(|m| *m /= n);
        stage_ms[Stage::Thresh as usize] += thresh_batch_ms / n;
        if traces.is_empty() {
            noise_bits = [0.0; 4];
        }
        Ok(Self { scores, labels, threshold, stage_ms, noise_bits, total_ms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_examples() {
        let tp = ThresholdParams::default();
        let t = adaptive_threshold(&[-1.0, 1.0], &tp).unwrap();
        assert!((t.theta - 0.1).abs() < 1e-12);
        let t = adaptive_threshold(&[2.0, 2.0, 2.0], &tp).unwrap();
        assert!(t.degenerate);
        assert!((t.theta - 100_001.0).abs() < 1e-6);
        let t = adaptive_threshold(&[1.0, 3.0], &tp).unwrap();
        assert!((t.theta - 1.1).abs() < 1e-12);
        assert!(adaptive_threshold(&[], &tp).is_err());
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&[0.3], 0.3), alloc::vec![0]);
        assert_eq!(classify(&[5.0, -5.0], 0.0), alloc::vec![1, 0]);
        assert_eq!(classify(&[1.0, 3.0], 1.1), alloc::vec![0, 1]);
    }
}

#[cfg(test)]
mod pipeline_tests;
