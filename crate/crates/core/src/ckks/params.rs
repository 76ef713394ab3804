use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ring::{RingParams, DEFAULT_STDDEV};

/// Nonzero coefficients of the sparse ternary secret.
pub const DEFAULT_SECRET_WEIGHT: usize = 32;
/// Secret weight of the desk preset. At delta = 2^20 the fresh noise is
/// dominated by the mod-down rounding term `r1 * s`, whose slot magnitude
/// grows with `sqrt(h + 1)`; weight 12 keeps a sum of two fresh
/// ciphertexts under 1e-3 per slot.
pub const DESK_SECRET_WEIGHT: usize = 12;

/// Scheme parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CkksParams {
    ring: RingParams,
    delta: f64,
    secret_weight: usize,
    error_stddev: f64,
    security_label: String,
}

impl CkksParams {
    pub fn new(ring: RingParams, delta: f64) -> Result<Self> {
        Self::with_options(ring, delta, DEFAULT_SECRET_WEIGHT, DEFAULT_STDDEV, "unspecified")
    }

    pub fn with_options(
        ring: RingParams,
        delta: f64,
        secret_weight: usize,
        error_stddev: f64,
        security_label: &str,
    ) -> Result<Self> {
        if !delta.is_finite() || delta < 1024.0 {
            return Err(Error::InvalidParams(format!("delta {delta} must be >= 2^10")));
        }
        let log_delta = crate::math::log2(delta);
        let moduli = ring.moduli();
        // Every modulus that can end up at the top of the chain during a
        // rescale, and the base, must leave room for one scale factor.
        for &q in moduli {
            let bits = 64 - q.leading_zeros();
            if (bits as f64) <= log_delta {
                return Err(Error::InvalidParams(format!(
                    "modulus {q} ({bits} bits) is not larger than delta 2^{log_delta:.1}"
                )));
            }
        }
        let sp = ring.special_moduli().len();
        if !(1..=2).contains(&sp) {
            return Err(Error::InvalidParams(format!("need 1 or 2 special moduli, got {sp}")));
        }
        if secret_weight == 0 || secret_weight > ring.n() {
            return Err(Error::InvalidParams(format!("secret weight {secret_weight} out of range")));
        }
        if !(error_stddev > 0.0) {
            return Err(Error::InvalidParams("error stddev must be positive".into()));
        }
        Ok(Self { ring, delta, secret_weight, error_stddev, security_label: security_label.to_string() })
    }

    /// Build from bit sizes: `data_bits` base first, then the rescale primes.
    pub fn from_bits(n: usize, data_bits: &[u32], special_bits: &[u32], delta: f64, label: &str) -> Result<Self> {
        let ring = RingParams::generate(n, data_bits, special_bits)?;
        Self::with_options(ring, delta, DEFAULT_SECRET_WEIGHT, DEFAULT_STDDEV, label)
    }

    /// Desk-scale default: n = 8192, a 60-bit base with three 40-bit
    /// rescale primes, two 61-bit special primes, delta = 2^20, and a
    /// secret of weight [`DESK_SECRET_WEIGHT`].
    pub fn desk() -> Self {
        let ring = RingParams::generate(8192, &[60, 40, 40, 40], &[61, 61]).expect("built-in parameter set");
        Self::with_options(ring, (1u64 << 20) as f64, DESK_SECRET_WEIGHT, DEFAULT_STDDEV, "research-desk")
            .expect("built-in parameter set")
    }

    /// n = 32768, delta = 2^20, three rescale levels over a 60-bit base.
    pub fn paper() -> Self {
        Self::from_bits(32768, &[60, 30, 30, 30], &[61, 61], (1u64 << 20) as f64, "research-n32768")
            .expect("built-in parameter set")
    }

    pub fn ring(&self) -> &RingParams {
        &self.ring
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn slots(&self) -> usize {
        self.ring.n() / 2
    }

    pub fn max_level(&self) -> usize {
        self.ring.level_count()
    }

    pub fn secret_weight(&self) -> usize {
        self.secret_weight
    }

    pub fn error_stddev(&self) -> f64 {
        self.error_stddev
    }

    pub fn security_label(&self) -> &str {
        &self.security_label
    }

    /// Canonical byte encoding; the label is informational and excluded.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"hesvm-ckks-params");
        out.extend_from_slice(&(self.ring.n() as u64).to_le_bytes());
        out.extend_from_slice(&(self.ring.moduli().len() as u64).to_le_bytes());
        for q in self.ring.moduli() {
            out.extend_from_slice(&q.to_le_bytes());
        }
        out.extend_from_slice(&(self.ring.special_moduli().len() as u64).to_le_bytes());
        for q in self.ring.special_moduli() {
            out.extend_from_slice(&q.to_le_bytes());
        }
        out.extend_from_slice(&self.delta.to_bits().to_le_bytes());
        out.extend_from_slice(&(self.secret_weight as u64).to_le_bytes());
        out.extend_from_slice(&self.error_stddev.to_bits().to_le_bytes());
        out
    }

    /// SHA-256 of [`Self::canonical_bytes`].
    pub fn digest(&self) -> [u8; 32] {
        let d = Sha256::digest(self.canonical_bytes());
        let mut out = [0u8; 32];
        out.copy_from_slice(&d);
        out
    }
}
