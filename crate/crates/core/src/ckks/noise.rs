//! Heuristic noise tracking.
//!
//! Every ciphertext carries `noise_bits`, an estimate of log2 of the noise
//! magnitude in its coefficient representation, measured at the current
//! scale. The remaining budget is the headroom between the ciphertext
//! modulus and the scaled message plus noise:
//!
//! `budget = log2(Q_level) - log2(scale) - noise_bits`, floored at zero.
//!
//! Operations only ever add to `noise_bits` (via [`charge`]) so the budget
//! is non-increasing along any evaluation path. Rescaling both divides the
//! noise and removes a prime, which the formula reflects through the level.

use super::{Ciphertext, CkksContext};
use crate::math;

/// Six standard deviations of the rounding term left by a mod-down with a
/// sparse secret of weight `h`: `(1 + h)` uniform terms of variance `1/12`
/// in each of `n` coefficient products.
pub fn fresh_bits(n: usize, h: usize) -> f64 {
    math::log2(6.0 * math::sqrt(n as f64 * (h as f64 + 1.0) / 12.0))
}

/// `log2(2^a + 2^b)`.
pub fn charge(a: f64, b: f64) -> f64 {
    math::log2_sum(a, b)
}

/// Budget of `ct` under `ctx`.
pub fn budget(ctx: &CkksContext, ct: &Ciphertext) -> f64 {
    let log_q: f64 = ctx.params().ring().moduli()[..ct.level()].iter().map(|&q| math::log2(q as f64)).sum();
    let b = log_q - math::log2(ct.scale()) - ct.noise_bits();
    if b > 0.0 {
        b
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_floor_values() {
        // n = 8192, h = 32
        let f = fresh_bits(8192, 32);
        assert!((f - 9.82).abs() < 0.05, "{f}");
        assert!(fresh_bits(32768, 32) > f);
    }

    #[test]
    fn charge_is_monotone() {
        for &(a, b) in &[(0.0, 0.0), (10.0, 3.0), (3.0, 10.0), (-5.0, 40.0)] {
            let c = charge(a, b);
            assert!(c >= a && c >= b);
            assert!(c <= a.max(b) + 1.0 + 1e-12);
        }
    }
}
