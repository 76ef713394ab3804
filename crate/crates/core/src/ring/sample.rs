//! Key and error distributions.

use alloc::format;
use alloc::vec::Vec;
use rand_core::RngCore;

use super::{Domain, RingContext, RingPoly};
use crate::error::{Error, Result};
use crate::math;

/// Error distribution standard deviation.
pub const DEFAULT_STDDEV: f64 = 3.2;

fn uniform_below(rng: &mut impl RngCore, bound: u64) -> u64 {
    // Rejection sampling on the largest multiple of `bound`.
    let zone = u64::MAX - (u64::MAX % bound);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % bound;
        }
    }
}

fn unit_f64(rng: &mut impl RngCore) -> f64 {
    // 53 random bits in (0, 1].
    ((rng.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64
}

/// Uniform ternary coefficients in `{-1, 0, 1}`.
pub fn sample_ternary(ctx: &RingContext, level: usize, extended: bool, rng: &mut impl RngCore) -> Result<RingPoly> {
    let coeffs: Vec<i64> = (0..ctx.n()).map(|_| uniform_below(rng, 3) as i64 - 1).collect();
    ctx.from_coeffs(&coeffs, level, extended)
}

/// Ternary coefficients with exactly `weight` nonzero entries.
pub fn sample_ternary_sparse(
    ctx: &RingContext,
    weight: usize,
    level: usize,
    extended: bool,
    rng: &mut impl RngCore,
) -> Result<RingPoly> {
    let n = ctx.n();
    if weight == 0 || weight > n {
        return Err(Error::InvalidParams(format!("hamming weight {weight} outside 1..={n}")));
    }
    let mut coeffs = alloc::vec![0i64; n];
    let mut placed = 0;
    while placed < weight {
        let pos = uniform_below(rng, n as u64) as usize;
        if coeffs[pos] == 0 {
            coeffs[pos] = if rng.next_u32() & 1 == 0 { 1 } else { -1 };
            placed += 1;
        }
    }
    ctx.from_coeffs(&coeffs, level, extended)
}

/// Rounded continuous Gaussian with the given standard deviation.
pub fn sample_gaussian(
    ctx: &RingContext,
    stddev: f64,
    level: usize,
    extended: bool,
    rng: &mut impl RngCore,
) -> Result<RingPoly> {
    if !(stddev > 0.0) || !stddev.is_finite() {
        return Err(Error::InvalidParams(format!("gaussian stddev {stddev} must be positive")));
    }
    let n = ctx.n();
    let mut coeffs = Vec::with_capacity(n);
    while coeffs.len() < n {
        // Box-Muller, both outputs used.
        let u1 = unit_f64(rng);
        let u2 = unit_f64(rng);
        let r = math::sqrt(-2.0 * math::ln(u1)) * stddev;
        let t = 2.0 * core::f64::consts::PI * u2;
        coeffs.push(math::round(r * math::cos(t)) as i64);
        if coeffs.len() < n {
            coeffs.push(math::round(r * math::sin(t)) as i64);
        }
    }
    ctx.from_coeffs(&coeffs, level, extended)
}

/// Independent uniform residues. Uniformity is preserved by the NTT, so the
/// caller chooses the domain label.
pub fn sample_uniform(
    ctx: &RingContext,
    level: usize,
    extended: bool,
    domain: Domain,
    rng: &mut impl RngCore,
) -> RingPoly {
    let mut p = ctx.zero(level, extended, domain);
    for (i, r) in p.residues.iter_mut().enumerate() {
        let q = ctx.residue_modulus(level, i).value();
        r.iter_mut().for_each(|x| *x = uniform_below(rng, q));
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::RingParams;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn ctx() -> RingContext {
        RingContext::new(RingParams::generate(1024, &[40, 40], &[]).unwrap()).unwrap()
    }

    #[test]
    fn seeded_samplers_are_deterministic() {
        let c = ctx();
        let a = sample_gaussian(&c, 3.2, 2, false, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        let b = sample_gaussian(&c, 3.2, 2, false, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let u = sample_uniform(&c, 2, false, Domain::Evaluation, &mut ChaCha20Rng::seed_from_u64(1));
        let v = sample_uniform(&c, 2, false, Domain::Evaluation, &mut ChaCha20Rng::seed_from_u64(1));
        assert_eq!(u, v);
        let q0 = c.modulus(0).value();
        assert!(u.residue(0).iter().all(|&x| x < q0));
    }

    #[test]
    fn ternary_range() {
        let c = ctx();
        let t = sample_ternary(&c, 2, false, &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        let m = c.modulus(0);
        assert!(t.residue(0).iter().all(|&x| [-1i64, 0, 1].contains(&m.center(x))));
        let s = sample_ternary_sparse(&c, 64, 2, false, &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        assert_eq!(s.residue(0).iter().filter(|&&x| x != 0).count(), 64);
        assert!(s.residue(0).iter().all(|&x| [-1i64, 0, 1].contains(&m.center(x))));
    }

    #[test]
    fn gaussian_stddev_close_to_target() {
        let c = ctx();
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let m = *c.modulus(0);
        let mut values = Vec::new();
        while values.len() < 100_000 {
            let p = sample_gaussian(&c, 3.2, 1, false, &mut rng).unwrap();
            values.extend(p.residue(0).iter().map(|&x| m.center(x) as f64));
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
        let sd = var.sqrt();
        // Rounding adds 1/12 to the variance; 5% covers it at this stddev.
        assert!((sd - 3.2).abs() / 3.2 < 0.05, "sample stddev {sd}");
        assert!(sample_gaussian(&c, 0.0, 1, false, &mut rng).is_err());
    }
}
