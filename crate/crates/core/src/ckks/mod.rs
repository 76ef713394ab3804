//! Leveled CKKS over the RNS ring.
//!
//! Ciphertexts live in the evaluation domain. Key switching and encryption
//! work over the data chain extended by one or two special primes `P`, and
//! return to the data chain by a rounded division by `P` (mod-down), so the
//! noise they leave behind is dominated by that rounding. Multiplications are
//! followed by a rescale that first multiplies by a small integer chosen so
//! the output scale lands on `delta` to within `delta / (2 q_top)` relative.

mod encoding;
mod eval;
mod keys;
pub mod noise;
mod params;
mod serial;

use alloc::format;
use alloc::vec::Vec;
use rand_core::RngCore;

pub use keys::{KeySet, KeySwitchKey, PublicKey, RelinKey, RotationKeys, SecretKey};
pub use params::{CkksParams, DEFAULT_SECRET_WEIGHT, DESK_SECRET_WEIGHT};
pub use serial::{ObjectKind, FORMAT_VERSION, MAGIC};

use crate::error::{Error, Result};
use crate::math::{self, Modulus};
use crate::ring::{sample_gaussian, sample_ternary, Domain, RingContext, RingPoly};
use encoding::Encoder;

/// Encoded (unencrypted) slot vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Plaintext {
    pub(crate) poly: RingPoly,
    pub(crate) scale: f64,
    pub(crate) slot_count: usize,
    pub(crate) max_abs: f64,
}

impl Plaintext {
    /// Evaluation-domain polynomial.
    pub fn poly(&self) -> &RingPoly {
        &self.poly
    }
    pub fn scale(&self) -> f64 {
        self.scale
    }
    pub fn level(&self) -> usize {
        self.poly.level()
    }
    pub fn slot_count(&self) -> usize {
        self.slot_count
    }
    /// Largest absolute encoded value (zero for decrypted plaintexts).
    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }
}

/// RLWE ciphertext with 2 parts (3 between multiply and relinearize).
#[derive(Debug, Clone, PartialEq)]
pub struct Ciphertext {
    pub(crate) parts: Vec<RingPoly>,
    pub(crate) scale: f64,
    pub(crate) noise_bits: f64,
}

impl Ciphertext {
    pub fn level(&self) -> usize {
        self.parts[0].level()
    }
    pub fn scale(&self) -> f64 {
        self.scale
    }
    pub fn parts(&self) -> &[RingPoly] {
        &self.parts
    }
    pub fn size(&self) -> usize {
        self.parts.len()
    }
    /// log2 of the tracked noise magnitude estimate.
    pub fn noise_bits(&self) -> f64 {
        self.noise_bits
    }
}

/// Parameters plus every precomputation the scheme needs.
#[derive(Debug, Clone)]
pub struct CkksContext {
    params: CkksParams,
    ring: RingContext,
    encoder: Encoder,
    /// `P mod q_t` and `P^-1 mod q_t` for every data prime.
    p_mod_q: Vec<u64>,
    p_inv_mod_q: Vec<u64>,
    /// `p_0^-1 mod p_1` when two special primes are in use.
    special_crt: u64,
    special_product: u128,
    fresh_noise_bits: f64,
    digest: [u8; 32],
}

impl CkksContext {
    pub fn new(params: CkksParams) -> Result<Self> {
        let ring = RingContext::new(params.ring().clone())?;
        let special = params.ring().special_moduli();
        let special_product: u128 = special.iter().map(|&p| p as u128).product();
        let mut p_mod_q = Vec::new();
        let mut p_inv_mod_q = Vec::new();
        for &q in params.ring().moduli() {
            let m = Modulus::new(q);
            let pm = special.iter().fold(1u64, |acc, &p| m.mul(acc, m.reduce(p)));
            p_mod_q.push(pm);
            p_inv_mod_q.push(m.inv(pm));
        }
        let special_crt = if special.len() == 2 { Modulus::new(special[1]).inv(special[0] % special[1]) } else { 0 };
        let fresh_noise_bits = noise::fresh_bits(params.ring().n(), params.secret_weight());
        let digest = params.digest();
        Ok(Self {
            encoder: Encoder::new(params.ring().n()),
            params,
            ring,
            p_mod_q,
            p_inv_mod_q,
            special_crt,
            special_product,
            fresh_noise_bits,
            digest,
        })
    }

    pub fn params(&self) -> &CkksParams {
        &self.params
    }

    pub fn ring(&self) -> &RingContext {
        &self.ring
    }

    pub fn slots(&self) -> usize {
        self.encoder.slots()
    }

    pub fn max_level(&self) -> usize {
        self.ring.max_level()
    }

    pub fn delta(&self) -> f64 {
        self.params.delta()
    }

    pub fn digest(&self) -> &[u8; 32] {
        &self.digest
    }

    /// Noise floor (log2) of a fresh ciphertext; also the bound used for
    /// every mod-down rounding term.
    pub fn fresh_noise_bits(&self) -> f64 {
        self.fresh_noise_bits
    }

    /// Encodes up to `n/2` real values at `scale` and `level`.
    pub fn encode(&self, values: &[f64], scale: f64, level: usize) -> Result<Plaintext> {
        if values.len() > self.slots() {
            return Err(Error::InvalidInput(format!("{} values exceed {} slots", values.len(), self.slots())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value".into()));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidInput(format!("scale {scale} must be positive")));
        }
        if level == 0 || level > self.max_level() {
            return Err(Error::InvalidInput(format!("level {level} outside 1..={}", self.max_level())));
        }
        let coeffs = self.encoder.embed_inverse(values);
        let mut poly = self.ring.zero(level, false, Domain::Coefficient);
        let limit = 1.329_227_995_784_916e36; // 2^120
        for (k, &c) in coeffs.iter().enumerate() {
            let x = math::round(c * scale);
            if math::abs(x) >= limit {
                return Err(Error::InvalidInput("encoded coefficient overflows".into()));
            }
            let xi = x as i128;
            for (i, r) in poly.residues.iter_mut().enumerate() {
                r[k] = self.ring.modulus(i).reduce_i128(xi);
            }
        }
        self.ring.to_eval(&mut poly)?;
        let max_abs = values.iter().fold(0.0f64, |m, v| m.max(math::abs(*v)));
        Ok(Plaintext { poly, scale, slot_count: values.len(), max_abs })
    }

    /// Decodes all `n/2` slots.
    pub fn decode(&self, pt: &Plaintext) -> Result<Vec<f64>> {
        let coeff = self.ring.ntt_inverse(&pt.poly)?;
        let centered = self.centered_coeffs(&coeff);
        let inv = 1.0 / pt.scale;
        let scaled: Vec<f64> = centered.iter().map(|&c| c as f64 * inv).collect();
        Ok(self.encoder.embed(&scaled))
    }

    /// Centered integer coefficients from the lowest one or two residues.
    fn centered_coeffs(&self, p: &RingPoly) -> Vec<i128> {
        let m0 = *self.ring.modulus(0);
        if p.level() == 1 {
            return p.residues[0].iter().map(|&x| m0.center(x) as i128).collect();
        }
        let m1 = *self.ring.modulus(1);
        let q0 = m0.value() as u128;
        let big = q0 * m1.value() as u128;
        let q0_inv = m1.inv(m1.reduce(m0.value()));
        p.residues[0]
            .iter()
            .zip(&p.residues[1])
            .map(|(&a, &b)| {
                let t = m1.mul(m1.sub(b, m1.reduce(a)), q0_inv);
                let x = a as u128 + q0 * t as u128;
                if x > big / 2 {
                    x as i128 - big as i128
                } else {
                    x as i128
                }
            })
            .collect()
    }

    /// Public-key encryption at the plaintext's level.
    ///
    /// The RLWE sample is formed over the extended basis with the message
    /// multiplied by `P`, then divided back down by `P`.
    pub fn encrypt(&self, pt: &Plaintext, pk: &PublicKey, rng: &mut impl RngCore) -> Result<Ciphertext> {
        self.check_key_digest(&pk.digest)?;
        let level = pt.level();
        let ring = &self.ring;
        let mut v = sample_ternary(ring, level, true, rng)?;
        ring.to_eval(&mut v)?;
        let mut e0 = sample_gaussian(ring, self.params.error_stddev(), level, true, rng)?;
        let mut e1 = sample_gaussian(ring, self.params.error_stddev(), level, true, rng)?;
        ring.to_eval(&mut e0)?;
        ring.to_eval(&mut e1)?;
        let b = ring.restrict(&pk.b, level, true)?;
        let a = ring.restrict(&pk.a, level, true)?;
        let mut c0 = ring.mul(&v, &b)?;
        ring.add_assign(&mut c0, &e0)?;
        for t in 0..level {
            let m = ring.modulus(t);
            let s = self.p_mod_q[t];
            let ss = m.shoup(s);
            for (dst, &x) in c0.residues[t].iter_mut().zip(&pt.poly.residues[t]) {
                *dst = m.add(*dst, m.mul_shoup(x, s, ss));
            }
        }
        let mut c1 = ring.mul(&v, &a)?;
        ring.add_assign(&mut c1, &e1)?;
        Ok(Ciphertext {
            parts: alloc::vec![self.mod_down(&c0)?, self.mod_down(&c1)?],
            scale: pt.scale,
            noise_bits: self.fresh_noise_bits,
        })
    }

    /// `c0 + c1 s`; 3-part ciphertexts are rejected.
    pub fn decrypt(&self, ct: &Ciphertext, sk: &SecretKey) -> Result<Plaintext> {
        self.check_key_digest(&sk.digest)?;
        if ct.size() != 2 {
            return Err(Error::NotRelinearized(ct.size()));
        }
        let s = self.ring.restrict(&sk.s, ct.level(), false)?;
        let mut m = self.ring.mul(&ct.parts[1], &s)?;
        self.ring.add_assign(&mut m, &ct.parts[0])?;
        Ok(Plaintext { poly: m, scale: ct.scale, slot_count: self.slots(), max_abs: 0.0 })
    }

    /// Convenience: decrypt then decode.
    pub fn decrypt_decode(&self, ct: &Ciphertext, sk: &SecretKey) -> Result<Vec<f64>> {
        self.decode(&self.decrypt(ct, sk)?)
    }

    /// Convenience: encode at `delta` and the top level, then encrypt.
    pub fn encrypt_values(&self, values: &[f64], pk: &PublicKey, rng: &mut impl RngCore) -> Result<Ciphertext> {
        let pt = self.encode(values, self.delta(), self.max_level())?;
        self.encrypt(&pt, pk, rng)
    }

    pub(crate) fn check_key_digest(&self, d: &[u8; 32]) -> Result<()> {
        if d != &self.digest {
            return Err(Error::DigestMismatch);
        }
        Ok(())
    }

    /// Rounded division of an extended evaluation-domain polynomial by `P`.
    pub(crate) fn mod_down(&self, x: &RingPoly) -> Result<RingPoly> {
        debug_assert!(x.extended && x.domain == Domain::Evaluation);
        let ring = &self.ring;
        let level = x.level;
        let n = ring.n();
        let l = ring.max_level();
        let special = self.params.ring().special_moduli();
        // Special residues back to coefficients.
        let mut sp: Vec<Vec<u64>> = Vec::with_capacity(special.len());
        for j in 0..special.len() {
            let mut r = x.residues[level + j].clone();
            ring.table(l + j).inverse(&mut r);
            sp.push(r);
        }
        let half = self.special_product / 2;
        // CRT value v in [0, P) as (low residue, high digit): v = s0 + p0 * w.
        let (p0, w): (u64, Vec<u64>) = if special.len() == 2 {
            let m1 = ring.modulus(l + 1);
            let crt = self.special_crt;
            let crt_s = m1.shoup(crt);
            let w =
                sp[0].iter().zip(&sp[1]).map(|(&a, &b)| m1.mul_shoup(m1.sub(b, m1.reduce(a)), crt, crt_s)).collect();
            (special[0], w)
        } else {
            (special[0], alloc::vec![0; n])
        };
        let mut out = ring.zero(level, false, Domain::Coefficient);
        for t in 0..level {
            let m = ring.modulus(t);
            let p0_t = m.reduce(p0);
            let big_t = self.p_mod_q[t];
            let dst = &mut out.residues[t];
            for k in 0..n {
                let s0 = sp[0][k];
                let v = s0 as u128 + p0 as u128 * w[k] as u128;
                let mut r = m.add(m.reduce(s0), m.mul(p0_t, m.reduce(w[k])));
                if v > half {
                    r = m.sub(r, big_t);
                }
                dst[k] = r;
            }
        }
        ring.to_eval(&mut out)?;
        for t in 0..level {
            let m = ring.modulus(t);
            let inv = self.p_inv_mod_q[t];
            let inv_s = m.shoup(inv);
            for (o, &xv) in out.residues[t].iter_mut().zip(&x.residues[t]) {
                *o = m.mul_shoup(m.sub(xv, *o), inv, inv_s);
            }
        }
        Ok(out)
    }

    /// Remaining noise budget in bits; an estimate, see [`noise`].
    pub fn noise_budget(&self, ct: &Ciphertext) -> f64 {
        noise::budget(self, ct)
    }
}
