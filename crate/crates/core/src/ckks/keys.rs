use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use rand_core::RngCore;

use super::CkksContext;
use crate::error::Result;
use crate::ring::{sample_gaussian, sample_ternary_sparse, sample_uniform, Domain, RingPoly};

/// Sparse ternary secret, stored over the extended basis at the top level.
#[derive(Debug, Clone, PartialEq)]
pub struct SecretKey {
    pub(crate) s: RingPoly,
    pub(crate) digest: [u8; 32],
}

/// `(b, a)` with `b = -a s + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct PublicKey {
    pub(crate) b: RingPoly,
    pub(crate) a: RingPoly,
    pub(crate) digest: [u8; 32],
}

impl PublicKey {
    pub fn b(&self) -> &RingPoly {
        &self.b
    }
    pub fn a(&self) -> &RingPoly {
        &self.a
    }
}

/// Hybrid key-switching key with one digit per data prime:
/// `b_i = -a_i s + e_i + P [i == t] s'` in residue `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct KeySwitchKey {
    pub(crate) b: Vec<RingPoly>,
    pub(crate) a: Vec<RingPoly>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelinKey {
    pub(crate) key: KeySwitchKey,
    pub(crate) digest: [u8; 32],
}

/// Galois keys indexed by signed left-rotation step.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationKeys {
    pub(crate) keys: BTreeMap<i64, KeySwitchKey>,
    pub(crate) digest: [u8; 32],
}

impl RotationKeys {
    pub fn steps(&self) -> impl Iterator<Item = i64> + '_ {
        self.keys.keys().copied()
    }

    pub fn contains(&self, step: i64) -> bool {
        self.keys.contains_key(&step)
    }
}

#[derive(Debug, Clone)]
pub struct KeySet {
    pub secret: SecretKey,
    pub public: PublicKey,
    pub relin: RelinKey,
    pub rotation: RotationKeys,
}

impl CkksContext {
    /// Left rotations by `1, 2, 4, ..., slots/2`.
    pub fn power_of_two_steps(&self) -> Vec<i64> {
        let mut steps = Vec::new();
        let mut k = 1;
        while k < self.slots() {
            steps.push(k as i64);
            k <<= 1;
        }
        steps
    }

    /// Generates all keys; `rotation_steps` are signed left-rotation amounts.
    pub fn keygen(&self, rotation_steps: &[i64], rng: &mut impl RngCore) -> Result<KeySet> {
        let secret = self.gen_secret(rng)?;
        let public = self.gen_public(&secret, rng)?;
        let relin = self.gen_relin(&secret, rng)?;
        let rotation = self.gen_rotation(&secret, rotation_steps, rng)?;
        Ok(KeySet { secret, public, relin, rotation })
    }

    pub fn gen_secret(&self, rng: &mut impl RngCore) -> Result<SecretKey> {
        let ring = &self.ring;
        let mut s = sample_ternary_sparse(ring, self.params.secret_weight(), ring.max_level(), true, rng)?;
        ring.to_eval(&mut s)?;
        Ok(SecretKey { s, digest: self.digest })
    }

    pub fn gen_public(&self, sk: &SecretKey, rng: &mut impl RngCore) -> Result<PublicKey> {
        let ring = &self.ring;
        let top = ring.max_level();
        let a = sample_uniform(ring, top, true, Domain::Evaluation, rng);
        let mut e = sample_gaussian(ring, self.params.error_stddev(), top, true, rng)?;
        ring.to_eval(&mut e)?;
        let b = ring.sub(&e, &ring.mul(&a, &sk.s)?)?;
        Ok(PublicKey { b, a, digest: self.digest })
    }

    pub fn gen_relin(&self, sk: &SecretKey, rng: &mut impl RngCore) -> Result<RelinKey> {
        let s2 = self.ring.mul(&sk.s, &sk.s)?;
        Ok(RelinKey { key: self.gen_switch_key(sk, &s2, rng)?, digest: self.digest })
    }

    pub fn gen_rotation(&self, sk: &SecretKey, steps: &[i64], rng: &mut impl RngCore) -> Result<RotationKeys> {
        let ring = &self.ring;
        let s_coeff = ring.ntt_inverse(&sk.s)?;
        let mut keys = BTreeMap::new();
        for &step in steps {
            if keys.contains_key(&step) {
                continue;
            }
            let g = self.encoder.galois_element(step);
            let mut rotated = ring.automorphism(&s_coeff, g)?;
            ring.to_eval(&mut rotated)?;
            keys.insert(step, self.gen_switch_key(sk, &rotated, rng)?);
        }
        Ok(RotationKeys { keys, digest: self.digest })
    }

    /// Key switching from `target` (extended, evaluation domain) to `sk`.
    fn gen_switch_key(&self, sk: &SecretKey, target: &RingPoly, rng: &mut impl RngCore) -> Result<KeySwitchKey> {
        let ring = &self.ring;
        let top = ring.max_level();
        let mut bs = Vec::with_capacity(top);
        let mut as_ = Vec::with_capacity(top);
        for i in 0..top {
            let a = sample_uniform(ring, top, true, Domain::Evaluation, rng);
            let mut e = sample_gaussian(ring, self.params.error_stddev(), top, true, rng)?;
            ring.to_eval(&mut e)?;
            let mut b = ring.sub(&e, &ring.mul(&a, &sk.s)?)?;
            let m = ring.modulus(i);
            let p = self.p_mod_q[i];
            for (dst, &t) in b.residues[i].iter_mut().zip(&target.residues[i]) {
                *dst = m.add(*dst, m.mul(p, t));
            }
            bs.push(b);
            as_.push(a);
        }
        Ok(KeySwitchKey { b: bs, a: as_ })
    }

    /// Switches `c * s'` to `(d0, d1)` with `d0 + d1 s ~ c s'`.
    /// `c` is a non-extended evaluation-domain polynomial.
    pub(crate) fn key_switch(&self, c: &RingPoly, key: &KeySwitchKey) -> Result<(RingPoly, RingPoly)> {
        let ring = &self.ring;
        let level = c.level();
        let top = ring.max_level();
        let sp = self.params.ring().special_moduli().len();
        let c_coeff = ring.ntt_inverse(c)?;
        let mut acc0 = ring.zero(level, true, Domain::Evaluation);
        let mut acc1 = ring.zero(level, true, Domain::Evaluation);
        let n = ring.n();
        let mut digit = alloc::vec![0u64; n];
        for i in 0..level {
            for t in 0..level + sp {
                let (global, key_idx) = if t < level { (t, t) } else { (top + t - level, top + t - level) };
                let m = ring.modulus(global);
                let d: &[u64] = if t == i {
                    &c.residues[i]
                } else {
                    for (dst, &x) in digit.iter_mut().zip(&c_coeff.residues[i]) {
                        *dst = m.reduce(x);
                    }
                    ring.table(global).forward(&mut digit);
                    &digit
                };
                let kb = &key.b[i].residues[key_idx];
                let ka = &key.a[i].residues[key_idx];
                let r0 = &mut acc0.residues[t];
                for k in 0..n {
                    r0[k] = m.add(r0[k], m.mul(d[k], kb[k]));
                }
                let r1 = &mut acc1.residues[t];
                for k in 0..n {
                    r1[k] = m.add(r1[k], m.mul(d[k], ka[k]));
                }
            }
        }
        Ok((self.mod_down(&acc0)?, self.mod_down(&acc1)?))
    }
}
