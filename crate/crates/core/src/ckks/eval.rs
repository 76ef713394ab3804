//! Homomorphic operations.

use alloc::format;
use alloc::vec::Vec;

use super::keys::{KeySwitchKey, RelinKey, RotationKeys};
use super::noise::charge;
use super::{Ciphertext, CkksContext, Plaintext};
use crate::error::{Error, Result};
use crate::math;
use crate::ring::{Domain, RingPoly};

/// Largest relative scale difference accepted by additive operations.
pub const SCALE_TOLERANCE: f64 = 1.0 / 1_048_576.0;

fn scales_match(a: f64, b: f64) -> bool {
    math::abs(a - b) <= SCALE_TOLERANCE * a.max(b)
}

impl CkksContext {
    fn align(&self, a: &Ciphertext, b: &Ciphertext) -> Result<(Ciphertext, Ciphertext)> {
        let level = a.level().min(b.level());
        Ok((self.drop_to_level(a, level)?, self.drop_to_level(b, level)?))
    }

    fn check_scales(a: f64, b: f64) -> Result<()> {
        if !scales_match(a, b) {
            return Err(Error::ScaleMismatch(a, b));
        }
        Ok(())
    }

    /// Drops residues down to `level`; the scale is unchanged.
    pub fn drop_to_level(&self, ct: &Ciphertext, level: usize) -> Result<Ciphertext> {
        if level == ct.level() {
            return Ok(ct.clone());
        }
        let parts = ct.parts.iter().map(|p| self.ring.drop_to_level(p, level)).collect::<Result<Vec<_>>>()?;
        Ok(Ciphertext { parts, scale: ct.scale, noise_bits: ct.noise_bits })
    }

    /// Slot-wise sum. Operands at different levels meet at the lower one.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        Self::check_scales(a.scale, b.scale)?;
        let (a, b) = self.align(a, b)?;
        let size = a.size().max(b.size());
        let mut parts = Vec::with_capacity(size);
        for i in 0..size {
            parts.push(match (a.parts.get(i), b.parts.get(i)) {
                (Some(x), Some(y)) => self.ring.add(x, y)?,
                (Some(x), None) | (None, Some(x)) => x.clone(),
                (None, None) => unreachable!(),
            });
        }
        Ok(Ciphertext { parts, scale: a.scale, noise_bits: charge(a.noise_bits, b.noise_bits) })
    }

    pub fn neg(&self, a: &Ciphertext) -> Ciphertext {
        Ciphertext { parts: a.parts.iter().map(|p| self.ring.neg(p)).collect(), ..a.clone() }
    }

    pub fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.add(a, &self.neg(b))
    }

    /// Adds an encoded plaintext (at any level not below the ciphertext's).
    pub fn add_plain(&self, ct: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        Self::check_scales(ct.scale, pt.scale)?;
        let p = self.plain_at(pt, ct.level())?;
        let mut out = ct.clone();
        self.ring.add_assign(&mut out.parts[0], &p)?;
        Ok(out)
    }

    /// Adds the real constant `c` to every slot.
    pub fn add_const(&self, ct: &Ciphertext, c: f64) -> Result<Ciphertext> {
        if !c.is_finite() {
            return Err(Error::InvalidInput("non-finite constant".into()));
        }
        let v = math::round(c * ct.scale) as i128;
        let mut out = ct.clone();
        let level = ct.level();
        for (i, r) in out.parts[0].residues.iter_mut().enumerate() {
            let m = self.ring.residue_modulus(level, i);
            let x = m.reduce_i128(v);
            r.iter_mut().for_each(|y| *y = m.add(*y, x));
        }
        Ok(out)
    }

    /// Multiplies by a small integer without consuming a level.
    pub fn mul_int(&self, ct: &Ciphertext, k: i64) -> Ciphertext {
        let parts = ct.parts.iter().map(|p| self.ring.mul_scalar(p, k as i128)).collect();
        let grow = math::log2((k.unsigned_abs() as f64).max(1.0));
        Ciphertext { parts, scale: ct.scale, noise_bits: ct.noise_bits + grow }
    }

    fn plain_at(&self, pt: &Plaintext, level: usize) -> Result<RingPoly> {
        if pt.level() < level {
            return Err(Error::LevelExhausted(format!(
                "plaintext at level {} used with ciphertext at level {level}",
                pt.level()
            )));
        }
        self.ring.restrict(&pt.poly, level, false)
    }

    /// Tensor product without relinearization or rescale: 3 parts, scale
    /// `scale_a * scale_b`.
    pub fn mul_raw(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        if a.size() != 2 || b.size() != 2 {
            return Err(Error::NotRelinearized(a.size().max(b.size())));
        }
        let (a, b) = self.align(a, b)?;
        let ring = &self.ring;
        let d0 = ring.mul(&a.parts[0], &b.parts[0])?;
        let mut d1 = ring.mul(&a.parts[0], &b.parts[1])?;
        ring.mul_add_assign(&mut d1, &a.parts[1], &b.parts[0])?;
        let d2 = ring.mul(&a.parts[1], &b.parts[1])?;
        Ok(Ciphertext {
            parts: alloc::vec![d0, d1, d2],
            scale: a.scale * b.scale,
            noise_bits: charge(charge(a.noise_bits, b.noise_bits), self.fresh_noise_bits),
        })
    }

    pub fn relinearize(&self, ct: &Ciphertext, rlk: &RelinKey) -> Result<Ciphertext> {
        self.check_key_digest(&rlk.digest)?;
        match ct.size() {
            2 => Ok(ct.clone()),
            3 => {
                let (d0, d1) = self.key_switch(&ct.parts[2], &rlk.key)?;
                let c0 = self.ring.add(&ct.parts[0], &d0)?;
                let c1 = self.ring.add(&ct.parts[1], &d1)?;
                Ok(Ciphertext {
                    parts: alloc::vec![c0, c1],
                    scale: ct.scale,
                    noise_bits: charge(ct.noise_bits, self.fresh_noise_bits),
                })
            }
            n => Err(Error::NotRelinearized(n)),
        }
    }

    /// Divides by the top prime, after multiplying by the integer that brings
    /// the resulting scale to `delta`.
    pub fn rescale(&self, ct: &Ciphertext) -> Result<Ciphertext> {
        self.rescale_to(ct, self.delta(), 1.0)
    }

    /// Multiplies the message by `c` and rescales: the integer factor
    /// `round(c * target * q_top / scale)` is applied before the division.
    fn rescale_to(&self, ct: &Ciphertext, target: f64, c: f64) -> Result<Ciphertext> {
        let level = ct.level();
        if level < 2 {
            return Err(Error::LevelExhausted("no prime left to rescale by".into()));
        }
        let q_top = self.params.ring().moduli()[level - 1];
        let k = math::round(c * target * q_top as f64 / ct.scale);
        if math::abs(k) >= 9.2e18 {
            return Err(Error::InvalidInput(format!("rescale factor {k} overflows")));
        }
        if k == 0.0 && c != 0.0 {
            return Err(Error::InvalidInput(format!("scale {} too large to rescale to {target}", ct.scale)));
        }
        let k = k as i64;
        let parts = ct.parts.iter().map(|p| self.divide_by_top(p, k)).collect::<Result<Vec<_>>>()?;
        let grow = math::log2(math::abs(c).max(1.0));
        Ok(Ciphertext { parts, scale: target, noise_bits: charge(ct.noise_bits + grow, self.fresh_noise_bits) })
    }

    /// `round(k * p / q_top)` over the remaining primes.
    fn divide_by_top(&self, p: &RingPoly, k: i64) -> Result<RingPoly> {
        let ring = &self.ring;
        let level = p.level();
        let top = level - 1;
        let scaled = ring.mul_scalar(p, k as i128);
        let mut last = scaled.residues[top].clone();
        ring.table(top).inverse(&mut last);
        let mt = *ring.modulus(top);
        let q_top = mt.value();
        let centered: Vec<i64> = last.iter().map(|&x| mt.center(x)).collect();
        let mut out = ring.drop_level(&scaled)?;
        let mut tmp = alloc::vec![0u64; ring.n()];
        for t in 0..top {
            let m = ring.modulus(t);
            for (d, &c) in tmp.iter_mut().zip(&centered) {
                *d = m.reduce_i64(c);
            }
            ring.table(t).forward(&mut tmp);
            let inv = m.inv(m.reduce(q_top));
            let inv_s = m.shoup(inv);
            for (o, &x) in out.residues[t].iter_mut().zip(&tmp) {
                *o = m.mul_shoup(m.sub(*o, x), inv, inv_s);
            }
        }
        Ok(out)
    }

    /// Multiply, relinearize and rescale.
    pub fn mul(&self, a: &Ciphertext, b: &Ciphertext, rlk: &RelinKey) -> Result<Ciphertext> {
        if a.level().min(b.level()) < 2 {
            return Err(Error::LevelExhausted("multiplication needs a level to rescale".into()));
        }
        let raw = self.mul_raw(a, b)?;
        self.rescale(&self.relinearize(&raw, rlk)?)
    }

    pub fn square(&self, a: &Ciphertext, rlk: &RelinKey) -> Result<Ciphertext> {
        self.mul(a, a, rlk)
    }

    /// Slot-wise product with a plaintext, then rescale.
    pub fn mul_plain(&self, ct: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        if ct.level() < 2 {
            return Err(Error::LevelExhausted("multiplication needs a level to rescale".into()));
        }
        let p = self.plain_at(pt, ct.level())?;
        let parts = ct.parts.iter().map(|c| self.ring.mul(c, &p)).collect::<Result<Vec<_>>>()?;
        let grow = math::log2(pt.max_abs.max(1.0));
        let raw = Ciphertext { parts, scale: ct.scale * pt.scale, noise_bits: ct.noise_bits + grow };
        self.rescale(&raw)
    }

    /// Multiplies every slot by the real constant `c`; consumes one level.
    pub fn mul_const(&self, ct: &Ciphertext, c: f64) -> Result<Ciphertext> {
        if !c.is_finite() {
            return Err(Error::InvalidInput("non-finite constant".into()));
        }
        self.rescale_to(ct, self.delta(), c)
    }

    /// Left rotation by `step` slots (negative rotates right). Steps without
    /// a dedicated key are composed from the available ones.
    pub fn rotate(&self, ct: &Ciphertext, step: i64, keys: &RotationKeys) -> Result<Ciphertext> {
        self.check_key_digest(&keys.digest)?;
        if ct.size() != 2 {
            return Err(Error::NotRelinearized(ct.size()));
        }
        let slots = self.slots() as i64;
        if step.rem_euclid(slots) == 0 {
            return Ok(ct.clone());
        }
        let mut out = ct.clone();
        for s in self.rotation_plan(step, keys)? {
            out = self.rotate_once(&out, s, &keys.keys[&s])?;
        }
        Ok(out)
    }

    /// Sequence of keyed steps summing to `step` modulo the slot count.
    pub fn rotation_plan(&self, step: i64, keys: &RotationKeys) -> Result<Vec<i64>> {
        let slots = self.slots() as i64;
        if keys.keys.contains_key(&step) {
            return Ok(alloc::vec![step]);
        }
        let target = step.rem_euclid(slots);
        if let Some((&k, _)) = keys.keys.iter().find(|(&k, _)| k.rem_euclid(slots) == target) {
            return Ok(alloc::vec![k]);
        }
        let mut avail: Vec<(i64, i64)> =
            keys.keys.keys().map(|&k| (k.rem_euclid(slots), k)).filter(|&(v, _)| v != 0).collect();
        avail.sort_unstable();
        let mut rem = target;
        let mut plan = Vec::new();
        while rem > 0 {
            match avail.iter().rev().find(|&&(v, _)| v <= rem) {
                Some(&(v, k)) => {
                    plan.push(k);
                    rem -= v;
                }
                None => return Err(Error::MissingRotationKey(step)),
            }
        }
        Ok(plan)
    }

    fn rotate_once(&self, ct: &Ciphertext, step: i64, key: &KeySwitchKey) -> Result<Ciphertext> {
        let ring = &self.ring;
        let g = self.encoder.galois_element(step);
        let mut rot = Vec::with_capacity(2);
        for p in &ct.parts {
            let mut c = ring.automorphism(&ring.ntt_inverse(p)?, g)?;
            ring.to_eval(&mut c)?;
            rot.push(c);
        }
        let (d0, d1) = self.key_switch(&rot[1], key)?;
        let c0 = ring.add(&rot[0], &d0)?;
        debug_assert_eq!(d1.domain(), Domain::Evaluation);
        Ok(Ciphertext {
            parts: alloc::vec![c0, d1],
            scale: ct.scale,
            noise_bits: charge(ct.noise_bits, self.fresh_noise_bits),
        })
    }

    /// Rotate-and-add doubling: with `steps = [1, 2, .., B/2]` slot `i` ends
    /// up holding the sum of slots `i..i + B`.
    pub fn rotate_sum(&self, ct: &Ciphertext, steps: &[i64], keys: &RotationKeys) -> Result<Ciphertext> {
        let mut acc = ct.clone();
        for &s in steps {
            let r = self.rotate(&acc, s, keys)?;
            acc = self.add(&acc, &r)?;
        }
        Ok(acc)
    }
}
