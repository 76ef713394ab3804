//! RNS arithmetic in `Z_Q[X]/(X^n + 1)`.
//!
//! A [`RingPoly`] at level `l` carries one residue vector for each of the
//! data moduli `q_1..q_l` (stored base first). Polynomials used inside key
//! switching additionally carry residues for the special moduli; those are
//! called *extended*.

mod ntt;
mod sample;

use alloc::format;
use alloc::vec::Vec;

pub use ntt::NttTable;
pub use sample::{sample_gaussian, sample_ternary, sample_ternary_sparse, sample_uniform, DEFAULT_STDDEV};

use crate::error::{Error, Result};
use crate::math::{is_prime, ntt_primes, Modulus};

/// Ring degree and modulus chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingParams {
    n: usize,
    moduli: Vec<u64>,
    special: Vec<u64>,
}

impl RingParams {
    /// `moduli` is the data chain, base modulus first; `special` are the
    /// key-switching moduli (may be empty for pure ring arithmetic).
    pub fn new(n: usize, moduli: Vec<u64>, special: Vec<u64>) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidParams(format!("ring degree {n} must be a power of two >= 8")));
        }
        if moduli.is_empty() {
            return Err(Error::InvalidParams("empty modulus chain".into()));
        }
        let all: Vec<u64> = moduli.iter().chain(special.iter()).copied().collect();
        for (i, &q) in all.iter().enumerate() {
            if q >= 1 << 62 {
                return Err(Error::InvalidParams(format!("modulus {q} exceeds 62 bits")));
            }
            if q % 2 == 0 || !is_prime(q) {
                return Err(Error::InvalidParams(format!("modulus {q} is not an odd prime")));
            }
            if q % (2 * n as u64) != 1 {
                return Err(Error::InvalidParams(format!("modulus {q} is not 1 mod 2n")));
            }
            if all[..i].contains(&q) {
                return Err(Error::InvalidParams(format!("modulus {q} repeated")));
            }
        }
        Ok(Self { n, moduli, special })
    }

    /// Generates NTT-friendly primes of the requested bit sizes.
    pub fn generate(n: usize, data_bits: &[u32], special_bits: &[u32]) -> Result<Self> {
        let mut used: Vec<u64> = Vec::new();
        let mut pick = |bits: u32| -> Result<u64> {
            let p = ntt_primes(bits, 2 * n as u64, 1, &used)
                .and_then(|v| v.first().copied())
                .ok_or_else(|| Error::InvalidParams(format!("no {bits}-bit prime = 1 mod {}", 2 * n)))?;
            used.push(p);
            Ok(p)
        };
        let moduli = data_bits.iter().map(|&b| pick(b)).collect::<Result<Vec<_>>>()?;
        let special = special_bits.iter().map(|&b| pick(b)).collect::<Result<Vec<_>>>()?;
        Self::new(n, moduli, special)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Data chain, base modulus first.
    pub fn moduli(&self) -> &[u64] {
        &self.moduli
    }

    pub fn special_moduli(&self) -> &[u64] {
        &self.special
    }

    /// Number of data moduli, i.e. the top level.
    pub fn level_count(&self) -> usize {
        self.moduli.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Coefficient,
    Evaluation,
}

/// Element of the ring in RNS form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingPoly {
    pub(crate) residues: Vec<Vec<u64>>,
    pub(crate) domain: Domain,
    pub(crate) level: usize,
    pub(crate) extended: bool,
}

impl RingPoly {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn is_extended(&self) -> bool {
        self.extended
    }

    pub fn residues(&self) -> &[Vec<u64>] {
        &self.residues
    }

    pub fn residue(&self, i: usize) -> &[u64] {
        &self.residues[i]
    }
}

/// Parameters plus per-modulus NTT tables.
#[derive(Debug, Clone)]
pub struct RingContext {
    params: RingParams,
    tables: Vec<NttTable>,
}

impl RingContext {
    pub fn new(params: RingParams) -> Result<Self> {
        let n = params.n;
        let tables = params
            .moduli
            .iter()
            .chain(params.special.iter())
            .map(|&q| NttTable::new(q, n).ok_or_else(|| Error::InvalidParams(format!("no 2n-th root mod {q}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { params, tables })
    }

    pub fn params(&self) -> &RingParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn max_level(&self) -> usize {
        self.params.moduli.len()
    }

    /// Global table indices for the residues of a polynomial.
    pub fn basis(&self, level: usize, extended: bool) -> Vec<usize> {
        let l = self.max_level();
        let mut idx: Vec<usize> = (0..level).collect();
        if extended {
            idx.extend(l..l + self.params.special.len());
        }
        idx
    }

    pub fn table(&self, global: usize) -> &NttTable {
        &self.tables[global]
    }

    pub fn modulus(&self, global: usize) -> &Modulus {
        self.tables[global].modulus()
    }

    /// Modulus of residue `i` of a polynomial at `level`.
    pub fn residue_modulus(&self, level: usize, i: usize) -> &Modulus {
        if i < level {
            self.modulus(i)
        } else {
            self.modulus(self.max_level() + i - level)
        }
    }

    fn residue_table(&self, level: usize, i: usize) -> &NttTable {
        if i < level {
            &self.tables[i]
        } else {
            &self.tables[self.max_level() + i - level]
        }
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level == 0 || level > self.max_level() {
            return Err(Error::InvalidParams(format!("level {level} outside 1..={}", self.max_level())));
        }
        Ok(())
    }

    pub fn zero(&self, level: usize, extended: bool, domain: Domain) -> RingPoly {
        let count = level + if extended { self.params.special.len() } else { 0 };
        RingPoly { residues: alloc::vec![alloc::vec![0u64; self.n()]; count], domain, level, extended }
    }

    /// Coefficient-domain polynomial from signed integer coefficients.
    pub fn from_coeffs(&self, coeffs: &[i64], level: usize, extended: bool) -> Result<RingPoly> {
        self.check_level(level)?;
        if coeffs.len() != self.n() {
            return Err(Error::Mismatch(format!("expected {} coefficients, got {}", self.n(), coeffs.len())));
        }
        let mut p = self.zero(level, extended, Domain::Coefficient);
        for (i, r) in p.residues.iter_mut().enumerate() {
            let m = self.residue_modulus(level, i);
            for (dst, &c) in r.iter_mut().zip(coeffs) {
                *dst = m.reduce_i64(c);
            }
        }
        Ok(p)
    }

    /// Constant polynomial `c`.
    pub fn constant(&self, c: i64, level: usize, extended: bool, domain: Domain) -> Result<RingPoly> {
        self.check_level(level)?;
        let mut p = self.zero(level, extended, domain);
        for (i, r) in p.residues.iter_mut().enumerate() {
            let v = self.residue_modulus(level, i).reduce_i64(c);
            match domain {
                Domain::Coefficient => r[0] = v,
                Domain::Evaluation => r.iter_mut().for_each(|x| *x = v),
            }
        }
        Ok(p)
    }

    /// Transforms a coefficient-domain polynomial to the evaluation domain.
    pub fn ntt_forward(&self, p: &RingPoly) -> Result<RingPoly> {
        let mut out = p.clone();
        self.to_eval(&mut out)?;
        Ok(out)
    }

    pub fn ntt_inverse(&self, p: &RingPoly) -> Result<RingPoly> {
        let mut out = p.clone();
        self.to_coeff(&mut out)?;
        Ok(out)
    }

    pub fn to_eval(&self, p: &mut RingPoly) -> Result<()> {
        if p.domain != Domain::Coefficient {
            return Err(Error::Domain("ntt_forward"));
        }
        self.check_level(p.level)?;
        for (i, r) in p.residues.iter_mut().enumerate() {
            self.residue_table(p.level, i).forward(r);
        }
        p.domain = Domain::Evaluation;
        Ok(())
    }

    pub fn to_coeff(&self, p: &mut RingPoly) -> Result<()> {
        if p.domain != Domain::Evaluation {
            return Err(Error::Domain("ntt_inverse"));
        }
        self.check_level(p.level)?;
        for (i, r) in p.residues.iter_mut().enumerate() {
            self.residue_table(p.level, i).inverse(r);
        }
        p.domain = Domain::Coefficient;
        Ok(())
    }

    fn check_compatible(&self, a: &RingPoly, b: &RingPoly) -> Result<()> {
        if a.level != b.level || a.extended != b.extended || a.residues.len() != b.residues.len() {
            return Err(Error::Mismatch(format!(
                "level {} (ext {}) vs level {} (ext {})",
                a.level, a.extended, b.level, b.extended
            )));
        }
        if a.domain != b.domain {
            return Err(Error::Mismatch("operands in different domains".into()));
        }
        if a.residues.first().map(Vec::len) != Some(self.n()) || b.residues.first().map(Vec::len) != Some(self.n()) {
            return Err(Error::Mismatch("ring degree".into()));
        }
        Ok(())
    }

    pub fn add(&self, a: &RingPoly, b: &RingPoly) -> Result<RingPoly> {
        let mut out = a.clone();
        self.add_assign(&mut out, b)?;
        Ok(out)
    }

    pub fn add_assign(&self, a: &mut RingPoly, b: &RingPoly) -> Result<()> {
        self.check_compatible(a, b)?;
        let level = a.level;
        for (i, (ra, rb)) in a.residues.iter_mut().zip(&b.residues).enumerate() {
            let m = self.residue_modulus(level, i);
            ra.iter_mut().zip(rb).for_each(|(x, y)| *x = m.add(*x, *y));
        }
        Ok(())
    }

    pub fn sub(&self, a: &RingPoly, b: &RingPoly) -> Result<RingPoly> {
        self.check_compatible(a, b)?;
        let mut out = a.clone();
        for (i, (ra, rb)) in out.residues.iter_mut().zip(&b.residues).enumerate() {
            let m = self.residue_modulus(a.level, i);
            ra.iter_mut().zip(rb).for_each(|(x, y)| *x = m.sub(*x, *y));
        }
        Ok(out)
    }

    pub fn neg(&self, a: &RingPoly) -> RingPoly {
        let mut out = a.clone();
        for (i, r) in out.residues.iter_mut().enumerate() {
            let m = self.residue_modulus(a.level, i);
            r.iter_mut().for_each(|x| *x = m.neg(*x));
        }
        out
    }

    /// Negacyclic product; both operands must be in the evaluation domain.
    pub fn mul(&self, a: &RingPoly, b: &RingPoly) -> Result<RingPoly> {
        self.check_compatible(a, b)?;
        if a.domain != Domain::Evaluation {
            return Err(Error::Domain("poly_mul"));
        }
        let mut out = a.clone();
        for (i, (ra, rb)) in out.residues.iter_mut().zip(&b.residues).enumerate() {
            let m = self.residue_modulus(a.level, i);
            ra.iter_mut().zip(rb).for_each(|(x, y)| *x = m.mul(*x, *y));
        }
        Ok(out)
    }

    /// `acc += a * b` in the evaluation domain.
    pub fn mul_add_assign(&self, acc: &mut RingPoly, a: &RingPoly, b: &RingPoly) -> Result<()> {
        self.check_compatible(acc, a)?;
        self.check_compatible(a, b)?;
        if a.domain != Domain::Evaluation {
            return Err(Error::Domain("poly_mul"));
        }
        for (i, r) in acc.residues.iter_mut().enumerate() {
            let m = self.residue_modulus(a.level, i);
            let (ra, rb) = (&a.residues[i], &b.residues[i]);
            for j in 0..r.len() {
                r[j] = m.add(r[j], m.mul(ra[j], rb[j]));
            }
        }
        Ok(())
    }

    /// Multiplies by a signed integer scalar (valid in either domain).
    pub fn mul_scalar(&self, a: &RingPoly, c: i128) -> RingPoly {
        let mut out = a.clone();
        self.mul_scalar_assign(&mut out, c);
        out
    }

    pub fn mul_scalar_assign(&self, a: &mut RingPoly, c: i128) {
        let level = a.level;
        for (i, r) in a.residues.iter_mut().enumerate() {
            let m = self.residue_modulus(level, i);
            let s = m.reduce_i128(c);
            let ss = m.shoup(s);
            r.iter_mut().for_each(|x| *x = m.mul_shoup(*x, s, ss));
        }
    }

    /// Removes the top data residue. The caller is responsible for any
    /// division by the dropped prime (see CKKS rescaling).
    pub fn drop_level(&self, a: &RingPoly) -> Result<RingPoly> {
        if a.level < 2 {
            return Err(Error::LevelExhausted("cannot drop below level 1".into()));
        }
        let mut out = a.clone();
        out.residues.remove(a.level - 1);
        out.level -= 1;
        Ok(out)
    }

    /// Drops data residues down to `level` (no-op when already there).
    pub fn drop_to_level(&self, a: &RingPoly, level: usize) -> Result<RingPoly> {
        if level == 0 || level > a.level {
            return Err(Error::LevelExhausted(format!("cannot move from level {} to {level}", a.level)));
        }
        let mut out = a.clone();
        out.residues.drain(level..a.level);
        out.level = level;
        Ok(out)
    }

    /// Restricts an extended polynomial (or any polynomial at a higher level)
    /// to the residues of `level`, optionally keeping the special residues.
    pub fn restrict(&self, a: &RingPoly, level: usize, extended: bool) -> Result<RingPoly> {
        if level > a.level || (extended && !a.extended) {
            return Err(Error::Mismatch("restriction to a larger basis".into()));
        }
        let mut residues: Vec<Vec<u64>> = a.residues[..level].to_vec();
        if extended {
            residues.extend(a.residues[a.level..].iter().cloned());
        }
        Ok(RingPoly { residues, domain: a.domain, level, extended })
    }

    /// Applies `X -> X^g` for odd `g` in the coefficient domain.
    pub fn automorphism(&self, a: &RingPoly, g: usize) -> Result<RingPoly> {
        if a.domain != Domain::Coefficient {
            return Err(Error::Domain("automorphism"));
        }
        let n = self.n();
        let two_n = 2 * n;
        let mut out = self.zero(a.level, a.extended, Domain::Coefficient);
        for (i, (src, dst)) in a.residues.iter().zip(out.residues.iter_mut()).enumerate() {
            let m = self.residue_modulus(a.level, i);
            for (j, &c) in src.iter().enumerate() {
                let k = (j * g) % two_n;
                if k < n {
                    dst[k] = c;
                } else {
                    dst[k - n] = m.neg(c);
                }
            }
        }
        Ok(out)
    }
}
