//! Binary container for keys and ciphertexts.
//!
//! Header: 4-byte magic, format version, object kind, 32-byte parameter
//! digest. All integers are little-endian; reals are IEEE-754 bit patterns.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use super::keys::{KeySwitchKey, PublicKey, RelinKey, RotationKeys, SecretKey};
use super::{Ciphertext, CkksContext};
use crate::error::{Error, Result};
use crate::ring::{Domain, RingPoly};

pub const MAGIC: [u8; 4] = *b"PPFT";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ObjectKind {
    PublicKey = 1,
    SecretKey = 2,
    RelinKey = 3,
    RotationKeys = 4,
    Ciphertext = 5,
}

impl ObjectKind {
    fn from_u8(b: u8) -> Result<Self> {
        Ok(match b {
            1 => Self::PublicKey,
            2 => Self::SecretKey,
            3 => Self::RelinKey,
            4 => Self::RotationKeys,
            5 => Self::Ciphertext,
            _ => return Err(Error::Format(format!("unknown object kind {b}"))),
        })
    }

    /// Reads the kind from a container header without validating the rest.
    pub fn peek(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 6 || bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        Self::from_u8(bytes[5])
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(kind: ObjectKind, digest: &[u8; 32]) -> Self {
        let mut v = Vec::new();
        v.extend_from_slice(&MAGIC);
        v.push(FORMAT_VERSION);
        v.push(kind as u8);
        v.extend_from_slice(digest);
        Self(v)
    }

    fn u64(&mut self, x: u64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }

    fn f64(&mut self, x: f64) {
        self.u64(x.to_bits());
    }

    fn poly(&mut self, p: &RingPoly) {
        self.u64(p.level() as u64);
        self.0.push(p.is_extended() as u8);
        self.0.push(matches!(p.domain(), Domain::Evaluation) as u8);
        self.u64(p.residues().len() as u64);
        for r in p.residues() {
            self.u64(r.len() as u64);
            for &x in r {
                self.u64(x);
            }
        }
    }

    fn switch_key(&mut self, k: &KeySwitchKey) {
        self.u64(k.b.len() as u64);
        for (b, a) in k.b.iter().zip(&k.a) {
            self.poly(b);
            self.poly(a);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    ctx: &'a CkksContext,
}

impl<'a> Reader<'a> {
    fn open(ctx: &'a CkksContext, buf: &'a [u8], kind: ObjectKind) -> Result<Self> {
        if buf.len() < 38 || buf[..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        if buf[4] != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", buf[4])));
        }
        let found = ObjectKind::from_u8(buf[5])?;
        if found != kind {
            return Err(Error::Format(format!("expected {kind:?}, found {found:?}")));
        }
        if buf[6..38] != ctx.digest()[..] {
            return Err(Error::DigestMismatch);
        }
        Ok(Self { buf, pos: 38, ctx })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        b.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn count(&mut self, max: usize) -> Result<usize> {
        let c = self.u64()?;
        if c as u128 > max as u128 {
            return Err(Error::Format(format!("count {c} exceeds {max}")));
        }
        Ok(c as usize)
    }

    fn poly(&mut self) -> Result<RingPoly> {
        let ring = self.ctx.ring();
        let level = self.count(ring.max_level())?;
        if level == 0 {
            return Err(Error::Format("level 0".into()));
        }
        let extended = self.u8()? != 0;
        let domain = if self.u8()? != 0 { Domain::Evaluation } else { Domain::Coefficient };
        let mut p = ring.zero(level, extended, domain);
        let count = self.count(64)?;
        if count != p.residues.len() {
            return Err(Error::Format(format!("expected {} residues, found {count}", p.residues.len())));
        }
        for i in 0..count {
            let len = self.count(ring.n())?;
            if len != ring.n() {
                return Err(Error::Format(format!("residue length {len}")));
            }
            let q = ring.residue_modulus(level, i).value();
            for j in 0..len {
                let x = self.u64()?;
                if x >= q {
                    return Err(Error::Format("residue out of range".into()));
                }
                p.residues[i][j] = x;
            }
        }
        Ok(p)
    }

    fn full_key_poly(&mut self) -> Result<RingPoly> {
        let p = self.poly()?;
        if p.level() != self.ctx.max_level() || !p.is_extended() || p.domain() != Domain::Evaluation {
            return Err(Error::Format("key polynomial has the wrong shape".into()));
        }
        Ok(p)
    }

    fn switch_key(&mut self) -> Result<KeySwitchKey> {
        let digits = self.count(self.ctx.max_level())?;
        if digits != self.ctx.max_level() {
            return Err(Error::Format(format!("key has {digits} digits")));
        }
        let mut b = Vec::with_capacity(digits);
        let mut a = Vec::with_capacity(digits);
        for _ in 0..digits {
            b.push(self.full_key_poly()?);
            a.push(self.full_key_poly()?);
        }
        Ok(KeySwitchKey { b, a })
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format("trailing bytes".into()));
        }
        Ok(())
    }
}

impl PublicKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ObjectKind::PublicKey, &self.digest);
        w.poly(&self.b);
        w.poly(&self.a);
        w.0
    }

    pub fn from_bytes(ctx: &CkksContext, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(ctx, bytes, ObjectKind::PublicKey)?;
        let b = r.full_key_poly()?;
        let a = r.full_key_poly()?;
        r.finish()?;
        Ok(Self { b, a, digest: *ctx.digest() })
    }
}

impl SecretKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ObjectKind::SecretKey, &self.digest);
        w.poly(&self.s);
        w.0
    }

    pub fn from_bytes(ctx: &CkksContext, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(ctx, bytes, ObjectKind::SecretKey)?;
        let s = r.full_key_poly()?;
        r.finish()?;
        Ok(Self { s, digest: *ctx.digest() })
    }
}

impl RelinKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ObjectKind::RelinKey, &self.digest);
        w.switch_key(&self.key);
        w.0
    }

    pub fn from_bytes(ctx: &CkksContext, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(ctx, bytes, ObjectKind::RelinKey)?;
        let key = r.switch_key()?;
        r.finish()?;
        Ok(Self { key, digest: *ctx.digest() })
    }
}

impl RotationKeys {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ObjectKind::RotationKeys, &self.digest);
        w.u64(self.keys.len() as u64);
        for (&step, k) in &self.keys {
            w.u64(step as u64);
            w.switch_key(k);
        }
        w.0
    }

    pub fn from_bytes(ctx: &CkksContext, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(ctx, bytes, ObjectKind::RotationKeys)?;
        let count = r.count(2 * ctx.slots())?;
        let mut keys = BTreeMap::new();
        for _ in 0..count {
            let step = r.u64()? as i64;
            keys.insert(step, r.switch_key()?);
        }
        r.finish()?;
        Ok(Self { keys, digest: *ctx.digest() })
    }
}

impl Ciphertext {
    pub fn to_bytes(&self, ctx: &CkksContext) -> Vec<u8> {
        let mut w = Writer::new(ObjectKind::Ciphertext, ctx.digest());
        w.f64(self.scale);
        w.f64(self.noise_bits);
        w.u64(self.parts.len() as u64);
        for p in &self.parts {
            w.poly(p);
        }
        w.0
    }

    pub fn from_bytes(ctx: &CkksContext, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(ctx, bytes, ObjectKind::Ciphertext)?;
        let scale = r.f64()?;
        let noise_bits = r.f64()?;
        if !(scale > 0.0) || !scale.is_finite() || !noise_bits.is_finite() {
            return Err(Error::Format("invalid scale or noise estimate".into()));
        }
        let n = r.count(3)?;
        if n < 2 {
            return Err(Error::Format(format!("{n} ciphertext parts")));
        }
        let mut parts = Vec::with_capacity(n);
        for _ in 0..n {
            let p = r.poly()?;
            if p.is_extended() || p.domain() != Domain::Evaluation {
                return Err(Error::Format("ciphertext part has the wrong shape".into()));
            }
            parts.push(p);
        }
        if parts.iter().any(|p| p.level() != parts[0].level()) {
            return Err(Error::Format("ciphertext parts at different levels".into()));
        }
        r.finish()?;
        Ok(Self { parts, scale, noise_bits })
    }
}
