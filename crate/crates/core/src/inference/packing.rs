//! Slot layout, batch encryption and SIMD dot products.
//!
//! A sample occupies a block of `B = 2^ceil(log2 n_features)` slots. With
//! the replicated layout the client writes the sample into every block; with
//! the leading layout it sits in slots `0..n_features` and the server copies
//! it into the other blocks by rotation. Replicating on the client keeps the
//! per-slot error at the fresh level, since every server-side copy also adds
//! the encryption noise of the zero slots it drags along.

use alloc::format;
use alloc::vec::Vec;
use rand_core::RngCore;

use crate::ckks::{Ciphertext, CkksContext, Plaintext, PublicKey, RotationKeys, SecretKey};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::Clock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_features: usize,
    pub block: usize,
    pub slots: usize,
    /// Sample written into every block (otherwise only block 0).
    pub replicated: bool,
}

impl Layout {
    pub fn new(n_features: usize, slots: usize, replicated: bool) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::InvalidInput("sample has no features".into()));
        }
        let block = n_features.next_power_of_two();
        if block > slots {
            return Err(Error::InvalidInput(format!("{n_features} features exceed {slots} slots")));
        }
        Ok(Self { n_features, block, slots, replicated })
    }

    pub fn blocks(&self) -> usize {
        self.slots / self.block
    }

    /// Slots carrying sample values.
    pub fn live_slots(&self) -> Vec<usize> {
        let blocks = if self.replicated { self.blocks() } else { 1 };
        (0..blocks).flat_map(|b| (0..self.n_features).map(move |i| b * self.block + i)).collect()
    }

    pub fn pack(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(Error::Mismatch(format!(
                "sample has {} features, layout expects {}",
                x.len(),
                self.n_features
            )));
        }
        let mut v = alloc::vec![0.0; self.slots];
        let blocks = if self.replicated { self.blocks() } else { 1 };
        for b in 0..blocks {
            v[b * self.block..b * self.block + self.n_features].copy_from_slice(x);
        }
        Ok(v)
    }

    /// `[1, 2, .., B/2]`: sums each block into its first slot.
    pub fn block_sum_steps(&self) -> Vec<i64> {
        doubling(1, self.block)
    }

    /// `[B, 2B, .., slots/2]`: sums all blocks into block 0.
    pub fn accumulate_steps(&self) -> Vec<i64> {
        doubling(self.block, self.slots)
    }

    /// `[-B, -2B, ..]`: copies block 0 into every block.
    pub fn replicate_steps(&self) -> Vec<i64> {
        doubling(self.block, self.slots).into_iter().map(|s| -s).collect()
    }

    /// Every rotation the pipeline performs, deduplicated modulo the slot
    /// count.
    pub fn rotation_steps(&self) -> Vec<i64> {
        let mut steps = self.block_sum_steps();
        steps.extend(self.accumulate_steps());
        if !self.replicated {
            steps.extend(self.replicate_steps());
        }
        let slots = self.slots as i64;
        let mut seen = Vec::new();
        steps.retain(|s| {
            let r = s.rem_euclid(slots);
            let fresh = !seen.contains(&r);
            seen.push(r);
            fresh
        });
        steps
    }
}

fn doubling(from: usize, until: usize) -> Vec<i64> {
    let mut v = Vec::new();
    let mut s = from;
    while s < until {
        v.push(s as i64);
        s *= 2;
    }
    v
}

#[derive(Debug, Clone)]
pub struct EncryptedBatch {
    pub ciphertexts: Vec<Ciphertext>,
    pub layout: Layout,
    /// Encryption milliseconds per sample.
    pub enc_ms: Vec<f64>,
}

impl EncryptedBatch {
    pub fn len(&self) -> usize {
        self.ciphertexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ciphertexts.is_empty()
    }
}

/// One ciphertext per sample row, at the top level and scale `delta`.
pub fn encrypt_batch(
    ctx: &CkksContext,
    samples: &Matrix,
    layout: Layout,
    pk: &PublicKey,
    rng: &mut impl RngCore,
    clock: &impl Clock,
) -> Result<EncryptedBatch> {
    if layout.slots != ctx.slots() {
        return Err(Error::Mismatch(format!("layout has {} slots, context {}", layout.slots, ctx.slots())));
    }
    let mut ciphertexts = Vec::with_capacity(samples.rows());
    let mut enc_ms = Vec::with_capacity(samples.rows());
    for row in samples.iter_rows() {
        let t0 = clock.now_ms();
        let pt = ctx.encode(&layout.pack(row)?, ctx.delta(), ctx.max_level())?;
        ciphertexts.push(ctx.encrypt(&pt, pk, rng)?);
        enc_ms.push(clock.now_ms() - t0);
    }
    Ok(EncryptedBatch { ciphertexts, layout, enc_ms })
}

/// Copies block 0 into every block (no-op for the replicated layout).
pub fn replicate(ctx: &CkksContext, ct: &Ciphertext, layout: &Layout, rot: &RotationKeys) -> Result<Ciphertext> {
    if layout.replicated {
        return Ok(ct.clone());
    }
    ctx.rotate_sum(ct, &layout.replicate_steps(), rot)
}

/// `sv` written into every block, at the top level.
pub fn encode_sv(ctx: &CkksContext, layout: &Layout, sv: &[f64]) -> Result<Plaintext> {
    let packed = Layout { replicated: true, ..*layout }.pack(sv)?;
    ctx.encode(&packed, weight_scale(ctx, ctx.max_level()), ctx.max_level())
}

/// Plaintext scale for a factor multiplied into a ciphertext at `level`:
/// about `q_top / 2^12`, never below `delta`. The larger scale shrinks the
/// encoding error that lands on slots holding large intermediate values,
/// while keeping the rescale integer near `2^12`.
pub(crate) fn weight_scale(ctx: &CkksContext, level: usize) -> f64 {
    let bits = ctx.ring().modulus(level - 1).bits() as i32;
    let s = crate::math::powi(2.0, (bits - 13).max(0) as u32);
    s.max(ctx.delta())
}

/// `<x, sv>` in every slot: slot-wise product, then a rotate-and-sum over
/// `log2 B` steps. Consumes one level.
pub fn enc_dot(
    ctx: &CkksContext,
    ct_x: &Ciphertext,
    layout: &Layout,
    sv_plain: &Plaintext,
    rot: &RotationKeys,
) -> Result<Ciphertext> {
    let x = replicate(ctx, ct_x, layout, rot)?;
    let prod = ctx.mul_plain(&x, sv_plain)?;
    ctx.rotate_sum(&prod, &layout.block_sum_steps(), rot)
}

/// Sample-by-support-vector dot products. Support vectors are packed one per
/// block, so each sample needs `ceil(k / blocks)` ciphertexts; entry `(i, j)`
/// sits in slot `(j mod blocks) * B` of chunk `j / blocks` of sample `i`.
#[derive(Debug, Clone)]
pub struct EncryptedMatrix {
    pub rows: Vec<Vec<Ciphertext>>,
    pub layout: Layout,
    pub cols: usize,
}

/// Support vectors packed one per block, `blocks` per plaintext.
pub(crate) fn pack_svs(ctx: &CkksContext, layout: &Layout, svs: &Matrix) -> Result<Vec<Plaintext>> {
    if svs.cols() != layout.n_features {
        return Err(Error::Mismatch(format!("{} support vector features, layout {}", svs.cols(), layout.n_features)));
    }
    let blocks = layout.blocks();
    let rows: Vec<&[f64]> = svs.iter_rows().collect();
    rows.chunks(blocks)
        .map(|chunk| {
            let mut v = alloc::vec![0.0; layout.slots];
            for (b, sv) in chunk.iter().enumerate() {
                v[b * layout.block..b * layout.block + layout.n_features].copy_from_slice(sv);
            }
            ctx.encode(&v, weight_scale(ctx, ctx.max_level()), ctx.max_level())
        })
        .collect()
}

pub fn enc_matmul(
    ctx: &CkksContext,
    batch: &EncryptedBatch,
    svs: &Matrix,
    rot: &RotationKeys,
) -> Result<EncryptedMatrix> {
    let layout = batch.layout;
    let packed = pack_svs(ctx, &layout, svs)?;
    let steps = layout.block_sum_steps();
    let rows = batch
        .ciphertexts
        .iter()
        .map(|ct| {
            let x = replicate(ctx, ct, &layout, rot)?;
            packed.iter().map(|p| ctx.rotate_sum(&ctx.mul_plain(&x, p)?, &steps, rot)).collect()
        })
        .collect::<Result<Vec<Vec<_>>>>()?;
    Ok(EncryptedMatrix { rows, layout, cols: svs.rows() })
}

impl EncryptedMatrix {
    pub fn decrypt(&self, ctx: &CkksContext, sk: &SecretKey) -> Result<Matrix> {
        let blocks = self.layout.blocks();
        let mut data = Vec::with_capacity(self.rows.len() * self.cols);
        for row in &self.rows {
            let chunks = row.iter().map(|ct| ctx.decrypt_decode(ct, sk)).collect::<Result<Vec<_>>>()?;
            data.extend((0..self.cols).map(|j| chunks[j / blocks][(j % blocks) * self.layout.block]));
        }
        Matrix::new(self.rows.len(), self.cols, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_steps() {
        let l = Layout::new(5, 64, true).unwrap();
        assert_eq!(l.block, 8);
        assert_eq!(l.block_sum_steps(), alloc::vec![1, 2, 4]);
        assert_eq!(l.accumulate_steps(), alloc::vec![8, 16, 32]);
        assert_eq!(l.live_slots().len(), 40);
        let lead = Layout { replicated: false, ..l };
        // -32 coincides with 32 modulo 64.
        assert_eq!(lead.rotation_steps(), alloc::vec![1, 2, 4, 8, 16, 32, -8, -16]);
        assert_eq!(lead.live_slots(), alloc::vec![0, 1, 2, 3, 4]);
        let v = l.pack(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(&v[8..13], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(v[13], 0.0);
        assert!(Layout::new(65, 64, true).is_err());
    }
}
