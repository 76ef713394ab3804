//! End-to-end encrypted decision scores.
//!
//! Support vectors are packed one per block. For each chunk of them the
//! server computes all dot products with one plaintext product, the squared
//! distances from `|x|^2 - 2 x.sv + |sv|^2`, and the powers both kernel
//! terms need. Each power is then multiplied by a weight vector that is zero
//! outside block starts and carries `dual_j` times the kernel coefficient at
//! block `j`; that product also masks the partial sums left in other slots.
//! A final rotate-and-sum over blocks leaves the score in slot 0.

use alloc::format;
use alloc::vec::Vec;
use rand_core::RngCore;

use super::packing::{pack_svs, replicate, weight_scale, Layout};
use super::{Clock, InferenceReport, Stage, ThresholdParams};
use crate::approx::{encrypted_powers, power_depth};
use crate::ckks::noise::budget;
use crate::ckks::{Ciphertext, CkksContext, Plaintext, PublicKey, RelinKey, RotationKeys, SecretKey};
use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;
use crate::svm::{KernelConfig, SvmModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineOptions {
    /// Client writes the sample into every block.
    pub replicated: bool,
    /// Encrypt the model weights under the public key (ciphertext products
    /// instead of plaintext products).
    pub encrypt_coeffs: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self { replicated: true, encrypt_coeffs: false }
    }
}

#[derive(Clone, Copy)]
pub struct ServerKeys<'a> {
    pub public: &'a PublicKey,
    pub relin: &'a RelinKey,
    pub rotation: &'a RotationKeys,
}

/// Multiplicative depth of the scoring circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DepthLedger {
    pub dot: usize,
    pub powering: usize,
    pub coefficients: usize,
    /// Rescales the modulus chain allows.
    pub available: usize,
}

impl DepthLedger {
    pub fn total(&self) -> usize {
        self.dot + self.powering + self.coefficients
    }

    pub fn check(&self) -> Result<()> {
        if self.total() > self.available {
            return Err(Error::LevelExhausted(format!(
                "dot {} + powering {} + coefficients {} = {} levels, chain provides {}",
                self.dot,
                self.powering,
                self.coefficients,
                self.total(),
                self.available
            )));
        }
        Ok(())
    }
}

/// Per-sample stage timings (ms) and remaining noise budget (bits) after
/// each stage, indexed by [`Stage`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SampleTrace {
    pub ms: [f64; 4],
    pub noise_bits: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct EncryptedScore {
    /// Score in slot 0.
    pub ciphertext: Ciphertext,
    pub trace: SampleTrace,
}

#[derive(Debug, Clone)]
enum Weight {
    Plain(Plaintext),
    Cipher(Ciphertext),
}

#[derive(Debug, Clone)]
struct Chunk {
    svs: Plaintext,
    sv_norms: Option<Plaintext>,
    poly: Option<Weight>,
    /// Weight for `u^i` at index `i - 1`.
    rbf: Vec<Weight>,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    layout: Layout,
    kernel: KernelConfig,
    approx_degree: usize,
    chunks: Vec<Chunk>,
    constant: f64,
    bias: f64,
    ledger: DepthLedger,
}

impl Pipeline {
    /// Server-side precomputation. The depth ledger is checked first, so an
    /// over-deep configuration fails before any encoding work.
    pub fn new(
        ctx: &CkksContext,
        model: &SvmModel,
        opts: PipelineOptions,
        pk: &PublicKey,
        rng: &mut impl RngCore,
    ) -> Result<Self> {
        model.validate()?;
        let cfg = model.kernel;
        let approx = if cfg.lambda2 > 0.0 {
            Some(model.rbf_approx.as_ref().ok_or_else(|| Error::InvalidInput("model has no rbf_approx".into()))?)
        } else {
            None
        };
        let r = approx.map_or(0, |a| a.degree());
        let poly_depth = if cfg.lambda1 > 0.0 { power_depth(cfg.degree as usize) } else { 0 };
        let ledger = DepthLedger {
            dot: 1,
            powering: poly_depth.max(if approx.is_some() { power_depth(r) } else { 0 }),
            coefficients: 1,
            available: ctx.max_level() - 1,
        };
        ledger.check()?;

        let layout = Layout::new(model.n_features(), ctx.slots(), opts.replicated)?;
        let top = ctx.max_level();
        let blocks = layout.blocks();
        let packed = pack_svs(ctx, &layout, &model.support_vectors)?;
        let mut make_weight = |vals: &[f64], level: usize| -> Result<Weight> {
            let pt = ctx.encode(vals, weight_scale(ctx, level), level)?;
            Ok(if opts.encrypt_coeffs { Weight::Cipher(ctx.encrypt(&pt, pk, rng)?) } else { Weight::Plain(pt) })
        };
        let mut chunks = Vec::with_capacity(packed.len());
        for (ci, svs) in packed.into_iter().enumerate() {
            let idx: Vec<usize> = (ci * blocks..((ci + 1) * blocks).min(model.n_support())).collect();
            let at_starts = |f: &dyn Fn(usize) -> f64| {
                let mut v = alloc::vec![0.0; layout.slots];
                for (b, &j) in idx.iter().enumerate() {
                    v[b * layout.block] = f(j);
                }
                v
            };
            let poly = if cfg.lambda1 > 0.0 {
                let w = at_starts(&|j| model.dual_coeffs[j] * cfg.lambda1);
                Some(make_weight(&w, top - 1 - poly_depth)?)
            } else {
                None
            };
            let (sv_norms, rbf) = match approx {
                Some(a) => {
                    let norms = at_starts(&|j| {
                        let sv = model.support_vectors.row(j);
                        crate::matrix::dot(sv, sv)
                    });
                    let norms = ctx.encode(&norms, ctx.delta(), top - 1)?;
                    let mut ws = Vec::with_capacity(r);
                    for i in 1..=r {
                        let coef = cfg.lambda2 * a.coeffs()[i] * math::powi(cfg.gamma, i as u32);
                        let w = at_starts(&|j| model.dual_coeffs[j] * coef);
                        ws.push(make_weight(&w, top - 1 - power_depth(i))?);
                    }
                    (Some(norms), ws)
                }
                None => (None, Vec::new()),
            };
            chunks.push(Chunk { svs, sv_norms, poly, rbf });
        }
        let constant = approx.map_or(0.0, |a| cfg.lambda2 * a.coeffs()[0] * model.dual_coeffs.iter().sum::<f64>());
        Ok(Self { layout, kernel: cfg, approx_degree: r, chunks, constant, bias: model.bias, ledger })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn ledger(&self) -> &DepthLedger {
        &self.ledger
    }

    /// Number of support-vector chunks (ciphertext products per kernel step).
    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    /// Rotation steps the evaluation keys must cover.
    pub fn rotation_steps(&self) -> Vec<i64> {
        self.layout.rotation_steps()
    }

    /// Client side: pack and encrypt one prepared sample.
    pub fn encrypt_sample(
        &self,
        ctx: &CkksContext,
        x: &[f64],
        pk: &PublicKey,
        rng: &mut impl RngCore,
    ) -> Result<Ciphertext> {
        let pt = ctx.encode(&self.layout.pack(x)?, ctx.delta(), ctx.max_level())?;
        ctx.encrypt(&pt, pk, rng)
    }

    fn weighted(&self, ctx: &CkksContext, ct: &Ciphertext, w: &Weight, rlk: &RelinKey) -> Result<Ciphertext> {
        match w {
            Weight::Plain(p) => ctx.mul_plain(ct, p),
            Weight::Cipher(c) => ctx.mul(ct, c, rlk),
        }
    }

    /// Server side: encrypted decision score of one encrypted sample, with
    /// the encrypted bias folded in. The `enc` entry of the trace holds
    /// only the input budget; timing of encryption belongs to the caller.
    pub fn score(
        &self,
        ctx: &CkksContext,
        ct_x: &Ciphertext,
        keys: &ServerKeys<'_>,
        rng: &mut impl RngCore,
        clock: &impl Clock,
    ) -> Result<EncryptedScore> {
        if ct_x.level() != ctx.max_level() || ct_x.size() != 2 {
            return Err(Error::InvalidInput(format!("sample ciphertext at level {}, expected fresh", ct_x.level())));
        }
        let mut trace = SampleTrace::default();
        trace.noise_bits[Stage::Enc as usize] = budget(ctx, ct_x);
        let steps = self.layout.block_sum_steps();
        let (rot, rlk) = (keys.rotation, keys.relin);

        let t0 = clock.now_ms();
        let x = replicate(ctx, ct_x, &self.layout, rot)?;
        let norm =
            if self.approx_degree > 0 { Some(ctx.rotate_sum(&ctx.square(&x, rlk)?, &steps, rot)?) } else { None };
        let mut pending: Vec<(Ciphertext, &Weight)> = Vec::new();
        for ch in &self.chunks {
            let dot = ctx.rotate_sum(&ctx.mul_plain(&x, &ch.svs)?, &steps, rot)?;
            if let Some(w) = &ch.poly {
                let p = ctx.add_const(&dot, self.kernel.coef)?;
                let pow = encrypted_powers(ctx, &p, self.kernel.degree as usize, rlk)?.pop().expect("degree >= 1");
                pending.push((pow, w));
            }
            if let (Some(norm), Some(sv_norms)) = (&norm, &ch.sv_norms) {
                let u = ctx.add_plain(&ctx.add(norm, &ctx.mul_int(&dot, -2))?, sv_norms)?;
                let powers = encrypted_powers(ctx, &u, self.approx_degree, rlk)?;
                pending.extend(powers.into_iter().zip(&ch.rbf));
            }
        }
        let t1 = clock.now_ms();
        trace.ms[Stage::Kernel as usize] = t1 - t0;
        trace.noise_bits[Stage::Kernel as usize] =
            pending.iter().map(|(c, _)| budget(ctx, c)).fold(f64::INFINITY, f64::min);

        let mut acc: Option<Ciphertext> = None;
        for (ct, w) in &pending {
            let t = self.weighted(ctx, ct, w, rlk)?;
            acc = Some(match acc {
                None => t,
                Some(a) => ctx.add(&a, &t)?,
            });
        }
        let acc = acc.ok_or_else(|| Error::InvalidInput("model has no kernel terms".into()))?;
        let acc = ctx.rotate_sum(&acc, &self.layout.accumulate_steps(), rot)?;
        let acc = ctx.add_const(&acc, self.constant)?;
        let t2 = clock.now_ms();
        trace.ms[Stage::Thresh as usize] = t2 - t1;
        trace.noise_bits[Stage::Thresh as usize] = budget(ctx, &acc);

        let b = ctx.encode(&alloc::vec![self.bias; ctx.slots()], acc.scale(), acc.level())?;
        let acc = ctx.add(&acc, &ctx.encrypt(&b, keys.public, rng)?)?;
        trace.ms[Stage::Dec as usize] = clock.now_ms() - t2;
        trace.noise_bits[Stage::Dec as usize] = budget(ctx, &acc);
        Ok(EncryptedScore { ciphertext: acc, trace })
    }

    /// Client side: decrypts slot 0 and charges the time to the `dec` stage.
    pub fn decrypt_score(
        ctx: &CkksContext,
        score: &mut EncryptedScore,
        sk: &SecretKey,
        clock: &impl Clock,
    ) -> Result<f64> {
        let t0 = clock.now_ms();
        let v = ctx.decrypt_decode(&score.ciphertext, sk)?[0];
        score.trace.ms[Stage::Dec as usize] += clock.now_ms() - t0;
        Ok(v)
    }

    /// Single-threaded batch run: encrypt, score, decrypt, threshold.
    pub fn run(
        &self,
        ctx: &CkksContext,
        samples: &Matrix,
        keys: &ServerKeys<'_>,
        sk: &SecretKey,
        tp: &ThresholdParams,
        rng: &mut impl RngCore,
        clock: &impl Clock,
    ) -> Result<InferenceReport> {
        let mut scores = Vec::with_capacity(samples.rows());
        let mut traces = Vec::with_capacity(samples.rows());
        for x in samples.iter_rows() {
            let t0 = clock.now_ms();
            let ct = self.encrypt_sample(ctx, x, keys.public, rng)?;
            let enc_ms = clock.now_ms() - t0;
            let mut s = self.score(ctx, &ct, keys, rng, clock)?;
            s.trace.ms[Stage::Enc as usize] = enc_ms;
            scores.push(Self::decrypt_score(ctx, &mut s, sk, clock)?);
            traces.push(s.trace);
        }
        let t0 = clock.now_ms();
        let report = InferenceReport::from_traces(scores, &traces, tp, 0.0)?;
        let thresh_ms = clock.now_ms() - t0;
        let mut report = report;
        let n = traces.len().max(1) as f64;
        report.stage_ms[Stage::Thresh as usize] += thresh_ms / n;
        report.total_ms += thresh_ms;
        Ok(report)
    }
}
