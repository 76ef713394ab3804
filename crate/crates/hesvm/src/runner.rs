//! Multi-threaded drivers for the encrypted and plaintext pipelines.
//!
//! Every sample draws from its own ChaCha stream derived from
//! `(seed, sample index)`, so results do not depend on the worker count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use hesvm_core::ckks::{Ciphertext, CkksContext, PublicKey, SecretKey};
use hesvm_core::inference::{
    classify, Clock, InferenceReport, Layout, Pipeline, SampleTrace, ServerKeys, Stage, Threshold, ThresholdParams,
};
use hesvm_core::matrix::Matrix;
use hesvm_core::svm::SvmModel;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::config::ThresholdRule;
use crate::error::{AppError, AppResult};

/// Monotonic milliseconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

/// Randomness roles within one sample.
#[derive(Debug, Clone, Copy)]
pub enum Role {
    Encrypt = 0,
    Score = 1,
}

pub fn sample_rng(seed: u64, sample: usize, role: Role) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(2 * sample as u64 + role as u64);
    rng
}

/// Randomness for server-side setup (encrypted coefficients).
pub fn setup_rng(seed: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng
}

/// Applies `f` to `0..n` on `workers` threads; output is in index order.
pub fn par_map<T, F>(n: usize, workers: usize, f: F) -> AppResult<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> AppResult<T> + Sync,
{
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<AppResult<T>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                let failed = r.is_err();
                slots.lock().expect("worker panicked")[i] = Some(r);
                if failed {
                    next.store(n, Ordering::Relaxed);
                }
            });
        }
    });
    let mut out = Vec::with_capacity(n);
    for r in slots.into_inner().expect("worker panicked") {
        match r {
            Some(v) => out.push(v?),
            None => return Err(AppError::Other("inference stopped after a failed sample".into())),
        }
    }
    Ok(out)
}

/// Client side: packs and encrypts every row, as [`Pipeline::encrypt_sample`]
/// does. Returns ciphertexts and per-sample ms.
pub fn encrypt_rows(
    ctx: &CkksContext,
    layout: &Layout,
    rows: &Matrix,
    pk: &PublicKey,
    seed: u64,
    workers: usize,
) -> AppResult<Vec<(Ciphertext, f64)>> {
    par_map(rows.rows(), workers, |i| {
        let clock = WallClock::new();
        let pt = ctx.encode(&layout.pack(rows.row(i))?, ctx.delta(), ctx.max_level())?;
        let ct = ctx.encrypt(&pt, pk, &mut sample_rng(seed, i, Role::Encrypt))?;
        Ok((ct, clock.now_ms()))
    })
}

/// Server scoring followed by client decryption of slot 0.
pub struct Scored {
    pub score: f64,
    pub trace: SampleTrace,
    pub ciphertext: Ciphertext,
}

#[allow(clippy::too_many_arguments)]
pub fn score_ciphertexts(
    ctx: &CkksContext,
    pipeline: &Pipeline,
    cts: &[Ciphertext],
    enc_ms: &[f64],
    keys: &ServerKeys<'_>,
    sk: &SecretKey,
    seed: u64,
    workers: usize,
) -> AppResult<Vec<Scored>> {
    par_map(cts.len(), workers, |i| {
        let clock = WallClock::new();
        let mut s = pipeline.score(ctx, &cts[i], keys, &mut sample_rng(seed, i, Role::Score), &clock)?;
        s.trace.ms[Stage::Enc as usize] = enc_ms.get(i).copied().unwrap_or(0.0);
        let score = Pipeline::decrypt_score(ctx, &mut s, sk, &clock)?;
        Ok(Scored { score, trace: s.trace, ciphertext: s.ciphertext })
    })
}

/// Threshold and labels under `rule`, with the batch threshold time spread
/// over the samples.
pub fn finalize(
    scores: Vec<f64>,
    traces: &[SampleTrace],
    tp: &ThresholdParams,
    rule: ThresholdRule,
) -> AppResult<InferenceReport> {
    let clock = WallClock::new();
    let mut report = InferenceReport::from_traces(scores, traces, tp, 0.0)?;
    if rule == ThresholdRule::Sign {
        report.threshold = Threshold { theta: 0.0, ..report.threshold };
        report.labels = classify(&report.scores, 0.0);
    }
    let ms = clock.now_ms();
    report.stage_ms[Stage::Thresh as usize] += ms / traces.len().max(1) as f64;
    report.total_ms += ms;
    Ok(report)
}

/// Whole encrypted pipeline over prepared rows.
#[allow(clippy::too_many_arguments)]
pub fn run_encrypted(
    ctx: &CkksContext,
    pipeline: &Pipeline,
    rows: &Matrix,
    keys: &ServerKeys<'_>,
    sk: &SecretKey,
    tp: &ThresholdParams,
    rule: ThresholdRule,
    seed: u64,
    workers: usize,
) -> AppResult<InferenceReport> {
    let scored = par_map(rows.rows(), workers, |i| {
        let clock = WallClock::new();
        let ct = pipeline.encrypt_sample(ctx, rows.row(i), keys.public, &mut sample_rng(seed, i, Role::Encrypt))?;
        let enc_ms = clock.now_ms();
        let mut s = pipeline.score(ctx, &ct, keys, &mut sample_rng(seed, i, Role::Score), &clock)?;
        s.trace.ms[Stage::Enc as usize] = enc_ms;
        let score = Pipeline::decrypt_score(ctx, &mut s, sk, &clock)?;
        Ok((score, s.trace))
    })?;
    let (scores, traces): (Vec<f64>, Vec<SampleTrace>) = scored.into_iter().unzip();
    finalize(scores, &traces, tp, rule)
}

/// Plaintext decision scores; `approx` substitutes the stored RBF polynomial.
pub fn plaintext_scores(model: &SvmModel, rows: &Matrix, approx: bool) -> AppResult<Vec<f64>> {
    rows.iter_rows()
        .map(|x| Ok(if approx { model.decision_score_approx(x)? } else { model.decision_score(x)? }))
        .collect()
}

/// Plaintext pipeline report; only the kernel stage is timed.
pub fn run_plaintext(
    model: &SvmModel,
    rows: &Matrix,
    approx: bool,
    tp: &ThresholdParams,
    rule: ThresholdRule,
) -> AppResult<InferenceReport> {
    let clock = WallClock::new();
    let mut scores = Vec::with_capacity(rows.rows());
    let mut traces = Vec::with_capacity(rows.rows());
    for x in rows.iter_rows() {
        let t0 = clock.now_ms();
        scores.push(if approx { model.decision_score_approx(x)? } else { model.decision_score(x)? });
        let mut tr = SampleTrace::default();
        tr.ms[Stage::Kernel as usize] = clock.now_ms() - t0;
        traces.push(tr);
    }
    let mut r = finalize(scores, &traces, tp, rule)?;
    r.noise_bits = [0.0; 4];
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_keeps_order_and_errors() {
        let v = par_map(50, 4, |i| Ok(i * i)).unwrap();
        assert_eq!(v, (0..50).map(|i| i * i).collect::<Vec<_>>());
        let e = par_map(50, 3, |i| if i == 17 { Err(AppError::Other("boom".into())) } else { Ok(i) });
        assert!(e.is_err());
    }

    #[test]
    fn streams_differ_by_sample_and_role() {
        use rand_chacha::rand_core::RngCore;
        let a = sample_rng(1, 0, Role::Encrypt).next_u64();
        assert_eq!(a, sample_rng(1, 0, Role::Encrypt).next_u64());
        assert_ne!(a, sample_rng(1, 0, Role::Score).next_u64());
        assert_ne!(a, sample_rng(1, 1, Role::Encrypt).next_u64());
    }
}
