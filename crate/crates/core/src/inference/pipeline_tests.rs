use super::*;
use crate::approx::PolyApprox;
use crate::ckks::{CkksContext, CkksParams, KeySet};
use crate::matrix::Matrix;
use crate::svm::{KernelConfig, Preprocessing, SvmModel};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn ctx() -> CkksContext {
    let params = CkksParams::from_bits(1024, &[60, 40, 40, 40], &[61, 61], (1u64 << 20) as f64, "test").unwrap();
    CkksContext::new(params).unwrap()
}

fn uniform(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn model(k: usize, nf: usize, cfg: KernelConfig, degree: usize, rng: &mut ChaCha20Rng) -> SvmModel {
    let rows: Vec<Vec<f64>> = (0..k).map(|_| (0..nf).map(|_| 1.5 * uniform(rng)).collect()).collect();
    let svs = Matrix::from_rows(&rows).unwrap();
    let dual: Vec<f64> =
        (0..k).map(|i| if i % 2 == 0 { 0.5 + 0.4 * uniform(rng) } else { -0.5 - 0.4 * uniform(rng) }).collect();
    let mut m = SvmModel {
        support_vectors: svs,
        dual_coeffs: dual,
        bias: 0.25,
        c: 1.0,
        kernel: cfg,
        preprocessing: Preprocessing::identity(nf),
        rbf_approx: None,
    };
    let samples = Matrix::from_rows(&rows).unwrap();
    let svs: Vec<&[f64]> = m.support_vectors.iter_rows().collect();
    let (a, b) = crate::approx::calibrate_interval(cfg.gamma, samples.iter_rows(), &svs).unwrap();
    m.rbf_approx = Some(PolyApprox::fit_exp(a, 4.0 * b, degree).unwrap());
    m
}

fn keys(ctx: &CkksContext, p: &Pipeline, rng: &mut ChaCha20Rng) -> KeySet {
    ctx.keygen(&p.rotation_steps(), rng).unwrap()
}

fn check_scores(opts: PipelineOptions, k: usize, nf: usize) {
    let ctx = ctx();
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let cfg = KernelConfig { gamma: 0.2, ..Default::default() };
    let m = model(k, nf, cfg, 2, &mut rng);
    let steps = Layout::new(nf, ctx.slots(), opts.replicated).unwrap().rotation_steps();
    let ks = ctx.keygen(&steps, &mut rng).unwrap();
    let p = Pipeline::new(&ctx, &m, opts, &ks.public, &mut rng).unwrap();
    assert_eq!(p.rotation_steps(), steps);
    let sk = ServerKeys { public: &ks.public, relin: &ks.relin, rotation: &ks.rotation };
    assert_eq!(p.ledger().total(), 3);
    for _ in 0..3 {
        let x: Vec<f64> = (0..nf).map(|_| uniform(&mut rng)).collect();
        let ct = p.encrypt_sample(&ctx, &x, &ks.public, &mut rng).unwrap();
        let mut s = p.score(&ctx, &ct, &sk, &mut rng, &NullClock).unwrap();
        assert_eq!(ctx.max_level() - s.ciphertext.level(), p.ledger().total());
        let got = Pipeline::decrypt_score(&ctx, &mut s, &ks.secret, &NullClock).unwrap();
        let want = m.decision_score_approx(&x).unwrap();
        assert!((got - want).abs() < 1e-2, "got {got}, want {want}");
        let nb = s.trace.noise_bits;
        assert!(nb[0] > nb[1] && nb[1] > nb[2] && nb[2] > nb[3], "{nb:?}");
    }
}

#[test]
fn pipeline_matches_plaintext_approx() {
    check_scores(PipelineOptions::default(), 20, 5);
}

#[test]
fn pipeline_multiple_chunks() {
    // 64 blocks of 8 slots per ciphertext; 150 support vectors need 3 chunks.
    check_scores(PipelineOptions::default(), 150, 7);
}

#[test]
fn pipeline_leading_layout() {
    check_scores(PipelineOptions { replicated: false, encrypt_coeffs: false }, 10, 3);
}

#[test]
fn pipeline_encrypted_coeffs() {
    check_scores(PipelineOptions { replicated: true, encrypt_coeffs: true }, 10, 4);
}

#[test]
fn over_deep_configuration_is_rejected() {
    let ctx = ctx();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let ks = ctx.keygen(&[], &mut rng).unwrap();
    let deep = model(4, 3, KernelConfig::default(), 4, &mut rng);
    let e = Pipeline::new(&ctx, &deep, PipelineOptions::default(), &ks.public, &mut rng).unwrap_err();
    assert!(matches!(e, crate::error::Error::LevelExhausted(_)), "{e:?}");
    let cubic = model(4, 3, KernelConfig { degree: 3, ..Default::default() }, 2, &mut rng);
    assert!(Pipeline::new(&ctx, &cubic, PipelineOptions::default(), &ks.public, &mut rng).is_err());
}

#[test]
fn dot_matmul_and_kernel() {
    let ctx = ctx();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let layout = Layout::new(6, ctx.slots(), true).unwrap();
    let ks = ctx.keygen(&layout.rotation_steps(), &mut rng).unwrap();
    let x: Vec<f64> = (0..6).map(|_| uniform(&mut rng)).collect();
    let sv: Vec<f64> = (0..6).map(|_| uniform(&mut rng)).collect();
    let batch =
        encrypt_batch(&ctx, &Matrix::from_rows(std::slice::from_ref(&x)).unwrap(), layout, &ks.public, &mut rng, &NullClock)
            .unwrap();
    let svp = encode_sv(&ctx, &layout, &sv).unwrap();
    let dot = enc_dot(&ctx, &batch.ciphertexts[0], &layout, &svp, &ks.rotation).unwrap();
    let want = crate::matrix::dot(&x, &sv);
    let got = ctx.decrypt_decode(&dot, &ks.secret).unwrap();
    for b in 0..layout.blocks() {
        assert!((got[b * layout.block] - want).abs() < 1e-3);
    }

    let svs =
        Matrix::from_rows(&(0..200).map(|_| (0..6).map(|_| uniform(&mut rng)).collect()).collect::<Vec<Vec<f64>>>())
            .unwrap();
    let mm = enc_matmul(&ctx, &batch, &svs, &ks.rotation).unwrap().decrypt(&ctx, &ks.secret).unwrap();
    for j in 0..200 {
        assert!((mm.get(0, j) - crate::matrix::dot(&x, svs.row(j))).abs() < 1e-3);
    }

    // Standalone kernel: linear with lambda2 = 0 reduces to lambda1 x.sv.
    let lin = KernelConfig { lambda1: 0.7, lambda2: 0.0, degree: 1, coef: 0.0, gamma: 1.0 };
    let dist = ctx.encrypt_values(&[crate::matrix::sq_dist(&x, &sv)], &ks.public, &mut rng).unwrap();
    let kct = enc_hybrid_kernel(&ctx, &dot, &dist, &lin, None, &ks.relin).unwrap();
    assert!((ctx.decrypt_decode(&kct, &ks.secret).unwrap()[0] - 0.7 * want).abs() < 1e-3);

    let cfg = KernelConfig { gamma: 0.3, ..Default::default() };
    let approx = PolyApprox::fit_exp(0.0, 6.0, 2).unwrap();
    let dot_top = ctx.encrypt_values(&[want], &ks.public, &mut rng).unwrap();
    let kct = enc_hybrid_kernel(&ctx, &dot_top, &dist, &cfg, Some(&approx), &ks.relin).unwrap();
    let expect = crate::svm::hybrid_kernel_approx(&x, &sv, &cfg, &approx).unwrap();
    assert!((ctx.decrypt_decode(&kct, &ks.secret).unwrap()[0] - expect).abs() < 1e-3);
    assert_eq!(kernel_depth(&cfg, 2), 2);
}

#[test]
fn run_reports_stages() {
    let ctx = ctx();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let cfg = KernelConfig { gamma: 0.2, ..Default::default() };
    let m = model(8, 4, cfg, 2, &mut rng);
    let ks0 = ctx.keygen(&[], &mut rng).unwrap();
    let p = Pipeline::new(&ctx, &m, PipelineOptions::default(), &ks0.public, &mut rng).unwrap();
    let ks = keys(&ctx, &p, &mut rng);
    let sk = ServerKeys { public: &ks.public, relin: &ks.relin, rotation: &ks.rotation };
    let xs = Matrix::from_rows(&(0..4).map(|_| (0..4).map(|_| uniform(&mut rng)).collect()).collect::<Vec<Vec<f64>>>())
        .unwrap();
    let tick = core::cell::Cell::new(0.0);
    let clock = || {
        tick.set(tick.get() + 1.0);
        tick.get()
    };
    let r = p.run(&ctx, &xs, &sk, &ks.secret, &ThresholdParams::default(), &mut rng, &clock).unwrap();
    assert_eq!(r.scores.len(), 4);
    assert!(r.stage_ms.iter().all(|&m| m > 0.0));
    assert!(r.noise_bits.windows(2).all(|w| w[0] > w[1]));
    assert_eq!(r.labels, classify(&r.scores, r.threshold.theta));
}
