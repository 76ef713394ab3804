//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs sequentially so the timing checks see an idle machine.

#![allow(clippy::needless_range_loop)]

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use hesvm::data::{ingest_table, RawTable};
use hesvm::model_file::{load_json, ModelFile};
use hesvm::synth::{self, SynthOptions};
use hesvm_core::approx::PolyApprox;
use hesvm_core::ckks::{CkksContext, CkksParams};
use hesvm_core::inference::{Pipeline, PipelineOptions, ServerKeys, ThresholdParams};
use hesvm_core::matrix::Matrix;
use hesvm_core::metrics::{confusion, metrics, roc};
use hesvm_core::ring::{RingContext, RingParams, RingPoly};
use hesvm_core::svm::{gram, train, Dataset, KernelConfig, Preprocessing, TrainOptions};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn unit(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn uniform_vec(rng: &mut ChaCha20Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| unit(rng) * 2.0 - 1.0).collect()
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn roundtrip() -> Outcome {
    let t = Instant::now();
    let ctx = CkksContext::new(CkksParams::desk()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let ks = ctx.keygen(&[], &mut rng).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let v = uniform_vec(&mut rng, ctx.slots());
        let ct = ctx.encrypt_values(&v, &ks.public, &mut rng).unwrap();
        worst = worst.max(max_err(&ctx.decrypt_decode(&ct, &ks.secret).unwrap(), &v));
    }
    let secs = t.elapsed().as_secs_f64();
    check(worst <= 1e-3 && secs <= 120.0, format!("max decode error {worst:.2e} (<= 1e-3), {secs:.1} s (<= 120 s)"))
}

fn homomorphism() -> Outcome {
    let t = Instant::now();
    let ctx = CkksContext::new(CkksParams::desk()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let steps = [1i64, 5, -3, 1024];
    let ks = ctx.keygen(&steps, &mut rng).unwrap();
    let slots = ctx.slots();
    let (mut e_add, mut e_mul, mut e_rot) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..1000 {
        let v = uniform_vec(&mut rng, slots);
        let w = uniform_vec(&mut rng, slots);
        let cv = ctx.encrypt_values(&v, &ks.public, &mut rng).unwrap();
        let cw = ctx.encrypt_values(&w, &ks.public, &mut rng).unwrap();
        let sum: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
        e_add = e_add.max(max_err(&ctx.decrypt_decode(&ctx.add(&cv, &cw).unwrap(), &ks.secret).unwrap(), &sum));
        let prod: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a * b).collect();
        let cm = ctx.mul(&cv, &cw, &ks.relin).unwrap();
        e_mul = e_mul.max(max_err(&ctx.decrypt_decode(&cm, &ks.secret).unwrap(), &prod));
        let k = steps[i % steps.len()];
        let want: Vec<f64> = (0..slots).map(|j| v[(j as i64 + k).rem_euclid(slots as i64) as usize]).collect();
        let cr = ctx.rotate(&cv, k, &ks.rotation).unwrap();
        e_rot = e_rot.max(max_err(&ctx.decrypt_decode(&cr, &ks.secret).unwrap(), &want));
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        e_add <= 1e-3 && e_mul <= 1e-2 && e_rot <= 1e-3 && secs <= 300.0,
        format!("add {e_add:.2e} (<= 1e-3), mul {e_mul:.2e} (<= 1e-2), rotate {e_rot:.2e} (<= 1e-3), {secs:.1} s (<= 300 s)"),
    )
}

fn ring_oracle() -> Outcome {
    const N: usize = 16;
    const Q: u64 = 65537;
    let t = Instant::now();
    let r = RingContext::new(RingParams::new(N, vec![Q], vec![]).unwrap()).unwrap();
    let lift = |c: &[u64]| -> RingPoly {
        let s: Vec<i64> = c.iter().map(|&v| v as i64).collect();
        r.ntt_forward(&r.from_coeffs(&s, 1, false).unwrap()).unwrap()
    };
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut bad = 0;
    for _ in 0..1000 {
        let a: Vec<u64> = (0..N).map(|_| rng.next_u64() % Q).collect();
        let b: Vec<u64> = (0..N).map(|_| rng.next_u64() % Q).collect();
        let mut want = vec![0u64; N];
        for i in 0..N {
            for j in 0..N {
                let p = (a[i] as u128 * b[j] as u128 % Q as u128) as u64;
                let k = (i + j) % N;
                want[k] = if i + j < N { (want[k] + p) % Q } else { (want[k] + Q - p) % Q };
            }
        }
        let got = r.ntt_inverse(&r.mul(&lift(&a), &lift(&b)).unwrap()).unwrap().residue(0).to_vec();
        bad += usize::from(got != want);
    }
    check(bad == 0, format!("{bad} of 1000 products differ from schoolbook, {:.2} s", t.elapsed().as_secs_f64()))
}

fn metrics_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let mut bits = |n: usize, p: f64| -> Vec<u8> { (0..n).map(|_| u8::from(unit(&mut rng) < p)).collect() };
    let pred = bits(100_000, 0.45);
    let truth = bits(100_000, 0.55);
    let m = metrics(&confusion(&pred, &truth).unwrap()).unwrap();
    let mut tally = [0.0f64; 4];
    for (p, t) in pred.iter().zip(&truth) {
        tally[(2 * p + t) as usize] += 1.0;
    }
    let [tn, fn_, fp, tp] = tally;
    let (pre, rec) = (tp / (tp + fp), tp / (tp + fn_));
    let want = [(tp + tn) / 1e5, pre, rec, 2.0 * pre * rec / (pre + rec)];
    let got = [m.accuracy, m.precision, m.recall, m.f1];
    let e_metrics = max_err(&got, &want);

    let mut e_auc = 0.0f64;
    for round in 0..20 {
        let truth = bits(200, 0.5);
        let noise = bits(200, 0.5);
        let scores: Vec<f64> = truth
            .iter()
            .zip(&noise)
            .enumerate()
            .map(|(i, (&t, &z))| {
                let s = ((i * 7919) % 200) as f64 / 200.0 + 0.3 * t as f64 + 0.1 * z as f64;
                if round % 2 == 0 {
                    s
                } else {
                    (s * 8.0).floor()
                }
            })
            .collect();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..200 {
            for j in 0..200 {
                if truth[i] == 1 && truth[j] == 0 {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        e_auc = e_auc.max((roc(&scores, &truth).unwrap().auc - num / den).abs());
    }
    check(
        e_metrics <= 1e-12 && e_auc <= 1e-9,
        format!(
            "metrics error {e_metrics:.1e} (<= 1e-12), AUC vs concordance {e_auc:.1e} (<= 1e-9), {:.2} s",
            t.elapsed().as_secs_f64()
        ),
    )
}

/// Runs the CLI on the 1000-row synthetic dataset; returns seconds spent in
/// encrypt + infer.
fn cli_workflow(dir: &Path) -> Result<f64, String> {
    fs::write(
        dir.join("run.toml"),
        "[data]\npath = \"synth.csv\"\nlabel = \"class\"\n\n[synth]\nrows = 1000\n\n[run]\nout = \"out\"\n",
    )
    .map_err(|e| e.to_string())?;
    let mut enc_infer = 0.0;
    for cmd in ["gen-synth", "prepare", "train", "keygen", "encrypt", "infer", "eval"] {
        let t = Instant::now();
        let o = Command::new(env!("CARGO_BIN_EXE_hesvm"))
            .current_dir(dir)
            .args(["--config", "run.toml", cmd])
            .env("RUST_LOG", "warn")
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("`hesvm {cmd}` failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
        if cmd == "encrypt" || cmd == "infer" {
            enc_infer += t.elapsed().as_secs_f64();
        }
    }
    Ok(enc_infer)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn agreement(out: &Path, enc_secs: f64) -> Outcome {
    let s = json(&out.join("eval.json"));
    let n = json(&out.join("report.json"))["scores"].as_array().map_or(0, Vec::len);
    let approx = s["agreement_approx"].as_f64().unwrap_or(0.0);
    let exact = s["agreement_exact"].as_f64().unwrap_or(0.0);
    check(
        n == 200 && approx >= 0.99 && exact >= 0.95 && enc_secs <= 600.0,
        format!(
            "{n} test rows; vs PolyApprox plaintext {:.2}% (>= 99%), vs exact plaintext {:.2}% (>= 95%), encrypt+infer {enc_secs:.1} s (<= 600 s)",
            100.0 * approx,
            100.0 * exact
        ),
    )
}

fn report_accuracy(out: &Path, model: &str) -> f64 {
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    csv.lines()
        .find(|l| l.starts_with(&format!("{model},")))
        .and_then(|l| l.split(',').nth(2))
        .and_then(|v| v.parse().ok())
        .unwrap_or(f64::NAN)
}

fn hybrid_beats_linear(out: &Path) -> Outcome {
    let hybrid = report_accuracy(out, "PT-FinTech");
    let linear = report_accuracy(out, "PT-Linear");
    let gap = 100.0 * (hybrid - linear);

    let rows = Matrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
    let xor = Dataset::unnamed(rows, vec![1, 1, -1, -1]).unwrap();
    let fitted = |cfg: &KernelConfig| {
        let opts = TrainOptions { c: 10.0, ..Default::default() };
        let m = train(&xor, cfg, &opts, &mut ChaCha20Rng::seed_from_u64(6)).unwrap().model;
        xor.features().iter_rows().zip(xor.labels()).filter(|(x, &y)| m.predict(x).unwrap() == y).count()
    };
    let h = fitted(&KernelConfig { gamma: 0.5, ..Default::default() });
    let l = fitted(&KernelConfig::linear());
    check(
        gap >= 5.0 && h == 4 && l < 4,
        format!(
            "synthetic PT-FinTech {:.2}% vs PT-Linear {:.2}% (gap {gap:.2} pp >= 5); XOR hybrid {h}/4, linear {l}/4",
            100.0 * hybrid,
            100.0 * linear
        ),
    )
}

fn noise_trace(out: &Path) -> Outcome {
    let stages = ["enc", "kernel", "thresh", "dec"];
    let desk: Vec<f64> = {
        let r = json(&out.join("report.json"));
        stages.iter().map(|s| r["noise_bits"][s].as_f64().unwrap_or(f64::NAN)).collect()
    };

    let file: ModelFile = load_json(&out.join("model.json"), "").map_err(|e| e.to_string())?;
    let model = file.to_model().map_err(|e| e.to_string())?;
    let test = hesvm::data::read_prepared(&out.join("prepared/test.csv")).map_err(|e| e.to_string())?;
    let ctx = CkksContext::new(CkksParams::paper()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let ks0 = ctx.keygen(&[], &mut rng).unwrap();
    let p =
        Pipeline::new(&ctx, &model, PipelineOptions::default(), &ks0.public, &mut rng).map_err(|e| e.to_string())?;
    let ks = ctx.keygen(&p.rotation_steps(), &mut rng).unwrap();
    let keys = ServerKeys { public: &ks.public, relin: &ks.relin, rotation: &ks.rotation };
    let rows = test.features().select_rows(&[0, 1, 2]);
    let clock = || 0.0;
    let r = p
        .run(&ctx, &rows, &keys, &ks.secret, &ThresholdParams::default(), &mut rng, &clock)
        .map_err(|e| e.to_string())?;
    let wide = r.noise_bits.to_vec();
    let exact: Vec<f64> = rows.iter_rows().map(|x| model.decision_score(x).unwrap()).collect();
    let drift = max_err(&r.scores, &exact);

    let strict = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let fmt = |v: &[f64]| v.iter().map(|b| format!("{b:.1}")).collect::<Vec<_>>().join(" > ");
    check(
        (wide[0] - 120.0).abs() <= 10.0 && wide[3] > 0.0 && strict(&wide) && strict(&desk) && desk[3] > 0.0,
        format!(
            "n = 32768 {} bits (start 120 +- 10, end > 0; score drift {drift:.3}); desk {} bits",
            fmt(&wide),
            fmt(&desk)
        ),
    )
}

fn scaling(dir: &Path) -> Outcome {
    let t = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_hesvm"))
        .current_dir(dir)
        .args(["--config", "run.toml", "bench"])
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("`hesvm bench` failed: {}", String::from_utf8_lossy(&o.stderr)));
    }
    let out = dir.join("out");
    let b = json(&out.join("bench.json"));
    let sizes: Vec<u64> = b["batch_sizes"].as_array().unwrap().iter().filter_map(Value::as_u64).collect();
    let csv_rows = fs::read_to_string(out.join("scaling.csv")).unwrap().lines().count() - 1;
    let r2 = b["r_squared"].as_f64().unwrap_or(0.0);
    let cv = b["per_sample_cv"].as_f64().unwrap_or(f64::INFINITY);
    let stage: Vec<(String, f64)> =
        b["stage_ms"].as_object().unwrap().iter().map(|(k, v)| (k.clone(), v.as_f64().unwrap_or(0.0))).collect();
    let largest = stage.iter().max_by(|a, b| a.1.total_cmp(&b.1)).map(|s| s.0.clone()).unwrap_or_default();
    let per_stage = stage.iter().map(|(k, v)| format!("{k} {v:.1}")).collect::<Vec<_>>().join(", ");
    check(
        sizes == [10, 25, 50, 100] && csv_rows == 4 && r2 >= 0.98 && cv <= 0.25 && largest == "kernel",
        format!(
            "batches {sizes:?}, R^2 {r2:.4} (>= 0.98), per-sample CV {:.1}% (<= 25%), {:.2} ms/sample; stage ms {per_stage}; {:.0} s",
            100.0 * cv,
            b["slope_ms_per_sample"].as_f64().unwrap_or(f64::NAN),
            t.elapsed().as_secs_f64()
        ),
    )
}

fn rbf_approx() -> Outcome {
    let p4 = PolyApprox::fit_exp(0.0, 4.0, 4).unwrap();
    let grid = (0..=40_000)
        .map(|i| 4.0 * i as f64 / 40_000.0)
        .map(|t| (p4.eval_horner(t) - (-t).exp()).abs())
        .fold(0.0, f64::max);

    let ctx = CkksContext::new(CkksParams::desk()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let ks = ctx.keygen(&[], &mut rng).unwrap();
    let p2 = PolyApprox::fit_exp(0.0, 4.0, 2).unwrap();
    let ts: Vec<f64> = (0..100).map(|_| 4.0 * unit(&mut rng)).collect();
    let ct = ctx.encrypt_values(&ts, &ks.public, &mut rng).unwrap();
    let got = ctx.decrypt_decode(&p2.eval_encrypted(&ctx, &ct, &ks.relin).unwrap(), &ks.secret).unwrap();
    let exact: Vec<f64> = ts.iter().map(|t| (-t).exp()).collect();
    let enc = max_err(&got[..100], &exact);
    check(
        p4.max_err() <= 0.05 && grid <= 0.05 && enc <= 0.1,
        format!("degree 4 on [0,4]: recorded {:.4}, dense grid {grid:.4} (<= 0.05); encrypted degree 2 vs exp {enc:.4} (<= 0.1)", p4.max_err()),
    )
}

fn dual_feasibility() -> Outcome {
    let mut worst_sum = 0.0f64;
    let mut box_ok = true;
    let mut scaling_ok = true;
    let mut attempts = 0;
    let mut applied_reduced = 0;
    let mut feasible_obj = true;
    for round in 0..20u64 {
        let s = synth::generate(&SynthOptions { rows: 60 + 5 * round as usize, noise: 0.1, seed: 100 + round });
        let table = RawTable { header: synth::HEADER.iter().map(|h| h.to_string()).collect(), rows: s.rows };
        let (raw, _) = ingest_table(&table, "class", &Default::default()).map_err(|e| e.to_string())?;
        let prep = Preprocessing::fit(&raw, 0.0).map_err(|e| e.to_string())?;
        let ds = prep.transform(&raw).map_err(|e| e.to_string())?;
        let c = [0.1, 1.0, 10.0, 100.0][round as usize % 4];
        let cfg = KernelConfig::for_data(&ds);
        let opts = TrainOptions { c, record_scaling: true, ..Default::default() };
        let r = train(&ds, &cfg, &opts, &mut ChaCha20Rng::seed_from_u64(round)).map_err(|e| e.to_string())?;
        let y: Vec<f64> = ds.labels().iter().map(|&l| l as f64).collect();
        worst_sum = worst_sum.max(r.alpha.iter().zip(&y).map(|(a, y)| a * y).sum::<f64>().abs());
        box_ok &= r.alpha.iter().all(|&a| (0.0..=c).contains(&a));
        let k = gram(ds.features(), &cfg);
        let m = y.len();
        let quad: f64 =
            (0..m).map(|i| (0..m).map(|j| r.alpha[i] * r.alpha[j] * y[i] * y[j] * k[i * m + j]).sum::<f64>()).sum();
        feasible_obj &= r.alpha.iter().sum::<f64>() - 0.5 * quad >= 0.0;
        for a in &r.attempts {
            attempts += 1;
            if let Some(beta) = a.applied {
                let applied = a.candidates.last().unwrap();
                applied_reduced += usize::from(beta < 1.0);
                scaling_ok &= applied.beta == beta && applied.in_box && applied.gain >= 0.0;
                for rejected in &a.candidates[..a.candidates.len() - 1] {
                    scaling_ok &= rejected.beta > beta && (!rejected.in_box || rejected.gain < applied.gain);
                }
            }
        }
    }
    check(
        worst_sum <= 1e-6 && box_ok && scaling_ok && feasible_obj,
        format!(
            "20 datasets: max |sum alpha y| {worst_sum:.1e} (<= 1e-6), box {}, objective >= 0 {feasible_obj}, {attempts} scaled steps ({applied_reduced} at beta < 1) never below a rejected candidate: {}",
            if box_ok { "held" } else { "violated" },
            scaling_ok
        ),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, r: Outcome| {
        let (tag, detail) = match &r {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} criterion {n:>2} {name}: {detail}");
        results.push((n, name, r));
    };
    report(1, "ckks roundtrip", roundtrip());
    report(2, "homomorphism", homomorphism());
    report(3, "ring oracle", ring_oracle());
    report(4, "metrics", metrics_oracle());
    match cli_workflow(dir.path()) {
        Ok(secs) => {
            let out = dir.path().join("out");
            report(5, "encrypted/plaintext agreement", agreement(&out, secs));
            report(6, "hybrid beats linear", hybrid_beats_linear(&out));
            report(7, "noise trace", noise_trace(&out));
            report(8, "scaling", scaling(dir.path()));
        }
        Err(e) => {
            for (n, name) in
                [(5, "encrypted/plaintext agreement"), (6, "hybrid beats linear"), (7, "noise trace"), (8, "scaling")]
            {
                report(n, name, Err(e.clone()));
            }
        }
    }
    report(9, "rbf approximation", rbf_approx());
    report(10, "dual feasibility", dual_feasibility());
    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
