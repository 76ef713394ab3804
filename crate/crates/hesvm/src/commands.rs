//! One function per CLI subcommand. Each checks its inputs before doing
//! work and writes its artifacts under the configured output directory.

use std::path::Path;

use hesvm_core::ckks::CkksContext;
use hesvm_core::inference::{adaptive_threshold, InferenceReport, Layout, Pipeline, ServerKeys};
use hesvm_core::metrics::roc;
use hesvm_core::svm::{Dataset, SvmModel};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::artifacts::{self, hex, BatchManifest};
use crate::config::RunConfig;
use crate::data::{read_prepared, to_binary, write_prepared};
use crate::error::{AppError, AppResult};
use crate::model_file::{load_json, save_json, ModelFile, PreprocessFile};
use crate::report::{self, ReportJson};
use crate::runner::{self, WallClock};
use crate::synth::{self, SynthOptions};
use crate::workflow::{self, Encrypted};
use hesvm_core::inference::Clock;

pub const PREPROCESS: &str = "preprocess.json";
pub const TRAIN_CSV: &str = "train.csv";
pub const TEST_CSV: &str = "test.csv";

fn mkdir(p: &Path) -> AppResult<()> {
    std::fs::create_dir_all(p).map_err(AppError::io(p.display().to_string()))
}

pub fn context(cfg: &RunConfig) -> AppResult<CkksContext> {
    Ok(CkksContext::new(cfg.ckks.params()?)?)
}

pub fn load_model(cfg: &RunConfig) -> AppResult<SvmModel> {
    let file: ModelFile = load_json(&cfg.model_path(), "run `hesvm train` first")?;
    file.to_model()
}

pub fn load_split(cfg: &RunConfig, split: &str) -> AppResult<Dataset> {
    let name = match split {
        "train" => TRAIN_CSV,
        "test" => TEST_CSV,
        other => return Err(AppError::Config(format!("unknown split {other:?}; use train or test"))),
    };
    read_prepared(&cfg.prepared_dir().join(name))
}

pub fn layout_for(ctx: &CkksContext, cfg: &RunConfig, model: &SvmModel) -> AppResult<Layout> {
    Ok(Layout::new(model.n_features(), ctx.slots(), cfg.ckks.replicated)?)
}

pub fn gen_synth(cfg: &RunConfig) -> AppResult<()> {
    let s = &cfg.synth;
    let data = synth::generate(&SynthOptions { rows: s.rows, noise: s.noise, seed: s.seed });
    synth::write_csv(&cfg.data.path, &data)?;
    log::info!("wrote {} rows to {} ({:.1}% positive)", s.rows, cfg.data.path.display(), 100.0 * data.positive_share);
    Ok(())
}

pub fn prepare(cfg: &RunConfig) -> AppResult<()> {
    cfg.require_data()?;
    let p = workflow::prepare(cfg)?;
    let dir = cfg.prepared_dir();
    mkdir(&dir)?;
    write_prepared(&dir.join(TRAIN_CSV), &p.train)?;
    write_prepared(&dir.join(TEST_CSV), &p.test)?;
    save_json(&dir.join(PREPROCESS), &p.file)?;
    log::info!(
        "split {} train / {} test; {} of {} encoded features selected",
        p.train.len(),
        p.test.len(),
        p.train.n_features(),
        p.file.scaler.columns.len()
    );
    Ok(())
}

pub fn train(cfg: &RunConfig) -> AppResult<()> {
    let dir = cfg.prepared_dir();
    let prep: PreprocessFile = load_json(&dir.join(PREPROCESS), "run `hesvm prepare` first")?;
    let train_set = read_prepared(&dir.join(TRAIN_CSV))?;
    let kernel = cfg.kernel_for(&train_set);
    let t = workflow::fit_model(
        &train_set,
        &kernel,
        &cfg.train_options(),
        &prep.preprocessing()?,
        &cfg.approx,
        cfg.train.seed,
    )?;
    if !t.converged {
        log::warn!("training stopped at KKT violation {:.3e} after {} epochs", t.kkt_violation, t.epochs);
    }
    mkdir(&cfg.run.out)?;
    save_json(&cfg.model_path(), &ModelFile::new(&t.model, &prep))?;
    log::info!("{} support vectors, gamma {:.4}, {} epochs", t.model.n_support(), kernel.gamma, t.epochs);
    Ok(())
}

pub fn keygen(cfg: &RunConfig) -> AppResult<()> {
    let model = load_model(cfg)?;
    let ctx = context(cfg)?;
    let layout = layout_for(&ctx, cfg, &model)?;
    let mut steps = layout.rotation_steps();
    steps.extend(&cfg.ckks.rotation_steps);
    steps.sort_unstable();
    steps.dedup();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.run.seed);
    rng.set_stream(u64::MAX - 1);
    let keys = ctx.keygen(&steps, &mut rng)?;
    artifacts::write_keys(&cfg.keys_dir(), &ctx, &keys)?;
    log::info!("keys for {} rotation steps written to {}", steps.len(), cfg.keys_dir().display());
    Ok(())
}

pub fn encrypt(cfg: &RunConfig, split: &str) -> AppResult<()> {
    let model = load_model(cfg)?;
    let ctx = context(cfg)?;
    let pk = artifacts::read_public(&cfg.keys_dir(), &ctx)?;
    let data = load_split(cfg, split)?;
    let layout = layout_for(&ctx, cfg, &model)?;
    let cts = runner::encrypt_rows(&ctx, &layout, data.features(), &pk, cfg.run.seed, cfg.run.workers)?;
    let dir = cfg.ct_dir(split);
    mkdir(&dir)?;
    for (i, (ct, _)) in cts.iter().enumerate() {
        artifacts::write_ct(&BatchManifest::file(&dir, i), &ctx, ct)?;
    }
    BatchManifest {
        split: split.to_owned(),
        count: cts.len(),
        n_features: layout.n_features,
        block: layout.block,
        replicated: layout.replicated,
        digest: hex(ctx.digest()),
        enc_ms: cts.iter().map(|c| c.1).collect(),
    }
    .save(&dir)?;
    log::info!("encrypted {} samples into {}", cts.len(), dir.display());
    Ok(())
}

fn plaintext_report(cfg: &RunConfig, model: &SvmModel, test: &Dataset) -> AppResult<ReportJson> {
    let tp = cfg.threshold_params();
    let exact = runner::run_plaintext(model, test.features(), false, &tp, cfg.threshold.rule)?;
    let mut json = ReportJson::new(&exact, false);
    if model.rbf_approx.is_some() {
        let approx = runner::run_plaintext(model, test.features(), true, &tp, cfg.threshold.rule)?;
        json.approx_scores = Some(approx.scores);
        json.approx_labels = Some(approx.labels);
    }
    Ok(json)
}

pub fn infer(cfg: &RunConfig, plaintext: bool) -> AppResult<ReportJson> {
    let model = load_model(cfg)?;
    if plaintext {
        let test = load_split(cfg, "test")?;
        let json = plaintext_report(cfg, &model, &test)?;
        save_json(&cfg.report_path(true), &json)?;
        return Ok(json);
    }
    let ctx = context(cfg)?;
    let keys_dir = cfg.keys_dir();
    let pk = artifacts::read_public(&keys_dir, &ctx)?;
    let (rlk, rot) = artifacts::read_eval_keys(&keys_dir, &ctx)?;
    let sk = artifacts::read_secret(&keys_dir, &ctx)?;
    let layout = layout_for(&ctx, cfg, &model)?;
    let dir = cfg.ct_dir("test");
    let manifest = BatchManifest::load(&dir)?;
    manifest.check(&ctx, &layout)?;
    let cts = (0..manifest.count)
        .map(|i| artifacts::read_ct(&BatchManifest::file(&dir, i), &ctx, "run `hesvm encrypt` again"))
        .collect::<AppResult<Vec<_>>>()?;

    let pipeline = Pipeline::new(&ctx, &model, cfg.ckks.pipeline_options(), &pk, &mut runner::setup_rng(cfg.run.seed))?;
    let keys = ServerKeys { public: &pk, relin: &rlk, rotation: &rot };
    let scored =
        runner::score_ciphertexts(&ctx, &pipeline, &cts, &manifest.enc_ms, &keys, &sk, cfg.run.seed, cfg.run.workers)?;
    let scores_dir = cfg.scores_dir();
    mkdir(&scores_dir)?;
    for (i, s) in scored.iter().enumerate() {
        artifacts::write_ct(&BatchManifest::file(&scores_dir, i), &ctx, &s.ciphertext)?;
    }
    let traces: Vec<_> = scored.iter().map(|s| s.trace).collect();
    let report = runner::finalize(
        scored.iter().map(|s| s.score).collect(),
        &traces,
        &cfg.threshold_params(),
        cfg.threshold.rule,
    )?;
    let json = ReportJson::new(&report, true);
    save_json(&cfg.report_path(false), &json)?;
    log::info!(
        "scored {} samples; theta {:.4}; {:.1} ms per sample; final budget {:.1} bits",
        report.scores.len(),
        report.threshold.theta,
        report.total_ms / report.scores.len().max(1) as f64,
        report.noise_bits[3]
    );
    Ok(json)
}

/// Rebuilds an inference report from its JSON form.
fn report_from_json(cfg: &RunConfig, j: &ReportJson) -> AppResult<InferenceReport> {
    let mut threshold = adaptive_threshold(&j.scores, &cfg.threshold_params())?;
    threshold.theta = j.theta;
    Ok(InferenceReport {
        scores: j.scores.clone(),
        labels: j.labels.clone(),
        threshold,
        stage_ms: j.stage_ms.to_array(),
        noise_bits: j.noise_bits.to_array(),
        total_ms: j.total_ms,
    })
}

#[derive(Debug, Serialize)]
pub struct EvalSummary {
    pub auc: f64,
    /// Encrypted vs exact plaintext labels (hybrid model).
    pub agreement_exact: f64,
    /// Encrypted vs polynomial-substituted plaintext labels.
    pub agreement_approx: Option<f64>,
    pub max_score_gap_approx: Option<f64>,
}

pub fn eval(cfg: &RunConfig) -> AppResult<EvalSummary> {
    let model = load_model(cfg)?;
    let train_set = load_split(cfg, "train")?;
    let test = load_split(cfg, "test")?;
    let enc_json: ReportJson = load_json(&cfg.report_path(false), "run `hesvm infer` first")?;
    if enc_json.scores.len() != test.len() {
        return Err(AppError::Mismatch(format!(
            "report.json has {} scores, test split {} rows",
            enc_json.scores.len(),
            test.len()
        )));
    }
    let ctx = context(cfg)?;
    let keys_dir = cfg.keys_dir();
    let pk = artifacts::read_public(&keys_dir, &ctx)?;
    let (rlk, rot) = artifacts::read_eval_keys(&keys_dir, &ctx)?;
    let sk = artifacts::read_secret(&keys_dir, &ctx)?;
    let enc = Encrypted {
        ctx: &ctx,
        keys: ServerKeys { public: &pk, relin: &rlk, rotation: &rot },
        secret: &sk,
        options: cfg.ckks.pipeline_options(),
    };
    let pp = report_from_json(cfg, &enc_json)?;
    let cmp = workflow::compare_models(cfg, &train_set, &test, &model, &enc, Some(pp))?;

    let out = &cfg.run.out;
    report::write_report_csv(&out.join("report.csv"), &cmp.rows)?;
    let md = report::markdown_table(&cmp.rows);
    std::fs::write(out.join("report.md"), &md).map_err(AppError::io("report.md"))?;
    let truth = to_binary(test.labels());
    let curve = roc(&cmp.pp_fintech.scores, &truth)?;
    report::write_roc(&out.join("roc.csv"), &curve)?;
    report::write_stages(&out.join("stages.csv"), &cmp.pp_fintech.stage_ms, &cmp.pp_fintech.noise_bits)?;

    let approx = plaintext_report(cfg, &model, &test)?;
    let summary = EvalSummary {
        auc: curve.auc,
        agreement_exact: cmp.agreement,
        agreement_approx: approx.approx_labels.as_ref().map(|l| workflow::agreement(&cmp.pp_fintech.labels, l)),
        max_score_gap_approx: approx
            .approx_scores
            .as_ref()
            .map(|s| s.iter().zip(&cmp.pp_fintech.scores).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)),
    };
    save_json(&out.join("eval.json"), &summary)?;
    print!("{md}");
    log::info!("AUC {:.4}; encrypted/plaintext label agreement {:.2}%", summary.auc, 100.0 * summary.agreement_exact);
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct BenchSummary {
    pub batch_sizes: Vec<usize>,
    pub total_ms: Vec<f64>,
    pub slope_ms_per_sample: f64,
    pub r_squared: f64,
    pub per_sample_cv: f64,
    pub stage_ms: report::StageMap,
    pub noise_bits: report::StageMap,
}

pub fn bench(cfg: &RunConfig) -> AppResult<BenchSummary> {
    let model = load_model(cfg)?;
    let test = load_split(cfg, "test")?;
    let ctx = context(cfg)?;
    let keys_dir = cfg.keys_dir();
    let pk = artifacts::read_public(&keys_dir, &ctx)?;
    let (rlk, rot) = artifacts::read_eval_keys(&keys_dir, &ctx)?;
    let sk = artifacts::read_secret(&keys_dir, &ctx)?;
    let enc = Encrypted {
        ctx: &ctx,
        keys: ServerKeys { public: &pk, relin: &rlk, rotation: &rot },
        secret: &sk,
        options: cfg.ckks.pipeline_options(),
    };
    let clock = WallClock::new();
    let r = workflow::bench(
        &enc,
        &model,
        test.features(),
        &cfg.threshold_params(),
        cfg.threshold.rule,
        &workflow::BATCH_SIZES,
        workflow::REPEATS,
        cfg.run.seed,
        cfg.run.workers,
    )?;
    let out = &cfg.run.out;
    mkdir(out)?;
    report::write_scaling(&out.join("scaling.csv"), &r.points)?;
    report::write_stages(&out.join("stages.csv"), &r.stage_ms, &r.noise_bits)?;
    let summary = BenchSummary {
        batch_sizes: r.points.iter().map(|p| p.0).collect(),
        total_ms: r.points.iter().map(|p| p.1).collect(),
        slope_ms_per_sample: r.fit.slope,
        r_squared: r.fit.r_squared,
        per_sample_cv: r.per_sample_cv,
        stage_ms: r.stage_ms.into(),
        noise_bits: r.noise_bits.into(),
    };
    save_json(&out.join("bench.json"), &summary)?;
    log::info!(
        "bench: {:.2} ms/sample, R^2 {:.4}, per-sample CV {:.3}, {:.1} s",
        r.fit.slope,
        r.fit.r_squared,
        r.per_sample_cv,
        clock.now_ms() / 1e3
    );
    Ok(summary)
}
