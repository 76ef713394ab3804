//! Multi-step workflows shared by the CLI and the acceptance suite:
//! preparation, training with an attached RBF polynomial, the model
//! comparison and the batch-size benchmark.

use hesvm_core::approx::PolyApprox;
use hesvm_core::ckks::{CkksContext, SecretKey};
use hesvm_core::inference::{InferenceReport, Pipeline, PipelineOptions, ServerKeys, ThresholdParams};
use hesvm_core::metrics::{coefficient_of_variation, confusion, fit_through_origin, median, metrics, OriginFit};
use hesvm_core::svm::{train, Dataset, KernelConfig, Preprocessing, SvmModel, TrainOptions};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::config::{ApproxSection, RunConfig, ThresholdRule};
use crate::data::{ingest_csv, split_indices, to_binary};
use crate::error::AppResult;
use crate::model_file::{PreprocessFile, ScalerJson, SelectionJson};
use crate::report::ModelRow;
use crate::runner::{self, run_encrypted, run_plaintext, WallClock};
use hesvm_core::inference::Clock;

pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub file: PreprocessFile,
}

/// Ingest, split, fit scaler and selection on the training rows, and
/// transform both sides.
pub fn prepare(cfg: &RunConfig) -> AppResult<Prepared> {
    let d = &cfg.data;
    let (raw, schema) = ingest_csv(&d.path, &d.label, &d.mapping)?;
    let (train_idx, test_idx) = split_indices(raw.len(), d.test_ratio, d.split_seed);
    let (train_raw, test_raw) = (raw.subset(&train_idx), raw.subset(&test_idx));
    let prep = Preprocessing::fit(&train_raw, d.selection_threshold)?;
    let train = prep.transform(&train_raw)?;
    let test = prep.transform(&test_raw)?;
    let file = PreprocessFile {
        categorical_vocab: schema,
        scaler: ScalerJson::from(&prep),
        selection: SelectionJson::from(&prep),
        feature_names: train.feature_names().to_vec(),
        split_seed: d.split_seed,
        test_ratio: d.test_ratio,
    };
    Ok(Prepared { train, test, file })
}

/// Fits the RBF polynomial on the calibrated interval (or the override)
/// when the kernel has an RBF part.
pub fn attach_approx(model: &mut SvmModel, calib: &Dataset, approx: &ApproxSection) -> AppResult<()> {
    if model.kernel.lambda2 == 0.0 {
        model.rbf_approx = None;
        return Ok(());
    }
    let (a, b) = match approx.interval {
        Some([a, b]) => (a, b),
        None => model.calibrate_interval(calib)?,
    };
    let p = PolyApprox::fit_exp(a, b, approx.degree)?;
    log::info!("rbf approximation: degree {} on [{a:.4}, {b:.4}], max error {:.4e}", p.degree(), p.max_err());
    model.rbf_approx = Some(p);
    Ok(())
}

pub struct Trained {
    pub model: SvmModel,
    pub converged: bool,
    pub kkt_violation: f64,
    pub epochs: usize,
}

/// Trains on prepared rows and attaches preprocessing and approximation.
pub fn fit_model(
    train_set: &Dataset,
    kernel: &KernelConfig,
    opts: &TrainOptions,
    prep: &Preprocessing,
    approx: &ApproxSection,
    seed: u64,
) -> AppResult<Trained> {
    let r = train(train_set, kernel, opts, &mut ChaCha20Rng::seed_from_u64(seed))?;
    let mut model = r.model;
    model.preprocessing = prep.clone();
    attach_approx(&mut model, train_set, approx)?;
    Ok(Trained { model, converged: r.converged, kkt_violation: r.kkt_violation, epochs: r.epochs })
}

/// Keys and parameters for encrypted runs.
pub struct Encrypted<'a> {
    pub ctx: &'a CkksContext,
    pub keys: ServerKeys<'a>,
    pub secret: &'a SecretKey,
    pub options: PipelineOptions,
}

/// Fraction of equal entries.
pub fn agreement(a: &[u8], b: &[u8]) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

pub fn row_for(name: &str, encrypted: bool, report: &InferenceReport, truth: &[u8]) -> AppResult<ModelRow> {
    let m = metrics(&confusion(&report.labels, truth)?)?;
    let n = report.scores.len().max(1) as f64;
    Ok(ModelRow { model: name.to_owned(), encrypted, metrics: m, time_ms: report.total_ms / n })
}

pub struct Comparison {
    pub rows: Vec<ModelRow>,
    pub linear: SvmModel,
    pub pt_fintech: InferenceReport,
    pub pp_fintech: InferenceReport,
    /// Encrypted vs exact plaintext labels, hybrid model.
    pub agreement: f64,
}

/// PT/PP rows for a linear model trained here and for `fintech`.
/// `pp_fintech` reuses an earlier encrypted run when given.
#[allow(clippy::too_many_arguments)]
pub fn compare_models(
    cfg: &RunConfig,
    train_set: &Dataset,
    test: &Dataset,
    fintech: &SvmModel,
    enc: &Encrypted<'_>,
    pp_fintech: Option<InferenceReport>,
) -> AppResult<Comparison> {
    let tp = cfg.threshold_params();
    let rule = cfg.threshold.rule;
    let truth = to_binary(test.labels());
    let rows_m = test.features();
    let linear = fit_model(
        train_set,
        &KernelConfig::linear(),
        &cfg.train_options(),
        &fintech.preprocessing,
        &cfg.approx,
        cfg.train.seed,
    )?
    .model;

    let pt_linear = run_plaintext(&linear, rows_m, false, &tp, rule)?;
    let pp_linear = encrypted_report(enc, &linear, rows_m, &tp, rule, cfg.run.seed, cfg.run.workers)?;
    let pt_fintech = run_plaintext(fintech, rows_m, false, &tp, rule)?;
    let pp_fintech = match pp_fintech {
        Some(r) => r,
        None => encrypted_report(enc, fintech, rows_m, &tp, rule, cfg.run.seed, cfg.run.workers)?,
    };
    let rows = vec![
        row_for("PT-Linear", false, &pt_linear, &truth)?,
        row_for("PP-Linear", true, &pp_linear, &truth)?,
        row_for("PT-FinTech", false, &pt_fintech, &truth)?,
        row_for("PP-FinTech", true, &pp_fintech, &truth)?,
    ];
    let agreement = agreement(&pp_fintech.labels, &pt_fintech.labels);
    Ok(Comparison { rows, linear, pt_fintech, pp_fintech, agreement })
}

pub fn encrypted_report(
    enc: &Encrypted<'_>,
    model: &SvmModel,
    rows: &hesvm_core::matrix::Matrix,
    tp: &ThresholdParams,
    rule: ThresholdRule,
    seed: u64,
    workers: usize,
) -> AppResult<InferenceReport> {
    let pipeline = Pipeline::new(enc.ctx, model, enc.options, enc.keys.public, &mut runner::setup_rng(seed))?;
    run_encrypted(enc.ctx, &pipeline, rows, &enc.keys, enc.secret, tp, rule, seed, workers)
}

pub const BATCH_SIZES: [usize; 4] = [10, 25, 50, 100];
pub const REPEATS: usize = 5;

pub struct BenchResult {
    /// `(batch size, median total ms)`.
    pub points: Vec<(usize, f64)>,
    /// From the last run at the largest batch size.
    pub stage_ms: [f64; 4],
    pub noise_bits: [f64; 4],
    pub fit: OriginFit,
    /// Coefficient of variation of per-sample latency across batch sizes.
    pub per_sample_cv: f64,
}

/// Median wall time of `repeats` runs per batch size after one warm-up.
/// Batches cycle through `rows` when it is shorter than the batch.
#[allow(clippy::too_many_arguments)]
pub fn bench(
    enc: &Encrypted<'_>,
    model: &SvmModel,
    rows: &hesvm_core::matrix::Matrix,
    tp: &ThresholdParams,
    rule: ThresholdRule,
    sizes: &[usize],
    repeats: usize,
    seed: u64,
    workers: usize,
) -> AppResult<BenchResult> {
    let pipeline = Pipeline::new(enc.ctx, model, enc.options, enc.keys.public, &mut runner::setup_rng(seed))?;
    let batch = |b: usize| {
        let idx: Vec<usize> = (0..b).map(|i| i % rows.rows()).collect();
        rows.select_rows(&idx)
    };
    let warm = batch(sizes.first().copied().unwrap_or(1).min(5));
    run_encrypted(enc.ctx, &pipeline, &warm, &enc.keys, enc.secret, tp, rule, seed, workers)?;

    let mut points = Vec::with_capacity(sizes.len());
    let mut last = None;
    for &b in sizes {
        let m = batch(b);
        let mut times = Vec::with_capacity(repeats);
        for rep in 0..repeats {
            let clock = WallClock::new();
            let r = run_encrypted(enc.ctx, &pipeline, &m, &enc.keys, enc.secret, tp, rule, seed ^ rep as u64, workers)?;
            times.push(clock.now_ms());
            last = Some(r);
        }
        let med = median(&times).unwrap_or(0.0);
        log::info!("batch {b}: median {med:.1} ms over {repeats} runs");
        points.push((b, med));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0 as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let fit = fit_through_origin(&x, &y)?;
    let per_sample: Vec<f64> = points.iter().map(|&(b, t)| t / b as f64).collect();
    let last = last.expect("at least one batch size");
    Ok(BenchResult {
        points,
        stage_ms: last.stage_ms,
        noise_bits: last.noise_bits,
        fit,
        per_sample_cv: coefficient_of_variation(&per_sample),
    })
}
