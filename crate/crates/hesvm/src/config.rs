//! Run configuration (TOML). Unknown keys and out-of-range values are
//! rejected before any work starts; range errors name the file line.

use std::path::{Path, PathBuf};

use hesvm_core::ckks::{CkksParams, DEFAULT_SECRET_WEIGHT, DESK_SECRET_WEIGHT};
use hesvm_core::inference::{PipelineOptions, ThresholdParams};
use hesvm_core::ring::{RingParams, DEFAULT_STDDEV};
use hesvm_core::svm::{Dataset, KernelConfig, TrainOptions};
use serde::{Deserialize, Serialize};

use crate::data::LabelMapping;
use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Raw CSV; relative paths resolve against the config file.
    pub path: PathBuf,
    pub label: String,
    #[serde(default)]
    pub mapping: LabelMapping,
    #[serde(default = "default_split_seed")]
    pub split_seed: u64,
    #[serde(default = "default_test_ratio")]
    pub test_ratio: f64,
    #[serde(default = "default_selection")]
    pub selection_threshold: f64,
}

fn default_split_seed() -> u64 {
    42
}
fn default_test_ratio() -> f64 {
    0.2
}
fn default_selection() -> f64 {
    hesvm_core::svm::DEFAULT_SELECTION_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub c: f64,
    pub max_epochs: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { c: 1.0, max_epochs: 500, tol: 1e-3, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub lambda1: f64,
    pub lambda2: f64,
    pub degree: u32,
    pub coef: f64,
    /// `None` derives `1 / (n_features * variance)` from the training split.
    pub gamma: Option<f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        let k = KernelConfig::default();
        Self { lambda1: k.lambda1, lambda2: k.lambda2, degree: k.degree, coef: k.coef, gamma: None }
    }
}

/// Decision rule after decryption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdRule {
    /// `theta = lambda1 * mu + lambda2 / sigma` over the batch.
    #[default]
    Adaptive,
    /// `theta = 0`.
    Sign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSection {
    pub lambda1: f64,
    pub lambda2: f64,
    pub sigma_floor: f64,
    pub rule: ThresholdRule,
}

impl Default for ThresholdSection {
    fn default() -> Self {
        let t = ThresholdParams::default();
        Self { lambda1: t.lambda1, lambda2: t.lambda2, sigma_floor: t.sigma_floor, rule: ThresholdRule::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxSection {
    pub degree: usize,
    /// Overrides the calibrated interval.
    pub interval: Option<[f64; 2]>,
}

impl Default for ApproxSection {
    fn default() -> Self {
        Self { degree: 2, interval: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CkksSection {
    pub ring_dim: usize,
    /// Base prime first, then one prime per level.
    pub data_bits: Vec<u32>,
    pub special_bits: Vec<u32>,
    pub delta: f64,
    pub secret_weight: usize,
    pub error_stddev: f64,
    /// Keyed in addition to the steps the packing layout needs.
    pub rotation_steps: Vec<i64>,
    pub replicated: bool,
    pub encrypt_coeffs: bool,
}

impl Default for CkksSection {
    fn default() -> Self {
        Self {
            ring_dim: 8192,
            data_bits: vec![60, 40, 40, 40],
            special_bits: vec![61, 61],
            delta: (1u64 << 20) as f64,
            secret_weight: DESK_SECRET_WEIGHT,
            error_stddev: DEFAULT_STDDEV,
            rotation_steps: Vec::new(),
            replicated: true,
            encrypt_coeffs: false,
        }
    }
}

impl CkksSection {
    pub fn paper() -> Self {
        Self {
            ring_dim: 32768,
            data_bits: vec![60, 30, 30, 30],
            secret_weight: DEFAULT_SECRET_WEIGHT,
            ..Self::default()
        }
    }

    pub fn params(&self) -> AppResult<CkksParams> {
        let ring = RingParams::generate(self.ring_dim, &self.data_bits, &self.special_bits)?;
        let label = if self.ring_dim >= 32768 { "research-n32768" } else { "research-desk" };
        Ok(CkksParams::with_options(ring, self.delta, self.secret_weight, self.error_stddev, label)?)
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions { replicated: self.replicated, encrypt_coeffs: self.encrypt_coeffs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub out: PathBuf,
    pub seed: u64,
    pub workers: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { out: PathBuf::from("out"), seed: 1, workers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub rows: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self { rows: 1000, noise: 0.05, seed: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub threshold: ThresholdSection,
    #[serde(default)]
    pub approx: ApproxSection,
    #[serde(default)]
    pub ckks: CkksSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub synth: SynthSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub paper_params: bool,
    pub encrypt_coeffs: bool,
}

/// 1-based line of `key` inside `[section]`, if written in the file.
fn locate(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in src.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            current = t.trim_matches(|c| c == '[' || c == ']').trim().to_owned();
            continue;
        }
        if current == section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

struct Checker<'a> {
    src: &'a str,
    origin: &'a str,
    errors: Vec<String>,
}

impl Checker<'_> {
    fn check(&mut self, ok: bool, section: &str, key: &str, msg: impl FnOnce() -> String) {
        if ok {
            return;
        }
        let at = match locate(self.src, section, key) {
            Some(line) => format!("{}:{line}", self.origin),
            None => format!("{} (default)", self.origin),
        };
        self.errors.push(format!("{at}: [{section}] {key}: {}", msg()));
    }
}

impl RunConfig {
    /// Parses and validates; relative paths resolve against `base`.
    pub fn parse(src: &str, origin: &str, base: &Path) -> AppResult<Self> {
        let mut cfg: RunConfig = toml::from_str(src).map_err(|e| AppError::Config(format!("{origin}: {e}")))?;
        for p in [&mut cfg.data.path, &mut cfg.run.out] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate(src, origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&src, &path.display().to_string(), &base)
    }

    pub fn apply(&mut self, o: &Overrides) -> AppResult<()> {
        if let Some(out) = &o.out {
            self.run.out = out.clone();
        }
        if let Some(seed) = o.seed {
            self.run.seed = seed;
        }
        if let Some(w) = o.workers {
            if !(1..=256).contains(&w) {
                return Err(AppError::Config(format!("--workers {w} outside 1..=256")));
            }
            self.run.workers = w;
        }
        if o.paper_params {
            let keep = (self.ckks.rotation_steps.clone(), self.ckks.replicated, self.ckks.encrypt_coeffs);
            self.ckks = CkksSection::paper();
            (self.ckks.rotation_steps, self.ckks.replicated, self.ckks.encrypt_coeffs) = keep;
        }
        if o.encrypt_coeffs {
            self.ckks.encrypt_coeffs = true;
        }
        Ok(())
    }

    fn validate(&self, src: &str, origin: &str) -> AppResult<()> {
        let mut c = Checker { src, origin, errors: Vec::new() };
        let d = &self.data;
        c.check(!d.label.is_empty(), "data", "label", || "must not be empty".into());
        c.check(d.test_ratio > 0.0 && d.test_ratio < 1.0, "data", "test_ratio", || {
            format!("{} outside (0, 1)", d.test_ratio)
        });
        c.check((0.0..=1.0).contains(&d.selection_threshold), "data", "selection_threshold", || {
            format!("{} outside [0, 1]", d.selection_threshold)
        });
        let overlap = d.mapping.positive.iter().any(|p| d.mapping.negative.contains(p));
        c.check(
            !d.mapping.positive.is_empty() && !d.mapping.negative.is_empty() && !overlap,
            "data.mapping",
            "positive",
            || "positive and negative label sets must be non-empty and disjoint".into(),
        );

        let t = &self.train;
        c.check(t.c > 0.0 && t.c.is_finite(), "train", "c", || format!("{} must be positive", t.c));
        c.check(t.max_epochs >= 1, "train", "max_epochs", || "must be at least 1".into());
        c.check(t.tol > 0.0 && t.tol < 1.0, "train", "tol", || format!("{} outside (0, 1)", t.tol));

        let k = &self.kernel;
        c.check(k.lambda1 >= 0.0 && k.lambda1.is_finite(), "kernel", "lambda1", || {
            format!("{} must be >= 0", k.lambda1)
        });
        c.check(k.lambda2 >= 0.0 && k.lambda2.is_finite(), "kernel", "lambda2", || {
            format!("{} must be >= 0", k.lambda2)
        });
        c.check(k.lambda1 + k.lambda2 > 0.0, "kernel", "lambda1", || "lambda1 + lambda2 must be positive".into());
        c.check((1..=8).contains(&k.degree), "kernel", "degree", || format!("{} outside 1..=8", k.degree));
        c.check(k.coef.is_finite(), "kernel", "coef", || "must be finite".into());
        if let Some(g) = k.gamma {
            c.check(g > 0.0 && g.is_finite(), "kernel", "gamma", || format!("{g} must be positive"));
        }

        let th = &self.threshold;
        c.check(th.sigma_floor > 0.0 && th.sigma_floor.is_finite(), "threshold", "sigma_floor", || {
            format!("{} must be positive", th.sigma_floor)
        });
        c.check(th.lambda1.is_finite(), "threshold", "lambda1", || "must be finite".into());
        c.check(th.lambda2.is_finite(), "threshold", "lambda2", || "must be finite".into());

        let a = &self.approx;
        c.check((1..=hesvm_core::approx::MAX_DEGREE).contains(&a.degree), "approx", "degree", || {
            format!("{} outside 1..={}", a.degree, hesvm_core::approx::MAX_DEGREE)
        });
        if let Some([lo, hi]) = a.interval {
            c.check(lo >= 0.0 && hi > lo && hi.is_finite(), "approx", "interval", || {
                format!("[{lo}, {hi}] is not a valid interval")
            });
        }

        let ck = &self.ckks;
        c.check(ck.ring_dim.is_power_of_two() && (16..=65536).contains(&ck.ring_dim), "ckks", "ring_dim", || {
            format!("{} must be a power of two in 16..=65536", ck.ring_dim)
        });
        c.check(
            ck.data_bits.len() >= 2 && ck.data_bits.iter().all(|b| (20..=60).contains(b)),
            "ckks",
            "data_bits",
            || format!("{:?}: need at least 2 primes of 20..=60 bits", ck.data_bits),
        );
        c.check(
            (1..=2).contains(&ck.special_bits.len()) && ck.special_bits.iter().all(|b| (20..=61).contains(b)),
            "ckks",
            "special_bits",
            || format!("{:?}: need 1 or 2 primes of 20..=61 bits", ck.special_bits),
        );
        let min_bits = ck.data_bits.iter().copied().min().unwrap_or(0) as f64;
        c.check(ck.delta >= 1024.0 && ck.delta.is_finite() && ck.delta.log2() < min_bits, "ckks", "delta", || {
            format!("{} must be >= 2^10 and below the smallest data prime", ck.delta)
        });
        c.check(ck.secret_weight >= 1 && ck.secret_weight <= ck.ring_dim, "ckks", "secret_weight", || {
            format!("{} outside 1..=ring_dim", ck.secret_weight)
        });
        c.check(ck.error_stddev > 0.0 && ck.error_stddev <= 64.0, "ckks", "error_stddev", || {
            format!("{} outside (0, 64]", ck.error_stddev)
        });
        let half = (ck.ring_dim / 2) as i64;
        c.check(ck.rotation_steps.iter().all(|s| *s != 0 && s.abs() < half), "ckks", "rotation_steps", || {
            "steps must be nonzero and smaller than the slot count".into()
        });

        c.check((1..=256).contains(&self.run.workers), "run", "workers", || {
            format!("{} outside 1..=256", self.run.workers)
        });
        let s = &self.synth;
        c.check(s.rows >= 10 && s.rows <= 1_000_000, "synth", "rows", || format!("{} outside 10..=1000000", s.rows));
        c.check((0.0..=0.5).contains(&s.noise), "synth", "noise", || format!("{} outside [0, 0.5]", s.noise));

        if c.errors.is_empty() {
            Ok(())
        } else {
            Err(AppError::Config(c.errors.join("\n")))
        }
    }

    /// Raw data must exist for every command except `gen-synth`.
    pub fn require_data(&self) -> AppResult<()> {
        if self.data.path.exists() {
            Ok(())
        } else {
            Err(AppError::Config(format!("[data] path {} does not exist", self.data.path.display())))
        }
    }

    pub fn kernel_for(&self, train: &Dataset) -> KernelConfig {
        let k = &self.kernel;
        let gamma = k.gamma.unwrap_or_else(|| KernelConfig::for_data(train).gamma);
        KernelConfig { lambda1: k.lambda1, lambda2: k.lambda2, degree: k.degree, coef: k.coef, gamma }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions { c: self.train.c, max_epochs: self.train.max_epochs, tol: self.train.tol, record_scaling: false }
    }

    pub fn threshold_params(&self) -> ThresholdParams {
        let t = &self.threshold;
        ThresholdParams { lambda1: t.lambda1, lambda2: t.lambda2, sigma_floor: t.sigma_floor }
    }

    // Artifact locations under the output directory.
    pub fn prepared_dir(&self) -> PathBuf {
        self.run.out.join("prepared")
    }
    pub fn model_path(&self) -> PathBuf {
        self.run.out.join("model.json")
    }
    pub fn keys_dir(&self) -> PathBuf {
        self.run.out.join("keys")
    }
    pub fn ct_dir(&self, split: &str) -> PathBuf {
        self.run.out.join("ct").join(split)
    }
    pub fn scores_dir(&self) -> PathBuf {
        self.run.out.join("scores")
    }
    pub fn report_path(&self, plaintext: bool) -> PathBuf {
        self.run.out.join(if plaintext { "report_plaintext.json" } else { "report.json" })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[data]\npath = \"x.csv\"\nlabel = \"class\"\n";

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::parse(MINIMAL, "t.toml", Path::new("/base")).unwrap();
        assert_eq!(cfg.data.path, PathBuf::from("/base/x.csv"));
        assert_eq!(cfg.data.test_ratio, 0.2);
        assert_eq!(cfg.ckks.ring_dim, 8192);
        assert_eq!(cfg.ckks.params().unwrap().digest(), CkksParams::desk().digest());
        assert_eq!(cfg.kernel.lambda1, 0.7);
        assert_eq!(cfg.threshold.lambda2, 0.1);
    }

    #[test]
    fn unknown_keys_rejected() {
        let src = format!("{MINIMAL}[ckks]\nring_dimension = 8192\n");
        let e = RunConfig::parse(&src, "t.toml", Path::new("")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("ring_dimension"), "{e}");
    }

    #[test]
    fn range_errors_name_the_line() {
        let src = format!("{MINIMAL}[ckks]\nring_dim = 1000\n\n[train]\nc = -1.0\n");
        let e = RunConfig::parse(&src, "t.toml", Path::new("")).unwrap_err().to_string();
        assert!(e.contains("t.toml:5: [ckks] ring_dim"), "{e}");
        assert!(e.contains("t.toml:8: [train] c"), "{e}");
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = RunConfig::parse(MINIMAL, "t.toml", Path::new("")).unwrap();
        cfg.apply(&Overrides { seed: Some(9), workers: Some(3), paper_params: true, ..Default::default() }).unwrap();
        assert_eq!((cfg.run.seed, cfg.run.workers, cfg.ckks.ring_dim), (9, 3, 32768));
        assert_eq!(cfg.ckks.secret_weight, DEFAULT_SECRET_WEIGHT);
        assert!(cfg.apply(&Overrides { workers: Some(0), ..Default::default() }).is_err());
    }
}
