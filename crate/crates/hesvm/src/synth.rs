//! Seeded two-class generator with mixed column types and a curved
//! decision boundary: a degree-2 polynomial part plus an RBF bump.

use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{AppError, AppResult};

pub const LABEL: &str = "class";
pub const HEADER: [&str; 9] = ["x1", "x2", "x3", "x4", "x5", "x6", "segment", "channel", LABEL];
const SEGMENTS: [&str; 3] = ["east", "north", "south"];
const CHANNELS: [&str; 2] = ["branch", "web"];
/// Share of numeric and categorical cells left empty.
const MISSING_RATE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub rows: usize,
    pub noise: f64,
    pub seed: u64,
}

/// Ground-truth score before thresholding.
fn truth(x: &[f64; 6], segment: usize, channel: usize) -> f64 {
    let poly = 0.9 * x[0] + 0.6 * x[1] + 0.9 * x[0] * x[1] - (x[2] - 0.7) * (x[2] - 0.7);
    let d2 = (x[3] - 0.5) * (x[3] - 0.5) + (x[4] + 0.5) * (x[4] + 0.5);
    let bump = 2.0 * (-0.5 * d2).exp();
    let seg = [0.4, 0.0, -0.4][segment];
    let ch = [0.0, 0.3][channel];
    poly + bump + seg + ch
}

pub struct Synthetic {
    pub rows: Vec<Vec<String>>,
    pub positive_share: f64,
}

pub fn generate(opts: &SynthOptions) -> Synthetic {
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut raw = Vec::with_capacity(opts.rows);
    let mut scores = Vec::with_capacity(opts.rows);
    for _ in 0..opts.rows {
        let x: [f64; 6] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal));
        let segment = rng.random_range(0..SEGMENTS.len());
        let channel = rng.random_range(0..CHANNELS.len());
        scores.push(truth(&x, segment, channel));
        raw.push((x, segment, channel));
    }
    // Median cut keeps the classes balanced before label noise.
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted[sorted.len() / 2];
    let mut positives = 0usize;
    let mut rows = Vec::with_capacity(opts.rows);
    for ((x, segment, channel), s) in raw.into_iter().zip(scores) {
        let mut y = s >= cut;
        if rng.random::<f64>() < opts.noise {
            y = !y;
        }
        positives += usize::from(y);
        let mut row: Vec<String> = x
            .iter()
            .map(|v| if rng.random::<f64>() < MISSING_RATE { String::new() } else { format!("{v:.4}") })
            .collect();
        for cat in [SEGMENTS[segment], CHANNELS[channel]] {
            row.push(if rng.random::<f64>() < MISSING_RATE { String::new() } else { cat.to_owned() });
        }
        row.push(if y { "+" } else { "-" }.to_owned());
        rows.push(row);
    }
    Synthetic { rows, positive_share: positives as f64 / opts.rows.max(1) as f64 }
}

pub fn write_csv(path: &Path, synth: &Synthetic) -> AppResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(AppError::io(dir.display().to_string()))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| AppError::Other(format!("{}: {e}", path.display())))?;
    w.write_record(HEADER)?;
    for r in &synth.rows {
        w.write_record(r)?;
    }
    w.flush().map_err(AppError::io(path.display().to_string()))
}
