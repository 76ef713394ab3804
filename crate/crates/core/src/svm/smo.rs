//! Soft-margin dual solver: pairwise coordinate ascent with conservative
//! step scaling.
//!
//! Each working pair gets the clipped analytic step. The step is then tried
//! at `beta = 1, 0.1, 0.01`; the first candidate that keeps every multiplier
//! inside `[0, C]` and does not lower the dual objective is applied (to the
//! multipliers and to the bias). If none qualifies the pair is skipped.

use alloc::format;
use alloc::vec::Vec;
use rand_core::RngCore;

use super::{kernel_unchecked, Dataset, KernelConfig, Preprocessing, SvmModel};
use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;

pub const BETAS: [f64; 3] = [1.0, 0.1, 0.01];
/// Multipliers at or below this are not support vectors.
pub const SV_THRESHOLD: f64 = 1e-8;
const EPS: f64 = 1e-12;
const BOX_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub c: f64,
    pub max_epochs: usize,
    /// KKT tolerance.
    pub tol: f64,
    /// Keep every scaling decision in [`TrainReport::attempts`].
    pub record_scaling: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { c: 1.0, max_epochs: 500, tol: 1e-3, record_scaling: false }
    }
}

/// One tried value of `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub beta: f64,
    /// Change in the dual objective.
    pub gain: f64,
    pub in_box: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingAttempt {
    pub i: usize,
    pub j: usize,
    pub candidates: Vec<Candidate>,
    pub applied: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: SvmModel,
    /// Full multiplier vector over the training set.
    pub alpha: Vec<f64>,
    pub converged: bool,
    pub kkt_violation: f64,
    pub epochs: usize,
    pub skipped_pairs: usize,
    pub attempts: Vec<ScalingAttempt>,
}

/// Tries `BETAS` in order and stops at the first candidate that stays in
/// the box without lowering the objective.
fn choose_beta(mut eval: impl FnMut(f64) -> Candidate) -> (Vec<Candidate>, Option<f64>) {
    let mut candidates = Vec::with_capacity(BETAS.len());
    for &beta in &BETAS {
        let c = eval(beta);
        candidates.push(c);
        if c.in_box && c.gain >= 0.0 {
            return (candidates, Some(beta));
        }
    }
    (candidates, None)
}

struct Solver<'a> {
    k: Vec<f64>,
    m: usize,
    y: Vec<f64>,
    alpha: Vec<f64>,
    /// `g_i = sum_j alpha_j y_j K_ij`
    g: Vec<f64>,
    b: f64,
    c: f64,
    opts: &'a TrainOptions,
    attempts: Vec<ScalingAttempt>,
    skipped: usize,
}

impl Solver<'_> {
    fn kij(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.m + j]
    }

    fn err(&self, i: usize) -> f64 {
        self.g[i] + self.b - self.y[i]
    }

    /// Objective change for the move `(di, dj)` on pair `(i, j)`.
    fn gain(&self, i: usize, j: usize, di: f64, dj: f64) -> f64 {
        let (yi, yj) = (self.y[i], self.y[j]);
        let lin = di + dj - yi * di * self.g[i] - yj * dj * self.g[j];
        let quad = di * di * self.kij(i, i) + dj * dj * self.kij(j, j) + 2.0 * di * dj * yi * yj * self.kij(i, j);
        lin - 0.5 * quad
    }

    /// Box test with slack for rounding in `alpha + step`.
    fn in_box(&self, v: f64) -> bool {
        let slack = BOX_SLACK * self.c;
        v >= -slack && v <= self.c + slack
    }

    fn take_step(&mut self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let (yi, yj) = (self.y[i], self.y[j]);
        let (ai, aj) = (self.alpha[i], self.alpha[j]);
        let (lo, hi) = if yi == yj {
            ((ai + aj - self.c).max(0.0), (ai + aj).min(self.c))
        } else {
            ((aj - ai).max(0.0), (self.c + aj - ai).min(self.c))
        };
        if hi - lo < EPS {
            return false;
        }
        let (ei, ej) = (self.err(i), self.err(j));
        let eta = self.kij(i, i) + self.kij(j, j) - 2.0 * self.kij(i, j);
        let s = yi * yj;
        let new_aj = if eta > EPS {
            (aj + yj * (ei - ej) / eta).clamp(lo, hi)
        } else {
            let at_lo = self.gain(i, j, -s * (lo - aj), lo - aj);
            let at_hi = self.gain(i, j, -s * (hi - aj), hi - aj);
            if at_lo > at_hi + EPS {
                lo
            } else if at_hi > at_lo + EPS {
                hi
            } else {
                return false;
            }
        };
        let dj = new_aj - aj;
        if math::abs(dj) < EPS * (new_aj + aj + EPS) {
            return false;
        }
        let di = -s * dj;

        // Bias target for the full step.
        let kii = self.kij(i, i);
        let kjj = self.kij(j, j);
        let kij = self.kij(i, j);
        let b1 = self.b - ei - yi * di * kii - yj * dj * kij;
        let b2 = self.b - ej - yi * di * kij - yj * dj * kjj;
        let (ni, nj) = (ai + di, new_aj);
        let b_target = if ni > 0.0 && ni < self.c {
            b1
        } else if nj > 0.0 && nj < self.c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = b_target - self.b;

        let (candidates, applied) = choose_beta(|beta| {
            let (si, sj) = (beta * di, beta * dj);
            Candidate { beta, gain: self.gain(i, j, si, sj), in_box: self.in_box(ai + si) && self.in_box(aj + sj) }
        });
        if self.opts.record_scaling {
            self.attempts.push(ScalingAttempt { i, j, candidates, applied });
        }
        let Some(beta) = applied else {
            self.skipped += 1;
            return false;
        };
        let (si, sj) = (beta * di, beta * dj);
        self.alpha[i] = (ai + si).clamp(0.0, self.c);
        self.alpha[j] = (aj + sj).clamp(0.0, self.c);
        let (ci, cj) = (yi * (self.alpha[i] - ai), yj * (self.alpha[j] - aj));
        let m = self.m;
        for k in 0..m {
            self.g[k] += ci * self.k[i * m + k] + cj * self.k[j * m + k];
        }
        self.b += beta * db;
        true
    }

    fn violation(&self, i: usize, b: f64) -> f64 {
        let yf = self.y[i] * (self.g[i] + b);
        let a = self.alpha[i];
        if a <= 0.0 {
            (1.0 - yf).max(0.0)
        } else if a >= self.c {
            (yf - 1.0).max(0.0)
        } else {
            math::abs(1.0 - yf)
        }
    }

    /// Bias from free multipliers, else the midpoint of the feasible range.
    fn fitted_bias(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for i in 0..self.m {
            let r = self.y[i] - self.g[i];
            let a = self.alpha[i];
            if a > SV_THRESHOLD && a < self.c - SV_THRESHOLD {
                sum += r;
                count += 1;
            } else if (a <= SV_THRESHOLD) == (self.y[i] > 0.0) {
                // y f >= 1 required: lower bound on b for y = +1, upper for y = -1.
                lo = lo.max(r);
            } else {
                hi = hi.min(r);
            }
        }
        if count > 0 {
            sum / count as f64
        } else if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if lo.is_finite() {
            lo
        } else if hi.is_finite() {
            hi
        } else {
            self.b
        }
    }

    fn max_violation(&self, b: f64) -> f64 {
        (0..self.m).map(|i| self.violation(i, b)).fold(0.0, f64::max)
    }

    /// Second index maximizing `|E_i - E_j|`.
    fn second_choice(&self, i: usize) -> Option<usize> {
        let ei = self.err(i);
        (0..self.m)
            .filter(|&j| j != i)
            .max_by(|&a, &b| math::abs(ei - self.err(a)).total_cmp(&math::abs(ei - self.err(b))))
    }

    fn examine(&mut self, i: usize, start: usize) -> bool {
        let r = self.y[i] * self.err(i);
        let a = self.alpha[i];
        let tol = self.opts.tol;
        if !((r < -tol && a < self.c) || (r > tol && a > 0.0)) {
            return false;
        }
        if let Some(j) = self.second_choice(i) {
            if self.take_step(i, j) {
                return true;
            }
        }
        // Free multipliers first, then everything, from a shuffled start.
        for pass in 0..2 {
            for off in 0..self.m {
                let j = (start + off) % self.m;
                let free = self.alpha[j] > 0.0 && self.alpha[j] < self.c;
                if (pass == 0) == free && self.take_step(i, j) {
                    return true;
                }
            }
        }
        false
    }
}

fn shuffle(order: &mut [usize], rng: &mut impl RngCore) {
    for i in (1..order.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
}

/// Trains on a prepared (standardized, feature-selected) dataset.
pub fn train(ds: &Dataset, cfg: &KernelConfig, opts: &TrainOptions, rng: &mut impl RngCore) -> Result<TrainReport> {
    cfg.validate()?;
    if !(opts.c > 0.0) || !opts.c.is_finite() {
        return Err(Error::InvalidParams(format!("C = {} must be positive", opts.c)));
    }
    if !ds.has_both_classes() {
        return Err(Error::SingleClass);
    }
    let m = ds.len();
    let x = ds.features();
    let mut k = alloc::vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let v = kernel_unchecked(x.row(i), x.row(j), cfg);
            k[i * m + j] = v;
            k[j * m + i] = v;
        }
    }
    let mut s = Solver {
        k,
        m,
        y: ds.labels().iter().map(|&l| l as f64).collect(),
        alpha: alloc::vec![0.0; m],
        g: alloc::vec![0.0; m],
        b: 0.0,
        c: opts.c,
        opts,
        attempts: Vec::new(),
        skipped: 0,
    };
    let mut order: Vec<usize> = (0..m).collect();
    let mut epochs = 0;
    let mut violation = f64::INFINITY;
    while epochs < opts.max_epochs {
        epochs += 1;
        shuffle(&mut order, rng);
        let mut changed = 0;
        for idx in 0..m {
            let start = (rng.next_u64() % m as u64) as usize;
            if s.examine(order[idx], start) {
                changed += 1;
            }
        }
        violation = s.max_violation(s.fitted_bias());
        if violation < opts.tol || changed == 0 {
            break;
        }
    }
    let bias = s.fitted_bias();
    violation = violation.min(s.max_violation(bias));
    let converged = violation < opts.tol;
    if !converged {
        log::warn!("solver stopped after {epochs} epochs with KKT violation {violation:.3e}");
    }

    // Drop near-zero multipliers and push their share of sum(alpha y) onto a
    // free support vector so the equality constraint survives the cut.
    let mut alpha = s.alpha.clone();
    let mut residual = 0.0;
    for (a, y) in alpha.iter_mut().zip(&s.y) {
        if *a <= SV_THRESHOLD {
            residual += *a * y;
            *a = 0.0;
        }
    }
    if residual != 0.0 {
        let fix = (0..m).find(|&i| {
            let na = alpha[i] + residual * s.y[i];
            alpha[i] > SV_THRESHOLD && na > SV_THRESHOLD && na <= opts.c
        });
        if let Some(i) = fix {
            alpha[i] += residual * s.y[i];
        }
    }
    let sv_idx: Vec<usize> = (0..m).filter(|&i| alpha[i] > SV_THRESHOLD).collect();
    if sv_idx.is_empty() {
        return Err(Error::InvalidInput("training produced no support vectors".into()));
    }
    let model = SvmModel {
        support_vectors: x.select_rows(&sv_idx),
        dual_coeffs: sv_idx.iter().map(|&i| alpha[i] * s.y[i]).collect(),
        bias,
        c: opts.c,
        kernel: *cfg,
        preprocessing: Preprocessing::identity(ds.n_features()),
        rbf_approx: None,
    };
    Ok(TrainReport {
        model,
        alpha,
        converged,
        kkt_violation: violation,
        epochs,
        skipped_pairs: s.skipped,
        attempts: s.attempts,
    })
}

/// Gram matrix (exact kernel) of a prepared dataset; used by tests and
/// diagnostics.
pub fn gram(x: &Matrix, cfg: &KernelConfig) -> Vec<f64> {
    let m = x.rows();
    let mut k = alloc::vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            k[i * m + j] = kernel_unchecked(x.row(i), x.row(j), cfg);
        }
    }
    k
}
