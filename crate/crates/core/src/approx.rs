//! Polynomial stand-ins for `exp(-t)` on a calibration interval.
//!
//! The fit interpolates at Chebyshev nodes (near-minimax for smooth targets)
//! and is then expanded into ascending monomial coefficients so both the
//! plaintext and the encrypted evaluators share one representation.

use alloc::format;
use alloc::vec::Vec;

use crate::ckks::{Ciphertext, CkksContext, RelinKey};
use crate::error::{Error, Result};
use crate::math;

pub const MAX_DEGREE: usize = 8;
/// Points in the dense grid used to record `max_err`.
pub const GRID_POINTS: usize = 10_000;
/// Lower floor for calibrated upper bounds.
pub const INTERVAL_FLOOR: f64 = 1e-6;
/// Safety factor applied to the largest observed `t`.
pub const INTERVAL_MARGIN: f64 = 1.05;

#[derive(Debug, Clone, PartialEq)]
pub struct PolyApprox {
    coeffs: Vec<f64>,
    interval: (f64, f64),
    max_err: f64,
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if !(a.is_finite() && b.is_finite()) || a < 0.0 || b <= a {
        return Err(Error::InvalidInput(format!("degenerate interval [{a}, {b}]")));
    }
    Ok(())
}

fn check_degree(degree: usize) -> Result<()> {
    if degree == 0 || degree > MAX_DEGREE {
        return Err(Error::InvalidInput(format!("degree {degree} outside 1..={MAX_DEGREE}")));
    }
    Ok(())
}

/// Ascending monomial coefficients of `sum a_j T_j(alpha t + beta)`.
fn chebyshev_to_monomial(cheb: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    let r = cheb.len();
    // T_j in powers of s.
    let mut t_prev = alloc::vec![0.0; r];
    let mut t_cur = alloc::vec![0.0; r];
    t_prev[0] = 1.0;
    let mut in_s = alloc::vec![0.0; r];
    in_s[0] += cheb[0];
    if r > 1 {
        t_cur[1] = 1.0;
        in_s[1] += cheb[1];
    }
    for &a_j in cheb.iter().skip(2) {
        let mut next = alloc::vec![0.0; r];
        for k in 0..r {
            let up = if k > 0 { 2.0 * t_cur[k - 1] } else { 0.0 };
            next[k] = up - t_prev[k];
        }
        for k in 0..r {
            in_s[k] += a_j * next[k];
        }
        t_prev = core::mem::replace(&mut t_cur, next);
    }
    // Substitute s = alpha t + beta.
    let mut out = alloc::vec![0.0; r];
    for (i, &c) in in_s.iter().enumerate() {
        // (alpha t + beta)^i = sum_k binom(i, k) alpha^k beta^(i-k) t^k
        let mut binom = 1.0;
        for k in 0..=i {
            out[k] += c * binom * math::powi(alpha, k as u32) * math::powi(beta, (i - k) as u32);
            binom = binom * (i - k) as f64 / (k + 1) as f64;
        }
    }
    out
}

fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

impl PolyApprox {
    /// Chebyshev interpolant of `f` on `[a, b]`.
    pub fn fit(f: impl Fn(f64) -> f64, a: f64, b: f64, degree: usize) -> Result<Self> {
        check_interval(a, b)?;
        check_degree(degree)?;
        let n = degree + 1;
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let nodes: Vec<f64> = (0..n).map(|k| math::cos(core::f64::consts::PI * (k as f64 + 0.5) / n as f64)).collect();
        let values: Vec<f64> = nodes.iter().map(|&s| f(mid + half * s)).collect();
        let mut cheb = alloc::vec![0.0; n];
        for (j, c) in cheb.iter_mut().enumerate() {
            let sum: f64 = nodes
                .iter()
                .zip(&values)
                .map(|(&s, &v)| v * math::cos(j as f64 * libm::acos(s.clamp(-1.0, 1.0))))
                .sum();
            *c = 2.0 * sum / n as f64;
        }
        cheb[0] *= 0.5;
        let coeffs = chebyshev_to_monomial(&cheb, 1.0 / half, -mid / half);
        let max_err = grid_error(&coeffs, &f, a, b);
        Ok(Self { coeffs, interval: (a, b), max_err })
    }

    /// Fit of `exp(-t)`.
    pub fn fit_exp(a: f64, b: f64, degree: usize) -> Result<Self> {
        Self::fit(|t| math::exp(-t), a, b, degree)
    }

    /// Rebuilds a stored approximation, recomputing `max_err` against
    /// `exp(-t)` and rejecting records that disagree.
    pub fn from_parts(coeffs: Vec<f64>, a: f64, b: f64, max_err: f64) -> Result<Self> {
        check_interval(a, b)?;
        check_degree(coeffs.len().saturating_sub(1))?;
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        let recomputed = grid_error(&coeffs, &|t: f64| math::exp(-t), a, b);
        if math::abs(recomputed - max_err) > 1e-12 {
            return Err(Error::InvalidInput(format!("recorded max_err {max_err} != {recomputed}")));
        }
        Ok(Self { coeffs, interval: (a, b), max_err })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn max_err(&self) -> f64 {
        self.max_err
    }

    /// True when `t` lies within the calibration interval widened by 10%
    /// of its length on each side.
    pub fn in_soft_range(&self, t: f64) -> bool {
        let (a, b) = self.interval;
        let pad = 0.1 * (b - a);
        t >= a - pad && t <= b + pad
    }

    pub fn eval_horner(&self, t: f64) -> f64 {
        if !self.in_soft_range(t) {
            log::warn!("t = {t} outside calibration interval {:?}", self.interval);
        }
        horner(&self.coeffs, t)
    }

    /// Same evaluation order as [`Self::eval_encrypted`].
    pub fn eval_power_tree(&self, t: f64) -> f64 {
        eval_power_tree(&self.coeffs, t)
    }

    /// Levels consumed by [`Self::eval_encrypted`].
    pub fn depth(&self) -> usize {
        power_depth(self.degree()) + 1
    }

    /// Evaluates the polynomial on an encrypted `t`.
    pub fn eval_encrypted(&self, ctx: &CkksContext, ct: &Ciphertext, rlk: &RelinKey) -> Result<Ciphertext> {
        if ct.level() < self.depth() + 1 {
            return Err(Error::LevelExhausted(format!(
                "degree {} needs {} levels, ciphertext has {} left",
                self.degree(),
                self.depth(),
                ct.level() - 1
            )));
        }
        let powers = encrypted_powers(ctx, ct, self.degree(), rlk)?;
        let mut acc: Option<Ciphertext> = None;
        for (c, p) in self.coeffs[1..].iter().zip(&powers) {
            let term = ctx.mul_const(p, *c)?;
            acc = Some(match acc {
                None => term,
                Some(a) => ctx.add(&a, &term)?,
            });
        }
        let acc = acc.expect("degree >= 1");
        ctx.add_const(&acc, self.coeffs[0])
    }
}

fn grid_error(coeffs: &[f64], f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let step = (b - a) / (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS)
        .map(|i| {
            let t = a + step * i as f64;
            math::abs(horner(coeffs, t) - f(t))
        })
        .fold(0.0, f64::max)
}

/// Multiplicative depth of computing `x^1..x^degree` by the power tree.
pub fn power_depth(degree: usize) -> usize {
    if degree <= 1 {
        0
    } else {
        (usize::BITS - (degree - 1).leading_zeros()) as usize
    }
}

/// `[x, x^2, .., x^degree]` where `x^m = x^(2^k) * x^(m - 2^k)` with `2^k`
/// the largest power of two below `m` (or `x^m = (x^(m/2))^2`).
fn power_tree<T, E>(
    x: T,
    degree: usize,
    mut mul: impl FnMut(&T, &T) -> core::result::Result<T, E>,
) -> core::result::Result<Vec<T>, E> {
    let mut p: Vec<T> = Vec::with_capacity(degree);
    p.push(x);
    for m in 2..=degree {
        let hi = 1usize << (usize::BITS - 1 - m.leading_zeros());
        let v = if hi == m { mul(&p[m / 2 - 1], &p[m / 2 - 1])? } else { mul(&p[hi - 1], &p[m - hi - 1])? };
        p.push(v);
    }
    Ok(p)
}

/// `sum c_i t^i` with the powers formed as in the encrypted evaluator.
pub fn eval_power_tree(coeffs: &[f64], t: f64) -> f64 {
    let Some((&c0, rest)) = coeffs.split_first() else {
        return 0.0;
    };
    let powers = power_tree(t, rest.len().max(1), |a, b| Ok::<f64, ()>(a * b)).unwrap_or_default();
    c0 + rest.iter().zip(&powers).map(|(c, p)| c * p).sum::<f64>()
}

/// Encrypted powers `[x, .., x^degree]`, each at depth `ceil(log2 m)`.
pub fn encrypted_powers(ctx: &CkksContext, x: &Ciphertext, degree: usize, rlk: &RelinKey) -> Result<Vec<Ciphertext>> {
    power_tree(x.clone(), degree, |a, b| ctx.mul(a, b, rlk))
}

/// `[0, max(1.05 * max t, 1e-6)]` for `t = gamma * |x - sv|^2`.
pub fn calibrate_interval<'a>(
    gamma: f64,
    samples: impl IntoIterator<Item = &'a [f64]>,
    svs: &[&[f64]],
) -> Result<(f64, f64)> {
    let mut seen = false;
    let mut max_t = 0.0f64;
    for x in samples {
        seen = true;
        for sv in svs {
            max_t = max_t.max(gamma * crate::matrix::sq_dist(x, sv));
        }
    }
    if !seen || svs.is_empty() {
        return Err(Error::InvalidInput("calibration needs samples and support vectors".into()));
    }
    Ok((0.0, (INTERVAL_MARGIN * max_t).max(INTERVAL_FLOOR)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_degenerate_interval() {
        assert!(PolyApprox::fit_exp(0.0, 0.0, 1).is_err());
        assert!(PolyApprox::fit_exp(0.0, 1.0, 0).is_err());
        assert!(PolyApprox::fit_exp(0.0, 1.0, 9).is_err());
    }

    #[test]
    fn reproduces_polynomial_targets() {
        for degree in 1..=4 {
            let p = PolyApprox::fit(|t| 1.0 - t, 0.0, 3.0, degree).unwrap();
            assert!((p.coeffs()[0] - 1.0).abs() < 1e-12);
            assert!((p.coeffs()[1] + 1.0).abs() < 1e-12);
            assert!(p.coeffs()[2..].iter().all(|c| c.abs() < 1e-12));
        }
        let cubic = PolyApprox::fit(|t| 0.5 - 2.0 * t * t + t * t * t, 0.0, 2.0, 3).unwrap();
        for (c, e) in cubic.coeffs().iter().zip([0.5, 0.0, -2.0, 1.0]) {
            assert!((c - e).abs() < 1e-12);
        }
    }

    #[test]
    fn exp_fit_error() {
        let p = PolyApprox::fit_exp(0.0, 4.0, 4).unwrap();
        assert!(p.max_err() <= 0.05, "{}", p.max_err());
        assert!((p.eval_horner(0.0) - 1.0).abs() <= 0.05);
        let mut last = f64::INFINITY;
        for d in 2..=6 {
            let e = PolyApprox::fit_exp(0.0, 3.0, d).unwrap().max_err();
            assert!(e <= last);
            last = e;
        }
    }

    #[test]
    fn constant_polynomial() {
        let p = PolyApprox::from_parts(alloc::vec![1.0, 0.0, 0.0], 0.0, 1.0, 1.0 - (-1.0f64).exp()).unwrap();
        assert_eq!(p.eval_horner(0.7), 1.0);
        assert!(PolyApprox::from_parts(alloc::vec![1.0, 0.0, 0.0], 0.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn calibration() {
        let a = [0.0, 0.0];
        let b = [2.0, 0.0];
        let (lo, hi) = calibrate_interval(0.5, [&a[..], &b[..]], &[&a[..]]).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 2.1).abs() < 1e-12);
        let (_, hi) = calibrate_interval(0.5, [&a[..]], &[&a[..]]).unwrap();
        assert_eq!(hi, INTERVAL_FLOOR);
        assert!(calibrate_interval(0.5, core::iter::empty(), &[&a[..]]).is_err());
    }

    #[test]
    fn depth_of_power_tree() {
        assert_eq!(power_depth(1), 0);
        assert_eq!(power_depth(2), 1);
        assert_eq!(power_depth(3), 2);
        assert_eq!(power_depth(4), 2);
        assert_eq!(power_depth(5), 3);
        assert_eq!(power_depth(8), 3);
    }

    proptest! {
        #[test]
        fn power_tree_matches_monomials(
            coeffs in proptest::collection::vec(-2.0f64..2.0, 2..=9),
            t in 0.0f64..3.0,
        ) {
            let p = PolyApprox { coeffs: coeffs.clone(), interval: (0.0, 3.0), max_err: 0.0 };
            let direct: f64 = coeffs.iter().enumerate().map(|(i, c)| c * t.powi(i as i32)).sum();
            let magnitude: f64 = coeffs.iter().enumerate().map(|(i, c)| (c * t.powi(i as i32)).abs()).sum();
            prop_assert!((p.eval_power_tree(t) - direct).abs() <= 1e-12 * magnitude.max(1.0));
        }
    }
}
