//! Hybrid kernel on encrypted operands.

use alloc::format;
use alloc::vec::Vec;

use crate::approx::{encrypted_powers, power_depth, PolyApprox};
use crate::ckks::{Ciphertext, CkksContext, RelinKey};
use crate::error::{Error, Result};
use crate::math;
use crate::svm::KernelConfig;

/// Levels consumed by [`enc_hybrid_kernel`]: the deeper of the two power
/// trees, plus one for the coefficients.
pub fn kernel_depth(cfg: &KernelConfig, approx_degree: usize) -> usize {
    let poly = if cfg.lambda1 > 0.0 { power_depth(cfg.degree as usize) } else { 0 };
    let rbf = if cfg.lambda2 > 0.0 { power_depth(approx_degree) } else { 0 };
    poly.max(rbf) + 1
}

/// `lambda1 (dot + c)^d + lambda2 P(gamma dist)` slot-wise.
///
/// `ct_dist` holds the squared distance `|x - sv|^2`; the factors
/// `gamma^i` are folded into the polynomial coefficients, so no level is
/// spent on scaling by `gamma`.
pub fn enc_hybrid_kernel(
    ctx: &CkksContext,
    ct_dot: &Ciphertext,
    ct_dist: &Ciphertext,
    cfg: &KernelConfig,
    approx: Option<&PolyApprox>,
    rlk: &RelinKey,
) -> Result<Ciphertext> {
    cfg.validate()?;
    let approx = match (cfg.lambda2 > 0.0, approx) {
        (true, None) => return Err(Error::InvalidInput("RBF term needs a polynomial approximation".into())),
        (true, Some(a)) => Some(a),
        (false, _) => None,
    };
    let depth = kernel_depth(cfg, approx.map_or(0, PolyApprox::degree));
    let have = ct_dot.level().min(ct_dist.level()) - 1;
    if have < depth {
        return Err(Error::LevelExhausted(format!("kernel needs {depth} levels, operands have {have}")));
    }
    let mut terms: Vec<Ciphertext> = Vec::new();
    let mut constant = 0.0;
    if cfg.lambda1 > 0.0 {
        let p = ctx.add_const(ct_dot, cfg.coef)?;
        let pow = encrypted_powers(ctx, &p, cfg.degree as usize, rlk)?.pop().expect("degree >= 1");
        terms.push(ctx.mul_const(&pow, cfg.lambda1)?);
    }
    if let Some(a) = approx {
        let powers = encrypted_powers(ctx, ct_dist, a.degree(), rlk)?;
        for (i, (c, u)) in a.coeffs()[1..].iter().zip(&powers).enumerate() {
            let w = cfg.lambda2 * c * math::powi(cfg.gamma, i as u32 + 1);
            terms.push(ctx.mul_const(u, w)?);
        }
        constant = cfg.lambda2 * a.coeffs()[0];
    }
    let mut acc = terms.pop().expect("at least one kernel term");
    for t in &terms {
        acc = ctx.add(&acc, t)?;
    }
    ctx.add_const(&acc, constant)
}
