//! Per-window enumeration of hypothesis configurations.
//!
//! Bit `a` of a configuration mask is the state of window position `a`.
//! Both enumerators hand every `(mask, log prior + log density)` pair to a
//! visitor; they differ only in how the Gaussian factor is obtained.

use crate::covstruct::{cholesky_dense_into, cholesky_lower, LowerFactor};
use crate::error::Result;
use crate::math::LN_SQRT_2PI;
use crate::twogroup::TwoGroupParams;

/// Configurations between forced refactorizations on the Gray-code path.
const REFRESH_PERIOD_LOG2: u32 = 6;

/// Reusable buffers for one worker.
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    matrix: Vec<f64>,
    factor: Vec<f64>,
    resid: Vec<f64>,
    update: Vec<f64>,
}

#[inline]
pub(crate) fn log_prior(mask: u64, len: usize, params: &TwoGroupParams) -> f64 {
    let ones = mask.count_ones() as f64;
    let zeros = len as f64 - ones;
    let mut lp = 0.0;
    if ones > 0.0 {
        lp += ones * params.ln_pi();
    }
    if zeros > 0.0 {
        lp += zeros * params.ln_one_minus_pi();
    }
    lp
}

/// `M = S + τ² diag(h)` for the configuration `mask`.
#[inline]
fn fill_state_matrix(sub: &[f64], len: usize, mask: u64, tau_sq: f64, out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(sub);
    for a in 0..len {
        if mask >> a & 1 == 1 {
            out[a * len + a] += tau_sq;
        }
    }
}

/// log N(z; b·h, L Lᵀ) given the factor entries (row-major lower).
#[inline]
fn gaussian_log_density(z: &[f64], mask: u64, b: f64, l: &[f64], len: usize, resid: &mut Vec<f64>) -> f64 {
    resid.clear();
    resid.extend(
        z.iter()
            .enumerate()
            .map(|(a, &za)| if mask >> a & 1 == 1 { za - b } else { za }),
    );
    let mut quad = 0.0;
    let mut log_det = 0.0;
    for i in 0..len {
        let row = &l[i * len..i * len + i];
        let s: f64 = row.iter().zip(&resid[..i]).map(|(x, y)| x * y).sum();
        let d = l[i * len + i];
        let y = (resid[i] - s) / d;
        resid[i] = y;
        quad += y * y;
        log_det += d.ln();
    }
    -(len as f64) * LN_SQRT_2PI - log_det - 0.5 * quad
}

/// Fresh factorization of `S + τ² diag(h)` into `scratch.factor`.
fn factor_fresh(sub: &[f64], len: usize, mask: u64, tau_sq: f64, scratch: &mut Scratch) -> Result<()> {
    fill_state_matrix(sub, len, mask, tau_sq, &mut scratch.matrix);
    scratch.factor.resize(len * len, 0.0);
    if cholesky_dense_into(&scratch.matrix, len, &mut scratch.factor).is_err() {
        let f = cholesky_lower(&scratch.matrix, len)?;
        scratch.factor.copy_from_slice(f.as_slice());
    }
    Ok(())
}

/// Log weight of a single configuration, factorized from scratch.
pub(crate) fn single_config(
    z: &[f64],
    sub: &[f64],
    params: &TwoGroupParams,
    mask: u64,
    scratch: &mut Scratch,
) -> Result<f64> {
    let len = z.len();
    let lp = log_prior(mask, len, params);
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    factor_fresh(sub, len, mask, params.tau_sq, scratch)?;
    Ok(lp + gaussian_log_density(z, mask, params.b, &scratch.factor, len, &mut scratch.resid))
}

/// Reference enumeration: factorizes every configuration from scratch.
pub(crate) fn enumerate_naive(
    z: &[f64],
    sub: &[f64],
    params: &TwoGroupParams,
    scratch: &mut Scratch,
    mut visit: impl FnMut(u64, f64),
) -> Result<()> {
    for mask in 0..(1u64 << z.len()) {
        visit(mask, single_config(z, sub, params, mask, scratch)?);
    }
    Ok(())
}

/// Gray-code enumeration: consecutive configurations differ in one state,
/// which changes one diagonal entry by ±τ², so the factor is carried along
/// by a rank-one update or downdate. A failed downdate, and every
/// 2^REFRESH_PERIOD_LOG2-th step, falls back to a fresh factorization.
pub(crate) fn enumerate_gray(
    z: &[f64],
    sub: &[f64],
    params: &TwoGroupParams,
    scratch: &mut Scratch,
    mut visit: impl FnMut(u64, f64),
) -> Result<()> {
    let len = z.len();
    let tau_sq = params.tau_sq;
    let tau = tau_sq.sqrt();
    let mut mask = 0u64;
    factor_fresh(sub, len, mask, tau_sq, scratch)?;
    let mut factor = LowerFactor::from_parts(len, std::mem::take(&mut scratch.factor));

    let mut emit = |mask: u64, factor: &LowerFactor, scratch: &mut Scratch| {
        let lp = log_prior(mask, len, params);
        let w = if lp == f64::NEG_INFINITY {
            lp
        } else {
            lp + gaussian_log_density(z, mask, params.b, factor.as_slice(), len, &mut scratch.resid)
        };
        visit(mask, w);
    };
    emit(mask, &factor, scratch);

    for step in 1u64..(1u64 << len) {
        let bit = step.trailing_zeros();
        mask ^= 1 << bit;
        if tau_sq > 0.0 {
            let j = bit as usize;
            let mut ok = bit < REFRESH_PERIOD_LOG2;
            if ok {
                scratch.update.clear();
                scratch.update.resize(len, 0.0);
                scratch.update[j] = tau;
                let sign = if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
                ok = factor.rank_one_update(&mut scratch.update, sign, j);
            }
            if !ok {
                scratch.factor = factor.into_data();
                factor_fresh(sub, len, mask, tau_sq, scratch)?;
                factor = LowerFactor::from_parts(len, std::mem::take(&mut scratch.factor));
            }
        }
        emit(mask, &factor, scratch);
    }
    scratch.factor = factor.into_data();
    Ok(())
}
