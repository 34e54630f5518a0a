//! Neighbourhood local false discovery rates.
//!
//! `T_{i,N} = P(h_i = 0 | Z_{i,N})` where `Z_{i,N}` is the window of at most
//! `2N + 1` statistics around hypothesis `i`. Each window is evaluated by
//! summing prior × Gaussian density over all `2^l` state configurations of
//! the window, in log space.
//!
//! Two engines compute the same quantity:
//!
//! * [`Engine::Naive`] factorizes `Σ_w + τ²·diag(h)` afresh for every
//!   configuration (O(l³) each) and is the correctness reference;
//! * [`Engine::Fast`] walks the configurations in Gray-code order and
//!   carries the factor along with rank-one updates (O(l²) each).
//!
//! Windows are independent, so hypotheses are processed in parallel; the
//! output does not depend on the scheduling.

mod kernel;
mod oracle;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use oracle::{oracle_locfdr_bruteforce, ORACLE_MAX_K};

use crate::covstruct::{cholesky_lower, window_bounds, CovarianceMatrix, WindowCov};
use crate::error::{Error, Result};
use crate::math::{LogSumExp, LN_SQRT_2PI};
use crate::twogroup::{marginal_locfdr_value, TwoGroupParams};
use kernel::Scratch;

/// Default cap on the half-width N (2^25 configurations per window).
pub const DEFAULT_MAX_HALF_WIDTH: usize = 12;

/// Per-hypothesis `T_{i,N}` values for one half-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocFdrVector {
    values: Vec<f64>,
    half_width: usize,
    params_hash: u64,
}

impl LocFdrVector {
    pub(crate) fn new(values: Vec<f64>, half_width: usize, params_hash: u64) -> Self {
        debug_assert!(values.iter().all(|t| (0.0..=1.0).contains(t)));
        LocFdrVector {
            values,
            half_width,
            params_hash,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// Fingerprint of the (π, b, τ², Σ-band) inputs that produced the values.
    pub fn params_hash(&self) -> u64 {
        self.params_hash
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Hash of the parameters and of the part of Σ a half-width-`n` computation
/// can see (entries with |i − j| ≤ n).
pub(crate) fn provenance_hash(params: &TwoGroupParams, band: Option<(&CovarianceMatrix, usize)>) -> u64 {
    let mut h = DefaultHasher::new();
    params.pi.to_bits().hash(&mut h);
    params.b.to_bits().hash(&mut h);
    params.tau_sq.to_bits().hash(&mut h);
    if let Some((sigma, n)) = band {
        let k = sigma.dim();
        k.hash(&mut h);
        for i in 0..k {
            for j in i + 1..=(i + n).min(k - 1) {
                sigma.get(i, j).to_bits().hash(&mut h);
            }
        }
    }
    h.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Naive,
    #[default]
    Fast,
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "naive" => Ok(Engine::Naive),
            "fast" => Ok(Engine::Fast),
            other => Err(Error::Parse(format!("unknown engine `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocFdrOptions {
    pub engine: Engine,
    /// Requests with N above this are refused.
    pub max_half_width: usize,
}

impl Default for LocFdrOptions {
    fn default() -> Self {
        LocFdrOptions {
            engine: Engine::Fast,
            max_half_width: DEFAULT_MAX_HALF_WIDTH,
        }
    }
}

/// Log prior and log Gaussian density of one window configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowLogDensity {
    /// log N(z_w; b·h_w, Σ_w + τ²·diag(h_w)).
    pub log_density: f64,
    /// Σ [h log π + (1 − h) log(1 − π)].
    pub log_prior: f64,
}

impl WindowLogDensity {
    pub fn joint(&self) -> f64 {
        self.log_prior + self.log_density
    }
}

/// Evaluates one term of the window sum.
pub fn log_joint_window_density(
    z_window: &[f64],
    h_window: &[bool],
    params: &TwoGroupParams,
    window: &WindowCov,
) -> Result<WindowLogDensity> {
    let l = window.len();
    if z_window.len() != l || h_window.len() != l {
        return Err(Error::Argument(format!(
            "window of length {l} given {} statistics and {} states",
            z_window.len(),
            h_window.len()
        )));
    }
    params.validate()?;
    let mut m = window.submatrix.clone();
    for (a, &h) in h_window.iter().enumerate() {
        if h {
            m[a * l + a] += params.tau_sq;
        }
    }
    let f = cholesky_lower(&m, l)?;
    let resid: Vec<f64> = z_window
        .iter()
        .zip(h_window)
        .map(|(&z, &h)| if h { z - params.b } else { z })
        .collect();
    let quad = f.quad_form(&resid, &mut Vec::new());
    let mask = h_window
        .iter()
        .enumerate()
        .fold(0u64, |m, (a, &h)| m | (u64::from(h) << a));
    Ok(WindowLogDensity {
        log_density: -(l as f64) * LN_SQRT_2PI - 0.5 * f.log_det() - 0.5 * quad,
        log_prior: kernel::log_prior(mask, l, params),
    })
}

/// Log-weights of every configuration of one window.
#[derive(Debug, Clone)]
pub struct WindowPosterior {
    /// Indexed by configuration mask (bit `a` = state of window position `a`).
    pub log_weights: Vec<f64>,
    /// Position of the tested hypothesis inside the window.
    pub center: usize,
}

impl WindowPosterior {
    /// Enumerates the window of hypothesis `i` (1-based).
    pub fn compute(
        z: &[f64],
        sigma: &CovarianceMatrix,
        params: &TwoGroupParams,
        i: usize,
        half_width: usize,
        engine: Engine,
    ) -> Result<Self> {
        let w = sigma.window(i, half_width)?;
        let zw = &z[w.range()];
        let mut log_weights = vec![f64::NEG_INFINITY; 1 << w.len()];
        let visit = |m: u64, lw: f64| log_weights[m as usize] = lw;
        let mut scratch = Scratch::default();
        match engine {
            Engine::Naive => kernel::enumerate_naive(zw, &w.submatrix, params, &mut scratch, visit)?,
            Engine::Fast => kernel::enumerate_gray(zw, &w.submatrix, params, &mut scratch, visit)?,
        }
        Ok(WindowPosterior {
            log_weights,
            center: w.center_offset,
        })
    }

    /// P(centre state = 0 | window).
    pub fn null_probability(&self) -> f64 {
        let mut num = LogSumExp::default();
        let mut all = LogSumExp::default();
        for (m, &lw) in self.log_weights.iter().enumerate() {
            all.push(lw);
            if m >> self.center & 1 == 0 {
                num.push(lw);
            }
        }
        ratio(num, all)
    }
}

#[inline]
fn ratio(num: LogSumExp, all: LogSumExp) -> f64 {
    let t = (num.value() - all.value()).exp();
    if t.is_nan() {
        1.0
    } else {
        t.clamp(0.0, 1.0)
    }
}

fn check_inputs(z: &[f64], sigma: &CovarianceMatrix, params: &TwoGroupParams) -> Result<()> {
    params.validate()?;
    if z.len() != sigma.dim() {
        return Err(Error::Argument(format!(
            "{} statistics for a {k}x{k} covariance",
            z.len(),
            k = sigma.dim()
        )));
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::Argument(format!("z-score {} is not finite", i + 1)));
    }
    Ok(())
}

/// `T_{i,N}` with the naive engine.
pub fn locfdr_n(
    z: &[f64],
    sigma: &CovarianceMatrix,
    params: &TwoGroupParams,
    half_width: usize,
) -> Result<LocFdrVector> {
    compute_locfdr(
        z,
        sigma,
        params,
        half_width,
        &LocFdrOptions {
            engine: Engine::Naive,
            ..Default::default()
        },
    )
}

/// `T_{i,N}` with the Gray-code engine.
pub fn locfdr_n_fast(
    z: &[f64],
    sigma: &CovarianceMatrix,
    params: &TwoGroupParams,
    half_width: usize,
) -> Result<LocFdrVector> {
    compute_locfdr(z, sigma, params, half_width, &LocFdrOptions::default())
}

/// `T_{i,N}` for every hypothesis.
pub fn compute_locfdr(
    z: &[f64],
    sigma: &CovarianceMatrix,
    params: &TwoGroupParams,
    half_width: usize,
    options: &LocFdrOptions,
) -> Result<LocFdrVector> {
    check_inputs(z, sigma, params)?;
    if half_width > options.max_half_width {
        return Err(Error::Argument(format!(
            "N = {half_width} exceeds the cap of {}; raise max_half_width to allow it",
            options.max_half_width
        )));
    }
    let k = z.len();
    let hash = provenance_hash(params, Some((sigma, half_width)));
    if k == 0 {
        return Ok(LocFdrVector::new(Vec::new(), half_width, hash));
    }
    if half_width == 0 && options.engine == Engine::Fast {
        let values = z.iter().map(|&zi| marginal_locfdr_value(zi, params)).collect();
        return Ok(LocFdrVector::new(values, 0, hash));
    }
    let values = (0..k)
        .into_par_iter()
        .with_min_len(8)
        .map_init(
            || (Scratch::default(), Vec::new()),
            |(scratch, sub), i| {
                let (lo, hi) = window_bounds(k, i, half_width);
                let len = hi - lo + 1;
                sigma.principal_block_into(lo, len, sub);
                let center = i - lo;
                let mut num = LogSumExp::default();
                let mut all = LogSumExp::default();
                let visit = |m: u64, lw: f64| {
                    all.push(lw);
                    if m >> center & 1 == 0 {
                        num.push(lw);
                    }
                };
                let zw = &z[lo..=hi];
                let res = match options.engine {
                    Engine::Naive => kernel::enumerate_naive(zw, sub, params, scratch, visit),
                    Engine::Fast => kernel::enumerate_gray(zw, sub, params, scratch, visit),
                };
                res.map_err(|e| Error::Window {
                    center: i + 1,
                    source: Box::new(e),
                })?;
                Ok(ratio(num, all))
            },
        )
        .collect::<Result<Vec<f64>>>()?;
    Ok(LocFdrVector::new(values, half_width, hash))
}
