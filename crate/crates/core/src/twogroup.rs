//! The generalized two-group model.
//!
//! Hypothesis states are i.i.d. Bernoulli(π); given the states,
//! `Z | h ~ N_K(b·h, Σ + τ²·diag(h))`. With Σ = I this is the classic
//! two-group mixture `(1 − π)·N(0, 1) + π·N(b, 1 + τ²)`.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covstruct::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::locfdr::LocFdrVector;
use crate::math::{ln_or_neg_inf, log_add_exp, log_normal_pdf};

/// Mixture parameters (π, b, τ²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoGroupParams {
    /// Prior probability of a non-null.
    pub pi: f64,
    /// Non-null mean shift.
    pub b: f64,
    /// Variance added to non-null statistics.
    pub tau_sq: f64,
}

impl TwoGroupParams {
    pub fn new(pi: f64, b: f64, tau_sq: f64) -> Result<Self> {
        let p = TwoGroupParams { pi, b, tau_sq };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(Error::Domain(format!("pi = {} violates 0 <= pi <= 1", self.pi)));
        }
        if !self.b.is_finite() {
            return Err(Error::Domain("b must be finite".into()));
        }
        if !(self.tau_sq >= 0.0) || !self.tau_sq.is_finite() {
            return Err(Error::Domain(format!("tau^2 = {} violates tau^2 >= 0", self.tau_sq)));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn ln_pi(&self) -> f64 {
        ln_or_neg_inf(self.pi)
    }

    #[inline]
    pub(crate) fn ln_one_minus_pi(&self) -> f64 {
        ln_or_neg_inf(1.0 - self.pi)
    }

    /// log of the null component density (1 − π)·φ(z).
    #[inline]
    fn log_null_part(&self, z: f64) -> f64 {
        self.ln_one_minus_pi() + log_normal_pdf(z, 0.0, 1.0)
    }

    /// log of the non-null component density π·φ(z; b, 1 + τ²).
    #[inline]
    fn log_alt_part(&self, z: f64) -> f64 {
        self.ln_pi() + log_normal_pdf(z, self.b, 1.0 + self.tau_sq)
    }
}

/// Hypothesis states; `true` marks a non-null.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypothesisStates(pub Vec<bool>);

impl HypothesisStates {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn non_null_count(&self) -> usize {
        self.0.iter().filter(|&&h| h).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

/// A vector of finite test statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ZVector(Vec<f64>);

impl ZVector {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("z-score {} is not finite", i + 1)));
        }
        Ok(ZVector(z))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for ZVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// K i.i.d. Bernoulli(π) states.
pub fn sample_states<R: Rng + ?Sized>(k: usize, pi: f64, rng: &mut R) -> Result<HypothesisStates> {
    let dist = Bernoulli::new(pi).map_err(|_| Error::Domain(format!("pi = {pi} violates 0 <= pi <= 1")))?;
    Ok(HypothesisStates((0..k).map(|_| dist.sample(rng)).collect()))
}

/// One draw of `Z | h` from the full dependent model.
///
/// Uses `Z = b·h + L·x + τ·(h ∘ e)` with `L Lᵀ = Σ` and independent standard
/// normal `x`, `e`: the two Gaussian terms are independent, so the covariance
/// is exactly `Σ + τ²·diag(h)` and only the (cached) factor of Σ is needed.
pub fn sample_zscores<R: Rng + ?Sized>(
    h: &HypothesisStates,
    params: &TwoGroupParams,
    sigma: &CovarianceMatrix,
    rng: &mut R,
) -> Result<ZVector> {
    params.validate()?;
    let k = sigma.dim();
    if h.len() != k {
        return Err(Error::Argument(format!(
            "{} hypothesis states for a {k}x{k} covariance",
            h.len()
        )));
    }
    let factor = sigma.cholesky()?;
    let x: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    let mut z = factor.mul_vec(&x);
    let tau = params.tau_sq.sqrt();
    for (zi, &hi) in z.iter_mut().zip(h.as_slice()) {
        // always draw so the stream does not depend on h
        let e: f64 = rng.sample(StandardNormal);
        if hi {
            *zi += params.b + tau * e;
        }
    }
    Ok(ZVector(z))
}

/// K independent draws from the univariate two-group mixture.
pub fn sample_mixture<R: Rng + ?Sized>(
    k: usize,
    params: &TwoGroupParams,
    rng: &mut R,
) -> Result<(HypothesisStates, ZVector)> {
    params.validate()?;
    let h = sample_states(k, params.pi, rng)?;
    let sd1 = (1.0 + params.tau_sq).sqrt();
    let z = h
        .as_slice()
        .iter()
        .map(|&hi| {
            let e: f64 = rng.sample(StandardNormal);
            if hi {
                params.b + sd1 * e
            } else {
                e
            }
        })
        .collect();
    Ok((h, ZVector(z)))
}

/// log[(1 − π)·φ(z) + π·φ(z; b, 1 + τ²)].
pub fn marginal_mixture_logdensity(z: f64, params: &TwoGroupParams) -> f64 {
    log_add_exp(params.log_null_part(z), params.log_alt_part(z))
}

/// Marginal local fdr P(h = 0 | z) of a single statistic.
#[inline]
pub fn marginal_locfdr_value(z: f64, params: &TwoGroupParams) -> f64 {
    let null = params.log_null_part(z);
    let alt = params.log_alt_part(z);
    (null - log_add_exp(null, alt)).exp()
}

/// P(h = 1 | z), the EM responsibility.
#[inline]
pub(crate) fn non_null_posterior(z: f64, params: &TwoGroupParams) -> f64 {
    let null = params.log_null_part(z);
    let alt = params.log_alt_part(z);
    (alt - log_add_exp(null, alt)).exp()
}

/// Marginal local fdr `T_{i,0}` of every statistic.
pub fn marginal_locfdr(z: &[f64], params: &TwoGroupParams) -> LocFdrVector {
    LocFdrVector::new(
        z.iter().map(|&zi| marginal_locfdr_value(zi, params)).collect(),
        0,
        crate::locfdr::provenance_hash(params, None),
    )
}
