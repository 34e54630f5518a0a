//! Cutoff calibration for the rule "reject when T ≤ t".
//!
//! `Q(t)` is the mean of the statistics that fall at or below `t`; the
//! calibrated cutoff is the largest `t` with `Q(t) ≤ α`. [`mc_threshold`]
//! estimates it from a pool of simulated statistics,
//! [`quadrature_threshold_n0`] computes it without simulation for N = 0.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covstruct::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::locfdr::{compute_locfdr, LocFdrOptions};
use crate::math::{normal_cdf, normal_sf};
use crate::rng::stream_rng;
use crate::twogroup::{sample_mixture, sample_states, sample_zscores, TwoGroupParams};

/// Maximum number of audit points kept in [`ThresholdEstimate::q_curve`].
pub const Q_CURVE_POINTS: usize = 256;

/// How calibration replicates are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationSampling {
    /// Each statistic drawn independently from the univariate mixture.
    #[default]
    Independent,
    /// Whole vectors drawn from the dependent model with Σ.
    Joint,
}

impl fmt::Display for CalibrationSampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CalibrationSampling::Independent => "independent",
            CalibrationSampling::Joint => "joint",
        })
    }
}

impl FromStr for CalibrationSampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "independent" => Ok(CalibrationSampling::Independent),
            "joint" => Ok(CalibrationSampling::Joint),
            other => Err(Error::Parse(format!("unknown sampling mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    McIndependent,
    McJoint,
    QuadratureN0,
}

/// A calibrated cutoff and the evidence behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub t_hat: f64,
    pub alpha: f64,
    pub half_width: usize,
    /// Calibration replicates (0 for quadrature).
    pub replicates: usize,
    pub method: ThresholdMethod,
    /// Sampled `(t, Q(t))` pairs.
    pub q_curve: Vec<(f64, f64)>,
    /// No positive cutoff satisfies `Q(t) ≤ α`; `t_hat` is 0.
    pub empty_rejection: bool,
}

/// Mean of the pool values `≤ t`, `None` if there are none.
pub fn q_hat(pool: &[f64], t: f64) -> Option<f64> {
    let (mut n, mut s) = (0usize, 0.0);
    for &v in pool {
        if v <= t {
            n += 1;
            s += v;
        }
    }
    (n > 0).then(|| s / n as f64)
}

/// Largest jump point of `Q` with `Q ≤ α` over an ascending pool; 1 when the
/// whole pool qualifies. Returns `(t_hat, empty, q_curve)`.
pub(crate) fn search_sorted(sorted: &[f64], alpha: f64) -> (f64, bool, Vec<(f64, f64)>) {
    let n = sorted.len();
    let stride = (n / Q_CURVE_POINTS).max(1);
    let mut curve = Vec::new();
    let mut best: Option<f64> = None;
    let mut sum = 0.0;
    let mut i = 0;
    let mut next_mark = 0;
    while i < n {
        let v = sorted[i];
        // consume the whole tie group before testing
        while i < n && sorted[i] == v {
            sum += sorted[i];
            i += 1;
        }
        let q = sum / i as f64;
        if q <= alpha {
            best = Some(v);
        }
        if i >= next_mark || i == n {
            curve.push((v, q));
            next_mark = i + stride;
        }
    }
    if let Some(&(_, q)) = curve.last() {
        if q <= alpha {
            curve.push((1.0, q));
            return (1.0, false, curve);
        }
    }
    match best {
        Some(t) => (t, false, curve),
        None => (0.0, true, curve),
    }
}

/// Cutoff from a pool of statistics (any order).
pub fn threshold_from_pool(mut pool: Vec<f64>, alpha: f64) -> Result<(f64, bool, Vec<(f64, f64)>)> {
    if pool.is_empty() {
        return Err(Error::Argument("empty calibration pool".into()));
    }
    if pool.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Argument("pool values must lie in [0, 1]".into()));
    }
    pool.sort_unstable_by(f64::total_cmp);
    Ok(search_sorted(&pool, alpha))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Argument(format!("alpha = {alpha} must lie in (0, 1]")));
    }
    Ok(())
}

/// Draws `replicates` statistic vectors of length K = dim(Σ), computes
/// `T_{i,N}` for each with the given parameters and Σ, and searches the
/// pooled values for the cutoff.
pub fn mc_threshold<R: Rng + ?Sized>(
    params: &TwoGroupParams,
    sigma: &CovarianceMatrix,
    half_width: usize,
    alpha: f64,
    replicates: usize,
    sampling: CalibrationSampling,
    rng: &mut R,
) -> Result<ThresholdEstimate> {
    check_alpha(alpha)?;
    params.validate()?;
    if replicates == 0 {
        return Err(Error::Argument("at least one calibration replicate is required".into()));
    }
    let k = sigma.dim();
    let seed: u64 = rng.random();
    let opts = LocFdrOptions::default();
    let pooled = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut g = stream_rng(seed, r as u64);
            let z = match sampling {
                CalibrationSampling::Independent => sample_mixture(k, params, &mut g)?.1,
                CalibrationSampling::Joint => {
                    let h = sample_states(k, params.pi, &mut g)?;
                    sample_zscores(&h, params, sigma, &mut g)?
                }
            };
            Ok(compute_locfdr(z.as_slice(), sigma, params, half_width, &opts)?.into_values())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let pool: Vec<f64> = pooled.into_iter().flatten().collect();
    let (t_hat, empty, q_curve) = threshold_from_pool(pool, alpha)?;
    Ok(ThresholdEstimate {
        t_hat,
        alpha,
        half_width,
        replicates,
        method: match sampling {
            CalibrationSampling::Independent => ThresholdMethod::McIndependent,
            CalibrationSampling::Joint => ThresholdMethod::McJoint,
        },
        q_curve,
        empty_rejection: empty,
    })
}

/// Probabilities `(P₀(T ≤ t), P₁(T ≤ t))` of the marginal rejection region
/// under the null N(0, 1) and the alternative N(b, 1 + τ²).
///
/// `T(z) ≤ t` reduces to `a z² + c₁ z + c₀ ≥ 0`, so the region is the whole
/// line, a half line, or the complement of an interval.
pub fn marginal_region_probs(params: &TwoGroupParams, t: f64) -> (f64, f64) {
    let (pi, b, tau_sq) = (params.pi, params.b, params.tau_sq);
    if t >= 1.0 || pi >= 1.0 {
        return (1.0, 1.0);
    }
    if t <= 0.0 || pi <= 0.0 {
        return (0.0, 0.0);
    }
    let s2 = 1.0 + tau_sq;
    let s = s2.sqrt();
    let a = 0.5 * (1.0 - 1.0 / s2);
    let c1 = b / s2;
    let c0 = (t * pi).ln() - ((1.0 - pi) * (1.0 - t)).ln() - s.ln() - 0.5 * b * b / s2;
    // P(X ≤ x) and P(X > x) for the two components
    let p0 = |lo: f64, hi: f64| {
        // mass of (-inf, lo] ∪ [hi, inf)
        normal_cdf(lo) + normal_sf(hi)
    };
    let p1 = |lo: f64, hi: f64| normal_cdf((lo - b) / s) + normal_sf((hi - b) / s);
    if a <= 0.0 {
        // τ² = 0: linear in z
        if c1 == 0.0 {
            return if c0 >= 0.0 { (1.0, 1.0) } else { (0.0, 0.0) };
        }
        let root = -c0 / c1;
        return if c1 > 0.0 {
            (normal_sf(root), normal_sf((root - b) / s))
        } else {
            (normal_cdf(root), normal_cdf((root - b) / s))
        };
    }
    let disc = c1 * c1 - 4.0 * a * c0;
    if disc <= 0.0 {
        return (1.0, 1.0);
    }
    let sq = disc.sqrt();
    let (r1, r2) = ((-c1 - sq) / (2.0 * a), (-c1 + sq) / (2.0 * a));
    (p0(r1, r2).min(1.0), p1(r1, r2).min(1.0))
}

/// `Q(t)` for N = 0 under the univariate mixture; `None` if `P(T ≤ t) = 0`.
pub fn marginal_q(params: &TwoGroupParams, t: f64) -> Option<f64> {
    let (p0, p1) = marginal_region_probs(params, t);
    let num = (1.0 - params.pi) * p0;
    let den = num + params.pi * p1;
    (den > 0.0).then(|| num / den)
}

/// Deterministic N = 0 cutoff: bisection on the nondecreasing map `t ↦ Q(t)`.
pub fn quadrature_threshold_n0(params: &TwoGroupParams, alpha: f64) -> Result<ThresholdEstimate> {
    check_alpha(alpha)?;
    params.validate()?;
    let q = |t: f64| marginal_q(params, t).unwrap_or(0.0);
    let grid: Vec<(f64, f64)> = (1..=Q_CURVE_POINTS)
        .map(|j| {
            let t = j as f64 / Q_CURVE_POINTS as f64;
            (t, q(t))
        })
        .collect();
    let mut est = ThresholdEstimate {
        t_hat: 1.0,
        alpha,
        half_width: 0,
        replicates: 0,
        method: ThresholdMethod::QuadratureN0,
        q_curve: grid,
        empty_rejection: false,
    };
    if q(1.0) <= alpha {
        return Ok(est);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q(mid) <= alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    if !lo.is_finite() {
        return Err(Error::Numerical("cutoff search did not converge".into()));
    }
    est.t_hat = lo;
    est.empty_rejection = lo == 0.0;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covstruct::{build_covariance, CovarianceKind, CovarianceSpec};
    use crate::twogroup::marginal_locfdr_value;

    #[test]
    fn q_hat_examples() {
        let pool = [0.1, 0.2, 0.9];
        assert_eq!(q_hat(&pool, 0.15), Some(0.1));
        assert!((q_hat(&pool, 0.25).unwrap() - 0.15).abs() < 1e-15);
        assert_eq!(q_hat(&pool, 0.05), None);
        assert_eq!(q_hat(&pool, 0.1), Some(0.1));
    }

    #[test]
    fn pool_search() {
        let (t, empty, _) = threshold_from_pool(vec![0.9, 0.1, 0.2], 0.16).unwrap();
        assert_eq!((t, empty), (0.2, false));
        let (t, _, _) = threshold_from_pool(vec![0.9, 0.1, 0.2], 1.0).unwrap();
        assert_eq!(t, 1.0);
        let (t, empty, _) = threshold_from_pool(vec![0.9, 0.5], 0.1).unwrap();
        assert_eq!((t, empty), (0.0, true));
        let (t, _, _) = threshold_from_pool(vec![0.02, 0.3, 0.3, 0.31], 0.2).unwrap();
        assert_eq!(t, 0.02);
        assert!(threshold_from_pool(vec![], 0.1).is_err());
    }

    #[test]
    fn pool_search_matches_brute_force() {
        let mut g = stream_rng(4, 0);
        for _ in 0..50 {
            let pool: Vec<f64> = (0..40).map(|_| (g.random::<f64>() * 20.0).round() / 20.0).collect();
            let alpha = g.random_range(0.05..0.6);
            let (t, _, _) = threshold_from_pool(pool.clone(), alpha).unwrap();
            let mut best = 0.0;
            for &c in pool.iter().chain([1.0].iter()) {
                if q_hat(&pool, c).is_some_and(|q| q <= alpha) && c > best {
                    best = c;
                }
            }
            assert_eq!(t, best);
        }
    }

    #[test]
    fn region_matches_null_only_closed_form() {
        // with b = 0, T ≤ t ⇔ |z| ≥ c
        let p = TwoGroupParams::new(0.3, 0.0, 4.0).unwrap();
        for c in [0.5, 1.0, 2.0, 3.0] {
            let t = marginal_locfdr_value(c, &p);
            let q = marginal_q(&p, t).unwrap();
            let a = 0.7 * 2.0 * normal_sf(c);
            let oracle = a / (a + 0.3 * 2.0 * normal_sf(c / 5f64.sqrt()));
            assert!((q - oracle).abs() < 1e-10, "{q} vs {oracle}");
        }
    }

    #[test]
    fn region_matches_riemann_sum() {
        for p in [
            TwoGroupParams::new(0.2, 1.5, 2.0).unwrap(),
            TwoGroupParams::new(0.4, -0.7, 0.5).unwrap(),
            TwoGroupParams::new(0.3, 2.0, 0.0).unwrap(),
        ] {
            for t in [0.05, 0.2, 0.6] {
                let h = 1e-3;
                let (mut num, mut den) = (0.0, 0.0);
                let mut z = -15.0;
                while z < 15.0 {
                    let tz = marginal_locfdr_value(z, &p);
                    if tz <= t {
                        let f0 = (1.0 - p.pi) * (-0.5 * z * z).exp();
                        let s2 = 1.0 + p.tau_sq;
                        let f1 = p.pi * (-(z - p.b).powi(2) / (2.0 * s2)).exp() / s2.sqrt();
                        num += f0 * h;
                        den += (f0 + f1) * h;
                    }
                    z += h;
                }
                let q = marginal_q(&p, t).unwrap();
                assert!((q - num / den).abs() < 2e-4, "{q} vs {}", num / den);
            }
        }
    }

    #[test]
    fn marginal_cutoff_reference_value() {
        let p = TwoGroupParams::new(0.3, 0.0, 4.0).unwrap();
        let est = quadrature_threshold_n0(&p, 0.05).unwrap();
        assert!((est.t_hat - 0.1742).abs() < 5e-4, "{}", est.t_hat);
        assert!((marginal_q(&p, est.t_hat).unwrap() - 0.05).abs() < 1e-9);
        assert_eq!(quadrature_threshold_n0(&p, 0.7).unwrap().t_hat, 1.0);
        assert_eq!(quadrature_threshold_n0(&p, 0.75).unwrap().t_hat, 1.0);
        assert!(quadrature_threshold_n0(&p, 0.0).is_err());
    }

    #[test]
    fn quadrature_cutoff_monotone_in_alpha() {
        let p = TwoGroupParams::new(0.2, 0.5, 3.0).unwrap();
        let ts: Vec<f64> = [0.01, 0.05, 0.1, 0.2]
            .iter()
            .map(|&a| quadrature_threshold_n0(&p, a).unwrap().t_hat)
            .collect();
        assert!(ts.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn mc_alpha_one_and_determinism() {
        let p = TwoGroupParams::new(0.3, 0.0, 4.0).unwrap();
        let s = build_covariance(&CovarianceSpec::new(CovarianceKind::Ar1 { rho: 0.5 }, 100)).unwrap();
        let a = mc_threshold(&p, &s, 1, 1.0, 3, CalibrationSampling::Joint, &mut stream_rng(1, 0)).unwrap();
        assert_eq!(a.t_hat, 1.0);
        let b = mc_threshold(&p, &s, 1, 0.05, 4, CalibrationSampling::Joint, &mut stream_rng(1, 0)).unwrap();
        let c = mc_threshold(&p, &s, 1, 0.05, 4, CalibrationSampling::Joint, &mut stream_rng(1, 0)).unwrap();
        assert_eq!(b, c);
        assert!(mc_threshold(&p, &s, 1, 0.05, 0, CalibrationSampling::Joint, &mut stream_rng(1, 0)).is_err());
    }

    #[test]
    fn mc_marginal_cutoff_near_reference() {
        let p = TwoGroupParams::new(0.3, 0.0, 4.0).unwrap();
        let s = CovarianceMatrix::identity(1000);
        let est = mc_threshold(
            &p,
            &s,
            0,
            0.05,
            200,
            CalibrationSampling::Independent,
            &mut stream_rng(2, 0),
        )
        .unwrap();
        assert!((est.t_hat - 0.1742).abs() < 0.004, "{}", est.t_hat);
        assert!(!est.q_curve.is_empty() && est.q_curve.len() <= Q_CURVE_POINTS + 2);
    }

    #[test]
    fn tiny_alpha_is_flagged_empty() {
        let p = TwoGroupParams::new(0.3, 0.0, 4.0).unwrap();
        let s = CovarianceMatrix::identity(100);
        let est = mc_threshold(
            &p,
            &s,
            0,
            1e-9,
            2,
            CalibrationSampling::Independent,
            &mut stream_rng(3, 0),
        )
        .unwrap();
        assert!(est.empty_rejection);
        assert_eq!(est.t_hat, 0.0);
    }
}
