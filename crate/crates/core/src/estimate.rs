//! Parameter estimation: pick an approximately independent sub-vector of the
//! statistics, then fit (π, b, τ²) by EM on the univariate two-group mixture.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covstruct::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};
use crate::twogroup::{marginal_mixture_logdensity, non_null_posterior, TwoGroupParams};

/// Default correlation cutoff for [`SubsetSpec::CorrThreshold`].
pub const DEFAULT_CORR_EPS: f64 = 0.05;

const COLLAPSE_TOL: f64 = 1e-12;

/// How the sub-vector used for fitting is chosen. Indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SubsetSpec {
    /// `offset, offset + step, ...`
    Stride { step: usize, offset: usize },
    /// Greedy scan keeping `i` when |Σᵢⱼ| ≤ eps for every kept `j`.
    CorrThreshold { eps: f64 },
    /// Every hypothesis.
    All,
}

impl Default for SubsetSpec {
    fn default() -> Self {
        SubsetSpec::CorrThreshold { eps: DEFAULT_CORR_EPS }
    }
}

impl fmt::Display for SubsetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsetSpec::Stride { step, offset } => write!(f, "stride:{step}:{offset}"),
            SubsetSpec::CorrThreshold { eps } => write!(f, "corr:{eps}"),
            SubsetSpec::All => write!(f, "all"),
        }
    }
}

/// Parses `stride:STEP:OFFSET`, `corr:EPS` or `all`.
impl FromStr for SubsetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("subset `{s}`: expected stride:STEP:OFFSET, corr:EPS or all"));
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        match parts.as_slice() {
            ["all"] => Ok(SubsetSpec::All),
            ["stride", step, offset] => {
                let step: usize = step.parse().map_err(|_| bad())?;
                let offset: usize = offset.parse().map_err(|_| bad())?;
                if step == 0 || offset == 0 {
                    return Err(Error::Argument(format!(
                        "subset `{s}`: step and offset must be at least 1"
                    )));
                }
                Ok(SubsetSpec::Stride { step, offset })
            }
            ["corr", eps] => {
                let eps: f64 = eps.parse().map_err(|_| bad())?;
                if !(eps >= 0.0) {
                    return Err(Error::Argument(format!("subset `{s}`: eps must be >= 0")));
                }
                Ok(SubsetSpec::CorrThreshold { eps })
            }
            _ => Err(bad()),
        }
    }
}

/// Indices (1-based, increasing) selected by `spec`.
pub fn select_subset(sigma: &CovarianceMatrix, spec: &SubsetSpec) -> Result<Vec<usize>> {
    let k = sigma.dim();
    let idx: Vec<usize> = match *spec {
        SubsetSpec::All => (1..=k).collect(),
        SubsetSpec::Stride { step, offset } => {
            if step == 0 || offset == 0 {
                return Err(Error::Argument("stride step and offset must be at least 1".into()));
            }
            (offset..=k).step_by(step).collect()
        }
        SubsetSpec::CorrThreshold { eps } => {
            let w = sigma.effective_bandwidth();
            let mut kept: Vec<usize> = Vec::new();
            for i in 0..k {
                // only kept j within the bandwidth can have a non-zero entry
                let ok = kept
                    .iter()
                    .rev()
                    .take_while(|&&j| i - j <= w)
                    .all(|&j| sigma.get(i, j).abs() <= eps);
                if ok {
                    kept.push(i);
                }
            }
            kept.into_iter().map(|i| i + 1).collect()
        }
    };
    if idx.is_empty() {
        return Err(Error::Argument(format!(
            "subset {spec} selects no hypotheses out of {k}"
        )));
    }
    Ok(idx)
}

/// Gathers `z` at 1-based indices.
pub fn gather(z: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| z[i - 1]).collect()
}

/// Whether π is estimated or held at a supplied value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pi_mode", content = "pi", rename_all = "snake_case")]
pub enum PiMode {
    Free,
    Fixed(f64),
}

/// One point of an EM trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmState {
    pub iteration: usize,
    pub params: TwoGroupParams,
    pub loglik: f64,
    pub converged: bool,
    /// π reached 0 or 1; iteration stopped there.
    pub collapsed: bool,
    pub pi_mode: PiMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    /// Stop when |Δloglik| / |loglik| falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            tol: 1e-8,
            max_iter: 1000,
        }
    }
}

/// Result of one EM run; the trace starts with the initial point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmFit {
    pub trace: Vec<EmState>,
}

impl EmFit {
    pub fn last(&self) -> &EmState {
        self.trace.last().expect("trace holds the initial state")
    }

    pub fn params(&self) -> TwoGroupParams {
        self.last().params
    }

    pub fn loglik(&self) -> f64 {
        self.last().loglik
    }

    pub fn converged(&self) -> bool {
        self.last().converged
    }

    pub fn iterations(&self) -> usize {
        self.last().iteration
    }
}

/// Σᵢ log f(zᵢ) under the univariate mixture.
pub fn observed_loglik(z: &[f64], params: &TwoGroupParams) -> f64 {
    z.iter().map(|&zi| marginal_mixture_logdensity(zi, params)).sum()
}

fn mean_var(z: &[f64]) -> (f64, f64) {
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var)
}

/// π₀ = 0.2, b₀ = mean(z), τ²₀ = max(var(z) − 1, 0.25).
pub fn default_init(z: &[f64]) -> TwoGroupParams {
    let (mean, var) = mean_var(z);
    TwoGroupParams {
        pi: 0.2,
        b: mean,
        tau_sq: (var - 1.0).max(0.25),
    }
}

fn check_data(z: &[f64]) -> Result<()> {
    if z.len() < 2 {
        return Err(Error::Argument(format!(
            "EM needs at least 2 statistics, got {}",
            z.len()
        )));
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::Argument(format!("z-score {} is not finite", i + 1)));
    }
    Ok(())
}

/// One E step followed by one M step.
fn em_step(z: &[f64], p: &TwoGroupParams, mode: PiMode) -> TwoGroupParams {
    let (mut sr, mut srz) = (0.0, 0.0);
    let r: Vec<f64> = z.iter().map(|&zi| non_null_posterior(zi, p)).collect();
    for (&ri, &zi) in r.iter().zip(z) {
        sr += ri;
        srz += ri * zi;
    }
    let pi = match mode {
        PiMode::Free => sr / z.len() as f64,
        PiMode::Fixed(v) => v,
    };
    if sr <= 0.0 {
        return TwoGroupParams { pi, ..*p };
    }
    let b = srz / sr;
    let ss: f64 = r.iter().zip(z).map(|(&ri, &zi)| ri * (zi - b) * (zi - b)).sum();
    TwoGroupParams {
        pi,
        b,
        tau_sq: (ss / sr - 1.0).max(0.0),
    }
}

fn run_em(z: &[f64], init: TwoGroupParams, mode: PiMode, opts: &EmOptions) -> Result<EmFit> {
    check_data(z)?;
    init.validate()?;
    let mut params = init;
    if let PiMode::Fixed(pi) = mode {
        params.pi = pi;
    }
    let mut loglik = observed_loglik(z, &params);
    let mut trace = vec![EmState {
        iteration: 0,
        params,
        loglik,
        converged: false,
        collapsed: false,
        pi_mode: mode,
    }];
    for it in 1..=opts.max_iter {
        let next = em_step(z, &params, mode);
        let ll = observed_loglik(z, &next);
        if !ll.is_finite() {
            return Err(Error::Numerical(format!(
                "EM log-likelihood became {ll} at iteration {it}"
            )));
        }
        let rel = (ll - loglik).abs() / loglik.abs().max(f64::MIN_POSITIVE);
        let collapsed = mode == PiMode::Free && (next.pi <= COLLAPSE_TOL || next.pi >= 1.0 - COLLAPSE_TOL);
        let converged = rel < opts.tol;
        params = next;
        loglik = ll;
        trace.push(EmState {
            iteration: it,
            params,
            loglik,
            converged,
            collapsed,
            pi_mode: mode,
        });
        if converged || collapsed {
            break;
        }
    }
    Ok(EmFit { trace })
}

/// EM over (π, b, τ²).
pub fn em_fit_full(z: &[f64], init: TwoGroupParams, opts: &EmOptions) -> Result<EmFit> {
    if !(init.pi > 0.0 && init.pi < 1.0) {
        return Err(Error::Argument(format!("initial pi = {} must lie in (0, 1)", init.pi)));
    }
    run_em(z, init, PiMode::Free, opts)
}

/// EM over (b, τ²) with π held at `pi_hat`.
pub fn em_fit_plugin(z: &[f64], pi_hat: f64, init: TwoGroupParams, opts: &EmOptions) -> Result<EmFit> {
    if !(pi_hat > 0.0 && pi_hat < 1.0) {
        return Err(Error::Argument(format!("plug-in pi = {pi_hat} must lie in (0, 1)")));
    }
    run_em(z, init, PiMode::Fixed(pi_hat), opts)
}

/// EM from `init` plus `restarts` randomly perturbed starts; returns the fit
/// with the highest final log-likelihood (earliest start wins ties).
pub fn em_fit_multistart<R: Rng + ?Sized>(
    z: &[f64],
    mode: PiMode,
    init: Option<TwoGroupParams>,
    restarts: usize,
    opts: &EmOptions,
    rng: &mut R,
) -> Result<EmFit> {
    check_data(z)?;
    let base = init.unwrap_or_else(|| default_init(z));
    let (mean, var) = mean_var(z);
    let sd = var.sqrt();
    let seed: u64 = rng.random();
    let mut starts = vec![base];
    for r in 0..restarts {
        let mut g = stream_rng(derive_seed(seed, 0xE4), r as u64);
        starts.push(TwoGroupParams {
            pi: g.random_range(0.05..0.5),
            b: mean + sd * g.random_range(-1.0..1.0),
            tau_sq: g.random_range(0.25..(2.0 * (var - 1.0)).max(1.0)),
        });
    }
    let fits = starts
        .into_par_iter()
        .map(|s| match mode {
            PiMode::Free => em_fit_full(z, s, opts),
            PiMode::Fixed(pi) => em_fit_plugin(z, pi, s, opts),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, f) in fits.iter().enumerate() {
        if f.loglik() > fits[best].loglik() {
            best = i;
        }
    }
    Ok(fits.into_iter().nth(best).expect("at least one start"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covstruct::{build_covariance, CovarianceKind, CovarianceSpec};
    use crate::rng::stream_rng;
    use crate::twogroup::sample_mixture;

    fn cov(kind: CovarianceKind, k: usize) -> CovarianceMatrix {
        build_covariance(&CovarianceSpec::new(kind, k)).unwrap()
    }

    #[test]
    fn stride_subsets() {
        let s = cov(CovarianceKind::Ar1 { rho: 0.8 }, 4000);
        let idx = select_subset(&s, &SubsetSpec::Stride { step: 4, offset: 2 }).unwrap();
        assert_eq!(idx.len(), 1000);
        assert_eq!((idx[0], idx[1], *idx.last().unwrap()), (2, 6, 3998));
        let s = cov(CovarianceKind::Banded1 { rho: 0.5 }, 2000);
        let idx = select_subset(&s, &SubsetSpec::Stride { step: 2, offset: 2 }).unwrap();
        assert_eq!(idx, (1..=1000).map(|i| 2 * i).collect::<Vec<_>>());
        assert!(select_subset(&s, &SubsetSpec::Stride { step: 1, offset: 2001 }).is_err());
    }

    #[test]
    fn corr_subset() {
        let id = CovarianceMatrix::identity(50);
        let idx = select_subset(&id, &SubsetSpec::CorrThreshold { eps: 0.01 }).unwrap();
        assert_eq!(idx, (1..=50).collect::<Vec<_>>());

        let s = cov(CovarianceKind::Ar1 { rho: 0.8 }, 300);
        let idx = select_subset(&s, &SubsetSpec::CorrThreshold { eps: 0.05 }).unwrap();
        // 0.8^13 = 0.055 > 0.05 >= 0.8^14
        assert_eq!(idx[1] - idx[0], 14);
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                assert!(s.get(i - 1, j - 1).abs() <= 0.05);
            }
        }
        let e = cov(CovarianceKind::Equicorrelated { rho: 0.3 }, 20);
        assert_eq!(
            select_subset(&e, &SubsetSpec::CorrThreshold { eps: 0.05 }).unwrap(),
            vec![1]
        );
    }

    #[test]
    fn subset_parsing() {
        assert_eq!(
            "stride:4:2".parse::<SubsetSpec>().unwrap(),
            SubsetSpec::Stride { step: 4, offset: 2 }
        );
        assert_eq!(
            "corr:0.05".parse::<SubsetSpec>().unwrap(),
            SubsetSpec::CorrThreshold { eps: 0.05 }
        );
        assert!("stride:0:1".parse::<SubsetSpec>().is_err());
        assert!("stride:2".parse::<SubsetSpec>().is_err());
        let s = SubsetSpec::Stride { step: 3, offset: 1 };
        assert_eq!(s.to_string().parse::<SubsetSpec>().unwrap(), s);
    }

    #[test]
    fn loglik_basics() {
        let p = TwoGroupParams::new(0.0, 1.0, 1.0).unwrap();
        assert!((observed_loglik(&[0.0], &p) + 0.918_938_5).abs() < 1e-7);
        let q = TwoGroupParams::new(0.3, 0.5, 2.0).unwrap();
        let (a, b) = ([0.1, -2.0, 3.0], [0.7, 1.1]);
        let all = [0.1, -2.0, 3.0, 0.7, 1.1];
        assert!((observed_loglik(&all, &q) - observed_loglik(&a, &q) - observed_loglik(&b, &q)).abs() < 1e-12);
    }

    #[test]
    fn zero_data_fixed_point() {
        let z = vec![0.0; 10];
        let init = TwoGroupParams::new(0.5, 0.0, 0.0).unwrap();
        let fit = em_fit_full(&z, init, &EmOptions::default()).unwrap();
        assert_eq!(fit.params(), init);
        assert!(fit.converged());
        let fit = em_fit_plugin(&z, 0.5, init, &EmOptions::default()).unwrap();
        assert_eq!(fit.params(), init);
    }

    #[test]
    fn single_step_matches_hand_transcription() {
        let z = [-0.4, 0.3, 2.5, -3.1, 1.2];
        let (pi0, b0, t0) = (0.3, 0.5, 2.0);
        let init = TwoGroupParams::new(pi0, b0, t0).unwrap();
        let fit = em_fit_full(&z, init, &EmOptions { tol: 0.0, max_iter: 1 }).unwrap();
        assert_eq!(fit.trace.len(), 2);

        let phi =
            |x: f64, m: f64, v: f64| (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let r: Vec<f64> = z
            .iter()
            .map(|&x| {
                let a = pi0 * phi(x, b0, 1.0 + t0);
                a / (a + (1.0 - pi0) * phi(x, 0.0, 1.0))
            })
            .collect();
        let sr: f64 = r.iter().sum();
        let pi1 = sr / 5.0;
        let b1 = r.iter().zip(&z).map(|(r, z)| r * z).sum::<f64>() / sr;
        let t1 = (r.iter().zip(&z).map(|(r, z)| r * (z - b1).powi(2)).sum::<f64>() / sr - 1.0).max(0.0);
        let got = fit.params();
        assert!((got.pi - pi1).abs() < 1e-14);
        assert!((got.b - b1).abs() < 1e-13);
        assert!((got.tau_sq - t1).abs() < 1e-13);
    }

    #[test]
    fn tau_clamps_at_zero() {
        // data tighter than the null: τ² would go negative without the clamp
        let z: Vec<f64> = (0..200).map(|i| ((i as f64) * 0.37).sin() * 0.5).collect();
        let init = TwoGroupParams::new(0.4, 0.0, 1.0).unwrap();
        let fit = em_fit_full(&z, init, &EmOptions::default()).unwrap();
        assert!(fit.trace.iter().all(|s| s.params.tau_sq >= 0.0));
        assert_eq!(fit.trace[1].params.tau_sq, 0.0);
    }

    #[test]
    fn argument_errors() {
        let init = TwoGroupParams::new(0.2, 0.0, 1.0).unwrap();
        assert!(em_fit_full(&[1.0], init, &EmOptions::default()).is_err());
        assert!(em_fit_full(&[1.0, f64::NAN], init, &EmOptions::default()).is_err());
        assert!(em_fit_plugin(&[1.0, 2.0], 1.0, init, &EmOptions::default()).is_err());
        assert!(em_fit_plugin(&[1.0, 2.0], 0.0, init, &EmOptions::default()).is_err());
        let bad = TwoGroupParams { pi: 0.0, ..init };
        assert!(em_fit_full(&[1.0, 2.0], bad, &EmOptions::default()).is_err());
    }

    #[test]
    fn plugin_keeps_pi_and_matches_free_fit() {
        let p = TwoGroupParams::new(0.3, 1.0, 3.0).unwrap();
        let (_, z) = sample_mixture(5000, &p, &mut stream_rng(11, 0)).unwrap();
        let z = z.into_inner();
        let init = default_init(&z);
        let opts = EmOptions {
            tol: 1e-14,
            max_iter: 20_000,
        };
        let free = em_fit_full(&z, init, &opts).unwrap();
        let plug = em_fit_plugin(&z, free.params().pi, init, &opts).unwrap();
        assert!(plug.trace.iter().all(|s| s.params.pi == free.params().pi));
        assert!((plug.params().b - free.params().b).abs() < 1e-6);
        assert!((plug.params().tau_sq - free.params().tau_sq).abs() < 1e-6);
    }

    #[test]
    fn multistart_is_deterministic_and_not_worse() {
        let p = TwoGroupParams::new(0.2, -1.0, 2.0).unwrap();
        let (_, z) = sample_mixture(2000, &p, &mut stream_rng(3, 0)).unwrap();
        let opts = EmOptions::default();
        let a = em_fit_multistart(z.as_slice(), PiMode::Free, None, 5, &opts, &mut stream_rng(9, 0)).unwrap();
        let b = em_fit_multistart(z.as_slice(), PiMode::Free, None, 5, &opts, &mut stream_rng(9, 0)).unwrap();
        assert_eq!(a, b);
        let single = em_fit_full(z.as_slice(), default_init(z.as_slice()), &opts).unwrap();
        assert!(a.loglik() >= single.loglik() - 1e-9);
    }
}
