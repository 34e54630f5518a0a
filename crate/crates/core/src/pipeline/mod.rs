//! The data-driven procedure end to end: estimate (π, b, τ²) on a
//! sub-vector, compute `T_{i,N}` with the fitted values, calibrate the cutoff
//! by simulation, reject.

pub mod gwas;
pub mod io;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::covstruct::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::estimate::{em_fit_multistart, gather, select_subset, EmOptions, PiMode, SubsetSpec};
use crate::locfdr::{compute_locfdr, LocFdrOptions, LocFdrVector};
use crate::procedures::{tn_rule, RejectionSet};
use crate::rng::{derive_seed, stream_rng};
use crate::threshold::{mc_threshold, CalibrationSampling, ThresholdEstimate};
use crate::twogroup::TwoGroupParams;

pub use gwas::{gwas_from_design, gwas_from_summary, Design, GwasInput, Provenance, MAX_DESIGN_COLUMNS};

/// How the mixture parameters are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum FitMethod {
    /// EM over all three parameters.
    Full,
    /// EM over (b, τ²) with π fixed.
    Plugin { pi: f64 },
    /// No fitting; use these values.
    Known { params: TwoGroupParams },
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitMethod::Full => write!(f, "full"),
            FitMethod::Plugin { pi } => write!(f, "plugin:{pi}"),
            FitMethod::Known { params } => {
                write!(f, "known:{},{},{}", params.pi, params.b, params.tau_sq)
            }
        }
    }
}

/// Parses `full`, `plugin:PI` or `known:PI,B,TAU2`.
impl FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "full" {
            return Ok(FitMethod::Full);
        }
        if let Some(v) = s.strip_prefix("plugin:") {
            let pi = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("fit method `{s}`: bad pi")))?;
            return Ok(FitMethod::Plugin { pi });
        }
        if let Some(v) = s.strip_prefix("known:") {
            return Ok(FitMethod::Known {
                params: parse_params(v)?,
            });
        }
        Err(Error::Parse(format!(
            "fit method `{s}`: expected full, plugin:PI or known:PI,B,TAU2"
        )))
    }
}

/// Parses `PI,B,TAU2`.
pub fn parse_params(s: &str) -> Result<TwoGroupParams> {
    let v = s
        .split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("parameters `{s}`: bad number `{}`", x.trim())))
        })
        .collect::<Result<Vec<_>>>()?;
    match v.as_slice() {
        [pi, b, tau_sq] => TwoGroupParams::new(*pi, *b, *tau_sq),
        _ => Err(Error::Parse(format!("parameters `{s}`: expected PI,B,TAU2"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    pub subset: SubsetSpec,
    pub method: FitMethod,
    pub em: EmOptions,
    /// Random EM restarts on top of the default start.
    pub restarts: usize,
    pub init: Option<TwoGroupParams>,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            subset: SubsetSpec::default(),
            method: FitMethod::Full,
            em: EmOptions::default(),
            restarts: 5,
            init: None,
        }
    }
}

/// What the estimation step produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub params: TwoGroupParams,
    pub subset_size: usize,
    pub em_iterations: usize,
    pub em_converged: bool,
    pub em_collapsed: bool,
    pub loglik: Option<f64>,
}

/// Subset selection and EM.
pub fn fit_parameters(z: &[f64], sigma: &CovarianceMatrix, est: &EstimationConfig, seed: u64) -> Result<FitSummary> {
    if let FitMethod::Known { params } = est.method {
        params.validate()?;
        return Ok(FitSummary {
            params,
            subset_size: 0,
            em_iterations: 0,
            em_converged: true,
            em_collapsed: false,
            loglik: None,
        });
    }
    if z.len() != sigma.dim() {
        return Err(Error::Argument(format!(
            "{} statistics for a {k}x{k} covariance",
            z.len(),
            k = sigma.dim()
        )));
    }
    let idx = select_subset(sigma, &est.subset).map_err(|e| e.context("subset selection"))?;
    let zs = gather(z, &idx);
    let mode = match est.method {
        FitMethod::Plugin { pi } => PiMode::Fixed(pi),
        _ => PiMode::Free,
    };
    let mut rng = stream_rng(seed, 0);
    let fit =
        em_fit_multistart(&zs, mode, est.init, est.restarts, &est.em, &mut rng).map_err(|e| e.context("EM fit"))?;
    let last = fit.last();
    Ok(FitSummary {
        params: last.params,
        subset_size: idx.len(),
        em_iterations: last.iteration,
        em_converged: last.converged,
        em_collapsed: last.collapsed,
        loglik: Some(last.loglik),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub half_width: usize,
    pub alpha: f64,
    /// Calibration replicates.
    pub replicates: usize,
    pub sampling: CalibrationSampling,
    pub estimation: EstimationConfig,
    pub max_half_width: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            half_width: 1,
            alpha: 0.05,
            replicates: 50,
            sampling: CalibrationSampling::default(),
            estimation: EstimationConfig::default(),
            max_half_width: crate::locfdr::DEFAULT_MAX_HALF_WIDTH,
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub k: usize,
    pub config: PipelineConfig,
    pub fit: FitSummary,
    pub t_hat: f64,
    pub threshold_empty: bool,
    pub rejections: usize,
    pub locfdr_hash: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub fitted: TwoGroupParams,
    pub fit: FitSummary,
    pub t_hat: ThresholdEstimate,
    pub t: LocFdrVector,
    pub rejected: RejectionSet,
    pub manifest: RunManifest,
}

const STAGE_FIT: u64 = 1;
const STAGE_THRESHOLD: u64 = 2;

/// Runs subset selection, EM, `T_{i,N}`, cutoff calibration and rejection.
pub fn run_pipeline(z: &[f64], sigma: &CovarianceMatrix, config: &PipelineConfig, seed: u64) -> Result<PipelineResult> {
    let fit = fit_parameters(z, sigma, &config.estimation, derive_seed(seed, STAGE_FIT))?;
    run_with_fit(z, sigma, config, seed, fit)
}

/// The steps after estimation, with a given fit.
pub fn run_with_fit(
    z: &[f64],
    sigma: &CovarianceMatrix,
    config: &PipelineConfig,
    seed: u64,
    fit: FitSummary,
) -> Result<PipelineResult> {
    let params = fit.params;
    let opts = LocFdrOptions {
        max_half_width: config.max_half_width,
        ..Default::default()
    };
    let t = compute_locfdr(z, sigma, &params, config.half_width, &opts).map_err(|e| e.context("local fdr"))?;
    let mut rng = stream_rng(derive_seed(seed, STAGE_THRESHOLD), 0);
    let t_hat = mc_threshold(
        &params,
        sigma,
        config.half_width,
        config.alpha,
        config.replicates,
        config.sampling,
        &mut rng,
    )
    .map_err(|e| e.context("cutoff calibration"))?;
    let rejected = tn_rule(&t, t_hat.t_hat);
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        k: z.len(),
        config: *config,
        fit: fit.clone(),
        t_hat: t_hat.t_hat,
        threshold_empty: t_hat.empty_rejection,
        rejections: rejected.len(),
        locfdr_hash: t.params_hash(),
    };
    Ok(PipelineResult {
        fitted: params,
        fit,
        t_hat,
        t,
        rejected,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covstruct::{build_covariance, CovarianceKind, CovarianceSpec};
    use crate::threshold::quadrature_threshold_n0;
    use crate::twogroup::{sample_states, sample_zscores};

    fn data(kind: CovarianceKind, k: usize, p: &TwoGroupParams, seed: u64) -> (CovarianceMatrix, Vec<f64>) {
        let s = build_covariance(&CovarianceSpec::new(kind, k)).unwrap();
        let mut g = stream_rng(seed, 0);
        let h = sample_states(k, p.pi, &mut g).unwrap();
        let z = sample_zscores(&h, p, &s, &mut g).unwrap().into_inner();
        (s, z)
    }

    #[test]
    fn parse_methods() {
        assert_eq!("full".parse::<FitMethod>().unwrap(), FitMethod::Full);
        assert_eq!(
            "plugin:0.2".parse::<FitMethod>().unwrap(),
            FitMethod::Plugin { pi: 0.2 }
        );
        let k: FitMethod = "known:0.3,0,4".parse().unwrap();
        assert_eq!(k.to_string().parse::<FitMethod>().unwrap(), k);
        assert!("known:0.3,0".parse::<FitMethod>().is_err());
        assert!("em".parse::<FitMethod>().is_err());
    }

    #[test]
    fn rejected_is_threshold_set() {
        let p = TwoGroupParams::new(0.3, 0.0, 4.0).unwrap();
        let (s, z) = data(CovarianceKind::Ar1 { rho: 0.5 }, 400, &p, 1);
        let cfg = PipelineConfig {
            replicates: 10,
            ..Default::default()
        };
        let res = run_pipeline(&z, &s, &cfg, 7).unwrap();
        let expect: Vec<usize> = res
            .t
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &t)| t <= res.t_hat.t_hat)
            .map(|(i, _)| i + 1)
            .collect();
        assert_eq!(res.rejected.rejected, expect);
        assert!(res.fit.subset_size > 0);
        let again = run_pipeline(&z, &s, &cfg, res.manifest.seed).unwrap();
        assert_eq!(again, res);
    }

    #[test]
    fn tiny_alpha_rejects_nothing() {
        let p = TwoGroupParams::new(0.3, 0.0, 4.0).unwrap();
        let (s, z) = data(CovarianceKind::identity(), 100, &p, 2);
        let cfg = PipelineConfig {
            alpha: 1e-6,
            replicates: 5,
            half_width: 0,
            ..Default::default()
        };
        let res = run_pipeline(&z, &s, &cfg, 1).unwrap();
        assert!(res.rejected.is_empty());
        assert!(res.t_hat.empty_rejection);
    }

    #[test]
    fn known_params_on_identity_match_marginal_cutoff() {
        let p = TwoGroupParams::new(0.3, 0.0, 4.0).unwrap();
        let (s, z) = data(CovarianceKind::identity(), 1000, &p, 3);
        let cfg = PipelineConfig {
            half_width: 0,
            replicates: 400,
            estimation: EstimationConfig {
                subset: SubsetSpec::All,
                method: FitMethod::Known { params: p },
                ..Default::default()
            },
            ..Default::default()
        };
        let res = run_pipeline(&z, &s, &cfg, 5).unwrap();
        let q = quadrature_threshold_n0(&p, 0.05).unwrap();
        assert!((res.t_hat.t_hat - q.t_hat).abs() < 0.004);
        let direct = tn_rule(&res.t, q.t_hat);
        // only statistics between the two cutoffs can differ
        let between = res
            .t
            .values()
            .iter()
            .filter(|&&t| (t - q.t_hat) * (t - res.t_hat.t_hat) <= 0.0)
            .count();
        assert!(direct.len().abs_diff(res.rejected.len()) <= between);
    }

    #[test]
    fn step_errors_are_labelled() {
        let s = CovarianceMatrix::identity(3);
        let cfg = PipelineConfig {
            estimation: EstimationConfig {
                subset: SubsetSpec::Stride { step: 1, offset: 10 },
                ..Default::default()
            },
            ..Default::default()
        };
        let err = run_pipeline(&[0.1, 0.2, 0.3], &s, &cfg, 0).unwrap_err();
        assert!(err.to_string().starts_with("subset selection"), "{err}");
    }
}
