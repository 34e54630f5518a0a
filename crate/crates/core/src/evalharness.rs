//! Replicated simulation experiments and their error-rate summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covstruct::{build_covariance, CovarianceKind, CovarianceMatrix, CovarianceSpec};
use crate::error::{Error, Result};
use crate::estimate::SubsetSpec;
use crate::locfdr::{compute_locfdr, LocFdrOptions, LocFdrVector};
use crate::pipeline::{fit_parameters, EstimationConfig, FitMethod};
use crate::procedures::{adaptive_bh, bh, sun_cai, tn_rule, z_to_pvalue, RejectionSet};
use crate::rng::{derive_seed, stream_rng};
use crate::threshold::{mc_threshold, CalibrationSampling};
use crate::twogroup::{marginal_locfdr, sample_states, sample_zscores, HypothesisStates, TwoGroupParams};

const TAG_REPLICATE: u64 = 0x5245_504c;
const TAG_CALIBRATE: u64 = 0x4341_4c42;
const TAG_BOOT: u64 = 0x424f_4f54;
const TAG_THRESHOLD: u64 = 0x5448_5253;

/// Counts for one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    /// False rejections.
    pub v: usize,
    /// All rejections.
    pub r: usize,
    /// True rejections.
    pub tp: usize,
    pub replicate_seed: u64,
}

impl ReplicateOutcome {
    /// V / max(R, 1).
    pub fn fdp(&self) -> f64 {
        self.v as f64 / self.r.max(1) as f64
    }
}

pub fn evaluate_replicate(d: &RejectionSet, h: &HypothesisStates, replicate_seed: u64) -> Result<ReplicateOutcome> {
    if d.k != h.len() {
        return Err(Error::Argument(format!(
            "rejection set over {} hypotheses, states for {}",
            d.k,
            h.len()
        )));
    }
    let tp = d.rejected.iter().filter(|&&i| h.as_slice()[i - 1]).count();
    Ok(ReplicateOutcome {
        v: d.len() - tp,
        r: d.len(),
        tp,
        replicate_seed,
    })
}

/// Error rates over replicates with bootstrap standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// ΣV / ΣR; `None` when nothing was ever rejected.
    pub mfdr: Option<f64>,
    /// Mean of V / max(R, 1).
    pub fdr: f64,
    pub tp_mean: f64,
    pub r_mean: f64,
    pub se_mfdr: f64,
    pub se_fdr: f64,
    pub se_tp: f64,
    /// Sample standard deviation of the per-replicate FDP.
    pub fdp_sd: f64,
    pub n_replicates: usize,
}

fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 || xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn summary(o: &[ReplicateOutcome]) -> (Option<f64>, f64, f64) {
    let n = o.len() as f64;
    let (sv, sr) = o.iter().fold((0usize, 0usize), |(a, b), x| (a + x.v, b + x.r));
    let mfdr = (sr > 0).then(|| sv as f64 / sr as f64);
    let fdr = o.iter().map(ReplicateOutcome::fdp).sum::<f64>() / n;
    let tp = o.iter().map(|x| x.tp as f64).sum::<f64>() / n;
    (mfdr, fdr, tp)
}

/// Summarizes outcomes; standard errors from `boot` resamples of whole replicates.
pub fn aggregate<R: Rng + ?Sized>(outcomes: &[ReplicateOutcome], boot: usize, rng: &mut R) -> Result<ErrorReport> {
    if outcomes.is_empty() {
        return Err(Error::Argument("no replicate outcomes to aggregate".into()));
    }
    let n = outcomes.len();
    let (mfdr, fdr, tp_mean) = summary(outcomes);
    let (mut bm, mut bf, mut bt) = (Vec::new(), Vec::with_capacity(boot), Vec::with_capacity(boot));
    let mut sample = Vec::with_capacity(n);
    for _ in 0..boot {
        sample.clear();
        sample.extend((0..n).map(|_| outcomes[rng.random_range(0..n)]));
        let (m, f, t) = summary(&sample);
        if let Some(m) = m {
            bm.push(m);
        }
        bf.push(f);
        bt.push(t);
    }
    let fdps: Vec<f64> = outcomes.iter().map(ReplicateOutcome::fdp).collect();
    Ok(ErrorReport {
        mfdr,
        fdr,
        tp_mean,
        r_mean: outcomes.iter().map(|x| x.r as f64).sum::<f64>() / n as f64,
        se_mfdr: sd(&bm),
        se_fdr: sd(&bf),
        se_tp: sd(&bt),
        fdp_sd: sd(&fdps),
        n_replicates: n,
    })
}

/// A rule evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    /// Fixed cutoff on `T_{i,N}`, once per half-width in the config.
    Tn,
    Bh,
    Abh,
    SunCai,
}

impl FromStr for Procedure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tn" => Ok(Procedure::Tn),
            "bh" => Ok(Procedure::Bh),
            "abh" => Ok(Procedure::Abh),
            "sc" | "suncai" | "sun_cai" => Ok(Procedure::SunCai),
            other => Err(Error::Parse(format!("unknown procedure `{other}`"))),
        }
    }
}

impl Procedure {
    fn key(&self) -> &'static str {
        match self {
            Procedure::Tn => "tn",
            Procedure::Bh => "bh",
            Procedure::Abh => "abh",
            Procedure::SunCai => "sc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// True parameters; one pre-calibrated cutoff per half-width.
    Oracle,
    /// Parameters estimated and cutoffs calibrated in every replicate.
    DataDriven,
}

/// Everything that defines an experiment. See [`ExperimentConfig::parse`]
/// for the text format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub covariance: CovarianceKind,
    pub k: usize,
    pub params: TwoGroupParams,
    pub mode: Mode,
    pub procedures: Vec<Procedure>,
    pub half_widths: Vec<usize>,
    pub alpha: f64,
    pub replicates: usize,
    /// Calibration replicates per cutoff.
    pub calibration_b: usize,
    pub calibration_sampling: CalibrationSampling,
    pub subset: SubsetSpec,
    /// `Full` or `Plugin`; ignored in oracle mode.
    pub fit: FitMethod,
    pub restarts: usize,
    pub seed: u64,
    pub bootstrap: usize,
}

impl ExperimentConfig {
    pub fn new(name: &str, covariance: CovarianceKind, k: usize, params: TwoGroupParams) -> Self {
        ExperimentConfig {
            name: name.into(),
            covariance,
            k,
            params,
            mode: Mode::Oracle,
            procedures: vec![Procedure::Tn, Procedure::Bh, Procedure::Abh, Procedure::SunCai],
            half_widths: vec![0, 1, 2],
            alpha: 0.05,
            replicates: 500,
            calibration_b: 500,
            calibration_sampling: CalibrationSampling::Joint,
            subset: SubsetSpec::default(),
            fit: FitMethod::Full,
            restarts: 5,
            seed: 1,
            bootstrap: 1000,
        }
    }

    /// Parses `key = value` lines (`#` starts a comment).
    ///
    /// Keys: `name`, `covariance` (e.g. `ar1:0.8`), `k`, `pi`, `b`, `tau2`
    /// (or `tau`), `mode` (`oracle` | `data-driven`), `procedures`
    /// (comma list of `tn`, `bh`, `abh`, `sc`), `n` (comma list), `alpha`,
    /// `replicates`, `calibration_b`, `calibration_sampling`
    /// (`independent` | `joint`), `subset`, `em` (`full` | `plugin:PI`),
    /// `restarts`, `seed`, `bootstrap`. Sampling defaults to `joint` in
    /// oracle mode and `independent` in data-driven mode.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", n + 1)))?;
            if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key `{}`", n + 1, k.trim())));
            }
        }
        let take = |kv: &mut BTreeMap<String, String>, key: &str| kv.remove(key);
        fn need<T: FromStr>(v: Option<String>, key: &str) -> Result<T> {
            let v = v.ok_or_else(|| Error::Parse(format!("missing key `{key}`")))?;
            v.parse()
                .map_err(|_| Error::Parse(format!("key `{key}`: bad value `{v}`")))
        }
        fn opt<T: FromStr>(v: Option<String>, key: &str, default: T) -> Result<T> {
            match v {
                Some(_) => need(v, key),
                None => Ok(default),
            }
        }
        let list = |v: String| -> Vec<String> {
            v.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        };

        let covariance: CovarianceKind = take(&mut kv, "covariance")
            .ok_or_else(|| Error::Parse("missing key `covariance`".into()))?
            .parse()?;
        let k: usize = need(take(&mut kv, "k"), "k")?;
        let pi: f64 = need(take(&mut kv, "pi"), "pi")?;
        let b: f64 = need(take(&mut kv, "b"), "b")?;
        let tau_sq = match (take(&mut kv, "tau2"), take(&mut kv, "tau")) {
            (Some(t2), None) => need(Some(t2), "tau2")?,
            (None, Some(t)) => need::<f64>(Some(t), "tau")?.powi(2),
            (None, None) => return Err(Error::Parse("missing key `tau2`".into())),
            (Some(_), Some(_)) => return Err(Error::Parse("give only one of `tau2` and `tau`".into())),
        };
        let name = take(&mut kv, "name").unwrap_or_else(|| "experiment".into());
        let mut c = ExperimentConfig::new(&name, covariance, k, TwoGroupParams::new(pi, b, tau_sq)?);
        if let Some(m) = take(&mut kv, "mode") {
            c.mode = match m.to_ascii_lowercase().as_str() {
                "oracle" => Mode::Oracle,
                "data-driven" | "data_driven" | "datadriven" => Mode::DataDriven,
                other => return Err(Error::Parse(format!("unknown mode `{other}`"))),
            };
        }
        if let Some(p) = take(&mut kv, "procedures") {
            c.procedures = list(p).iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        if let Some(n) = take(&mut kv, "n") {
            c.half_widths = list(n)
                .iter()
                .map(|s| s.parse().map_err(|_| Error::Parse(format!("key `n`: bad value `{s}`"))))
                .collect::<Result<_>>()?;
        }
        c.alpha = opt(take(&mut kv, "alpha"), "alpha", c.alpha)?;
        c.replicates = opt(take(&mut kv, "replicates"), "replicates", c.replicates)?;
        c.calibration_b = opt(take(&mut kv, "calibration_b"), "calibration_b", c.calibration_b)?;
        let default_sampling = match c.mode {
            Mode::Oracle => CalibrationSampling::Joint,
            Mode::DataDriven => CalibrationSampling::Independent,
        };
        c.calibration_sampling = opt(
            take(&mut kv, "calibration_sampling"),
            "calibration_sampling",
            default_sampling,
        )?;
        c.subset = opt(take(&mut kv, "subset"), "subset", c.subset)?;
        c.fit = opt(take(&mut kv, "em"), "em", c.fit)?;
        c.restarts = opt(take(&mut kv, "restarts"), "restarts", c.restarts)?;
        c.seed = opt(take(&mut kv, "seed"), "seed", c.seed)?;
        c.bootstrap = opt(take(&mut kv, "bootstrap"), "bootstrap", c.bootstrap)?;
        if let Some(extra) = kv.keys().next() {
            return Err(Error::Parse(format!("unknown key `{extra}`")));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path)?).map_err(|e| e.context(format!("reading {}", path.display())))
    }

    /// The config in the format accepted by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> Result<String> {
        if matches!(self.covariance, CovarianceKind::Explicit { .. }) {
            return Err(Error::Argument("explicit covariances have no text form".into()));
        }
        let mode = match self.mode {
            Mode::Oracle => "oracle",
            Mode::DataDriven => "data-driven",
        };
        let join = |v: Vec<String>| v.join(",");
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "covariance = {}", self.covariance);
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "pi = {}", self.params.pi);
        let _ = writeln!(s, "b = {}", self.params.b);
        let _ = writeln!(s, "tau2 = {}", self.params.tau_sq);
        let _ = writeln!(s, "mode = {mode}");
        let _ = writeln!(
            s,
            "procedures = {}",
            join(self.procedures.iter().map(|p| p.key().to_string()).collect())
        );
        let _ = writeln!(
            s,
            "n = {}",
            join(self.half_widths.iter().map(|n| n.to_string()).collect())
        );
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "replicates = {}", self.replicates);
        let _ = writeln!(s, "calibration_b = {}", self.calibration_b);
        let _ = writeln!(s, "calibration_sampling = {}", self.calibration_sampling);
        let _ = writeln!(s, "subset = {}", self.subset);
        let _ = writeln!(s, "em = {}", self.fit);
        let _ = writeln!(s, "restarts = {}", self.restarts);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "bootstrap = {}", self.bootstrap);
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        CovarianceSpec::new(self.covariance.clone(), self.k).validate()?;
        self.params.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Argument(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if self.replicates == 0 || self.calibration_b == 0 {
            return Err(Error::Argument("replicates and calibration_b must be positive".into()));
        }
        if self.procedures.is_empty() {
            return Err(Error::Argument("no procedures requested".into()));
        }
        if self.procedures.contains(&Procedure::Tn) && self.half_widths.is_empty() {
            return Err(Error::Argument("the tn procedure needs at least one half-width".into()));
        }
        if self.mode == Mode::DataDriven && matches!(self.fit, FitMethod::Known { .. }) {
            return Err(Error::Argument(
                "data-driven mode estimates the parameters; use em = full or plugin:PI".into(),
            ));
        }
        Ok(())
    }
}

/// One column of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnReport {
    /// `T0`, `T1`, ..., `BH`, `ABH`, `SC`.
    pub label: String,
    pub procedure: Procedure,
    pub half_width: Option<usize>,
    /// Cutoff used (oracle) or its mean over replicates (data-driven).
    pub cutoff: Option<f64>,
    pub cutoff_se: Option<f64>,
    pub report: ErrorReport,
    pub outcomes: Vec<ReplicateOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub columns: Vec<ColumnReport>,
}

impl ExperimentReport {
    pub fn column(&self, label: &str) -> Option<&ColumnReport> {
        self.columns.iter().find(|c| c.label == label)
    }

    /// Wide table: one row per metric, an estimate and s.e. column per rule.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
        let mut s = String::from("metric");
        for c in &self.columns {
            let _ = write!(s, ",{0},{0}_se", c.label);
        }
        s.push('\n');
        type Getter = fn(&ColumnReport) -> (Option<f64>, Option<f64>);
        let rows: [(&str, Getter); 5] = [
            ("mFDR", |c| (c.report.mfdr, Some(c.report.se_mfdr))),
            ("FDR", |c| (Some(c.report.fdr), Some(c.report.se_fdr))),
            ("TP", |c| (Some(c.report.tp_mean), Some(c.report.se_tp))),
            ("Cutoff", |c| (c.cutoff, c.cutoff_se)),
            ("FDP_sd", |c| (Some(c.report.fdp_sd), None)),
        ];
        for (name, get) in rows {
            s.push_str(name);
            for c in &self.columns {
                let (v, se) = get(c);
                let _ = write!(s, ",{},{}", fmt(v), fmt(se));
            }
            s.push('\n');
        }
        s
    }
}

/// Run metadata written next to the table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub config_text: Option<String>,
    pub replicate_seeds: Vec<u64>,
    pub wall_time_s: f64,
}

pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    derive_seed(seed ^ TAG_REPLICATE, r as u64)
}

struct ReplicateResult {
    /// Per column, in column order.
    outcomes: Vec<ReplicateOutcome>,
    /// Per column, cutoff used in this replicate.
    cutoffs: Vec<Option<f64>>,
}

fn columns_of(config: &ExperimentConfig) -> Vec<(String, Procedure, Option<usize>)> {
    let mut cols = Vec::new();
    for &p in &config.procedures {
        match p {
            Procedure::Tn => {
                for &n in &config.half_widths {
                    cols.push((format!("T{n}"), p, Some(n)));
                }
            }
            Procedure::Bh => cols.push(("BH".into(), p, None)),
            Procedure::Abh => cols.push(("ABH".into(), p, None)),
            Procedure::SunCai => cols.push(("SC".into(), p, None)),
        }
    }
    cols
}

/// Oracle cutoffs, one per half-width.
pub fn calibrate_oracle_cutoffs(config: &ExperimentConfig, sigma: &CovarianceMatrix) -> Result<BTreeMap<usize, f64>> {
    let mut out = BTreeMap::new();
    for &n in &config.half_widths {
        let mut rng = stream_rng(derive_seed(config.seed ^ TAG_CALIBRATE, n as u64), 0);
        let est = mc_threshold(
            &config.params,
            sigma,
            n,
            config.alpha,
            config.calibration_b,
            config.calibration_sampling,
            &mut rng,
        )
        .map_err(|e| e.context(format!("calibrating N = {n}")))?;
        out.insert(n, est.t_hat);
    }
    Ok(out)
}

fn run_replicate(
    config: &ExperimentConfig,
    sigma: &CovarianceMatrix,
    cols: &[(String, Procedure, Option<usize>)],
    oracle_cutoffs: &BTreeMap<usize, f64>,
    seed: u64,
) -> Result<ReplicateResult> {
    let mut rng = stream_rng(seed, 0);
    let h = sample_states(config.k, config.params.pi, &mut rng)?;
    let z = sample_zscores(&h, &config.params, sigma, &mut rng)?.into_inner();

    let params = match config.mode {
        Mode::Oracle => config.params,
        Mode::DataDriven => {
            let est = EstimationConfig {
                subset: config.subset,
                method: config.fit,
                restarts: config.restarts,
                ..Default::default()
            };
            fit_parameters(&z, sigma, &est, derive_seed(seed, 1))?.params
        }
    };
    let opts = LocFdrOptions::default();
    let mut outcomes = Vec::with_capacity(cols.len());
    let mut cutoffs = Vec::with_capacity(cols.len());
    let mut pvalues: Option<Vec<f64>> = None;
    let mut t0: Option<LocFdrVector> = None;
    for (_, proc_, n) in cols {
        let (set, cutoff) = match proc_ {
            Procedure::Tn => {
                let n = n.expect("tn columns carry a half-width");
                let t = compute_locfdr(&z, sigma, &params, n, &opts)?;
                let cut = match config.mode {
                    Mode::Oracle => oracle_cutoffs[&n],
                    Mode::DataDriven => {
                        let mut g = stream_rng(derive_seed(seed ^ TAG_THRESHOLD, n as u64), 0);
                        mc_threshold(
                            &params,
                            sigma,
                            n,
                            config.alpha,
                            config.calibration_b,
                            config.calibration_sampling,
                            &mut g,
                        )?
                        .t_hat
                    }
                };
                (tn_rule(&t, cut), Some(cut))
            }
            Procedure::Bh => {
                let p = pvalues.get_or_insert_with(|| z_to_pvalue(&z));
                (bh(p, config.alpha)?, None)
            }
            Procedure::Abh => {
                let p = pvalues.get_or_insert_with(|| z_to_pvalue(&z));
                (adaptive_bh(p, config.alpha, params.pi.min(1.0 - 1e-12))?, None)
            }
            Procedure::SunCai => {
                let t = t0.get_or_insert_with(|| marginal_locfdr(&z, &params));
                (sun_cai(t, config.alpha)?, None)
            }
        };
        outcomes.push(evaluate_replicate(&set, &h, seed)?);
        cutoffs.push(cutoff);
    }
    Ok(ReplicateResult { outcomes, cutoffs })
}

/// Runs every replicate of `config` and aggregates per rule.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let sigma = build_covariance(&CovarianceSpec::new(config.covariance.clone(), config.k))?;
    run_experiment_with(config, &sigma)
}

/// As [`run_experiment`] with a prebuilt Σ (which must match `config.k`).
pub fn run_experiment_with(config: &ExperimentConfig, sigma: &CovarianceMatrix) -> Result<ExperimentReport> {
    config.validate()?;
    if sigma.dim() != config.k {
        return Err(Error::Argument(format!(
            "config has K = {}, covariance is {}",
            config.k,
            sigma.dim()
        )));
    }
    sigma.cholesky()?;
    let cols = columns_of(config);
    let oracle_cutoffs = match config.mode {
        Mode::Oracle if cols.iter().any(|c| c.1 == Procedure::Tn) => calibrate_oracle_cutoffs(config, sigma)?,
        _ => BTreeMap::new(),
    };
    let results = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = replicate_seed(config.seed, r);
            run_replicate(config, sigma, &cols, &oracle_cutoffs, seed)
                .map_err(|e| e.context(format!("replicate {} (seed {seed})", r + 1)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut columns = Vec::with_capacity(cols.len());
    for (j, (label, procedure, n)) in cols.into_iter().enumerate() {
        let outcomes: Vec<ReplicateOutcome> = results.iter().map(|r| r.outcomes[j]).collect();
        let mut rng = stream_rng(derive_seed(config.seed ^ TAG_BOOT, j as u64), 0);
        let report = aggregate(&outcomes, config.bootstrap, &mut rng)?;
        let cuts: Vec<f64> = results.iter().filter_map(|r| r.cutoffs[j]).collect();
        let (cutoff, cutoff_se) = if cuts.is_empty() {
            (None, None)
        } else {
            let m = cuts.iter().sum::<f64>() / cuts.len() as f64;
            (Some(m), Some(sd(&cuts) / (cuts.len() as f64).sqrt()))
        };
        columns.push(ColumnReport {
            label,
            procedure,
            half_width: n,
            cutoff,
            cutoff_se,
            report,
            outcomes,
        });
    }
    Ok(ExperimentReport {
        config: config.clone(),
        columns,
    })
}

/// Runs `config` and writes `<name>.csv` and `<name>.json` into `dir`.
pub fn run_and_write(config: &ExperimentConfig, dir: impl AsRef<Path>) -> Result<ExperimentReport> {
    let start = Instant::now();
    let report = run_experiment(config)?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{}.csv", config.name)), report.to_csv())?;
    let manifest = ExperimentManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        config_text: config.to_text().ok(),
        replicate_seeds: (0..config.replicates).map(|r| replicate_seed(config.seed, r)).collect(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    crate::pipeline::io::write_json(dir.join(format!("{}.json", config.name)), &manifest)?;
    Ok(report)
}

/// One simulated replicate and its `T_{·,N}` for N = 0..=n_max.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSweep {
    pub states: HypothesisStates,
    pub z: Vec<f64>,
    pub columns: Vec<LocFdrVector>,
}

impl WindowSweep {
    /// Long format `i,N,T`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,N,T\n");
        for col in &self.columns {
            for (i, t) in col.values().iter().enumerate() {
                let _ = writeln!(s, "{},{},{}", i + 1, col.half_width(), t);
            }
        }
        s
    }
}

pub fn window_sweep(params: &TwoGroupParams, sigma: &CovarianceMatrix, n_max: usize, seed: u64) -> Result<WindowSweep> {
    let mut rng = stream_rng(seed, 0);
    let states = sample_states(sigma.dim(), params.pi, &mut rng)?;
    let z = sample_zscores(&states, params, sigma, &mut rng)?.into_inner();
    let opts = LocFdrOptions {
        max_half_width: n_max.max(crate::locfdr::DEFAULT_MAX_HALF_WIDTH),
        ..Default::default()
    };
    let columns = (0..=n_max)
        .map(|n| compute_locfdr(&z, sigma, params, n, &opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(WindowSweep { states, z, columns })
}

/// Pearson correlation; `None` if either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}
