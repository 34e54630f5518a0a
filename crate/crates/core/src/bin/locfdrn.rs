use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use locfdrn::covstruct::io::{read_ld, write_banded};
use locfdrn::covstruct::{build_covariance, CovarianceKind, CovarianceMatrix, CovarianceSpec};
use locfdrn::error::{Error, Result};
use locfdrn::estimate::{EmOptions, SubsetSpec};
use locfdrn::evalharness::{run_and_write, ExperimentConfig};
use locfdrn::locfdr::{compute_locfdr, Engine, LocFdrOptions, DEFAULT_MAX_HALF_WIDTH};
use locfdrn::pipeline::io::{
    neg2log10, read_design_csv, read_summary_tsv, read_z_tsv, write_json, write_manhattan_csv, write_rejections_tsv,
    write_z_tsv,
};
use locfdrn::pipeline::{
    fit_parameters, gwas_from_design, gwas_from_summary, parse_params, run_pipeline, EstimationConfig, FitMethod,
    FitSummary, PipelineConfig,
};
use locfdrn::procedures::{adaptive_bh, bh, sun_cai, tn_rule, z_to_pvalue, RejectionSet};
use locfdrn::rng::{derive_seed, stream_rng};
use locfdrn::threshold::{mc_threshold, quadrature_threshold_n0, CalibrationSampling, ThresholdEstimate};
use locfdrn::twogroup::{marginal_locfdr, TwoGroupParams};

#[derive(Parser)]
#[command(name = "locfdrn", version, about = "Neighborhood local fdr testing under dependence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute T_{i,N} for every z-score.
    Locfdr(LocfdrArgs),
    /// Fit (pi, b, tau2) by EM on a weakly correlated subset.
    Fit(FitArgs),
    /// Calibrate the cutoff for the T_N rule.
    Threshold(ThresholdArgs),
    /// Run T_N, BH, ABH and Sun-Cai on the same data.
    Compare(CompareArgs),
    /// Fit, compute, calibrate and reject in one go.
    Run(RunArgs),
    /// Build z-scores and an LD file from summary statistics or a design.
    GwasPrep(GwasPrepArgs),
    /// Run a simulation study described by a config file.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct Inputs {
    /// z-score TSV (`id<TAB>z`).
    #[arg(long)]
    z: PathBuf,
    /// LD matrix, dense CSV or banded binary.
    #[arg(long)]
    ld: PathBuf,
}

impl Inputs {
    fn load(&self) -> Result<(Vec<String>, Vec<f64>, CovarianceMatrix)> {
        let (ids, z) = read_z_tsv(&self.z)?;
        let sigma = read_ld(&self.ld)?;
        if sigma.dim() != z.len() {
            return Err(Error::Argument(format!(
                "{} z-scores but the LD matrix is {d}x{d}",
                z.len(),
                d = sigma.dim()
            )));
        }
        Ok((ids, z, sigma))
    }
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long)]
    pi: f64,
    #[arg(long)]
    b: f64,
    #[arg(long)]
    tau2: f64,
}

impl ParamArgs {
    fn params(&self) -> Result<TwoGroupParams> {
        TwoGroupParams::new(self.pi, self.b, self.tau2)
    }
}

#[derive(Args)]
struct LocfdrArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long = "N", default_value_t = 1)]
    n: usize,
    #[arg(long, default_value = "fast")]
    engine: Engine,
    #[arg(long, default_value_t = DEFAULT_MAX_HALF_WIDTH)]
    max_n: usize,
    /// Output TSV (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstArgs {
    /// `stride:STEP:OFFSET`, `corr:EPS` or `all`.
    #[arg(long, default_value = "corr:0.05")]
    subset: SubsetSpec,
    /// Fix pi and fit only (b, tau2).
    #[arg(long)]
    pi_fixed: Option<f64>,
    /// Starting values `PI,B,TAU2`.
    #[arg(long)]
    init: Option<String>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
}

impl EstArgs {
    fn config(&self) -> Result<EstimationConfig> {
        Ok(EstimationConfig {
            subset: self.subset,
            method: match self.pi_fixed {
                Some(pi) => FitMethod::Plugin { pi },
                None => FitMethod::Full,
            },
            em: EmOptions {
                tol: self.tol,
                max_iter: self.max_iter,
            },
            restarts: self.restarts,
            init: self.init.as_deref().map(parse_params).transpose()?,
        })
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    est: EstArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write the fit as JSON.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ThresholdArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long = "N", default_value_t = 1)]
    n: usize,
    #[arg(long = "B", default_value_t = 50)]
    b_reps: usize,
    #[arg(long, default_value = "independent")]
    sampling: CalibrationSampling,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// LD matrix; otherwise `--cov` and `--k` describe Σ.
    #[arg(long)]
    ld: Option<PathBuf>,
    #[arg(long, default_value = "identity")]
    cov: CovarianceKind,
    #[arg(long, default_value_t = 1000)]
    k: usize,
    /// Closed-form marginal cutoff (N = 0 only) instead of simulation.
    #[arg(long)]
    quadrature: bool,
    /// Write the q-curve here instead of stdout.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long = "N", default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long = "B", default_value_t = 50)]
    b_reps: usize,
    #[arg(long, default_value = "independent")]
    sampling: CalibrationSampling,
    /// Known parameters `PI,B,TAU2`; fitted otherwise.
    #[arg(long)]
    params: Option<String>,
    #[command(flatten)]
    est: EstArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long = "N", default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long = "B", default_value_t = 50)]
    b_reps: usize,
    #[arg(long, default_value = "independent")]
    sampling: CalibrationSampling,
    #[command(flatten)]
    est: EstArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_HALF_WIDTH)]
    max_n: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GwasPrepArgs {
    /// Summary statistics TSV (`id<TAB>beta<TAB>se`); needs `--ld`.
    #[arg(long, conflicts_with = "design")]
    summary: Option<PathBuf>,
    #[arg(long, requires = "summary")]
    ld: Option<PathBuf>,
    /// Design CSV (`y,ID1,...`) for a small OLS fit.
    #[arg(long)]
    design: Option<PathBuf>,
    /// Mean-impute `NA` genotypes.
    #[arg(long)]
    impute: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_fit(fit: &FitSummary) {
    println!("pi = {}", fit.params.pi);
    println!("b = {}", fit.params.b);
    println!("tau2 = {}", fit.params.tau_sq);
    println!("subset_size = {}", fit.subset_size);
    println!("em_iterations = {}", fit.em_iterations);
    println!("em_converged = {}", fit.em_converged);
    println!("em_collapsed = {}", fit.em_collapsed);
    if let Some(l) = fit.loglik {
        println!("loglik = {l}");
    }
}

fn cmd_locfdr(a: LocfdrArgs) -> Result<()> {
    let (ids, z, sigma) = a.inputs.load()?;
    let opts = LocFdrOptions {
        engine: a.engine,
        max_half_width: a.max_n,
    };
    let t = compute_locfdr(&z, &sigma, &a.params.params()?, a.n, &opts)?;
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "id\tz\tT\tneg2log10T")?;
    for ((id, zi), ti) in ids.iter().zip(&z).zip(t.values()) {
        writeln!(w, "{id}\t{zi}\t{ti}\t{}", neg2log10(*ti))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let (_, z, sigma) = a.inputs.load()?;
    let fit = fit_parameters(&z, &sigma, &a.est.config()?, a.seed)?;
    print_fit(&fit);
    if let Some(p) = a.manifest {
        write_json(p, &fit)?;
    }
    Ok(())
}

fn cmd_threshold(a: ThresholdArgs) -> Result<()> {
    let params = a.params.params()?;
    let est: ThresholdEstimate = if a.quadrature {
        if a.n != 0 {
            return Err(Error::Argument("--quadrature only applies to N = 0".into()));
        }
        quadrature_threshold_n0(&params, a.alpha)?
    } else {
        let sigma = match &a.ld {
            Some(p) => read_ld(p)?,
            None => build_covariance(&CovarianceSpec::new(a.cov.clone(), a.k))?,
        };
        let mut rng = stream_rng(a.seed, 0);
        mc_threshold(&params, &sigma, a.n, a.alpha, a.b_reps, a.sampling, &mut rng)?
    };
    println!("t_hat = {}", est.t_hat);
    println!("alpha = {}", est.alpha);
    println!("N = {}", est.half_width);
    println!("replicates = {}", est.replicates);
    println!("method = {:?}", est.method);
    println!("empty_rejection = {}", est.empty_rejection);
    let mut w = output(a.curve.as_deref())?;
    writeln!(w, "t,q_hat")?;
    for (t, q) in &est.q_curve {
        writeln!(w, "{t},{q}")?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let (ids, z, sigma) = a.inputs.load()?;
    let params = match &a.params {
        Some(s) => parse_params(s)?,
        None => {
            let fit = fit_parameters(&z, &sigma, &a.est.config()?, derive_seed(a.seed, 1))?;
            print_fit(&fit);
            fit.params
        }
    };
    let t = compute_locfdr(&z, &sigma, &params, a.n, &LocFdrOptions::default())?;
    let mut rng = stream_rng(derive_seed(a.seed, 2), 0);
    let cut = mc_threshold(&params, &sigma, a.n, a.alpha, a.b_reps, a.sampling, &mut rng)?;
    let p = z_to_pvalue(&z);
    let sets: Vec<(String, RejectionSet)> = vec![
        (format!("T{}", a.n), tn_rule(&t, cut.t_hat)),
        ("SC".into(), sun_cai(&marginal_locfdr(&z, &params), a.alpha)?),
        ("BH".into(), bh(&p, a.alpha)?),
        ("ABH".into(), adaptive_bh(&p, a.alpha, params.pi.min(1.0 - 1e-12))?),
    ];
    fs::create_dir_all(&a.out)?;
    for (label, set) in &sets {
        let mut w = BufWriter::new(fs::File::create(a.out.join(format!("{label}.txt")))?);
        for &i in &set.rejected {
            writeln!(w, "{}", ids[i - 1])?;
        }
        w.flush()?;
    }
    let mut matrix = String::from("procedure");
    for (label, _) in &sets {
        matrix.push(',');
        matrix.push_str(label);
    }
    matrix.push('\n');
    for (label, a_set) in &sets {
        matrix.push_str(label);
        for (_, b_set) in &sets {
            matrix.push_str(&format!(",{}", a_set.common(b_set)));
        }
        matrix.push('\n');
    }
    fs::write(a.out.join("common.csv"), &matrix)?;
    println!("t_hat = {}", cut.t_hat);
    print!("{matrix}");
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let (ids, z, sigma) = a.inputs.load()?;
    let config = PipelineConfig {
        half_width: a.n,
        alpha: a.alpha,
        replicates: a.b_reps,
        sampling: a.sampling,
        estimation: a.est.config()?,
        max_half_width: a.max_n,
    };
    let res = run_pipeline(&z, &sigma, &config, a.seed)?;
    fs::create_dir_all(&a.out)?;
    write_rejections_tsv(
        a.out.join("rejections.tsv"),
        &ids,
        &z,
        res.t.values(),
        &res.rejected.mask(),
    )?;
    write_manhattan_csv(a.out.join("manhattan.csv"), res.t.values(), res.t_hat.t_hat)?;
    write_json(a.out.join("manifest.json"), &res.manifest)?;
    print_fit(&res.fit);
    println!("t_hat = {}", res.t_hat.t_hat);
    println!("rejections = {}", res.rejected.len());
    Ok(())
}

fn cmd_gwas_prep(a: GwasPrepArgs) -> Result<()> {
    let input = match (&a.summary, &a.ld, &a.design) {
        (Some(s), Some(ld), None) => {
            let (ids, beta, se) = read_summary_tsv(s)?;
            gwas_from_summary(&beta, &se, read_ld(ld)?, Some(ids))?
        }
        (None, None, Some(d)) => {
            let (y, x) = read_design_csv(d)?;
            gwas_from_design(&y, &x, a.impute)?
        }
        _ => return Err(Error::Argument("give either --summary with --ld, or --design".into())),
    };
    fs::create_dir_all(&a.out)?;
    write_z_tsv(a.out.join("z.tsv"), &input.ids, input.z.as_slice())?;
    write_banded(&input.sigma, None, a.out.join("ld.bin"))?;
    println!("K = {}", input.ids.len());
    println!("provenance = {:?}", input.provenance);
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> Result<()> {
    let config = ExperimentConfig::read(&a.config)?;
    let report = run_and_write(&config, &a.out)?;
    print!("{}", report.to_csv());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Locfdr(a) => cmd_locfdr(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Threshold(a) => cmd_threshold(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Run(a) => cmd_run(a),
        Command::GwasPrep(a) => cmd_gwas_prep(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
