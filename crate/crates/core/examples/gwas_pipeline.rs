//! Association pipeline on a small synthetic genotype panel: OLS z-scores
//! and their correlation from the design, then the data-driven rule.

use locfdrn::estimate::SubsetSpec;
use locfdrn::pipeline::{gwas_from_design, run_pipeline, Design, FitMethod, PipelineConfig};
use locfdrn::rng::stream_rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n, p) = (3000, 300);
    let mut rng = stream_rng(2, 0);

    // genotypes 0/1/2 from a latent AR(1) haplotype; NaN marks a missing call
    let mut data = vec![0.0; n * p];
    for r in 0..n {
        let mut latent: f64 = StandardNormal.sample(&mut rng);
        for c in 0..p {
            let e: f64 = StandardNormal.sample(&mut rng);
            latent = 0.6 * latent + 0.8 * e;
            let g = if latent > 0.8 {
                2.0
            } else if latent > -0.3 {
                1.0
            } else {
                0.0
            };
            data[r * p + c] = if rng.random_bool(0.01) { f64::NAN } else { g };
        }
    }
    let causal: Vec<usize> = (0..p).filter(|c| c % 10 == 3).collect();
    let y: Vec<f64> = (0..n)
        .map(|r| {
            // NaN.max(0.0) is 0, so missing calls add nothing
            let signal: f64 = causal.iter().map(|&c| 0.08 * data[r * p + c].max(0.0).min(2.0)).sum();
            let e: f64 = StandardNormal.sample(&mut rng);
            signal + e
        })
        .collect();
    let ids = (1..=p).map(|i| format!("rs{i}")).collect();
    let design = Design::new(n, p, data)?.with_ids(ids)?;
    println!("{} missing genotypes, imputed by column means", design.missing());

    let input = gwas_from_design(&y, &design, true)?;
    let z = input.z.as_slice();
    println!("largest |z| = {:.2}", z.iter().fold(0.0f64, |m, v| m.max(v.abs())));

    let mut config = PipelineConfig {
        half_width: 2,
        replicates: 50,
        ..Default::default()
    };
    config.estimation.subset = SubsetSpec::All;
    config.estimation.method = FitMethod::Full;
    let res = run_pipeline(z, &input.sigma, &config, 9)?;
    let f = res.fitted;
    println!(
        "fitted pi={:.3} b={:.3} tau2={:.3}, cutoff {:.4}",
        f.pi, f.b, f.tau_sq, res.t_hat.t_hat
    );
    let hits: Vec<&str> = res
        .rejected
        .rejected
        .iter()
        .map(|&i| input.ids[i - 1].as_str())
        .collect();
    let true_hits = res
        .rejected
        .rejected
        .iter()
        .filter(|&&i| causal.contains(&(i - 1)))
        .count();
    println!(
        "{} rejections, {true_hits} at causal SNPs: {}",
        hits.len(),
        hits.join(" ")
    );
    Ok(())
}
