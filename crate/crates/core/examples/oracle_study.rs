//! Oracle-parameter simulation for one covariance setting.
//!
//! ```text
//! cargo run --release --example oracle_study -- ar1:0.8 [replicates] [seed]
//! ```

use locfdrn::covstruct::CovarianceKind;
use locfdrn::evalharness::{run_experiment, ExperimentConfig};
use locfdrn::twogroup::TwoGroupParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let cov: CovarianceKind = args.next().as_deref().unwrap_or("ar1:0.8").parse()?;
    let replicates: usize = args.next().map_or(Ok(500), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(1), |s| s.parse())?;

    let params = TwoGroupParams::new(0.3, 0.0, 4.0)?;
    let mut config = ExperimentConfig::new("oracle", cov, 1000, params);
    config.half_widths = vec![0, 1, 2, 3];
    config.replicates = replicates;
    config.seed = seed;

    let t = std::time::Instant::now();
    let report = run_experiment(&config)?;
    print!("{}", report.to_csv());
    eprintln!("{:.1}s", t.elapsed().as_secs_f64());
    Ok(())
}
