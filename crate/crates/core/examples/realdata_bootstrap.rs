//! Parametric bootstrap at a fitted real-data parameter set,
//! with an AR(1) stand-in for the LD between 3,500 SNPs.

use locfdrn::evalharness::{run_experiment, ExperimentConfig, Procedure};
use locfdrn::twogroup::TwoGroupParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let replicates: usize = std::env::args().nth(1).map_or(Ok(100), |s| s.parse())?;
    let params = TwoGroupParams::new(0.2, 0.0918, 2.477)?;
    let mut config = ExperimentConfig::new("realdata_fixture", "ar1:0.5".parse()?, 3500, params);
    config.procedures = vec![Procedure::Tn, Procedure::SunCai, Procedure::Bh];
    config.calibration_b = 100;
    config.replicates = replicates;
    let report = run_experiment(&config)?;
    print!("{}", report.to_csv());
    Ok(())
}
