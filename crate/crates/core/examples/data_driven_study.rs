//! Data-driven simulation: parameters fitted by EM on a subset of every
//! replicate, cutoffs recalibrated from the fitted model.
//!
//! ```text
//! cargo run --release --example data_driven_study -- [replicates] [independent|joint] [seed]
//! ```

use locfdrn::estimate::SubsetSpec;
use locfdrn::evalharness::{run_experiment, ExperimentConfig, Mode};
use locfdrn::twogroup::TwoGroupParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let replicates: usize = args.next().map_or(Ok(200), |s| s.parse())?;
    let sampling = args.next().as_deref().unwrap_or("independent").parse()?;
    let seed: u64 = args.next().map_or(Ok(1), |s| s.parse())?;

    let params = TwoGroupParams::new(0.3, 0.0, 4.0)?;
    let mut config = ExperimentConfig::new("data_driven", "banded1:0.5".parse()?, 2000, params);
    config.mode = Mode::DataDriven;
    config.subset = SubsetSpec::Stride { step: 2, offset: 2 };
    config.calibration_b = 50;
    config.calibration_sampling = sampling;
    config.replicates = replicates;
    config.seed = seed;

    let t = std::time::Instant::now();
    let report = run_experiment(&config)?;
    print!("{}", report.to_csv());
    eprintln!("{:.1}s", t.elapsed().as_secs_f64());
    Ok(())
}
