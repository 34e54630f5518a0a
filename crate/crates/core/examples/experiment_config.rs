//! A simulation study driven by a plain-text config, as used by
//! `locfdrn experiment`. Results land in `<dir>/<name>.csv` and `.json`.

use locfdrn::evalharness::{run_and_write, ExperimentConfig};

const CONFIG: &str = "
name = banded_small
covariance = banded1:0.5
k = 500
pi = 0.3
b = 0
tau = 2
mode = data-driven
n = 0,1,2
replicates = 40
calibration_b = 30
calibration_sampling = joint
subset = stride:2:2
seed = 4
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "experiments".into());
    let config = ExperimentConfig::parse(CONFIG)?;
    let report = run_and_write(&config, &dir)?;
    print!("{}", report.to_csv());
    let t2 = report.column("T2").expect("T2 column");
    println!("T2 replicate outcomes: {}", t2.outcomes.len());
    Ok(())
}
