//! Cutoffs for the T_N rule: the closed-form marginal value at N = 0 and
//! the simulated values under both calibration samplers.

use locfdrn::covstruct::{build_covariance, CovarianceSpec};
use locfdrn::rng::stream_rng;
use locfdrn::threshold::{marginal_q, mc_threshold, quadrature_threshold_n0, CalibrationSampling};
use locfdrn::twogroup::TwoGroupParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = TwoGroupParams::new(0.3, 0.0, 4.0)?;
    let q = quadrature_threshold_n0(&params, 0.05)?;
    println!(
        "N=0 closed form: t = {:.4}, Q(t) = {:.5}",
        q.t_hat,
        marginal_q(&params, q.t_hat).unwrap_or(f64::NAN)
    );

    for alpha in [0.01, 0.05, 0.1] {
        println!(
            "alpha {alpha}: t = {:.4}",
            quadrature_threshold_n0(&params, alpha)?.t_hat
        );
    }

    let sigma = build_covariance(&CovarianceSpec::new("ar1:0.8".parse()?, 1000))?;
    println!("N  independent  joint");
    for n in 0..=2 {
        let mut row = Vec::new();
        for sampling in [CalibrationSampling::Independent, CalibrationSampling::Joint] {
            let mut rng = stream_rng(3, n as u64);
            row.push(mc_threshold(&params, &sigma, n, 0.05, 100, sampling, &mut rng)?.t_hat);
        }
        println!("{n}  {:.4}  {:.4}", row[0], row[1]);
    }
    Ok(())
}
