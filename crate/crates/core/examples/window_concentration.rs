//! How T_{i,N} settles as the window grows: correlation between
//! consecutive half-widths on one replicate. Pass a path to also dump the
//! long-format values.

use locfdrn::covstruct::{build_covariance, CovarianceSpec};
use locfdrn::evalharness::{pearson, window_sweep};
use locfdrn::twogroup::TwoGroupParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = TwoGroupParams::new(0.3, 0.2, 4.0)?;
    let sigma = build_covariance(&CovarianceSpec::new("ar1:0.8".parse()?, 1000))?;
    let data = window_sweep(&params, &sigma, 5, 1)?;
    for w in data.columns.windows(2) {
        let r = pearson(w[0].values(), w[1].values()).unwrap_or(f64::NAN);
        println!("corr(T{}, T{}) = {r:.4}", w[0].half_width(), w[1].half_width());
    }
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(path, data.to_csv())?;
    }
    Ok(())
}
