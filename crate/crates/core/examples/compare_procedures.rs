//! One simulated data set run through the T_N rule, Sun-Cai, BH and
//! adaptive BH, scored against the true states.

use locfdrn::covstruct::{build_covariance, CovarianceSpec};
use locfdrn::evalharness::evaluate_replicate;
use locfdrn::locfdr::locfdr_n_fast;
use locfdrn::procedures::{adaptive_bh, bh, sun_cai, tn_rule, z_to_pvalue};
use locfdrn::rng::stream_rng;
use locfdrn::threshold::{mc_threshold, CalibrationSampling};
use locfdrn::twogroup::{marginal_locfdr, sample_states, sample_zscores, TwoGroupParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = TwoGroupParams::new(0.3, 0.0, 4.0)?;
    let sigma = build_covariance(&CovarianceSpec::new("ar1:0.8".parse()?, 2000))?;
    let mut rng = stream_rng(21, 0);
    let h = sample_states(2000, params.pi, &mut rng)?;
    let z = sample_zscores(&h, &params, &sigma, &mut rng)?.into_inner();

    let p = z_to_pvalue(&z);
    let mut sets = vec![
        ("SC".to_string(), sun_cai(&marginal_locfdr(&z, &params), 0.05)?),
        ("BH".to_string(), bh(&p, 0.05)?),
        ("ABH".to_string(), adaptive_bh(&p, 0.05, params.pi)?),
    ];
    for n in [1, 2] {
        let t = locfdr_n_fast(&z, &sigma, &params, n)?;
        let cut = mc_threshold(&params, &sigma, n, 0.05, 100, CalibrationSampling::Joint, &mut rng)?;
        sets.insert(0, (format!("T{n}"), tn_rule(&t, cut.t_hat)));
    }

    println!("rule  R  V  TP  FDP");
    for (label, s) in &sets {
        let o = evaluate_replicate(s, &h, 21)?;
        println!("{label}  {}  {}  {}  {:.4}", o.r, o.v, o.tp, o.fdp());
    }
    print!("\ncommon");
    for (l, _) in &sets {
        print!("  {l}");
    }
    println!();
    for (la, a) in &sets {
        print!("{la}");
        for (_, b) in &sets {
            print!("  {}", a.common(b));
        }
        println!();
    }
    Ok(())
}
