//! `T_{i,N}` for growing windows, both engines, and the exhaustive check on
//! a short vector.

use std::time::Instant;

use locfdrn::covstruct::{build_covariance, CovarianceSpec};
use locfdrn::locfdr::{compute_locfdr, locfdr_n, locfdr_n_fast, oracle_locfdr_bruteforce, Engine, LocFdrOptions};
use locfdrn::rng::stream_rng;
use locfdrn::twogroup::{marginal_locfdr, sample_states, sample_zscores, TwoGroupParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = TwoGroupParams::new(0.3, 0.0, 4.0)?;
    let sigma = build_covariance(&CovarianceSpec::new("ar1:0.8".parse()?, 2000))?;
    let mut rng = stream_rng(11, 0);
    let h = sample_states(2000, params.pi, &mut rng)?;
    let z = sample_zscores(&h, &params, &sigma, &mut rng)?.into_inner();

    println!("N  engine  seconds  mean(T|null)  mean(T|non-null)");
    for n in 0..=4 {
        for engine in [Engine::Naive, Engine::Fast] {
            let opts = LocFdrOptions {
                engine,
                ..Default::default()
            };
            let t0 = Instant::now();
            let t = compute_locfdr(&z, &sigma, &params, n, &opts)?;
            let secs = t0.elapsed().as_secs_f64();
            let (mut s0, mut n0, mut s1, mut n1) = (0.0, 0, 0.0, 0);
            for (v, &nn) in t.values().iter().zip(h.as_slice()) {
                if nn {
                    s1 += v;
                    n1 += 1;
                } else {
                    s0 += v;
                    n0 += 1;
                }
            }
            println!(
                "{n}  {engine:?}  {secs:.3}  {:.4}  {:.4}",
                s0 / n0 as f64,
                s1 / n1 as f64
            );
        }
    }

    let marg = marginal_locfdr(&z, &params);
    let n0 = locfdr_n(&z, &sigma, &params, 0)?;
    let gap = marg
        .values()
        .iter()
        .zip(n0.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("N=0 vs marginal formula: max gap {gap:.2e}");

    let small = build_covariance(&CovarianceSpec::new("equi:0.5".parse()?, 10))?;
    let zs = &z[..10];
    let exact = oracle_locfdr_bruteforce(zs, &small, &params)?;
    let full = locfdr_n_fast(zs, &small, &params, 9)?;
    let gap = exact
        .values()
        .iter()
        .zip(full.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("K=10, N=9 vs exhaustive posterior: max gap {gap:.2e}");
    Ok(())
}
