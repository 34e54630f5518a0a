//! EM on a stride subset: the full fit, the fit with π held fixed, and the
//! log-likelihood trace.

use locfdrn::covstruct::{build_covariance, CovarianceSpec};
use locfdrn::estimate::{
    default_init, em_fit_full, em_fit_multistart, em_fit_plugin, gather, select_subset, EmOptions, PiMode, SubsetSpec,
};
use locfdrn::rng::stream_rng;
use locfdrn::twogroup::{sample_states, sample_zscores, TwoGroupParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = TwoGroupParams::new(0.3, 1.0, 4.0)?;
    let k = 20_000;
    let sigma = build_covariance(&CovarianceSpec::new("ar1:0.5".parse()?, k))?;
    let mut rng = stream_rng(5, 0);
    let h = sample_states(k, truth.pi, &mut rng)?;
    let z = sample_zscores(&h, &truth, &sigma, &mut rng)?.into_inner();

    let idx = select_subset(&sigma, &SubsetSpec::Stride { step: 4, offset: 2 })?;
    let zs = gather(&z, &idx);
    let opts = EmOptions::default();

    let fit = em_fit_full(&zs, default_init(&zs), &opts)?;
    println!("iter  loglik  pi  b  tau2");
    for s in fit.trace.iter().step_by(5) {
        println!(
            "{}  {:.4}  {:.4}  {:.4}  {:.4}",
            s.iteration, s.loglik, s.params.pi, s.params.b, s.params.tau_sq
        );
    }
    let p = fit.params();
    println!(
        "full:    pi={:.4} b={:.4} tau2={:.4} ({} iterations)",
        p.pi,
        p.b,
        p.tau_sq,
        fit.iterations()
    );

    let plug = em_fit_plugin(&zs, 0.3, default_init(&zs), &opts)?;
    let p = plug.params();
    println!("plug-in: pi={:.4} b={:.4} tau2={:.4}", p.pi, p.b, p.tau_sq);

    let best = em_fit_multistart(&zs, PiMode::Free, None, 5, &opts, &mut rng)?;
    println!(
        "best of 6 starts: loglik {:.4} (single start {:.4})",
        best.loglik(),
        fit.loglik()
    );
    println!("truth:   pi={} b={} tau2={}", truth.pi, truth.b, truth.tau_sq);
    Ok(())
}
