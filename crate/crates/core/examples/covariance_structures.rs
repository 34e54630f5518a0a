//! The built-in dependence families and the LD file round trip.

use locfdrn::covstruct::io::{encode_banded, parse_ld};
use locfdrn::covstruct::{build_covariance, CovarianceSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k = 1000;
    for kind in ["identity", "ar1:0.8", "banded1:0.5", "longrange:0.8", "equi:0.8"] {
        let sigma = build_covariance(&CovarianceSpec::new(kind.parse()?, k))?;
        let f = sigma.cholesky()?;
        println!(
            "{kind:<14} storage={:<6} s12={:.4} s1,11={:.4} logdet={:.3} jitter={:e}",
            sigma.bandwidth().map_or("dense".to_string(), |w| format!("w={w}")),
            sigma.get(0, 1),
            sigma.get(0, 10),
            f.log_det(),
            f.jitter(),
        );
    }

    // banded files keep only the stored band
    let ar = build_covariance(&CovarianceSpec::new("ar1:0.5".parse()?, 200))?;
    let bytes = encode_banded(&ar, None);
    let back = parse_ld(&bytes)?;
    println!(
        "ld.bin: {} bytes, equal after reload: {}",
        bytes.len(),
        back.to_dense() == ar.to_dense()
    );
    Ok(())
}
