//! Writes a synthetic `z.tsv` and banded `ld.bin` for trying the CLI.
//!
//! ```text
//! cargo run --release --example simulate_dataset -- out/ ar1:0.5 2000 0.3,0,4 [seed]
//! locfdrn run --z out/z.tsv --ld out/ld.bin --N 2 --out out/run
//! ```

use std::path::PathBuf;

use locfdrn::covstruct::io::write_banded;
use locfdrn::covstruct::{build_covariance, CovarianceKind, CovarianceSpec};
use locfdrn::pipeline::io::write_z_tsv;
use locfdrn::pipeline::parse_params;
use locfdrn::rng::stream_rng;
use locfdrn::twogroup::{sample_states, sample_zscores};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "sim".into()));
    let kind: CovarianceKind = args.next().as_deref().unwrap_or("ar1:0.5").parse()?;
    let k: usize = args.next().map_or(Ok(2000), |s| s.parse())?;
    let params = parse_params(args.next().as_deref().unwrap_or("0.3,0,4"))?;
    let seed: u64 = args.next().map_or(Ok(1), |s| s.parse())?;

    let sigma = build_covariance(&CovarianceSpec::new(kind, k))?;
    let mut rng = stream_rng(seed, 0);
    let h = sample_states(k, params.pi, &mut rng)?;
    let z = sample_zscores(&h, &params, &sigma, &mut rng)?;

    std::fs::create_dir_all(&dir)?;
    let ids: Vec<String> = (1..=k).map(|i| format!("h{i}")).collect();
    write_z_tsv(dir.join("z.tsv"), &ids, z.as_slice())?;
    write_banded(&sigma, None, dir.join("ld.bin"))?;
    let truth: Vec<String> = h.as_slice().iter().map(|&x| u8::from(x).to_string()).collect();
    std::fs::write(dir.join("states.txt"), truth.join("\n") + "\n")?;
    println!("{} non-null of {k}", h.non_null_count());
    Ok(())
}
