use std::path::Path;
use std::process::Command;

use locfdrn::covstruct::io::write_banded;
use locfdrn::covstruct::{build_covariance, CovarianceSpec};
use locfdrn::pipeline::io::write_z_tsv;
use locfdrn::rng::stream_rng;
use locfdrn::twogroup::{sample_states, sample_zscores, TwoGroupParams};

fn locfdrn(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_locfdrn")).args(args).output().unwrap();
    (
        out.status.success(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn dataset(dir: &Path, k: usize) -> (String, String) {
    let p = TwoGroupParams::new(0.3, 0.0, 4.0).unwrap();
    let s = build_covariance(&CovarianceSpec::new("ar1:0.5".parse().unwrap(), k)).unwrap();
    let mut g = stream_rng(9, 0);
    let h = sample_states(k, p.pi, &mut g).unwrap();
    let z = sample_zscores(&h, &p, &s, &mut g).unwrap();
    let ids: Vec<String> = (1..=k).map(|i| format!("s{i}")).collect();
    let zp = dir.join("z.tsv");
    let lp = dir.join("ld.bin");
    write_z_tsv(&zp, &ids, z.as_slice()).unwrap();
    write_banded(&s, None, &lp).unwrap();
    (zp.display().to_string(), lp.display().to_string())
}

#[test]
fn locfdr_fit_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let (z, ld) = dataset(dir.path(), 300);
    let (ok, out, err) = locfdrn(&[
        "locfdr", "--z", &z, "--ld", &ld, "--pi", "0.3", "--b", "0", "--tau2", "4", "--N", "2",
    ]);
    assert!(ok, "{err}");
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "id\tz\tT\tneg2log10T");
    assert_eq!(lines.len(), 301);

    let (ok, out, err) = locfdrn(&[
        "fit",
        "--z",
        &z,
        "--ld",
        &ld,
        "--subset",
        "stride:2:1",
        "--pi-fixed",
        "0.3",
    ]);
    assert!(ok, "{err}");
    assert!(out.contains("pi = 0.3\n") && out.contains("tau2 = "));

    let (ok, out, _) = locfdrn(&[
        "threshold",
        "--pi",
        "0.3",
        "--b",
        "0",
        "--tau2",
        "4",
        "--N",
        "0",
        "--quadrature",
    ]);
    assert!(ok);
    assert!(out.starts_with("t_hat = 0.174"));
    assert!(out.contains("t,q_hat\n"));
}

#[test]
fn run_compare_and_prep_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (z, ld) = dataset(dir.path(), 400);
    let run = dir.path().join("run");
    let (ok, _, err) = locfdrn(&[
        "run",
        "--z",
        &z,
        "--ld",
        &ld,
        "--N",
        "1",
        "--B",
        "10",
        "--subset",
        "stride:4:2",
        "--seed",
        "3",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(ok, "{err}");
    for f in ["rejections.tsv", "manhattan.csv", "manifest.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);

    let cmp = dir.path().join("cmp");
    let (ok, out, err) = locfdrn(&[
        "compare",
        "--z",
        &z,
        "--ld",
        &ld,
        "--params",
        "0.3,0,4",
        "--B",
        "10",
        "--out",
        cmp.to_str().unwrap(),
    ]);
    assert!(ok, "{err}");
    assert!(out.contains("procedure,T1,SC,BH,ABH"));
    assert!(cmp.join("common.csv").exists() && cmp.join("BH.txt").exists());

    let sum = dir.path().join("sum.tsv");
    std::fs::write(
        &sum,
        "id\tbeta\tse\n".to_string() + &(1..=400).map(|i| format!("s{i}\t0.1\t0.05\n")).collect::<String>(),
    )
    .unwrap();
    let prep = dir.path().join("prep");
    let (ok, _, err) = locfdrn(&[
        "gwas-prep",
        "--summary",
        sum.to_str().unwrap(),
        "--ld",
        &ld,
        "--out",
        prep.to_str().unwrap(),
    ]);
    assert!(ok, "{err}");
    let zt = std::fs::read_to_string(prep.join("z.tsv")).unwrap();
    assert!(zt.lines().nth(1).unwrap() == "s1\t2");
}

#[test]
fn errors_are_reported() {
    let (ok, _, err) = locfdrn(&["threshold", "--pi", "1.5", "--b", "0", "--tau2", "4"]);
    assert!(!ok);
    assert!(err.starts_with("error:"));
    let (ok, _, _) = locfdrn(&[
        "locfdr",
        "--z",
        "/nonexistent",
        "--ld",
        "/nonexistent",
        "--pi",
        "0.3",
        "--b",
        "0",
        "--tau2",
        "4",
    ]);
    assert!(!ok);
}
