//! Tab- and comma-separated inputs and outputs of the command-line runs.
//!
//! * z-scores: TSV with header `id\tz`;
//! * summary statistics: TSV with header `id\tbeta\tse`;
//! * design: CSV whose header is `y,ID1,ID2,...`, one row per individual,
//!   `NA` for a missing genotype.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::gwas::Design;
use crate::error::{Error, Result};

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn num(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad number `{}`", field.trim())))
}

/// Splits a delimited table, checking its header against `expect`.
fn table<'a>(text: &'a str, sep: char, expect: &[&str]) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = data_lines(text);
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty file".into()))?;
    let cols: Vec<&str> = header.split(sep).map(str::trim).collect();
    if cols != expect {
        return Err(Error::Parse(format!(
            "header `{header}`, expected `{}`",
            expect.join(&sep.to_string())
        )));
    }
    lines
        .map(|(n, l)| {
            let f: Vec<&str> = l.split(sep).collect();
            if f.len() != expect.len() {
                return Err(Error::Parse(format!(
                    "line {n}: {} fields, expected {}",
                    f.len(),
                    expect.len()
                )));
            }
            Ok((n, f))
        })
        .collect()
}

pub fn parse_z_tsv(text: &str) -> Result<(Vec<String>, Vec<f64>)> {
    let rows = table(text, '\t', &["id", "z"])?;
    let mut ids = Vec::with_capacity(rows.len());
    let mut z = Vec::with_capacity(rows.len());
    for (n, f) in rows {
        ids.push(f[0].trim().to_string());
        let v = num(f[1], n)?;
        if !v.is_finite() {
            return Err(Error::Parse(format!("line {n}: z-score is not finite")));
        }
        z.push(v);
    }
    Ok((ids, z))
}

pub fn read_z_tsv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<f64>)> {
    let path = path.as_ref();
    parse_z_tsv(&fs::read_to_string(path)?).map_err(|e| e.context(format!("reading {}", path.display())))
}

pub fn write_z_tsv(path: impl AsRef<Path>, ids: &[String], z: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "id\tz")?;
    for (id, v) in ids.iter().zip(z) {
        writeln!(w, "{id}\t{v}")?;
    }
    w.flush()?;
    Ok(())
}

/// Returns `(ids, beta, se)`.
pub fn parse_summary_tsv(text: &str) -> Result<(Vec<String>, Vec<f64>, Vec<f64>)> {
    let rows = table(text, '\t', &["id", "beta", "se"])?;
    let (mut ids, mut beta, mut se) = (Vec::new(), Vec::new(), Vec::new());
    for (n, f) in rows {
        ids.push(f[0].trim().to_string());
        beta.push(num(f[1], n)?);
        se.push(num(f[2], n)?);
    }
    Ok((ids, beta, se))
}

pub fn read_summary_tsv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<f64>, Vec<f64>)> {
    let path = path.as_ref();
    parse_summary_tsv(&fs::read_to_string(path)?).map_err(|e| e.context(format!("reading {}", path.display())))
}

/// Returns the response and the design (with SNP ids from the header).
pub fn parse_design_csv(text: &str) -> Result<(Vec<f64>, Design)> {
    let mut lines = data_lines(text);
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty design file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "y" {
        return Err(Error::Parse("design header must be `y,ID1,ID2,...`".into()));
    }
    let p = cols.len() - 1;
    let (mut y, mut data) = (Vec::new(), Vec::new());
    for (n, l) in lines {
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        if f.len() != p + 1 {
            return Err(Error::Parse(format!(
                "line {n}: {} fields, expected {}",
                f.len(),
                p + 1
            )));
        }
        y.push(num(f[0], n)?);
        for v in &f[1..] {
            data.push(if v.eq_ignore_ascii_case("NA") {
                f64::NAN
            } else {
                num(v, n)?
            });
        }
    }
    let d = Design::new(y.len(), p, data)?.with_ids(cols[1..].iter().map(|s| s.to_string()).collect())?;
    Ok((y, d))
}

pub fn read_design_csv(path: impl AsRef<Path>) -> Result<(Vec<f64>, Design)> {
    let path = path.as_ref();
    parse_design_csv(&fs::read_to_string(path)?).map_err(|e| e.context(format!("reading {}", path.display())))
}

/// `−2·log10(T)`, finite even at T = 0.
pub fn neg2log10(t: f64) -> f64 {
    -2.0 * t.max(f64::MIN_POSITIVE).log10()
}

pub fn write_rejections_tsv(
    path: impl AsRef<Path>,
    ids: &[String],
    z: &[f64],
    t: &[f64],
    rejected: &[bool],
) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "id\tz\tT\trejected")?;
    for i in 0..z.len() {
        writeln!(w, "{}\t{}\t{}\t{}", ids[i], z[i], t[i], u8::from(rejected[i]))?;
    }
    w.flush()?;
    Ok(())
}

/// One row per hypothesis: `i, neg2log10T, threshold_line`.
pub fn write_manhattan_csv(path: impl AsRef<Path>, t: &[f64], t_hat: f64) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let line = neg2log10(t_hat);
    writeln!(w, "i,neg2log10T,threshold_line")?;
    for (i, &v) in t.iter().enumerate() {
        writeln!(w, "{},{},{}", i + 1, neg2log10(v), line)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.tsv");
        let ids = vec!["a".to_string(), "b".to_string()];
        write_z_tsv(&p, &ids, &[1.5, -0.25]).unwrap();
        let (i2, z2) = read_z_tsv(&p).unwrap();
        assert_eq!(i2, ids);
        assert_eq!(z2, vec![1.5, -0.25]);
    }

    #[test]
    fn z_errors() {
        assert!(parse_z_tsv("id\tzz\na\t1\n").is_err());
        assert!(parse_z_tsv("id\tz\na\tx\n").is_err());
        assert!(parse_z_tsv("id\tz\na\t1\t2\n").is_err());
        assert!(parse_z_tsv("id\tz\na\tinf\n").is_err());
        let (ids, z) = parse_z_tsv("# comment\nid\tz\n\nrs1\t0.5\n").unwrap();
        assert_eq!((ids.len(), z[0]), (1, 0.5));
    }

    #[test]
    fn summary_and_design() {
        let (ids, b, s) = parse_summary_tsv("id\tbeta\tse\nrs1\t0.1\t0.05\n").unwrap();
        assert_eq!((ids[0].as_str(), b[0], s[0]), ("rs1", 0.1, 0.05));
        let (y, d) = parse_design_csv("y,rs1,rs2\n1.0,0,2\n0.5,NA,1\n").unwrap();
        assert_eq!(y, vec![1.0, 0.5]);
        assert_eq!((d.n, d.p, d.missing()), (2, 2, 1));
        assert_eq!(d.ids.as_ref().unwrap()[1], "rs2");
        assert!(parse_design_csv("x,rs1\n1,2\n").is_err());
    }

    #[test]
    fn manhattan_values() {
        assert_eq!(neg2log10(0.01), 4.0);
        assert!(neg2log10(0.0).is_finite());
    }
}
