//! LD matrix files.
//!
//! Two formats, told apart by the first bytes:
//!
//! * dense CSV: K lines of K comma-separated values;
//! * banded binary: ASCII magic `LDBAND1\n`, little-endian `u64` K and
//!   bandwidth w, then K·(w+1) little-endian `f64` holding the upper band
//!   row by row (`Σ[i][i+d]` for d = 0..=w, zero past the end).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{build_covariance, CovarianceKind, CovarianceMatrix, CovarianceSpec};
use crate::error::{Error, Result};

pub const BANDED_MAGIC: &[u8; 8] = b"LDBAND1\n";

/// Parses either LD format from raw bytes.
pub fn parse_ld(bytes: &[u8]) -> Result<CovarianceMatrix> {
    if bytes.starts_with(BANDED_MAGIC) {
        parse_banded(&bytes[BANDED_MAGIC.len()..])
    } else {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| Error::Parse("LD file is neither banded binary nor UTF-8 CSV".into()))?;
        parse_dense_csv(text)
    }
}

pub fn read_ld(path: impl AsRef<Path>) -> Result<CovarianceMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    parse_ld(&bytes).map_err(|e| e.context(format!("reading {}", path.display())))
}

fn parse_dense_csv(text: &str) -> Result<CovarianceMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad number `{}`", lineno + 1, f.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let k = rows.len();
    if k == 0 {
        return Err(Error::Parse("empty LD matrix".into()));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != k) {
        return Err(Error::Parse(format!(
            "row {} has {} columns, expected {k}",
            i + 1,
            r.len()
        )));
    }
    let entries: Vec<f64> = rows.into_iter().flatten().collect();
    build_covariance(&CovarianceSpec::new(
        CovarianceKind::Explicit {
            entries,
            bandwidth: None,
        },
        k,
    ))
}

fn parse_banded(body: &[u8]) -> Result<CovarianceMatrix> {
    if body.len() < 16 {
        return Err(Error::Parse("banded LD header truncated".into()));
    }
    let k = u64::from_le_bytes(body[0..8].try_into().unwrap()) as usize;
    let w = u64::from_le_bytes(body[8..16].try_into().unwrap()) as usize;
    let count = k
        .checked_mul(w + 1)
        .ok_or_else(|| Error::Parse("banded LD dimensions overflow".into()))?;
    let payload = &body[16..];
    if payload.len() != count * 8 {
        return Err(Error::Parse(format!(
            "banded LD payload has {} bytes, expected {}",
            payload.len(),
            count * 8
        )));
    }
    let band: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    CovarianceMatrix::from_upper_band(k, w, band)
}

/// Serializes Σ in the banded binary format with the given bandwidth
/// (defaults to the matrix's own storage bandwidth, or K−1 for dense).
pub fn encode_banded(sigma: &CovarianceMatrix, bandwidth: Option<usize>) -> Vec<u8> {
    let k = sigma.dim();
    let w = bandwidth.unwrap_or_else(|| sigma.effective_bandwidth());
    let mut out = Vec::with_capacity(24 + k * (w + 1) * 8);
    out.extend_from_slice(BANDED_MAGIC);
    out.extend_from_slice(&(k as u64).to_le_bytes());
    out.extend_from_slice(&(w as u64).to_le_bytes());
    for i in 0..k {
        for d in 0..=w {
            let v = if i + d < k { sigma.get(i, i + d) } else { 0.0 };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_banded(sigma: &CovarianceMatrix, bandwidth: Option<usize>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_banded(sigma, bandwidth))?;
    Ok(())
}

pub fn write_dense_csv(sigma: &CovarianceMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let k = sigma.dim();
    for i in 0..k {
        let row: Vec<String> = (0..k).map(|j| format!("{:?}", sigma.get(i, j))).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banded_roundtrip_is_lossless() {
        let s = build_covariance(&CovarianceSpec::new(CovarianceKind::Ar1 { rho: 0.37 }, 40)).unwrap();
        let bytes = encode_banded(&s, None);
        assert!(bytes.starts_with(BANDED_MAGIC));
        let back = parse_ld(&bytes).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn dense_csv_roundtrip() {
        let s = build_covariance(&CovarianceSpec::new(CovarianceKind::LongRange { h: 0.7 }, 7)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ld.csv");
        write_dense_csv(&s, &p).unwrap();
        let back = read_ld(&p).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(back.get(i, j), s.get(i, j));
            }
        }
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let s = CovarianceMatrix::identity(3);
        let mut bytes = encode_banded(&s, Some(1));
        bytes.pop();
        assert!(parse_ld(&bytes).is_err());
    }

    #[test]
    fn ragged_csv_is_rejected() {
        assert!(parse_ld(b"1,0\n0\n").is_err());
    }
}
