//! Building (z, Σ) for association studies, either from per-SNP summary
//! statistics plus an LD matrix, or from a small genotype design by OLS.

use serde::{Deserialize, Serialize};

use crate::covstruct::{
    build_covariance, cholesky_lower, spd_inverse, CovarianceKind, CovarianceMatrix, CovarianceSpec,
};
use crate::error::{Error, Result};
use crate::twogroup::ZVector;

/// Largest design width accepted by [`gwas_from_design`].
pub const MAX_DESIGN_COLUMNS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    SummaryStats,
    SmallScaleOls,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GwasInput {
    pub z: ZVector,
    pub sigma: CovarianceMatrix,
    pub ids: Vec<String>,
    pub provenance: Provenance,
}

fn default_ids(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("snp{i}")).collect()
}

/// `z = β̂ / se` with Σ taken from the LD matrix.
pub fn gwas_from_summary(
    beta_hat: &[f64],
    se: &[f64],
    ld: CovarianceMatrix,
    ids: Option<Vec<String>>,
) -> Result<GwasInput> {
    let k = beta_hat.len();
    if se.len() != k || ld.dim() != k {
        return Err(Error::Argument(format!(
            "{k} effect sizes, {} standard errors and a {d}x{d} LD matrix",
            se.len(),
            d = ld.dim()
        )));
    }
    if let Some(i) = se.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::Argument(format!(
            "standard error {} = {} is not positive",
            i + 1,
            se[i]
        )));
    }
    let ids = ids.unwrap_or_else(|| default_ids(k));
    if ids.len() != k {
        return Err(Error::Argument(format!("{} ids for {k} SNPs", ids.len())));
    }
    ld.cholesky()?;
    let z = ZVector::new(beta_hat.iter().zip(se).map(|(b, s)| b / s).collect())?;
    Ok(GwasInput {
        z,
        sigma: ld,
        ids,
        provenance: Provenance::SummaryStats,
    })
}

/// Row-major n×p design; `NaN` marks a missing entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub n: usize,
    pub p: usize,
    pub data: Vec<f64>,
    pub ids: Option<Vec<String>>,
}

impl Design {
    pub fn new(n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * p {
            return Err(Error::Argument(format!(
                "design has {} entries, expected {n}x{p}",
                data.len()
            )));
        }
        Ok(Design { n, p, data, ids: None })
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.p {
            return Err(Error::Argument(format!("{} ids for {} columns", ids.len(), self.p)));
        }
        self.ids = Some(ids);
        Ok(self)
    }

    pub fn missing(&self) -> usize {
        self.data.iter().filter(|v| v.is_nan()).count()
    }
}

/// Centres and scales to unit sample variance (divisor n − 1).
fn standardize(v: &mut [f64], what: &str) -> Result<()> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::Numerical(format!("{what} has zero variance")));
    }
    v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
    Ok(())
}

/// Marginal OLS z-scores from a full multiple regression of `y` on `X`.
///
/// Both `y` and the columns of `X` are standardized first; missing design
/// entries are replaced by their column mean when `impute_missing` is set.
pub fn gwas_from_design(y: &[f64], x: &Design, impute_missing: bool) -> Result<GwasInput> {
    let (n, p) = (x.n, x.p);
    if y.len() != n {
        return Err(Error::Argument(format!("{} responses for {n} design rows", y.len())));
    }
    if p == 0 {
        return Err(Error::Argument("design has no columns".into()));
    }
    if p >= n {
        return Err(Error::Argument(format!(
            "need more rows than columns, got n = {n}, p = {p}"
        )));
    }
    if p > MAX_DESIGN_COLUMNS {
        return Err(Error::Argument(format!(
            "p = {p} exceeds {MAX_DESIGN_COLUMNS}; use summary statistics instead"
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Argument(format!("response {} is missing or not finite", i + 1)));
    }
    if !impute_missing && x.missing() > 0 {
        return Err(Error::Argument(format!(
            "design has {} missing entries and imputation is off",
            x.missing()
        )));
    }

    // column-major working copy
    let mut cols: Vec<Vec<f64>> = (0..p).map(|j| (0..n).map(|i| x.data[i * p + j]).collect()).collect();
    for (j, c) in cols.iter_mut().enumerate() {
        let obs: Vec<f64> = c.iter().copied().filter(|v| !v.is_nan()).collect();
        if obs.is_empty() {
            return Err(Error::Argument(format!("column {} has no observed values", j + 1)));
        }
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        c.iter_mut().filter(|v| v.is_nan()).for_each(|v| *v = mean);
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("column {} has non-finite entries", j + 1)));
        }
        standardize(c, &format!("column {}", j + 1))?;
    }
    let mut ys = y.to_vec();
    standardize(&mut ys, "response")?;

    let dof = (n - 1) as f64;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    // C = XᵀX/(n−1) is a correlation matrix
    let mut c = vec![0.0; p * p];
    for a in 0..p {
        c[a * p + a] = 1.0;
        for b in 0..a {
            let v = dot(&cols[a], &cols[b]) / dof;
            c[a * p + b] = v;
            c[b * p + a] = v;
        }
    }
    let factor = cholesky_lower(&c, p).map_err(|e| match e {
        Error::NotPositiveDefinite { minor, .. } => {
            Error::Numerical(format!("XᵀX is singular (leading minor {minor})"))
        }
        other => other,
    })?;
    let cinv = spd_inverse(&factor);
    let xty: Vec<f64> = cols.iter().map(|cj| dot(cj, &ys) / dof).collect();
    let beta: Vec<f64> = (0..p).map(|a| dot(&cinv[a * p..(a + 1) * p], &xty)).collect();
    let mut rss = 0.0;
    for i in 0..n {
        let fit: f64 = (0..p).map(|j| cols[j][i] * beta[j]).sum();
        rss += (ys[i] - fit) * (ys[i] - fit);
    }
    let sigma_hat = (rss / (n - p) as f64).sqrt();
    if !(sigma_hat > 0.0) {
        return Err(Error::Numerical("residual variance is zero (perfect fit)".into()));
    }
    let z: Vec<f64> = (0..p)
        .map(|j| beta[j] / (sigma_hat * (cinv[j * p + j] / dof).sqrt()))
        .collect();
    let mut entries = vec![0.0; p * p];
    for a in 0..p {
        for b in 0..p {
            entries[a * p + b] = if a == b {
                1.0
            } else {
                cinv[a * p + b] / (cinv[a * p + a] * cinv[b * p + b]).sqrt()
            };
        }
    }
    let sigma = build_covariance(&CovarianceSpec::new(
        CovarianceKind::Explicit {
            entries,
            bandwidth: None,
        },
        p,
    ))?;
    Ok(GwasInput {
        z: ZVector::new(z)?,
        sigma,
        ids: x.ids.clone().unwrap_or_else(|| default_ids(p)),
        provenance: Provenance::SmallScaleOls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn summary_division() {
        let ld = CovarianceMatrix::identity(3);
        let g = gwas_from_summary(&[0.2, -0.5, 1.0], &[0.2, 0.5, 1.0], ld.clone(), None).unwrap();
        assert_eq!(g.z.as_slice(), &[1.0, -1.0, 1.0]);
        let g = gwas_from_summary(&[0.0; 3], &[0.3; 3], ld.clone(), None).unwrap();
        assert!(g.z.as_slice().iter().all(|&z| z == 0.0));
        assert!(gwas_from_summary(&[1.0; 3], &[0.3, 0.0, 1.0], ld.clone(), None).is_err());
        assert!(gwas_from_summary(&[1.0; 2], &[1.0; 2], ld, None).is_err());

        let mut r = stream_rng(1, 0);
        let b: Vec<f64> = (0..50).map(|_| r.sample(StandardNormal)).collect();
        let s: Vec<f64> = (0..50).map(|_| r.random_range(0.01..2.0)).collect();
        let g = gwas_from_summary(&b, &s, CovarianceMatrix::identity(50), None).unwrap();
        for i in 0..50 {
            assert!((g.z.as_slice()[i] - b[i] / s[i]).abs() <= 1e-15 * (b[i] / s[i]).abs());
        }
    }

    fn random_design(n: usize, p: usize, seed: u64) -> (Vec<f64>, Design) {
        let mut r = stream_rng(seed, 0);
        let mut x = vec![0.0; n * p];
        for i in 0..n {
            let shared: f64 = r.sample(StandardNormal);
            for j in 0..p {
                let e: f64 = r.sample(StandardNormal);
                x[i * p + j] = 0.5 * shared + e + j as f64;
            }
        }
        let y: Vec<f64> = (0..n)
            .map(|i| 0.7 * x[i * p] - 0.3 * x[i * p + p - 1] + r.sample::<f64, _>(StandardNormal))
            .collect();
        (y, Design::new(n, p, x).unwrap())
    }

    /// Textbook normal equations by Gaussian elimination with an intercept-free
    /// standardized model.
    fn textbook(y: &[f64], d: &Design) -> (Vec<f64>, Vec<f64>) {
        let (n, p) = (d.n, d.p);
        let std = |v: Vec<f64>| {
            let m = v.iter().sum::<f64>() / n as f64;
            let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            v.into_iter().map(|x| (x - m) / s).collect::<Vec<f64>>()
        };
        let cols: Vec<Vec<f64>> = (0..p)
            .map(|j| std((0..n).map(|i| d.data[i * p + j]).collect()))
            .collect();
        let ys = std(y.to_vec());
        // invert XᵀX with Gauss-Jordan
        let mut a = vec![vec![0.0; 2 * p]; p];
        for r in 0..p {
            for c in 0..p {
                a[r][c] = (0..n).map(|i| cols[r][i] * cols[c][i]).sum();
            }
            a[r][p + r] = 1.0;
        }
        for c in 0..p {
            let piv = a[c][c];
            for v in a[c].iter_mut() {
                *v /= piv;
            }
            for r in 0..p {
                if r != c {
                    let f = a[r][c];
                    let row_c = a[c].clone();
                    for (v, w) in a[r].iter_mut().zip(&row_c) {
                        *v -= f * w;
                    }
                }
            }
        }
        let inv: Vec<Vec<f64>> = a.iter().map(|row| row[p..].to_vec()).collect();
        let xty: Vec<f64> = (0..p).map(|j| (0..n).map(|i| cols[j][i] * ys[i]).sum()).collect();
        let beta: Vec<f64> = (0..p).map(|r| (0..p).map(|c| inv[r][c] * xty[c]).sum()).collect();
        let rss: f64 = (0..n)
            .map(|i| (ys[i] - (0..p).map(|j| cols[j][i] * beta[j]).sum::<f64>()).powi(2))
            .sum();
        let s2 = rss / (n - p) as f64;
        let z = (0..p).map(|j| beta[j] / (s2 * inv[j][j]).sqrt()).collect();
        let mut sig = vec![0.0; p * p];
        for r in 0..p {
            for c in 0..p {
                sig[r * p + c] = inv[r][c] / (inv[r][r] * inv[c][c]).sqrt();
            }
        }
        (z, sig)
    }

    #[test]
    fn design_matches_textbook_ols() {
        let (y, d) = random_design(50, 3, 4);
        let g = gwas_from_design(&y, &d, false).unwrap();
        let (z, sig) = textbook(&y, &d);
        for j in 0..3 {
            assert!((g.z.as_slice()[j] - z[j]).abs() < 1e-10);
            for k in 0..3 {
                assert!((g.sigma.get(j, k) - sig[j * 3 + k]).abs() < 1e-10);
            }
            assert_eq!(g.sigma.get(j, j), 1.0);
        }
        let scaled: Vec<f64> = y.iter().map(|v| 3.5 * v).collect();
        let g2 = gwas_from_design(&scaled, &d, false).unwrap();
        for j in 0..3 {
            assert!((g.z.as_slice()[j] - g2.z.as_slice()[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn orthogonal_design_gives_identity() {
        // centred, mutually orthogonal columns
        let n = 8;
        let cols = [
            [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0],
            [1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0],
            [1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0],
        ];
        let mut x = vec![0.0; n * 3];
        for i in 0..n {
            for j in 0..3 {
                x[i * 3 + j] = cols[j][i];
            }
        }
        let y = [0.3, 1.2, -0.5, 0.8, 2.0, -1.1, 0.4, 0.0];
        let g = gwas_from_design(&y, &Design::new(n, 3, x).unwrap(), false).unwrap();
        let my = y.iter().sum::<f64>() / n as f64;
        let sy = (y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let ys: Vec<f64> = y.iter().map(|v| (v - my) / sy).collect();
        let fit: Vec<f64> = (0..n)
            .map(|i| {
                (0..3)
                    .map(|j| cols[j][i] * cols[j].iter().zip(&ys).map(|(a, b)| a * b).sum::<f64>() / 8.0)
                    .sum()
            })
            .collect();
        let rss: f64 = ys.iter().zip(&fit).map(|(a, b)| (a - b).powi(2)).sum();
        let sh = (rss / (n - 3) as f64).sqrt();
        for j in 0..3 {
            let u: f64 = cols[j].iter().zip(&ys).map(|(a, b)| a * b).sum::<f64>() / 8f64.sqrt();
            assert!((g.z.as_slice()[j] - u / sh).abs() < 1e-12);
            for k in 0..3 {
                let e = if j == k { 1.0 } else { 0.0 };
                assert!((g.sigma.get(j, k) - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn design_guards_and_imputation() {
        let (y, mut d) = random_design(30, 2, 5);
        d.data[3] = f64::NAN;
        assert!(gwas_from_design(&y, &d, false).is_err());
        let g = gwas_from_design(&y, &d, true).unwrap();
        assert!(g.z.as_slice().iter().all(|v| v.is_finite()));
        let (y, d) = random_design(5, 5, 6);
        assert!(gwas_from_design(&y, &d, false).is_err());
        // a constant column cannot be standardized
        let mut x = vec![0.0; 20 * 2];
        for i in 0..20 {
            x[i * 2] = i as f64;
            x[i * 2 + 1] = 1.0;
        }
        let y: Vec<f64> = (0..20).map(|i| ((i * 7) % 5) as f64).collect();
        let err = gwas_from_design(&y, &Design::new(20, 2, x.clone()).unwrap(), false).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "{err}");
        // an exact duplicate is rescued by the jitter ladder
        for i in 0..20 {
            x[i * 2 + 1] = i as f64;
        }
        let g = gwas_from_design(&y, &Design::new(20, 2, x).unwrap(), false).unwrap();
        assert!(g.z.as_slice().iter().all(|v| v.is_finite()));
    }
}
