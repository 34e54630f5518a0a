//! Correlation structures Σ among the test statistics.
//!
//! Hypotheses are ordered; all public indices are 1-based. A
//! [`CovarianceMatrix`] is immutable once built and caches its Cholesky
//! factor on first use, so it can be shared freely across worker threads.

mod cholesky;
pub mod io;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub(crate) use cholesky::{cholesky_dense_into, spd_inverse};
pub use cholesky::{cholesky_lower, BandedFactor, LowerFactor, JITTER_LADDER};

use crate::error::{Error, Result};

/// Entries of an AR(1) band below this magnitude are dropped.
pub const AR1_TRUNCATION: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;

/// Parametric family (or explicit matrix) a covariance is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceKind {
    /// σᵢⱼ = ρ^|i−j|.
    Ar1 { rho: f64 },
    /// Unit diagonal, ρ on the first off-diagonals, zero elsewhere.
    Banded1 { rho: f64 },
    /// Fractional Gaussian noise autocorrelation with Hurst exponent `h`.
    LongRange { h: f64 },
    /// ρ everywhere off the diagonal.
    Equicorrelated { rho: f64 },
    /// A user-supplied K×K matrix, row-major. With `bandwidth`, entries
    /// beyond it are discarded and banded storage is used.
    Explicit {
        entries: Vec<f64>,
        bandwidth: Option<usize>,
    },
}

impl CovarianceKind {
    pub fn identity() -> Self {
        CovarianceKind::Banded1 { rho: 0.0 }
    }
}

impl fmt::Display for CovarianceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovarianceKind::Ar1 { rho } => write!(f, "ar1:{rho}"),
            CovarianceKind::Banded1 { rho } => write!(f, "banded1:{rho}"),
            CovarianceKind::LongRange { h } => write!(f, "longrange:{h}"),
            CovarianceKind::Equicorrelated { rho } => write!(f, "equi:{rho}"),
            CovarianceKind::Explicit { bandwidth, .. } => match bandwidth {
                Some(w) => write!(f, "explicit(bandwidth={w})"),
                None => write!(f, "explicit"),
            },
        }
    }
}

/// Parses `ar1:RHO`, `banded1:RHO`, `longrange:H`, `equi:RHO` or `identity`.
impl FromStr for CovarianceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("identity") {
            return Ok(CovarianceKind::identity());
        }
        let (name, value) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("covariance `{s}`: expected NAME:VALUE")))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("covariance `{s}`: bad number `{value}`")))?;
        match name.trim().to_ascii_lowercase().as_str() {
            "ar1" => Ok(CovarianceKind::Ar1 { rho: v }),
            "banded1" | "banded" => Ok(CovarianceKind::Banded1 { rho: v }),
            "longrange" | "fgn" => Ok(CovarianceKind::LongRange { h: v }),
            "equi" | "equicorrelated" => Ok(CovarianceKind::Equicorrelated { rho: v }),
            other => Err(Error::Parse(format!("unknown covariance kind `{other}`"))),
        }
    }
}

/// A covariance family together with the number of hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub kind: CovarianceKind,
    pub k: usize,
}

impl CovarianceSpec {
    pub fn new(kind: CovarianceKind, k: usize) -> Self {
        CovarianceSpec { kind, k }
    }

    /// Checks parameter ranges and, for explicit matrices, shape and symmetry.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Domain("K must be at least 1".into()));
        }
        let finite = |x: f64, name: &str| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be finite")))
            }
        };
        match &self.kind {
            CovarianceKind::Ar1 { rho } | CovarianceKind::Equicorrelated { rho } => {
                finite(*rho, "rho")?;
                if !(-1.0..=1.0).contains(rho) {
                    return Err(Error::Domain(format!("rho = {rho} violates -1 <= rho <= 1")));
                }
            }
            CovarianceKind::Banded1 { rho } => {
                finite(*rho, "rho")?;
                if !(-0.5..=0.5).contains(rho) {
                    return Err(Error::Domain(format!(
                        "rho = {rho} violates -0.5 <= rho <= 0.5 for Banded(1)"
                    )));
                }
            }
            CovarianceKind::LongRange { h } => {
                finite(*h, "H")?;
                if !(*h >= 0.5 && *h < 1.0) {
                    return Err(Error::Domain(format!("H = {h} violates 1/2 <= H < 1")));
                }
            }
            CovarianceKind::Explicit { entries, .. } => {
                let k = self.k;
                if entries.len() != k * k {
                    return Err(Error::Domain(format!(
                        "explicit matrix has {} entries, expected {k}x{k}",
                        entries.len()
                    )));
                }
                for i in 0..k {
                    let d = entries[i * k + i];
                    if !d.is_finite() || (d - 1.0).abs() > SYMMETRY_TOL {
                        return Err(Error::Domain(format!("diagonal entry {} is {d}, expected 1", i + 1)));
                    }
                    for j in (i + 1)..k {
                        let (a, b) = (entries[i * k + j], entries[j * k + i]);
                        if !a.is_finite() || !b.is_finite() || (a - b).abs() > SYMMETRY_TOL {
                            return Err(Error::Domain(format!("matrix not symmetric at ({}, {})", i + 1, j + 1)));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Fractional Gaussian noise autocorrelation at lag `d`.
pub fn fgn_autocorrelation(h: f64, d: usize) -> f64 {
    let d = d as f64;
    let e = 2.0 * h;
    0.5 * ((d + 1.0).powf(e) - 2.0 * d.powf(e) + (d - 1.0).abs().powf(e))
}

/// Smallest `w` with `|rho|^w < AR1_TRUNCATION` (`None` if no such `w`).
pub fn ar1_bandwidth(rho: f64) -> Option<usize> {
    let r = rho.abs();
    if r >= 1.0 {
        return None;
    }
    let mut w = 1usize;
    let mut p = r;
    while p >= AR1_TRUNCATION {
        p *= r;
        w += 1;
    }
    Some(w)
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    /// Row-major K×K.
    Dense(Vec<f64>),
    /// `band[i * (w + 1) + d] = Σ[i][i + d]`; slots past the end are zero.
    Banded { w: usize, band: Vec<f64> },
}

/// Cached Cholesky factor of a [`CovarianceMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceFactor {
    Dense(LowerFactor),
    Banded(BandedFactor),
}

impl CovarianceFactor {
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        match self {
            CovarianceFactor::Dense(f) => f.mul_vec(x),
            CovarianceFactor::Banded(f) => f.mul_vec(x),
        }
    }

    pub fn jitter(&self) -> f64 {
        match self {
            CovarianceFactor::Dense(f) => f.jitter(),
            CovarianceFactor::Banded(f) => f.jitter(),
        }
    }

    pub fn log_det(&self) -> f64 {
        match self {
            CovarianceFactor::Dense(f) => f.log_det(),
            CovarianceFactor::Banded(f) => f.log_det(),
        }
    }
}

/// Symmetric K×K correlation matrix with unit diagonal.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    k: usize,
    storage: Storage,
    factor: OnceLock<std::result::Result<CovarianceFactor, (usize, f64)>>,
}

impl PartialEq for CovarianceMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k && self.storage == other.storage
    }
}

impl CovarianceMatrix {
    /// Identity of size `k`.
    pub fn identity(k: usize) -> Self {
        Self::from_band(k, 0, vec![1.0; k])
    }

    fn from_band(k: usize, w: usize, band: Vec<f64>) -> Self {
        CovarianceMatrix {
            k,
            storage: Storage::Banded { w, band },
            factor: OnceLock::new(),
        }
    }

    fn from_dense(k: usize, dense: Vec<f64>) -> Self {
        CovarianceMatrix {
            k,
            storage: Storage::Dense(dense),
            factor: OnceLock::new(),
        }
    }

    /// Builds a banded matrix from its upper band (`band[i*(w+1)+d] = Σ[i][i+d]`).
    /// The diagonal slot is forced to 1 after validation.
    pub fn from_upper_band(k: usize, w: usize, mut band: Vec<f64>) -> Result<Self> {
        if band.len() != k * (w + 1) {
            return Err(Error::Argument(format!(
                "band has {} entries, expected K*(w+1) = {}",
                band.len(),
                k * (w + 1)
            )));
        }
        for i in 0..k {
            let d = band[i * (w + 1)];
            if (d - 1.0).abs() > SYMMETRY_TOL {
                return Err(Error::Domain(format!("diagonal entry {} is {d}, expected 1", i + 1)));
            }
            band[i * (w + 1)] = 1.0;
            for dd in 1..=w {
                let v = band[i * (w + 1) + dd];
                if !v.is_finite() {
                    return Err(Error::Domain(format!("non-finite entry in row {}", i + 1)));
                }
                if i + dd >= k {
                    band[i * (w + 1) + dd] = 0.0;
                }
            }
        }
        Ok(Self::from_band(k, w, band))
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    /// Half-bandwidth for banded storage, `None` for dense.
    pub fn bandwidth(&self) -> Option<usize> {
        match &self.storage {
            Storage::Dense(_) => None,
            Storage::Banded { w, .. } => Some(*w),
        }
    }

    /// Largest |i − j| with a possibly non-zero entry.
    pub fn effective_bandwidth(&self) -> usize {
        self.bandwidth().unwrap_or(self.k.saturating_sub(1))
    }

    /// Entry Σ[i][j], 0-based.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(d) => d[i * self.k + j],
            Storage::Banded { w, band } => {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                let d = b - a;
                if d > *w {
                    0.0
                } else {
                    band[a * (w + 1) + d]
                }
            }
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let k = self.k;
        match &self.storage {
            Storage::Dense(d) => d.clone(),
            Storage::Banded { .. } => {
                let mut out = vec![0.0; k * k];
                for i in 0..k {
                    for j in 0..k {
                        out[i * k + j] = self.get(i, j);
                    }
                }
                out
            }
        }
    }

    /// Cholesky factor of Σ (jittered if required), computed once.
    pub fn cholesky(&self) -> Result<&CovarianceFactor> {
        let cached =
            self.factor.get_or_init(|| {
                let res =
                    match &self.storage {
                        Storage::Dense(d) => cholesky_lower(d, self.k).map(CovarianceFactor::Dense),
                        Storage::Banded { w, band } => {
                            let w = *w;
                            cholesky::cholesky_banded(self.k, w, |i, d| {
                                if i + d < self.k {
                                    band[i * (w + 1) + d]
                                } else {
                                    0.0
                                }
                            })
                            .map(CovarianceFactor::Banded)
                        }
                    };
                res.map_err(|e| match e {
                    Error::NotPositiveDefinite { minor, max_jitter } => (minor, max_jitter),
                    _ => (0, 0.0),
                })
            });
        cached
            .as_ref()
            .map_err(|&(minor, max_jitter)| Error::NotPositiveDefinite { minor, max_jitter })
    }

    /// Copies the principal block `[lo, lo + len)` (0-based) into `out`.
    pub(crate) fn principal_block_into(&self, lo: usize, len: usize, out: &mut Vec<f64>) {
        out.clear();
        out.reserve(len * len);
        for a in 0..len {
            for b in 0..len {
                out.push(self.get(lo + a, lo + b));
            }
        }
    }

    /// The N-neighbourhood window of hypothesis `i` (1-based).
    pub fn window(&self, i: usize, half_width: usize) -> Result<WindowCov> {
        extract_window(self, i, half_width)
    }

    /// Reversal `Σ'[i][j] = Σ[K-1-i][K-1-j]`.
    pub fn reversed(&self) -> CovarianceMatrix {
        let k = self.k;
        match &self.storage {
            Storage::Dense(d) => {
                let mut out = vec![0.0; k * k];
                for i in 0..k {
                    for j in 0..k {
                        out[i * k + j] = d[(k - 1 - i) * k + (k - 1 - j)];
                    }
                }
                Self::from_dense(k, out)
            }
            Storage::Banded { w, .. } => {
                let w = *w;
                let mut band = vec![0.0; k * (w + 1)];
                for i in 0..k {
                    for d in 0..=w {
                        if i + d < k {
                            band[i * (w + 1) + d] = self.get(k - 1 - i, k - 1 - i - d);
                        }
                    }
                }
                Self::from_band(k, w, band)
            }
        }
    }
}

/// Builds Σ from a validated spec.
///
/// AR(1) and Banded(1) use banded storage (AR(1) truncated at
/// [`AR1_TRUNCATION`]); long-range and equicorrelated are dense.
pub fn build_covariance(spec: &CovarianceSpec) -> Result<CovarianceMatrix> {
    spec.validate()?;
    let k = spec.k;
    let banded_from = |w: usize, f: &dyn Fn(usize) -> f64| {
        let mut band = vec![0.0; k * (w + 1)];
        for i in 0..k {
            band[i * (w + 1)] = 1.0;
            for d in 1..=w {
                if i + d < k {
                    band[i * (w + 1) + d] = f(d);
                }
            }
        }
        CovarianceMatrix::from_band(k, w, band)
    };
    let dense_from = |f: &dyn Fn(usize) -> f64| {
        let mut d = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                d[i * k + j] = if i == j { 1.0 } else { f(i.abs_diff(j)) };
            }
        }
        CovarianceMatrix::from_dense(k, d)
    };
    let m = match &spec.kind {
        CovarianceKind::Ar1 { rho } => {
            let rho = *rho;
            let f = move |d: usize| rho.powi(d as i32);
            match ar1_bandwidth(rho) {
                Some(w) if w < k => banded_from(w, &f),
                _ => dense_from(&f),
            }
        }
        CovarianceKind::Banded1 { rho } => {
            let rho = *rho;
            banded_from(1, &move |_| rho)
        }
        CovarianceKind::LongRange { h } => {
            let h = *h;
            dense_from(&move |d| fgn_autocorrelation(h, d))
        }
        CovarianceKind::Equicorrelated { rho } => {
            let rho = *rho;
            dense_from(&move |_| rho)
        }
        CovarianceKind::Explicit { entries, bandwidth } => {
            let sym = |i: usize, j: usize| {
                if i == j {
                    1.0
                } else {
                    0.5 * (entries[i * k + j] + entries[j * k + i])
                }
            };
            match bandwidth {
                Some(w) if *w < k => {
                    let w = *w;
                    let mut band = vec![0.0; k * (w + 1)];
                    for i in 0..k {
                        for d in 0..=w {
                            if i + d < k {
                                band[i * (w + 1) + d] = sym(i, i + d);
                            }
                        }
                    }
                    CovarianceMatrix::from_band(k, w, band)
                }
                _ => {
                    let mut d = vec![0.0; k * k];
                    for i in 0..k {
                        for j in 0..k {
                            d[i * k + j] = sym(i, j);
                        }
                    }
                    CovarianceMatrix::from_dense(k, d)
                }
            }
        }
    };
    Ok(m)
}

/// The contiguous principal block of Σ around one hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowCov {
    /// Centre hypothesis, 1-based.
    pub center: usize,
    pub half_width: usize,
    /// First hypothesis in the window, 1-based: `max(i − N, 1)`.
    pub lo: usize,
    /// Last hypothesis in the window, 1-based: `min(i + N, K)`.
    pub hi: usize,
    /// Position of the centre inside the window, 0-based.
    pub center_offset: usize,
    /// `len x len`, row-major.
    pub submatrix: Vec<f64>,
}

impl WindowCov {
    pub fn len(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// 0-based index range into the full vector.
    pub fn range(&self) -> std::ops::Range<usize> {
        (self.lo - 1)..self.hi
    }
}

/// 0-based window bounds `[lo, hi]` of hypothesis `i` (0-based).
#[inline]
pub(crate) fn window_bounds(k: usize, i: usize, n: usize) -> (usize, usize) {
    (i.saturating_sub(n), (i + n).min(k - 1))
}

/// Window of hypothesis `i` (1-based) with half-width `n`.
pub fn extract_window(sigma: &CovarianceMatrix, i: usize, n: usize) -> Result<WindowCov> {
    let k = sigma.dim();
    if i == 0 || i > k {
        return Err(Error::Argument(format!("index {i} outside 1..={k}")));
    }
    let (lo, hi) = window_bounds(k, i - 1, n);
    let mut sub = Vec::new();
    sigma.principal_block_into(lo, hi - lo + 1, &mut sub);
    Ok(WindowCov {
        center: i,
        half_width: n,
        lo: lo + 1,
        hi: hi + 1,
        center_offset: i - 1 - lo,
        submatrix: sub,
    })
}
