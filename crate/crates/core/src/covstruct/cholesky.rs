//! Small dense and banded Cholesky kernels.
//!
//! Matrices are row-major `Vec<f64>`. Only the lower triangle of a factor is
//! meaningful; the strict upper triangle is kept at zero.

use crate::error::{Error, Result};

/// Diagonal shifts tried, in order, when a factorization fails.
pub const JITTER_LADDER: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// Lower-triangular Cholesky factor of a dense `n x n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerFactor {
    n: usize,
    data: Vec<f64>,
    jitter: f64,
}

impl LowerFactor {
    pub(crate) fn from_parts(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        LowerFactor { n, data, jitter: 0.0 }
    }

    pub(crate) fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Row-major entries, upper triangle zero.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Diagonal shift that was needed to factorize (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// log det(L Lᵀ).
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.data[i * self.n + i].ln()).sum::<f64>()
    }

    /// Solves `L y = rhs` in place.
    pub fn solve_lower_in_place(&self, rhs: &mut [f64]) {
        forward_substitute(&self.data, self.n, rhs);
    }

    /// `rhsᵀ (L Lᵀ)⁻¹ rhs`, using `scratch` as workspace.
    pub fn quad_form(&self, rhs: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        scratch.extend_from_slice(rhs);
        self.solve_lower_in_place(scratch);
        scratch.iter().map(|y| y * y).sum()
    }

    /// `L x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let row = &self.data[i * n..i * n + i + 1];
                row.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// Rank-one update (`sign > 0`) or downdate (`sign < 0`) of the factored
    /// matrix by `v vᵀ`. Entries of `v` before `start` must be zero; `v` is
    /// consumed as workspace.
    ///
    /// Returns `false` if a downdate would lose positive definiteness; the
    /// factor is then left in an unspecified state.
    pub fn rank_one_update(&mut self, v: &mut [f64], sign: f64, start: usize) -> bool {
        let n = self.n;
        let l = &mut self.data;
        for j in start..n {
            let ljj = l[j * n + j];
            let vj = v[j];
            if vj == 0.0 {
                continue;
            }
            let arg = ljj * ljj + sign * vj * vj;
            if !(arg > 0.0) || !arg.is_finite() {
                return false;
            }
            let r = arg.sqrt();
            let c = r / ljj;
            let s = vj / ljj;
            l[j * n + j] = r;
            for i in (j + 1)..n {
                let lij = (l[i * n + j] + sign * s * v[i]) / c;
                l[i * n + j] = lij;
                v[i] = c * v[i] - s * lij;
            }
        }
        true
    }

    /// Reconstructs `L Lᵀ` densely.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| self.get(i, k) * self.get(j, k)).sum();
                out[i * n + j] = s;
                out[j * n + i] = s;
            }
        }
        out
    }
}

#[inline]
pub(crate) fn forward_substitute(l: &[f64], n: usize, rhs: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        let s: f64 = row.iter().zip(&rhs[..i]).map(|(a, b)| a * b).sum();
        rhs[i] = (rhs[i] - s) / l[i * n + i];
    }
}

/// Plain Cholesky of a dense symmetric matrix. On failure returns the
/// 1-based index of the offending leading minor.
pub(crate) fn try_cholesky_dense(a: &[f64], n: usize) -> std::result::Result<Vec<f64>, usize> {
    let mut l = vec![0.0; n * n];
    cholesky_dense_into(a, n, &mut l)?;
    Ok(l)
}

/// As [`try_cholesky_dense`], writing into a caller-provided buffer.
pub(crate) fn cholesky_dense_into(a: &[f64], n: usize, l: &mut [f64]) -> std::result::Result<(), usize> {
    debug_assert_eq!(a.len(), n * n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(i + 1);
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
        for j in (i + 1)..n {
            l[i * n + j] = 0.0;
        }
    }
    Ok(())
}

/// Cholesky factor of a symmetric positive (semi-)definite matrix.
///
/// If the plain factorization fails, the matrix is replaced by
/// `(A + δI) / (1 + δ)` for δ in [`JITTER_LADDER`], which keeps a unit
/// diagonal unit. Fails with the leading-minor index of the last attempt.
pub fn cholesky_lower(a: &[f64], n: usize) -> Result<LowerFactor> {
    if a.len() != n * n {
        return Err(Error::Argument(format!(
            "expected {n}x{n} = {} entries, got {}",
            n * n,
            a.len()
        )));
    }
    let mut minor = match try_cholesky_dense(a, n) {
        Ok(data) => return Ok(LowerFactor { n, data, jitter: 0.0 }),
        Err(m) => m,
    };
    let mut shifted = a.to_vec();
    for &delta in &JITTER_LADDER {
        let scale = 1.0 / (1.0 + delta);
        for i in 0..n {
            for j in 0..n {
                let d = if i == j { delta } else { 0.0 };
                shifted[i * n + j] = (a[i * n + j] + d) * scale;
            }
        }
        match try_cholesky_dense(&shifted, n) {
            Ok(data) => return Ok(LowerFactor { n, data, jitter: delta }),
            Err(m) => minor = m,
        }
    }
    Err(Error::NotPositiveDefinite {
        minor,
        max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })
}

/// Lower Cholesky factor of a banded symmetric matrix of half-bandwidth `w`.
///
/// Storage: `data[i * (w + 1) + d]` holds `L[i][i - w + d]` for
/// `d = 0..=w` (slots with negative column are zero).
#[derive(Debug, Clone, PartialEq)]
pub struct BandedFactor {
    n: usize,
    w: usize,
    data: Vec<f64>,
    jitter: f64,
}

impl BandedFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.w
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i || i - j > self.w {
            0.0
        } else {
            self.data[i * (self.w + 1) + (j + self.w - i)]
        }
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.get(i, i).ln()).sum::<f64>()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let w = self.w;
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(w);
                (lo..=i).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }
}

/// Banded Cholesky. `band(i, d)` must return `A[i][i + d]` for `d = 0..=w`.
pub(crate) fn cholesky_banded(n: usize, w: usize, band: impl Fn(usize, usize) -> f64) -> Result<BandedFactor> {
    let attempt = |delta: f64| -> std::result::Result<Vec<f64>, usize> {
        let scale = 1.0 / (1.0 + delta);
        let a = |i: usize, j: usize| -> f64 {
            // i >= j, i - j <= w
            let d = if i == j { delta } else { 0.0 };
            (band(j, i - j) + d) * scale
        };
        let stride = w + 1;
        let mut l = vec![0.0; n * stride];
        for i in 0..n {
            let lo = i.saturating_sub(w);
            for j in lo..=i {
                let mut s = a(i, j);
                let klo = lo.max(j.saturating_sub(w));
                for k in klo..j {
                    s -= l[i * stride + (k + w - i)] * l[j * stride + (k + w - j)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(i + 1);
                    }
                    l[i * stride + w] = s.sqrt();
                } else {
                    l[i * stride + (j + w - i)] = s / l[j * stride + w];
                }
            }
        }
        Ok(l)
    };
    let mut minor = match attempt(0.0) {
        Ok(data) => {
            return Ok(BandedFactor {
                n,
                w,
                data,
                jitter: 0.0,
            })
        }
        Err(m) => m,
    };
    for &delta in &JITTER_LADDER {
        match attempt(delta) {
            Ok(data) => {
                return Ok(BandedFactor {
                    n,
                    w,
                    data,
                    jitter: delta,
                })
            }
            Err(m) => minor = m,
        }
    }
    Err(Error::NotPositiveDefinite {
        minor,
        max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })
}

/// Inverse of a symmetric positive definite matrix through its factor.
pub(crate) fn spd_inverse(factor: &LowerFactor) -> Vec<f64> {
    let n = factor.dim();
    let mut inv = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    // Columns of L⁻¹, then (L⁻¹)ᵀ L⁻¹.
    let mut linv = vec![0.0; n * n];
    for j in 0..n {
        col.iter_mut().for_each(|c| *c = 0.0);
        col[j] = 1.0;
        factor.solve_lower_in_place(&mut col);
        for i in 0..n {
            linv[i * n + j] = col[i];
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (i..n).map(|k| linv[k * n + i] * linv[k * n + j]).sum();
            inv[i * n + j] = s;
            inv[j * n + i] = s;
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_correlation(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        // B Bᵀ with rows normalised.
        let m = n + 3;
        let b: Vec<f64> = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..m).map(|k| b[i * m + k] * b[j * m + k]).sum();
            }
        }
        let d: Vec<f64> = (0..n).map(|i| a[i * n + i].sqrt()).collect();
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] /= d[i] * d[j];
            }
            a[i * n + i] = 1.0;
        }
        a
    }

    #[test]
    fn identity_factor_is_identity() {
        let n = 5;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        let f = cholesky_lower(&a, n).unwrap();
        assert_eq!(f.as_slice(), &a[..]);
        assert_eq!(f.jitter(), 0.0);
    }

    #[test]
    fn two_by_two_closed_form() {
        let f = cholesky_lower(&[1.0, 0.8, 0.8, 1.0], 2).unwrap();
        assert!((f.get(1, 1) - 0.6).abs() < 1e-15);
        assert!((f.get(1, 0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn random_correlation_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_correlation(8, &mut rng);
        let f = cholesky_lower(&a, 8).unwrap();
        let r = f.reconstruct();
        let err: f64 = a.iter().zip(&r).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-10, "reconstruction error {err}");
    }

    #[test]
    fn singular_matrix_is_rescued_by_jitter() {
        // rank one: all-ones 3x3
        let a = vec![1.0; 9];
        let f = cholesky_lower(&a, 3).unwrap();
        assert!(f.jitter() > 0.0);
        let r = f.reconstruct();
        let rel: f64 = a.iter().zip(&r).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() / 3.0;
        assert!(rel < 1e-5);
    }

    #[test]
    fn indefinite_matrix_reports_minor() {
        let a = [1.0, 2.0, 2.0, 1.0];
        match cholesky_lower(&a, 2) {
            Err(Error::NotPositiveDefinite { minor, .. }) => assert_eq!(minor, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rank_one_update_and_downdate_match_refactorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 6;
        let a = random_correlation(n, &mut rng);
        let mut f = cholesky_lower(&a, n).unwrap();
        let j = 3;
        let mut v = vec![0.0; n];
        v[j] = 2.0;
        assert!(f.rank_one_update(&mut v, 1.0, j));
        let mut b = a.clone();
        b[j * n + j] += 4.0;
        let g = cholesky_lower(&b, n).unwrap();
        for (x, y) in f.as_slice().iter().zip(g.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
        let mut v = vec![0.0; n];
        v[j] = 2.0;
        assert!(f.rank_one_update(&mut v, -1.0, j));
        let h = cholesky_lower(&a, n).unwrap();
        for (x, y) in f.as_slice().iter().zip(h.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn downdate_past_definiteness_is_refused() {
        let mut f = cholesky_lower(&[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        let mut v = vec![0.0, 1.5];
        assert!(!f.rank_one_update(&mut v, -1.0, 1));
    }

    #[test]
    fn banded_matches_dense() {
        let n = 30;
        let w = 4;
        let rho: f64 = 0.6;
        let band = |_i: usize, d: usize| if d <= w { rho.powi(d as i32) } else { 0.0 };
        let bf = cholesky_banded(n, w, band).unwrap();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d = i.abs_diff(j);
                a[i * n + j] = if d <= w { rho.powi(d as i32) } else { 0.0 };
            }
        }
        let df = cholesky_lower(&a, n).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((bf.get(i, j) - df.get(i, j)).abs() < 1e-12);
            }
        }
        assert!((bf.log_det() - df.log_det()).abs() < 1e-10);
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let a = random_correlation(n, &mut rng);
        let inv = spd_inverse(&cholesky_lower(&a, n).unwrap());
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..n).map(|k| a[i * n + k] * inv[k * n + j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-9);
            }
        }
    }
}
