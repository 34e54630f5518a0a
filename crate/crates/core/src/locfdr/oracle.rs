//! Full-joint posterior by exhaustive enumeration, for small K.

use rayon::prelude::*;

use super::{check_inputs, kernel, provenance_hash, LocFdrVector};
use crate::covstruct::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::math::LogSumExp;
use crate::twogroup::TwoGroupParams;

/// Largest K the brute-force oracle accepts.
pub const ORACLE_MAX_K: usize = 20;

/// Exact `T_i = P(h_i = 0 | Z)` under the joint model, by summing over all
/// `2^K` state vectors. Refuses K above [`ORACLE_MAX_K`].
pub fn oracle_locfdr_bruteforce(z: &[f64], sigma: &CovarianceMatrix, params: &TwoGroupParams) -> Result<LocFdrVector> {
    check_inputs(z, sigma, params)?;
    let k = z.len();
    if k > ORACLE_MAX_K {
        return Err(Error::TooLarge { k, limit: ORACLE_MAX_K });
    }
    let full = sigma.to_dense();
    let configs = 1u64 << k;
    let chunk = 1u64 << k.min(8);
    // log weight of every configuration, computed in parallel chunks
    let weights: Vec<f64> = (0..configs / chunk)
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>> {
            let mut scratch = kernel::Scratch::default();
            let mut out = Vec::with_capacity(chunk as usize);
            for mask in c * chunk..(c + 1) * chunk {
                out.push(kernel::single_config(z, &full, params, mask, &mut scratch)?);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut all = LogSumExp::default();
    weights.iter().for_each(|&w| all.push(w));
    let values = (0..k)
        .map(|i| {
            let mut num = LogSumExp::default();
            for (m, &w) in weights.iter().enumerate() {
                if m >> i & 1 == 0 {
                    num.push(w);
                }
            }
            super::ratio(num, all)
        })
        .collect();
    Ok(LocFdrVector::new(
        values,
        k.saturating_sub(1),
        provenance_hash(params, Some((sigma, k))),
    ))
}
