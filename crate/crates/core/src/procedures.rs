//! Rejection rules: the fixed-cutoff rule on `T_{i,N}` and the BH,
//! adaptive BH and Sun-Cai baselines. Rejected indices are 1-based.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::locfdr::LocFdrVector;
use crate::math::normal_sf;

/// Which rule produced a [`RejectionSet`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RuleDescriptor {
    Tn { half_width: usize, t: f64 },
    Bh { alpha: f64 },
    Abh { alpha: f64, pi_hat: f64 },
    SunCai { alpha: f64 },
}

impl fmt::Display for RuleDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleDescriptor::Tn { half_width, t } => write!(f, "T{half_width}(t={t})"),
            RuleDescriptor::Bh { alpha } => write!(f, "BH(alpha={alpha})"),
            RuleDescriptor::Abh { alpha, pi_hat } => write!(f, "ABH(alpha={alpha}, pi={pi_hat})"),
            RuleDescriptor::SunCai { alpha } => write!(f, "SC(alpha={alpha})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionSet {
    /// Sorted, unique, 1-based.
    pub rejected: Vec<usize>,
    pub rule: RuleDescriptor,
    /// Number of hypotheses the rule was applied to.
    pub k: usize,
}

impl RejectionSet {
    pub fn len(&self) -> usize {
        self.rejected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rejected.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.rejected.binary_search(&i).is_ok()
    }

    /// Indicator vector of length K.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.k];
        for &i in &self.rejected {
            m[i - 1] = true;
        }
        m
    }

    /// Number of indices rejected by both sets.
    pub fn common(&self, other: &RejectionSet) -> usize {
        let (mut a, mut b, mut n) = (0, 0, 0);
        while a < self.rejected.len() && b < other.rejected.len() {
            match self.rejected[a].cmp(&other.rejected[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    a += 1;
                    b += 1;
                }
            }
        }
        n
    }
}

/// Rejects `{i : T_i ≤ t}`.
pub fn tn_rule(t_values: &LocFdrVector, t: f64) -> RejectionSet {
    let rejected = t_values
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= t)
        .map(|(i, _)| i + 1)
        .collect();
    RejectionSet {
        rejected,
        rule: RuleDescriptor::Tn {
            half_width: t_values.half_width(),
            t,
        },
        k: t_values.len(),
    }
}

/// Two-sided p-values `2·(1 − Φ(|z|))`.
pub fn z_to_pvalue(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| (2.0 * normal_sf(v.abs())).min(1.0)).collect()
}

fn check_p(p: &[f64]) -> Result<()> {
    if let Some(i) = p.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Argument(format!("p-value {} = {} outside [0, 1]", i + 1, p[i])));
    }
    Ok(())
}

/// Indices sorted by `key` ascending, ties kept in index order.
fn order(key: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..key.len()).collect();
    idx.sort_by(|&a, &b| key[a].total_cmp(&key[b]).then(a.cmp(&b)));
    idx
}

/// All indices whose key is at most `cut`, 1-based and sorted.
fn at_or_below(key: &[f64], cut: f64) -> Vec<usize> {
    key.iter()
        .enumerate()
        .filter(|(_, &v)| v <= cut)
        .map(|(i, _)| i + 1)
        .collect()
}

fn step_up(p: &[f64], level: f64) -> Vec<usize> {
    let k = p.len();
    let idx = order(p);
    let mut cut = None;
    for (r, &i) in idx.iter().enumerate() {
        if p[i] <= (r + 1) as f64 * level / k as f64 {
            cut = Some(p[i]);
        }
    }
    cut.map_or_else(Vec::new, |c| at_or_below(p, c))
}

/// Benjamini-Hochberg step-up at level `alpha`.
pub fn bh(p: &[f64], alpha: f64) -> Result<RejectionSet> {
    check_p(p)?;
    Ok(RejectionSet {
        rejected: step_up(p, alpha),
        rule: RuleDescriptor::Bh { alpha },
        k: p.len(),
    })
}

/// BH at level `alpha / (1 − pi_hat)`.
pub fn adaptive_bh(p: &[f64], alpha: f64, pi_hat: f64) -> Result<RejectionSet> {
    check_p(p)?;
    if !(0.0..1.0).contains(&pi_hat) {
        return Err(Error::Argument(format!("pi_hat = {pi_hat} must lie in [0, 1)")));
    }
    Ok(RejectionSet {
        rejected: step_up(p, alpha / (1.0 - pi_hat)),
        rule: RuleDescriptor::Abh { alpha, pi_hat },
        k: p.len(),
    })
}

/// Rejects the largest prefix of the sorted marginal local fdrs whose
/// running mean is at most `alpha`. Tied values enter together.
pub fn sun_cai(t0: &LocFdrVector, alpha: f64) -> Result<RejectionSet> {
    let t = t0.values();
    if t.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Argument("local fdr values must lie in [0, 1]".into()));
    }
    let idx = order(t);
    let mut cut = None;
    let mut sum = 0.0;
    let mut r = 0;
    while r < idx.len() {
        let v = t[idx[r]];
        while r < idx.len() && t[idx[r]] == v {
            sum += v;
            r += 1;
        }
        if sum / r as f64 <= alpha {
            cut = Some(v);
        }
    }
    Ok(RejectionSet {
        rejected: cut.map_or_else(Vec::new, |c| at_or_below(t, c)),
        rule: RuleDescriptor::SunCai { alpha },
        k: t.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(v: &[f64]) -> LocFdrVector {
        LocFdrVector::new(v.to_vec(), 0, 0)
    }

    #[test]
    fn tn_examples() {
        let t = lv(&[0.1, 0.5, 0.05]);
        assert_eq!(tn_rule(&t, 0.1).rejected, vec![1, 3]);
        assert!(tn_rule(&t, 0.0).is_empty());
        assert_eq!(tn_rule(&t, 1.0).rejected, vec![1, 2, 3]);
    }

    #[test]
    fn pvalues() {
        let p = z_to_pvalue(&[0.0, 1.959964, -1.959964]);
        assert_eq!(p[0], 1.0);
        assert!((p[1] - 0.05).abs() < 1e-6);
        assert_eq!(p[1], p[2]);
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh(&[0.01, 0.02, 0.5], 0.05).unwrap().rejected, vec![1, 2]);
        assert!(bh(&[1.0, 1.0], 0.05).unwrap().is_empty());
        assert_eq!(bh(&[0.04], 0.05).unwrap().rejected, vec![1]);
        // step-up: p_(2) passes even though p_(1) alone would not lead
        assert_eq!(bh(&[0.03, 0.04, 0.9], 0.06).unwrap().rejected, vec![1, 2]);
        assert!(bh(&[1.2], 0.05).is_err());
    }

    #[test]
    fn abh_examples() {
        let p = [0.01, 0.02, 0.5];
        assert_eq!(
            adaptive_bh(&p, 0.05, 0.0).unwrap(),
            RejectionSet {
                rule: RuleDescriptor::Abh {
                    alpha: 0.05,
                    pi_hat: 0.0
                },
                ..bh(&p, 0.05).unwrap()
            }
        );
        assert_eq!(adaptive_bh(&p, 0.05, 0.5).unwrap().rejected, vec![1, 2]);
        assert!(adaptive_bh(&p, 0.05, 1.0).is_err());
    }

    #[test]
    fn sun_cai_examples() {
        assert_eq!(sun_cai(&lv(&[0.01, 0.05, 0.2]), 0.05).unwrap().rejected, vec![1, 2]);
        assert!(sun_cai(&lv(&[1.0, 1.0]), 0.05).unwrap().is_empty());
        assert_eq!(sun_cai(&lv(&[0.01, 0.02, 0.03]), 0.05).unwrap().len(), 3);
        // ties at the boundary enter or leave together
        assert_eq!(sun_cai(&lv(&[0.0, 0.1, 0.1]), 0.05).unwrap().rejected, vec![1]);
    }

    #[test]
    fn common_counts() {
        let a = RejectionSet {
            rejected: vec![1, 3, 5, 7],
            rule: RuleDescriptor::Bh { alpha: 0.1 },
            k: 8,
        };
        let b = RejectionSet {
            rejected: vec![2, 3, 7, 8],
            rule: RuleDescriptor::Bh { alpha: 0.1 },
            k: 8,
        };
        assert_eq!(a.common(&b), 2);
        assert_eq!(a.mask().iter().filter(|&&m| m).count(), 4);
        assert!(a.contains(5) && !a.contains(4));
    }
}
