//! Truncated probability mass functions on `{0..K}` with an explicit
//! overflow atom for mass above `K`.

use serde::Serialize;
use thiserror::Error;

use crate::format::sci17;

/// Tolerance on `Σ mass + overflow = 1` for a constructed [`Pmf`].
pub const NORM_TOL: f64 = 1e-12;

/// Tolerance on user-supplied probability tables before renormalization.
pub const INPUT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PmfError {
    #[error("probability at k={k} is {value}, expected a finite nonnegative number")]
    InvalidMass { k: usize, value: f64 },
    #[error("overflow mass {0} is not a finite nonnegative number")]
    InvalidOverflow(f64),
    #[error("total mass {total} deviates from 1 by more than {tol}")]
    NotNormalized { total: f64, tol: f64 },
    #[error("empty support")]
    Empty,
    #[error("operation requires zero overflow mass, found {0}")]
    NonzeroOverflow(f64),
    #[error("distribution has zero mean")]
    ZeroMean,
    #[error("no mass on positive values")]
    NoPositiveMass,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pmf {
    mass: Vec<f64>,
    overflow: f64,
}

impl Pmf {
    /// Builds a pmf, checking nonnegativity and normalization to [`NORM_TOL`].
    pub fn new(mass: Vec<f64>, overflow: f64) -> Result<Self, PmfError> {
        if mass.is_empty() {
            return Err(PmfError::Empty);
        }
        for (k, &p) in mass.iter().enumerate() {
            if !(p.is_finite() && p >= 0.0) {
                return Err(PmfError::InvalidMass { k, value: p });
            }
        }
        if !(overflow.is_finite() && overflow >= 0.0) {
            return Err(PmfError::InvalidOverflow(overflow));
        }
        let total = mass.iter().sum::<f64>() + overflow;
        if (total - 1.0).abs() > NORM_TOL {
            return Err(PmfError::NotNormalized { total, tol: NORM_TOL });
        }
        Ok(Self { mass, overflow })
    }

    /// Builds a pmf from `(value, probability)` pairs whose sum is within
    /// [`INPUT_TOL`] of one, renormalizing exactly. Repeated values add up.
    pub fn from_pairs(pairs: &[(usize, f64)]) -> Result<Self, PmfError> {
        if pairs.is_empty() {
            return Err(PmfError::Empty);
        }
        let top = pairs.iter().map(|&(k, _)| k).max().unwrap_or(0);
        let mut mass = vec![0.0; top + 1];
        for &(k, p) in pairs {
            if !(p.is_finite() && p >= 0.0) {
                return Err(PmfError::InvalidMass { k, value: p });
            }
            mass[k] += p;
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > INPUT_TOL {
            return Err(PmfError::NotNormalized { total, tol: INPUT_TOL });
        }
        mass.iter_mut().for_each(|p| *p /= total);
        Ok(Self { mass, overflow: 0.0 })
    }

    pub fn delta(k: usize) -> Self {
        let mut mass = vec![0.0; k + 1];
        mass[k] = 1.0;
        Self { mass, overflow: 0.0 }
    }

    /// Uniform law on `{lo..=hi}`.
    pub fn uniform(lo: usize, hi: usize) -> Self {
        assert!(lo <= hi);
        let mut mass = vec![0.0; hi + 1];
        let w = 1.0 / (hi - lo + 1) as f64;
        mass[lo..=hi].iter_mut().for_each(|p| *p = w);
        Self { mass, overflow: 0.0 }
    }

    /// Internal constructor for values produced by exact arithmetic that
    /// already satisfy the invariants up to rounding.
    pub(crate) fn from_parts(mass: Vec<f64>, overflow: f64) -> Self {
        debug_assert!(!mass.is_empty());
        debug_assert!(
            (mass.iter().sum::<f64>() + overflow - 1.0).abs() < 1e-9,
            "pmf mass drifted: {}",
            mass.iter().sum::<f64>() + overflow
        );
        Self { mass, overflow }
    }

    /// Largest value represented individually.
    pub fn bound(&self) -> usize {
        self.mass.len() - 1
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn overflow(&self) -> f64 {
        self.overflow
    }

    pub fn get(&self, k: usize) -> f64 {
        self.mass.get(k).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum::<f64>() + self.overflow
    }

    /// Mean over the represented values; overflow mass is excluded.
    pub fn mean(&self) -> f64 {
        self.mass.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    /// `E[X(X-1)]` over the represented values.
    pub fn factorial_moment2(&self) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .map(|(k, p)| (k as f64) * (k as f64 - 1.0) * p)
            .sum()
    }

    /// Generating function of the represented part, `Σ_k p_k s^k`.
    pub fn pgf(&self, s: f64) -> f64 {
        // Horner from the top.
        self.mass.iter().rev().fold(0.0, |acc, &p| acc * s + p)
    }

    /// Smallest value carrying positive mass, if any.
    pub fn min_support(&self) -> Option<usize> {
        self.mass.iter().position(|&p| p > 0.0)
    }

    /// Restricts to `{0..=k}`, moving mass above `k` into overflow.
    pub fn truncated(&self, k: usize) -> Self {
        if k >= self.bound() {
            let mut mass = self.mass.clone();
            mass.resize(k + 1, 0.0);
            return Self { mass, overflow: self.overflow };
        }
        let moved: f64 = self.mass[k + 1..].iter().sum();
        Self { mass: self.mass[..=k].to_vec(), overflow: self.overflow + moved }
    }

    /// Law of the sum of two independent variables, truncated at `k`.
    ///
    /// Mass from either overflow atom, and from pairs summing above `k`,
    /// lands in the result's overflow.
    pub fn convolve(&self, other: &Pmf, k: usize) -> Pmf {
        let mut mass = vec![0.0; k + 1];
        let mut spill = 0.0;
        for (i, &a) in self.mass.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.mass.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                if i + j <= k {
                    mass[i + j] += a * b;
                } else {
                    spill += a * b;
                }
            }
        }
        let in_self: f64 = self.mass.iter().sum();
        let overflow =
            self.overflow * other.total() + in_self * other.overflow + spill;
        Pmf { mass, overflow }
    }

    /// Law of the sum of `n` independent copies, truncated at `k`, by
    /// binary exponentiation of truncated convolution.
    pub fn convolution_power(&self, n: u64, k: usize) -> Pmf {
        let mut result = Pmf::delta(0).truncated(k);
        let mut base = self.truncated(k);
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                result = result.convolve(&base, k);
            }
            n >>= 1;
            if n > 0 {
                base = base.convolve(&base, k);
            }
        }
        result
    }

    /// Law conditioned on a positive value. Overflow counts as positive.
    pub fn conditioned_positive(&self) -> Result<Pmf, PmfError> {
        let alive: f64 = self.mass[1..].iter().sum::<f64>() + self.overflow;
        if alive <= 0.0 {
            return Err(PmfError::NoPositiveMass);
        }
        let mut mass: Vec<f64> = self.mass.iter().map(|p| p / alive).collect();
        mass[0] = 0.0;
        Ok(Pmf { mass, overflow: self.overflow / alive })
    }

    /// Size-biased law `q(k) = k p(k) / Σ_j j p(j)`.
    ///
    /// Overflow below `negligible` is dropped; anything larger is an error
    /// since the mean would be unknown.
    pub fn size_biased_with(&self, negligible: f64) -> Result<Pmf, PmfError> {
        if self.overflow > negligible {
            return Err(PmfError::NonzeroOverflow(self.overflow));
        }
        let mean = self.mean();
        if mean <= 0.0 {
            return Err(PmfError::ZeroMean);
        }
        let mass = self
            .mass
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p / mean)
            .collect();
        Ok(Pmf { mass, overflow: 0.0 })
    }

    /// L1 distance including the overflow atoms.
    pub fn l1_distance(&self, other: &Pmf) -> f64 {
        let n = self.mass.len().max(other.mass.len());
        (0..n).map(|k| (self.get(k) - other.get(k)).abs()).sum::<f64>()
            + (self.overflow - other.overflow).abs()
    }

    /// CSV with header `k,prob`, one row per value from `start` to the
    /// bound, then a trailing `overflow` row.
    pub fn to_csv(&self, start: usize) -> String {
        let mut out = String::from("k,prob\n");
        for k in start..=self.bound() {
            out.push_str(&format!("{},{}\n", k, sci17(self.mass[k])));
        }
        out.push_str(&format!("overflow,{}\n", sci17(self.overflow)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn fair_coin_square() {
        let coin = Pmf::from_pairs(&[(0, 0.5), (1, 0.5)]).unwrap();
        let sq = coin.convolution_power(2, 4);
        assert_abs_diff_eq!(sq.get(0), 0.25);
        assert_abs_diff_eq!(sq.get(1), 0.5);
        assert_abs_diff_eq!(sq.get(2), 0.25);
        assert_eq!(sq.overflow(), 0.0);
        assert_eq!(sq.bound(), 4);
    }

    #[test]
    fn empty_sum_is_delta_zero() {
        let base = Pmf::from_pairs(&[(1, 0.3), (3, 0.7)]).unwrap();
        let p = base.convolution_power(0, 5);
        assert_eq!(p.get(0), 1.0);
        assert_eq!(p.total(), 1.0);
    }

    #[test]
    fn deterministic_overflow() {
        let p = Pmf::delta(2).convolution_power(3, 4);
        assert_eq!(p.overflow(), 1.0);
        assert!(p.mass().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(Pmf::from_pairs(&[]), Err(PmfError::Empty)));
        assert!(matches!(
            Pmf::from_pairs(&[(0, -0.1), (1, 1.1)]),
            Err(PmfError::InvalidMass { .. })
        ));
        assert!(matches!(
            Pmf::from_pairs(&[(0, 0.5), (1, 0.4)]),
            Err(PmfError::NotNormalized { .. })
        ));
        assert!(Pmf::new(vec![0.5, 0.5], 1e-6).is_err());
    }

    #[test]
    fn size_biasing() {
        assert_eq!(Pmf::delta(1).size_biased_with(0.0).unwrap(), Pmf::delta(1));
        let p = Pmf::from_pairs(&[(1, 0.5), (2, 0.5)]).unwrap();
        let q = p.size_biased_with(0.0).unwrap();
        assert_abs_diff_eq!(q.get(1), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.get(2), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(Pmf::delta(0).size_biased_with(0.0), Err(PmfError::ZeroMean));
        let leaky = Pmf::new(vec![0.0, 0.9], 0.1).unwrap();
        assert!(matches!(leaky.size_biased_with(0.0), Err(PmfError::NonzeroOverflow(_))));
    }

    #[test]
    fn csv_layout() {
        let p = Pmf::new(vec![0.0, 0.5, 0.25], 0.25).unwrap();
        let csv = p.to_csv(1);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "k,prob");
        assert!(lines[1].starts_with("1,5.0000000000000000e-1"));
        assert!(lines[3].starts_with("overflow,"));
        assert_eq!(lines.len(), 4);
    }

    fn arb_pmf() -> impl Strategy<Value = Pmf> {
        prop::collection::vec(0.0f64..1.0, 1..12).prop_filter_map("zero", |w| {
            let t: f64 = w.iter().sum();
            (t > 1e-3).then(|| {
                let pairs: Vec<(usize, f64)> =
                    w.iter().enumerate().map(|(k, x)| (k, x / t)).collect();
                Pmf::from_pairs(&pairs).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn convolution_conserves_mass(a in arb_pmf(), b in arb_pmf(), k in 0usize..20) {
            let c = a.truncated(k.min(a.bound())).convolve(&b, k);
            prop_assert!((c.total() - 1.0).abs() < NORM_TOL);
            prop_assert!(c.overflow() >= a.truncated(k.min(a.bound())).overflow() - 1e-15);
        }

        #[test]
        fn power_matches_repeated_convolution(a in arb_pmf(), n in 0u64..7, k in 1usize..25) {
            let fast = a.convolution_power(n, k);
            let mut slow = Pmf::delta(0).truncated(k);
            for _ in 0..n {
                slow = slow.convolve(&a, k);
            }
            prop_assert!(fast.l1_distance(&slow) < 1e-12);
        }
    }
}
