//! Offspring laws of the model and their derived quantities.
//!
//! An [`OffspringLaw`] is a finite joint distribution of `(Z0, Z1)`, the
//! numbers of children one parasite sends into the first and second
//! daughter cell. Everything else in the crate is computed from it.

mod config;
mod regime;

use std::fmt;

use serde::Serialize;
use serde_json::{json, Value};
use statrs::distribution::{Binomial, Discrete};
use thiserror::Error;

use crate::pmf::{Pmf, PmfError, INPUT_TOL};

pub use config::{load_model_config, parse_model_config, ConfigError};
pub use regime::{classify_regime, Boundary, D4Sublabel, Regime, RegimeLabel, DEFAULT_REGIME_TOL};

/// Largest tail mass the folded linear-fractional marginals may discard.
pub const LF_TAIL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("offspring table is empty")]
    EmptySupport,
    #[error("negative probability {prob} for outcome ({k0},{k1})")]
    NegativeProbability { k0: u32, k1: u32, prob: f64 },
    #[error("probabilities sum to {0}, expected 1 within 1e-9")]
    NotNormalized(f64),
    #[error("probability {0} is not in [0,1]")]
    ProbabilityOutOfRange(f64),
    #[error("parameters violate 0 < p < 1 and 0 < b < (1-p)^2 (b={b}, p={p})")]
    LinearFractionalDomain { b: f64, p: f64 },
    #[error("kmax={kmax} leaves tail mass {tail:e} above {LF_TAIL_TOL:e}")]
    KmaxTooSmall { kmax: u32, tail: f64 },
    #[error("count distribution has overflow mass {0}; a finite law is required")]
    InfiniteCountLaw(f64),
    #[error("daughter index {0} is not 0 or 1")]
    InvalidDaughter(usize),
    #[error("generating function argument {0} outside [0,1]")]
    OutsideUnitInterval(f64),
    #[error("mean offspring must be positive for both daughters (m0={m0}, m1={m1})")]
    NonPositiveMean { m0: f64, m1: f64 },
    #[error("non-admissible offspring law: {0}")]
    Degenerate(Degeneracy),
    #[error(transparent)]
    Pmf(#[from] PmfError),
}

/// How a law was built; echoed into reports so they are self-describing.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Table,
    BinomialSplit { z_pmf: Vec<(usize, f64)>, p: f64 },
    Cluster { z_pmf: Vec<(usize, f64)>, p: f64 },
    LinearFractionalIndependent { b: f64, p: f64, kmax: u32 },
}

impl Family {
    pub fn tag(&self) -> &'static str {
        match self {
            Family::Table => "table",
            Family::BinomialSplit { .. } => "binomial_split",
            Family::Cluster { .. } => "cluster",
            Family::LinearFractionalIndependent { .. } => "linear_fractional_independent",
        }
    }
}

/// Ways a law can fail the non-degeneracy requirement
/// `P((Z0,Z1)=(1,1)) < 1` and `P((Z0,Z1) ∈ {(1,0),(0,1)}) < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    AlwaysOneEach,
    AlwaysSingleChild,
}

impl fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Degeneracy::AlwaysOneEach => write!(
                f,
                "P((Z0,Z1)=(1,1)) = 1 violates the non-degeneracy condition P((Z0,Z1)=(1,1)) < 1"
            ),
            Degeneracy::AlwaysSingleChild => write!(
                f,
                "P((Z0,Z1) in {{(1,0),(0,1)}}) = 1 violates the non-degeneracy condition \
                 P((Z0,Z1) in {{(1,0),(0,1)}}) < 1"
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Outcome {
    pub k0: u32,
    pub k1: u32,
    pub prob: f64,
}

impl Outcome {
    pub fn total(&self) -> u64 {
        self.k0 as u64 + self.k1 as u64
    }
}

/// Finite joint law of `(Z0, Z1)`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringLaw {
    outcomes: Vec<Outcome>,
    family: Family,
    degeneracy: Option<Degeneracy>,
    folded_tail: f64,
    marginals: [Pmf; 2],
    total: Pmf,
}

impl OffspringLaw {
    /// Builds a law from `(k0, k1, prob)` rows. Zero-probability rows are
    /// dropped, repeated pairs are merged and the result is renormalized.
    pub fn from_table(entries: &[(u32, u32, f64)]) -> Result<Self, ModelError> {
        Self::build(entries, Family::Table, 0.0)
    }

    fn build(entries: &[(u32, u32, f64)], family: Family, folded_tail: f64) -> Result<Self, ModelError> {
        let mut rows: Vec<(u32, u32, f64)> = Vec::with_capacity(entries.len());
        for &(k0, k1, prob) in entries {
            if !(prob >= 0.0) || !prob.is_finite() {
                return Err(ModelError::NegativeProbability { k0, k1, prob });
            }
            if prob > 0.0 {
                rows.push((k0, k1, prob));
            }
        }
        if rows.is_empty() {
            return Err(ModelError::EmptySupport);
        }
        rows.sort_by_key(|&(k0, k1, _)| (k0, k1));
        let mut outcomes: Vec<Outcome> = Vec::with_capacity(rows.len());
        for (k0, k1, prob) in rows {
            match outcomes.last_mut() {
                Some(last) if last.k0 == k0 && last.k1 == k1 => last.prob += prob,
                _ => outcomes.push(Outcome { k0, k1, prob }),
            }
        }
        let total: f64 = outcomes.iter().map(|o| o.prob).sum();
        if (total - 1.0).abs() > INPUT_TOL {
            return Err(ModelError::NotNormalized(total));
        }
        outcomes.iter_mut().for_each(|o| o.prob /= total);

        let degeneracy = if outcomes.iter().all(|o| (o.k0, o.k1) == (1, 1)) {
            Some(Degeneracy::AlwaysOneEach)
        } else if outcomes.iter().all(|o| matches!((o.k0, o.k1), (1, 0) | (0, 1))) {
            Some(Degeneracy::AlwaysSingleChild)
        } else {
            None
        };

        let marginal = |pick: fn(&Outcome) -> u32| {
            let pairs: Vec<(usize, f64)> =
                outcomes.iter().map(|o| (pick(o) as usize, o.prob)).collect();
            Pmf::from_pairs(&pairs)
        };
        let marginals = [marginal(|o| o.k0)?, marginal(|o| o.k1)?];
        let total_pairs: Vec<(usize, f64)> =
            outcomes.iter().map(|o| (o.total() as usize, o.prob)).collect();
        let total = Pmf::from_pairs(&total_pairs)?;

        Ok(Self { outcomes, family, degeneracy, folded_tail, marginals, total })
    }

    /// Total offspring `Z` with law `z_pmf`; each child independently goes
    /// to the first daughter with probability `p`.
    pub fn binomial_split(z_pmf: &Pmf, p: f64) -> Result<Self, ModelError> {
        check_probability(p)?;
        let z_pairs = finite_pairs(z_pmf)?;
        let mut entries = Vec::new();
        for &(z, pz) in &z_pairs {
            for k0 in 0..=z {
                let pk = if p == 0.0 || p == 1.0 {
                    let all_first = p == 1.0;
                    if (all_first && k0 == z) || (!all_first && k0 == 0) { 1.0 } else { 0.0 }
                } else {
                    Binomial::new(p, z as u64).expect("valid binomial").pmf(k0 as u64)
                };
                entries.push((k0 as u32, (z - k0) as u32, pz * pk));
            }
        }
        Self::build(&entries, Family::BinomialSplit { z_pmf: z_pairs, p }, 0.0)
    }

    /// Each parasite produces a cluster of `Z` children that all go to the
    /// first daughter with probability `p`, otherwise all to the second.
    pub fn cluster(z_pmf: &Pmf, p: f64) -> Result<Self, ModelError> {
        check_probability(p)?;
        let z_pairs = finite_pairs(z_pmf)?;
        let mut entries = Vec::new();
        for &(z, pz) in &z_pairs {
            entries.push((z as u32, 0, p * pz));
            entries.push((0, z as u32, (1.0 - p) * pz));
        }
        Self::build(&entries, Family::Cluster { z_pmf: z_pairs, p }, 0.0)
    }

    /// Independent coordinates with the symmetric linear-fractional marginal
    /// `P(k) = b p^(k-1)` for `k >= 1`, `P(0) = (1-b-p)/(1-p)`, truncated at
    /// `kmax` with the tail folded into the `kmax` atom.
    pub fn linear_fractional_independent(b: f64, p: f64, kmax: u32) -> Result<Self, ModelError> {
        check_linear_fractional(b, p)?;
        if kmax == 0 {
            return Err(ModelError::KmaxTooSmall { kmax, tail: b / (1.0 - p) });
        }
        let tail = b * p.powi(kmax as i32) / (1.0 - p);
        if tail >= LF_TAIL_TOL {
            return Err(ModelError::KmaxTooSmall { kmax, tail });
        }
        let mut marginal = Vec::with_capacity(kmax as usize + 1);
        marginal.push((1.0 - b - p) / (1.0 - p));
        for k in 1..kmax {
            marginal.push(b * p.powi(k as i32 - 1));
        }
        marginal.push(b * p.powi(kmax as i32 - 1) / (1.0 - p));
        let mut entries = Vec::with_capacity(marginal.len() * marginal.len());
        for (i, &pi) in marginal.iter().enumerate() {
            for (j, &pj) in marginal.iter().enumerate() {
                entries.push((i as u32, j as u32, pi * pj));
            }
        }
        Self::build(&entries, Family::LinearFractionalIndependent { b, p, kmax }, tail)
    }

    /// Smallest `kmax` whose discarded marginal tail is below [`LF_TAIL_TOL`].
    pub fn linear_fractional_default_kmax(b: f64, p: f64) -> Result<u32, ModelError> {
        check_linear_fractional(b, p)?;
        let mut kmax = 1u32;
        while b * p.powi(kmax as i32) / (1.0 - p) >= LF_TAIL_TOL {
            kmax += 1;
        }
        Ok(kmax)
    }

    /// Law whose two daughters both receive an independent copy distributed
    /// as `offspring`. Along a random cell line this is the ordinary
    /// Galton–Watson process with that offspring law.
    pub fn diagonal(offspring: &Pmf) -> Result<Self, ModelError> {
        let pairs = finite_pairs(offspring)?;
        let entries: Vec<(u32, u32, f64)> =
            pairs.iter().map(|&(k, p)| (k as u32, k as u32, p)).collect();
        Self::build(&entries, Family::Table, 0.0)
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn degeneracy(&self) -> Option<Degeneracy> {
        self.degeneracy
    }

    pub fn is_admissible(&self) -> bool {
        self.degeneracy.is_none()
    }

    /// Marginal tail mass folded into the last atom (linear-fractional only).
    pub fn folded_tail(&self) -> f64 {
        self.folded_tail
    }

    pub fn marginal(&self, a: usize) -> Result<&Pmf, ModelError> {
        self.marginals.get(a).ok_or(ModelError::InvalidDaughter(a))
    }

    /// Law of `Z0 + Z1`, the offspring law of the total parasite count.
    pub fn total_offspring_law(&self) -> &Pmf {
        &self.total
    }

    pub fn means(&self) -> (f64, f64) {
        (self.marginals[0].mean(), self.marginals[1].mean())
    }

    /// `E(s^{Z_a})` for `s ∈ [0,1]`.
    pub fn pgf_eval(&self, a: usize, s: f64) -> Result<f64, ModelError> {
        if !(0.0..=1.0).contains(&s) {
            return Err(ModelError::OutsideUnitInterval(s));
        }
        self.pgf_eval_extended(a, s)
    }

    /// Same polynomial evaluated anywhere on the real line, for root finding
    /// past 1.
    pub fn pgf_eval_extended(&self, a: usize, s: f64) -> Result<f64, ModelError> {
        Ok(self.marginal(a)?.pgf(s))
    }

    /// `f_{a1} ∘ … ∘ f_{an}(s)`; the last path entry is applied first.
    pub fn pgf_compose(&self, path: &[usize], s: f64) -> Result<f64, ModelError> {
        if !(0.0..=1.0).contains(&s) {
            return Err(ModelError::OutsideUnitInterval(s));
        }
        path.iter().rev().try_fold(s, |acc, &a| self.pgf_eval(a, acc))
    }

    pub fn summarize(&self) -> ModelSummary {
        self.summarize_with_tol(DEFAULT_REGIME_TOL)
    }

    pub fn summarize_with_tol(&self, tol: f64) -> ModelSummary {
        let (m0, m1) = self.means();
        let mut m_hat = 0.0;
        let mut m_check = 0.0;
        for o in &self.outcomes {
            let t = o.total() as f64;
            m_hat += o.prob * t * (t - 1.0);
            if t > 1.0 {
                m_check += o.prob * t * t.ln();
            }
        }
        let sum_mean = m0 + m1;
        let prod_mean = m0 * m1;
        ModelSummary {
            m0,
            m1,
            m: sum_mean / 2.0,
            sum_mean,
            prod_mean,
            xlogx: xlogx(m0) + xlogx(m1),
            m_hat,
            m_check,
            bgw_extinction: bgw_extinction(&self.total),
            bpre_extinct_as: prod_mean <= 1.0,
            regime: classify_regime(m0, m1, tol).ok(),
            degeneracy: self.degeneracy,
        }
    }

    /// The law in the model config schema, for report echoes.
    pub fn config_json(&self) -> Value {
        match &self.family {
            Family::Table => json!({
                "family": "table",
                "table": self.outcomes.iter().map(|o| json!([o.k0, o.k1, o.prob])).collect::<Vec<_>>(),
            }),
            Family::BinomialSplit { z_pmf, p } | Family::Cluster { z_pmf, p } => json!({
                "family": self.family.tag(),
                "z_pmf": z_pmf.iter().map(|&(k, q)| json!([k, q])).collect::<Vec<_>>(),
                "p": p,
            }),
            Family::LinearFractionalIndependent { b, p, kmax } => json!({
                "family": "linear_fractional_independent",
                "b": b,
                "p": p,
                "kmax": kmax,
            }),
        }
    }
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 { x * x.ln() } else { 0.0 }
}

fn check_probability(p: f64) -> Result<(), ModelError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ModelError::ProbabilityOutOfRange(p))
    }
}

fn check_linear_fractional(b: f64, p: f64) -> Result<(), ModelError> {
    let ok = p > 0.0 && p < 1.0 && b > 0.0 && b < (1.0 - p) * (1.0 - p);
    if ok { Ok(()) } else { Err(ModelError::LinearFractionalDomain { b, p }) }
}

fn finite_pairs(pmf: &Pmf) -> Result<Vec<(usize, f64)>, ModelError> {
    if pmf.overflow() > 0.0 {
        return Err(ModelError::InfiniteCountLaw(pmf.overflow()));
    }
    Ok(pmf
        .mass()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(k, &p)| (k, p))
        .collect())
}

/// Extinction probability of a Galton–Watson process: the smallest fixed
/// point in `[0,1]` of the offspring generating function.
pub fn bgw_extinction(offspring: &Pmf) -> f64 {
    if offspring.get(1) == 1.0 {
        return 0.0;
    }
    if offspring.mean() <= 1.0 {
        return 1.0;
    }
    let h = |s: f64| offspring.pgf(s) - s;
    if h(0.0) <= 0.0 {
        return 0.0;
    }
    // h > 0 below the root and < 0 between the root and 1.
    let mut hi = 0.5;
    while h(hi) >= 0.0 {
        hi = 0.5 * (1.0 + hi);
        if 1.0 - hi < 1e-15 {
            return 1.0;
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Derived moments and the regime label of a law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub m0: f64,
    pub m1: f64,
    pub m: f64,
    pub sum_mean: f64,
    pub prod_mean: f64,
    pub xlogx: f64,
    pub m_hat: f64,
    pub m_check: f64,
    pub bgw_extinction: f64,
    pub bpre_extinct_as: bool,
    /// `None` when a daughter mean is zero.
    pub regime: Option<Regime>,
    pub degeneracy: Option<Degeneracy>,
}

impl ModelSummary {
    /// Regime of a law fit for theorem checks; degenerate laws are refused.
    pub fn admissible_regime(&self) -> Result<&Regime, ModelError> {
        if let Some(d) = self.degeneracy {
            return Err(ModelError::Degenerate(d));
        }
        self.regime
            .as_ref()
            .ok_or(ModelError::NonPositiveMean { m0: self.m0, m1: self.m1 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    pub(crate) fn law_a() -> OffspringLaw {
        OffspringLaw::from_table(&[(1, 0, 0.5), (0, 1, 0.5)]).unwrap()
    }
    pub(crate) fn law_b() -> OffspringLaw {
        OffspringLaw::from_table(&[(2, 2, 1.0)]).unwrap()
    }
    pub(crate) fn law_c() -> OffspringLaw {
        let kmax = OffspringLaw::linear_fractional_default_kmax(0.3, 0.3).unwrap();
        OffspringLaw::linear_fractional_independent(0.3, 0.3, kmax).unwrap()
    }
    pub(crate) fn law_d() -> OffspringLaw {
        OffspringLaw::from_table(&[(0, 0, 0.5), (1, 0, 0.25), (0, 1, 0.25)]).unwrap()
    }

    fn outcome_list(law: &OffspringLaw) -> Vec<(u32, u32, f64)> {
        law.outcomes().iter().map(|o| (o.k0, o.k1, o.prob)).collect()
    }

    fn assert_outcomes(law: &OffspringLaw, expected: &[(u32, u32, f64)]) {
        let mut exp = expected.to_vec();
        exp.sort_by_key(|&(a, b, _)| (a, b));
        let got = outcome_list(law);
        assert_eq!(got.len(), exp.len(), "{got:?}");
        for (g, e) in got.iter().zip(&exp) {
            assert_eq!((g.0, g.1), (e.0, e.1));
            assert_abs_diff_eq!(g.2, e.2, epsilon = 1e-15);
        }
    }

    #[test]
    fn table_flags() {
        let b = law_b();
        assert_eq!(b.outcomes().len(), 1);
        assert_eq!(b.degeneracy(), None);
        assert_eq!(b.family().tag(), "table");

        let one_one = OffspringLaw::from_table(&[(1, 1, 1.0)]).unwrap();
        assert_eq!(one_one.degeneracy(), Some(Degeneracy::AlwaysOneEach));
        assert_eq!(law_a().degeneracy(), Some(Degeneracy::AlwaysSingleChild));
        assert!(one_one.degeneracy().unwrap().to_string().contains("P((Z0,Z1)=(1,1)) < 1"));
    }

    #[test]
    fn table_errors() {
        assert_eq!(OffspringLaw::from_table(&[]), Err(ModelError::EmptySupport));
        assert!(matches!(
            OffspringLaw::from_table(&[(0, 0, -0.5), (1, 1, 1.5)]),
            Err(ModelError::NegativeProbability { .. })
        ));
        assert!(matches!(
            OffspringLaw::from_table(&[(0, 0, 0.5), (1, 1, 0.49)]),
            Err(ModelError::NotNormalized(_))
        ));
        // Within 1e-9: accepted and renormalized.
        let law = OffspringLaw::from_table(&[(0, 0, 0.5), (1, 1, 0.5 + 5e-10)]).unwrap();
        let total: f64 = law.outcomes().iter().map(|o| o.prob).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn binomial_split_examples() {
        let law = OffspringLaw::binomial_split(&Pmf::delta(1), 0.5).unwrap();
        assert_outcomes(&law, &[(1, 0, 0.5), (0, 1, 0.5)]);
        let law = OffspringLaw::binomial_split(&Pmf::delta(2), 1.0).unwrap();
        assert_outcomes(&law, &[(2, 0, 1.0)]);
        let z = Pmf::from_pairs(&[(0, 0.5), (2, 0.5)]).unwrap();
        let law = OffspringLaw::binomial_split(&z, 0.5).unwrap();
        assert_outcomes(&law, &[(0, 0, 0.5), (2, 0, 0.125), (1, 1, 0.25), (0, 2, 0.125)]);
        assert_eq!(
            OffspringLaw::binomial_split(&z, 1.5),
            Err(ModelError::ProbabilityOutOfRange(1.5))
        );
    }

    #[test]
    fn cluster_examples() {
        let law = OffspringLaw::cluster(&Pmf::delta(2), 0.5).unwrap();
        assert_outcomes(&law, &[(2, 0, 0.5), (0, 2, 0.5)]);
        let law = OffspringLaw::cluster(&Pmf::delta(0), 0.3).unwrap();
        assert_outcomes(&law, &[(0, 0, 1.0)]);
        let z = Pmf::from_pairs(&[(1, 0.5), (2, 0.5)]).unwrap();
        let law = OffspringLaw::cluster(&z, 0.25).unwrap();
        assert_outcomes(&law, &[(1, 0, 0.125), (0, 1, 0.375), (2, 0, 0.125), (0, 2, 0.375)]);
        assert!(OffspringLaw::cluster(&z, -0.1).is_err());
    }

    #[test]
    fn linear_fractional_marginal() {
        let law = law_c();
        let marg = law.marginal(0).unwrap();
        assert_abs_diff_eq!(marg.get(0), 4.0 / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(marg.get(1), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(marg.get(2), 0.09, epsilon = 1e-15);
        let (m0, m1) = law.means();
        assert_abs_diff_eq!(m0, 30.0 / 49.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m1, 30.0 / 49.0, epsilon = 1e-12);
        assert!(law.folded_tail() < LF_TAIL_TOL);
        assert!(matches!(
            OffspringLaw::linear_fractional_independent(0.49, 0.3, 40),
            Err(ModelError::LinearFractionalDomain { .. })
        ));
        assert!(matches!(
            OffspringLaw::linear_fractional_independent(0.3, 0.3, 5),
            Err(ModelError::KmaxTooSmall { .. })
        ));
    }

    #[test]
    fn summaries() {
        let s = law_b().summarize();
        assert_eq!((s.m0, s.m1, s.m, s.m_hat, s.bgw_extinction), (2.0, 2.0, 2.0, 12.0, 0.0));
        assert_eq!(s.regime.unwrap().label, RegimeLabel::D5);

        let s = law_d().summarize();
        assert_eq!((s.m0, s.m1, s.sum_mean), (0.25, 0.25, 0.5));
        assert_eq!(s.bgw_extinction, 1.0);
        assert_eq!(s.regime.as_ref().unwrap().label, RegimeLabel::D1);
        assert!(s.bpre_extinct_as);

        let s = law_c().summarize();
        let m = 30.0f64 / 49.0;
        assert_abs_diff_eq!(s.xlogx, 2.0 * m * m.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.xlogx, -0.600763, epsilon = 1e-6);
        assert_eq!(s.regime.as_ref().unwrap().label, RegimeLabel::D3);
        assert!(s.admissible_regime().is_ok());

        let s = law_a().summarize();
        assert!(matches!(s.admissible_regime(), Err(ModelError::Degenerate(_))));
        assert_eq!(s.regime.unwrap().label, RegimeLabel::D2);
    }

    #[test]
    fn supercritical_extinction_bisection() {
        // {(2,2):0.8,(0,0):0.2}: smallest root of 0.2 + 0.8 s^4 = s.
        let law = OffspringLaw::from_table(&[(2, 2, 0.8), (0, 0, 0.2)]).unwrap();
        let q = law.summarize().bgw_extinction;
        assert!(q > 0.2 && q < 0.25);
        assert_abs_diff_eq!(0.2 + 0.8 * q.powi(4), q, epsilon = 1e-13);
        // law C total: f0^2 with extinction well inside (0,1).
        let law = law_c();
        let q = law.summarize().bgw_extinction;
        let f = law.pgf_eval(0, q).unwrap();
        assert_abs_diff_eq!(f * f, q, epsilon = 1e-13);
    }

    #[test]
    fn pgf_examples() {
        assert_abs_diff_eq!(law_a().pgf_eval(0, 0.5).unwrap(), 0.75);
        assert_abs_diff_eq!(law_b().pgf_eval(1, 0.5).unwrap(), 0.25);
        assert_abs_diff_eq!(law_c().pgf_eval(0, 0.0).unwrap(), 4.0 / 7.0, epsilon = 1e-15);
        assert_eq!(law_a().pgf_eval(0, 1.5), Err(ModelError::OutsideUnitInterval(1.5)));
        assert_eq!(law_a().pgf_eval(2, 0.5), Err(ModelError::InvalidDaughter(2)));
        assert!(law_a().pgf_eval_extended(0, 1.5).is_ok());
    }

    #[test]
    fn pgf_composition() {
        assert_eq!(law_c().pgf_compose(&[], 0.3).unwrap(), 0.3);
        assert_abs_diff_eq!(law_b().pgf_compose(&[0, 1], 0.5).unwrap(), 0.0625);
        assert_abs_diff_eq!(law_a().pgf_compose(&[0, 0], 0.0).unwrap(), 0.75);
        // Order matters for asymmetric laws: last entry is innermost.
        let law = OffspringLaw::from_table(&[(2, 0, 0.5), (0, 0, 0.5)]).unwrap();
        let inner_first = law.pgf_eval(0, law.pgf_eval(1, 0.3).unwrap()).unwrap();
        assert_abs_diff_eq!(law.pgf_compose(&[0, 1], 0.3).unwrap(), inner_first);
    }

    #[test]
    fn projections() {
        let a = law_a();
        assert_eq!(a.marginal(0).unwrap().mass(), &[0.5, 0.5]);
        assert_eq!(a.total_offspring_law(), &Pmf::delta(1));
        assert_eq!(law_b().total_offspring_law(), &Pmf::delta(4));
        assert_eq!(law_d().total_offspring_law().mass(), &[0.5, 0.5]);
    }

    #[test]
    fn config_echo_round_trips() {
        for law in [law_b(), law_c(), law_d()] {
            let text = law.config_json().to_string();
            let back = parse_model_config(&text).unwrap();
            assert_eq!(back, law);
        }
    }

    fn arb_table() -> impl Strategy<Value = OffspringLaw> {
        prop::collection::vec((0u32..5, 0u32..5, 0.01f64..1.0), 1..8).prop_filter_map(
            "degenerate",
            |rows| {
                let t: f64 = rows.iter().map(|r| r.2).sum();
                let rows: Vec<_> = rows.iter().map(|&(a, b, p)| (a, b, p / t)).collect();
                let law = OffspringLaw::from_table(&rows).ok()?;
                let (m0, m1) = law.means();
                (law.is_admissible() && m0 > 0.0 && m1 > 0.0).then_some(law)
            },
        )
    }

    proptest! {
        #[test]
        fn pgf_normalized_with_mean_slope(law in arb_table()) {
            let h = 1e-6;
            for a in 0..2 {
                prop_assert!((law.pgf_eval(a, 1.0).unwrap() - 1.0).abs() < 1e-12);
                let slope = (law.pgf_eval(a, 1.0).unwrap() - law.pgf_eval(a, 1.0 - h).unwrap()) / h;
                let mean = law.marginal(a).unwrap().mean();
                prop_assert!((slope - mean).abs() < 1e-4, "slope {} mean {}", slope, mean);
            }
        }

        #[test]
        fn extinction_is_one_iff_subcritical_total(law in arb_table()) {
            let s = law.summarize();
            if s.sum_mean <= 1.0 {
                prop_assert_eq!(s.bgw_extinction, 1.0);
            } else {
                prop_assert!(s.bgw_extinction < 1.0 - 1e-12);
            }
            prop_assert_eq!(s.bpre_extinct_as, s.prod_mean <= 1.0);
        }

        #[test]
        fn split_families_have_proportional_means(
            w in prop::collection::vec(0.01f64..1.0, 1..6), p in 0.0f64..=1.0
        ) {
            let t: f64 = w.iter().sum();
            let pairs: Vec<(usize, f64)> = w.iter().enumerate().map(|(k, x)| (k, x / t)).collect();
            let z = Pmf::from_pairs(&pairs).unwrap();
            let ez = z.mean();
            for law in [OffspringLaw::binomial_split(&z, p).unwrap(), OffspringLaw::cluster(&z, p).unwrap()] {
                let (m0, m1) = law.means();
                prop_assert!((m0 - p * ez).abs() < 1e-12);
                prop_assert!((m1 - (1.0 - p) * ez).abs() < 1e-12);
            }
        }
    }
}
