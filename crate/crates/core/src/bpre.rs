//! The parasite count `Z_n` along a uniformly random cell line.
//!
//! Each generation the line moves to daughter 0 or 1 with probability ½,
//! and every parasite independently sends `Z^(a)` children into the chosen
//! daughter `a`. The process is a branching process in a random
//! environment with two equiprobable environments, whose generating
//! functions are the marginals `f0`, `f1` of the offspring law.
//!
//! Laws are tracked exactly as truncated pmfs on `{0..K}`. Mass pushed above
//! `K` lands in an absorbing overflow atom. For survival probabilities the
//! overflow atom is counted both ways and the result is a bracket; shapes
//! (conditioned laws, Yaglom limits) exclude it.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{ModelError, OffspringLaw, RegimeLabel};
use crate::pmf::{Pmf, PmfError};
use crate::sampling::OutcomeSampler;
use crate::stats::{least_squares, StatsError};

/// Truncation bound used by the solvers unless told otherwise.
pub const DEFAULT_SOLVER_BOUND: usize = 400;
/// Truncation bound for cross-checks against simulation.
pub const DEFAULT_SIM_BOUND: usize = 64;
pub const DEFAULT_YAGLOM_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Largest horizon for which survival is also computed by summing over
/// all `2^n` environment sequences.
pub const ENUMERATION_MAX_N: u32 = 12;
/// Overflow mass `size_biased` drops silently.
pub const SIZE_BIAS_NEGLIGIBLE: f64 = 1e-15;
/// Relative bracket width accepted by [`survival_decay_fit`].
pub const DECAY_BRACKET_RTOL: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BpreError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pmf(#[from] PmfError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(
        "regime {0} is not strongly subcritical; the Yaglom solver only covers D1, D2 and D3 \
         (the survival decay is no longer proportional to m^n)"
    )]
    NotStronglySubcritical(String),
    #[error("power iteration did not converge in {iterations} steps (last L1 change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("P(Z_{n} > 0) has lower bound {lower:e}; cannot condition on survival")]
    SurvivalUnresolved { n: u32, lower: f64, upper: f64 },
    #[error("survival bracket at n={n} is [{lower:e}, {upper:e}], too wide; raise K")]
    BracketTooWide { n: u32, lower: f64, upper: f64 },
    #[error("environment enumeration gives {enumerated} at n={n}, outside the DP bracket [{lower}, {upper}]")]
    EnumerationMismatch { n: u32, enumerated: f64, lower: f64, upper: f64 },
    #[error("total offspring mean {0} is not below 1")]
    NotSubcritical(f64),
    #[error("need at least 4 generations, got {0}")]
    TooFewPoints(usize),
    #[error("generations must be strictly increasing and positive")]
    BadRange,
    #[error("no fixed point of the generating function above 1 (b={b}, p={p})")]
    NoRootAboveOne { b: f64, p: f64 },
}

/// Averaged transition kernel of the line process truncated at `K`:
/// row `i` is `½(C0^(i) + C1^(i))` with `C_a^(i)` the law of a sum of `i`
/// independent `Z^(a)`.
#[derive(Debug, Clone)]
pub struct LineKernel {
    bound: usize,
    rows: Vec<Vec<f64>>,
    row_overflow: Vec<f64>,
}

impl LineKernel {
    pub fn new(law: &OffspringLaw, bound: usize) -> Self {
        let f0 = law.marginal(0).expect("daughter 0");
        let f1 = law.marginal(1).expect("daughter 1");
        Self::from_marginals(f0, f1, bound)
    }

    pub fn from_marginals(f0: &Pmf, f1: &Pmf, bound: usize) -> Self {
        let mut rows = Vec::with_capacity(bound + 1);
        let mut row_overflow = Vec::with_capacity(bound + 1);
        let mut c0 = Pmf::delta(0).truncated(bound);
        let mut c1 = c0.clone();
        for i in 0..=bound {
            if i > 0 {
                c0 = c0.convolve(f0, bound);
                c1 = c1.convolve(f1, bound);
            }
            let mut row: Vec<f64> =
                c0.mass().iter().zip(c1.mass()).map(|(a, b)| 0.5 * (a + b)).collect();
            let len = row.iter().rposition(|&p| p > 0.0).map_or(0, |j| j + 1);
            row.truncate(len);
            rows.push(row);
            row_overflow.push(0.5 * (c0.overflow() + c1.overflow()));
        }
        Self { bound, rows, row_overflow }
    }

    pub fn bound(&self) -> usize {
        self.bound
    }

    /// One generation of the line process. Mass of `current` above the
    /// bound is moved to overflow first.
    pub fn step(&self, current: &Pmf) -> Pmf {
        let current = if current.bound() > self.bound { current.truncated(self.bound) } else { current.clone() };
        let mut mass = vec![0.0; self.bound + 1];
        let mut overflow = current.overflow();
        for (i, &w) in current.mass().iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (j, &p) in self.rows[i].iter().enumerate() {
                mass[j] += w * p;
            }
            overflow += w * self.row_overflow[i];
        }
        Pmf::from_parts(mass, overflow)
    }

    /// Laws of `Z_0..=Z_n` started from `start`.
    pub fn evolve(&self, start: &Pmf, n: u32) -> Vec<Pmf> {
        let mut laws = Vec::with_capacity(n as usize + 1);
        laws.push(start.truncated(self.bound.max(start.bound())).truncated(self.bound));
        for t in 0..n as usize {
            let next = self.step(&laws[t]);
            laws.push(next);
        }
        laws
    }
}

/// Law of the sum of `n` independent copies of `base`, truncated at `k`.
pub fn convolution_power(base: &Pmf, n: u64, k: usize) -> Pmf {
    base.convolution_power(n, k)
}

/// One generation of the line process; builds the kernel on every call,
/// so repeated stepping should go through [`LineKernel`].
pub fn bpre_step(current: &Pmf, law: &OffspringLaw, k: usize) -> Pmf {
    LineKernel::new(law, k).step(current)
}

/// Laws of `Z_0..=Z_n` from a single parasite.
pub fn line_laws(law: &OffspringLaw, n: u32, k: usize) -> Vec<Pmf> {
    LineKernel::new(law, k).evolve(&Pmf::delta(1), n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalBracket {
    pub n: u32,
    /// Overflow counted as extinct.
    pub lower: f64,
    /// Overflow counted as alive.
    pub upper: f64,
    /// `2^-n Σ_paths (1 - f_path(0))`, for `n <= ENUMERATION_MAX_N`.
    pub enumerated: Option<f64>,
}

impl SurvivalBracket {
    fn from_law(n: u32, law: &Pmf) -> Self {
        let alive: f64 = law.mass()[1..].iter().sum();
        Self { n, lower: alive, upper: alive + law.overflow(), enumerated: None }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, x: f64, slack: f64) -> bool {
        x >= self.lower - slack && x <= self.upper + slack
    }
}

/// `P(Z_n > 0)` for `n = 0..=n_max` by summing over every environment
/// sequence. Exponential in `n_max`.
pub fn survival_by_enumeration(law: &OffspringLaw, n_max: u32) -> Vec<f64> {
    let f = [law.marginal(0).expect("daughter 0"), law.marginal(1).expect("daughter 1")];
    let mut level = vec![0.0f64];
    let mut out = vec![1.0];
    for _ in 0..n_max {
        level = level.iter().flat_map(|&s| [f[0].pgf(s), f[1].pgf(s)]).collect();
        out.push(1.0 - level.iter().sum::<f64>() / level.len() as f64);
    }
    out
}

/// Survival brackets for `n = 0..=n_max`, cross-checked against the
/// environment enumeration for small `n`.
pub fn survival_sequence(law: &OffspringLaw, n_max: u32, k: usize) -> Result<Vec<SurvivalBracket>, BpreError> {
    let laws = line_laws(law, n_max, k);
    let mut out: Vec<SurvivalBracket> =
        laws.iter().enumerate().map(|(n, p)| SurvivalBracket::from_law(n as u32, p)).collect();
    let enumerated = survival_by_enumeration(law, n_max.min(ENUMERATION_MAX_N));
    for (b, e) in out.iter_mut().zip(enumerated) {
        if !b.contains(e, 1e-10) {
            return Err(BpreError::EnumerationMismatch { n: b.n, enumerated: e, lower: b.lower, upper: b.upper });
        }
        b.enumerated = Some(e);
    }
    Ok(out)
}

pub fn survival_prob_exact(law: &OffspringLaw, n: u32, k: usize) -> Result<SurvivalBracket, BpreError> {
    Ok(*survival_sequence(law, n, k)?.last().expect("n+1 entries"))
}

/// Law of `Z_n` given `Z_n > 0`.
pub fn conditioned_pmf(law: &OffspringLaw, n: u32, k: usize) -> Result<Pmf, BpreError> {
    let laws = line_laws(law, n, k);
    let last = &laws[n as usize];
    let bracket = SurvivalBracket::from_law(n, last);
    if bracket.lower <= 0.0 {
        return Err(BpreError::SurvivalUnresolved { n, lower: bracket.lower, upper: bracket.upper });
    }
    Ok(last.conditioned_positive()?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YaglomResult {
    /// Quasistationary law, zero at 0 and without overflow.
    pub pmf: Pmf,
    /// Surviving mass of the last step before renormalizing; tends to `m`.
    pub decay_ratio: f64,
    pub iterations: usize,
    pub residual: ResidualReport,
    pub converged: bool,
    /// Mass pushed above the bound in the last step and dropped.
    pub leak: f64,
}

/// Largest deviation from `½(G(f0(s)) + G(f1(s))) = m G(s) + 1 − m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    pub max_abs: f64,
    /// Bound on the contribution of the candidate's overflow atom.
    pub overflow_bound: f64,
}

/// `s = 0, 0.05, …, 1`.
pub fn default_sample_points() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

pub fn functional_eq_residual(law: &OffspringLaw, candidate: &Pmf, sample_points: &[f64]) -> ResidualReport {
    let f0 = law.marginal(0).expect("daughter 0");
    let f1 = law.marginal(1).expect("daughter 1");
    let (m0, m1) = law.means();
    let m = 0.5 * (m0 + m1);
    let max_abs = sample_points
        .iter()
        .map(|&s| {
            let lhs = 0.5 * (candidate.pgf(f0.pgf(s)) + candidate.pgf(f1.pgf(s)));
            let rhs = m * candidate.pgf(s) + 1.0 - m;
            (lhs - rhs).abs()
        })
        .fold(0.0, f64::max);
    ResidualReport { max_abs, overflow_bound: (1.0 + m) * candidate.overflow() }
}

/// Yaglom limit of the line process by conditioned power iteration from `δ1`.
pub fn yaglom_power_iteration(
    law: &OffspringLaw,
    k: usize,
    tol: f64,
    max_iter: usize,
) -> Result<YaglomResult, BpreError> {
    yaglom_power_iteration_from(law, &Pmf::delta(1), k, tol, max_iter)
}

pub fn yaglom_power_iteration_from(
    law: &OffspringLaw,
    start: &Pmf,
    k: usize,
    tol: f64,
    max_iter: usize,
) -> Result<YaglomResult, BpreError> {
    let summary = law.summarize();
    let (m0, m1) = (summary.m0, summary.m1);
    let regime = summary.regime.ok_or(ModelError::NonPositiveMean { m0, m1 })?;
    if matches!(regime.label, RegimeLabel::D4 | RegimeLabel::D5) {
        return Err(BpreError::NotStronglySubcritical(regime.to_string()));
    }
    let kernel = LineKernel::new(law, k);
    let mut current = renormalize_positive(&start.truncated(k))?.0;
    let mut change = f64::INFINITY;
    let mut decay_ratio = 0.0;
    let mut leak = 0.0;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let stepped = kernel.step(&current);
        let (next, alive) = renormalize_positive(&stepped)?;
        decay_ratio = alive;
        leak = stepped.overflow() - current.overflow();
        change = next.l1_distance(&current);
        current = next;
        if change < tol {
            break;
        }
    }
    let converged = change < tol;
    if !converged {
        return Err(BpreError::NoConvergence { iterations, change });
    }
    let residual = functional_eq_residual(law, &current, &default_sample_points());
    Ok(YaglomResult { pmf: current, decay_ratio, iterations, residual, converged, leak })
}

/// Drops the mass at 0 and the overflow, renormalizes, and returns the
/// kept mass alongside.
fn renormalize_positive(p: &Pmf) -> Result<(Pmf, f64), BpreError> {
    let alive: f64 = p.mass()[1..].iter().sum();
    if alive <= 0.0 {
        return Err(PmfError::NoPositiveMass.into());
    }
    let mut mass: Vec<f64> = p.mass().iter().map(|x| x / alive).collect();
    mass[0] = 0.0;
    Ok((Pmf::from_parts(mass, 0.0), alive))
}

/// Fixed point above 1 of the linear-fractional generating function
/// `f(s) = (1−b−p)/(1−p) + b s / (1 − p s)`.
pub fn linear_fractional_fixed_point(b: f64, p: f64) -> Result<f64, BpreError> {
    if !(p > 0.0 && p < 1.0 && b > 0.0 && b < (1.0 - p) * (1.0 - p)) {
        return Err(ModelError::LinearFractionalDomain { b, p }.into());
    }
    let q0 = (1.0 - b - p) / (1.0 - p);
    // p s² − (1 + q0 p − b) s + q0 = 0
    let bq = 1.0 + q0 * p - b;
    let disc = bq * bq - 4.0 * p * q0;
    if disc < 0.0 {
        return Err(BpreError::NoRootAboveOne { b, p });
    }
    let s0 = (bq + disc.sqrt()) / (2.0 * p);
    if s0 > 1.0 { Ok(s0) } else { Err(BpreError::NoRootAboveOne { b, p }) }
}

/// Closed-form Yaglom law `P(Υ = k) = (s0 − 1) / s0^k` for the symmetric
/// linear-fractional law, on `{0..=kmax}` with the tail in overflow.
pub fn linear_fractional_yaglom(b: f64, p: f64, kmax: usize) -> Result<Pmf, BpreError> {
    let s0 = linear_fractional_fixed_point(b, p)?;
    let mut mass = vec![0.0; kmax + 1];
    for (k, slot) in mass.iter_mut().enumerate().skip(1) {
        *slot = (s0 - 1.0) * s0.powi(-(k as i32));
    }
    Ok(Pmf::from_parts(mass, s0.powi(-(kmax as i32))))
}

/// `q(k) = k p(k) / Σ_j j p(j)`. Overflow up to [`SIZE_BIAS_NEGLIGIBLE`] is
/// ignored.
pub fn size_biased(pmf: &Pmf) -> Result<Pmf, BpreError> {
    Ok(pmf.size_biased_with(SIZE_BIAS_NEGLIGIBLE)?)
}

/// Yaglom limit of a subcritical Galton–Watson process, solved as a line
/// process whose two environments coincide.
pub fn bgw_yaglom(total_law: &Pmf, k: usize, tol: f64) -> Result<YaglomResult, BpreError> {
    let mean = total_law.mean();
    if !(mean < 1.0) {
        return Err(BpreError::NotSubcritical(mean));
    }
    let law = OffspringLaw::diagonal(total_law)?;
    yaglom_power_iteration(&law, k, tol, DEFAULT_MAX_ITER)
}

/// `P(𝒵_k > 0)` for a Galton–Watson process from one individual, computed
/// on the survival scale to keep precision when it is tiny.
pub fn bgw_survival(total_law: &Pmf, k: u32) -> f64 {
    let mut s = 1.0f64;
    for _ in 0..k {
        // 1 − f(1 − s) = Σ_j p_j (1 − (1 − s)^j)
        let l = (-s).ln_1p();
        s = total_law
            .mass()
            .iter()
            .enumerate()
            .map(|(j, &p)| if s >= 1.0 { if j > 0 { p } else { 0.0 } } else { -p * (j as f64 * l).exp_m1() })
            .sum();
    }
    s
}

/// Law of `𝒵_n` given `𝒵_{n+k_ahead} > 0`, from one individual.
pub fn bgw_conditioned_future(total_law: &Pmf, n: u32, k_ahead: u32, k: usize) -> Result<Pmf, BpreError> {
    let law = OffspringLaw::diagonal(total_law)?;
    let zn = &line_laws(&law, n, k)[n as usize];
    let surv = bgw_survival(total_law, k_ahead);
    let l = (-surv).ln_1p();
    let mut mass: Vec<f64> = zn
        .mass()
        .iter()
        .enumerate()
        .map(|(i, &p)| if surv >= 1.0 { if i > 0 { p } else { 0.0 } } else { -p * (i as f64 * l).exp_m1() })
        .collect();
    let overflow = zn.overflow();
    let z: f64 = mass.iter().sum::<f64>() + overflow;
    if z <= 0.0 {
        return Err(BpreError::SurvivalUnresolved { n: n + k_ahead, lower: 0.0, upper: 0.0 });
    }
    mass.iter_mut().for_each(|x| *x /= z);
    Ok(Pmf::from_parts(mass, overflow / z))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub polynomial_exponent: f64,
    pub r2: f64,
    pub regime: RegimeLabel,
    pub note: Option<String>,
}

/// Least-squares fit `ln P(Z_n > 0) ≈ ln c + n ln(rate) + e ln n`.
pub fn survival_decay_fit(law: &OffspringLaw, ns: &[u32], k: usize) -> Result<DecayFit, BpreError> {
    if ns.len() < 4 {
        return Err(BpreError::TooFewPoints(ns.len()));
    }
    if ns[0] == 0 || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BpreError::BadRange);
    }
    let summary = law.summarize();
    let regime = summary.regime.ok_or(ModelError::NonPositiveMean { m0: summary.m0, m1: summary.m1 })?;
    let laws = line_laws(law, *ns.last().unwrap(), k);
    let mut rows = Vec::with_capacity(ns.len());
    let mut y = Vec::with_capacity(ns.len());
    for &n in ns {
        let b = SurvivalBracket::from_law(n, &laws[n as usize]);
        if !(b.lower > 0.0) || b.width() > DECAY_BRACKET_RTOL * b.lower {
            return Err(BpreError::BracketTooWide { n, lower: b.lower, upper: b.upper });
        }
        rows.push(vec![1.0, n as f64, (n as f64).ln()]);
        y.push(b.midpoint().ln());
    }
    let fit = least_squares(&rows, &y)?;
    let note = (regime.label == RegimeLabel::D4).then(|| {
        "D4: weakly or intermediately subcritical line process; fit is a diagnostic only".to_string()
    });
    Ok(DecayFit {
        rate: fit.coefficients[1].exp(),
        polynomial_exponent: fit.coefficients[2],
        r2: fit.r2,
        regime: regime.label,
        note,
    })
}

/// Draws line trajectories `Z_0..=Z_n` by direct simulation.
#[derive(Debug, Clone)]
pub struct LineSampler {
    marginals: [OutcomeSampler; 2],
}

impl LineSampler {
    pub fn new(law: &OffspringLaw) -> Self {
        let sampler = |a: usize| {
            let m = law.marginal(a).expect("daughter index");
            OutcomeSampler::new(m.mass().iter().enumerate().map(|(k, &p)| ((k as u64, 0), p)))
                .expect("marginal has positive mass")
        };
        Self { marginals: [sampler(0), sampler(1)] }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: u32, rng: &mut R) -> Vec<u64> {
        let mut path = Vec::with_capacity(n as usize + 1);
        let mut z = 1u64;
        path.push(z);
        for _ in 0..n {
            if z > 0 {
                let a = rng.random_bool(0.5) as usize;
                z = self.marginals[a].sum_of(z, 16, rng).0;
            }
            path.push(z);
        }
        path
    }
}

pub fn bpre_sample_line<R: Rng + ?Sized>(law: &OffspringLaw, n: u32, rng: &mut R) -> Vec<u64> {
    LineSampler::new(law).sample(n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::replicate_rng;
    use approx::assert_abs_diff_eq;

    fn law_a() -> OffspringLaw {
        OffspringLaw::from_table(&[(1, 0, 0.5), (0, 1, 0.5)]).unwrap()
    }
    fn law_b() -> OffspringLaw {
        OffspringLaw::from_table(&[(2, 2, 1.0)]).unwrap()
    }
    fn law_c() -> OffspringLaw {
        let kmax = OffspringLaw::linear_fractional_default_kmax(0.3, 0.3).unwrap();
        OffspringLaw::linear_fractional_independent(0.3, 0.3, kmax).unwrap()
    }
    fn law_d() -> OffspringLaw {
        OffspringLaw::from_table(&[(0, 0, 0.5), (1, 0, 0.25), (0, 1, 0.25)]).unwrap()
    }
    fn d4_law() -> OffspringLaw {
        let z = Pmf::from_pairs(&[(0, 0.4), (4, 0.6)]).unwrap();
        OffspringLaw::binomial_split(&z, 0.5 / 2.4).unwrap()
    }

    #[test]
    fn step_examples() {
        let next = bpre_step(&Pmf::delta(1), &law_d(), 8);
        assert_abs_diff_eq!(next.get(0), 0.75);
        assert_abs_diff_eq!(next.get(1), 0.25);
        let next = bpre_step(&Pmf::delta(1), &law_c(), 60);
        assert_abs_diff_eq!(next.get(0), 4.0 / 7.0, epsilon = 1e-15);
        for k in 1..10 {
            assert_abs_diff_eq!(next.get(k), 0.3 * 0.3f64.powi(k as i32 - 1), epsilon = 1e-15);
        }
        let next = bpre_step(&Pmf::delta(1), &law_b(), 8);
        assert_eq!(next.get(2), 1.0);
    }

    #[test]
    fn survival_examples() {
        let b = survival_prob_exact(&law_a(), 3, 16).unwrap();
        assert_abs_diff_eq!(b.lower, 0.125, epsilon = 1e-15);
        assert_eq!(b.width(), 0.0);
        let b = survival_prob_exact(&law_d(), 2, 16).unwrap();
        assert_abs_diff_eq!(b.lower, 0.0625, epsilon = 1e-15);
        assert_abs_diff_eq!(b.enumerated.unwrap(), 0.0625, epsilon = 1e-15);
        let b = survival_prob_exact(&law_c(), 1, 64).unwrap();
        assert_abs_diff_eq!(b.lower, 3.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn dp_agrees_with_environment_enumeration() {
        for law in [law_a(), law_c(), law_d(), d4_law()] {
            let seq = survival_sequence(&law, ENUMERATION_MAX_N, 400).unwrap();
            for b in &seq {
                let e = b.enumerated.unwrap();
                assert!(b.contains(e, 1e-12), "{b:?}");
            }
        }
    }

    #[test]
    fn conditioned_examples() {
        for n in [1, 4, 9] {
            assert_eq!(conditioned_pmf(&law_a(), n, 16).unwrap().get(1), 1.0);
        }
        assert_eq!(conditioned_pmf(&law_d(), 1, 16).unwrap().get(1), 1.0);
        let c = conditioned_pmf(&law_c(), 1, 64).unwrap();
        assert_abs_diff_eq!(c.get(1), 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(c.get(2), 0.21, epsilon = 1e-12);
        let dead = OffspringLaw::from_table(&[(0, 0, 1.0)]).unwrap();
        assert!(matches!(conditioned_pmf(&dead, 2, 16), Err(BpreError::SurvivalUnresolved { .. })));
    }

    #[test]
    fn yaglom_trivial_cases() {
        let r = yaglom_power_iteration(&law_a(), 50, 1e-12, 1000).unwrap();
        assert_eq!(r.pmf.get(1), 1.0);
        assert_abs_diff_eq!(r.decay_ratio, 0.5);
        let r = yaglom_power_iteration(&law_d(), 50, 1e-12, 1000).unwrap();
        assert_eq!(r.pmf.get(1), 1.0);
        assert_abs_diff_eq!(r.decay_ratio, 0.25);
        assert!(r.residual.max_abs < 1e-15);
    }

    #[test]
    fn yaglom_matches_closed_form_for_linear_fractional() {
        let law = law_c();
        let r = yaglom_power_iteration(&law, 400, 1e-12, 10_000).unwrap();
        let exact = linear_fractional_yaglom(0.3, 0.3, 400).unwrap();
        assert_abs_diff_eq!(r.pmf.get(1), 0.475, epsilon = 1e-10);
        assert_abs_diff_eq!(r.pmf.get(2), 0.249375, epsilon = 1e-10);
        for k in 1..=30 {
            assert_abs_diff_eq!(r.pmf.get(k), exact.get(k), epsilon = 1e-10);
        }
        assert_abs_diff_eq!(r.decay_ratio, 30.0 / 49.0, epsilon = 1e-6);
        assert!(r.residual.max_abs < 1e-8);
        assert_eq!(r.pmf.get(0), 0.0);
        assert_abs_diff_eq!(r.pmf.total(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn yaglom_fixed_point_and_uniqueness() {
        let law = law_c();
        let tol = 1e-12;
        let r = yaglom_power_iteration(&law, 200, tol, 10_000).unwrap();
        let kernel = LineKernel::new(&law, 200);
        let (again, ratio) = renormalize_positive(&kernel.step(&r.pmf)).unwrap();
        assert!(again.l1_distance(&r.pmf) < 10.0 * tol);
        assert_abs_diff_eq!(ratio, 30.0 / 49.0, epsilon = 1e-6);
        for start in [Pmf::delta(2), Pmf::uniform(1, 10)] {
            let other = yaglom_power_iteration_from(&law, &start, 200, tol, 10_000).unwrap();
            assert!(other.pmf.l1_distance(&r.pmf) < 10.0 * tol);
        }
    }

    #[test]
    fn yaglom_rejects_d4_and_d5() {
        let err = yaglom_power_iteration(&d4_law(), 50, 1e-12, 100).unwrap_err();
        assert!(matches!(err, BpreError::NotStronglySubcritical(_)));
        assert!(err.to_string().contains("D4"));
        assert!(matches!(
            yaglom_power_iteration(&law_b(), 50, 1e-12, 100),
            Err(BpreError::NotStronglySubcritical(_))
        ));
    }

    #[test]
    fn residual_examples() {
        let r = functional_eq_residual(&law_d(), &Pmf::delta(1), &default_sample_points());
        assert!(r.max_abs < 1e-15);
        let closed = linear_fractional_yaglom(0.3, 0.3, 200).unwrap();
        let r = functional_eq_residual(&law_c(), &closed, &default_sample_points());
        assert!(r.max_abs < 1e-8, "{r:?}");
        let mut uniform = Pmf::uniform(1, 5).mass().to_vec();
        uniform[0] = 0.0;
        let r = functional_eq_residual(&law_c(), &Pmf::new(uniform, 0.0).unwrap(), &default_sample_points());
        assert!(r.max_abs > 0.01);
    }

    #[test]
    fn linear_fractional_closed_form() {
        let s0 = linear_fractional_fixed_point(0.3, 0.3).unwrap();
        assert_abs_diff_eq!(s0, 40.0 / 21.0, epsilon = 1e-14);
        let y = linear_fractional_yaglom(0.3, 0.3, 200).unwrap();
        assert_abs_diff_eq!(y.get(1), 0.475, epsilon = 1e-15);
        assert_abs_diff_eq!(y.total(), 1.0, epsilon = 1e-14);
        for (b, p) in [(0.1, 0.5), (0.2, 0.1), (0.005, 0.9)] {
            let y = linear_fractional_yaglom(b, p, 50).unwrap();
            assert_abs_diff_eq!(y.total(), 1.0, epsilon = 1e-12);
        }
        assert!(linear_fractional_yaglom(0.5, 0.3, 10).is_err());
    }

    #[test]
    fn size_bias_examples() {
        let y = linear_fractional_yaglom(0.3, 0.3, 400).unwrap();
        let q = size_biased(&y).unwrap();
        assert_abs_diff_eq!(q.get(1), 0.225625, epsilon = 1e-12);
        assert!(size_biased(&Pmf::new(vec![0.0, 0.5], 0.5).unwrap()).is_err());
    }

    #[test]
    fn bgw_examples() {
        let r = bgw_yaglom(&Pmf::from_pairs(&[(0, 0.5), (1, 0.5)]).unwrap(), 50, 1e-12).unwrap();
        assert_eq!(r.pmf.get(1), 1.0);
        let f = bgw_conditioned_future(&Pmf::delta(1), 5, 3, 16).unwrap();
        assert_eq!(f.get(1), 1.0);
        assert!(matches!(bgw_yaglom(&Pmf::delta(2), 50, 1e-12), Err(BpreError::NotSubcritical(_))));
    }

    #[test]
    fn bgw_yaglom_equals_long_conditioned_dp() {
        let total = Pmf::from_pairs(&[(0, 0.5), (1, 0.3), (2, 0.2)]).unwrap();
        let r = bgw_yaglom(&total, 400, 1e-14).unwrap();
        let law = OffspringLaw::diagonal(&total).unwrap();
        // The conditioned law approaches the limit like 0.7^n.
        let at = |n| conditioned_pmf(&law, n, 400).unwrap().l1_distance(&r.pmf);
        assert!(at(60) < 1e-9, "{}", at(60));
        assert!(at(80) < 1e-10, "{}", at(80));
    }

    #[test]
    fn conditioning_far_ahead_gives_size_biased_yaglom() {
        let total = Pmf::from_pairs(&[(0, 0.5), (1, 0.3), (2, 0.2)]).unwrap();
        let target = size_biased(&bgw_yaglom(&total, 400, 1e-14).unwrap().pmf).unwrap();
        let future = bgw_conditioned_future(&total, 40, 60, 400).unwrap();
        assert!(future.l1_distance(&target) < 1e-4, "{}", future.l1_distance(&target));
    }

    #[test]
    fn bgw_survival_matches_iteration() {
        let total = Pmf::from_pairs(&[(0, 0.5), (1, 0.3), (2, 0.2)]).unwrap();
        let mut q = 0.0;
        for _ in 0..10 {
            q = total.pgf(q);
        }
        assert_abs_diff_eq!(bgw_survival(&total, 10), 1.0 - q, epsilon = 1e-14);
        assert_eq!(bgw_survival(&Pmf::delta(1), 7), 1.0);
    }

    #[test]
    fn decay_fit_examples() {
        let ns: Vec<u32> = (4..=20).collect();
        let f = survival_decay_fit(&law_a(), &ns, 16).unwrap();
        assert_abs_diff_eq!(f.rate, 0.5, epsilon = 1e-10);
        assert!(f.polynomial_exponent.abs() < 1e-8);

        let ns: Vec<u32> = (6..=24).collect();
        let f = survival_decay_fit(&law_c(), &ns, 400).unwrap();
        assert!((f.rate - 30.0 / 49.0).abs() < 0.01, "{f:?}");
        assert!(f.polynomial_exponent.abs() < 0.2, "{f:?}");
        assert!(f.note.is_none());

        assert!(matches!(survival_decay_fit(&law_c(), &[1, 2, 3], 64), Err(BpreError::TooFewPoints(3))));
        assert!(matches!(survival_decay_fit(&law_c(), &[1, 3, 2, 4], 64), Err(BpreError::BadRange)));
    }

    #[test]
    fn decay_fit_in_d4_is_flagged() {
        let law = d4_law();
        let ns: Vec<u32> = (3..=10).collect();
        let f = survival_decay_fit(&law, &ns, 3000).unwrap();
        let m = law.summarize().m;
        assert_eq!(f.regime, RegimeLabel::D4);
        assert!(f.note.as_deref().unwrap().starts_with("D4"));
        assert!(f.rate < 1.0 && f.rate < m, "{f:?}");
    }

    #[test]
    fn mass_and_mean_evolution() {
        for law in [law_a(), law_b(), law_c(), law_d()] {
            let (m0, m1) = law.means();
            let m = 0.5 * (m0 + m1);
            let laws = line_laws(&law, 20, 400);
            for (n, p) in laws.iter().enumerate() {
                assert_abs_diff_eq!(p.total(), 1.0, epsilon = 1e-12);
                if p.overflow() == 0.0 {
                    let rel = (p.mean() - m.powi(n as i32)).abs() / m.powi(n as i32);
                    assert!(rel < 1e-9, "n={n} mean={} m^n={}", p.mean(), m.powi(n as i32));
                } else {
                    assert!(p.mean() <= m.powi(n as i32) * (1.0 + 1e-9));
                }
            }
            let overflow: Vec<f64> = laws.iter().map(Pmf::overflow).collect();
            assert!(overflow.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn survival_is_monotone() {
        for law in [law_c(), law_d(), d4_law()] {
            let seq = survival_sequence(&law, 30, 400).unwrap();
            assert!(seq.windows(2).all(|w| w[1].upper <= w[0].upper + 1e-15));
            assert!(seq.windows(2).all(|w| w[1].lower <= w[0].lower + 1e-15));
        }
    }

    #[test]
    fn conditioned_law_approaches_yaglom() {
        let law = law_c();
        let y = yaglom_power_iteration(&law, 400, 1e-12, 10_000).unwrap();
        let c = conditioned_pmf(&law, 30, 400).unwrap();
        assert!(c.l1_distance(&y.pmf) < 1e-6, "{}", c.l1_distance(&y.pmf));
        let early = conditioned_pmf(&law, 5, 400).unwrap();
        assert!(early.l1_distance(&y.pmf) > c.l1_distance(&y.pmf));
    }

    #[test]
    fn sampled_lines() {
        let mut rng = replicate_rng(11, 0);
        assert_eq!(bpre_sample_line(&law_b(), 6, &mut rng), vec![1, 2, 4, 8, 16, 32, 64]);
        let path = bpre_sample_line(&law_a(), 20, &mut rng);
        assert!(path.windows(2).all(|w| w[1] <= w[0] && w[1] <= 1));
    }

    #[test]
    fn sampled_survival_matches_dp() {
        let law = law_c();
        let sampler = LineSampler::new(&law);
        let mut rng = replicate_rng(5, 0);
        let n = 200_000;
        let alive = (0..n).filter(|_| sampler.sample(6, &mut rng)[6] > 0).count();
        let phat = alive as f64 / n as f64;
        let exact = survival_prob_exact(&law, 6, 400).unwrap().midpoint();
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((phat - exact).abs() < 4.0 * se, "{phat} vs {exact}");
    }
}
