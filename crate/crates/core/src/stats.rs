//! Distances, intervals, fits and ensemble aggregation.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::pmf::Pmf;
use crate::treesim::{Histogram, ReplicateResult, SimConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("frequency sequences track different k_top ({0} vs {1})")]
    Misaligned(usize, usize),
    #[error("frequency sequence sums to {0}, expected 1 within 1e-9")]
    NotNormalized(f64),
    #[error("zero trials")]
    ZeroTrials,
    #[error("confidence {0} not in (0,1)")]
    BadConfidence(f64),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("nonpositive value {value} at index {index}")]
    NonPositive { index: usize, value: f64 },
    #[error("singular least-squares system")]
    Singular,
}

/// Normalized frequencies of the values `1..=k_top` plus one atom for
/// everything above `k_top`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Frequencies {
    /// `probs[k-1]` is the frequency of value `k`.
    pub probs: Vec<f64>,
    pub tail: f64,
}

impl Frequencies {
    pub fn k_top(&self) -> usize {
        self.probs.len()
    }

    pub fn get(&self, k: usize) -> f64 {
        if k == 0 { 0.0 } else { self.probs.get(k - 1).copied().unwrap_or(0.0) }
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.tail
    }

    /// `None` for an empty histogram.
    pub fn from_histogram(h: &Histogram) -> Option<Self> {
        let n = h.total();
        if n == 0 {
            return None;
        }
        let n = n as f64;
        Some(Self {
            probs: h.counts.iter().map(|&c| c as f64 / n).collect(),
            tail: h.tail as f64 / n,
        })
    }

    /// Restricts a pmf to positive values: mass at `1..=k_top` kept, mass
    /// above `k_top` and overflow pooled into the tail. Mass at 0 is dropped.
    pub fn from_pmf(pmf: &Pmf, k_top: usize) -> Self {
        let probs: Vec<f64> = (1..=k_top).map(|k| pmf.get(k)).collect();
        let above: f64 = pmf.mass().iter().skip(k_top + 1).sum();
        Self { probs, tail: above + pmf.overflow() }
    }

    fn zeros(k_top: usize) -> Self {
        Self { probs: vec![0.0; k_top], tail: 0.0 }
    }

    fn add_scaled(&mut self, other: &Frequencies, w: f64) {
        for (a, b) in self.probs.iter_mut().zip(&other.probs) {
            *a += w * b;
        }
        self.tail += w * other.tail;
    }

    fn add_squares(&mut self, other: &Frequencies) {
        for (a, b) in self.probs.iter_mut().zip(&other.probs) {
            *a += b * b;
        }
        self.tail += other.tail * other.tail;
    }
}

/// Running first and second moments of per-replicate frequencies.
#[derive(Debug, Clone)]
struct FrequencyMoments {
    sum: Frequencies,
    squares: Frequencies,
    n: u64,
}

impl FrequencyMoments {
    fn new(k_top: usize) -> Self {
        Self { sum: Frequencies::zeros(k_top), squares: Frequencies::zeros(k_top), n: 0 }
    }

    fn push(&mut self, f: &Frequencies) {
        self.sum.add_scaled(f, 1.0);
        self.squares.add_squares(f);
        self.n += 1;
    }

    /// Mean and its standard error, componentwise.
    fn finish(&self) -> Option<(Frequencies, Frequencies)> {
        if self.n == 0 {
            return None;
        }
        let n = self.n as f64;
        let mut mean = Frequencies::zeros(self.sum.k_top());
        mean.add_scaled(&self.sum, 1.0 / n);
        let se = |s: f64, sq: f64| {
            if self.n < 2 {
                return 0.0;
            }
            let m = s / n;
            ((sq - n * m * m).max(0.0) / (n - 1.0) / n).sqrt()
        };
        let stderr = Frequencies {
            probs: self.sum.probs.iter().zip(&self.squares.probs).map(|(&s, &q)| se(s, q)).collect(),
            tail: se(self.sum.tail, self.squares.tail),
        };
        Some((mean, stderr))
    }
}

/// `Σ_k |a_k − b_k|` including the tail atoms.
pub fn l1_distance(a: &Frequencies, b: &Frequencies) -> Result<f64, StatsError> {
    if a.k_top() != b.k_top() {
        return Err(StatsError::Misaligned(a.k_top(), b.k_top()));
    }
    for f in [a, b] {
        let t = f.total();
        if (t - 1.0).abs() > 1e-9 {
            return Err(StatsError::NotNormalized(t));
        }
    }
    Ok(a.probs.iter().zip(&b.probs).map(|(x, y)| (x - y).abs()).sum::<f64>()
        + (a.tail - b.tail).abs())
}

/// Largest CDF gap between two pmfs on `{0, 1, 2, ...}` given as slices
/// indexed by value. The shorter slice is padded with zeros.
pub fn ks_distance_integer(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    let (mut ca, mut cb, mut worst) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..n {
        ca += a.get(k).copied().unwrap_or(0.0);
        cb += b.get(k).copied().unwrap_or(0.0);
        worst = worst.max((ca - cb).abs());
    }
    worst
}

/// Empirical pmf of integer samples, indexed by value.
pub fn empirical_pmf(samples: &[u64]) -> Vec<f64> {
    let top = samples.iter().copied().max().unwrap_or(0) as usize;
    let mut pmf = vec![0.0; top + 1];
    let w = 1.0 / samples.len().max(1) as f64;
    for &s in samples {
        pmf[s as usize] += w;
    }
    pmf
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64), StatsError> {
    if trials == 0 {
        return Err(StatsError::ZeroTrials);
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::BadConfidence(confidence));
    }
    let z = Normal::standard().inverse_cdf(0.5 + confidence / 2.0);
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lower = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let upper = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    Ok((lower, upper))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub r2: f64,
}

/// Ordinary least squares `y ≈ X β` through the normal equations.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<LeastSquares, StatsError> {
    let p = rows.first().map_or(0, Vec::len);
    if rows.len() < p.max(1) || rows.len() != y.len() {
        return Err(StatsError::TooFewPoints { needed: p.max(1), got: rows.len() });
    }
    // Augmented normal matrix [XᵀX | Xᵀy].
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, &yi) in rows.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
            a[i][p] += row[i] * yi;
        }
    }
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(StatsError::Singular);
        }
        a.swap(col, pivot);
        for r in 0..p {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=p {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let beta: Vec<f64> = (0..p).map(|i| a[i][p] / a[i][i]).collect();
    let mean_y = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let ss_res: f64 = rows
        .iter()
        .zip(y)
        .map(|(row, v)| {
            let fit: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
            (v - fit).powi(2)
        })
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(LeastSquares { coefficients: beta, r2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthFit {
    pub rate: f64,
    pub r2: f64,
}

/// Geometric growth rate: exponentiated least-squares slope of
/// `ln series[g]` over `g ∈ window`.
pub fn growth_rate_fit(series: &[f64], window: RangeInclusive<usize>) -> Result<GrowthFit, StatsError> {
    let gens: Vec<usize> = window.filter(|&g| g < series.len()).collect();
    if gens.len() < 4 {
        return Err(StatsError::TooFewPoints { needed: 4, got: gens.len() });
    }
    for &g in &gens {
        if !(series[g] > 0.0) {
            return Err(StatsError::NonPositive { index: g, value: series[g] });
        }
    }
    let rows: Vec<Vec<f64>> = gens.iter().map(|&g| vec![1.0, g as f64]).collect();
    let y: Vec<f64> = gens.iter().map(|&g| series[g].ln()).collect();
    let fit = least_squares(&rows, &y)?;
    Ok(GrowthFit { rate: fit.coefficients[1].exp(), r2: fit.r2 })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub const QUANTILE_LEVELS: [f64; 7] = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
    /// At [`QUANTILE_LEVELS`].
    pub quantiles: Vec<f64>,
}

impl Summary {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            count: values.len() as u64,
            mean,
            variance,
            stderr: (variance / n).sqrt(),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            quantiles: QUANTILE_LEVELS.iter().map(|&q| quantile(&sorted, q)).collect(),
        })
    }

    pub fn quantile(&self, level: f64) -> Option<f64> {
        QUANTILE_LEVELS.iter().position(|&l| l == level).map(|i| self.quantiles[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Acceptance {
    pub attempted: u64,
    pub accepted: u64,
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
    /// Rate computed exactly instead of observed (conditioned sampler).
    pub exact: bool,
    /// Exact `P(𝒵_T > 0)` for the conditioning target, when there is one.
    pub predicted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationAggregate {
    pub generation: u32,
    pub n_contaminated: Summary,
    pub total_parasites: Summary,
    /// `#G*_g / 2^g`
    pub recovery_ratio: Summary,
    /// `#G*_g / 𝒵_g` over replicates alive at `g`.
    pub cells_per_parasite: Option<Summary>,
    pub leaves_cumulative: Summary,
    pub max_cell_count: Summary,
    /// Replicates with at least one contaminated cell at `g`.
    pub surviving: u64,
    /// Mean of the per-replicate proportions `F_k(g)` over surviving replicates.
    pub mean_proportions: Option<Frequencies>,
    pub proportions_stderr: Option<Frequencies>,
    /// Proportions of the histogram summed over replicates: every cell of
    /// the ensemble counts once, so large trees weigh more.
    pub pooled_proportions: Option<Frequencies>,
}

/// Per-replicate values kept for distributional comparisons.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplicateColumns {
    /// `n_contaminated[g][i]` for the `i`-th accepted replicate.
    pub n_contaminated: Vec<Vec<u64>>,
    pub total_parasites: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MultiplicityTable {
    /// `(ancestor count, N) -> number of horizon cells`, serialized as
    /// `[ancestor count, N, cells]` triples.
    #[serde(serialize_with = "triples")]
    pub cells: BTreeMap<(u64, u64), u64>,
    pub excluded_saturated: u64,
}

fn triples<S: serde::Serializer>(map: &BTreeMap<(u64, u64), u64>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(map.iter().map(|(&(a, n), &c)| [a, n, c]))
}

impl MultiplicityTable {
    /// Histogram of `N` over cells whose ancestor count is at most `k_anc`.
    pub fn restricted(&self, k_anc: u64) -> BTreeMap<u64, u64> {
        let mut out = BTreeMap::new();
        for (&(anc, n), &c) in &self.cells {
            if anc <= k_anc {
                *out.entry(n).or_insert(0) += c;
            }
        }
        out
    }

    /// Fraction of cells (ancestor count ≤ `k_anc`) holding at least two
    /// distinct tags; `None` when no cell qualifies.
    pub fn fraction_multiple(&self, k_anc: u64) -> Option<f64> {
        let h = self.restricted(k_anc);
        let total: u64 = h.values().sum();
        let multi: u64 = h.iter().filter(|(&n, _)| n >= 2).map(|(_, &c)| c).sum();
        (total > 0).then(|| multi as f64 / total as f64)
    }

    pub fn merge(&mut self, other: &MultiplicityTable) {
        for (&key, &c) in &other.cells {
            *self.cells.entry(key).or_insert(0) += c;
        }
        self.excluded_saturated += other.excluded_saturated;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub horizon: u32,
    pub k_top: usize,
    pub acceptance: Acceptance,
    pub accepted_count: u64,
    pub generations: Vec<GenerationAggregate>,
    /// Mean of per-replicate ancestor proportions `F_k(n0, n0+p)`.
    pub ancestor_proportions: Option<Frequencies>,
    pub ancestor_proportions_stderr: Option<Frequencies>,
    /// Ancestor histogram summed over replicates, then normalized.
    pub ancestor_pooled: Option<Frequencies>,
    pub multiplicity: Option<MultiplicityTable>,
    #[serde(skip)]
    pub columns: ReplicateColumns,
}

impl EnsembleStats {
    pub fn generation(&self, g: u32) -> &GenerationAggregate {
        &self.generations[g as usize]
    }

    /// Series of a per-generation mean, e.g. `|a| a.n_contaminated.mean`.
    pub fn mean_series(&self, pick: impl Fn(&GenerationAggregate) -> f64) -> Vec<f64> {
        self.generations.iter().map(pick).collect()
    }
}

/// Streaming fold of accepted replicates. Results must be pushed in
/// replicate-id order; floating sums then happen in a fixed order and the
/// output does not depend on how the work was scheduled.
#[derive(Debug, Clone)]
pub struct EnsembleAccumulator {
    horizon: u32,
    k_top: usize,
    columns: ReplicateColumns,
    leaves: Vec<Vec<u64>>,
    max_cell: Vec<Vec<u64>>,
    proportions: Vec<FrequencyMoments>,
    pooled: Vec<Histogram>,
    ancestor: Option<FrequencyMoments>,
    ancestor_pooled: Option<Histogram>,
    multiplicity: Option<MultiplicityTable>,
    pushed: u64,
}

impl EnsembleAccumulator {
    pub fn new(horizon: u32, k_top: usize) -> Self {
        let gens = horizon as usize + 1;
        Self {
            horizon,
            k_top,
            columns: ReplicateColumns {
                n_contaminated: vec![Vec::new(); gens],
                total_parasites: vec![Vec::new(); gens],
            },
            leaves: vec![Vec::new(); gens],
            max_cell: vec![Vec::new(); gens],
            proportions: vec![FrequencyMoments::new(k_top); gens],
            pooled: vec![Histogram::new(k_top); gens],
            ancestor: None,
            ancestor_pooled: None,
            multiplicity: None,
            pushed: 0,
        }
    }

    pub fn for_config(config: &SimConfig) -> Self {
        Self::new(config.horizon, config.k_top)
    }

    pub fn push(&mut self, result: &ReplicateResult) {
        self.pushed += 1;
        for g in 0..=self.horizon as usize {
            let rec = &result.generations[g];
            self.columns.n_contaminated[g].push(rec.n_contaminated);
            self.columns.total_parasites[g].push(rec.total_parasites);
            self.leaves[g].push(rec.leaves_cumulative);
            self.max_cell[g].push(rec.max_cell_count);
            if let Some(f) = Frequencies::from_histogram(&rec.histogram) {
                self.proportions[g].push(&f);
            }
            self.pooled[g].merge(&rec.histogram);
        }
        if let Some(anc) = &result.ancestor_histogram {
            self.ancestor_pooled
                .get_or_insert_with(|| Histogram::new(anc.histogram.k_top()))
                .merge(&anc.histogram);
            if let Some(f) = Frequencies::from_histogram(&anc.histogram) {
                self.ancestor
                    .get_or_insert_with(|| FrequencyMoments::new(anc.histogram.counts.len()))
                    .push(&f);
            }
        }
        if let Some(m) = &result.multiplicity {
            self.multiplicity.get_or_insert_with(MultiplicityTable::default).merge(&m.table);
        }
    }

    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn finish(self, acceptance: Acceptance) -> EnsembleStats {
        let as_f64 = |v: &[u64]| v.iter().map(|&x| x as f64).collect::<Vec<f64>>();
        let empty = || Summary::of(&[0.0]).unwrap();
        let mut generations = Vec::with_capacity(self.horizon as usize + 1);
        for g in 0..=self.horizon as usize {
            let cells = &self.columns.n_contaminated[g];
            let parasites = &self.columns.total_parasites[g];
            let scale = (g as f64).exp2();
            let ratio: Vec<f64> = cells.iter().map(|&c| c as f64 / scale).collect();
            let per_parasite: Vec<f64> = cells
                .iter()
                .zip(parasites)
                .filter(|(_, &z)| z > 0)
                .map(|(&c, &z)| c as f64 / z as f64)
                .collect();
            let surviving = self.proportions[g].n;
            let (mean_proportions, proportions_stderr) = self.proportions[g].finish().unzip();
            generations.push(GenerationAggregate {
                generation: g as u32,
                n_contaminated: Summary::of(&as_f64(cells)).unwrap_or_else(empty),
                total_parasites: Summary::of(&as_f64(parasites)).unwrap_or_else(empty),
                recovery_ratio: Summary::of(&ratio).unwrap_or_else(empty),
                cells_per_parasite: Summary::of(&per_parasite),
                leaves_cumulative: Summary::of(&as_f64(&self.leaves[g])).unwrap_or_else(empty),
                max_cell_count: Summary::of(&as_f64(&self.max_cell[g])).unwrap_or_else(empty),
                surviving,
                mean_proportions,
                proportions_stderr,
                pooled_proportions: Frequencies::from_histogram(&self.pooled[g]),
            });
        }
        let (ancestor_proportions, ancestor_proportions_stderr) =
            self.ancestor.as_ref().and_then(FrequencyMoments::finish).unzip();
        EnsembleStats {
            horizon: self.horizon,
            k_top: self.k_top,
            accepted_count: self.pushed,
            acceptance,
            generations,
            ancestor_proportions,
            ancestor_proportions_stderr,
            ancestor_pooled: self.ancestor_pooled.as_ref().and_then(Frequencies::from_histogram),
            multiplicity: self.multiplicity,
            columns: self.columns,
        }
    }
}

/// Aggregates replicate results regardless of the order they arrive in:
/// they are first sorted by replicate id.
pub fn aggregate(results: &[ReplicateResult], horizon: u32, k_top: usize) -> EnsembleStats {
    let mut sorted: Vec<&ReplicateResult> = results.iter().collect();
    sorted.sort_by_key(|r| r.replicate_id);
    let mut acc = EnsembleAccumulator::new(horizon, k_top);
    for r in sorted {
        acc.push(r);
    }
    let n = results.len() as u64;
    acc.finish(Acceptance {
        attempted: n,
        accepted: n,
        rate: 1.0,
        lower: 1.0,
        upper: 1.0,
        exact: false,
        predicted: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn freq(probs: &[f64], tail: f64) -> Frequencies {
        Frequencies { probs: probs.to_vec(), tail }
    }

    #[test]
    fn l1_examples() {
        let a = freq(&[0.5, 0.5, 0.0], 0.0);
        assert_eq!(l1_distance(&a, &a).unwrap(), 0.0);
        let d1 = freq(&[1.0, 0.0], 0.0);
        let d2 = freq(&[0.0, 1.0], 0.0);
        assert_eq!(l1_distance(&d1, &d2).unwrap(), 2.0);
        assert_eq!(l1_distance(&d1, &a), Err(StatsError::Misaligned(2, 3)));
        assert!(matches!(
            l1_distance(&d1, &freq(&[0.5, 0.0], 0.0)),
            Err(StatsError::NotNormalized(_))
        ));
    }

    #[test]
    fn ks_and_wilson() {
        assert_eq!(ks_distance_integer(&[0.0, 1.0], &[0.0, 1.0]), 0.0);
        assert_abs_diff_eq!(ks_distance_integer(&[0.0, 1.0], &[0.0, 0.0, 1.0]), 1.0);
        let (lo, hi) = wilson_interval(0, 50, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
        let (lo, hi) = wilson_interval(50, 100, 0.95).unwrap();
        assert!(lo < 0.5 && hi > 0.5);
        assert_abs_diff_eq!(hi - 0.5, 0.5 - lo, epsilon = 1e-12);
        assert_eq!(wilson_interval(0, 0, 0.95), Err(StatsError::ZeroTrials));
    }

    #[test]
    fn wilson_textbook_value() {
        // 81 of 263 at 95%: (0.2553, 0.3662) from the closed formula.
        let (lo, hi) = wilson_interval(81, 263, 0.95).unwrap();
        assert_abs_diff_eq!(lo, 0.2553, epsilon = 5e-4);
        assert_abs_diff_eq!(hi, 0.3662, epsilon = 5e-4);
    }

    #[test]
    fn growth_examples() {
        let series: Vec<f64> = (0..12).map(|g| (g as f64).exp2()).collect();
        let fit = growth_rate_fit(&series, 0..=11).unwrap();
        assert_abs_diff_eq!(fit.rate, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r2, 1.0, epsilon = 1e-12);
        assert!(matches!(growth_rate_fit(&series, 0..=2), Err(StatsError::TooFewPoints { .. })));
        let mut bad = series.clone();
        bad[3] = 0.0;
        assert!(matches!(growth_rate_fit(&bad, 0..=11), Err(StatsError::NonPositive { .. })));
    }

    #[test]
    fn least_squares_recovers_exact_model() {
        let rows: Vec<Vec<f64>> =
            (1..10).map(|n| vec![1.0, n as f64, (n as f64).ln()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 0.3 - 0.7 * r[1] + 1.5 * r[2]).collect();
        let fit = least_squares(&rows, &y).unwrap();
        for (b, e) in fit.coefficients.iter().zip([0.3, -0.7, 1.5]) {
            assert_abs_diff_eq!(*b, e, epsilon = 1e-9);
        }
    }

    #[test]
    fn summary_quantiles() {
        let s = Summary::of(&[3.0, 1.0, 2.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.variance, 2.5);
        assert_eq!(s.quantile(0.5), Some(3.0));
        assert!(s.quantiles.windows(2).all(|w| w[0] <= w[1]));
        assert!(Summary::of(&[]).is_none());
    }

    fn arb_freq(k: usize) -> impl Strategy<Value = Frequencies> {
        prop::collection::vec(0.0f64..1.0, k + 1).prop_filter_map("zero", move |w| {
            let t: f64 = w.iter().sum();
            (t > 1e-6).then(|| Frequencies {
                probs: w[..k].iter().map(|x| x / t).collect(),
                tail: w[k] / t,
            })
        })
    }

    proptest! {
        #[test]
        fn l1_is_a_metric(a in arb_freq(6), b in arb_freq(6), c in arb_freq(6)) {
            let ab = l1_distance(&a, &b).unwrap();
            prop_assert!((ab - l1_distance(&b, &a).unwrap()).abs() < 1e-15);
            prop_assert!(ab >= 0.0);
            prop_assert!(ab <= l1_distance(&a, &c).unwrap() + l1_distance(&c, &b).unwrap() + 1e-12);
        }

        #[test]
        fn growth_rate_is_scale_invariant(
            base in prop::collection::vec(0.1f64..10.0, 8), c in 1e-3f64..1e3
        ) {
            let scaled: Vec<f64> = base.iter().map(|x| c * x).collect();
            let a = growth_rate_fit(&base, 0..=7).unwrap();
            let b = growth_rate_fit(&scaled, 0..=7).unwrap();
            prop_assert!((a.rate - b.rate).abs() < 1e-9 * a.rate);
        }

        #[test]
        fn quantiles_are_monotone(v in prop::collection::vec(-1e3f64..1e3, 1..50)) {
            let s = Summary::of(&v).unwrap();
            prop_assert!(s.quantiles.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(s.variance >= 0.0);
        }
    }
}
