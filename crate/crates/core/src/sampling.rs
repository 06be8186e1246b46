//! Random sampling primitives shared by the line sampler and the tree
//! simulator.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Binomial, Distribution};

/// Random stream owned by one replicate or one line sample.
pub type SimRng = ChaCha8Rng;

/// Stream for replicate `replicate_id` under `master_seed`: the key comes
/// from the seed and the ChaCha stream id from the replicate, so every
/// replicate draws from its own non-overlapping sequence.
pub fn replicate_rng(master_seed: u64, replicate_id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate_id);
    rng
}

/// Draws from a finite law on pairs `(a, b)` of counts and sums `x`
/// independent draws.
///
/// Below `crossover` draws the sum is accumulated one alias draw at a time;
/// above it the per-outcome counts are drawn as a multinomial, so the cost
/// no longer grows with `x`.
#[derive(Debug, Clone)]
pub struct OutcomeSampler {
    values: Vec<(u64, u64)>,
    probs: Vec<f64>,
    /// `tail[j] = Σ_{i >= j} probs[i]`
    tail: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
    mean: (f64, f64),
}

impl OutcomeSampler {
    /// `None` when no weight is positive.
    pub fn new(weighted: impl IntoIterator<Item = ((u64, u64), f64)>) -> Option<Self> {
        let mut items: Vec<((u64, u64), f64)> =
            weighted.into_iter().filter(|&(_, w)| w > 0.0).collect();
        if items.is_empty() {
            return None;
        }
        // Largest categories first so the multinomial loop exits early.
        items.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let total: f64 = items.iter().map(|&(_, w)| w).sum();
        let values: Vec<(u64, u64)> = items.iter().map(|&(v, _)| v).collect();
        let probs: Vec<f64> = items.iter().map(|&(_, w)| w / total).collect();
        let mut tail = vec![0.0; probs.len()];
        let mut acc = 0.0;
        for j in (0..probs.len()).rev() {
            acc += probs[j];
            tail[j] = acc;
        }
        let alias = WeightedAliasIndex::new(probs.clone()).ok()?;
        let mean = values.iter().zip(&probs).fold((0.0, 0.0), |m, (&(a, b), &p)| {
            (m.0 + p * a as f64, m.1 + p * b as f64)
        });
        Some(Self { values, probs, tail, alias, mean })
    }

    pub fn values(&self) -> &[(u64, u64)] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> (f64, f64) {
        self.mean
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (u64, u64) {
        self.values[self.alias.sample(rng)]
    }

    /// Sum of `x` independent draws.
    pub fn sum_of<R: Rng + ?Sized>(&self, x: u64, crossover: u64, rng: &mut R) -> (u64, u64) {
        if x < crossover || self.values.len() == 1 {
            if self.values.len() == 1 {
                let (a, b) = self.values[0];
                return (a.saturating_mul(x), b.saturating_mul(x));
            }
            let mut acc = (0u64, 0u64);
            for _ in 0..x {
                let (a, b) = self.draw(rng);
                acc.0 += a;
                acc.1 += b;
            }
            return acc;
        }
        let mut acc = (0u64, 0u64);
        self.for_each_count(x, rng, |j, n| {
            let (a, b) = self.values[j];
            acc.0 = acc.0.saturating_add(a.saturating_mul(n));
            acc.1 = acc.1.saturating_add(b.saturating_mul(n));
        });
        acc
    }

    /// Multinomial allocation of `x` trials over the categories, visiting
    /// each category with a nonzero count.
    pub fn for_each_count<R: Rng + ?Sized>(&self, x: u64, rng: &mut R, mut visit: impl FnMut(usize, u64)) {
        let mut remaining = x;
        let last = self.probs.len() - 1;
        for j in 0..=last {
            if remaining == 0 {
                break;
            }
            let n = if j == last {
                remaining
            } else {
                let p = (self.probs[j] / self.tail[j]).clamp(0.0, 1.0);
                binomial(remaining, p, rng)
            };
            if n > 0 {
                visit(j, n);
                remaining -= n;
            }
        }
    }
}

pub fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("binomial parameters checked").sample(rng)
}

/// Rounds `x >= 0` down or up with probabilities making the result unbiased.
pub fn stochastic_round<R: Rng + ?Sized>(x: f64, rng: &mut R) -> u64 {
    let floor = x.floor();
    let frac = x - floor;
    let up = frac > 0.0 && rng.random::<f64>() < frac;
    floor as u64 + up as u64
}
