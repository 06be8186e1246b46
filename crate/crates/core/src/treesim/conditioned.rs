//! Offspring laws of the tree conditioned on `𝒵_T > 0`.
//!
//! The parasites of all cells together form a Galton–Watson process with
//! offspring `Z0 + Z1`. Let `s_r` be the probability that one parasite still
//! has descendants `r` generations later. Conditioning on `𝒵_T > 0` is the
//! same as marking every parasite at generation `t` as *surviving* (its own
//! line reaches `T`) or *doomed*, with:
//!
//! * the root surviving;
//! * a doomed parasite with `r = T − t` generations to go drawing `(k0, k1)`
//!   with weight `π(k0,k1) (1 − s_{r−1})^{k0+k1}`; all its children are doomed;
//! * a surviving parasite drawing `(k0, k1)` with weight
//!   `π(k0,k1) (1 − (1 − s_{r−1})^{k0+k1})`; each child independently
//!   survives with probability `s_{r−1}`, conditioned on at least one doing so.
//!
//! This is the Doob transform by `h(x) = 1 − (1 − s_r)^x`, and it produces
//! trees with exactly the conditioned law.

use rand::Rng;

use crate::pmf::Pmf;
use crate::sampling::{binomial, OutcomeSampler};

#[derive(Debug, Clone)]
pub(crate) struct ConditionedTables {
    target: u32,
    /// `survival[r] = s_r`
    survival: Vec<f64>,
    doomed: Vec<Option<OutcomeSampler>>,
    surviving: Vec<Option<OutcomeSampler>>,
}

/// `s_r` for `r = 0..=target` on the survival scale.
pub(crate) fn survival_by_generation(total: &Pmf, target: u32) -> Vec<f64> {
    let mut s = vec![1.0f64];
    for _ in 0..target {
        let prev = *s.last().unwrap();
        let l = (-prev).ln_1p();
        let next: f64 = total
            .mass()
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, &p)| if prev >= 1.0 { p } else { -p * (j as f64 * l).exp_m1() })
            .sum();
        s.push(next.clamp(0.0, 1.0));
    }
    s
}

/// `(1 − s)^k` and `1 − (1 − s)^k`, both accurate when either is small.
fn extinct_and_alive(s: f64, k: u64) -> (f64, f64) {
    if k == 0 {
        return (1.0, 0.0);
    }
    if s >= 1.0 {
        return (0.0, 1.0);
    }
    let l = k as f64 * (-s).ln_1p();
    (l.exp(), -l.exp_m1())
}

impl ConditionedTables {
    pub(crate) fn new(outcomes: &[((u64, u64), f64)], total: &Pmf, target: u32) -> Self {
        let survival = survival_by_generation(total, target);
        let mut doomed = vec![None];
        let mut surviving = vec![None];
        for r in 1..=target as usize {
            let s = survival[r - 1];
            let weights: Vec<((u64, u64), f64, f64)> = outcomes
                .iter()
                .map(|&((a, b), p)| {
                    let (dead, alive) = extinct_and_alive(s, a + b);
                    ((a, b), p * dead, p * alive)
                })
                .collect();
            doomed.push(OutcomeSampler::new(weights.iter().map(|&(v, d, _)| (v, d))));
            surviving.push(OutcomeSampler::new(weights.iter().map(|&(v, _, a)| (v, a))));
        }
        Self { target, survival, doomed, surviving }
    }

    pub(crate) fn target(&self) -> u32 {
        self.target
    }

    /// `P(𝒵_T > 0)` from a single parasite.
    pub(crate) fn acceptance(&self) -> f64 {
        self.survival[self.target as usize]
    }

    /// Offspring of `doomed` parasites in one cell at generation
    /// `T − r`, summed; all of them are doomed.
    pub(crate) fn doomed_sum<R: Rng + ?Sized>(&self, r: u32, doomed: u64, crossover: u64, rng: &mut R) -> (u64, u64) {
        if doomed == 0 {
            return (0, 0);
        }
        self.doomed[r as usize]
            .as_ref()
            .expect("doomed parasites only exist where extinction is possible")
            .sum_of(doomed, crossover, rng)
    }

    pub(crate) fn doomed_mean(&self, r: u32) -> (f64, f64) {
        self.doomed[r as usize].as_ref().map_or((0.0, 0.0), OutcomeSampler::mean)
    }

    /// Offspring of `n` surviving parasites in one cell at generation
    /// `T − r`: returns `(children_0, children_1, surviving_0, surviving_1)`.
    pub(crate) fn surviving_step<R: Rng + ?Sized>(
        &self,
        r: u32,
        n: u64,
        crossover: u64,
        rng: &mut R,
    ) -> [u64; 4] {
        let mut acc = [0u64; 4];
        if n == 0 {
            return acc;
        }
        let table = self.surviving[r as usize].as_ref().expect("survival is possible");
        let rho = self.survival[r as usize - 1];
        if n < crossover {
            for _ in 0..n {
                let (k0, k1) = table.draw(rng);
                let j = first_survivor(k0 + k1, rho, rng);
                add_group(&mut acc, k0, k1, j, 1, rho, rng);
            }
        } else {
            let mut groups = Vec::new();
            table.for_each_count(n, rng, |idx, c| groups.push((table.values()[idx], c)));
            let mut positions = Vec::new();
            for ((k0, k1), c) in groups {
                positions.clear();
                first_survivor_counts(k0 + k1, rho, c, rng, |j, cj| positions.push((j, cj)));
                for &(j, cj) in &positions {
                    add_group(&mut acc, k0, k1, j, cj, rho, rng);
                }
            }
        }
        acc
    }
}

/// `cj` parents with outcome `(k0, k1)` whose first surviving child sits at
/// position `j` (positions `1..=k0` go to daughter 0).
fn add_group<R: Rng + ?Sized>(acc: &mut [u64; 4], k0: u64, k1: u64, j: u64, cj: u64, rho: f64, rng: &mut R) {
    acc[0] = acc[0].saturating_add(k0.saturating_mul(cj));
    acc[1] = acc[1].saturating_add(k1.saturating_mul(cj));
    let k = k0 + k1;
    if j <= k0 {
        acc[2] = acc[2].saturating_add(cj + binomial(cj * (k0 - j), rho, rng));
        acc[3] = acc[3].saturating_add(binomial(cj * k1, rho, rng));
    } else {
        acc[3] = acc[3].saturating_add(cj + binomial(cj * (k - j), rho, rng));
    }
}

/// Position of the first success among `k` Bernoulli(`rho`) trials given at
/// least one success, by inversion.
fn first_survivor<R: Rng + ?Sized>(k: u64, rho: f64, rng: &mut R) -> u64 {
    if rho >= 1.0 || k == 1 {
        return 1;
    }
    let log_fail = (-rho).ln_1p();
    let any = -(k as f64 * log_fail).exp_m1();
    let u: f64 = rng.random();
    let j = ((-u * any).ln_1p() / log_fail).ceil();
    (j as u64).clamp(1, k)
}

/// Multinomial split of `n` parents by first-survivor position.
fn first_survivor_counts<R: Rng + ?Sized>(
    k: u64,
    rho: f64,
    n: u64,
    rng: &mut R,
    mut visit: impl FnMut(u64, u64),
) {
    if rho >= 1.0 || k == 1 {
        visit(1, n);
        return;
    }
    let log_fail = (-rho).ln_1p();
    let mut remaining = n;
    for j in 1..=k {
        if remaining == 0 {
            break;
        }
        let cj = if j == k {
            remaining
        } else {
            // P(J = j | J >= j) = rho / (1 − fail^(k−j+1))
            let tail = -((k - j + 1) as f64 * log_fail).exp_m1();
            binomial(remaining, (rho / tail).min(1.0), rng)
        };
        if cj > 0 {
            visit(j, cj);
            remaining -= cj;
        }
    }
}
