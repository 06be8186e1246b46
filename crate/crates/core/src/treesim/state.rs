use rand::Rng;
use serde::Serialize;

use super::conditioned::ConditionedTables;
use super::{
    AncestorHistogram, Conditioning, GenerationRecord, Histogram, MultiplicityRecord, ReplicateResult, Sampler,
    SimConfig, SimError,
};
use crate::sampling::{replicate_rng, stochastic_round, OutcomeSampler, SimRng};
use crate::stats::MultiplicityTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Cell {
    pub count: u64,
    /// Index of the mother cell in the previous generation.
    pub parent: u32,
    /// Count reached the cap at some point along this line and is no
    /// longer exact.
    pub saturated: bool,
}

/// Distinct tags present in one cell.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TagSet {
    /// Parasite count of the tagged-generation ancestor cell.
    pub ancestor_count: u64,
    /// `(tag, parasites carrying it)`, tags unique within the ancestor cell.
    pub tags: Vec<(u32, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GenerationState {
    pub generation: u32,
    pub cells: Vec<Cell>,
    /// Present from the tagged generation on; empty sets in saturated cells.
    pub tags: Option<Vec<TagSet>>,
    /// Parasite count of each cell's ancestor at the recorded depth.
    pub lineage: Option<Vec<u64>>,
    /// Parasites whose line survives to the conditioning target (exact
    /// conditioned sampler only).
    pub survivors: Option<Vec<u64>>,
}

impl GenerationState {
    /// A single cell with a single parasite.
    pub fn initial(conditioned: bool) -> Self {
        Self {
            generation: 0,
            cells: vec![Cell { count: 1, parent: 0, saturated: false }],
            tags: None,
            lineage: None,
            survivors: conditioned.then(|| vec![1]),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// `(𝒵, saturated)` with saturating addition.
    pub fn total_parasites(&self) -> (u64, bool) {
        self.cells.iter().fold((0u64, false), |(t, s), c| (t.saturating_add(c.count), s || c.saturated))
    }

    fn record(&self, k_top: usize, leaves_cumulative: u64) -> GenerationRecord {
        let mut histogram = Histogram::new(k_top);
        let mut tail_parasites = 0u64;
        let mut max_cell_count = 0u64;
        for c in &self.cells {
            histogram.add(c.count);
            if c.count > k_top as u64 {
                tail_parasites = tail_parasites.saturating_add(c.count);
            }
            max_cell_count = max_cell_count.max(c.count);
        }
        let (total_parasites, saturated) = self.total_parasites();
        GenerationRecord {
            n_contaminated: self.cells.len() as u64,
            total_parasites,
            saturated,
            histogram,
            tail_parasites,
            leaves_cumulative,
            max_cell_count,
        }
    }

    fn start_tags(&mut self) {
        self.tags = Some(
            self.cells
                .iter()
                .map(|c| TagSet {
                    ancestor_count: c.count,
                    tags: if c.saturated { Vec::new() } else { (0..c.count as u32).map(|t| (t, 1)).collect() },
                })
                .collect(),
        );
    }
}

/// Precomputed samplers for one configuration; shared by all replicates.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    joint: OutcomeSampler,
    conditioned: Option<ConditionedTables>,
}

/// What happened to one cell in one step.
struct Daughters {
    counts: [u64; 2],
    survivors: [u64; 2],
    tags: [Vec<(u32, u64)>; 2],
}

impl Simulator {
    pub fn new(config: &SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let outcomes: Vec<((u64, u64), f64)> =
            config.law.outcomes().iter().map(|o| ((o.k0 as u64, o.k1 as u64), o.prob)).collect();
        let joint = OutcomeSampler::new(outcomes.iter().copied())
            .ok_or_else(|| SimError::InvalidConfig("offspring law has no positive mass".into()))?;
        let conditioned = match config.sampler {
            Sampler::Rejection => None,
            Sampler::HTransform => {
                let target = config.conditioning.target(config.horizon).expect("validated");
                let tables = ConditionedTables::new(&outcomes, config.law.total_offspring_law(), target);
                if !(tables.acceptance() > 0.0) {
                    return Err(SimError::Infeasible { rate: 0.0, attempted: 0, accepted: 0 });
                }
                Some(tables)
            }
        };
        Ok(Self { config: config.clone(), joint, conditioned })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// `P(𝒵_T > 0)` computed exactly, when the exact sampler is in use.
    pub fn exact_acceptance(&self) -> Option<f64> {
        self.conditioned.as_ref().map(ConditionedTables::acceptance)
    }

    fn saturated_mean(&self, remaining: Option<u32>) -> (f64, f64) {
        match (remaining, &self.conditioned) {
            (Some(r), Some(t)) => t.doomed_mean(r),
            _ => self.joint.mean(),
        }
    }

    fn offspring<R: Rng + ?Sized>(
        &self,
        cell: &Cell,
        survivors: u64,
        tags: Option<&TagSet>,
        remaining: Option<u32>,
        rng: &mut R,
    ) -> Daughters {
        let crossover = self.config.crossover;
        let mut out = Daughters { counts: [0; 2], survivors: [0; 2], tags: [Vec::new(), Vec::new()] };
        if let (Some(r), Some(tables)) = (remaining, &self.conditioned) {
            let [c0, c1, s0, s1] = tables.surviving_step(r, survivors, crossover, rng);
            let doomed = cell.count - survivors.min(cell.count);
            let (d0, d1) = if cell.saturated {
                let (m0, m1) = tables.doomed_mean(r);
                (stochastic_round(doomed as f64 * m0, rng), stochastic_round(doomed as f64 * m1, rng))
            } else {
                tables.doomed_sum(r, doomed, crossover, rng)
            };
            out.counts = [c0.saturating_add(d0), c1.saturating_add(d1)];
            out.survivors = [s0, s1];
            return out;
        }
        if cell.saturated {
            let (m0, m1) = self.saturated_mean(remaining);
            let x = cell.count as f64;
            out.counts = [stochastic_round(x * m0, rng), stochastic_round(x * m1, rng)];
            return out;
        }
        match tags {
            Some(set) => {
                for &(tag, c) in &set.tags {
                    let (z0, z1) = self.joint.sum_of(c, crossover, rng);
                    for (a, z) in [z0, z1].into_iter().enumerate() {
                        if z > 0 {
                            out.tags[a].push((tag, z));
                            out.counts[a] = out.counts[a].saturating_add(z);
                        }
                    }
                }
            }
            None => {
                let (z0, z1) = self.joint.sum_of(cell.count, crossover, rng);
                out.counts = [z0, z1];
            }
        }
        out
    }

    /// One generation. Returns the next state and the number of cells of
    /// `state` that left no contaminated daughter.
    pub fn step<R: Rng + ?Sized>(&self, state: &GenerationState, rng: &mut R) -> (GenerationState, u64) {
        let cap = self.config.cell_cap;
        let remaining = self
            .conditioned
            .as_ref()
            .map(|t| t.target() - state.generation);
        let n = state.cells.len();
        let mut next = GenerationState {
            generation: state.generation + 1,
            cells: Vec::with_capacity(2 * n),
            tags: state.tags.as_ref().map(|_| Vec::with_capacity(2 * n)),
            lineage: state.lineage.as_ref().map(|_| Vec::with_capacity(2 * n)),
            survivors: state.survivors.as_ref().map(|_| Vec::with_capacity(2 * n)),
        };
        let mut leaves = 0;
        for (i, cell) in state.cells.iter().enumerate() {
            let survivors = state.survivors.as_ref().map_or(0, |s| s[i]);
            let tags = state.tags.as_ref().map(|t| &t[i]);
            let mut d = self.offspring(cell, survivors, tags, remaining, rng);
            let mut any = false;
            for a in 0..2 {
                let count = d.counts[a];
                if count == 0 {
                    continue;
                }
                any = true;
                let saturated = cell.saturated || count >= cap;
                next.cells.push(Cell { count: count.min(cap), parent: i as u32, saturated });
                if let Some(t) = next.tags.as_mut() {
                    let tags = if saturated { Vec::new() } else { std::mem::take(&mut d.tags[a]) };
                    let ancestor_count = state.tags.as_ref().unwrap()[i].ancestor_count;
                    t.push(TagSet { ancestor_count, tags });
                }
                if let Some(l) = next.lineage.as_mut() {
                    l.push(state.lineage.as_ref().unwrap()[i]);
                }
                if let Some(s) = next.survivors.as_mut() {
                    s.push(d.survivors[a].min(cap));
                }
            }
            if !any {
                leaves += 1;
            }
        }
        (next, leaves)
    }

    pub fn run_replicate(&self, replicate_id: u64) -> ReplicateResult {
        let mut rng: SimRng = replicate_rng(self.config.master_seed, replicate_id);
        self.run_with_rng(replicate_id, &mut rng)
    }

    fn run_with_rng(&self, replicate_id: u64, rng: &mut SimRng) -> ReplicateResult {
        let cfg = &self.config;
        let horizon = cfg.horizon;
        let end = cfg.simulated_generations();
        let mut state = GenerationState::initial(self.conditioned.is_some());
        let mut leaves = 0u64;
        let mut generations = Vec::with_capacity(horizon as usize + 1);
        let mut extinction_generation = None;
        let mut ancestor_histogram = None;
        let mut multiplicity = None;

        for g in 0..=end {
            if g > 0 {
                if state.is_empty() {
                    if g > horizon {
                        break;
                    }
                    generations.push(state.record(cfg.k_top, leaves));
                    continue;
                }
                let (next, new_leaves) = self.step(&state, rng);
                debug_assert!(next.cells.len() <= 2 * state.cells.len());
                leaves += new_leaves;
                state = next;
                if state.is_empty() && extinction_generation.is_none() {
                    extinction_generation = Some(g);
                }
            }
            if let Some((n0, p)) = cfg.ancestor_depth {
                if g == n0 {
                    state.lineage = Some(state.cells.iter().map(|c| c.count).collect());
                }
                if g == n0 + p {
                    let mut histogram = Histogram::new(cfg.k_top);
                    for &a in state.lineage.as_ref().unwrap() {
                        histogram.add(a);
                    }
                    ancestor_histogram = Some(AncestorHistogram { n0, p, histogram });
                    state.lineage = None;
                }
            }
            if cfg.tag_from == Some(g) {
                state.start_tags();
            }
            if g <= horizon {
                generations.push(state.record(cfg.k_top, leaves));
            }
            if g == horizon {
                if let (Some(n0), Some(tags)) = (cfg.tag_from, state.tags.take()) {
                    let mut table = MultiplicityTable::default();
                    for (cell, set) in state.cells.iter().zip(&tags) {
                        if cell.saturated {
                            table.excluded_saturated += 1;
                        } else {
                            *table.cells.entry((set.ancestor_count, set.tags.len() as u64)).or_insert(0) += 1;
                        }
                    }
                    multiplicity = Some(MultiplicityRecord { n0, table });
                }
            }
            if g >= horizon && state.is_empty() {
                break;
            }
        }

        let accepted = match (cfg.sampler, cfg.conditioning) {
            (Sampler::HTransform, _) | (_, Conditioning::None) => true,
            _ => !state.is_empty(),
        };
        let recovery_ratio = generations[horizon as usize].n_contaminated as f64 / (horizon as f64).exp2();
        ReplicateResult {
            replicate_id,
            accepted,
            generations,
            extinction_generation,
            recovery_ratio,
            ancestor_histogram,
            multiplicity,
        }
    }
}
