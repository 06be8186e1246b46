//! Monte Carlo simulation of the tree of contaminated cells.
//!
//! Only contaminated cells are stored. Each generation every cell with `x`
//! parasites draws `x` independent offspring pairs from the joint law and
//! passes the summed first and second coordinates to its two daughters.

mod checks;
mod conditioned;
mod config;
mod ensemble;
mod observables;
mod state;

use serde::Serialize;
use thiserror::Error;

use crate::bpre::BpreError;
use crate::stats::StatsError;

pub use checks::{estimate_recovery, mean_identity_check, IdentityReport, IdentityRow, RecoveryReport};
pub use config::{
    Conditioning, Sampler, SimConfig, DEFAULT_CELL_CAP, DEFAULT_CROSSOVER, DEFAULT_K_TOP, DEFAULT_MARGIN,
    MAX_HORIZON,
};
pub use ensemble::{run_ensemble, run_ensemble_with, run_ensemble_with_execution, Execution};
pub use observables::{ancestor_proportions, heavy_cell_mass, leaf_count, multiplicity_stats, proportions};
pub use state::{Cell, GenerationState, Simulator, TagSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(
        "conditioning is infeasible: acceptance about {rate:e} (below 1e-4) after {attempted} attempts \
         with {accepted} accepted; use the exact sampler, a shorter horizon or a smaller margin"
    )]
    Infeasible { rate: f64, attempted: u64, accepted: u64 },
    #[error("replicate budget of {attempted} attempts exhausted with {accepted} accepted")]
    BudgetExhausted { attempted: u64, accepted: u64 },
    #[error("generation {0} has no contaminated cell")]
    EmptyGeneration(u32),
    #[error("generation {g} is outside the recorded range 0..={horizon}")]
    GenerationOutOfRange { g: u32, horizon: u32 },
    #[error("ancestor counts were not recorded for (n0={n0}, p={p})")]
    LineageNotRetained { n0: u32, p: u32 },
    #[error("parasite tagging from generation {0} was not enabled")]
    TaggingDisabled(u32),
    #[error("threshold {k} is above the recorded k_top {k_top}")]
    AboveKTop { k: usize, k_top: usize },
    #[error(transparent)]
    Bpre(#[from] BpreError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Counts of contaminated cells holding `k = 1..=k_top` parasites, plus a
/// bucket for everything above.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Histogram {
    /// `counts[k-1]` cells hold exactly `k` parasites.
    pub counts: Vec<u64>,
    pub tail: u64,
}

impl Histogram {
    pub fn new(k_top: usize) -> Self {
        Self { counts: vec![0; k_top], tail: 0 }
    }

    pub fn k_top(&self) -> usize {
        self.counts.len()
    }

    /// Adds another histogram of the same `k_top`, bucket by bucket.
    pub fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.tail += other.tail;
    }

    pub fn add(&mut self, k: u64) {
        match k {
            0 => {}
            k if k as usize <= self.counts.len() => self.counts[k as usize - 1] += 1,
            _ => self.tail += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.tail
    }
}

/// Observables of one generation of one replicate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GenerationRecord {
    /// `#G*_g`
    pub n_contaminated: u64,
    /// `𝒵_g`, saturating.
    pub total_parasites: u64,
    /// Some cell count was clamped at the cap, so `total_parasites` is approximate.
    pub saturated: bool,
    pub histogram: Histogram,
    /// Parasites in the cells of the histogram's tail bucket.
    pub tail_parasites: u64,
    /// Contaminated cells of generations `< g` without contaminated daughters.
    pub leaves_cumulative: u64,
    pub max_cell_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AncestorHistogram {
    pub n0: u32,
    pub p: u32,
    /// Contaminated cells at `n0 + p` by the parasite count of their
    /// generation-`n0` ancestor.
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MultiplicityRecord {
    /// Tagged generation.
    pub n0: u32,
    /// Horizon cells by `(ancestor count at n0, distinct tags present)`.
    pub table: crate::stats::MultiplicityTable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateResult {
    pub replicate_id: u64,
    pub accepted: bool,
    /// Generations `0..=horizon`.
    pub generations: Vec<GenerationRecord>,
    /// First simulated generation without contaminated cells.
    pub extinction_generation: Option<u32>,
    /// `#G*_horizon / 2^horizon`
    pub recovery_ratio: f64,
    pub ancestor_histogram: Option<AncestorHistogram>,
    pub multiplicity: Option<MultiplicityRecord>,
}

impl ReplicateResult {
    pub fn horizon(&self) -> u32 {
        self.generations.len() as u32 - 1
    }

    pub fn generation(&self, g: u32) -> Result<&GenerationRecord, SimError> {
        self.generations
            .get(g as usize)
            .ok_or(SimError::GenerationOutOfRange { g, horizon: self.horizon() })
    }
}

/// Simulates one replicate with the stream of `replicate_id`.
pub fn run_replicate(config: &SimConfig, replicate_id: u64) -> Result<ReplicateResult, SimError> {
    Ok(Simulator::new(config)?.run_replicate(replicate_id))
}
