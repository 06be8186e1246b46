use serde_json::{json, Value};

use super::SimError;
use crate::model::OffspringLaw;

/// Default look-ahead used to approximate conditioning on non-extinction.
pub const DEFAULT_MARGIN: u32 = 6;
pub const DEFAULT_K_TOP: usize = 64;
pub const DEFAULT_CELL_CAP: u64 = 1 << 30;
pub const DEFAULT_CROSSOVER: u64 = 16;
/// `#G*_n` is reported relative to `2^n`, which must stay exact in `u64`.
pub const MAX_HORIZON: u32 = 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    None,
    /// Keep replicates with `𝒵_horizon > 0`.
    SurviveAtHorizon,
    /// Simulate `Δ` extra generations and keep replicates with
    /// `𝒵_{horizon+Δ} > 0`; statistics are read at the horizon.
    SurviveWithMargin(u32),
}

impl Conditioning {
    /// Generation at which survival is required, if any.
    pub fn target(&self, horizon: u32) -> Option<u32> {
        match *self {
            Conditioning::None => None,
            Conditioning::SurviveAtHorizon => Some(horizon),
            Conditioning::SurviveWithMargin(d) => Some(horizon + d),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Conditioning::None => "none".into(),
            Conditioning::SurviveAtHorizon => "horizon".into(),
            Conditioning::SurviveWithMargin(d) => format!("margin={d}"),
        }
    }
}

/// How conditioned replicates are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    /// Simulate unconditioned trees and discard those failing the condition.
    Rejection,
    /// Simulate directly under the conditioned law: every parasite carries
    /// a flag saying whether its line survives to the target generation, and
    /// offspring are drawn from the corresponding Doob h-transformed laws.
    /// Exact, with no discarded work, so rare events cost nothing extra.
    HTransform,
}

impl Sampler {
    pub fn label(&self) -> &'static str {
        match self {
            Sampler::Rejection => "rejection",
            Sampler::HTransform => "exact",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub law: OffspringLaw,
    pub horizon: u32,
    /// Number of accepted replicates wanted.
    pub replicates: u64,
    pub master_seed: u64,
    pub conditioning: Conditioning,
    pub sampler: Sampler,
    pub k_top: usize,
    pub cell_cap: u64,
    /// Below this many parasites a cell's offspring are drawn one by one.
    pub crossover: u64,
    /// Generation whose parasites receive distinct tags.
    pub tag_from: Option<u32>,
    /// `(n0, p)`: record the generation-`n0` ancestor count of every
    /// contaminated cell at `n0 + p`.
    pub ancestor_depth: Option<(u32, u32)>,
    /// Replicate budget; defaults to `10^4` attempts per wanted replicate.
    pub max_attempts: Option<u64>,
}

impl SimConfig {
    pub fn new(law: OffspringLaw, horizon: u32, replicates: u64, master_seed: u64) -> Self {
        Self {
            law,
            horizon,
            replicates,
            master_seed,
            conditioning: Conditioning::None,
            sampler: Sampler::Rejection,
            k_top: DEFAULT_K_TOP,
            cell_cap: DEFAULT_CELL_CAP,
            crossover: DEFAULT_CROSSOVER,
            tag_from: None,
            ancestor_depth: None,
            max_attempts: None,
        }
    }

    pub fn with_conditioning(mut self, conditioning: Conditioning) -> Self {
        self.conditioning = conditioning;
        self
    }

    pub fn with_sampler(mut self, sampler: Sampler) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn with_k_top(mut self, k_top: usize) -> Self {
        self.k_top = k_top;
        self
    }

    pub fn with_cell_cap(mut self, cap: u64) -> Self {
        self.cell_cap = cap;
        self
    }

    pub fn with_tags_from(mut self, generation: u32) -> Self {
        self.tag_from = Some(generation);
        self
    }

    pub fn with_ancestor_depth(mut self, n0: u32, p: u32) -> Self {
        self.ancestor_depth = Some((n0, p));
        self
    }

    pub fn with_max_attempts(mut self, attempts: u64) -> Self {
        self.max_attempts = Some(attempts);
        self
    }

    /// Last generation that has to be simulated.
    pub fn simulated_generations(&self) -> u32 {
        match self.sampler {
            Sampler::HTransform => self.horizon,
            Sampler::Rejection => self.conditioning.target(self.horizon).unwrap_or(self.horizon),
        }
    }

    pub fn attempt_budget(&self) -> u64 {
        self.max_attempts
            .unwrap_or_else(|| self.replicates.saturating_mul(10_000).max(100_000))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if self.horizon > MAX_HORIZON {
            return bad(format!("horizon {} exceeds the maximum {MAX_HORIZON}", self.horizon));
        }
        if self.replicates < 1 {
            return bad("replicates must be at least 1".into());
        }
        if self.k_top < 1 {
            return bad("k_top must be at least 1".into());
        }
        if self.cell_cap <= self.k_top as u64 {
            return bad(format!("cell_cap {} must exceed k_top {}", self.cell_cap, self.k_top));
        }
        if self.cell_cap > 1 << 40 {
            return bad(format!("cell_cap {} is above 2^40", self.cell_cap));
        }
        if self.crossover < 1 {
            return bad("crossover must be at least 1".into());
        }
        if let Some(t) = self.tag_from {
            if t > self.horizon {
                return bad(format!("tag_from {t} is past the horizon {}", self.horizon));
            }
            if self.sampler == Sampler::HTransform {
                return bad("parasite tagging is only available with the rejection sampler".into());
            }
        }
        if let Some((n0, p)) = self.ancestor_depth {
            if n0 + p > self.horizon {
                return bad(format!("ancestor depth ({n0},{p}) reaches past the horizon {}", self.horizon));
            }
        }
        if self.sampler == Sampler::HTransform && self.conditioning == Conditioning::None {
            return bad("the exact sampler needs a survival condition".into());
        }
        if self.conditioning.target(self.horizon).is_some_and(|t| t > 4 * MAX_HORIZON) {
            return bad("conditioning margin too large".into());
        }
        Ok(())
    }

    /// Fully resolved configuration, for report echoes.
    pub fn to_json(&self) -> Value {
        json!({
            "law": self.law.config_json(),
            "horizon": self.horizon,
            "replicates": self.replicates,
            "master_seed": self.master_seed,
            "conditioning": self.conditioning.label(),
            "sampler": self.sampler.label(),
            "k_top": self.k_top,
            "cell_cap": self.cell_cap,
            "crossover": self.crossover,
            "tag_from": self.tag_from,
            "ancestor_depth": self.ancestor_depth.map(|(n0, p)| json!([n0, p])),
            "max_attempts": self.attempt_budget(),
        })
    }
}
