use super::{ReplicateResult, Sampler, SimConfig, SimError, Simulator};
use crate::stats::{wilson_interval, Acceptance, EnsembleAccumulator, EnsembleStats};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Acceptance below which rejection sampling is refused.
const MIN_ACCEPTANCE: f64 = 1e-4;
const MIN_BATCH: u64 = 256;
const MAX_BATCH: u64 = 4096;

/// How replicates of a batch are scheduled. Results do not depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon's current thread pool.
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        return Execution::Parallel;
        #[cfg(not(feature = "parallel"))]
        return Execution::Sequential;
    }
}

impl Execution {
    fn map(self, sim: &Simulator, ids: std::ops::Range<u64>) -> Vec<Option<ReplicateResult>> {
        let run = |id: u64| {
            let r = sim.run_replicate(id);
            r.accepted.then_some(r)
        };
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => ids.into_par_iter().map(run).collect(),
            _ => ids.map(run).collect(),
        }
    }
}

pub fn run_ensemble(config: &SimConfig) -> Result<EnsembleStats, SimError> {
    run_ensemble_with(config, |_| {})
}

/// Runs the ensemble, calling `observer` on every accepted replicate in
/// replicate-id order.
pub fn run_ensemble_with(
    config: &SimConfig,
    observer: impl FnMut(&ReplicateResult),
) -> Result<EnsembleStats, SimError> {
    run_ensemble_with_execution(config, Execution::default(), observer)
}

/// Replicate ids are consumed in increasing order; the ensemble consists of
/// the first `replicates` accepted ids, so the outcome is a function of the
/// configuration alone.
pub fn run_ensemble_with_execution(
    config: &SimConfig,
    execution: Execution,
    mut observer: impl FnMut(&ReplicateResult),
) -> Result<EnsembleStats, SimError> {
    let sim = Simulator::new(config)?;
    let wanted = config.replicates;
    let budget = config.attempt_budget();
    let predicted = config
        .conditioning
        .target(config.horizon)
        .map(|t| super::conditioned::survival_by_generation(config.law.total_offspring_law(), t)[t as usize]);
    if config.sampler == Sampler::Rejection {
        if let Some(rate) = predicted.filter(|&r| r < MIN_ACCEPTANCE) {
            return Err(SimError::Infeasible { rate, attempted: 0, accepted: 0 });
        }
    }

    let mut acc = EnsembleAccumulator::for_config(config);
    let mut next_id = 0u64;
    let mut attempted = 0u64;
    while acc.pushed() < wanted {
        let accepted = acc.pushed();
        let rate_guess = (accepted as f64 + 1.0) / (next_id as f64 + 2.0);
        let need = ((wanted - accepted) as f64 / rate_guess * 1.05).ceil() as u64 + 16;
        let batch = need.clamp(MIN_BATCH, MAX_BATCH).min(budget.saturating_sub(next_id)).max(1);
        let ids = next_id..next_id + batch;
        for result in execution.map(&sim, ids.clone()).into_iter().flatten() {
            if acc.pushed() == wanted {
                break;
            }
            attempted = result.replicate_id + 1;
            observer(&result);
            acc.push(&result);
        }
        next_id = ids.end;
        if acc.pushed() < wanted {
            attempted = next_id;
            let (_, upper) = wilson_interval(acc.pushed(), attempted, 0.95)?;
            if upper < MIN_ACCEPTANCE {
                return Err(SimError::Infeasible {
                    rate: acc.pushed() as f64 / attempted as f64,
                    attempted,
                    accepted: acc.pushed(),
                });
            }
            if attempted >= budget {
                return Err(SimError::BudgetExhausted { attempted, accepted: acc.pushed() });
            }
        }
    }

    let accepted = acc.pushed();
    let acceptance = match sim.exact_acceptance() {
        Some(rate) => Acceptance {
            attempted: accepted,
            accepted,
            rate,
            lower: rate,
            upper: rate,
            exact: true,
            predicted,
        },
        None => {
            let (lower, upper) = wilson_interval(accepted, attempted, 0.95)?;
            Acceptance {
                attempted,
                accepted,
                rate: accepted as f64 / attempted as f64,
                lower,
                upper,
                exact: false,
                predicted,
            }
        }
    };
    Ok(acc.finish(acceptance))
}
