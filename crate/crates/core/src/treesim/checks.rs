use serde::Serialize;

use super::{run_ensemble, Conditioning, Sampler, SimConfig, SimError};
use crate::bpre::{survival_sequence, SurvivalBracket, DEFAULT_SOLVER_BOUND};
use crate::stats::{Acceptance, Summary};

/// Standardized distance of `value` from the interval `[lower, upper]`.
fn z_outside(value: f64, stderr: f64, lower: f64, upper: f64) -> f64 {
    let gap = if value < lower {
        value - lower
    } else if value > upper {
        value - upper
    } else {
        0.0
    };
    if gap == 0.0 {
        0.0
    } else if stderr > 0.0 {
        gap / stderr
    } else if gap.abs() < 1e-12 {
        0.0
    } else {
        gap.signum() * f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityRow {
    pub generation: u32,
    /// Mean of `#G*_g / 2^g` over unconditioned replicates.
    pub mc_mean: f64,
    pub stderr: f64,
    /// Exact `P(Z_g > 0)` bracket for the random cell line.
    pub exact_lower: f64,
    pub exact_upper: f64,
    pub z: f64,
    /// Mean of `𝒵_g` against `(m0 + m1)^g`.
    pub parasites_mean: f64,
    pub parasites_stderr: f64,
    pub parasites_exact: f64,
    pub parasites_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub replicates: u64,
    pub rows: Vec<IdentityRow>,
    pub max_abs_z: f64,
}

/// Checks `E(#G*_g) / 2^g = P(Z_g > 0)` and `E(𝒵_g) = (m0 + m1)^g` at every
/// generation up to the horizon on an unconditioned ensemble.
pub fn mean_identity_check(config: &SimConfig) -> Result<IdentityReport, SimError> {
    let mut cfg = config.clone();
    cfg.conditioning = Conditioning::None;
    cfg.sampler = Sampler::Rejection;
    let stats = run_ensemble(&cfg)?;
    let exact = survival_sequence(&cfg.law, cfg.horizon, DEFAULT_SOLVER_BOUND)?;
    let (m0, m1) = cfg.law.means();
    let rows: Vec<IdentityRow> = stats
        .generations
        .iter()
        .zip(&exact)
        .map(|(agg, b)| {
            let r = &agg.recovery_ratio;
            let z = &agg.total_parasites;
            let growth = (m0 + m1).powi(agg.generation as i32);
            IdentityRow {
                generation: agg.generation,
                mc_mean: r.mean,
                stderr: r.stderr,
                exact_lower: b.lower,
                exact_upper: b.upper,
                z: z_outside(r.mean, r.stderr, b.lower, b.upper),
                parasites_mean: z.mean,
                parasites_stderr: z.stderr,
                parasites_exact: growth,
                parasites_z: z_outside(z.mean, z.stderr, growth, growth),
            }
        })
        .collect();
    let max_abs_z = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    Ok(IdentityReport { replicates: stats.accepted_count, rows, max_abs_z })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub horizon: u32,
    pub conditioning: String,
    /// `#G*_horizon / 2^horizon` given survival.
    pub conditioned: Summary,
    pub conditioned_acceptance: Acceptance,
    pub unconditioned: Summary,
    pub exact_survival: SurvivalBracket,
    /// Unconditioned mean against the exact line survival probability.
    pub z: f64,
}

/// Distribution of the contaminated fraction at the horizon, with and
/// without conditioning. Without an explicit condition, survival at the
/// horizon is used.
pub fn estimate_recovery(config: &SimConfig) -> Result<RecoveryReport, SimError> {
    let mut cond = config.clone();
    if cond.conditioning == Conditioning::None {
        cond.conditioning = Conditioning::SurviveAtHorizon;
    }
    let conditioned = run_ensemble(&cond)?;
    let mut free = config.clone();
    free.conditioning = Conditioning::None;
    free.sampler = Sampler::Rejection;
    let unconditioned = run_ensemble(&free)?;
    let exact = *survival_sequence(&config.law, config.horizon, DEFAULT_SOLVER_BOUND)?
        .last()
        .expect("nonempty");
    let h = config.horizon;
    let u = unconditioned.generation(h).recovery_ratio.clone();
    Ok(RecoveryReport {
        horizon: h,
        conditioning: cond.conditioning.label(),
        conditioned: conditioned.generation(h).recovery_ratio.clone(),
        conditioned_acceptance: conditioned.acceptance.clone(),
        z: z_outside(u.mean, u.stderr, exact.lower, exact.upper),
        unconditioned: u,
        exact_survival: exact,
    })
}
