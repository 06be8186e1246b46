use std::collections::BTreeMap;

use super::{Histogram, ReplicateResult, SimError};
use crate::stats::Frequencies;

/// Collapses a histogram to a smaller `k_top`, moving the excess into the tail.
fn collapse(h: &Histogram, k_top: usize) -> Result<Histogram, SimError> {
    if k_top > h.k_top() {
        return Err(SimError::AboveKTop { k: k_top, k_top: h.k_top() });
    }
    let moved: u64 = h.counts[k_top..].iter().sum();
    Ok(Histogram { counts: h.counts[..k_top].to_vec(), tail: h.tail + moved })
}

/// `F_k(g)`: fraction of contaminated cells at generation `g` holding `k`
/// parasites.
pub fn proportions(result: &ReplicateResult, g: u32, k_top: usize) -> Result<Frequencies, SimError> {
    let h = collapse(&result.generation(g)?.histogram, k_top)?;
    Frequencies::from_histogram(&h).ok_or(SimError::EmptyGeneration(g))
}

/// `F_k(n0, n0+p)`: fraction of contaminated cells at `n0 + p` whose
/// generation-`n0` ancestor held `k` parasites.
pub fn ancestor_proportions(result: &ReplicateResult, n0: u32, p: u32, k_top: usize) -> Result<Frequencies, SimError> {
    let anc = result
        .ancestor_histogram
        .as_ref()
        .filter(|a| a.n0 == n0 && a.p == p)
        .ok_or(SimError::LineageNotRetained { n0, p })?;
    let h = collapse(&anc.histogram, k_top)?;
    Frequencies::from_histogram(&h).ok_or(SimError::EmptyGeneration(n0 + p))
}

/// Histogram of the number of distinct generation-`n0` parasites present
/// in each horizon cell, over cells whose ancestor held at most `k_anc`
/// parasites. Saturated cells are excluded and counted separately in the
/// replicate's multiplicity record.
pub fn multiplicity_stats(result: &ReplicateResult, n0: u32, k_anc: u64) -> Result<BTreeMap<u64, u64>, SimError> {
    let m = result
        .multiplicity
        .as_ref()
        .filter(|m| m.n0 == n0)
        .ok_or(SimError::TaggingDisabled(n0))?;
    Ok(m.table.restricted(k_anc))
}

/// Share of the parasites at generation `g` living in cells with more than
/// `k` parasites.
pub fn heavy_cell_mass(result: &ReplicateResult, g: u32, k: usize) -> Result<f64, SimError> {
    let rec = result.generation(g)?;
    if rec.total_parasites == 0 {
        return Err(SimError::EmptyGeneration(g));
    }
    let k_top = rec.histogram.k_top();
    if k > k_top {
        return Err(SimError::AboveKTop { k, k_top });
    }
    let heavy: u64 = rec.histogram.counts[k..]
        .iter()
        .enumerate()
        .map(|(i, &c)| (k + 1 + i) as u64 * c)
        .sum::<u64>()
        + rec.tail_parasites;
    Ok(heavy as f64 / rec.total_parasites as f64)
}

/// Contaminated cells of generations `< g` that left no contaminated daughter.
pub fn leaf_count(result: &ReplicateResult, g: u32) -> Result<u64, SimError> {
    Ok(result.generation(g)?.leaves_cumulative)
}
