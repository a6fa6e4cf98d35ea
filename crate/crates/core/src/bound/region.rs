use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_slotted, BoundError, SlottedInstance, SolveLimits};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionEntry {
    /// Segments are cut into `2^k` pieces.
    pub k: u32,
    pub welfare: f64,
    pub exact: bool,
    pub states: usize,
}

/// Optimal slotted welfare under successive halvings of every segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRegion {
    pub entries: Vec<RegionEntry>,
    /// Welfare with the original segments.
    pub lower: f64,
    /// Welfare at the finest refinement, standing in for the limit.
    pub upper_estimate: f64,
    pub exact: bool,
    /// Whether the entries never decrease with refinement, up to 1e-9.
    pub monotone: bool,
}

pub fn bound_region(inst: &SlottedInstance, depth: u32, limits: SolveLimits) -> Result<BoundRegion, BoundError> {
    let entries = (0..=depth)
        .into_par_iter()
        .map(|k| {
            let s = solve_slotted(&inst.refine(1 << k), limits)?;
            Ok(RegionEntry { k, welfare: s.welfare, exact: s.exact, states: s.states })
        })
        .collect::<Result<Vec<_>, BoundError>>()?;
    let monotone = entries.windows(2).all(|w| w[1].welfare >= w[0].welfare - 1e-9);
    Ok(BoundRegion {
        lower: entries[0].welfare,
        upper_estimate: entries[entries.len() - 1].welfare,
        exact: entries.iter().all(|e| e.exact),
        monotone,
        entries,
    })
}
