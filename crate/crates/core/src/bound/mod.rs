//! The time-slotted relaxation: plan evaluation, an exact solver for small
//! instances, refinement regions and the mapping back to segmented records.

mod instance;
mod mapping;
mod plan;
mod region;
mod solver;

pub use instance::SlottedInstance;
pub use mapping::plan_to_downloads;
pub use plan::{slotted_welfare, PlanEntry, SlottedPlan};
pub use region::{bound_region, BoundRegion, RegionEntry};
pub use solver::{solve_slotted, SolveLimits, Solution};

use thiserror::Error;

use crate::model::ModelError;
use crate::traces::TraceError;

#[derive(Debug, Error)]
pub enum BoundError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("instance: {0}")]
    Shape(String),
    #[error("infeasible plan: {0}")]
    InfeasiblePlan(String),
    #[error("slot {slot} of user {user} does not have constant capacity")]
    NotSlotAligned { user: usize, slot: usize },
}
