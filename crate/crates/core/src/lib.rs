//! Cooperative video streaming over user-provided networks: a segmented
//! download simulator, online schedulers, and exact bounds from a
//! time-slotted relaxation.

// `!(x >= 0.0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bound;
pub mod harness;
pub mod model;
pub mod qoe;
pub mod schedulers;
pub mod sim;
pub mod traces;

pub use model::{BitrateLadder, DownloadRecord, DownloadSequence, ReceiveSequence, UserId, UserProfile, WelfareBreakdown};
pub use schedulers::{Scheduler, SchedulerKind};
pub use sim::{run, RunConfig, SchedulerDecision, SchedulerView, SimResult};
pub use traces::{CapacityTrace, MobilityTrace, NetworkTrace};
