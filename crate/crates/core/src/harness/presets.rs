use serde::{Deserialize, Serialize};

/// Hotspot layout and movement rhythm for the synthetic mobility generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityPreset {
    pub hotspots: u32,
    /// Mean seconds spent at a hotspot.
    pub dwell_mean: f64,
    /// Mean seconds spent travelling between hotspots.
    pub transition_mean: f64,
}

/// Few hotspots, short stays: users meet often but briefly.
pub const DENSE_SHORT: MobilityPreset = MobilityPreset { hotspots: 4, dwell_mean: 30.0, transition_mean: 10.0 };

/// Many hotspots, long stays and long trips: encounters are rarer but last.
pub const SPARSE_LONG: MobilityPreset = MobilityPreset { hotspots: 10, dwell_mean: 200.0, transition_mean: 100.0 };
