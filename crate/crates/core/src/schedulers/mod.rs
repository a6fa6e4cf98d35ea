//! Decision policies: the drift-plus-penalty scheduler, its self-only
//! variant used as the non-cooperative benchmark, and two heuristic baselines.

mod baseline;
mod lyapunov;

pub use baseline::{buffer_based_decide, buffer_level, predicted_capacity, prediction_based_decide, select_owner, supported_level, BaselineConfig};
pub use lyapunov::{argmin_phi, drift, drift_term, greedy_noncoop_decide, lyapunov_decide, phi, LyapunovConfig};

use serde::{Deserialize, Serialize};

use crate::sim::{SchedulerDecision, SchedulerView};

pub trait Scheduler: Send + Sync {
    fn name(&self) -> &'static str;
    fn decide(&self, view: &SchedulerView<'_>) -> SchedulerDecision;
}

/// Every built-in policy with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SchedulerKind {
    Lyapunov(LyapunovConfig),
    BufferBased(BaselineConfig),
    PredictionBased(BaselineConfig),
    GreedyNoncoop(LyapunovConfig),
}

impl SchedulerKind {
    /// Parses the short names used on the command line and in configs.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "lyapunov" => Self::Lyapunov(LyapunovConfig::default()),
            "buffer-based" => Self::BufferBased(BaselineConfig::default()),
            "prediction-based" => Self::PredictionBased(BaselineConfig::default()),
            "greedy-noncoop" => Self::GreedyNoncoop(LyapunovConfig::default()),
            _ => return None,
        })
    }

    pub fn lambda_mut(&mut self) -> Option<&mut f64> {
        match self {
            Self::Lyapunov(c) | Self::GreedyNoncoop(c) => Some(&mut c.lambda),
            _ => None,
        }
    }
}

impl Scheduler for SchedulerKind {
    fn name(&self) -> &'static str {
        match self {
            Self::Lyapunov(_) => "lyapunov",
            Self::BufferBased(_) => "buffer-based",
            Self::PredictionBased(_) => "prediction-based",
            Self::GreedyNoncoop(_) => "greedy-noncoop",
        }
    }

    fn decide(&self, view: &SchedulerView<'_>) -> SchedulerDecision {
        match self {
            Self::Lyapunov(c) => lyapunov_decide(view, c),
            Self::BufferBased(c) => buffer_based_decide(view, c),
            Self::PredictionBased(c) => prediction_based_decide(view, c),
            Self::GreedyNoncoop(c) => greedy_noncoop_decide(view, c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::profile;
    use crate::sim::PeerState;

    #[test]
    fn names_round_trip() {
        for n in ["lyapunov", "buffer-based", "prediction-based", "greedy-noncoop"] {
            assert_eq!(SchedulerKind::from_name(n).unwrap().name(), n);
        }
        assert!(SchedulerKind::from_name("bogus").is_none());
    }

    #[test]
    fn single_user_greedy_matches_lyapunov() {
        let p = profile(0);
        for q in [0.0, 5.0, 17.0, 36.0, 39.0] {
            for cap in [0.1, 0.9, 2.3, 7.0] {
                let v = SchedulerView {
                    decider: 0,
                    clock: 0.0,
                    capacity: cap,
                    peers: vec![PeerState { id: 0, profile: &p, buffer: q, in_flight: 0, last_bitrate: Some(0.7), received: 2, remaining: 8 }],
                    throughput_history: &[],
                };
                let c = LyapunovConfig::default();
                assert_eq!(SchedulerKind::Lyapunov(c.clone()).decide(&v), SchedulerKind::GreedyNoncoop(c).decide(&v));
            }
        }
    }
}
