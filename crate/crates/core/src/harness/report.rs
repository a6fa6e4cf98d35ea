use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ScenarioConfig;
use crate::bound::BoundRegion;
use crate::sim::SimSummary;

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    /// `None` for an empty sample; a single value has zero spread.
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Some(Self { mean, std: var.sqrt(), n })
    }
}

/// Gap of one online run against the slotted bound on a down-scoped prefix.
/// It describes that micro-instance only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroBound {
    pub users: usize,
    pub slots: usize,
    pub online_welfare: f64,
    pub region: BoundRegion,
    /// `1 - online / upper`; absent when the solver ran out of budget or the bound is not positive.
    pub gap_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub repetition: u32,
    pub seed: u64,
    pub coop: SimSummary,
    /// Same scheduler and traces with every peer out of reach.
    pub noncoop: SimSummary,
    pub bitrate_gain: Option<f64>,
    pub welfare_gain: Option<f64>,
    pub micro_bound: Option<MicroBound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerReport {
    pub scheduler: String,
    pub avg_bitrate_mbps: Option<Stat>,
    pub noncoop_avg_bitrate_mbps: Option<Stat>,
    pub bitrate_gain: Option<Stat>,
    pub social_welfare: Stat,
    pub noncoop_social_welfare: Stat,
    pub welfare_gain: Option<Stat>,
    pub rebuffer_s: Stat,
    pub ready_messages: Stat,
    pub ack_messages: Stat,
    pub micro_gap_ratio: Option<Stat>,
    pub runs: Vec<RunReport>,
}

impl SchedulerReport {
    pub fn aggregate(name: &str, runs: Vec<RunReport>) -> Self {
        let col = |f: &dyn Fn(&RunReport) -> Option<f64>| runs.iter().filter_map(f).collect::<Vec<_>>();
        let all = |f: &dyn Fn(&RunReport) -> f64| Stat::of(&col(&|r| Some(f(r)))).expect("at least one repetition");
        Self {
            scheduler: name.to_string(),
            avg_bitrate_mbps: Stat::of(&col(&|r| r.coop.avg_bitrate_mbps)),
            noncoop_avg_bitrate_mbps: Stat::of(&col(&|r| r.noncoop.avg_bitrate_mbps)),
            bitrate_gain: Stat::of(&col(&|r| r.bitrate_gain)),
            social_welfare: all(&|r| r.coop.social_welfare),
            noncoop_social_welfare: all(&|r| r.noncoop.social_welfare),
            welfare_gain: Stat::of(&col(&|r| r.welfare_gain)),
            rebuffer_s: all(&|r| r.coop.rebuffer_s),
            ready_messages: all(&|r| r.coop.messages.ready as f64),
            ack_messages: all(&|r| r.coop.messages.ack as f64),
            micro_gap_ratio: Stat::of(&col(&|r| r.micro_bound.as_ref().and_then(|m| m.gap_ratio))),
            runs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: String,
    pub config: ScenarioConfig,
    pub schedulers: Vec<SchedulerReport>,
}

impl ExperimentReport {
    pub fn scheduler(&self, name: &str) -> Option<&SchedulerReport> {
        self.schedulers.iter().find(|s| s.scheduler == name)
    }
}

fn cell(v: Option<f64>) -> String {
    // Adding zero folds -0.0 into 0.0.
    v.map(|x| format!("{:.6}", x + 0.0)).unwrap_or_default()
}

/// One row per scenario and scheduler, repetition means, blank where undefined.
pub fn write_summary_csv<W: Write>(reports: &[ExperimentReport], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scenario", "scheduler", "avg_bitrate_mbps", "bitrate_gain", "social_welfare", "welfare_gain", "rebuf_s", "gap_ratio"])?;
    for r in reports {
        for s in &r.schedulers {
            let m = |x: &Option<Stat>| cell(x.map(|s| s.mean));
            w.write_record([
                r.scenario.clone(),
                s.scheduler.clone(),
                m(&s.avg_bitrate_mbps),
                m(&s.bitrate_gain),
                cell(Some(s.social_welfare.mean)),
                m(&s.welfare_gain),
                cell(Some(s.rebuffer_s.mean)),
                m(&s.micro_gap_ratio),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
