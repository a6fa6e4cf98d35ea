//! Scenario generation, paired cooperative/non-cooperative runs, bound gaps
//! on down-scoped prefixes, and report export.

mod config;
mod presets;
mod report;

pub use config::{BoundParams, CoordinationParams, LyapunovParams, MobilityRegime, ProfileParams, ScenarioConfig, SWEEP_AXES};
pub use presets::{MobilityPreset, DENSE_SHORT, SPARSE_LONG};
pub use report::{write_summary_csv, ExperimentReport, MicroBound, RunReport, SchedulerReport, Stat};

use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bound::{bound_region, BoundError, BoundRegion, SlottedInstance, SolveLimits};
use crate::model::UserProfile;
use crate::schedulers::{Scheduler, SchedulerKind};
use crate::sim::{self, SimError, SimSummary};
use crate::traces::{load_capacity_csv, load_mobility_csv, synth_traces, MobilityTrace, NetworkTrace, StepSeries, SynthConfig, TraceError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Whether the fault lies in the inputs rather than in a run.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Self::Config(_))
    }
}

/// Seed used for repetition `rep`.
pub fn repetition_seed(cfg: &ScenarioConfig, rep: u32) -> u64 {
    cfg.seed.wrapping_add(rep as u64)
}

/// Capacity and mobility for one repetition.
pub fn build_trace(cfg: &ScenarioConfig, seed: u64) -> Result<NetworkTrace, HarnessError> {
    let synth = |p: MobilityPreset| SynthConfig {
        users: cfg.users,
        horizon: cfg.horizon,
        hotspots: p.hotspots,
        dwell_mean: p.dwell_mean,
        transition_mean: p.transition_mean,
        cap_lo: cfg.cap_lo,
        cap_hi: cfg.cap_hi,
        cap_period: cfg.cap_period,
        cap_jitter: cfg.cap_jitter,
    };
    let trace = match &cfg.mobility {
        MobilityRegime::Csv { capacity, mobility } => {
            let full = NetworkTrace::new(load_capacity_csv(capacity)?, load_mobility_csv(mobility)?)?;
            if full.num_users() < cfg.users || full.horizon() < cfg.horizon {
                return Err(HarnessError::Config(format!(
                    "traces cover {} users over {} s, scenario needs {} over {}",
                    full.num_users(),
                    full.horizon(),
                    cfg.users,
                    cfg.horizon
                )));
            }
            full.truncate(cfg.users, cfg.horizon)?
        }
        regime => {
            let (cap, mob) = synth_traces(&synth(regime.preset().unwrap_or(DENSE_SHORT)), seed)?;
            let mob = match regime {
                MobilityRegime::FullCoop => MobilityTrace::all_together(cfg.users, cfg.horizon),
                MobilityRegime::NonCoop => {
                    let series = (0..cfg.users).map(|u| StepSeries::constant(u as u32 + 1, cfg.horizon)).collect();
                    MobilityTrace::new(series, cfg.users as u32)?
                }
                _ => mob,
            };
            NetworkTrace::new(cap, mob)?
        }
    };
    Ok(trace)
}

/// Which users stream: a seeded sample of `round(fraction * users)`.
pub fn video_users(cfg: &ScenarioConfig, seed: u64) -> Vec<bool> {
    let k = ((cfg.video_fraction * cfg.users as f64).round() as usize).min(cfg.users);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
    let mut flags = vec![false; cfg.users];
    for i in sample(&mut rng, cfg.users, k) {
        flags[i] = true;
    }
    flags
}

pub fn build_profiles(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<UserProfile>, HarnessError> {
    video_users(cfg, seed).into_iter().enumerate().map(|(id, v)| cfg.profile.profile(id, v)).collect()
}

/// `(new - base) / |base|`, undefined when the base is zero.
fn gain(new: f64, base: f64) -> Option<f64> {
    (base.abs() > 1e-12).then(|| (new - base) / base.abs())
}

/// The down-scoped prefix used for bounds: the first `bound.users` users over
/// the first `bound.slots` whole seconds, on the bound ladder.
pub fn micro_instance(cfg: &ScenarioConfig, trace: &NetworkTrace, profiles: &[UserProfile]) -> Result<Option<(NetworkTrace, Vec<UserProfile>, SlottedInstance)>, HarnessError> {
    let users = cfg.bound.users.min(profiles.len());
    let horizon = (cfg.bound.slots as f64).min(trace.horizon().floor());
    if users == 0 || horizon < 1.0 {
        return Ok(None);
    }
    let micro = trace.truncate(users, horizon)?;
    let mut params = cfg.profile.clone();
    if !cfg.bound.ladder.is_empty() {
        params.ladder = cfg.bound.ladder.clone();
    }
    let ps = profiles[..users].iter().map(|p| params.profile(p.id, p.is_video_user)).collect::<Result<Vec<_>, _>>()?;
    let inst = SlottedInstance::from_trace(&micro, ps.clone())?;
    Ok(Some((micro, ps, inst)))
}

fn micro_bound(cfg: &ScenarioConfig, trace: &NetworkTrace, profiles: &[UserProfile]) -> Result<Option<(NetworkTrace, Vec<UserProfile>, BoundRegion)>, HarnessError> {
    let Some((micro, ps, inst)) = micro_instance(cfg, trace, profiles)? else { return Ok(None) };
    let region = bound_region(&inst, cfg.bound.refine, SolveLimits { max_states: cfg.bound.max_states })?;
    Ok(Some((micro, ps, region)))
}

fn run_repetition(cfg: &ScenarioConfig, kinds: &[SchedulerKind], rep: u32, records: Option<&Path>) -> Result<Vec<RunReport>, HarnessError> {
    let seed = repetition_seed(cfg, rep);
    let trace = build_trace(cfg, seed)?;
    let profiles = build_profiles(cfg, seed)?;
    let bound = if cfg.bound.enabled { micro_bound(cfg, &trace, &profiles)? } else { None };
    let mut out = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let coop = sim::run(&trace, &profiles, kind, &cfg.run_config(true))?;
        let noncoop = sim::run(&trace, &profiles, kind, &cfg.run_config(false))?;
        if let Some(dir) = records {
            for (tag, res) in [("coop", &coop), ("noncoop", &noncoop)] {
                let path = dir.join(format!("records_{}_rep{rep}_{tag}.csv", kind.name()));
                sim::write_records_csv(res, std::fs::File::create(path)?)?;
            }
        }
        let micro = match &bound {
            Some((t, ps, region)) => {
                let w = sim::run(t, ps, kind, &cfg.run_config(true))?.social_welfare;
                let usable = region.exact && region.upper_estimate > 0.0;
                Some(MicroBound {
                    users: ps.len(),
                    slots: t.horizon() as usize,
                    online_welfare: w,
                    region: region.clone(),
                    gap_ratio: usable.then(|| 1.0 - w / region.upper_estimate),
                })
            }
            None => None,
        };
        let (c, n) = (SimSummary::from(&coop), SimSummary::from(&noncoop));
        out.push(RunReport {
            repetition: rep,
            seed,
            bitrate_gain: c.avg_bitrate_mbps.zip(n.avg_bitrate_mbps).and_then(|(a, b)| gain(a, b)),
            welfare_gain: gain(c.social_welfare, n.social_welfare),
            coop: c,
            noncoop: n,
            micro_bound: micro,
        });
    }
    Ok(out)
}

pub fn run_experiment(cfg: &ScenarioConfig) -> Result<ExperimentReport, HarnessError> {
    run_experiment_with_records(cfg, None)
}

/// Like [`run_experiment`], also writing every run's download records into `records`.
pub fn run_experiment_with_records(cfg: &ScenarioConfig, records: Option<&Path>) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let kinds = cfg.scheduler_kinds();
    let per_rep = (0..cfg.repetitions).into_par_iter().map(|rep| run_repetition(cfg, &kinds, rep, records)).collect::<Result<Vec<_>, _>>()?;
    let schedulers = kinds
        .iter()
        .enumerate()
        .map(|(i, k)| SchedulerReport::aggregate(k.name(), per_rep.iter().map(|runs| runs[i].clone()).collect()))
        .collect();
    Ok(ExperimentReport { scenario: cfg.name.clone(), config: cfg.clone(), schedulers })
}

/// One report per value of `axis`, every point on the same seeds.
pub fn sweep(cfg: &ScenarioConfig, axis: &str, values: &[f64]) -> Result<Vec<ExperimentReport>, HarnessError> {
    if !SWEEP_AXES.contains(&axis) {
        return Err(HarnessError::Config(format!("unknown sweep axis {axis:?} (known: {})", SWEEP_AXES.join(", "))));
    }
    let cfgs = values.iter().map(|&v| cfg.with_axis(axis, v)).collect::<Result<Vec<_>, _>>()?;
    cfgs.par_iter().map(run_experiment).collect()
}
