use serde::{Deserialize, Serialize};

use crate::model::UserId;
use crate::qoe::decision_welfare;
use crate::sim::{PeerState, SchedulerDecision, SchedulerView};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovConfig {
    /// Weight of welfare against buffer regulation.
    pub lambda: f64,
    /// Wait instead of downloading when every option has positive drift-plus-penalty.
    pub skip_unprofitable: bool,
    /// Wait used by `skip_unprofitable`, seconds.
    pub retry: f64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self { lambda: 1000.0, skip_unprofitable: false, retry: 2.0 }
    }
}

/// One user's change of `(Q - q)^2 / 2` when its buffer moves from `before` to `after`.
pub fn drift_term(cap: f64, before: f64, after: f64) -> f64 {
    0.5 * ((cap - after).powi(2) - (cap - before).powi(2))
}

/// Buffer drift over the group if `owner` gets a segment taking `gamma` seconds.
pub fn drift(view: &SchedulerView<'_>, owner: UserId, gamma: f64) -> f64 {
    view.peers
        .iter()
        .filter(|m| m.id == owner || m.can_rebuffer())
        .map(|m| {
            let (cap, q) = (m.profile.buffer_cap, m.projected_buffer());
            let after = if m.id == owner { (q - gamma).max(0.0) + m.profile.segment_len } else { (q - gamma).max(0.0) };
            drift_term(cap, q, after.min(cap))
        })
        .sum()
}

/// Drift-plus-penalty of fetching `owner`'s next segment at `level`.
pub fn phi(view: &SchedulerView<'_>, owner: &PeerState<'_>, level: usize, lambda: f64) -> Option<f64> {
    let r = owner.profile.ladder.bitrate(level).ok()?;
    let gamma = r * owner.profile.segment_len / view.capacity;
    let p = decision_welfare(view, owner.id, level).ok()?;
    Some(drift(view, owner.id, gamma) - lambda * p)
}

/// Best `(owner, level)` among `owners`, ties going to the lower owner then level.
pub fn argmin_phi<'v, 'a: 'v>(view: &'v SchedulerView<'a>, owners: impl Iterator<Item = &'v PeerState<'a>>, lambda: f64) -> Option<(UserId, usize, f64)> {
    let mut best: Option<(UserId, usize, f64)> = None;
    for u in owners {
        for z in 1..=u.profile.ladder.len() {
            let Some(f) = phi(view, u, z, lambda) else { continue };
            if best.is_none_or(|b| f < b.2) {
                best = Some((u.id, z, f));
            }
        }
    }
    best
}

fn decide_among<'v, 'a: 'v>(view: &'v SchedulerView<'a>, cfg: &LyapunovConfig, only_self: bool) -> SchedulerDecision {
    if !(view.capacity > 0.0) {
        return SchedulerDecision::Idle;
    }
    let owners = view.feasible_owners().filter(|p| !only_self || p.id == view.decider);
    match argmin_phi(view, owners, cfg.lambda) {
        Some((_, _, f)) if cfg.skip_unprofitable && f > 0.0 => SchedulerDecision::Wait(cfg.retry),
        Some((owner, level, _)) => SchedulerDecision::Download { owner, level },
        None if only_self => match view.me() {
            Some(me) if me.is_needy() => SchedulerDecision::Wait(me.overflow().max(0.0)),
            _ => SchedulerDecision::Idle,
        },
        None => view.blocked_decision(),
    }
}

pub fn lyapunov_decide(view: &SchedulerView<'_>, cfg: &LyapunovConfig) -> SchedulerDecision {
    decide_among(view, cfg, false)
}

/// The same policy, but only ever for the decider's own video.
pub fn greedy_noncoop_decide(view: &SchedulerView<'_>, cfg: &LyapunovConfig) -> SchedulerDecision {
    decide_among(view, cfg, true)
}
