//! Continuous-time simulation of segmented cooperative downloading.
//!
//! Each user downloads one segment at a time over its own cellular link and
//! may fetch segments for anyone it currently shares a hotspot with. A
//! segment is reserved when the download starts; its playback position is
//! assigned when it lands, so every owner receives its segments in order.
//! Downloads whose pair separates midway are aborted and their partial
//! transfer is paid for but not kept.

mod audit;
mod coord;
mod export;
mod view;

pub use audit::{audit, audit_downloads, audit_rebuffering, AuditError};
pub use coord::{MessageEvent, MessageKind, MessageStats};
pub use export::{write_records_csv, SimSummary, UserSummary};
pub use view::{PeerState, SchedulerDecision, SchedulerView};

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_profile, DownloadRecord, DownloadSequence, ModelError, ReceiveSequence, UserId, UserProfile, WelfareBreakdown, TIME_EPS};
use crate::qoe::{social_welfare, QoeError, RebufferLog};
use crate::schedulers::Scheduler;
use crate::traces::{NetworkTrace, TraceError};

/// Shortest wait the engine honours, so a numerically tiny timer cannot spin.
const MIN_WAIT: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Qoe(#[from] QoeError),
    #[error("{profiles} profiles for {users} traced users")]
    UserCount { profiles: usize, users: usize },
    #[error("profile at index {index} has id {id}")]
    ProfileId { index: usize, id: UserId },
    #[error("user {decider} at t={t}: infeasible decision {decision:?}: {reason}")]
    Infeasible { decider: UserId, t: f64, decision: SchedulerDecision, reason: String },
    #[error("user {user} at t={t}: buffer {buffer} exceeds cap {cap}")]
    Overflow { user: UserId, t: f64, buffer: f64, cap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Off: every user only ever sees, and serves, itself.
    pub cooperative: bool,
    /// READY/ACK handshake with sleeping downloaders.
    pub coordination: bool,
    /// Seconds without an ACK before an idle downloader sleeps.
    pub sleep_window: f64,
    /// How often an idle, awake downloader re-announces itself.
    pub ready_retry: f64,
    pub log_messages: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { cooperative: true, coordination: true, sleep_window: 10.0, ready_retry: 2.0, log_messages: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub received: u32,
    pub avg_bitrate: Option<f64>,
    pub rebuffer_s: f64,
    pub downloads_for_others: u32,
    pub aborted: u32,
    /// Downloads dropped because they would have finished after the horizon.
    pub discarded: u32,
    /// Cellular cost of aborted downloads, already inside `energy_cell`.
    pub abort_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub horizon: f64,
    pub downloads: Vec<DownloadSequence>,
    pub receives: Vec<ReceiveSequence>,
    pub welfare: Vec<WelfareBreakdown>,
    pub social_welfare: f64,
    pub rebuffer: Vec<RebufferLog>,
    pub users: Vec<UserMetrics>,
    pub messages: MessageStats,
    pub message_log: Vec<MessageEvent>,
}

impl SimResult {
    /// Mean bitrate over every received segment of every user.
    pub fn avg_bitrate(&self) -> Option<f64> {
        let (sum, n) = self.receives.iter().flat_map(|r| r.bitrates()).fold((0.0, 0usize), |(s, n), r| (s + r, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn total_rebuffer(&self) -> f64 {
        self.users.iter().map(|u| u.rebuffer_s).sum()
    }

    pub fn records(&self) -> impl Iterator<Item = &DownloadRecord> {
        self.downloads.iter().flat_map(|d| &d.records)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    Complete,
    Abort,
    /// A trace breakpoint; `Some(n)` if only user `n`'s capacity changed.
    Tick(Option<UserId>),
    Decide(u64),
}

impl EventKind {
    fn class(&self) -> u8 {
        match self {
            Self::Complete => 0,
            Self::Abort => 1,
            Self::Tick(_) => 2,
            Self::Decide(_) => 3,
        }
    }
}

#[derive(Debug)]
struct Event {
    t: f64,
    user: UserId,
    seq: u64,
    kind: EventKind,
}

impl Event {
    fn key(&self) -> (f64, u8, UserId, u64) {
        (self.t, self.kind.class(), self.user, self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Reversed so the max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(b.2.cmp(&a.2)).then(b.3.cmp(&a.3))
    }
}

#[derive(Debug, Clone)]
struct Active {
    owner: UserId,
    level: usize,
    bitrate: f64,
    t_start: f64,
}

#[derive(Debug, Clone, Default)]
struct UserState {
    buffer: f64,
    synced_at: f64,
    received: u32,
    remaining: u32,
    in_flight: u32,
    last_bitrate: Option<f64>,
    /// Bitrate of the newest reservation, which will play after everything received.
    last_reserved: Option<f64>,
    pending_stall: f64,
    stalls: Vec<(u32, f64)>,
    active: Option<Active>,
    parked: bool,
    /// Downloader has committed to a transfer that outlasts the horizon.
    done: bool,
    gen: u64,
    asleep: bool,
    last_ack: f64,
    history: Vec<f64>,
    records: Vec<DownloadRecord>,
    aborted: u32,
    discarded: u32,
    abort_cost: f64,
}

struct Engine<'a> {
    trace: &'a NetworkTrace,
    profiles: &'a [UserProfile],
    scheduler: &'a dyn Scheduler,
    cfg: &'a RunConfig,
    horizon: f64,
    users: Vec<UserState>,
    queue: BinaryHeap<Event>,
    seq: u64,
    stats: MessageStats,
    log: Vec<MessageEvent>,
}

impl<'a> Engine<'a> {
    fn push(&mut self, t: f64, user: UserId, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Event { t, user, seq: self.seq, kind });
    }

    fn schedule_decision(&mut self, n: UserId, t: f64) {
        let s = &mut self.users[n];
        s.gen += 1;
        s.parked = false;
        let g = s.gen;
        self.push(t, n, EventKind::Decide(g));
    }

    fn note(&mut self, t: f64, user: UserId, kind: MessageKind, count: u64) {
        if count == 0 {
            return;
        }
        self.stats.bump(kind, count);
        if self.cfg.log_messages {
            self.log.extend((0..count).map(|_| MessageEvent { t, user, kind }));
        }
    }

    fn is_needy(&self, m: UserId) -> bool {
        self.profiles[m].is_video_user && self.users[m].remaining > 0
    }

    /// Plays back `m`'s buffer up to `t`, accruing stall while segments are outstanding.
    fn advance(&mut self, m: UserId, t: f64) {
        let total = self.profiles[m].num_segments();
        let s = &mut self.users[m];
        let dt = t - s.synced_at;
        if dt <= 0.0 {
            return;
        }
        s.synced_at = t;
        if s.received == 0 {
            return;
        }
        if s.buffer >= dt {
            s.buffer -= dt;
        } else {
            if s.received < total {
                s.pending_stall += dt - s.buffer;
            }
            s.buffer = 0.0;
        }
    }

    fn wake(&mut self, m: UserId, t: f64) {
        let s = &mut self.users[m];
        if !s.asleep {
            return;
        }
        s.asleep = false;
        s.last_ack = t;
        let parked = s.parked;
        self.note(t, m, MessageKind::Awake, 1);
        if parked {
            self.schedule_decision(m, t);
        }
    }

    /// A needy user sharing a hotspot with a sleeping downloader wakes it.
    fn virtual_acks(&mut self, t: f64) -> Result<(), SimError> {
        if !(self.cfg.cooperative && self.cfg.coordination) {
            return Ok(());
        }
        let trace = self.trace;
        let mob = &trace.mobility;
        for m in 0..self.users.len() {
            if !self.users[m].asleep {
                continue;
            }
            let mut caller = None;
            for u in 0..self.users.len() {
                if u != m && self.is_needy(u) && mob.encountered(m, u, t)? {
                    caller = Some(u);
                    break;
                }
            }
            if let Some(u) = caller {
                self.note(t, u, MessageKind::VirtualAck, 1);
                self.wake(m, t);
            }
        }
        Ok(())
    }

    fn group(&self, n: UserId, t: f64) -> Result<Vec<UserId>, SimError> {
        let mob = &self.trace.mobility;
        let mut out = Vec::new();
        for m in 0..self.users.len() {
            if m != n && mob.encountered(n, m, t)? {
                out.push(m);
            }
        }
        Ok(out)
    }

    fn decide(&mut self, n: UserId, t: f64) -> Result<(), SimError> {
        if self.users[n].active.is_some() || self.users[n].done || t >= self.horizon - TIME_EPS {
            return Ok(());
        }
        let h = self.trace.capacity.capacity_at(n, t)?;
        if !(h > 0.0) {
            self.users[n].parked = true;
            return Ok(());
        }
        for m in 0..self.users.len() {
            self.advance(m, t);
        }

        let group = if self.cfg.cooperative { self.group(n, t)? } else { Vec::new() };
        let handshake = self.cfg.cooperative && self.cfg.coordination;
        if handshake && !self.users[n].asleep {
            if !group.is_empty() {
                self.note(t, n, MessageKind::Ready, 1);
                let needy: Vec<UserId> = group.iter().copied().filter(|&m| self.is_needy(m)).collect();
                for &m in &needy {
                    self.note(t, m, MessageKind::Ack, 1);
                }
                if !needy.is_empty() {
                    self.users[n].last_ack = t;
                    for &m in &group {
                        self.wake(m, t);
                    }
                }
            }
            if !self.is_needy(n) && t - self.users[n].last_ack >= self.cfg.sleep_window - TIME_EPS {
                self.users[n].asleep = true;
                self.note(t, n, MessageKind::Sleep, 1);
            }
        }
        let sees_group = self.cfg.cooperative && !(handshake && self.users[n].asleep);

        let mut members: Vec<UserId> = if sees_group { group.clone() } else { Vec::new() };
        members.push(n);
        members.sort_unstable();
        let peers: Vec<PeerState<'_>> = members
            .iter()
            .map(|&m| {
                let s = &self.users[m];
                PeerState { id: m, profile: &self.profiles[m], buffer: s.buffer, in_flight: s.in_flight, last_bitrate: if s.in_flight > 0 { s.last_reserved } else { s.last_bitrate }, received: s.received, remaining: s.remaining }
            })
            .collect();
        let view = SchedulerView { decider: n, clock: t, capacity: h, peers, throughput_history: &self.users[n].history };
        let decision = self.scheduler.decide(&view);

        match decision {
            SchedulerDecision::Download { owner, level } => {
                let reject = |reason: &str| SimError::Infeasible { decider: n, t, decision, reason: reason.to_string() };
                let peer = view.peer(owner).ok_or_else(|| reject("owner not in the decider's group"))?;
                if !peer.is_needy() {
                    return Err(reject("owner has no unassigned segments"));
                }
                if !peer.has_room() {
                    return Err(reject("owner's buffer cannot take another segment"));
                }
                let bitrate = peer.profile.ladder.bitrate(level).map_err(|e| reject(&e.to_string()))?;
                let volume = bitrate * peer.profile.segment_len;
                drop(view);
                match self.trace.capacity.download_end_time(n, t, volume)? {
                    None => {
                        let s = &mut self.users[n];
                        s.done = true;
                        s.discarded += 1;
                    }
                    Some(end) => {
                        let split = if owner == n { None } else { self.trace.mobility.first_separation(n, owner, t, end)? };
                        let o = &mut self.users[owner];
                        o.remaining -= 1;
                        o.in_flight += 1;
                        o.last_reserved = Some(bitrate);
                        self.users[n].active = Some(Active { owner, level, bitrate, t_start: t });
                        match split {
                            Some(ts) => self.push(ts, n, EventKind::Abort),
                            None => self.push(end, n, EventKind::Complete),
                        }
                    }
                }
            }
            SchedulerDecision::Wait(w) => {
                drop(view);
                let at = t + w.max(MIN_WAIT);
                if at < self.horizon {
                    self.schedule_decision(n, at);
                }
            }
            SchedulerDecision::Idle => {
                drop(view);
                let polling = handshake && !self.users[n].asleep && !group.is_empty();
                let at = t + self.cfg.ready_retry;
                if polling && at < self.horizon {
                    self.schedule_decision(n, at);
                } else {
                    self.users[n].parked = true;
                }
            }
        }
        Ok(())
    }

    fn complete(&mut self, n: UserId, t: f64) -> Result<(), SimError> {
        let Some(a) = self.users[n].active.take() else { return Ok(()) };
        let owner = a.owner;
        self.advance(owner, t);
        let p = &self.profiles[owner];
        let o = &mut self.users[owner];
        let seq = o.received + 1;
        if o.received > 0 && o.pending_stall > 0.0 {
            o.stalls.push((seq, o.pending_stall));
        }
        o.pending_stall = 0.0;
        o.buffer += p.segment_len;
        if o.buffer > p.buffer_cap + 1e-6 {
            return Err(SimError::Overflow { user: owner, t, buffer: o.buffer, cap: p.buffer_cap });
        }
        o.received += 1;
        o.in_flight -= 1;
        o.last_bitrate = Some(a.bitrate);
        let volume = a.bitrate * p.segment_len;
        let s = &mut self.users[n];
        s.records.push(DownloadRecord { downloader: n, owner, level: a.level, bitrate: a.bitrate, t_start: a.t_start, t_end: t, owner_seq_no: seq });
        if t > a.t_start {
            s.history.push(volume / (t - a.t_start));
        }
        self.schedule_decision(n, t);
        Ok(())
    }

    fn abort(&mut self, n: UserId, t: f64) -> Result<(), SimError> {
        let Some(a) = self.users[n].active.take() else { return Ok(()) };
        let pulled = self.trace.capacity.integrate_capacity(n, a.t_start, t)?;
        let p = &self.profiles[n];
        let s = &mut self.users[n];
        s.abort_cost += p.c_time * (t - a.t_start) + p.c_data * pulled;
        s.aborted += 1;
        let o = &mut self.users[a.owner];
        o.remaining += 1;
        o.in_flight -= 1;
        self.schedule_decision(n, t);
        self.wake_parked(t, None);
        self.virtual_acks(t)
    }

    fn wake_parked(&mut self, t: f64, only: Option<UserId>) {
        for m in 0..self.users.len() {
            if self.users[m].parked && only.is_none_or(|o| o == m) {
                self.schedule_decision(m, t);
            }
        }
    }

    fn run(mut self) -> Result<SimResult, SimError> {
        let n = self.users.len();
        let mut ticks: Vec<(f64, Option<UserId>)> = Vec::new();
        for u in 0..n {
            ticks.extend(self.trace.mobility.breakpoints(u)?.into_iter().map(|t| (t, None)));
            ticks.extend(self.trace.capacity.breakpoints(u)?.into_iter().map(|t| (t, Some(u))));
        }
        ticks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        ticks.dedup();
        for (t, who) in ticks {
            if t < self.horizon {
                self.push(t, who.unwrap_or(0), EventKind::Tick(who));
            }
        }
        if self.cfg.cooperative && self.cfg.coordination {
            // Needy users announce themselves once at start-up.
            for u in (0..n).filter(|&u| self.is_needy(u)).collect::<Vec<_>>() {
                self.note(0.0, u, MessageKind::VirtualAck, 1);
            }
        }
        for u in 0..n {
            self.schedule_decision(u, 0.0);
        }

        while let Some(ev) = self.queue.pop() {
            if ev.t > self.horizon + TIME_EPS {
                break;
            }
            match ev.kind {
                EventKind::Complete => self.complete(ev.user, ev.t)?,
                EventKind::Abort => self.abort(ev.user, ev.t)?,
                EventKind::Tick(who) => {
                    self.wake_parked(ev.t, who);
                    if who.is_none() {
                        self.virtual_acks(ev.t)?;
                    }
                }
                EventKind::Decide(g) => {
                    if g == self.users[ev.user].gen {
                        self.decide(ev.user, ev.t)?;
                    }
                }
            }
        }
        self.finish()
    }

    fn finish(self) -> Result<SimResult, SimError> {
        let downloads: Vec<DownloadSequence> = self.users.iter().enumerate().map(|(n, s)| DownloadSequence { downloader: n, records: s.records.clone() }).collect();
        let (_, mut welfare) = social_welfare(&downloads, self.profiles)?;
        let mut receives = Vec::with_capacity(self.users.len());
        let mut rebuffer = Vec::with_capacity(self.users.len());
        let mut users = Vec::with_capacity(self.users.len());
        for (n, s) in self.users.iter().enumerate() {
            let b = &mut welfare[n];
            if s.abort_cost > 0.0 {
                *b = WelfareBreakdown::compose(b.value, b.loss_qdeg, b.loss_rebuf, b.energy_cell + s.abort_cost, b.energy_wifi);
            }
            let rx = ReceiveSequence::derive(n, &downloads)?;
            let log = RebufferLog { owner: n, entries: s.stalls.clone() };
            users.push(UserMetrics {
                received: rx.len() as u32,
                avg_bitrate: (!rx.is_empty()).then(|| rx.bitrates().sum::<f64>() / rx.len() as f64),
                rebuffer_s: log.total(),
                downloads_for_others: s.records.iter().filter(|r| r.owner != n).count() as u32,
                aborted: s.aborted,
                discarded: s.discarded,
                abort_cost: s.abort_cost,
            });
            receives.push(rx);
            rebuffer.push(log);
        }
        Ok(SimResult {
            horizon: self.horizon,
            social_welfare: welfare.iter().map(|b| b.welfare).sum(),
            downloads,
            receives,
            welfare,
            rebuffer,
            users,
            messages: self.stats,
            message_log: self.log,
        })
    }
}

/// Simulates `[0, T]` with `scheduler` making every download decision.
pub fn run(trace: &NetworkTrace, profiles: &[UserProfile], scheduler: &dyn Scheduler, cfg: &RunConfig) -> Result<SimResult, SimError> {
    if profiles.len() != trace.num_users() {
        return Err(SimError::UserCount { profiles: profiles.len(), users: trace.num_users() });
    }
    for (i, p) in profiles.iter().enumerate() {
        if p.id != i {
            return Err(SimError::ProfileId { index: i, id: p.id });
        }
        validate_profile(p)?;
    }
    let users = profiles.iter().map(|p| UserState { remaining: p.num_segments(), ..Default::default() }).collect();
    Engine {
        trace,
        profiles,
        scheduler,
        cfg,
        horizon: trace.horizon(),
        users,
        queue: BinaryHeap::new(),
        seq: 0,
        stats: MessageStats::default(),
        log: Vec::new(),
    }
    .run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::profile;
    use crate::qoe::rebuf_loss;
    use crate::schedulers::{LyapunovConfig, SchedulerKind};
    use crate::traces::{CapacityTrace, MobilityTrace, Step, StepSeries};

    /// Always the decider's own video at the top level.
    struct Greedy;
    impl Scheduler for Greedy {
        fn name(&self) -> &'static str {
            "greedy-top"
        }
        fn decide(&self, view: &SchedulerView<'_>) -> SchedulerDecision {
            match view.me() {
                Some(me) if me.is_needy() && me.has_room() => SchedulerDecision::Download { owner: me.id, level: me.profile.ladder.len() },
                Some(me) if me.is_needy() => SchedulerDecision::Wait(me.overflow()),
                _ => SchedulerDecision::Idle,
            }
        }
    }

    /// Tries to fetch for a user outside the group.
    struct Rogue;
    impl Scheduler for Rogue {
        fn name(&self) -> &'static str {
            "rogue"
        }
        fn decide(&self, _: &SchedulerView<'_>) -> SchedulerDecision {
            SchedulerDecision::Download { owner: 1, level: 1 }
        }
    }

    fn together(rates: &[f64], horizon: f64) -> NetworkTrace {
        NetworkTrace::new(CapacityTrace::constant(rates, horizon).unwrap(), MobilityTrace::all_together(rates.len(), horizon)).unwrap()
    }

    fn lyap() -> SchedulerKind {
        SchedulerKind::Lyapunov(LyapunovConfig::default())
    }

    #[test]
    fn ample_capacity_plays_at_top_rate_without_stalls() {
        let trace = together(&[5.0], 60.0);
        let res = run(&trace, &[profile(0)], &Greedy, &RunConfig::default()).unwrap();
        assert_eq!(res.users[0].received, 10);
        assert!(res.receives[0].bitrates().all(|r| r == 2.3));
        assert_eq!(res.total_rebuffer(), 0.0);
        audit(&res, &trace, &[profile(0)]).unwrap();
    }

    #[test]
    fn zero_capacity_does_nothing() {
        let trace = together(&[0.0], 30.0);
        let res = run(&trace, &[profile(0)], &lyap(), &RunConfig::default()).unwrap();
        assert_eq!(res.records().count(), 0);
        assert_eq!(res.social_welfare, 0.0);
        assert_eq!(res.avg_bitrate(), None);
    }

    #[test]
    fn starved_user_is_helped() {
        let trace = together(&[5.0, 0.0], 120.0);
        let ps = [profile(0), profile(1)];
        let res = run(&trace, &ps, &lyap(), &RunConfig::default()).unwrap();
        assert!(!res.receives[1].is_empty());
        assert!(res.users[0].downloads_for_others > 0);
        audit(&res, &trace, &ps).unwrap();
    }

    #[test]
    fn non_cooperative_run_never_helps() {
        let trace = together(&[5.0, 0.0], 120.0);
        let ps = [profile(0), profile(1)];
        let cfg = RunConfig { cooperative: false, ..Default::default() };
        let res = run(&trace, &ps, &lyap(), &cfg).unwrap();
        assert!(res.receives[1].is_empty());
        assert_eq!(res.messages, MessageStats::default());
    }

    #[test]
    fn outsider_decision_is_rejected() {
        let cap = CapacityTrace::constant(&[2.0, 2.0], 10.0).unwrap();
        let mob = MobilityTrace::new(vec![StepSeries::constant(1, 10.0), StepSeries::constant(2, 10.0)], 2).unwrap();
        let trace = NetworkTrace::new(cap, mob).unwrap();
        let err = run(&trace, &[profile(0), profile(1)], &Rogue, &RunConfig::default()).unwrap_err();
        match err {
            SimError::Infeasible { decider: 0, reason, .. } => assert!(reason.contains("group"), "{reason}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn engine_stalls_match_post_hoc_losses() {
        // Capacity toggles between fast and dead, forcing stalls.
        let steps: Vec<_> = (0..20).map(|i| Step { t_from: i as f64 * 5.0, t_to: (i + 1) as f64 * 5.0, value: if i % 3 == 2 { 0.0 } else { 1.0 } }).collect();
        let cap = CapacityTrace::new(vec![StepSeries::new(0, steps, 100.0).unwrap()]).unwrap();
        let trace = NetworkTrace::new(cap, MobilityTrace::all_together(1, 100.0)).unwrap();
        let p = UserProfile { video_len: 60.0, ..profile(0) };
        let res = run(&trace, std::slice::from_ref(&p), &Greedy, &RunConfig::default()).unwrap();
        let (_, post) = rebuf_loss(&res.receives[0], &p);
        assert!(res.users[0].rebuffer_s > 0.0);
        audit_rebuffering(&res, std::slice::from_ref(&p)).unwrap();
        assert_eq!(post.entries.len(), res.rebuffer[0].entries.len());
    }

    #[test]
    fn separation_aborts_help_and_charges_energy() {
        // User 1 walks away at t=3 while user 0 fetches for it.
        let cap = CapacityTrace::constant(&[1.0, 0.0], 20.0).unwrap();
        let mob = MobilityTrace::new(
            vec![StepSeries::constant(1, 20.0), StepSeries::new(1, vec![Step { t_from: 0.0, t_to: 3.0, value: 1 }, Step { t_from: 3.0, t_to: 20.0, value: 0 }], 20.0).unwrap()],
            1,
        )
        .unwrap();
        let trace = NetworkTrace::new(cap, mob).unwrap();
        let helper = UserProfile { is_video_user: false, video_len: 0.0, ..profile(0) };
        let ps = [helper, profile(1)];
        let res = run(&trace, &ps, &lyap(), &RunConfig::default()).unwrap();
        audit(&res, &trace, &ps).unwrap();
        assert_eq!(res.users[0].aborted, 1);
        assert!(res.users[0].abort_cost > 0.0);
        assert!(res.welfare[0].energy_cell >= res.users[0].abort_cost);
        for r in res.records() {
            assert!(r.t_end <= 3.0 + 1e-9);
        }
    }

    #[test]
    fn idle_downloaders_fall_asleep() {
        let trace = together(&[3.0, 3.0, 3.0], 200.0);
        let helper = |i| UserProfile { is_video_user: false, video_len: 0.0, ..profile(i) };
        let ps = [helper(0), helper(1), helper(2)];
        let cfg = RunConfig { log_messages: true, ..Default::default() };
        let res = run(&trace, &ps, &lyap(), &cfg).unwrap();
        assert_eq!(res.messages.sleep, 3);
        let last_ready = res.message_log.iter().filter(|e| e.kind == MessageKind::Ready).map(|e| e.t).fold(0.0, f64::max);
        assert!(last_ready <= 10.0 + 1e-9, "{last_ready}");
    }

    #[test]
    fn identical_inputs_identical_results() {
        let trace = together(&[1.5, 0.3, 2.0], 90.0);
        let ps = [profile(0), profile(1), profile(2)];
        let a = run(&trace, &ps, &lyap(), &RunConfig::default()).unwrap();
        let b = run(&trace, &ps, &lyap(), &RunConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn profiles_must_match_trace() {
        let trace = together(&[1.0, 1.0], 10.0);
        assert!(matches!(run(&trace, &[profile(0)], &lyap(), &RunConfig::default()), Err(SimError::UserCount { .. })));
        assert!(matches!(run(&trace, &[profile(1), profile(0)], &lyap(), &RunConfig::default()), Err(SimError::ProfileId { .. })));
    }
}
