//! QoE, energy and welfare of realized sequences, plus the one-step welfare
//! estimate a downloader uses when choosing its next segment.
//!
//! Playback starts when the first segment arrives; the buffer then holds
//! exactly one segment and no startup stall is charged. Degradation is only
//! charged between consecutive received segments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DownloadSequence, ModelError, ReceiveSequence, UserId, UserProfile, WelfareBreakdown};
use crate::sim::SchedulerView;

#[derive(Debug, Error, PartialEq)]
pub enum QoeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("record for owner {owner} has no matching profile")]
    UnknownOwner { owner: UserId },
    #[error("owner {owner} is not in the decider's group")]
    OwnerNotVisible { owner: UserId },
    #[error("decider capacity must be > 0, got {0}")]
    NoCapacity(f64),
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// Value per second of playback at bitrate `r`: `ln(1 + theta * r)`.
pub fn value_fn(theta: f64, r: f64) -> f64 {
    (theta * r).ln_1p()
}

pub fn total_value(seq: &ReceiveSequence, p: &UserProfile) -> f64 {
    seq.bitrates().map(|r| value_fn(p.theta, r) * p.segment_len).sum()
}

pub fn qdeg_loss(seq: &ReceiveSequence, p: &UserProfile) -> f64 {
    let rates: Vec<f64> = seq.bitrates().collect();
    rates.windows(2).map(|w| p.phi_qdeg * pos(w[0] - w[1])).sum()
}

/// One application of the buffer update rule: the buffer drains for `gap`
/// seconds, then a segment of `segment_len` seconds lands. Returns the new
/// level and the stall incurred while waiting.
pub fn buffer_step(q_prev: f64, gap: f64, segment_len: f64) -> (f64, f64) {
    (pos(q_prev - gap) + segment_len, pos(gap - q_prev))
}

/// Stall durations keyed by the segment whose late arrival caused them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RebufferLog {
    pub owner: UserId,
    pub entries: Vec<(u32, f64)>,
}

impl RebufferLog {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }
}

/// Buffer level right after each receipt.
pub fn buffer_levels(seq: &ReceiveSequence, p: &UserProfile) -> Vec<f64> {
    let mut out = Vec::with_capacity(seq.len());
    for (k, r) in seq.records.iter().enumerate() {
        let q = match k {
            0 => p.segment_len,
            _ => buffer_step(out[k - 1], r.t_end - seq.records[k - 1].t_end, p.segment_len).0,
        };
        out.push(q);
    }
    out
}

pub fn rebuf_loss(seq: &ReceiveSequence, p: &UserProfile) -> (f64, RebufferLog) {
    let mut log = RebufferLog { owner: seq.owner, entries: Vec::new() };
    let mut q = p.segment_len;
    for k in 1..seq.records.len() {
        let gap = seq.records[k].t_end - seq.records[k - 1].t_end;
        let (next, stall) = buffer_step(q, gap, p.segment_len);
        if stall > 0.0 {
            log.entries.push((seq.records[k].owner_seq_no, stall));
        }
        q = next;
    }
    (p.phi_rebuf * log.total(), log)
}

fn owner_profile(owners: &[UserProfile], owner: UserId) -> Result<&UserProfile, QoeError> {
    owners.get(owner).filter(|o| o.id == owner).ok_or(QoeError::UnknownOwner { owner })
}

pub fn energy_cell(seq: &DownloadSequence, p: &UserProfile, owners: &[UserProfile]) -> Result<f64, QoeError> {
    seq.records.iter().try_fold(0.0, |acc, r| {
        let vol = r.volume(owner_profile(owners, r.owner)?);
        Ok(acc + p.c_time * r.duration() + p.c_data * vol)
    })
}

pub fn energy_wifi(seq: &DownloadSequence, p: &UserProfile, owners: &[UserProfile]) -> Result<f64, QoeError> {
    seq.records.iter().filter(|r| r.owner != seq.downloader).try_fold(0.0, |acc, r| {
        let vol = r.volume(owner_profile(owners, r.owner)?);
        // WiFi transfer time is zero, so only the volume term remains.
        Ok(acc + p.w_time * 0.0 + p.w_data * vol)
    })
}

pub fn user_welfare(dl: &DownloadSequence, rx: &ReceiveSequence, p: &UserProfile, owners: &[UserProfile]) -> Result<WelfareBreakdown, QoeError> {
    let (rebuf, _) = rebuf_loss(rx, p);
    Ok(WelfareBreakdown::compose(
        total_value(rx, p),
        qdeg_loss(rx, p),
        rebuf,
        energy_cell(dl, p, owners)?,
        energy_wifi(dl, p, owners)?,
    ))
}

/// Per-user breakdowns and their sum. `downloads[n]` must belong to user `n`.
pub fn social_welfare(downloads: &[DownloadSequence], profiles: &[UserProfile]) -> Result<(f64, Vec<WelfareBreakdown>), QoeError> {
    for r in downloads.iter().flat_map(|s| &s.records) {
        owner_profile(profiles, r.owner)?;
    }
    let mut per_user = Vec::with_capacity(profiles.len());
    for p in profiles {
        let empty = DownloadSequence::new(p.id);
        let dl = downloads.iter().find(|s| s.downloader == p.id).unwrap_or(&empty);
        let rx = ReceiveSequence::derive(p.id, downloads)?;
        per_user.push(user_welfare(dl, &rx, p, profiles)?);
    }
    Ok((per_user.iter().map(|b| b.welfare).sum(), per_user))
}

/// Estimated welfare of the decider fetching `owner`'s next segment at
/// `level`, using the decider's current capacity as the rate estimate.
pub fn decision_welfare(view: &SchedulerView<'_>, owner: UserId, level: usize) -> Result<f64, QoeError> {
    if !(view.capacity > 0.0) {
        return Err(QoeError::NoCapacity(view.capacity));
    }
    let u = view.peer(owner).ok_or(QoeError::OwnerNotVisible { owner })?;
    let n = view.peer(view.decider).ok_or(QoeError::OwnerNotVisible { owner: view.decider })?;
    let r = u.profile.ladder.bitrate(level)?;
    let volume = r * u.profile.segment_len;
    let gamma = volume / view.capacity;

    let mut cost = n.profile.c_time * gamma + n.profile.c_data * volume;
    if owner != view.decider {
        cost += n.profile.w_data * volume;
    }

    let up = u.profile;
    let mut utility = value_fn(up.theta, r) * up.segment_len;
    if let Some(last) = u.last_bitrate {
        utility -= up.phi_qdeg * pos(last - r);
    }
    if u.started() {
        // The new segment queues behind any that are already on their way.
        utility -= up.phi_rebuf * pos(gamma - u.projected_buffer());
    }
    for m in view.peers.iter().filter(|m| m.id != owner && m.can_rebuffer()) {
        utility -= m.profile.phi_rebuf * pos(gamma - m.buffer);
    }
    Ok(utility - cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::{profile, record};
    use crate::model::DownloadRecord;
    use crate::sim::{PeerState, SchedulerView};
    use proptest::prelude::*;

    const LN33: f64 = 1.193_922_468_472_434_6;

    fn rx(owner: UserId, recs: Vec<DownloadRecord>) -> ReceiveSequence {
        ReceiveSequence { owner, records: recs }
    }

    #[test]
    fn value_examples() {
        assert_eq!(value_fn(0.0, 2.3), 0.0);
        assert_eq!(value_fn(1.0, 0.0), 0.0);
        assert!((value_fn(1.0, 2.3) - 3.3f64.ln()).abs() < 1e-12);
        assert!((LN33 - 3.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn total_value_examples() {
        let p = profile(0);
        assert_eq!(total_value(&rx(0, vec![]), &p), 0.0);
        let one = rx(0, vec![record(0, 0, 2.3, 0.0, 2.0, 1)]);
        assert!((total_value(&one, &p) - 2.0 * LN33).abs() < 1e-9);
        let two = rx(0, vec![record(0, 0, 2.3, 0.0, 2.0, 1), record(0, 0, 2.3, 2.0, 4.0, 2)]);
        assert!((total_value(&two, &p) - 4.0 * LN33).abs() < 1e-9);
        assert!((total_value(&two, &p) - 4.77570).abs() < 1e-4);
    }

    #[test]
    fn qdeg_examples() {
        let p = profile(0);
        let seq = |rates: &[f64]| rx(0, rates.iter().enumerate().map(|(i, &r)| record(0, 0, r, i as f64, i as f64 + 1.0, i as u32 + 1)).collect());
        assert_eq!(qdeg_loss(&seq(&[2.3, 2.3, 2.3]), &p), 0.0);
        assert!((qdeg_loss(&seq(&[2.3, 0.7, 1.3]), &p) - 1.6).abs() < 1e-9);
        assert_eq!(qdeg_loss(&seq(&[0.4]), &p), 0.0);
    }

    #[test]
    fn buffer_step_examples() {
        assert_eq!(buffer_step(0.0, 5.0, 2.0), (2.0, 5.0));
        assert_eq!(buffer_step(10.0, 4.0, 2.0), (8.0, 0.0));
    }

    #[test]
    fn rebuf_examples() {
        let p = profile(0);
        // First segment fills the buffer with 2 s; the next arrives 7 s later.
        let s = rx(0, vec![record(0, 0, 2.3, 0.0, 1.0, 1), record(0, 0, 2.3, 1.0, 8.0, 2), record(0, 0, 2.3, 8.0, 9.0, 3)]);
        let (loss, log) = rebuf_loss(&s, &p);
        assert!((loss - 5.0).abs() < 1e-12);
        assert_eq!(log.entries, vec![(2, 5.0)]);
        assert_eq!(buffer_levels(&s, &p), vec![2.0, 2.0, 3.0]);
        let smooth = rx(0, vec![record(0, 0, 2.3, 0.0, 1.0, 1), record(0, 0, 2.3, 1.0, 2.0, 2)]);
        assert_eq!(rebuf_loss(&smooth, &p).0, 0.0);
    }

    #[test]
    fn energy_examples() {
        let p = profile(0);
        let owners = vec![profile(0), profile(1)];
        let empty = DownloadSequence::new(0);
        assert_eq!(energy_cell(&empty, &p, &owners).unwrap(), 0.0);
        let own = DownloadSequence { downloader: 0, records: vec![record(0, 0, 2.3, 0.0, 2.0, 1)] };
        assert!((energy_cell(&own, &p, &owners).unwrap() - 1.46).abs() < 1e-9);
        assert_eq!(energy_wifi(&own, &p, &owners).unwrap(), 0.0);
        let free = UserProfile { c_time: 0.0, c_data: 0.0, w_data: 0.0, ..profile(0) };
        assert_eq!(energy_cell(&own, &free, &owners).unwrap(), 0.0);
        let help = DownloadSequence { downloader: 0, records: vec![record(0, 1, 2.3, 0.0, 2.0, 1)] };
        assert!((energy_wifi(&help, &p, &owners).unwrap() - 0.23).abs() < 1e-9);
        assert_eq!(energy_wifi(&help, &free, &owners).unwrap(), 0.0);
        let stray = DownloadSequence { downloader: 0, records: vec![record(0, 7, 2.3, 0.0, 2.0, 1)] };
        assert_eq!(energy_cell(&stray, &p, &owners), Err(QoeError::UnknownOwner { owner: 7 }));
    }

    #[test]
    fn welfare_examples() {
        let p = profile(0);
        let owners = vec![p.clone()];
        let dl = DownloadSequence { downloader: 0, records: vec![record(0, 0, 2.3, 0.0, 2.0, 1)] };
        let r = ReceiveSequence::derive(0, std::slice::from_ref(&dl)).unwrap();
        let w = user_welfare(&dl, &r, &p, &owners).unwrap();
        assert!((w.welfare - (2.0 * LN33 - 1.46)).abs() < 1e-9);
        assert!((w.welfare - 0.92785).abs() < 1e-4);

        let zero = UserProfile { theta: 0.0, phi_qdeg: 0.0, phi_rebuf: 0.0, c_time: 0.0, c_data: 0.0, w_data: 0.0, ..p.clone() };
        assert_eq!(user_welfare(&dl, &r, &zero, std::slice::from_ref(&zero)).unwrap().welfare, 0.0);

        let helper = UserProfile { id: 1, is_video_user: false, video_len: 0.0, ..profile(1) };
        let owners = vec![profile(0), helper.clone()];
        let hdl = DownloadSequence { downloader: 1, records: vec![record(1, 0, 2.3, 0.0, 2.0, 1)] };
        let hw = user_welfare(&hdl, &rx(1, vec![]), &helper, &owners).unwrap();
        assert!(hw.welfare <= 0.0);
        assert_eq!(hw.welfare, -(hw.energy_cell + hw.energy_wifi));
    }

    #[test]
    fn social_welfare_sums_users() {
        let profiles = vec![profile(0), profile(1)];
        let d0 = DownloadSequence { downloader: 0, records: vec![record(0, 1, 2.3, 0.0, 2.0, 1)] };
        let d1 = DownloadSequence { downloader: 1, records: vec![record(1, 0, 0.4, 0.0, 1.0, 1), record(1, 1, 0.7, 2.0, 3.0, 2)] };
        let (total, per) = social_welfare(&[d0, d1], &profiles).unwrap();
        assert!((total - per.iter().map(|b| b.welfare).sum::<f64>()).abs() < 1e-12);
        let (alone, per) = social_welfare(&[DownloadSequence { downloader: 0, records: vec![record(0, 0, 2.3, 0.0, 2.0, 1)] }], &profiles[..1]).unwrap();
        assert_eq!(alone, per[0].welfare);
        let idle: Vec<_> = (0..3).map(|i| UserProfile { is_video_user: false, video_len: 0.0, ..profile(i) }).collect();
        assert_eq!(social_welfare(&[], &idle).unwrap().0, 0.0);
        let orphan = DownloadSequence { downloader: 0, records: vec![record(0, 5, 2.3, 0.0, 2.0, 1)] };
        assert!(social_welfare(&[orphan], &profiles).is_err());
    }

    fn peer(p: &UserProfile, buffer: f64, last: Option<f64>, received: u32) -> PeerState<'_> {
        PeerState { id: p.id, profile: p, buffer, in_flight: 0, last_bitrate: last, received, remaining: p.num_segments() - received }
    }

    #[test]
    fn decision_welfare_examples() {
        let p = profile(0);
        let view = SchedulerView { decider: 0, clock: 0.0, capacity: 2.3, peers: vec![peer(&p, 30.0, Some(2.3), 3)], throughput_history: &[] };
        let got = decision_welfare(&view, 0, 5).unwrap();
        assert!((got - (2.0 * LN33 - (0.5 * 2.0 + 0.1 * 4.6))).abs() < 1e-9);
        assert!((got - 0.92785).abs() < 1e-4);

        let free = UserProfile { phi_qdeg: 0.0, phi_rebuf: 0.0, c_time: 0.0, c_data: 0.0, w_data: 0.0, ..profile(0) };
        let view = SchedulerView { decider: 0, clock: 0.0, capacity: 0.5, peers: vec![peer(&free, 0.0, Some(2.3), 2)], throughput_history: &[] };
        for z in 1..=5 {
            let r = free.ladder.bitrate(z).unwrap();
            assert!((decision_welfare(&view, 0, z).unwrap() - value_fn(1.0, r) * 2.0).abs() < 1e-12);
        }
        assert!(decision_welfare(&view, 0, 6).is_err());
        assert!(decision_welfare(&view, 3, 1).is_err());
        let dead = SchedulerView { capacity: 0.0, ..view };
        assert_eq!(decision_welfare(&dead, 0, 1), Err(QoeError::NoCapacity(0.0)));
    }

    #[test]
    fn ample_buffers_mean_no_rebuffer_terms() {
        // gamma = 2 s everywhere below, every buffer holds 10 s.
        let a = profile(0);
        let b = profile(1);
        let with = SchedulerView { decider: 0, clock: 0.0, capacity: 2.3, peers: vec![peer(&a, 10.0, Some(2.3), 2), peer(&b, 10.0, Some(2.3), 2)], throughput_history: &[] };
        let a0 = UserProfile { phi_rebuf: 0.0, ..a.clone() };
        let b0 = UserProfile { phi_rebuf: 0.0, ..b.clone() };
        let without = SchedulerView { decider: 0, clock: 0.0, capacity: 2.3, peers: vec![peer(&a0, 10.0, Some(2.3), 2), peer(&b0, 10.0, Some(2.3), 2)], throughput_history: &[] };
        assert_eq!(decision_welfare(&with, 1, 5).unwrap(), decision_welfare(&without, 1, 5).unwrap());
    }

    proptest! {
        #[test]
        fn value_additive_over_concatenation(a in prop::collection::vec(1usize..=5, 0..6), b in prop::collection::vec(1usize..=5, 0..6)) {
            let p = profile(0);
            let mk = |levels: &[usize], off: usize| -> Vec<DownloadRecord> {
                levels.iter().enumerate().map(|(i, &z)| record(0, 0, p.ladder.bitrate(z).unwrap(), 0.0, 0.0, (off + i + 1) as u32)).collect()
            };
            let whole: Vec<_> = mk(&a, 0).into_iter().chain(mk(&b, a.len())).collect();
            let lhs = total_value(&rx(0, whole), &p);
            let rhs = total_value(&rx(0, mk(&a, 0)), &p) + total_value(&rx(0, mk(&b, a.len())), &p);
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn nondecreasing_rates_cost_nothing(mut levels in prop::collection::vec(1usize..=5, 0..10)) {
            levels.sort();
            let p = profile(0);
            let s = rx(0, levels.iter().enumerate().map(|(i, &z)| record(0, 0, p.ladder.bitrate(z).unwrap(), 0.0, 0.0, i as u32 + 1)).collect());
            prop_assert_eq!(qdeg_loss(&s, &p), 0.0);
        }

        #[test]
        fn gaps_within_buffer_never_stall(gaps in prop::collection::vec(0.0..2.0f64, 0..12)) {
            // Every gap is at most one segment length, so the buffer (>= 2 s) always covers it.
            let p = profile(0);
            let mut t = 0.0;
            let mut recs = vec![record(0, 0, 2.3, 0.0, 0.0, 1)];
            for (i, g) in gaps.iter().enumerate() {
                t += g;
                recs.push(record(0, 0, 2.3, t, t, i as u32 + 2));
            }
            prop_assert_eq!(rebuf_loss(&rx(0, recs), &p).0, 0.0);
        }

        #[test]
        fn value_only_objective_peaks_at_top_level(buffer in 0.0..40.0f64, cap in 0.1..10.0f64) {
            let p = UserProfile { phi_qdeg: 0.0, phi_rebuf: 0.0, c_time: 0.0, c_data: 0.0, w_data: 0.0, ..profile(0) };
            let view = SchedulerView { decider: 0, clock: 0.0, capacity: cap, peers: vec![peer(&p, buffer, Some(0.7), 1)], throughput_history: &[] };
            let best = (1..=5).max_by(|&a, &b| decision_welfare(&view, 0, a).unwrap().total_cmp(&decision_welfare(&view, 0, b).unwrap())).unwrap();
            prop_assert_eq!(best, 5);
        }
    }
}
