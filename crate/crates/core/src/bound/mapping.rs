use crate::model::{DownloadRecord, DownloadSequence, TIME_EPS};
use crate::traces::NetworkTrace;

use super::{BoundError, SlottedInstance, SlottedPlan};

/// Turns a slotted plan into download records.
///
/// Within a downloader's slot, segments for owners that receive nothing
/// earlier go last and finish exactly at the slot end, so playback does not
/// start before the slotted timeline says it does. Everything else is
/// fetched back to back from the slot start. Each group runs cheapest
/// bitrate first. The link must be constant over every slot the downloader
/// uses.
pub fn plan_to_downloads(plan: &SlottedPlan, inst: &SlottedInstance, trace: &NetworkTrace) -> Result<Vec<DownloadSequence>, BoundError> {
    plan.validate(inst)?;
    let ps = inst.profiles();
    let mut out: Vec<DownloadSequence> = (0..ps.len()).map(DownloadSequence::new).collect();
    let mut first_slot: Vec<Option<usize>> = vec![None; ps.len()];
    for e in plan.entries() {
        first_slot[e.owner] = Some(first_slot[e.owner].map_or(e.slot, |s| s.min(e.slot)));
    }
    for n in 0..ps.len() {
        for t in 1..=plan.slots {
            let mut items: Vec<(f64, usize, usize, u32)> = plan
                .entries()
                .filter(|e| e.downloader == n && e.slot == t)
                .map(|e| (ps[e.owner].ladder.levels()[e.level - 1], e.owner, e.level, e.count))
                .collect();
            if items.is_empty() {
                continue;
            }
            let (a, b) = ((t - 1) as f64, t as f64);
            if trace.capacity.breakpoints(n)?.iter().any(|&x| x > a + TIME_EPS && x < b - TIME_EPS) {
                return Err(BoundError::NotSlotAligned { user: n, slot: t });
            }
            let h = trace.capacity.capacity_at(n, a)?;
            items.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            let (late, early): (Vec<_>, Vec<_>) = items.into_iter().partition(|it| first_slot[it.1] == Some(t));
            let late_vol: f64 = late.iter().map(|&(r, m, _, c)| c as f64 * r * ps[m].segment_len).sum();
            let mut clock = a;
            for (group, begin) in [(early, None), (late, Some(b - late_vol / h))] {
                if let Some(begin) = begin {
                    clock = f64::max(clock, begin);
                }
                for (rate, owner, level, count) in group {
                    let dur = rate * ps[owner].segment_len / h;
                    for _ in 0..count {
                        out[n].records.push(DownloadRecord { downloader: n, owner, level, bitrate: rate, t_start: clock, t_end: clock + dur, owner_seq_no: 0 });
                        clock += dur;
                    }
                }
            }
        }
    }
    // Number each owner's receipts by arrival.
    let mut keys: Vec<(usize, f64, f64, usize, usize)> = Vec::new();
    for (n, seq) in out.iter().enumerate() {
        for (i, r) in seq.records.iter().enumerate() {
            keys.push((r.owner, r.t_end, r.bitrate, n, i));
        }
    }
    keys.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.total_cmp(&y.2)).then(x.3.cmp(&y.3)));
    let mut prev_owner = usize::MAX;
    let mut seq_no = 0;
    for (owner, _, _, n, i) in keys {
        if owner != prev_owner {
            prev_owner = owner;
            seq_no = 0;
        }
        seq_no += 1;
        out[n].records[i].owner_seq_no = seq_no;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::profile;
    use crate::model::UserProfile;
    use crate::sim::audit_downloads;
    use crate::traces::{CapacityTrace, MobilityTrace};

    #[test]
    fn mapped_plan_passes_audit() {
        let ps = vec![profile(0), UserProfile { video_len: 4.0, ..profile(1) }];
        let trace = NetworkTrace::new(CapacityTrace::constant(&[6.0, 1.0], 3.0).unwrap(), MobilityTrace::all_together(2, 3.0)).unwrap();
        let inst = SlottedInstance::from_trace(&trace, ps.clone()).unwrap();
        let mut plan = SlottedPlan::new(3);
        plan.set(0, 0, 1, 1, 1);
        plan.set(0, 1, 2, 1, 1);
        plan.set(0, 0, 2, 2, 1);
        plan.set(1, 1, 1, 3, 1);
        let d = plan_to_downloads(&plan, &inst, &trace).unwrap();
        audit_downloads(&d, &trace, &ps).unwrap();
        assert_eq!(d[0].records.len(), 3);
        // Owner 0 already received in slot 1, so its slot-2 segment starts the slot.
        let last = d[0].records.last().unwrap();
        assert!((last.t_start - 1.0).abs() < 1e-12);
        assert_eq!(d[1].records[0].owner_seq_no, 2);
    }

    #[test]
    fn varying_slot_capacity_rejected() {
        use crate::traces::{Step, StepSeries};
        let cap = CapacityTrace::new(vec![StepSeries::new(0, vec![Step { t_from: 0.0, t_to: 0.5, value: 9.0 }, Step { t_from: 0.5, t_to: 1.0, value: 3.0 }], 1.0).unwrap()]).unwrap();
        let trace = NetworkTrace::new(cap, MobilityTrace::all_together(1, 1.0)).unwrap();
        let inst = SlottedInstance::from_trace(&trace, vec![profile(0)]).unwrap();
        let mut plan = SlottedPlan::new(1);
        plan.set(0, 0, 1, 1, 1);
        assert!(matches!(plan_to_downloads(&plan, &inst, &trace), Err(BoundError::NotSlotAligned { .. })));
    }
}
