use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::model::{UserId, WelfareBreakdown, TIME_EPS};
use crate::qoe::value_fn;

use super::{BoundError, SlottedInstance};

/// `count` segments of `owner`'s video at `level`, fetched by `downloader` in `slot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub downloader: UserId,
    pub owner: UserId,
    pub level: usize,
    pub slot: usize,
    pub count: u32,
}

/// Segment counts per (downloader, owner, level, slot); absent keys are zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlottedPlan {
    pub slots: usize,
    counts: BTreeMap<(UserId, UserId, usize, usize), u32>,
}

impl SlottedPlan {
    pub fn new(slots: usize) -> Self {
        Self { slots, counts: BTreeMap::new() }
    }

    pub fn set(&mut self, downloader: UserId, owner: UserId, level: usize, slot: usize, count: u32) {
        let key = (downloader, owner, level, slot);
        if count == 0 {
            self.counts.remove(&key);
        } else {
            self.counts.insert(key, count);
        }
    }

    pub fn get(&self, downloader: UserId, owner: UserId, level: usize, slot: usize) -> u32 {
        self.counts.get(&(downloader, owner, level, slot)).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Nonzero entries ordered by downloader, owner, level, slot.
    pub fn entries(&self) -> impl Iterator<Item = PlanEntry> + '_ {
        self.counts.iter().map(|(&(downloader, owner, level, slot), &count)| PlanEntry { downloader, owner, level, slot, count })
    }

    pub fn total_segments(&self) -> u32 {
        self.counts.values().sum()
    }

    /// Mbit downloaded by `n` in `slot`.
    pub fn slot_volume(&self, inst: &SlottedInstance, n: UserId, slot: usize) -> f64 {
        self.entries().filter(|e| e.downloader == n && e.slot == slot).map(|e| e.count as f64 * inst.profiles()[e.owner].segment_len * inst.profiles()[e.owner].ladder.levels()[e.level - 1]).sum()
    }

    /// Checks capacity, encounter, segment-count and buffer constraints.
    pub fn validate(&self, inst: &SlottedInstance) -> Result<(), BoundError> {
        let bad = |m: String| Err(BoundError::InfeasiblePlan(m));
        if self.slots != inst.slots() {
            return bad(format!("plan has {} slots, instance {}", self.slots, inst.slots()));
        }
        let ps = inst.profiles();
        for e in self.entries() {
            if e.downloader >= ps.len() || e.owner >= ps.len() {
                return bad(format!("unknown user in {e:?}"));
            }
            if e.slot == 0 || e.slot > self.slots {
                return bad(format!("slot out of range in {e:?}"));
            }
            if e.level == 0 || e.level > ps[e.owner].ladder.len() {
                return bad(format!("level out of range in {e:?}"));
            }
            if !inst.can_serve(e.downloader, e.owner, e.slot) {
                return bad(format!("{} cannot serve {} in slot {}", e.downloader, e.owner, e.slot));
            }
        }
        for n in 0..ps.len() {
            for t in 1..=self.slots {
                let x = self.slot_volume(inst, n, t);
                let h = inst.slot_capacity(n, t);
                if x > h + TIME_EPS * h.max(1.0) {
                    return bad(format!("user {n} needs {x} Mbit in slot {t}, has {h}"));
                }
            }
        }
        for (m, p) in ps.iter().enumerate() {
            let mut q = 0.0f64;
            let mut total = 0u32;
            for t in 1..=self.slots {
                let c = self.received(m, t).values().sum::<u32>();
                total += c;
                q = (q - 1.0).max(0.0) + c as f64 * p.segment_len;
                if q > p.buffer_cap + TIME_EPS {
                    return bad(format!("user {m} buffer reaches {q} > {} in slot {t}", p.buffer_cap));
                }
            }
            if total > p.num_segments() {
                return bad(format!("user {m} receives {total} of {} segments", p.num_segments()));
            }
        }
        Ok(())
    }

    /// Segments owned by `m` landing in `slot`, counted per level.
    fn received(&self, m: UserId, slot: usize) -> BTreeMap<usize, u32> {
        let mut out = BTreeMap::new();
        for e in self.entries().filter(|e| e.owner == m && e.slot == slot) {
            *out.entry(e.level).or_default() += e.count;
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["downloader", "owner", "level", "slot", "count"])?;
        for e in self.entries() {
            w.write_record([e.downloader.to_string(), e.owner.to_string(), e.level.to_string(), e.slot.to_string(), e.count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Welfare of a slotted plan, per user and summed.
///
/// Within a slot segments play in ascending bitrate, so degradation is only
/// charged from the previous receiving slot's highest bitrate to this slot's
/// lowest. A slot with nothing received carries the earlier highest bitrate
/// forward. A slot whose start finds less than one second buffered stalls for
/// the shortfall, paid once a later segment actually arrives.
pub fn slotted_welfare(plan: &SlottedPlan, inst: &SlottedInstance) -> Result<(f64, Vec<WelfareBreakdown>), BoundError> {
    plan.validate(inst)?;
    let ps = inst.profiles();
    let mut out = Vec::with_capacity(ps.len());
    for (n, p) in ps.iter().enumerate() {
        let (mut value, mut qdeg, mut rebuf) = (0.0, 0.0, 0.0);
        let mut q = 0.0f64;
        let mut last_high: Option<f64> = None;
        let mut pending = 0.0;
        let mut started = false;
        for t in 1..=plan.slots {
            if started {
                pending += (1.0 - q).max(0.0);
            }
            let got = plan.received(n, t);
            let count: u32 = got.values().sum();
            q = (q - 1.0).max(0.0) + count as f64 * p.segment_len;
            if count == 0 {
                continue;
            }
            let rate = |z: usize| p.ladder.levels()[z - 1];
            for (&z, &c) in &got {
                value += c as f64 * p.segment_len * value_fn(p.theta, rate(z));
            }
            let low = rate(*got.keys().next().unwrap());
            let high = rate(*got.keys().next_back().unwrap());
            if let Some(h) = last_high {
                qdeg += p.phi_qdeg * (h - low).max(0.0);
            }
            rebuf += p.phi_rebuf * pending;
            pending = 0.0;
            last_high = Some(high);
            started = true;
        }

        let (mut cell, mut wifi) = (0.0, 0.0);
        for t in 1..=plan.slots {
            let x = plan.slot_volume(inst, n, t);
            if x > 0.0 {
                cell += p.c_time * x / inst.slot_capacity(n, t) + p.c_data * x;
            }
            for e in plan.entries().filter(|e| e.downloader == n && e.slot == t && e.owner != n) {
                let o = &ps[e.owner];
                wifi += p.w_data * e.count as f64 * o.segment_len * o.ladder.levels()[e.level - 1];
            }
        }
        out.push(WelfareBreakdown::compose(value, qdeg, rebuf, cell, wifi));
    }
    Ok((out.iter().map(|b| b.welfare).sum(), out))
}
