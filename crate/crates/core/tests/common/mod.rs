#![allow(dead_code)]

use coopstream::bound::{slotted_welfare, SlottedInstance, SlottedPlan};
use coopstream::model::{BitrateLadder, UserProfile};
use coopstream::traces::{CapacityTrace, MobilityTrace, NetworkTrace, Step, StepSeries};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn profile(id: usize, ladder: &[f64], segment_len: f64, video_len: f64) -> UserProfile {
    UserProfile {
        id,
        ladder: BitrateLadder::new(ladder.to_vec()).unwrap(),
        segment_len,
        buffer_cap: 40.0,
        theta: 1.0,
        phi_qdeg: 1.0,
        phi_rebuf: 1.0,
        c_time: 0.5,
        c_data: 0.1,
        w_time: 0.0,
        w_data: 0.05,
        video_len,
        is_video_user: true,
    }
}

/// Capacity and locations that only change on whole seconds.
pub fn slot_aligned_trace(rng: &mut ChaCha8Rng, users: usize, slots: usize, cap_hi: f64, hotspots: u32) -> NetworkTrace {
    let horizon = slots as f64;
    let mut caps = Vec::new();
    let mut mobs = Vec::new();
    for u in 0..users {
        let mut c = Vec::new();
        let mut l = Vec::new();
        for t in 0..slots {
            let (a, b) = (t as f64, (t + 1) as f64);
            // One decimal keeps volumes tidy.
            let v = (rng.random_range(0.0..=cap_hi) * 10.0).round() / 10.0;
            c.push(Step { t_from: a, t_to: b, value: v });
            l.push(Step { t_from: a, t_to: b, value: rng.random_range(0..=hotspots) });
        }
        caps.push(StepSeries::new(u, c, horizon).unwrap());
        mobs.push(StepSeries::new(u, l, horizon).unwrap());
    }
    NetworkTrace::new(CapacityTrace::new(caps).unwrap(), MobilityTrace::new(mobs, hotspots).unwrap()).unwrap()
}

/// Best plan by trying every count vector. `None` when there are more than
/// `limit` candidates.
pub fn brute_force(inst: &SlottedInstance, limit: u64) -> Option<(f64, u64)> {
    let ps = inst.profiles();
    let n = ps.len();
    let mut cells: Vec<(usize, usize, usize, usize, u32)> = Vec::new();
    for t in 1..=inst.slots() {
        for d in 0..n {
            let h = inst.slot_capacity(d, t);
            for (m, o) in ps.iter().enumerate() {
                if !inst.can_serve(d, m, t) {
                    continue;
                }
                for (i, &r) in o.ladder.levels().iter().enumerate() {
                    let most = (h / (r * o.segment_len) + 1e-9).floor() as u32;
                    if most > 0 {
                        cells.push((d, m, i + 1, t, most.min(o.num_segments())));
                    }
                }
            }
        }
    }
    let mut total: u64 = 1;
    for c in &cells {
        total = total.checked_mul(c.4 as u64 + 1)?;
        if total > limit {
            return None;
        }
    }
    let mut counts = vec![0u32; cells.len()];
    let mut best = f64::NEG_INFINITY;
    loop {
        let mut plan = SlottedPlan::new(inst.slots());
        for (i, &(d, m, z, t, _)) in cells.iter().enumerate() {
            plan.set(d, m, z, t, counts[i]);
        }
        if let Ok((w, _)) = slotted_welfare(&plan, inst) {
            best = best.max(w);
        }
        let mut i = 0;
        loop {
            if i == cells.len() {
                return Some((best, total));
            }
            if counts[i] < cells[i].4 {
                counts[i] += 1;
                break;
            }
            counts[i] = 0;
            i += 1;
        }
    }
}
