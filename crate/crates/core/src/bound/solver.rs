//! Exact maximization of slotted welfare by memoized depth-first search.
//!
//! The search runs slot by slot. After each slot the future only depends on
//! every user's buffer, segment count, last highest bitrate and unpaid stall,
//! so those form the memo key. Buffers are tracked in integer ticks to keep
//! keys exact. Within a slot, every combination of downloader bundles is
//! folded into a per-owner outcome keeping the cheapest way to reach it.

use std::collections::BTreeMap;
use std::rc::Rc;

use rustc_hash::FxHashMap as HashMap;

use serde::{Deserialize, Serialize};

use crate::model::{UserId, TIME_EPS};
use crate::qoe::value_fn;

use super::{slotted_welfare, BoundError, SlottedInstance, SlottedPlan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveLimits {
    /// Memoized states before the search gives up on optimality.
    pub max_states: usize,
}

impl Default for SolveLimits {
    fn default() -> Self {
        Self { max_states: 2_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub plan: SlottedPlan,
    pub welfare: f64,
    /// False if the state budget ran out; `welfare` is then only achievable, not optimal.
    pub exact: bool,
    pub states: usize,
}

/// What the future depends on for one user. `left` counts the segments it
/// can still use, capped by what the links could ever deliver, so states
/// differing only beyond that cap share a memo entry. `last` is 0 before
/// the first receipt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct UserKey {
    q: u32,
    left: u32,
    last: u8,
    pending: u32,
}

type State = Vec<UserKey>;

/// Segments one owner receives in a slot: how many, and the lowest and
/// highest level among them (0 when none).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Recv {
    count: u32,
    low: u8,
    high: u8,
}

impl Recv {
    fn merge(self, o: Recv) -> Recv {
        match (self.count, o.count) {
            (0, _) => o,
            (_, 0) => self,
            _ => Recv { count: self.count + o.count, low: self.low.min(o.low), high: self.high.max(o.high) },
        }
    }
}

/// A partial assignment: Mbit used, value minus energy, and the picks.
#[derive(Debug, Clone)]
struct Assignment {
    vol: f64,
    net: f64,
    picks: Bundle,
}
/// (downloader, owner, level, count)
type Bundle = Vec<(UserId, UserId, usize, u32)>;

struct Transition {
    next: State,
    gain: f64,
    row: usize,
}

struct Memo {
    value: f64,
    choice: Option<(State, Bundle)>,
}

/// Everything the links can deliver in one slot. Each row holds, per owner,
/// an index into that owner's distinct receipts, plus the best net value
/// reaching that combination.
struct SlotTable {
    recvs: Vec<Vec<Recv>>,
    rows: Vec<(Vec<u16>, f64)>,
    bundles: Vec<Bundle>,
}

type Outcomes = Rc<SlotTable>;

struct Solver<'a> {
    inst: &'a SlottedInstance,
    ticks: u32,
    seg_ticks: Vec<u32>,
    cap_ticks: Vec<u32>,
    /// `reach[t - 1][m]`: most segments `m` could possibly get in slot `t`.
    reach: Vec<Vec<u32>>,
    /// `reach_after[t - 1][m]`: the same summed over slots `t..`.
    reach_after: Vec<Vec<u32>>,
    /// `link_bound[t - 1]`: net value the links can still earn from slot `t` on.
    link_bound: Vec<f64>,
    /// Slot tables built for the largest possible room, indexed by slot.
    outcomes: HashMap<usize, Outcomes>,
    /// `memo[t - 1]`: best welfare from slot `t` on, per state.
    memo: Vec<HashMap<State, Memo>>,
    states: usize,
    limits: SolveLimits,
    truncated: bool,
}

/// Smallest tick count per second that makes every segment length integral.
fn tick_resolution(inst: &SlottedInstance) -> Result<u32, BoundError> {
    (1..=4096u32)
        .find(|&l| inst.profiles().iter().all(|p| {
            let v = p.segment_len * l as f64;
            (v - v.round()).abs() < 1e-9
        }))
        .ok_or_else(|| BoundError::Shape("segment lengths are not commensurate with the slot length".into()))
}

impl<'a> Solver<'a> {
    fn new(inst: &'a SlottedInstance, limits: SolveLimits) -> Result<Self, BoundError> {
        let ticks = tick_resolution(inst)?;
        let seg_ticks = inst.profiles().iter().map(|p| (p.segment_len * ticks as f64).round() as u32).collect();
        let cap_ticks = inst.profiles().iter().map(|p| (p.buffer_cap * ticks as f64 + 1e-9).floor() as u32).collect();
        let ps = inst.profiles();
        let n = ps.len();
        let slots = inst.slots();
        let mut reach = vec![vec![0u32; n]; slots];
        let mut link_bound = vec![0.0; slots + 1];
        for t in (1..=slots).rev() {
            let mut earn = 0.0;
            for d in 0..n {
                let h = inst.slot_capacity(d, t);
                // Value per Mbit peaks at an owner's lowest rung.
                let mut per_mbit = f64::NEG_INFINITY;
                for m in (0..n).filter(|&m| inst.can_serve(d, m, t)) {
                    let r = ps[m].ladder.levels()[0];
                    reach[t - 1][m] += (h / (r * ps[m].segment_len) + 1e-9).floor() as u32;
                    per_mbit = per_mbit.max(value_fn(ps[m].theta, r) / r);
                }
                if per_mbit.is_finite() {
                    earn += (h * (per_mbit - ps[d].c_data) - ps[d].c_time).max(0.0);
                }
            }
            link_bound[t - 1] = link_bound[t] + earn;
        }
        let mut reach_after = vec![vec![0u32; n]; slots + 1];
        for t in (0..slots).rev() {
            for m in 0..n {
                reach_after[t][m] = reach_after[t + 1][m].saturating_add(reach[t][m]);
            }
        }
        let mut solver = Self { inst, ticks, seg_ticks, cap_ticks, reach, reach_after, link_bound, outcomes: HashMap::default(), memo: (0..slots).map(|_| HashMap::default()).collect(), states: 0, limits, truncated: false };
        // No slot can earn more than its best row, losses aside.
        let mut tail = 0.0;
        for t in (1..=slots).rev() {
            let best = solver.outcomes(t).rows.iter().map(|r| r.1).fold(0.0, f64::max);
            tail += best;
            solver.link_bound[t - 1] = solver.link_bound[t - 1].min(tail);
        }
        Ok(solver)
    }

    /// Upper bound on the welfare still to come from slot `t` on.
    fn optimistic(&self, t: usize, state: &State) -> f64 {
        let segments: f64 = self
            .inst
            .profiles()
            .iter()
            .zip(state)
            .filter(|(p, _)| p.is_video_user)
            .map(|(p, k)| k.left as f64 * p.segment_len * value_fn(p.theta, p.ladder.top()))
            .sum();
        segments.min(self.link_bound[t - 1])
    }

    /// Segments each owner can still take in slot `t`.
    fn room(&self, t: usize, state: &State) -> Vec<u32> {
        self.inst
            .profiles()
            .iter()
            .enumerate()
            .map(|(m, p)| {
                if !p.is_video_user {
                    return 0;
                }
                let k = state[m];
                let drained = k.q.saturating_sub(self.ticks);
                let by_buffer = self.cap_ticks[m].saturating_sub(drained) / self.seg_ticks[m];
                by_buffer.min(k.left).min(self.reach[t - 1][m])
            })
            .collect()
    }

    /// What `d` can fetch for `m` in one slot: per receipt summary, the
    /// options not beaten on both volume and net value.
    fn owner_options(&self, d: UserId, m: UserId, h: f64, room: u32) -> BTreeMap<Recv, Vec<Assignment>> {
        let ps = self.inst.profiles();
        let (pd, pm) = (&ps[d], &ps[m]);
        let per_mbit = pd.c_time / h + pd.c_data + if m != d { pd.w_data } else { 0.0 };
        let kinds: Vec<(usize, f64, f64)> = pm
            .ladder
            .levels()
            .iter()
            .enumerate()
            .map(|(i, &r)| (i + 1, pm.segment_len * r, pm.segment_len * value_fn(pm.theta, r)))
            .filter(|k| k.1 <= h + TIME_EPS * h.max(1.0))
            .collect();
        let mut raw: BTreeMap<Recv, Vec<Assignment>> = BTreeMap::new();
        enumerate_counts(&kinds, 0, h, room, &mut vec![0; kinds.len()], &mut |counts| {
            let mut recv = Recv::default();
            let (mut vol, mut val) = (0.0, 0.0);
            let mut picks = Vec::new();
            for (i, &c) in counts.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let (z, v, g) = kinds[i];
                recv = recv.merge(Recv { count: c, low: z as u8, high: z as u8 });
                vol += c as f64 * v;
                val += c as f64 * g;
                picks.push((d, m, z, c));
            }
            if recv.count > 0 {
                raw.entry(recv).or_default().push(Assignment { vol, net: val - per_mbit * vol, picks });
            }
        });
        for opts in raw.values_mut() {
            pareto(opts);
        }
        raw
    }

    /// The best assignment for a receipt combination does not depend on how
    /// much room the owners have, so one table per slot serves every state.
    fn outcomes(&mut self, t: usize) -> Outcomes {
        if let Some(o) = self.outcomes.get(&t) {
            return o.clone();
        }
        let o: Outcomes = Rc::new(self.slot_outcomes(t, &self.reach[t - 1]));
        self.outcomes.insert(t, o.clone());
        o
    }

    fn slot_outcomes(&self, t: usize, room: &[u32]) -> SlotTable {
        let n = self.inst.num_users();

        // Receipt summaries for all owners, folded one downloader at a time.
        let mut partial: HashMap<Vec<Recv>, (f64, Bundle)> = HashMap::default();
        partial.insert(vec![Recv::default(); n], (0.0, Vec::new()));
        for d in 0..n {
            let h = self.inst.slot_capacity(d, t);
            if h <= 0.0 {
                continue;
            }
            // Combine owners for this downloader under its capacity.
            let mut mine: Vec<(Vec<Recv>, Assignment)> = vec![(vec![Recv::default(); n], Assignment { vol: 0.0, net: 0.0, picks: Vec::new() })];
            for m in 0..n {
                if room[m] == 0 || !self.inst.can_serve(d, m, t) {
                    continue;
                }
                let opts = self.owner_options(d, m, h, room[m]);
                let mut grown = Vec::new();
                for (key, base) in &mine {
                    for (recv, list) in &opts {
                        for o in list {
                            if base.vol + o.vol > h + TIME_EPS * h.max(1.0) {
                                continue;
                            }
                            let mut k = key.clone();
                            k[m] = *recv;
                            let mut picks = base.picks.clone();
                            picks.extend(o.picks.iter().copied());
                            grown.push((k, Assignment { vol: base.vol + o.vol, net: base.net + o.net, picks }));
                        }
                    }
                }
                mine.extend(grown);
                let mut grouped: BTreeMap<Vec<Recv>, Vec<Assignment>> = BTreeMap::new();
                for (k, o) in mine {
                    grouped.entry(k).or_default().push(o);
                }
                mine = grouped
                    .into_iter()
                    .flat_map(|(k, mut opts)| {
                        pareto(&mut opts);
                        opts.into_iter().map(move |o| (k.clone(), o))
                    })
                    .collect();
            }
            let mut best: BTreeMap<Vec<Recv>, Assignment> = BTreeMap::new();
            for (k, o) in mine {
                if best.get(&k).is_none_or(|b| o.net > b.net) {
                    best.insert(k, o);
                }
            }
            let mut next: HashMap<Vec<Recv>, (f64, Bundle)> = HashMap::default();
            for (acc, (net, kappa)) in &partial {
                'add: for (add, o) in &best {
                    let mut v = acc.clone();
                    for m in 0..n {
                        v[m] = v[m].merge(add[m]);
                        if v[m].count > room[m] {
                            continue 'add;
                        }
                    }
                    let total = net + o.net;
                    if next.get(&v).is_none_or(|e| total > e.0) {
                        let mut k = kappa.clone();
                        k.extend(o.picks.iter().copied());
                        next.insert(v, (total, k));
                    }
                }
            }
            partial = next;
        }
        let mut out: Vec<_> = partial.into_iter().collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        let mut recvs: Vec<Vec<Recv>> = vec![Vec::new(); n];
        for (k, _) in &out {
            for m in 0..n {
                recvs[m].push(k[m]);
            }
        }
        for r in recvs.iter_mut() {
            r.sort();
            r.dedup();
        }
        let mut table = SlotTable { recvs, rows: Vec::with_capacity(out.len()), bundles: Vec::with_capacity(out.len()) };
        for (k, (net, b)) in out {
            let idx = (0..n).map(|m| table.recvs[m].binary_search(&k[m]).unwrap() as u16).collect();
            table.rows.push((idx, net));
            table.bundles.push(b);
        }
        table
    }

    /// Every distinct next state after slot `t`, each with its most profitable row.
    fn transitions(&mut self, t: usize, state: &State) -> (Outcomes, Vec<Transition>) {
        let room = self.room(t, state);
        let table = self.outcomes(t);
        let ps = self.inst.profiles();
        let n = ps.len();

        // Each owner's next key and welfare change depend only on its own receipts.
        let mut keys: Vec<Vec<UserKey>> = Vec::with_capacity(n);
        let mut effect: Vec<Vec<(u64, f64)>> = Vec::with_capacity(n);
        let mut stride = Vec::with_capacity(n);
        let mut radix = 1u64;
        for m in 0..n {
            let p = &ps[m];
            let mut distinct: Vec<UserKey> = Vec::new();
            let mut eff = Vec::with_capacity(table.recvs[m].len());
            for r in &table.recvs[m] {
                if r.count > room[m] {
                    eff.push((u64::MAX, 0.0));
                    continue;
                }
                let mut k = state[m];
                let mut gain = 0.0;
                if k.left > 0 {
                    if k.last > 0 {
                        k.pending += self.ticks.saturating_sub(k.q);
                    }
                    k.q = k.q.saturating_sub(self.ticks);
                    if r.count > 0 {
                        let rate = |z: u8| p.ladder.levels()[z as usize - 1];
                        if k.last > 0 {
                            gain -= p.phi_qdeg * (rate(k.last) - rate(r.low)).max(0.0);
                        }
                        gain -= p.phi_rebuf * k.pending as f64 / self.ticks as f64;
                        k.pending = 0;
                        k.q += r.count * self.seg_ticks[m];
                        k.left -= r.count;
                        k.last = r.high;
                    }
                    k.left = k.left.min(self.reach_after[t][m]);
                    if k.left == 0 {
                        // Nothing more can arrive, so nothing else about this user matters.
                        k = UserKey { q: 0, left: 0, last: 0, pending: 0 };
                    }
                }
                let i = match distinct.iter().position(|d| *d == k) {
                    Some(i) => i,
                    None => {
                        distinct.push(k);
                        distinct.len() - 1
                    }
                };
                eff.push((i as u64, gain));
            }
            stride.push(radix);
            radix = radix.checked_mul(distinct.len() as u64).expect("too many distinct user states in one slot");
            keys.push(distinct);
            effect.push(eff);
        }

        // In the final slot only the single best row matters.
        let final_slot = t == self.inst.slots();
        let mut top: Option<(u64, f64, usize)> = None;
        let mut by_next: HashMap<u64, (f64, usize)> = HashMap::default();
        for (row, (idx, net)) in table.rows.iter().enumerate() {
            let mut gain = *net;
            let mut code = 0u64;
            let mut fits = true;
            for m in 0..n {
                let (i, g) = effect[m][idx[m] as usize];
                if i == u64::MAX {
                    fits = false;
                    break;
                }
                gain += g;
                code += i * stride[m];
            }
            if !fits {
                continue;
            }
            if final_slot {
                if top.is_none_or(|b| gain > b.1) {
                    top = Some((code, gain, row));
                }
                continue;
            }
            match by_next.get_mut(&code) {
                Some(e) if e.0 >= gain => {}
                Some(e) => *e = (gain, row),
                None => {
                    by_next.insert(code, (gain, row));
                }
            }
        }
        if let Some((code, gain, row)) = top {
            by_next.insert(code, (gain, row));
        }
        let mut out: Vec<Transition> = by_next
            .into_iter()
            .map(|(code, (gain, row))| {
                let next = (0..n).map(|m| keys[m][((code / stride[m]) % keys[m].len() as u64) as usize]).collect();
                Transition { next, gain, row }
            })
            .collect();
        // Hash order is arbitrary; fix it so ties resolve the same way every run.
        out.sort_by(|a, b| a.next.cmp(&b.next));
        (table, out)
    }

    fn value(&mut self, t: usize, state: &State) -> f64 {
        if t > self.inst.slots() {
            return 0.0;
        }
        if let Some(m) = self.memo[t - 1].get(state) {
            return m.value;
        }
        if self.states >= self.limits.max_states {
            // Out of budget: idling from here on is always feasible.
            self.truncated = true;
            return 0.0;
        }
        let (table, children) = self.transitions(t, state);
        let mut bounded: Vec<(f64, Transition)> = children.into_iter().map(|c| (c.gain + self.optimistic(t + 1, &c.next), c)).collect();
        bounded.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut best = f64::NEG_INFINITY;
        let mut choice = None;
        for (bound, c) in bounded {
            if choice.is_some() && bound <= best {
                break;
            }
            let v = c.gain + self.value(t + 1, &c.next);
            if choice.is_none() || v > best {
                best = v;
                choice = Some((c.next, table.bundles[c.row].clone()));
            }
        }
        self.states += 1;
        self.memo[t - 1].insert(state.clone(), Memo { value: best, choice });
        best
    }

    fn plan(&self, root: State) -> SlottedPlan {
        let mut plan = SlottedPlan::new(self.inst.slots());
        let mut state = root;
        for t in 1..=self.inst.slots() {
            let Some(Memo { choice: Some((next, kappa)), .. }) = self.memo[t - 1].get(&state) else { break };
            for &(d, m, z, c) in kappa {
                let prev = plan.get(d, m, z, t);
                plan.set(d, m, z, t, prev + c);
            }
            state = next.clone();
        }
        plan
    }
}

/// Count vectors over `kinds` fitting in `budget` Mbit and `room` segments.
fn enumerate_counts(kinds: &[(usize, f64, f64)], i: usize, budget: f64, room: u32, counts: &mut Vec<u32>, emit: &mut impl FnMut(&[u32])) {
    if i == kinds.len() {
        emit(counts);
        return;
    }
    let vol = kinds[i].1;
    for c in 0..=room {
        let left = budget - c as f64 * vol;
        if left < -TIME_EPS * budget.max(1.0) {
            break;
        }
        counts[i] = c;
        enumerate_counts(kinds, i + 1, left, room - c, counts, emit);
    }
    counts[i] = 0;
}

/// Keeps the options no other option beats on both volume and net value.
fn pareto(opts: &mut Vec<Assignment>) {
    opts.sort_by(|a, b| a.vol.total_cmp(&b.vol).then(b.net.total_cmp(&a.net)));
    let mut best = f64::NEG_INFINITY;
    opts.retain(|o| {
        let keep = o.net > best;
        best = best.max(o.net);
        keep
    });
}

/// Optimal slotted plan for `inst`.
pub fn solve_slotted(inst: &SlottedInstance, limits: SolveLimits) -> Result<Solution, BoundError> {
    let mut s = Solver::new(inst, limits)?;
    let root: State = inst
        .profiles()
        .iter()
        .enumerate()
        .map(|(m, p)| {
            let left = if p.is_video_user { p.num_segments().min(s.reach_after[0][m]) } else { 0 };
            UserKey { q: 0, left, last: 0, pending: 0 }
        })
        .collect();
    let found = s.value(1, &root);
    let plan = s.plan(root);
    let (welfare, _) = slotted_welfare(&plan, inst)?;
    debug_assert!(s.truncated || (welfare - found).abs() < 1e-6, "search {found} vs plan {welfare}");
    Ok(Solution { plan, welfare, exact: !s.truncated, states: s.states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::profile;
    use crate::model::{BitrateLadder, UserProfile};

    fn free(ladder: Vec<f64>, segment_len: f64, buffer_cap: f64, video_len: f64) -> UserProfile {
        UserProfile {
            ladder: BitrateLadder::new(ladder).unwrap(),
            segment_len,
            buffer_cap,
            video_len,
            phi_qdeg: 0.0,
            phi_rebuf: 0.0,
            c_time: 0.0,
            c_data: 0.0,
            w_data: 0.0,
            ..profile(0)
        }
    }

    #[test]
    fn dead_links_give_the_empty_plan() {
        let inst = SlottedInstance::new(vec![profile(0)], vec![vec![0.0; 3]], vec![vec![vec![true]]; 3]).unwrap();
        let s = solve_slotted(&inst, SolveLimits::default()).unwrap();
        assert!(s.plan.is_empty());
        assert_eq!(s.welfare, 0.0);
        assert!(s.exact);
    }

    #[test]
    fn two_small_segments_beat_one_large() {
        let inst = SlottedInstance::new(vec![free(vec![1.0, 2.0], 1.0, 2.0, 4.0)], vec![vec![2.0]], vec![vec![vec![true]]]).unwrap();
        let s = solve_slotted(&inst, SolveLimits::default()).unwrap();
        assert!((s.welfare - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert_eq!(s.plan.get(0, 0, 1, 1), 2);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let p = UserProfile { video_len: 8.0, ..profile(0) };
        let inst = SlottedInstance::new(vec![p], vec![vec![5.0; 6]], vec![vec![vec![true]]; 6]).unwrap();
        let s = solve_slotted(&inst, SolveLimits { max_states: 3 }).unwrap();
        assert!(!s.exact);
        s.plan.validate(&inst).unwrap();
        let full = solve_slotted(&inst, SolveLimits::default()).unwrap();
        assert!(full.exact && full.welfare >= s.welfare - 1e-12);
    }

    #[test]
    fn helper_serves_starved_owner() {
        let helper = UserProfile { is_video_user: false, video_len: 0.0, ..profile(0) };
        let owner = UserProfile { id: 1, video_len: 4.0, ..profile(1) };
        let inst = SlottedInstance::new(vec![helper, owner], vec![vec![5.0; 3], vec![0.0; 3]], vec![vec![vec![true; 2]; 2]; 3]).unwrap();
        let s = solve_slotted(&inst, SolveLimits::default()).unwrap();
        assert!(s.welfare > 0.0);
        assert!(s.plan.entries().all(|e| e.downloader == 0 && e.owner == 1));
    }
}
