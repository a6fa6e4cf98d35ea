//! Per-user cellular capacity and hotspot location over `[0, T]`.
//!
//! Both traces are piecewise constant. A value holds on `[t_from, t_to)`;
//! the final step also holds at `T`. Encounter checks over an interval only
//! look at sub-intervals of positive length, so two users that part ways at
//! exactly the instant a download finishes are still considered together
//! for that download.

mod csv_io;
mod synth;

pub use csv_io::{load_capacity_csv, load_mobility_csv, read_capacity_csv, read_mobility_csv, write_capacity_csv, write_mobility_csv};
pub use synth::{synth_traces, SynthConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{UserId, TIME_EPS};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("interval [{from}, {to}] outside [0, {horizon}]")]
    OutOfRange { from: f64, to: f64, horizon: f64 },
    #[error("user {user}: {detail}")]
    Coverage { user: UserId, detail: String },
    #[error("user {user}: invalid capacity {value} on [{from}, {to})")]
    BadCapacity { user: UserId, value: f64, from: f64, to: f64 },
    #[error("user {user}: hotspot id {id} outside 0..={max}")]
    HotspotOutOfRange { user: UserId, id: u32, max: u32 },
    #[error("capacity and mobility traces disagree: {0}")]
    Mismatch(String),
    #[error("invalid synthetic trace config: {0}")]
    InvalidConfig(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One constant piece of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step<V> {
    pub t_from: f64,
    pub t_to: f64,
    pub value: V,
}

/// Sorted, contiguous steps covering `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSeries<V> {
    steps: Vec<Step<V>>,
}

impl<V: Copy + PartialEq> StepSeries<V> {
    /// Sorts `steps` and checks they tile `[0, horizon]` exactly.
    pub fn new(user: UserId, mut steps: Vec<Step<V>>, horizon: f64) -> Result<Self, TraceError> {
        let cov = |detail: String| TraceError::Coverage { user, detail };
        if steps.is_empty() {
            return Err(cov("no intervals".into()));
        }
        steps.sort_by(|a, b| a.t_from.total_cmp(&b.t_from));
        if steps[0].t_from.abs() > TIME_EPS {
            return Err(cov(format!("first interval starts at {} instead of 0", steps[0].t_from)));
        }
        for (i, s) in steps.iter().enumerate() {
            if !(s.t_to > s.t_from) {
                return Err(cov(format!("empty or reversed interval [{}, {}]", s.t_from, s.t_to)));
            }
            if i > 0 {
                let prev = steps[i - 1].t_to;
                if (s.t_from - prev).abs() > TIME_EPS {
                    let kind = if s.t_from > prev { "gap" } else { "overlap" };
                    return Err(cov(format!("{kind} between {prev} and {}", s.t_from)));
                }
            }
        }
        let end = steps.last().unwrap().t_to;
        if (end - horizon).abs() > TIME_EPS {
            return Err(cov(format!("coverage ends at {end}, horizon is {horizon}")));
        }
        // Snap boundaries so later lookups see exact contiguity.
        steps[0].t_from = 0.0;
        for i in 1..steps.len() {
            steps[i].t_from = steps[i - 1].t_to;
        }
        steps.last_mut().unwrap().t_to = horizon;
        let mut merged: Vec<Step<V>> = Vec::with_capacity(steps.len());
        for s in steps {
            match merged.last_mut() {
                Some(last) if last.value == s.value => last.t_to = s.t_to,
                _ => merged.push(s),
            }
        }
        Ok(Self { steps: merged })
    }

    pub fn constant(value: V, horizon: f64) -> Self {
        Self { steps: vec![Step { t_from: 0.0, t_to: horizon, value }] }
    }

    pub fn steps(&self) -> &[Step<V>] {
        &self.steps
    }

    /// Index of the step holding at `t` (right-continuous; `T` maps to the last step).
    pub fn index_at(&self, t: f64) -> usize {
        let i = self.steps.partition_point(|s| s.t_to <= t);
        i.min(self.steps.len() - 1)
    }

    pub fn value_at(&self, t: f64) -> V {
        self.steps[self.index_at(t)].value
    }

    pub fn horizon(&self) -> f64 {
        self.steps.last().map(|s| s.t_to).unwrap_or(0.0)
    }
}

fn check_interval(from: f64, to: f64, horizon: f64) -> Result<(), TraceError> {
    if from < -TIME_EPS || to > horizon + TIME_EPS || from > to + TIME_EPS {
        return Err(TraceError::OutOfRange { from, to, horizon });
    }
    Ok(())
}

/// Cellular link capacity `h_n(t)` in Mbps for every user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityTrace {
    horizon: f64,
    users: Vec<StepSeries<f64>>,
}

impl CapacityTrace {
    pub fn new(users: Vec<StepSeries<f64>>) -> Result<Self, TraceError> {
        let horizon = users.first().map(|s| s.horizon()).unwrap_or(0.0);
        for (u, s) in users.iter().enumerate() {
            if (s.horizon() - horizon).abs() > TIME_EPS {
                return Err(TraceError::Coverage { user: u, detail: format!("horizon {} differs from {horizon}", s.horizon()) });
            }
            for st in s.steps() {
                if !(st.value >= 0.0) || !st.value.is_finite() {
                    return Err(TraceError::BadCapacity { user: u, value: st.value, from: st.t_from, to: st.t_to });
                }
            }
        }
        Ok(Self { horizon, users })
    }

    pub fn constant(rates: &[f64], horizon: f64) -> Result<Self, TraceError> {
        Self::new(rates.iter().map(|&r| StepSeries::constant(r, horizon)).collect())
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn series(&self, n: UserId) -> Result<&StepSeries<f64>, TraceError> {
        self.users.get(n).ok_or(TraceError::UnknownUser(n))
    }

    pub fn capacity_at(&self, n: UserId, t: f64) -> Result<f64, TraceError> {
        Ok(self.series(n)?.value_at(t))
    }

    /// Mbit that user `n` can pull over `[t_from, t_to]`.
    pub fn integrate_capacity(&self, n: UserId, t_from: f64, t_to: f64) -> Result<f64, TraceError> {
        let s = self.series(n)?;
        check_interval(t_from, t_to, self.horizon)?;
        if t_to <= t_from {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for st in &s.steps()[s.index_at(t_from)..] {
            if st.t_from >= t_to {
                break;
            }
            let lo = st.t_from.max(t_from);
            let hi = st.t_to.min(t_to);
            if hi > lo {
                total += st.value * (hi - lo);
            }
        }
        Ok(total)
    }

    /// Earliest time at which a full-rate download of `volume` Mbit started at
    /// `t_start` completes, or `None` if the trace ends first.
    pub fn download_end_time(&self, n: UserId, t_start: f64, volume: f64) -> Result<Option<f64>, TraceError> {
        let s = self.series(n)?;
        check_interval(t_start, t_start, self.horizon)?;
        if volume <= 0.0 {
            return Ok(Some(t_start));
        }
        let mut left = volume;
        let mut cur = t_start;
        for st in &s.steps()[s.index_at(t_start)..] {
            let span = st.t_to - cur;
            if span <= 0.0 {
                continue;
            }
            let avail = st.value * span;
            if st.value > 0.0 && avail >= left {
                return Ok(Some((cur + left / st.value).min(st.t_to)));
            }
            left -= avail;
            cur = st.t_to;
        }
        Ok(None)
    }

    /// Interior step boundaries of user `n`, ascending.
    pub fn breakpoints(&self, n: UserId) -> Result<Vec<f64>, TraceError> {
        let s = self.series(n)?;
        Ok(s.steps().iter().skip(1).map(|st| st.t_from).collect())
    }

    /// Restriction to `[0, horizon]` for the first `users` users.
    pub fn truncate(&self, users: usize, horizon: f64) -> Result<Self, TraceError> {
        let series = self.users.iter().take(users).enumerate().map(|(u, s)| {
            let steps: Vec<_> = s
                .steps()
                .iter()
                .filter(|st| st.t_from < horizon)
                .map(|st| Step { t_to: st.t_to.min(horizon), ..*st })
                .collect();
            StepSeries::new(u, steps, horizon)
        });
        Self::new(series.collect::<Result<_, _>>()?)
    }
}

/// Hotspot id per user over time; 0 is the non-hotspot area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityTrace {
    horizon: f64,
    hotspots: u32,
    users: Vec<StepSeries<u32>>,
}

impl MobilityTrace {
    pub fn new(users: Vec<StepSeries<u32>>, hotspots: u32) -> Result<Self, TraceError> {
        let horizon = users.first().map(|s| s.horizon()).unwrap_or(0.0);
        for (u, s) in users.iter().enumerate() {
            if (s.horizon() - horizon).abs() > TIME_EPS {
                return Err(TraceError::Coverage { user: u, detail: format!("horizon {} differs from {horizon}", s.horizon()) });
            }
            if let Some(st) = s.steps().iter().find(|st| st.value > hotspots) {
                return Err(TraceError::HotspotOutOfRange { user: u, id: st.value, max: hotspots });
            }
        }
        Ok(Self { horizon, hotspots, users })
    }

    /// Everyone parked at hotspot 1 for the whole horizon.
    pub fn all_together(users: usize, horizon: f64) -> Self {
        Self { horizon, hotspots: 1, users: (0..users).map(|_| StepSeries::constant(1, horizon)).collect() }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn hotspots(&self) -> u32 {
        self.hotspots
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn series(&self, n: UserId) -> Result<&StepSeries<u32>, TraceError> {
        self.users.get(n).ok_or(TraceError::UnknownUser(n))
    }

    pub fn location_at(&self, n: UserId, t: f64) -> Result<u32, TraceError> {
        Ok(self.series(n)?.value_at(t))
    }

    pub fn encountered(&self, n: UserId, u: UserId, t: f64) -> Result<bool, TraceError> {
        let a = self.location_at(n, t)?;
        let b = self.location_at(u, t)?;
        Ok(n == u || (a == b && a != 0))
    }

    /// First time in `[t_from, t_to)` at which `n` and `u` stop being
    /// co-located, or `None` if they stay together throughout.
    pub fn first_separation(&self, n: UserId, u: UserId, t_from: f64, t_to: f64) -> Result<Option<f64>, TraceError> {
        let sn = self.series(n)?;
        let su = self.series(u)?;
        check_interval(t_from, t_to.min(self.horizon), self.horizon)?;
        if n == u {
            return Ok(None);
        }
        let t_to = t_to.min(self.horizon);
        if t_to - t_from <= TIME_EPS {
            return Ok(if self.encountered(n, u, t_from)? { None } else { Some(t_from) });
        }
        let (mut i, mut j) = (sn.index_at(t_from), su.index_at(t_from));
        let mut cur = t_from;
        while cur < t_to - TIME_EPS {
            let (a, b) = (sn.steps()[i], su.steps()[j]);
            // Skip pieces that end (numerically) right where we stand.
            if a.t_to - cur <= TIME_EPS && i + 1 < sn.steps().len() {
                i += 1;
                continue;
            }
            if b.t_to - cur <= TIME_EPS && j + 1 < su.steps().len() {
                j += 1;
                continue;
            }
            if a.value != b.value || a.value == 0 {
                return Ok(Some(cur));
            }
            let next = a.t_to.min(b.t_to);
            if next >= t_to {
                break;
            }
            cur = next;
        }
        Ok(None)
    }

    pub fn encountered_throughout(&self, n: UserId, u: UserId, t_from: f64, t_to: f64) -> Result<bool, TraceError> {
        if t_to < t_from - TIME_EPS || t_from < -TIME_EPS || t_to > self.horizon + TIME_EPS {
            return Err(TraceError::OutOfRange { from: t_from, to: t_to, horizon: self.horizon });
        }
        Ok(self.first_separation(n, u, t_from, t_to)?.is_none())
    }

    pub fn breakpoints(&self, n: UserId) -> Result<Vec<f64>, TraceError> {
        Ok(self.series(n)?.steps().iter().skip(1).map(|st| st.t_from).collect())
    }

    pub fn truncate(&self, users: usize, horizon: f64) -> Result<Self, TraceError> {
        let series = self.users.iter().take(users).enumerate().map(|(u, s)| {
            let steps: Vec<_> = s
                .steps()
                .iter()
                .filter(|st| st.t_from < horizon)
                .map(|st| Step { t_to: st.t_to.min(horizon), ..*st })
                .collect();
            StepSeries::new(u, steps, horizon)
        });
        Self::new(series.collect::<Result<_, _>>()?, self.hotspots)
    }
}

/// Capacity and mobility for the same population and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTrace {
    pub capacity: CapacityTrace,
    pub mobility: MobilityTrace,
}

impl NetworkTrace {
    pub fn new(capacity: CapacityTrace, mobility: MobilityTrace) -> Result<Self, TraceError> {
        if capacity.num_users() != mobility.num_users() {
            return Err(TraceError::Mismatch(format!("{} capacity users vs {} mobility users", capacity.num_users(), mobility.num_users())));
        }
        if (capacity.horizon() - mobility.horizon()).abs() > TIME_EPS {
            return Err(TraceError::Mismatch(format!("horizon {} vs {}", capacity.horizon(), mobility.horizon())));
        }
        Ok(Self { capacity, mobility })
    }

    pub fn horizon(&self) -> f64 {
        self.capacity.horizon()
    }

    pub fn num_users(&self) -> usize {
        self.capacity.num_users()
    }

    pub fn truncate(&self, users: usize, horizon: f64) -> Result<Self, TraceError> {
        Self::new(self.capacity.truncate(users, horizon)?, self.mobility.truncate(users, horizon)?)
    }
}
