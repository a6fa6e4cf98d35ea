use crate::model::{validate_profile, UserId, UserProfile, TIME_EPS};
use crate::traces::NetworkTrace;

use super::BoundError;

/// A population on a grid of unit slots: per-slot link volume and who stays
/// together for the whole slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlottedInstance {
    profiles: Vec<UserProfile>,
    /// `capacity[n][t]`: Mbit user `n` can pull during slot `t + 1`.
    capacity: Vec<Vec<f64>>,
    /// `together[t][n][m]`: `n` and `m` share a hotspot throughout slot `t + 1`.
    together: Vec<Vec<Vec<bool>>>,
}

impl SlottedInstance {
    pub fn new(profiles: Vec<UserProfile>, capacity: Vec<Vec<f64>>, together: Vec<Vec<Vec<bool>>>) -> Result<Self, BoundError> {
        let n = profiles.len();
        let shape = |m: String| Err(BoundError::Shape(m));
        for (i, p) in profiles.iter().enumerate() {
            if p.id != i {
                return shape(format!("profile at index {i} has id {}", p.id));
            }
            validate_profile(p)?;
        }
        if capacity.len() != n {
            return shape(format!("{} capacity rows for {n} users", capacity.len()));
        }
        let slots = together.len();
        if slots == 0 {
            return shape("no slots".into());
        }
        for (u, row) in capacity.iter().enumerate() {
            if row.len() != slots {
                return shape(format!("user {u} has {} slot capacities, expected {slots}", row.len()));
            }
            if let Some(v) = row.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return shape(format!("user {u} has invalid slot capacity {v}"));
            }
        }
        for (t, grid) in together.iter().enumerate() {
            if grid.len() != n || grid.iter().any(|r| r.len() != n) {
                return shape(format!("slot {} encounter matrix is not {n}x{n}", t + 1));
            }
        }
        Ok(Self { profiles, capacity, together })
    }

    /// Slots are the unit intervals `[t - 1, t]`; the horizon must be a whole number of seconds.
    pub fn from_trace(trace: &NetworkTrace, profiles: Vec<UserProfile>) -> Result<Self, BoundError> {
        let horizon = trace.horizon();
        if (horizon - horizon.round()).abs() > TIME_EPS || horizon.round() < 1.0 {
            return Err(BoundError::Shape(format!("horizon {horizon} is not a positive whole number of slots")));
        }
        let slots = horizon.round() as usize;
        let n = trace.num_users();
        let mut capacity = vec![Vec::with_capacity(slots); n];
        let mut together = Vec::with_capacity(slots);
        for t in 0..slots {
            let (a, b) = (t as f64, (t + 1) as f64);
            for (u, row) in capacity.iter_mut().enumerate() {
                row.push(trace.capacity.integrate_capacity(u, a, b)?);
            }
            let mut grid = vec![vec![false; n]; n];
            for (u, row) in grid.iter_mut().enumerate() {
                for (m, cell) in row.iter_mut().enumerate() {
                    *cell = trace.mobility.encountered_throughout(u, m, a, b)?;
                }
            }
            together.push(grid);
        }
        Self::new(profiles, capacity, together)
    }

    pub fn slots(&self) -> usize {
        self.together.len()
    }

    pub fn num_users(&self) -> usize {
        self.profiles.len()
    }

    pub fn profiles(&self) -> &[UserProfile] {
        &self.profiles
    }

    /// Link volume of `n` in slot `t` (1-based).
    pub fn slot_capacity(&self, n: UserId, t: usize) -> f64 {
        self.capacity[n][t - 1]
    }

    /// Whether `n` may fetch `m`'s segments during slot `t` (1-based).
    pub fn can_serve(&self, n: UserId, m: UserId, t: usize) -> bool {
        self.profiles[m].is_video_user && (n == m || self.together[t - 1][n][m])
    }

    /// Same instance with every segment cut into `factor` pieces.
    pub fn refine(&self, factor: u32) -> Self {
        Self { profiles: self.profiles.iter().map(|p| p.with_segment_divisor(factor)).collect(), ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::profile;
    use crate::traces::{CapacityTrace, MobilityTrace, Step, StepSeries};

    #[test]
    fn from_trace_integrates_each_slot() {
        let cap = CapacityTrace::new(vec![StepSeries::new(0, vec![Step { t_from: 0.0, t_to: 1.5, value: 2.0 }, Step { t_from: 1.5, t_to: 3.0, value: 4.0 }], 3.0).unwrap()]).unwrap();
        let inst = SlottedInstance::from_trace(&NetworkTrace::new(cap, MobilityTrace::all_together(1, 3.0)).unwrap(), vec![profile(0)]).unwrap();
        assert_eq!(inst.slots(), 3);
        assert_eq!(inst.slot_capacity(0, 1), 2.0);
        assert_eq!(inst.slot_capacity(0, 2), 3.0);
        assert_eq!(inst.slot_capacity(0, 3), 4.0);
    }

    #[test]
    fn fractional_horizon_rejected() {
        let trace = NetworkTrace::new(CapacityTrace::constant(&[1.0], 2.5).unwrap(), MobilityTrace::all_together(1, 2.5)).unwrap();
        assert!(SlottedInstance::from_trace(&trace, vec![profile(0)]).is_err());
    }

    #[test]
    fn refinement_halves_segments() {
        let inst = SlottedInstance::new(vec![profile(0)], vec![vec![1.0]], vec![vec![vec![true]]]).unwrap();
        let r = inst.refine(2);
        assert_eq!(r.profiles()[0].segment_len, 1.0);
        assert_eq!(r.profiles()[0].num_segments(), 20);
    }
}
