use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{CapacityTrace, MobilityTrace, Step, StepSeries, TraceError};

/// Parameters of the hotspot mobility and capacity generators.
///
/// Users alternate between dwelling at a hotspot and travelling through the
/// non-hotspot area (location 0). Both durations are exponential. Capacity is
/// redrawn every `cap_period` seconds: uniformly from `[cap_lo, cap_hi]`, or,
/// with `cap_jitter = Some(s)`, uniformly from `[(1 - s) mu, (1 + s) mu]`
/// around a per-user mean `mu` drawn once from `[cap_lo, cap_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub users: usize,
    pub horizon: f64,
    pub hotspots: u32,
    pub dwell_mean: f64,
    /// 0 disables transitions: users hop between hotspots instantly.
    pub transition_mean: f64,
    pub cap_lo: f64,
    pub cap_hi: f64,
    pub cap_period: f64,
    #[serde(default)]
    pub cap_jitter: Option<f64>,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |m: String| Err(TraceError::InvalidConfig(m));
        if self.users == 0 {
            return bad("users must be > 0".into());
        }
        if !(self.horizon > 0.0) {
            return bad(format!("horizon must be > 0, got {}", self.horizon));
        }
        if self.hotspots == 0 {
            return bad("need at least one hotspot".into());
        }
        if !(self.dwell_mean > 0.0) {
            return bad(format!("dwell_mean must be > 0, got {}", self.dwell_mean));
        }
        if !(self.transition_mean >= 0.0) {
            return bad(format!("transition_mean must be >= 0, got {}", self.transition_mean));
        }
        if !(self.cap_lo >= 0.0) || !(self.cap_lo <= self.cap_hi) {
            return bad(format!("capacity range [{}, {}] invalid", self.cap_lo, self.cap_hi));
        }
        if !(self.cap_period > 0.0) {
            return bad(format!("cap_period must be > 0, got {}", self.cap_period));
        }
        if let Some(s) = self.cap_jitter {
            if !(0.0..=1.0).contains(&s) {
                return bad(format!("cap_jitter must lie in [0, 1], got {s}"));
            }
        }
        Ok(())
    }
}

fn mobility_series(cfg: &SynthConfig, rng: &mut ChaCha8Rng, user: usize) -> Result<StepSeries<u32>, TraceError> {
    let dwell = Exp::new(1.0 / cfg.dwell_mean).map_err(|e| TraceError::InvalidConfig(e.to_string()))?;
    let transit = if cfg.transition_mean > 0.0 {
        Some(Exp::new(1.0 / cfg.transition_mean).map_err(|e| TraceError::InvalidConfig(e.to_string()))?)
    } else {
        None
    };
    let mut steps = Vec::new();
    let mut t = 0.0;
    let mut spot = rng.random_range(1..=cfg.hotspots);
    while t < cfg.horizon {
        let stay = dwell.sample(rng);
        let end = (t + stay).min(cfg.horizon);
        if end > t {
            steps.push(Step { t_from: t, t_to: end, value: spot });
        }
        t = end;
        if t >= cfg.horizon {
            break;
        }
        if let Some(tr) = &transit {
            let end = (t + tr.sample(rng)).min(cfg.horizon);
            if end > t {
                steps.push(Step { t_from: t, t_to: end, value: 0 });
            }
            t = end;
        }
        if cfg.hotspots > 1 {
            let next = rng.random_range(1..cfg.hotspots);
            spot = if next >= spot { next + 1 } else { next };
        }
    }
    StepSeries::new(user, steps, cfg.horizon)
}

fn capacity_series(cfg: &SynthConfig, rng: &mut ChaCha8Rng, user: usize) -> Result<StepSeries<f64>, TraceError> {
    let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let (lo, hi) = match cfg.cap_jitter {
        Some(s) => {
            let mu = draw(rng, cfg.cap_lo, cfg.cap_hi);
            (mu * (1.0 - s), mu * (1.0 + s))
        }
        None => (cfg.cap_lo, cfg.cap_hi),
    };
    let mut steps = Vec::new();
    let mut t = 0.0;
    while t < cfg.horizon {
        let end = (t + cfg.cap_period).min(cfg.horizon);
        let value = draw(rng, lo, hi);
        steps.push(Step { t_from: t, t_to: end, value });
        t = end;
    }
    StepSeries::new(user, steps, cfg.horizon)
}

/// Draws one capacity and one mobility trace. Same `(cfg, seed)`, same traces.
pub fn synth_traces(cfg: &SynthConfig, seed: u64) -> Result<(CapacityTrace, MobilityTrace), TraceError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut caps = Vec::with_capacity(cfg.users);
    let mut mobs = Vec::with_capacity(cfg.users);
    for u in 0..cfg.users {
        caps.push(capacity_series(cfg, &mut rng, u)?);
        mobs.push(mobility_series(cfg, &mut rng, u)?);
    }
    Ok((CapacityTrace::new(caps)?, MobilityTrace::new(mobs, cfg.hotspots)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> SynthConfig {
        SynthConfig { users: 6, horizon: 300.0, hotspots: 4, dwell_mean: 30.0, transition_mean: 10.0, cap_lo: 0.0, cap_hi: 5.0, cap_period: 4.0, cap_jitter: None }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(synth_traces(&cfg(), 7).unwrap(), synth_traces(&cfg(), 7).unwrap());
        assert_ne!(synth_traces(&cfg(), 7).unwrap(), synth_traces(&cfg(), 8).unwrap());
    }

    #[test]
    fn degenerate_capacity_range_is_constant() {
        let (c, _) = synth_traces(&SynthConfig { cap_lo: 3.5, cap_hi: 3.5, ..cfg() }, 1).unwrap();
        for u in 0..c.num_users() {
            assert!(c.series(u).unwrap().steps().iter().all(|s| s.value == 3.5));
        }
    }

    #[test]
    fn single_hotspot_without_transit_keeps_everyone_together() {
        let (_, m) = synth_traces(&SynthConfig { hotspots: 1, transition_mean: 0.0, ..cfg() }, 3).unwrap();
        for n in 0..6 {
            for u in 0..6 {
                assert!(m.encountered_throughout(n, u, 0.0, 300.0).unwrap());
            }
        }
    }

    #[test]
    fn jitter_keeps_each_user_near_its_own_mean() {
        let (c, _) = synth_traces(&SynthConfig { cap_lo: 1.0, cap_hi: 4.0, cap_jitter: Some(0.25), ..cfg() }, 5).unwrap();
        let mut means = Vec::new();
        for u in 0..c.num_users() {
            let v: Vec<f64> = c.series(u).unwrap().steps().iter().map(|s| s.value).collect();
            let (min, max) = v.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
            // All draws fit inside [0.75 mu, 1.25 mu] for a single mu.
            assert!(max * 0.75 <= min * 1.25 + 1e-12);
            means.push(v.iter().sum::<f64>() / v.len() as f64);
        }
        assert!(means.iter().any(|m| *m < 2.0) || means.iter().any(|m| *m > 3.0));
        assert!(synth_traces(&SynthConfig { cap_jitter: Some(1.5), ..cfg() }, 1).is_err());
    }

    #[test]
    fn invalid_configs() {
        assert!(synth_traces(&SynthConfig { cap_lo: 2.0, cap_hi: 1.0, ..cfg() }, 1).is_err());
        assert!(synth_traces(&SynthConfig { dwell_mean: 0.0, ..cfg() }, 1).is_err());
        assert!(synth_traces(&SynthConfig { cap_period: -1.0, ..cfg() }, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn output_always_valid(seed in any::<u64>(), users in 1usize..6, hotspots in 1u32..5, horizon in 1.0..200.0f64) {
            let c = SynthConfig { users, hotspots, horizon, ..cfg() };
            let (cap, mob) = synth_traces(&c, seed).unwrap();
            prop_assert_eq!(cap.num_users(), users);
            prop_assert_eq!(mob.num_users(), users);
            prop_assert!((cap.horizon() - horizon).abs() < 1e-9);
            for u in 0..users {
                prop_assert!(cap.series(u).unwrap().steps().iter().all(|s| (0.0..=5.0).contains(&s.value)));
                prop_assert!(mob.series(u).unwrap().steps().iter().all(|s| s.value <= hotspots));
            }
        }
    }
}
