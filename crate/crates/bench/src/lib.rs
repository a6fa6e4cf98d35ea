//! Fixtures shared by the benchmarks.

use coopstream::bound::SlottedInstance;
use coopstream::harness::{build_profiles, build_trace, micro_instance, ScenarioConfig};
use coopstream::{NetworkTrace, UserProfile};

/// Default scenario shrunk to `users` over `horizon` seconds.
pub fn scenario(users: usize, horizon: f64, seed: u64) -> (ScenarioConfig, NetworkTrace, Vec<UserProfile>) {
    let cfg = ScenarioConfig { users, horizon, seed, ..Default::default() };
    let trace = build_trace(&cfg, seed).expect("synthetic trace");
    let profiles = build_profiles(&cfg, seed).expect("profiles");
    (cfg, trace, profiles)
}

/// Slotted instance over the first `users` users and `slots` seconds, every user watching.
pub fn slotted(users: usize, slots: usize, seed: u64) -> SlottedInstance {
    let mut cfg = ScenarioConfig { users: users.max(2), horizon: 60.0, seed, video_fraction: 1.0, ..Default::default() };
    cfg.bound.users = users;
    cfg.bound.slots = slots;
    let trace = build_trace(&cfg, seed).expect("synthetic trace");
    let profiles = build_profiles(&cfg, seed).expect("profiles");
    micro_instance(&cfg, &trace, &profiles).expect("micro instance").expect("non-empty prefix").2
}
