use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::presets::{MobilityPreset, DENSE_SHORT, SPARSE_LONG};
use super::HarnessError;
use crate::model::{validate_profile, BitrateLadder, UserId, UserProfile};
use crate::schedulers::{BaselineConfig, LyapunovConfig, SchedulerKind};
use crate::sim::RunConfig;

/// Where user locations come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MobilityRegime {
    /// Everyone shares one hotspot for the whole run.
    FullCoop,
    /// Everyone sits alone at a private hotspot.
    NonCoop,
    DenseShort,
    SparseLong,
    Synthetic { hotspots: u32, dwell_mean: f64, transition_mean: f64 },
    /// Both traces read from CSV; the capacity range settings are ignored.
    Csv { capacity: PathBuf, mobility: PathBuf },
}

impl MobilityRegime {
    pub fn name(&self) -> &'static str {
        match self {
            Self::FullCoop => "full-coop",
            Self::NonCoop => "non-coop",
            Self::DenseShort => "dense-short",
            Self::SparseLong => "sparse-long",
            Self::Synthetic { .. } => "synthetic",
            Self::Csv { .. } => "csv",
        }
    }

    /// Generator parameters, for the regimes that draw mobility.
    pub fn preset(&self) -> Option<MobilityPreset> {
        match *self {
            Self::DenseShort => Some(DENSE_SHORT),
            Self::SparseLong => Some(SPARSE_LONG),
            Self::Synthetic { hotspots, dwell_mean, transition_mean } => Some(MobilityPreset { hotspots, dwell_mean, transition_mean }),
            _ => None,
        }
    }
}

/// Per-user streaming and cost constants shared by every user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileParams {
    pub video_len: f64,
    pub segment_len: f64,
    pub buffer_cap: f64,
    pub ladder: Vec<f64>,
    pub theta: f64,
    pub phi_qdeg: f64,
    pub phi_rebuf: f64,
    pub c_time: f64,
    pub c_data: f64,
    pub w_time: f64,
    pub w_data: f64,
}

impl Default for ProfileParams {
    fn default() -> Self {
        Self {
            video_len: 500.0,
            segment_len: 2.0,
            buffer_cap: 40.0,
            ladder: vec![0.2, 0.4, 0.7, 1.3, 2.3],
            theta: 1.0,
            phi_qdeg: 1.0,
            phi_rebuf: 1.0,
            c_time: 0.5,
            c_data: 0.1,
            w_time: 0.0,
            w_data: 0.05,
        }
    }
}

impl ProfileParams {
    pub fn profile(&self, id: UserId, is_video_user: bool) -> Result<UserProfile, HarnessError> {
        let ladder = BitrateLadder::new(self.ladder.clone()).map_err(|e| HarnessError::Config(e.to_string()))?;
        let p = UserProfile {
            id,
            ladder,
            segment_len: self.segment_len,
            buffer_cap: self.buffer_cap,
            theta: self.theta,
            phi_qdeg: self.phi_qdeg,
            phi_rebuf: self.phi_rebuf,
            c_time: self.c_time,
            c_data: self.c_data,
            w_time: self.w_time,
            w_data: self.w_data,
            video_len: if is_video_user { self.video_len } else { 0.0 },
            is_video_user,
        };
        validate_profile(&p).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(p)
    }
}

/// Lyapunov knobs other than λ, which lives at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovParams {
    pub skip_unprofitable: bool,
    pub retry: f64,
}

impl Default for LyapunovParams {
    fn default() -> Self {
        let d = LyapunovConfig::default();
        Self { skip_unprofitable: d.skip_unprofitable, retry: d.retry }
    }
}

/// Handshake settings; cooperation itself is switched per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoordinationParams {
    pub enabled: bool,
    pub sleep_window: f64,
    pub ready_retry: f64,
}

impl Default for CoordinationParams {
    fn default() -> Self {
        let d = RunConfig::default();
        Self { enabled: d.coordination, sleep_window: d.sleep_window, ready_retry: d.ready_retry }
    }
}

/// The down-scoped instance used for the bound gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundParams {
    pub enabled: bool,
    /// The first `users` users of each repetition...
    pub users: usize,
    /// ...over the first `slots` seconds.
    pub slots: usize,
    /// Segment halvings for the upper estimate.
    pub refine: u32,
    /// Ladder used on the micro-instance; empty keeps the scenario ladder.
    pub ladder: Vec<f64>,
    pub max_states: usize,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self { enabled: false, users: 2, slots: 4, refine: 2, ladder: vec![0.2, 0.7, 2.3], max_states: 2_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub repetitions: u32,
    pub users: usize,
    /// Share of users that stream; the rest only help.
    pub video_fraction: f64,
    /// Cellular capacity range, Mbps.
    pub cap_lo: f64,
    pub cap_hi: f64,
    /// Seconds between capacity redraws.
    pub cap_period: f64,
    /// Per-user mean capacity with this relative fluctuation; absent redraws
    /// every period from the whole range.
    pub cap_jitter: Option<f64>,
    pub horizon: f64,
    pub mobility: MobilityRegime,
    pub schedulers: Vec<String>,
    pub lambda: f64,
    pub profile: ProfileParams,
    pub lyapunov: LyapunovParams,
    pub baseline: BaselineConfig,
    pub coordination: CoordinationParams,
    pub bound: BoundParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            seed: 1,
            repetitions: 1,
            users: 50,
            video_fraction: 0.6,
            cap_lo: 0.0,
            cap_hi: 2.5,
            cap_period: 10.0,
            cap_jitter: Some(0.5),
            horizon: 600.0,
            mobility: MobilityRegime::DenseShort,
            schedulers: vec!["lyapunov".into(), "buffer-based".into(), "prediction-based".into()],
            lambda: LyapunovConfig::default().lambda,
            profile: ProfileParams::default(),
            lyapunov: LyapunovParams::default(),
            baseline: BaselineConfig::default(),
            coordination: CoordinationParams::default(),
            bound: BoundParams::default(),
        }
    }
}

/// Parameters a sweep can vary.
pub const SWEEP_AXES: &[&str] = &["capacity-lo", "capacity-hi", "lambda", "video-fraction", "users", "horizon", "buffer-cap", "seed"];

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // CSV paths are relative to the config file.
        if let MobilityRegime::Csv { capacity, mobility } = &mut cfg.mobility {
            let base = path.parent().unwrap_or(Path::new("."));
            *capacity = base.join(&*capacity);
            *mobility = base.join(&*mobility);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.users == 0 {
            return bad("users must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.video_fraction) {
            return bad(format!("video_fraction {} outside [0, 1]", self.video_fraction));
        }
        if !(self.cap_lo >= 0.0 && self.cap_lo <= self.cap_hi && self.cap_hi.is_finite()) {
            return bad(format!("capacity range [{}, {}] invalid", self.cap_lo, self.cap_hi));
        }
        if !(self.cap_period > 0.0) {
            return bad(format!("cap_period must be positive, got {}", self.cap_period));
        }
        if let Some(j) = self.cap_jitter {
            if !(0.0..=1.0).contains(&j) {
                return bad(format!("cap_jitter {j} outside [0, 1]"));
            }
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if self.schedulers.is_empty() {
            return bad("no schedulers configured".into());
        }
        for s in &self.schedulers {
            if SchedulerKind::from_name(s).is_none() {
                return bad(format!("unknown scheduler {s:?}"));
            }
        }
        if let Some(p) = self.mobility.preset() {
            if p.hotspots == 0 || !(p.dwell_mean > 0.0) || !(p.transition_mean >= 0.0) {
                return bad(format!("invalid mobility parameters {p:?}"));
            }
        }
        self.profile.profile(0, true)?;
        if self.bound.enabled {
            if self.bound.users == 0 || self.bound.slots == 0 {
                return bad("bound needs at least one user and one slot".into());
            }
            if self.bound.refine > 4 {
                return bad(format!("bound refine {} too deep (max 4)", self.bound.refine));
            }
            if !self.bound.ladder.is_empty() {
                BitrateLadder::new(self.bound.ladder.clone()).map_err(|e| HarnessError::Config(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// The configured schedulers with λ and the other knobs applied.
    pub fn scheduler_kinds(&self) -> Vec<SchedulerKind> {
        self.schedulers
            .iter()
            .filter_map(|s| SchedulerKind::from_name(s))
            .map(|mut k| {
                match &mut k {
                    SchedulerKind::Lyapunov(c) | SchedulerKind::GreedyNoncoop(c) => {
                        *c = LyapunovConfig { lambda: self.lambda, skip_unprofitable: self.lyapunov.skip_unprofitable, retry: self.lyapunov.retry };
                    }
                    SchedulerKind::BufferBased(c) | SchedulerKind::PredictionBased(c) => *c = self.baseline.clone(),
                }
                k
            })
            .collect()
    }

    pub fn run_config(&self, cooperative: bool) -> RunConfig {
        RunConfig {
            cooperative,
            coordination: self.coordination.enabled,
            sleep_window: self.coordination.sleep_window,
            ready_retry: self.coordination.ready_retry,
            log_messages: false,
        }
    }

    /// Copy with one sweep axis set to `value`.
    pub fn with_axis(&self, axis: &str, value: f64) -> Result<Self, HarnessError> {
        let mut c = self.clone();
        match axis {
            "capacity-lo" => c.cap_lo = value,
            "capacity-hi" => c.cap_hi = value,
            "lambda" => c.lambda = value,
            "video-fraction" => c.video_fraction = value,
            "users" => c.users = whole(axis, value)? as usize,
            "horizon" => c.horizon = value,
            "buffer-cap" => c.profile.buffer_cap = value,
            "seed" => c.seed = whole(axis, value)?,
            _ => return Err(HarnessError::Config(format!("unknown sweep axis {axis:?} (known: {})", SWEEP_AXES.join(", ")))),
        }
        c.name = format!("{}:{axis}={value}", self.name);
        c.validate()?;
        Ok(c)
    }
}

fn whole(axis: &str, v: f64) -> Result<u64, HarnessError> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as u64)
    } else {
        Err(HarnessError::Config(format!("{axis} needs a whole number, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let d = ScenarioConfig::default();
        assert_eq!(ScenarioConfig::from_toml(&d.to_toml()).unwrap(), d);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let c = ScenarioConfig::from_toml("users = 8\n[mobility]\nkind = \"full-coop\"\n[profile]\nvideo_len = 60.0\n").unwrap();
        assert_eq!(c.users, 8);
        assert_eq!(c.mobility, MobilityRegime::FullCoop);
        assert_eq!(c.profile.video_len, 60.0);
        assert_eq!(c.profile.segment_len, 2.0);
    }

    #[test]
    fn invalid_values_rejected() {
        for text in ["video_fraction = 1.5", "cap_lo = 3.0\ncap_hi = 1.0", "repetitions = 0", "schedulers = [\"magic\"]", "bogus = 1", "[mobility]\nkind = \"teleport\""] {
            assert!(matches!(ScenarioConfig::from_toml(text), Err(HarnessError::Config(_))), "{text}");
        }
    }

    #[test]
    fn lambda_reaches_lyapunov_only() {
        let c = ScenarioConfig { lambda: 7.0, ..Default::default() };
        let kinds = c.scheduler_kinds();
        assert!(matches!(&kinds[0], SchedulerKind::Lyapunov(l) if l.lambda == 7.0));
        assert!(matches!(&kinds[1], SchedulerKind::BufferBased(_)));
    }

    #[test]
    fn sweep_axes() {
        let c = ScenarioConfig::default();
        assert_eq!(c.with_axis("capacity-hi", 8.0).unwrap().cap_hi, 8.0);
        assert_eq!(c.with_axis("lambda", 0.1).unwrap().lambda, 0.1);
        assert!(c.with_axis("colour", 1.0).is_err());
        assert!(c.with_axis("users", 2.5).is_err());
    }
}
