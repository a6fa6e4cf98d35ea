//! Domain vocabulary shared by every other module: users, bitrate ladders,
//! downloaded segments and the per-downloader / per-owner sequences built
//! from them.
//!
//! Users are identified by a zero-based index. Bitrate levels are one-based
//! (`1..=Z`), so level `0` is always out of range.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance, in seconds (and Mbit where volumes are compared),
/// used by every time comparison in the crate.
pub const TIME_EPS: f64 = 1e-9;

pub type UserId = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("empty ladder")]
    EmptyLadder,
    #[error("ladder not strictly increasing at level {level}")]
    LadderNotIncreasing { level: usize },
    #[error("non-positive bitrate {bitrate} at level {level}")]
    NonPositiveBitrate { level: usize, bitrate: f64 },
    #[error("segment_len must be > 0, got {0}")]
    NonPositiveSegment(f64),
    #[error("buffer_cap < segment_len ({buffer_cap} < {segment_len})")]
    BufferTooSmall { buffer_cap: f64, segment_len: f64 },
    #[error("video_len {video_len} is not a multiple of segment_len {segment_len}")]
    VideoNotSegmentMultiple { video_len: f64, segment_len: f64 },
    #[error("coefficient {name} must be >= 0, got {value}")]
    NegativeCoefficient { name: &'static str, value: f64 },
    #[error("idle helper {user} must have video_len 0")]
    HelperWithVideo { user: UserId },
    #[error("level {level} out of range 1..={levels}")]
    LevelOutOfRange { level: usize, levels: usize },
    #[error("user {0} unknown")]
    UnknownUser(UserId),
    #[error("record owned by {owner} placed in receive sequence of {expected}")]
    WrongOwner { owner: UserId, expected: UserId },
    #[error("owner {owner}: segment numbers not contiguous from 1 (found {found} at position {position})")]
    NonContiguous { owner: UserId, position: usize, found: u32 },
    #[error("owner {owner}: segment {seq_no} received at {t_end} before its predecessor")]
    OutOfOrderReceipt { owner: UserId, seq_no: u32, t_end: f64 },
}

/// Bitrates (Mbps) available for one video, strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BitrateLadder {
    levels: Vec<f64>,
}

impl BitrateLadder {
    pub fn new(levels: Vec<f64>) -> Result<Self, ModelError> {
        if levels.is_empty() {
            return Err(ModelError::EmptyLadder);
        }
        for (i, &r) in levels.iter().enumerate() {
            if !(r > 0.0) {
                return Err(ModelError::NonPositiveBitrate { level: i + 1, bitrate: r });
            }
            if i > 0 && r <= levels[i - 1] {
                return Err(ModelError::LadderNotIncreasing { level: i + 1 });
            }
        }
        Ok(Self { levels })
    }

    /// Number of levels `Z`.
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn bitrate(&self, level: usize) -> Result<f64, ModelError> {
        if level == 0 || level > self.levels.len() {
            return Err(ModelError::LevelOutOfRange { level, levels: self.levels.len() });
        }
        Ok(self.levels[level - 1])
    }

    pub fn top(&self) -> f64 {
        *self.levels.last().expect("ladder is nonempty")
    }

    /// Reverse lookup; exact match only.
    pub fn level_of(&self, bitrate: f64) -> Option<usize> {
        self.levels.iter().position(|&r| r == bitrate).map(|i| i + 1)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }
}

impl TryFrom<Vec<f64>> for BitrateLadder {
    type Error = ModelError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<BitrateLadder> for Vec<f64> {
    fn from(l: BitrateLadder) -> Self {
        l.levels
    }
}

/// Per-user constants: what the user plays and what it costs them to move data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: UserId,
    pub ladder: BitrateLadder,
    /// Playback seconds per segment.
    pub segment_len: f64,
    /// Maximum buffered playback, seconds.
    pub buffer_cap: f64,
    pub theta: f64,
    /// Value lost per Mbps of bitrate decrease between consecutive segments.
    pub phi_qdeg: f64,
    /// Value lost per second of rebuffering.
    pub phi_rebuf: f64,
    pub c_time: f64,
    pub c_data: f64,
    pub w_time: f64,
    pub w_data: f64,
    /// Seconds of source video; 0 for idle helpers.
    pub video_len: f64,
    pub is_video_user: bool,
}

impl UserProfile {
    /// Number of segments in this user's video (0 for helpers).
    pub fn num_segments(&self) -> u32 {
        if !self.is_video_user {
            return 0;
        }
        (self.video_len / self.segment_len).round() as u32
    }

    /// Same user with every segment cut into `factor` pieces.
    pub fn with_segment_divisor(&self, factor: u32) -> Self {
        Self { segment_len: self.segment_len / factor as f64, ..self.clone() }
    }
}

pub fn validate_profile(p: &UserProfile) -> Result<(), ModelError> {
    // Ladder invariants are enforced at construction but a deserialized or
    // hand-built ladder is re-checked here.
    BitrateLadder::new(p.ladder.levels.clone())?;
    if !(p.segment_len > 0.0) {
        return Err(ModelError::NonPositiveSegment(p.segment_len));
    }
    if !(p.buffer_cap >= p.segment_len) {
        return Err(ModelError::BufferTooSmall { buffer_cap: p.buffer_cap, segment_len: p.segment_len });
    }
    for (name, value) in [
        ("theta", p.theta),
        ("phi_qdeg", p.phi_qdeg),
        ("phi_rebuf", p.phi_rebuf),
        ("c_time", p.c_time),
        ("c_data", p.c_data),
        ("w_time", p.w_time),
        ("w_data", p.w_data),
        ("video_len", p.video_len),
    ] {
        if !(value >= 0.0) {
            return Err(ModelError::NegativeCoefficient { name, value });
        }
    }
    if !p.is_video_user && p.video_len != 0.0 {
        return Err(ModelError::HelperWithVideo { user: p.id });
    }
    let ratio = p.video_len / p.segment_len;
    if (ratio - ratio.round()).abs() > 1e-6 {
        return Err(ModelError::VideoNotSegmentMultiple { video_len: p.video_len, segment_len: p.segment_len });
    }
    Ok(())
}

/// Mbit carried by one segment of `owner`'s video at `level`.
pub fn segment_volume(owner: &UserProfile, level: usize) -> Result<f64, ModelError> {
    Ok(owner.ladder.bitrate(level)? * owner.segment_len)
}

/// One segment downloaded over a cellular link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownloadRecord {
    pub downloader: UserId,
    pub owner: UserId,
    pub level: usize,
    pub bitrate: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Position of this segment in the owner's playback order, from 1.
    pub owner_seq_no: u32,
}

impl DownloadRecord {
    pub fn volume(&self, owner: &UserProfile) -> f64 {
        self.bitrate * owner.segment_len
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DownloadSequence {
    pub downloader: UserId,
    pub records: Vec<DownloadRecord>,
}

impl DownloadSequence {
    pub fn new(downloader: UserId) -> Self {
        Self { downloader, records: Vec::new() }
    }
}

/// Segments played by one owner, in playback order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReceiveSequence {
    pub owner: UserId,
    pub records: Vec<DownloadRecord>,
}

impl ReceiveSequence {
    /// Collects every record owned by `owner` from the downloading sequences
    /// and orders it by playback position.
    pub fn derive(owner: UserId, downloads: &[DownloadSequence]) -> Result<Self, ModelError> {
        let mut records: Vec<DownloadRecord> = downloads
            .iter()
            .flat_map(|s| s.records.iter())
            .filter(|r| r.owner == owner)
            .cloned()
            .collect();
        records.sort_by_key(|r| r.owner_seq_no);
        let seq = Self { owner, records };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, r) in self.records.iter().enumerate() {
            if r.owner != self.owner {
                return Err(ModelError::WrongOwner { owner: r.owner, expected: self.owner });
            }
            if r.owner_seq_no as usize != i + 1 {
                return Err(ModelError::NonContiguous { owner: self.owner, position: i + 1, found: r.owner_seq_no });
            }
            if i > 0 && r.t_end + TIME_EPS < self.records[i - 1].t_end {
                return Err(ModelError::OutOfOrderReceipt { owner: self.owner, seq_no: r.owner_seq_no, t_end: r.t_end });
            }
        }
        Ok(())
    }

    pub fn bitrates(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.bitrate)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Welfare of one user split into its components.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WelfareBreakdown {
    pub value: f64,
    pub loss_qdeg: f64,
    pub loss_rebuf: f64,
    pub energy_cell: f64,
    pub energy_wifi: f64,
    pub utility: f64,
    pub cost: f64,
    pub welfare: f64,
}

impl WelfareBreakdown {
    pub fn compose(value: f64, loss_qdeg: f64, loss_rebuf: f64, energy_cell: f64, energy_wifi: f64) -> Self {
        let utility = value - loss_qdeg - loss_rebuf;
        let cost = energy_cell + energy_wifi;
        Self { value, loss_qdeg, loss_rebuf, energy_cell, energy_wifi, utility, cost, welfare: utility - cost }
    }
}
