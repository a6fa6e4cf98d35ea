use serde::{Deserialize, Serialize};

use crate::model::{UserId, UserProfile, TIME_EPS};

/// What a scheduler tells the engine to do next.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SchedulerDecision {
    Download { owner: UserId, level: usize },
    /// Re-decide after this many seconds.
    Wait(f64),
    /// Nothing to do until the surroundings change.
    Idle,
}

/// One user as seen by a decider in the same group.
#[derive(Debug, Clone, PartialEq)]
pub struct PeerState<'a> {
    pub id: UserId,
    pub profile: &'a UserProfile,
    /// Seconds of video buffered right now.
    pub buffer: f64,
    /// Segments reserved for this user and still being downloaded.
    pub in_flight: u32,
    /// Bitrate of the segment the next one will follow: the newest
    /// reservation while any is in flight, else the last received.
    pub last_bitrate: Option<f64>,
    pub received: u32,
    /// Segments neither received nor reserved.
    pub remaining: u32,
}

impl PeerState<'_> {
    pub fn is_needy(&self) -> bool {
        self.profile.is_video_user && self.remaining > 0
    }

    pub fn started(&self) -> bool {
        self.received > 0
    }

    /// Playing and still waiting on segments, so a delay can stall it.
    pub fn can_rebuffer(&self) -> bool {
        self.started() && self.received < self.profile.num_segments()
    }

    /// Buffer once every reserved segment has landed.
    pub fn projected_buffer(&self) -> f64 {
        self.buffer + self.in_flight as f64 * self.profile.segment_len
    }

    /// How far one more segment would push the projected buffer past `Q`.
    pub fn overflow(&self) -> f64 {
        self.projected_buffer() + self.profile.segment_len - self.profile.buffer_cap
    }

    pub fn has_room(&self) -> bool {
        self.overflow() <= TIME_EPS
    }
}

/// Local state available to user `decider` at `clock`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerView<'a> {
    pub decider: UserId,
    pub clock: f64,
    /// Current cellular capacity of the decider, Mbps.
    pub capacity: f64,
    /// Decider and every user it currently encounters, ascending by id.
    pub peers: Vec<PeerState<'a>>,
    /// Throughput (Mbps) of the decider's completed downloads, oldest first.
    pub throughput_history: &'a [f64],
}

impl<'a> SchedulerView<'a> {
    pub fn peer(&self, id: UserId) -> Option<&PeerState<'a>> {
        self.peers.iter().find(|p| p.id == id)
    }

    pub fn me(&self) -> Option<&PeerState<'a>> {
        self.peer(self.decider)
    }

    /// Video users in the group with segments left to assign.
    pub fn candidates(&self) -> impl Iterator<Item = &PeerState<'a>> {
        self.peers.iter().filter(|p| p.is_needy())
    }

    /// Candidates whose buffer can take one more segment.
    pub fn feasible_owners(&self) -> impl Iterator<Item = &PeerState<'a>> {
        self.candidates().filter(|p| p.has_room())
    }

    /// Time until the first candidate buffer can take one more segment.
    pub fn wait_time(&self) -> Option<f64> {
        self.candidates().map(|p| p.overflow()).min_by(f64::total_cmp)
    }

    /// The decision every policy falls back on when nobody can be served.
    pub fn blocked_decision(&self) -> SchedulerDecision {
        match self.wait_time() {
            Some(t) => SchedulerDecision::Wait(t.max(0.0)),
            None => SchedulerDecision::Idle,
        }
    }
}
