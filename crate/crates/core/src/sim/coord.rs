use serde::{Deserialize, Serialize};

use crate::model::UserId;

/// Counters of the READY/ACK handshake and of sleep transitions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageStats {
    pub ready: u64,
    pub ack: u64,
    /// ACKs a needy user sends unprompted: at start-up, or on meeting a
    /// sleeping downloader.
    pub virtual_ack: u64,
    pub sleep: u64,
    pub awake: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Ready,
    Ack,
    VirtualAck,
    Sleep,
    Awake,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MessageEvent {
    pub t: f64,
    pub user: UserId,
    pub kind: MessageKind,
}

impl MessageStats {
    pub(crate) fn bump(&mut self, kind: MessageKind, n: u64) {
        let c = match kind {
            MessageKind::Ready => &mut self.ready,
            MessageKind::Ack => &mut self.ack,
            MessageKind::VirtualAck => &mut self.virtual_ack,
            MessageKind::Sleep => &mut self.sleep,
            MessageKind::Awake => &mut self.awake,
        };
        *c += n;
    }
}
