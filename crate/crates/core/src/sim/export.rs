use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{MessageStats, SimResult};
use crate::model::{UserId, WelfareBreakdown};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSummary {
    pub user: UserId,
    pub welfare: WelfareBreakdown,
    pub avg_bitrate_mbps: Option<f64>,
    pub rebuffer_s: f64,
    pub received: u32,
    pub downloads_for_others: u32,
}

/// The per-run JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub social_welfare: f64,
    pub avg_bitrate_mbps: Option<f64>,
    pub rebuffer_s: f64,
    pub downloads_for_others: u32,
    pub messages: MessageStats,
    pub users: Vec<UserSummary>,
}

impl From<&SimResult> for SimSummary {
    fn from(r: &SimResult) -> Self {
        let users: Vec<UserSummary> = r
            .users
            .iter()
            .zip(&r.welfare)
            .enumerate()
            .map(|(n, (m, w))| UserSummary {
                user: n,
                welfare: *w,
                avg_bitrate_mbps: m.avg_bitrate,
                rebuffer_s: m.rebuffer_s,
                received: m.received,
                downloads_for_others: m.downloads_for_others,
            })
            .collect();
        Self {
            social_welfare: r.social_welfare,
            avg_bitrate_mbps: r.avg_bitrate(),
            rebuffer_s: r.total_rebuffer(),
            downloads_for_others: users.iter().map(|u| u.downloads_for_others).sum(),
            messages: r.messages,
            users,
        }
    }
}

#[derive(Serialize)]
struct RecordRow {
    downloader: UserId,
    owner: UserId,
    seq_no: u32,
    level: usize,
    bitrate: f64,
    t_start: f64,
    t_end: f64,
}

/// One row per download, in downloader then time order.
pub fn write_records_csv<W: Write>(res: &SimResult, writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for r in res.records() {
        w.serialize(RecordRow { downloader: r.downloader, owner: r.owner, seq_no: r.owner_seq_no, level: r.level, bitrate: r.bitrate, t_start: r.t_start, t_end: r.t_end })?;
    }
    w.flush()?;
    Ok(())
}
