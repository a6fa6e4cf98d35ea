//! Post-run checks that re-derive every feasibility constraint from the
//! emitted records and the traces alone.

use std::collections::BTreeMap;

use thiserror::Error;

use super::SimResult;
use crate::model::{DownloadRecord, DownloadSequence, UserId, UserProfile, TIME_EPS};
use crate::traces::{NetworkTrace, TraceError};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("downloader {downloader}, record {index}: {detail}")]
    Timing { downloader: UserId, index: usize, detail: String },
    #[error("downloader {downloader}, record {index}: needs {volume} Mbit, link carried {carried}")]
    Capacity { downloader: UserId, index: usize, volume: f64, carried: f64 },
    #[error("downloader {downloader} and owner {owner} apart during [{t_start}, {t_end}]")]
    Encounter { downloader: UserId, owner: UserId, t_start: f64, t_end: f64 },
    #[error("record {index} of downloader {downloader}: {detail}")]
    Record { downloader: UserId, index: usize, detail: String },
    #[error("owner {owner}: {detail}")]
    Receipt { owner: UserId, detail: String },
    #[error("owner {owner}, segment {seq_no}: buffer {level} outside [0, {cap}]")]
    Buffer { owner: UserId, seq_no: u32, level: f64, cap: f64 },
    #[error("user {user} downloaded {downloaded} Mbit but its link offers {available}")]
    Conservation { user: UserId, downloaded: f64, available: f64 },
    #[error("owner {owner}: engine stall log {engine:?} differs from replay {replay:?}")]
    Rebuffer { owner: UserId, engine: Vec<(u32, f64)>, replay: Vec<(u32, f64)> },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

fn vol_tol(v: f64) -> f64 {
    TIME_EPS * v.abs().max(1.0)
}

fn check_downloader(n: UserId, recs: &[DownloadRecord], trace: &NetworkTrace, profiles: &[UserProfile]) -> Result<f64, AuditError> {
    let horizon = trace.horizon();
    let mut total = 0.0;
    for (i, r) in recs.iter().enumerate() {
        let timing = |detail: String| AuditError::Timing { downloader: n, index: i, detail };
        if r.downloader != n {
            return Err(timing(format!("record filed under {n} but made by {}", r.downloader)));
        }
        if r.t_start < -TIME_EPS || r.t_end > horizon + TIME_EPS || r.t_end < r.t_start - TIME_EPS {
            return Err(timing(format!("interval [{}, {}] invalid for horizon {horizon}", r.t_start, r.t_end)));
        }
        if i > 0 && recs[i - 1].t_end > r.t_start + TIME_EPS {
            return Err(timing(format!("starts at {} before previous ends at {}", r.t_start, recs[i - 1].t_end)));
        }
        let owner = profiles.get(r.owner).ok_or_else(|| AuditError::Record { downloader: n, index: i, detail: format!("unknown owner {}", r.owner) })?;
        match owner.ladder.bitrate(r.level) {
            Ok(b) if b == r.bitrate => {}
            _ => return Err(AuditError::Record { downloader: n, index: i, detail: format!("bitrate {} does not match level {}", r.bitrate, r.level) }),
        }
        let volume = r.bitrate * owner.segment_len;
        let carried = trace.capacity.integrate_capacity(n, r.t_start.max(0.0), r.t_end.min(horizon))?;
        if carried + vol_tol(volume) < volume {
            return Err(AuditError::Capacity { downloader: n, index: i, volume, carried });
        }
        if !trace.mobility.encountered_throughout(n, r.owner, r.t_start.max(0.0), r.t_end.min(horizon))? {
            return Err(AuditError::Encounter { downloader: n, owner: r.owner, t_start: r.t_start, t_end: r.t_end });
        }
        total += volume;
    }
    Ok(total)
}

/// Replays one owner's buffer from its receipts.
fn replay(owner: &UserProfile, recs: &[&DownloadRecord]) -> Result<Vec<(u32, f64)>, AuditError> {
    let mut stalls = Vec::new();
    let mut q = 0.0;
    let mut last = 0.0;
    for (k, r) in recs.iter().enumerate() {
        if k > 0 {
            let gap = r.t_end - last;
            if gap > q {
                stalls.push((r.owner_seq_no, gap - q));
            }
            q = (q - gap).max(0.0);
        }
        q += owner.segment_len;
        last = r.t_end;
        if q > owner.buffer_cap + TIME_EPS {
            return Err(AuditError::Buffer { owner: owner.id, seq_no: r.owner_seq_no, level: q, cap: owner.buffer_cap });
        }
    }
    Ok(stalls)
}

fn receipts<'r>(downloads: &'r [DownloadSequence], profiles: &[UserProfile]) -> Result<BTreeMap<UserId, Vec<&'r DownloadRecord>>, AuditError> {
    let mut by_owner: BTreeMap<UserId, Vec<&DownloadRecord>> = BTreeMap::new();
    for r in downloads.iter().flat_map(|d| &d.records) {
        by_owner.entry(r.owner).or_default().push(r);
    }
    for (&owner, recs) in by_owner.iter_mut() {
        let p = profiles.get(owner).ok_or_else(|| AuditError::Receipt { owner, detail: "no profile".into() })?;
        recs.sort_by_key(|r| r.owner_seq_no);
        for (k, r) in recs.iter().enumerate() {
            if r.owner_seq_no as usize != k + 1 {
                return Err(AuditError::Receipt { owner, detail: format!("segment numbers not 1..n (found {} at {})", r.owner_seq_no, k + 1) });
            }
            if k > 0 && r.t_end + TIME_EPS < recs[k - 1].t_end {
                return Err(AuditError::Receipt { owner, detail: format!("segment {} lands before its predecessor", r.owner_seq_no) });
            }
        }
        if recs.len() as u32 > p.num_segments() {
            return Err(AuditError::Receipt { owner, detail: format!("{} segments received of {}", recs.len(), p.num_segments()) });
        }
    }
    Ok(by_owner)
}

/// Checks timing, capacity, encounter and buffer constraints, plus per-link
/// volume conservation, on a finished run.
pub fn audit(res: &SimResult, trace: &NetworkTrace, profiles: &[UserProfile]) -> Result<(), AuditError> {
    audit_downloads(&res.downloads, trace, profiles)
}

/// [`audit`] for download sequences that did not come from the engine.
/// `downloads[n]` must belong to user `n`.
pub fn audit_downloads(downloads: &[DownloadSequence], trace: &NetworkTrace, profiles: &[UserProfile]) -> Result<(), AuditError> {
    for (n, seq) in downloads.iter().enumerate() {
        let downloaded = check_downloader(n, &seq.records, trace, profiles)?;
        let available = trace.capacity.integrate_capacity(n, 0.0, trace.horizon())?;
        if downloaded > available + vol_tol(available) {
            return Err(AuditError::Conservation { user: n, downloaded, available });
        }
    }
    for (owner, recs) in receipts(downloads, profiles)? {
        replay(&profiles[owner], &recs)?;
    }
    Ok(())
}

/// Compares the stall log kept during the run with a replay of the receipts.
pub fn audit_rebuffering(res: &SimResult, profiles: &[UserProfile]) -> Result<(), AuditError> {
    let by_owner = receipts(&res.downloads, profiles)?;
    for (owner, log) in res.rebuffer.iter().enumerate() {
        let replayed = match by_owner.get(&owner) {
            Some(recs) => replay(&profiles[owner], recs)?,
            None => Vec::new(),
        };
        // Compare per segment, treating a missing entry as zero stall.
        let mut diff: BTreeMap<u32, f64> = BTreeMap::new();
        for &(k, d) in &replayed {
            *diff.entry(k).or_default() += d;
        }
        for &(k, d) in &log.entries {
            *diff.entry(k).or_default() -= d;
        }
        let same = diff.values().all(|d| d.abs() <= TIME_EPS);
        if !same {
            return Err(AuditError::Rebuffer { owner, engine: log.entries.clone(), replay: replayed });
        }
    }
    Ok(())
}
