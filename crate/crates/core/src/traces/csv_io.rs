use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CapacityTrace, MobilityTrace, Step, StepSeries, TraceError};
use crate::model::UserId;

#[derive(Debug, Serialize, Deserialize)]
struct CapacityRow {
    user_id: UserId,
    t_from: f64,
    t_to: f64,
    capacity_mbps: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct MobilityRow {
    user_id: UserId,
    t_from: f64,
    t_to: f64,
    hotspot_id: u32,
}

/// Groups rows by user and checks ids run 0..N without holes.
fn group<V: Copy + PartialEq>(rows: Vec<(UserId, Step<V>)>) -> Result<(Vec<StepSeries<V>>, f64), TraceError> {
    let horizon = rows.iter().map(|(_, s)| s.t_to).fold(0.0, f64::max);
    let mut by_user: BTreeMap<UserId, Vec<Step<V>>> = BTreeMap::new();
    for (u, s) in rows {
        by_user.entry(u).or_default().push(s);
    }
    let n = by_user.keys().next_back().map(|&u| u + 1).unwrap_or(0);
    let mut out = Vec::with_capacity(n);
    for u in 0..n {
        let steps = by_user.remove(&u).ok_or_else(|| TraceError::Coverage { user: u, detail: "no rows".into() })?;
        out.push(StepSeries::new(u, steps, horizon)?);
    }
    Ok((out, horizon))
}

pub fn read_capacity_csv<R: Read>(reader: R) -> Result<CapacityTrace, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let r: CapacityRow = rec?;
        rows.push((r.user_id, Step { t_from: r.t_from, t_to: r.t_to, value: r.capacity_mbps }));
    }
    let (series, _) = group(rows)?;
    CapacityTrace::new(series)
}

pub fn read_mobility_csv<R: Read>(reader: R) -> Result<MobilityTrace, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let r: MobilityRow = rec?;
        rows.push((r.user_id, Step { t_from: r.t_from, t_to: r.t_to, value: r.hotspot_id }));
    }
    let hotspots = rows.iter().map(|(_, s)| s.value).max().unwrap_or(0);
    let (series, _) = group(rows)?;
    MobilityTrace::new(series, hotspots)
}

pub fn load_capacity_csv(path: impl AsRef<Path>) -> Result<CapacityTrace, TraceError> {
    read_capacity_csv(std::fs::File::open(path)?)
}

pub fn load_mobility_csv(path: impl AsRef<Path>) -> Result<MobilityTrace, TraceError> {
    read_mobility_csv(std::fs::File::open(path)?)
}

pub fn write_capacity_csv<W: Write>(trace: &CapacityTrace, writer: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(writer);
    for u in 0..trace.num_users() {
        for s in trace.series(u)?.steps() {
            w.serialize(CapacityRow { user_id: u, t_from: s.t_from, t_to: s.t_to, capacity_mbps: s.value })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_mobility_csv<W: Write>(trace: &MobilityTrace, writer: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(writer);
    for u in 0..trace.num_users() {
        for s in trace.series(u)?.steps() {
            w.serialize(MobilityRow { user_id: u, t_from: s.t_from, t_to: s.t_to, hotspot_id: s.value })?;
        }
    }
    w.flush()?;
    Ok(())
}
