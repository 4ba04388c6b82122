use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{csv_error, malformed};
use crate::error::{Error, Result};
use crate::model::{FrameState, LaneLayout, Scene, VehicleClass, VehicleTrack};

pub const GENERIC_HEADER: [&str; 12] =
    ["frame", "vehicle_id", "x", "y", "vx", "vy", "ax", "ay", "width", "length", "lane_id", "vehicle_class"];

/// One row of the generic trajectory table. Units are m, m/s and m/s²;
/// coordinates are raw (not canonicalized) geometric centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericTrajectoryRow {
    pub frame: i64,
    pub vehicle_id: u32,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub ay: f64,
    pub width: f64,
    pub length: f64,
    pub lane_id: i32,
    pub vehicle_class: VehicleClass,
}

impl GenericTrajectoryRow {
    fn is_finite(&self) -> bool {
        [self.x, self.y, self.vx, self.vy, self.ax, self.ay, self.width, self.length].iter().all(|v| v.is_finite())
    }
}

struct PendingTrack {
    class: VehicleClass,
    width: f64,
    length: f64,
    states: Vec<FrameState>,
}

/// Parses a generic trajectory CSV. Rows may come in any order; they are
/// grouped by vehicle and sorted by frame.
pub fn parse_generic<R: Read>(input: R, layout: &LaneLayout, frame_rate: f64) -> Result<Scene> {
    parse_generic_named(input, layout, frame_rate, "generic")
}

/// Like [`parse_generic`] with an explicit recording id.
pub fn parse_generic_named<R: Read>(
    input: R,
    layout: &LaneLayout,
    frame_rate: f64,
    recording_id: &str,
) -> Result<Scene> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(csv_error)?.clone();
    for name in GENERIC_HEADER {
        if !headers.iter().any(|h| h == name) {
            return Err(Error::MissingColumn(name.to_string()));
        }
    }

    let mut pending: BTreeMap<u32, PendingTrack> = BTreeMap::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let row: GenericTrajectoryRow =
            record.deserialize(Some(&headers)).map_err(|e| malformed(line, e.to_string()))?;
        if !row.is_finite() {
            return Err(malformed(line, "non-finite numeric value"));
        }
        if !seen.insert((row.vehicle_id, row.frame)) {
            return Err(malformed(
                line,
                format!("duplicate row for vehicle {} at frame {}", row.vehicle_id, row.frame),
            ));
        }
        let entry = pending.entry(row.vehicle_id).or_insert_with(|| PendingTrack {
            class: row.vehicle_class,
            width: row.width,
            length: row.length,
            states: Vec::new(),
        });
        if entry.class != row.vehicle_class || entry.width != row.width || entry.length != row.length {
            return Err(malformed(line, format!("vehicle {} changes class or dimensions", row.vehicle_id)));
        }
        entry.states.push(FrameState {
            frame: row.frame,
            x: row.x,
            y: row.y,
            vx: row.vx,
            vy: row.vy,
            ax: row.ax,
            ay: row.ay,
            lane_id: row.lane_id,
        });
    }

    let mut tracks = Vec::with_capacity(pending.len());
    for (id, mut p) in pending {
        p.states.sort_by_key(|s| s.frame);
        tracks.push(VehicleTrack::new(id, p.class, p.width, p.length, frame_rate, p.states)?);
    }
    Scene::new(recording_id, layout.clone(), tracks, frame_rate)
}

/// Writes `scene` in the generic format, in raw coordinates, ordered by
/// frame and then vehicle id.
pub fn write_generic<W: Write>(scene: &Scene, output: W) -> Result<()> {
    let mut rows = Vec::new();
    for track in scene.tracks().values() {
        let raw = track.to_raw(scene.layout())?;
        for s in raw.states() {
            rows.push(GenericTrajectoryRow {
                frame: s.frame,
                vehicle_id: raw.id(),
                x: s.x,
                y: s.y,
                vx: s.vx,
                vy: s.vy,
                ax: s.ax,
                ay: s.ay,
                width: raw.width(),
                length: raw.length(),
                lane_id: s.lane_id,
                vehicle_class: raw.class(),
            });
        }
    }
    rows.sort_by_key(|r| (r.frame, r.vehicle_id));
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(output);
    writer.write_record(GENERIC_HEADER)?;
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
