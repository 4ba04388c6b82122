//! Neighbor classification around an ego vehicle at a single frame.
//!
//! Same-lane vehicles directly ahead and behind become LV and FV. Vehicles
//! in the two adjacent lanes that drift towards the ego lane are
//! extrapolated at constant velocity until their lateral center reaches the
//! ego-lane boundary (more than half of the body inside the lane); the
//! longitudinal position at that moment is the encroachment point, which
//! decides between PL and PF.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameState, LaneLayout, Scene, VehicleAt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelativePosition {
    LV,
    FV,
    PL,
    PF,
}

impl RelativePosition {
    pub const ALL: [RelativePosition; 4] =
        [RelativePosition::LV, RelativePosition::FV, RelativePosition::PL, RelativePosition::PF];

    pub fn is_parallel(self) -> bool {
        matches!(self, RelativePosition::PL | RelativePosition::PF)
    }
}

impl fmt::Display for RelativePosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RelativePosition::LV => "LV",
            RelativePosition::FV => "FV",
            RelativePosition::PL => "PL",
            RelativePosition::PF => "PF",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Encroachment {
    /// Seconds until the parallel vehicle's center reaches the ego-lane boundary.
    pub t_cross: f64,
    /// Longitudinal coordinate of the encroachment point.
    pub x_enc: f64,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeighborConfig {
    /// Lateral speeds below this (m/s) never produce an encroachment.
    pub vy_min: f64,
    /// Encroachments further than this in the future (s) are ignored.
    pub horizon: f64,
    /// Lower clamp for bumper-to-bumper gaps (m).
    pub gap_epsilon: f64,
}

impl Default for NeighborConfig {
    fn default() -> Self {
        NeighborConfig { vy_min: 0.05, horizon: 10.0, gap_epsilon: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InLaneNeighbor {
    pub id: u32,
    pub gap: f64,
    /// Set when the raw gap fell below the clamp.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParallelNeighbor {
    pub id: u32,
    pub encroachment: Encroachment,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NeighborEntry {
    InLane { position: RelativePosition, neighbor: InLaneNeighbor },
    Parallel { position: RelativePosition, neighbor: ParallelNeighbor },
}

impl NeighborEntry {
    pub fn position(&self) -> RelativePosition {
        match self {
            NeighborEntry::InLane { position, .. } | NeighborEntry::Parallel { position, .. } => *position,
        }
    }

    pub fn id(&self) -> u32 {
        match self {
            NeighborEntry::InLane { neighbor, .. } => neighbor.id,
            NeighborEntry::Parallel { neighbor, .. } => neighbor.id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborSet {
    pub ego_id: u32,
    pub frame: i64,
    pub lv: Option<InLaneNeighbor>,
    pub fv: Option<InLaneNeighbor>,
    pub pl: Vec<ParallelNeighbor>,
    pub pf: Vec<ParallelNeighbor>,
}

impl NeighborSet {
    pub fn is_empty(&self) -> bool {
        self.lv.is_none() && self.fv.is_none() && self.pl.is_empty() && self.pf.is_empty()
    }

    pub fn entries(&self) -> Vec<NeighborEntry> {
        let mut out = Vec::new();
        if let Some(n) = self.lv {
            out.push(NeighborEntry::InLane { position: RelativePosition::LV, neighbor: n });
        }
        if let Some(n) = self.fv {
            out.push(NeighborEntry::InLane { position: RelativePosition::FV, neighbor: n });
        }
        for n in &self.pl {
            out.push(NeighborEntry::Parallel { position: RelativePosition::PL, neighbor: *n });
        }
        for n in &self.pf {
            out.push(NeighborEntry::Parallel { position: RelativePosition::PF, neighbor: *n });
        }
        out
    }
}

/// Bumper-to-bumper longitudinal gap, clamped below at `epsilon`. The flag
/// reports whether the clamp was applied.
pub fn bumper_gap(a: &VehicleAt, b: &VehicleAt, epsilon: f64) -> (f64, bool) {
    let raw = (a.state.x - b.state.x).abs() - (a.length + b.length) / 2.0;
    if raw < epsilon {
        (epsilon, true)
    } else {
        (raw, false)
    }
}

/// Constant-velocity encroachment of `other` into the ego lane, or `None`
/// when `other` does not drift towards the ego lane fast enough or would
/// only arrive beyond the horizon.
pub fn encroachment_point(
    ego: &VehicleAt,
    other: &VehicleAt,
    layout: &LaneLayout,
    config: &NeighborConfig,
) -> Result<Option<Encroachment>> {
    let ego_lane_id = ego.state.lane_id;
    let other_lane_id = other.state.lane_id;
    let (lower, upper) = layout.lane(ego_lane_id)?.canonical_bounds();
    layout.lane(other_lane_id)?;

    let y = other.state.y;
    let vy = other.state.vy;
    let (side, t_cross) = if layout.left_of(ego_lane_id)?.is_some_and(|l| l.id == other_lane_id) {
        (Side::Left, (y - upper) / -vy)
    } else if layout.right_of(ego_lane_id)?.is_some_and(|l| l.id == other_lane_id) {
        (Side::Right, (lower - y) / vy)
    } else {
        return Err(Error::NotAdjacent { ego_lane: ego_lane_id, other_lane: other_lane_id });
    };

    let toward = match side {
        Side::Left => vy < 0.0,
        Side::Right => vy > 0.0,
    };
    if !toward || vy.abs() < config.vy_min {
        return Ok(None);
    }
    // Centers already past the boundary while still labelled with the
    // adjacent lane yield a non-positive crossing time.
    if !(t_cross > 0.0) || t_cross > config.horizon {
        return Ok(None);
    }
    Ok(Some(Encroachment { t_cross, x_enc: other.state.x + other.state.vx * t_cross, side }))
}

/// PL when the encroachment point lies strictly ahead of the ego's
/// extrapolated position at the crossing time, PF otherwise.
pub fn classify_parallel(enc: &Encroachment, ego: &FrameState) -> RelativePosition {
    if enc.x_enc > ego.x + ego.vx * enc.t_cross {
        RelativePosition::PL
    } else {
        RelativePosition::PF
    }
}

/// Classifies the neighbors of `ego_id` among the vehicles of one frame.
pub fn classify_in_snapshot(
    vehicles: &[VehicleAt],
    layout: &LaneLayout,
    ego_id: u32,
    config: &NeighborConfig,
) -> Result<NeighborSet> {
    let ego = vehicles.iter().find(|v| v.id == ego_id).ok_or(Error::UnknownVehicle(ego_id))?;
    let ego_lane = ego.state.lane_id;
    let left = layout.left_of(ego_lane)?.map(|l| l.id);
    let right = layout.right_of(ego_lane)?.map(|l| l.id);

    let mut set = NeighborSet { ego_id, frame: ego.state.frame, ..NeighborSet::default() };
    let mut ahead: Option<&VehicleAt> = None;
    let mut behind: Option<&VehicleAt> = None;
    let key = |v: &VehicleAt| (v.state.x, v.id);
    for other in vehicles.iter().filter(|v| v.id != ego_id) {
        let lane = other.state.lane_id;
        if lane == ego_lane {
            if other.state.x > ego.state.x {
                if ahead.is_none_or(|a| key(other).partial_cmp(&key(a)).is_some_and(|o| o.is_lt())) {
                    ahead = Some(other);
                }
            } else if behind.is_none_or(|b| key(other).partial_cmp(&key(b)).is_some_and(|o| o.is_gt())) {
                behind = Some(other);
            }
        } else if Some(lane) == left || Some(lane) == right {
            if let Some(enc) = encroachment_point(ego, other, layout, config)? {
                let neighbor = ParallelNeighbor { id: other.id, encroachment: enc };
                match classify_parallel(&enc, &ego.state) {
                    RelativePosition::PL => set.pl.push(neighbor),
                    _ => set.pf.push(neighbor),
                }
            }
        }
    }
    let in_lane = |v: &VehicleAt| {
        let (gap, clamped) = bumper_gap(ego, v, config.gap_epsilon);
        InLaneNeighbor { id: v.id, gap, clamped }
    };
    set.lv = ahead.map(in_lane);
    set.fv = behind.map(in_lane);
    Ok(set)
}

pub fn classify_neighbors(scene: &Scene, ego_id: u32, frame: i64, config: &NeighborConfig) -> Result<NeighborSet> {
    let track = scene.track(ego_id)?;
    if track.state_at(frame).is_none() {
        return Err(Error::FrameOutOfRange { vehicle_id: ego_id, frame });
    }
    classify_in_snapshot(&scene.snapshot(frame), scene.layout(), ego_id, config)
}
