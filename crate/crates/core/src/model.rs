//! Kinematic data model shared by every other module.
//!
//! Tracks are stored in a canonical road frame: `x` grows in the direction
//! of travel and `y` grows to the driver's left. Lanes whose traffic moves
//! towards negative raw `x` are rotated by 180 degrees on canonicalization,
//! which keeps the frame right-handed and lets a single set of metric
//! routines serve both carriageways.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VehicleClass {
    #[serde(alias = "car")]
    Car,
    #[serde(alias = "truck")]
    Truck,
}

impl fmt::Display for VehicleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VehicleClass::Car => f.write_str("Car"),
            VehicleClass::Truck => f.write_str("Truck"),
        }
    }
}

impl FromStr for VehicleClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "car" => Ok(VehicleClass::Car),
            "truck" => Ok(VehicleClass::Truck),
            other => Err(format!("unknown vehicle class `{other}`")),
        }
    }
}

/// Kinematic state of one vehicle at one frame. Positions refer to the
/// geometric center of the bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameState {
    pub frame: i64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub ay: f64,
    pub lane_id: i32,
}

impl FrameState {
    fn rotated(&self) -> FrameState {
        FrameState { x: -self.x, y: -self.y, vx: -self.vx, vy: -self.vy, ax: -self.ax, ay: -self.ay, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleTrack {
    id: u32,
    class: VehicleClass,
    width: f64,
    length: f64,
    frame_rate: f64,
    states: Vec<FrameState>,
    canonical: bool,
}

impl VehicleTrack {
    /// Builds a track in the raw (not yet canonical) frame.
    pub fn new(
        id: u32,
        class: VehicleClass,
        width: f64,
        length: f64,
        frame_rate: f64,
        states: Vec<FrameState>,
    ) -> Result<Self> {
        let invalid = |reason: &str| Error::InvalidTrack { vehicle_id: id, reason: reason.to_string() };
        if states.is_empty() {
            return Err(invalid("no states"));
        }
        if !(width > 0.0 && width.is_finite()) || !(length > 0.0 && length.is_finite()) {
            return Err(invalid("width and length must be positive"));
        }
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(invalid("frame rate must be positive"));
        }
        if states[0].frame < 0 {
            return Err(invalid("negative frame index"));
        }
        if states.windows(2).any(|w| w[1].frame != w[0].frame + 1) {
            return Err(Error::FrameGap { vehicle_id: id });
        }
        Ok(VehicleTrack { id, class, width, length, frame_rate, states, canonical: false })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn class(&self) -> VehicleClass {
        self.class
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn states(&self) -> &[FrameState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    pub fn first_frame(&self) -> i64 {
        self.states[0].frame
    }

    pub fn last_frame(&self) -> i64 {
        self.states[self.states.len() - 1].frame
    }

    pub fn state_at(&self, frame: i64) -> Option<&FrameState> {
        let offset = frame.checked_sub(self.first_frame())?;
        usize::try_from(offset).ok().and_then(|i| self.states.get(i))
    }

    /// True when the lane id differs between any two frames.
    pub fn changes_lane(&self) -> bool {
        let first = self.states[0].lane_id;
        self.states.iter().any(|s| s.lane_id != first)
    }

    pub fn at(&self, frame: i64) -> Option<VehicleAt> {
        self.state_at(frame).map(|state| VehicleAt {
            id: self.id,
            class: self.class,
            width: self.width,
            length: self.length,
            state: *state,
        })
    }

    /// Inverse of [`canonicalize`]: the track in raw coordinates.
    pub fn to_raw(&self, layout: &LaneLayout) -> Result<VehicleTrack> {
        if !self.canonical {
            return Ok(self.clone());
        }
        let direction = track_direction(self, layout)?;
        let states = match direction {
            Direction::PositiveX => self.states.clone(),
            Direction::NegativeX => self.states.iter().map(FrameState::rotated).collect(),
        };
        Ok(VehicleTrack { states, canonical: false, ..self.clone() })
    }
}

/// A vehicle's state at a single frame together with its dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleAt {
    pub id: u32,
    pub class: VehicleClass,
    pub width: f64,
    pub length: f64,
    pub state: FrameState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    PositiveX,
    NegativeX,
}

/// One lane; `lower` and `upper` are raw lateral coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: i32,
    pub lower: f64,
    pub upper: f64,
    pub direction: Direction,
}

impl Lane {
    /// Lateral interval of the lane in the canonical frame.
    pub fn canonical_bounds(&self) -> (f64, f64) {
        match self.direction {
            Direction::PositiveX => (self.lower, self.upper),
            Direction::NegativeX => (-self.upper, -self.lower),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayoutFile", into = "LayoutFile")]
pub struct LaneLayout {
    lanes: Vec<Lane>,
}

#[derive(Serialize, Deserialize)]
struct LayoutFile {
    lanes: Vec<Lane>,
}

impl TryFrom<LayoutFile> for LaneLayout {
    type Error = Error;

    fn try_from(file: LayoutFile) -> Result<Self> {
        LaneLayout::new(file.lanes)
    }
}

impl From<LaneLayout> for LayoutFile {
    fn from(layout: LaneLayout) -> Self {
        LayoutFile { lanes: layout.lanes }
    }
}

impl LaneLayout {
    pub fn new(lanes: Vec<Lane>) -> Result<Self> {
        if lanes.is_empty() {
            return Err(Error::InvalidLayout("no lanes".into()));
        }
        for lane in &lanes {
            if !(lane.upper > lane.lower) || !lane.lower.is_finite() || !lane.upper.is_finite() {
                return Err(Error::InvalidLayout(format!("lane {} has upper bound not above lower bound", lane.id)));
            }
        }
        for (i, a) in lanes.iter().enumerate() {
            for b in &lanes[i + 1..] {
                if a.id == b.id {
                    return Err(Error::InvalidLayout(format!("duplicate lane id {}", a.id)));
                }
                if a.direction == b.direction && a.lower < b.upper && b.lower < a.upper {
                    return Err(Error::InvalidLayout(format!("lanes {} and {} overlap", a.id, b.id)));
                }
            }
        }
        Ok(LaneLayout { lanes })
    }

    /// Parses the declarative layout file (`[[lanes]]` tables).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidLayout(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("lane layout serializes")
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn lane(&self, id: i32) -> Result<&Lane> {
        self.lanes.iter().find(|l| l.id == id).ok_or(Error::UnknownLane { lane_id: id })
    }

    /// Same-direction lanes ordered from right to left (canonical frame).
    fn ordered_same_direction(&self, direction: Direction) -> Vec<&Lane> {
        let mut lanes: Vec<&Lane> = self.lanes.iter().filter(|l| l.direction == direction).collect();
        lanes.sort_by(|a, b| a.canonical_bounds().0.total_cmp(&b.canonical_bounds().0));
        lanes
    }

    /// Lane directly to the driver's left, if any.
    pub fn left_of(&self, id: i32) -> Result<Option<&Lane>> {
        let lane = self.lane(id)?;
        let ordered = self.ordered_same_direction(lane.direction);
        let pos = ordered.iter().position(|l| l.id == id).expect("lane present");
        Ok(ordered.get(pos + 1).copied())
    }

    /// Lane directly to the driver's right, if any.
    pub fn right_of(&self, id: i32) -> Result<Option<&Lane>> {
        let lane = self.lane(id)?;
        let ordered = self.ordered_same_direction(lane.direction);
        let pos = ordered.iter().position(|l| l.id == id).expect("lane present");
        Ok(pos.checked_sub(1).map(|p| ordered[p]))
    }

    /// Lane containing canonical lateral position `y` among lanes of the given
    /// direction. Intervals are half-open, `[lower, upper)`.
    pub fn lane_at(&self, direction: Direction, y: f64) -> Option<&Lane> {
        self.lanes.iter().find(|l| {
            let (lo, hi) = l.canonical_bounds();
            l.direction == direction && y >= lo && y < hi
        })
    }
}

fn track_direction(track: &VehicleTrack, layout: &LaneLayout) -> Result<Direction> {
    let direction = layout.lane(track.states[0].lane_id)?.direction;
    for s in &track.states {
        if layout.lane(s.lane_id)?.direction != direction {
            return Err(Error::InvalidTrack {
                vehicle_id: track.id,
                reason: "track switches driving direction".into(),
            });
        }
    }
    Ok(direction)
}

/// Expresses `track` in the canonical road frame. Applying it to an already
/// canonical track returns an identical copy.
pub fn canonicalize(track: &VehicleTrack, layout: &LaneLayout) -> Result<VehicleTrack> {
    let direction = track_direction(track, layout)?;
    if track.canonical {
        return Ok(track.clone());
    }
    let states = match direction {
        Direction::PositiveX => track.states.clone(),
        Direction::NegativeX => track.states.iter().map(FrameState::rotated).collect(),
    };
    Ok(VehicleTrack { states, canonical: true, ..track.clone() })
}

/// A recording: lane layout plus canonical tracks sharing one frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    recording_id: String,
    layout: LaneLayout,
    tracks: BTreeMap<u32, VehicleTrack>,
    frame_rate: f64,
    first_frame: i64,
    by_frame: Vec<Vec<u32>>,
}

impl Scene {
    /// Validates the tracks against the layout and canonicalizes them.
    pub fn new(
        recording_id: impl Into<String>,
        layout: LaneLayout,
        tracks: impl IntoIterator<Item = VehicleTrack>,
        frame_rate: f64,
    ) -> Result<Self> {
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(Error::InvalidScene("frame rate must be positive".into()));
        }
        let mut map = BTreeMap::new();
        for track in tracks {
            if (track.frame_rate - frame_rate).abs() > 1e-9 * frame_rate {
                return Err(Error::InvalidScene(format!(
                    "track {} has frame rate {} but the scene uses {}",
                    track.id, track.frame_rate, frame_rate
                )));
            }
            let canonical = canonicalize(&track, &layout)?;
            if map.insert(track.id, canonical).is_some() {
                return Err(Error::InvalidScene(format!("duplicate vehicle id {}", track.id)));
            }
        }
        let first_frame = map.values().map(|t| t.first_frame()).min().unwrap_or(0);
        let last_frame = map.values().map(|t| t.last_frame()).max().unwrap_or(-1);
        let span = usize::try_from(last_frame - first_frame + 1).unwrap_or(0);
        let mut by_frame = vec![Vec::new(); span];
        for track in map.values() {
            for s in &track.states {
                by_frame[(s.frame - first_frame) as usize].push(track.id);
            }
        }
        Ok(Scene { recording_id: recording_id.into(), layout, tracks: map, frame_rate, first_frame, by_frame })
    }

    pub fn recording_id(&self) -> &str {
        &self.recording_id
    }

    pub fn layout(&self) -> &LaneLayout {
        &self.layout
    }

    pub fn tracks(&self) -> &BTreeMap<u32, VehicleTrack> {
        &self.tracks
    }

    pub fn track(&self, id: u32) -> Result<&VehicleTrack> {
        self.tracks.get(&id).ok_or(Error::UnknownVehicle(id))
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    /// Inclusive frame range covered by any track, `None` for an empty scene.
    pub fn frame_range(&self) -> Option<(i64, i64)> {
        if self.by_frame.is_empty() {
            None
        } else {
            Some((self.first_frame, self.first_frame + self.by_frame.len() as i64 - 1))
        }
    }

    pub fn duration_seconds(&self) -> f64 {
        self.by_frame.len() as f64 / self.frame_rate
    }

    /// Ids of the vehicles present at `frame`, ascending.
    pub fn vehicles_at(&self, frame: i64) -> &[u32] {
        frame
            .checked_sub(self.first_frame)
            .and_then(|i| usize::try_from(i).ok())
            .and_then(|i| self.by_frame.get(i))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// All vehicles present at `frame`.
    pub fn snapshot(&self, frame: i64) -> Vec<VehicleAt> {
        self.vehicles_at(frame).iter().filter_map(|id| self.tracks[id].at(frame)).collect()
    }

    /// A new scene holding only the tracks accepted by `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&VehicleTrack) -> bool) -> Scene {
        let tracks: Vec<VehicleTrack> = self.tracks.values().filter(|t| keep(t)).cloned().collect();
        Scene::new(self.recording_id.clone(), self.layout.clone(), tracks, self.frame_rate)
            .expect("subset of a valid scene is valid")
    }
}

/// Numerical derivative: central differences in the interior, first-order
/// one-sided differences at both ends. Output length equals input length.
pub fn derivative(series: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = series.len();
    if n < 3 {
        return Err(Error::SeriesTooShort { len: n, min: 3 });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("time step must be positive, got {dt}")));
    }
    let mut out = Vec::with_capacity(n);
    out.push((series[1] - series[0]) / dt);
    for i in 1..n - 1 {
        out.push((series[i + 1] - series[i - 1]) / (2.0 * dt));
    }
    out.push((series[n - 1] - series[n - 2]) / dt);
    Ok(out)
}

/// Longitudinal jerk in m/s³.
pub fn jerk_of(track: &VehicleTrack) -> Result<Vec<f64>> {
    let ax: Vec<f64> = track.states.iter().map(|s| s.ax).collect();
    derivative(&ax, 1.0 / track.frame_rate)
}
