//! Synthetic scenes with exactly known kinematics.
//!
//! Vehicles follow piecewise-constant acceleration profiles, integrated in
//! closed form between breakpoints. An optional reaction rule makes chosen
//! vehicles brake or accelerate a fixed delay after their own risk crosses a
//! threshold; the rule is evaluated frame by frame on the scene generated so
//! far, so the response is causal.

mod golden;
mod presets;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use golden::{golden_corpus, ExpectedSsm, GoldenCase};
pub use presets::{responsive_corpus, CutInParams};

use crate::error::{Error, Result};
use crate::model::{Direction, FrameState, Lane, LaneLayout, Scene, VehicleAt, VehicleClass, VehicleTrack};
use crate::neighbors::{NeighborConfig, RelativePosition};
use crate::risk::{aggregate_ego_risk, frame_samples, ModelId, NormalizationScales, RiskModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    CarFollowing,
    CutIn,
    Overtake,
    Tailgate,
    Empty,
    Custom,
}

/// Acceleration held from `start` (s) until the next segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelSegment {
    pub start: f64,
    #[serde(default)]
    pub ax: f64,
    #[serde(default)]
    pub ay: f64,
}

type RiskTriple = (f64, f64, f64);

fn default_length() -> f64 {
    4.5
}

fn default_width() -> f64 {
    1.8
}

fn default_class() -> VehicleClass {
    VehicleClass::Car
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub id: u32,
    #[serde(default = "default_class")]
    pub class: VehicleClass,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    /// Initial state at t = 0 (center position, m and m/s).
    pub x0: f64,
    pub y0: f64,
    pub vx0: f64,
    #[serde(default)]
    pub vy0: f64,
    /// Zero acceleration before the first segment.
    #[serde(default)]
    pub profile: Vec<AccelSegment>,
    /// Recording window (s); the vehicle moves outside it but is not recorded.
    #[serde(default)]
    pub enter: Option<f64>,
    #[serde(default)]
    pub exit: Option<f64>,
}

impl VehicleSpec {
    pub fn car(id: u32, x0: f64, y0: f64, vx0: f64) -> Self {
        VehicleSpec {
            id,
            class: VehicleClass::Car,
            length: default_length(),
            width: default_width(),
            x0,
            y0,
            vx0,
            vy0: 0.0,
            profile: Vec::new(),
            enter: None,
            exit: None,
        }
    }

    fn accel_at(&self, t: f64) -> (f64, f64) {
        self.profile.iter().rev().find(|s| s.start <= t).map_or((0.0, 0.0), |s| (s.ax, s.ay))
    }

    fn present_at(&self, t: f64) -> bool {
        self.enter.is_none_or(|e| t >= e - 1e-9) && self.exit.is_none_or(|e| t <= e + 1e-9)
    }
}

fn default_model() -> ModelId {
    ModelId { positional: 2, ssm: crate::risk::SsmConfigId::A }
}

/// Vehicles in `reactive_ids` (default: the ego) apply ±`magnitude` while
/// their risk `delay` seconds earlier was at least `threshold`. They brake
/// when the risk ahead (LV/PL) is at least the risk behind (FV/PF) and
/// accelerate otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionRule {
    pub threshold: f64,
    pub delay: f64,
    pub magnitude: f64,
    #[serde(default = "default_model")]
    pub model: ModelId,
    #[serde(default)]
    pub reactive_ids: Vec<u32>,
}

impl ReactionRule {
    pub fn new(threshold: f64, delay: f64, magnitude: f64) -> Self {
        ReactionRule { threshold, delay, magnitude, model: default_model(), reactive_ids: Vec::new() }
    }
}

fn default_recording() -> String {
    "synthetic".to_string()
}

fn default_frame_rate() -> f64 {
    25.0
}

/// Three eastbound 3.5 m lanes: 1 = [0, 3.5), 2 = [3.5, 7), 3 = [7, 10.5).
pub fn three_lane_layout() -> LaneLayout {
    let lane = |id: i32, lower: f64| Lane { id, lower, upper: lower + 3.5, direction: Direction::PositiveX };
    LaneLayout::new(vec![lane(1, 0.0), lane(2, 3.5), lane(3, 7.0)]).expect("static layout is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    #[serde(default = "default_recording")]
    pub recording_id: String,
    pub duration: f64,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    /// Defaults to the first vehicle.
    #[serde(default)]
    pub ego_id: Option<u32>,
    #[serde(default = "three_lane_layout")]
    pub layout: LaneLayout,
    #[serde(default)]
    pub vehicles: Vec<VehicleSpec>,
    #[serde(default)]
    pub reaction: Option<ReactionRule>,
    /// Standard deviation (m) of Gaussian noise on recorded positions.
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub neighbors: NeighborConfig,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, duration: f64, vehicles: Vec<VehicleSpec>) -> Self {
        ScenarioSpec {
            kind,
            recording_id: default_recording(),
            duration,
            frame_rate: default_frame_rate(),
            ego_id: None,
            layout: three_lane_layout(),
            vehicles,
            reaction: None,
            noise_std: 0.0,
            neighbors: NeighborConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    pub fn ego(&self) -> Option<u32> {
        self.ego_id.or_else(|| self.vehicles.first().map(|v| v.id))
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.frame_rate + 1e-9).floor() as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidSpec(msg));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return invalid("duration must be positive".into());
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return invalid("frame rate must be positive".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return invalid("noise_std must be non-negative".into());
        }
        if self.layout.lanes().iter().any(|l| l.direction != Direction::PositiveX) {
            return invalid("synthetic layouts must only contain +x lanes".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for v in &self.vehicles {
            if !seen.insert(v.id) {
                return invalid(format!("duplicate vehicle id {}", v.id));
            }
            let numbers = [v.length, v.width, v.x0, v.y0, v.vx0, v.vy0];
            if numbers.iter().any(|x| !x.is_finite()) || !(v.length > 0.0 && v.width > 0.0) {
                return invalid(format!("vehicle {}: non-finite state or non-positive size", v.id));
            }
            if v.profile
                .iter()
                .any(|s| !(s.start >= 0.0 && s.start.is_finite() && s.ax.is_finite() && s.ay.is_finite()))
            {
                return invalid(format!("vehicle {}: bad acceleration segment", v.id));
            }
            if v.profile.windows(2).any(|w| !(w[1].start > w[0].start)) {
                return invalid(format!("vehicle {}: segments must have increasing start times", v.id));
            }
            if let (Some(a), Some(b)) = (v.enter, v.exit) {
                if !(b >= a) {
                    return invalid(format!("vehicle {}: exit before enter", v.id));
                }
            }
        }
        if let Some(ego) = self.ego_id {
            if !seen.contains(&ego) {
                return invalid(format!("ego {ego} is not among the vehicles"));
            }
        }
        if let Some(r) = &self.reaction {
            if !(r.delay >= 0.0 && r.magnitude >= 0.0 && r.threshold.is_finite())
                || !(r.delay.is_finite() && r.magnitude.is_finite())
            {
                return invalid("reaction needs finite threshold, delay ≥ 0 and magnitude ≥ 0".into());
            }
            if let Some(id) = r.reactive_ids.iter().find(|id| !seen.contains(id)) {
                return invalid(format!("reactive vehicle {id} is not among the vehicles"));
            }
            RiskModel::new(r.model, NormalizationScales::default(), None)
                .map_err(|_| Error::InvalidSpec(format!("reaction model {} must be grid-based", r.model)))?;
        }
        Ok(())
    }
}

/// Closed-form kinematics anchored at the last acceleration change.
#[derive(Debug, Clone, Copy)]
struct Kinematics {
    t0: f64,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    ax: f64,
    ay: f64,
}

impl Kinematics {
    fn at(&self, t: f64) -> (f64, f64, f64, f64) {
        let h = t - self.t0;
        (
            self.x + self.vx * h + 0.5 * self.ax * h * h,
            self.y + self.vy * h + 0.5 * self.ay * h * h,
            self.vx + self.ax * h,
            self.vy + self.ay * h,
        )
    }

    fn set_accel(&mut self, t: f64, ax: f64, ay: f64) {
        if ax == self.ax && ay == self.ay {
            return;
        }
        let (x, y, vx, vy) = self.at(t);
        *self = Kinematics { t0: t, x, y, vx, vy, ax, ay };
    }
}

/// Builds the scene described by `spec`. `seed` drives the position noise
/// only; noiseless generation ignores it.
pub fn generate(spec: &ScenarioSpec, seed: u64) -> Result<Scene> {
    spec.validate()?;
    let n_frames = spec.frame_count();
    let fr = spec.frame_rate;
    let time = |k: usize| k as f64 / fr;

    let reaction = spec.reaction.as_ref();
    let (model, reactive) = match reaction {
        Some(r) => {
            let model = RiskModel::new(r.model, NormalizationScales::default(), None)
                .map_err(|e| Error::InvalidSpec(e.to_string()))?;
            let ids: Vec<u32> =
                if r.reactive_ids.is_empty() { spec.ego().into_iter().collect() } else { r.reactive_ids.clone() };
            (Some(model), ids)
        }
        None => (None, Vec::new()),
    };
    let delay_frames = reaction.map_or(0, |r| (r.delay * fr - 1e-9).ceil().max(0.0) as usize);

    let mut kin: Vec<Kinematics> = spec
        .vehicles
        .iter()
        .map(|v| {
            let (ax, ay) = v.accel_at(0.0);
            Kinematics { t0: 0.0, x: v.x0, y: v.y0, vx: v.vx0, vy: v.vy0, ax, ay }
        })
        .collect();
    let mut states: Vec<Vec<FrameState>> = vec![Vec::new(); spec.vehicles.len()];
    // Per reactive vehicle: (overall, front, rear) risk by frame.
    let mut history: BTreeMap<u32, Vec<Option<RiskTriple>>> =
        reactive.iter().map(|&id| (id, Vec::with_capacity(n_frames))).collect();

    for k in 0..n_frames {
        let t = time(k);
        let mut snapshot = Vec::new();
        for (i, v) in spec.vehicles.iter().enumerate() {
            if !v.present_at(t) {
                continue;
            }
            let (x, y, vx, vy) = kin[i].at(t);
            let lane = spec.layout.lane_at(Direction::PositiveX, y).ok_or_else(|| {
                Error::InvalidSpec(format!("vehicle {} is off the road at t = {t:.3} s (y = {y:.3})", v.id))
            })?;
            snapshot.push(VehicleAt {
                id: v.id,
                class: v.class,
                width: v.width,
                length: v.length,
                state: FrameState { frame: k as i64, x, y, vx, vy, ax: 0.0, ay: 0.0, lane_id: lane.id },
            });
        }

        let mut extra_ax: BTreeMap<u32, f64> = BTreeMap::new();
        if let (Some(model), Some(rule)) = (&model, reaction) {
            for &id in &reactive {
                let risk = if snapshot.iter().any(|v| v.id == id) {
                    let samples = frame_samples(&snapshot, &spec.layout, id, &spec.neighbors)?;
                    let c = model.components(&samples);
                    let pick =
                        |a: RelativePosition, b: RelativePosition| c.get(a).unwrap_or(0.0).max(c.get(b).unwrap_or(0.0));
                    Some((
                        aggregate_ego_risk(&c, &model.positional),
                        pick(RelativePosition::LV, RelativePosition::PL),
                        pick(RelativePosition::FV, RelativePosition::PF),
                    ))
                } else {
                    None
                };
                let h = history.get_mut(&id).expect("reactive id registered");
                h.push(risk);
                if let Some(Some((overall, front, rear))) = k.checked_sub(delay_frames).map(|m| h[m]) {
                    if overall >= rule.threshold {
                        let sign = if front >= rear { -1.0 } else { 1.0 };
                        extra_ax.insert(id, sign * rule.magnitude);
                    }
                }
            }
        }

        let t_next = time(k + 1);
        for (i, v) in spec.vehicles.iter().enumerate() {
            let extra = extra_ax.get(&v.id).copied().unwrap_or(0.0);
            let (ax, ay) = v.accel_at(t);
            kin[i].set_accel(t, ax + extra, ay);
            if let Some(vehicle) = snapshot.iter().find(|s| s.id == v.id) {
                states[i].push(FrameState { ax: ax + extra, ay, ..vehicle.state });
            }
            for seg in v.profile.iter().filter(|s| s.start > t && s.start < t_next) {
                kin[i].set_accel(seg.start, seg.ax + extra, seg.ay);
            }
        }
    }

    if spec.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        for s in states.iter_mut().flatten() {
            s.x += noise.sample(&mut rng);
            s.y += noise.sample(&mut rng);
        }
    }

    let mut tracks = Vec::new();
    for (v, s) in spec.vehicles.iter().zip(states) {
        if s.is_empty() {
            continue;
        }
        tracks.push(VehicleTrack::new(v.id, v.class, v.width, v.length, fr, s)?);
    }
    Scene::new(spec.recording_id.clone(), spec.layout.clone(), tracks, fr)
}
