//! Surrogate safety measures for one ego–neighbor pair.
//!
//! The PET slot holds time headway for in-lane neighbors and
//! post-encroachment time for parallel ones. ITTC is zero for pairs that are
//! not closing, so larger values are always riskier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameState, Scene, VehicleAt};
use crate::neighbors::{bumper_gap, Encroachment, NeighborConfig, NeighborEntry, RelativePosition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsmSample {
    pub neighbor_id: u32,
    pub frame: i64,
    pub position: RelativePosition,
    /// TH for LV/FV, PET for PL/PF; seconds, possibly +inf.
    pub pet: f64,
    /// 1/s, zero when not closing.
    pub ittc: f64,
    /// m/s², zero when not closing.
    pub drac: f64,
    /// The longitudinal gap behind ITTC/DRAC hit the lower clamp.
    pub gap_clamped: bool,
}

fn check_gap(d: f64) -> Result<()> {
    if d > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveGap(d))
    }
}

/// Time for the follower to cover gap `d`; +inf if it is not advancing.
pub fn time_headway(d: f64, v_follower: f64) -> Result<f64> {
    check_gap(d)?;
    Ok(if v_follower > 0.0 { d / v_follower } else { f64::INFINITY })
}

pub fn ittc(v_follower: f64, v_leader: f64, d: f64) -> Result<f64> {
    check_gap(d)?;
    Ok(if v_follower > v_leader { (v_follower - v_leader) / d } else { 0.0 })
}

pub fn drac(v_follower: f64, v_leader: f64, d: f64) -> Result<f64> {
    check_gap(d)?;
    let dv = v_follower - v_leader;
    Ok(if dv > 0.0 { dv * dv / d } else { 0.0 })
}

/// Post-encroachment time between the ego and a merging vehicle.
///
/// For PL the merger occupies the encroachment point first (at `t_cross`)
/// and the ego arrives second; for PF the ego passes first. Overlap under
/// extrapolation clamps to 0.
pub fn pet_parallel(enc: &Encroachment, ego: &FrameState, position: RelativePosition) -> f64 {
    if !(ego.vx > 0.0) {
        return f64::INFINITY;
    }
    let ego_at_point = (enc.x_enc - ego.x) / ego.vx;
    let pet = match position {
        RelativePosition::PF => enc.t_cross - ego_at_point,
        _ => ego_at_point - enc.t_cross,
    };
    pet.max(0.0)
}

/// Computes the SSM triple for one classified neighbor among the vehicles
/// of a single frame.
pub fn ssm_for_entry(
    vehicles: &[VehicleAt],
    ego_id: u32,
    entry: &NeighborEntry,
    config: &NeighborConfig,
) -> Result<SsmSample> {
    let find = |id: u32| vehicles.iter().find(|v| v.id == id).ok_or(Error::UnknownVehicle(id));
    let ego = find(ego_id)?;
    let other = find(entry.id())?;
    let position = entry.position();
    let sample = |pet, ittc, drac, gap_clamped| SsmSample {
        neighbor_id: other.id,
        frame: ego.state.frame,
        position,
        pet,
        ittc,
        drac,
        gap_clamped,
    };
    match *entry {
        NeighborEntry::InLane { neighbor, .. } => {
            let (follower, leader) = match position {
                RelativePosition::LV => (ego, other),
                _ => (other, ego),
            };
            let (vf, vl, d) = (follower.state.vx, leader.state.vx, neighbor.gap);
            Ok(sample(time_headway(d, vf)?, ittc(vf, vl, d)?, drac(vf, vl, d)?, neighbor.clamped))
        }
        NeighborEntry::Parallel { neighbor, .. } => {
            let pet = pet_parallel(&neighbor.encroachment, &ego.state, position);
            let (follower, leader) = if other.state.x < ego.state.x { (other, ego) } else { (ego, other) };
            let (d, clamped) = bumper_gap(ego, other, config.gap_epsilon);
            let (vf, vl) = (follower.state.vx, leader.state.vx);
            Ok(sample(pet, ittc(vf, vl, d)?, drac(vf, vl, d)?, clamped))
        }
    }
}

pub fn ssm_for_pair(
    scene: &Scene,
    ego_id: u32,
    entry: &NeighborEntry,
    frame: i64,
    config: &NeighborConfig,
) -> Result<SsmSample> {
    if scene.track(ego_id)?.state_at(frame).is_none() {
        return Err(Error::FrameOutOfRange { vehicle_id: ego_id, frame });
    }
    ssm_for_entry(&scene.snapshot(frame), ego_id, entry, config)
}
