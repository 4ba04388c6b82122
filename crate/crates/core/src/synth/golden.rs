//! Fixed battery of scenes with SSM values derived by hand from the
//! kinematics, independent of the neighbor and SSM code.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{generate, AccelSegment, ScenarioKind, ScenarioSpec, VehicleSpec};
use crate::error::Result;
use crate::model::Scene;
use crate::neighbors::RelativePosition;

const FRAME_RATE: f64 = 25.0;
const LANE_2: f64 = 5.25;
/// Boundary between lanes 2 and 3.
const BOUNDARY: f64 = 7.0;
const LENGTH: f64 = 4.5;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedSsm {
    pub frame: i64,
    pub neighbor_id: u32,
    pub position: RelativePosition,
    pub pet: f64,
    pub ittc: f64,
    pub drac: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenCase {
    pub name: &'static str,
    pub scene: Scene,
    pub ego_id: u32,
    /// Every neighbor sample the ego should see, ordered by frame.
    pub expected: Vec<ExpectedSsm>,
}

fn frames(duration: f64) -> impl Iterator<Item = (i64, f64)> {
    let n = (duration * FRAME_RATE + 1e-9).floor() as i64;
    (0..=n).map(|k| (k, k as f64 / FRAME_RATE))
}

/// TH, ITTC and DRAC for a follower at `vf` behind a leader at `vl`.
fn in_lane(d: f64, vf: f64, vl: f64) -> (f64, f64, f64) {
    let dv = vf - vl;
    if dv > 0.0 {
        (d / vf, dv / d, dv * dv / d)
    } else {
        (d / vf, 0.0, 0.0)
    }
}

fn case(
    name: &'static str,
    duration: f64,
    vehicles: Vec<VehicleSpec>,
    expected: Vec<ExpectedSsm>,
) -> Result<GoldenCase> {
    let mut spec = ScenarioSpec::new(ScenarioKind::Custom, duration, vehicles);
    spec.recording_id = format!("golden-{name}");
    Ok(GoldenCase { name, scene: generate(&spec, 0)?, ego_id: 1, expected })
}

fn lv(frame: i64, (pet, ittc, drac): (f64, f64, f64)) -> ExpectedSsm {
    ExpectedSsm { frame, neighbor_id: 2, position: RelativePosition::LV, pet, ittc, drac }
}

/// Ego (id 1) follows a leader (id 2) in lane 2; both at constant speed.
fn following(name: &'static str, d0: f64, vf: f64, vl: f64) -> Result<GoldenCase> {
    let duration = 4.0;
    let expected = frames(duration).map(|(k, t)| lv(k, in_lane(d0 + (vl - vf) * t, vf, vl))).collect();
    let vehicles = vec![VehicleSpec::car(1, 0.0, LANE_2, vf), VehicleSpec::car(2, d0 + LENGTH, LANE_2, vl)];
    case(name, duration, vehicles, expected)
}

pub fn golden_corpus(seed: u64) -> Result<Vec<GoldenCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();

    let v = rng.random_range(20.0..35.0);
    cases.push(following("tailgate", 0.3 * v, v, v)?);

    let v = rng.random_range(20.0..35.0);
    cases.push(following("car_following", 50.0, v, v)?);

    let vf = rng.random_range(20.0..30.0);
    let vl = vf + rng.random_range(1.0..3.0);
    cases.push(following("opening_gap", rng.random_range(15.0..30.0), vf, vl)?);

    let vl = rng.random_range(20.0..28.0);
    let vf = vl + rng.random_range(1.0..3.0);
    cases.push(following("closing_gap", rng.random_range(35.0..45.0), vf, vl)?);

    // Leader brakes at b m/s² from t = 1 s.
    {
        let duration = 4.0;
        let v = rng.random_range(22.0..30.0);
        let d0 = rng.random_range(25.0..35.0);
        let b = rng.random_range(1.0..3.0);
        let expected = frames(duration)
            .map(|(k, t)| {
                let tb = (t - 1.0).max(0.0);
                lv(k, in_lane(d0 - 0.5 * b * tb * tb, v, v - b * tb))
            })
            .collect();
        let mut leader = VehicleSpec::car(2, d0 + LENGTH, LANE_2, v);
        leader.profile = vec![AccelSegment { start: 1.0, ax: -b, ay: 0.0 }];
        cases.push(case("braking_leader", duration, vec![VehicleSpec::car(1, 0.0, LANE_2, v), leader], expected)?);
    }

    // Ego between a slower leader and a faster follower.
    {
        let duration = 4.0;
        let ve = rng.random_range(24.0..26.0);
        let (vl, vf) = (ve - rng.random_range(1.0..2.0), ve + rng.random_range(1.0..2.0));
        let (dl, df) = (rng.random_range(28.0..32.0), rng.random_range(23.0..27.0));
        let mut expected = Vec::new();
        for (k, t) in frames(duration) {
            expected.push(lv(k, in_lane(dl + (vl - ve) * t, ve, vl)));
            let (pet, ittc, drac) = in_lane(df + (ve - vf) * t, vf, ve);
            expected.push(ExpectedSsm { frame: k, neighbor_id: 3, position: RelativePosition::FV, pet, ittc, drac });
        }
        let vehicles = vec![
            VehicleSpec::car(1, 0.0, LANE_2, ve),
            VehicleSpec::car(2, dl + LENGTH, LANE_2, vl),
            VehicleSpec::car(3, -(df + LENGTH), LANE_2, vf),
        ];
        cases.push(case("sandwich", duration, vehicles, expected)?);
    }

    // Merger drifting in from lane 3, 1.5 s behind the ego at equal speed.
    {
        let duration = 1.0;
        let v = rng.random_range(22.0..30.0);
        let w = rng.random_range(0.5..1.0);
        let (xm0, ym0) = (-1.5 * v, BOUNDARY + 3.0 * w);
        let expected = frames(duration)
            .map(|(k, t)| {
                let (xe, xm, ym) = (v * t, xm0 + v * t, ym0 - w * t);
                let t_cross = (ym - BOUNDARY) / w;
                let x_enc = xm + v * t_cross;
                let pet = t_cross - (x_enc - xe) / v;
                ExpectedSsm { frame: k, neighbor_id: 2, position: RelativePosition::PF, pet, ittc: 0.0, drac: 0.0 }
            })
            .collect();
        let mut merger = VehicleSpec::car(2, xm0, ym0, v);
        merger.vy0 = -w;
        cases.push(case("pf_merge", duration, vec![VehicleSpec::car(1, 0.0, LANE_2, v), merger], expected)?);
    }

    // Slower merger drifting in ahead of the ego.
    {
        let duration = 2.0;
        let ve = rng.random_range(25.0..30.0);
        let dv = rng.random_range(1.0..3.0);
        let vm = ve - dv;
        let dx0 = rng.random_range(28.0..35.0);
        let w = rng.random_range(0.8..1.2);
        let ym0 = BOUNDARY + 2.8 * w;
        let expected = frames(duration)
            .map(|(k, t)| {
                let (xe, xm, ym) = (ve * t, dx0 + vm * t, ym0 - w * t);
                let t_cross = (ym - BOUNDARY) / w;
                let x_enc = xm + vm * t_cross;
                let pet = ((x_enc - xe) / ve - t_cross).max(0.0);
                let d = xm - xe - LENGTH;
                ExpectedSsm {
                    frame: k,
                    neighbor_id: 2,
                    position: RelativePosition::PL,
                    pet,
                    ittc: dv / d,
                    drac: dv * dv / d,
                }
            })
            .collect();
        let mut merger = VehicleSpec::car(2, dx0, ym0, vm);
        merger.vy0 = -w;
        cases.push(case("pl_merge", duration, vec![VehicleSpec::car(1, 0.0, LANE_2, ve), merger], expected)?);
    }

    cases.push(case("lone_vehicle", 2.0, vec![VehicleSpec::car(1, 0.0, LANE_2, 25.0)], Vec::new())?);
    Ok(cases)
}
