use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{generate, AccelSegment, ReactionRule, ScenarioKind, ScenarioSpec, VehicleSpec};
use crate::error::Result;
use crate::model::Scene;

/// Lane centers of the default layout.
const LANE_2: f64 = 5.25;
const LANE_3: f64 = 8.75;

/// A faster car in lane 3 moves into lane 2 just ahead of the ego (id 1).
/// The merger (id 2) ramps its lateral speed up at `lateral_accel`, drifts,
/// and ramps down again to stop at the ego lane's center.
#[derive(Debug, Clone, PartialEq)]
pub struct CutInParams {
    pub ego_speed: f64,
    pub speed_diff: f64,
    /// Longitudinal center distance of the merger ahead of the ego at t = 0.
    pub lead: f64,
    pub lateral_speed: f64,
    pub lateral_accel: f64,
    /// Time the merger starts moving laterally.
    pub onset: f64,
    pub duration: f64,
    pub frame_rate: f64,
    pub reaction: Option<ReactionRule>,
}

impl Default for CutInParams {
    fn default() -> Self {
        CutInParams {
            ego_speed: 30.0,
            speed_diff: 2.0,
            lead: 7.0,
            lateral_speed: 1.0,
            lateral_accel: 4.0,
            onset: 2.0,
            duration: 10.0,
            frame_rate: 25.0,
            reaction: None,
        }
    }
}

impl ScenarioSpec {
    /// Ego (id 1) in lane 2 behind a leader (id 2) at bumper gap `gap`, both
    /// at `speed`.
    pub fn car_following(speed: f64, gap: f64, duration: f64) -> Self {
        let ego = VehicleSpec::car(1, 0.0, LANE_2, speed);
        let leader = VehicleSpec::car(2, gap + ego.length, LANE_2, speed);
        ScenarioSpec::new(ScenarioKind::CarFollowing, duration, vec![ego, leader])
    }

    /// Car following at a fixed time headway (s).
    pub fn tailgate(speed: f64, headway: f64, duration: f64) -> Self {
        ScenarioSpec { kind: ScenarioKind::Tailgate, ..ScenarioSpec::car_following(speed, headway * speed, duration) }
    }

    pub fn cut_in(p: &CutInParams) -> Self {
        let ego = VehicleSpec::car(1, 0.0, LANE_2, p.ego_speed);
        let mut merger = VehicleSpec::car(2, p.lead, LANE_3, p.ego_speed + p.speed_diff);
        let ramp = p.lateral_speed / p.lateral_accel;
        let drift = ((LANE_3 - LANE_2) - p.lateral_speed * ramp).max(0.0) / p.lateral_speed;
        merger.profile = vec![
            AccelSegment { start: p.onset, ax: 0.0, ay: -p.lateral_accel },
            AccelSegment { start: p.onset + ramp, ax: 0.0, ay: 0.0 },
            AccelSegment { start: p.onset + ramp + drift, ax: 0.0, ay: p.lateral_accel },
            AccelSegment { start: p.onset + 2.0 * ramp + drift, ax: 0.0, ay: 0.0 },
        ];
        let mut spec = ScenarioSpec::new(ScenarioKind::CutIn, p.duration, vec![ego, merger]);
        spec.frame_rate = p.frame_rate;
        spec.reaction = p.reaction.clone();
        spec
    }

    /// A faster car passes the ego in the adjacent lane without changing lanes.
    pub fn overtake(duration: f64) -> Self {
        let ego = VehicleSpec::car(1, 0.0, LANE_2, 25.0);
        let other = VehicleSpec::car(2, -30.0, LANE_3, 32.0);
        ScenarioSpec::new(ScenarioKind::Overtake, duration, vec![ego, other])
    }

    pub fn empty(duration: f64) -> Self {
        ScenarioSpec::new(ScenarioKind::Empty, duration, Vec::new())
    }
}

/// Cut-in scenes in which both cars react to their own risk, with randomized
/// speeds, gaps, delays and reaction strengths. Every car responds to every
/// risk change it experiences, so the corpus is a positive control for the
/// evaluation.
pub fn responsive_corpus(scenes: usize, seed: u64) -> Result<Vec<Scene>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..scenes)
        .map(|i| {
            let mut rule = ReactionRule::new(0.1, rng.random_range(0.2..0.8), rng.random_range(2.0..4.0));
            rule.reactive_ids = vec![1, 2];
            let params = CutInParams {
                ego_speed: rng.random_range(22.0..32.0),
                speed_diff: rng.random_range(1.0..3.0),
                lead: rng.random_range(6.0..9.0),
                lateral_speed: rng.random_range(0.8..1.5),
                onset: rng.random_range(1.0..3.0),
                duration: 12.0,
                reaction: Some(rule),
                ..CutInParams::default()
            };
            let mut spec = ScenarioSpec::cut_in(&params);
            spec.recording_id = format!("responsive-{i:03}");
            generate(&spec, seed)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merger_ends_on_the_ego_lane_center() {
        let scene = generate(&ScenarioSpec::cut_in(&CutInParams::default()), 0).unwrap();
        let last = *scene.track(2).unwrap().states().last().unwrap();
        assert!((last.y - LANE_2).abs() < 1e-9);
        assert_eq!(last.vy, 0.0);
        assert_eq!(last.lane_id, 2);
    }

    #[test]
    fn tailgate_gap() {
        let scene = generate(&ScenarioSpec::tailgate(30.0, 0.3, 1.0), 0).unwrap();
        let (a, b) = (scene.track(1).unwrap().states()[0], scene.track(2).unwrap().states()[0]);
        assert!((b.x - a.x - 4.5 - 9.0).abs() < 1e-12);
    }

    #[test]
    fn responsive_corpus_is_deterministic() {
        let a = responsive_corpus(3, 5).unwrap();
        assert_eq!(a, responsive_corpus(3, 5).unwrap());
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|s| s.track(1).unwrap().states().iter().any(|st| st.ax < 0.0)));
        assert!(a.iter().all(|s| s.track(2).unwrap().states().iter().any(|st| st.ax > 0.0)));
    }
}
