//! Noisy, range-limited sensor view used by the learner.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ActorKind, LightPhase, WorldState};
use crate::config::SensorConfig;
use crate::geometry::{normalize_angle, to_local, Vec2};
use crate::rng;

/// Relative x of an empty detection slot.
pub const SENTINEL_RANGE: f64 = 200.0;

const SENSOR_SALT: u64 = 0x5345_4e53;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub rel_x: f64,
    pub rel_y: f64,
    pub rel_heading: f64,
    pub speed: f64,
    /// None for an empty slot.
    pub kind: Option<ActorKind>,
}

impl Detection {
    pub const EMPTY: Detection = Detection { rel_x: SENTINEL_RANGE, rel_y: 0.0, rel_heading: 0.0, speed: 0.0, kind: None };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LightObs {
    Red,
    Yellow,
    Green,
    Unknown,
}

impl From<LightPhase> for LightObs {
    fn from(p: LightPhase) -> Self {
        match p {
            LightPhase::Red => LightObs::Red,
            LightPhase::Yellow => LightObs::Yellow,
            LightPhase::Green => LightObs::Green,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorObs {
    pub ego_speed: f64,
    /// Fixed length, nearest first, padded with [`Detection::EMPTY`].
    pub detections: Vec<Detection>,
    pub visible_light_phase: LightObs,
    /// Noisy ego-frame x of the visible stop line; [`SENTINEL_RANGE`] when
    /// no light is visible.
    pub light_rel_x: f64,
    /// Upcoming route points in the ego frame.
    pub route_context: Vec<Vec2>,
}

/// Renders sensors for `world`. The noise stream is derived from the
/// episode seed, the time step, and `salt`, so the same state always yields
/// the same observation.
pub fn render_sensors(world: &WorldState, cfg: &SensorConfig, salt: u64) -> SensorObs {
    let mut rng = rng::stream(world.seed, &[SENSOR_SALT, world.time_step, salt]);
    let noise = (cfg.noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.noise_sigma).expect("finite sigma"));
    let mut jitter = |v: f64| match &noise {
        Some(n) => v + n.sample(&mut rng),
        None => v,
    };

    let ego = world.ego;
    let mut candidates: Vec<(f64, u32, usize)> = world
        .actors
        .iter()
        .enumerate()
        .filter_map(|(i, a)| {
            let d = a.position.dist(ego.position);
            (d <= cfg.detection_range).then_some((d, a.id, i))
        })
        .filter(|&(_, id, i)| {
            let target = world.actors[i].position;
            !world
                .actors
                .iter()
                .any(|o| o.id != id && o.kind == ActorKind::Vehicle && o.footprint().intersects_segment(ego.position, target))
        })
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut detections: Vec<Detection> = candidates
        .iter()
        .take(cfg.detection_slots)
        .map(|&(_, _, i)| {
            let a = &world.actors[i];
            let rel = to_local(ego.position, ego.heading, a.position);
            Detection {
                rel_x: jitter(rel.x),
                rel_y: jitter(rel.y),
                rel_heading: normalize_angle(a.heading - ego.heading),
                speed: a.speed,
                kind: Some(a.kind),
            }
        })
        .collect();
    detections.resize(cfg.detection_slots, Detection::EMPTY);

    let cone = cfg.light_cone_deg.to_radians();
    let visible = world
        .lights
        .iter()
        .filter_map(|l| {
            let rel = to_local(ego.position, ego.heading, l.stop_line);
            let d = rel.norm();
            (rel.x > 0.0 && d <= cfg.visibility_range && rel.y.atan2(rel.x).abs() <= cone).then_some((d, l.id, rel, l.phase))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (visible_light_phase, light_rel_x) = match visible {
        Some((_, _, rel, phase)) => (LightObs::from(phase), jitter(rel.x)),
        None => (LightObs::Unknown, SENTINEL_RANGE),
    };

    let route_context = (1..=cfg.route_context)
        .map(|k| {
            let p = world.route.point_at(world.progress + k as f64 * cfg.route_context_spacing);
            to_local(ego.position, ego.heading, p)
        })
        .collect();

    SensorObs { ego_speed: ego.speed, detections, visible_light_phase, light_rel_x, route_context }
}
