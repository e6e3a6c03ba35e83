//! Parametric scenario templates.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Actor, ActorKind, Behavior, EgoState, LightPhase, TrafficLight, WorldState};
use crate::config::WorldConfig;
use crate::error::WorldError;
use crate::geometry::{Route, Vec2};
use crate::rng;

const SPAWN_SALT: u64 = 0x5350_4157;
const CLEAR_ROAD_LENGTH: f64 = 200.0;
const PARKED_OFFSET: f64 = 3.2;
const SIDEWALK_OFFSET: f64 = 5.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioTemplate {
    ClearRoad,
    LeadVehicle,
    RedLight,
    CrossingPedestrian,
    OccludedPedestrian,
    Mixed,
}

impl ScenarioTemplate {
    pub const ALL: [ScenarioTemplate; 6] = [
        ScenarioTemplate::ClearRoad,
        ScenarioTemplate::LeadVehicle,
        ScenarioTemplate::RedLight,
        ScenarioTemplate::CrossingPedestrian,
        ScenarioTemplate::OccludedPedestrian,
        ScenarioTemplate::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioTemplate::ClearRoad => "clear_road",
            ScenarioTemplate::LeadVehicle => "lead_vehicle",
            ScenarioTemplate::RedLight => "red_light",
            ScenarioTemplate::CrossingPedestrian => "crossing_pedestrian",
            ScenarioTemplate::OccludedPedestrian => "occluded_pedestrian",
            ScenarioTemplate::Mixed => "mixed",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn parse(name: &str) -> Result<Self, WorldError> {
        Self::from_name(name).ok_or_else(|| WorldError::UnknownTemplate(name.to_string()))
    }

    /// Stable numeric id used in records and seed derivation.
    pub fn id(self) -> u64 {
        Self::ALL.iter().position(|t| *t == self).expect("listed") as u64
    }
}

impl fmt::Display for ScenarioTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

struct Builder<'a> {
    cfg: &'a WorldConfig,
    rng: rng::Stream,
    route: Route,
    actors: Vec<Actor>,
    lights: Vec<TrafficLight>,
    next_id: u32,
}

fn straight_route(length: f64) -> Route {
    let n = length.ceil() as usize;
    Route::new((0..=n).map(|i| Vec2::new((i as f64).min(length), 0.0)).collect())
}

/// Straight lead-in, circular arc, straight run-out; sampled every meter.
fn curved_route(length: f64, lead_in: f64, radius: f64, angle: f64) -> Route {
    let mut pts = Vec::new();
    let mut s = 0.0;
    let arc_len = radius * angle.abs();
    let turn = angle.signum();
    let arc_end = lead_in + arc_len;
    let end_heading = angle;
    let arc_exit = Vec2::new(radius * angle.abs().sin(), turn * radius * (1.0 - angle.abs().cos()));
    while s <= length + 1e-9 {
        let p = if s <= lead_in {
            Vec2::new(s, 0.0)
        } else if s <= arc_end {
            let phi = (s - lead_in) / radius;
            Vec2::new(lead_in + radius * phi.sin(), turn * radius * (1.0 - phi.cos()))
        } else {
            let d = s - arc_end;
            Vec2::new(lead_in, 0.0) + arc_exit + Vec2::from_heading(end_heading).scale(d)
        };
        pts.push(p);
        if s >= length {
            break;
        }
        s = (s + 1.0).min(length);
    }
    Route::new(pts)
}

impl<'a> Builder<'a> {
    fn new(cfg: &'a WorldConfig, seed: u64, template: ScenarioTemplate) -> Self {
        Self {
            cfg,
            rng: rng::stream(seed, &[SPAWN_SALT, template.id()]),
            route: straight_route(1.0),
            actors: Vec::new(),
            lights: Vec::new(),
            next_id: 1,
        }
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            lo
        } else {
            self.rng.gen_range(lo..hi)
        }
    }

    fn side(&mut self) -> f64 {
        if self.rng.gen_bool(0.5) {
            1.0
        } else {
            -1.0
        }
    }

    fn route_length(&mut self) -> f64 {
        let (lo, hi) = (self.cfg.min_route_length, self.cfg.max_route_length);
        self.uniform(lo, hi)
    }

    fn straight(&mut self) {
        let len = self.route_length();
        self.route = straight_route(len);
    }

    fn curved(&mut self) {
        let len = self.route_length();
        let lead_in = self.uniform(30.0, 60.0);
        let radius = self.uniform(40.0, 80.0);
        let angle = self.side() * self.uniform(20.0, 45.0).to_radians();
        self.route = curved_route(len, lead_in, radius, angle);
    }

    fn fits(&self, actor: &Actor) -> bool {
        let fp = actor.footprint();
        let ego_start = self.route.point_at(0.0);
        if actor.position.dist(ego_start) < 12.0 {
            return false;
        }
        self.actors.iter().all(|a| !a.footprint().overlaps(&fp))
    }

    fn push(&mut self, kind: ActorKind, s: f64, lateral: f64, heading_offset: f64, behavior: Behavior) -> bool {
        let heading = crate::geometry::normalize_angle(self.route.heading_at(s) + heading_offset);
        let actor = Actor {
            id: self.next_id,
            kind,
            position: self.route.offset_point(s, lateral),
            heading,
            speed: 0.0,
            behavior,
        };
        if !self.fits(&actor) {
            return false;
        }
        self.next_id += 1;
        self.actors.push(actor);
        true
    }

    /// Tries a few random placements of a static actor; gives up silently.
    fn scatter(&mut self, kind: ActorKind, lateral: f64, count: usize) {
        let len = self.route.length();
        for _ in 0..count {
            for _ in 0..8 {
                let s = self.uniform(20.0, len - 10.0);
                if self.push(kind, s, lateral, 0.0, Behavior::Static) {
                    break;
                }
            }
        }
    }

    fn sidewalk_pedestrians(&mut self, max: usize) {
        let n = self.rng.gen_range(0..=max);
        for _ in 0..n {
            let side = self.side();
            self.scatter(ActorKind::Pedestrian, side * SIDEWALK_OFFSET, 1);
        }
    }

    fn parked_vehicles(&mut self, max: usize) {
        let n = self.rng.gen_range(0..=max);
        self.scatter(ActorKind::Vehicle, -PARKED_OFFSET, n);
    }

    fn light(&mut self, stop_s: f64) {
        let offset = self.rng.gen_range(0..self.light_cycle());
        self.push_light(stop_s, offset);
    }

    /// A light timed so that an ego cruising from the start reaches the stop
    /// line in the first two thirds of the red phase.
    fn light_red_on_arrival(&mut self, stop_s: f64) {
        let cfg = self.cfg;
        let cycle = self.light_cycle();
        let eta = ((stop_s - cfg.ego_length / 2.0) / cfg.cruise_speed / cfg.dt).round() as u32;
        let red_start = LightPhase::Green.duration_ticks(cfg) + LightPhase::Yellow.duration_ticks(cfg);
        let arrival = red_start + self.rng.gen_range(0..LightPhase::Red.duration_ticks(cfg) * 2 / 3);
        let offset = (arrival + cycle - eta % cycle) % cycle;
        self.push_light(stop_s, offset);
    }

    fn light_cycle(&self) -> u32 {
        [LightPhase::Green, LightPhase::Yellow, LightPhase::Red]
            .iter()
            .map(|p| p.duration_ticks(self.cfg))
            .sum()
    }

    /// Adds a light whose cycle is `offset` ticks past the start of green.
    fn push_light(&mut self, stop_s: f64, mut offset: u32) {
        let cfg = self.cfg;
        let mut phase = LightPhase::Green;
        while offset >= phase.duration_ticks(cfg) {
            offset -= phase.duration_ticks(cfg);
            phase = phase.next();
        }
        let id = self.next_id;
        self.next_id += 1;
        self.lights.push(TrafficLight {
            id,
            stop_line: self.route.point_at(stop_s),
            stop_s,
            phase,
            phase_ticks: offset,
        });
    }

    /// A pedestrian or cyclist that starts `start_lateral` meters beside the
    /// route at arc `s` and crosses once the ego is close enough that, at
    /// cruise speed, it enters the ego corridor `entry_gap` meters ahead.
    fn crossing(&mut self, kind: ActorKind, s: f64, start_lateral: f64, speed: f64, entry_gap: f64) -> bool {
        let corridor_edge = (self.cfg.ego_width + 1.0) / 2.0;
        let time_to_corridor = (start_lateral.abs() - corridor_edge).max(0.0) / speed;
        let trigger_s = s - entry_gap - self.cfg.cruise_speed * time_to_corridor;
        let heading_offset = if start_lateral > 0.0 { -PI / 2.0 } else { PI / 2.0 };
        self.push(
            kind,
            s,
            start_lateral,
            heading_offset,
            Behavior::Crossing {
                trigger_s,
                walk_speed: speed,
                distance: start_lateral.abs() + 6.0,
                walked: 0.0,
            },
        )
    }

    fn finish(self, template: ScenarioTemplate, seed: u64) -> WorldState {
        let mut rng = self.rng;
        let start_speed = rng.gen_range(0.0..=self.cfg.cruise_speed);
        let route_length = self.route.length();
        WorldState {
            time_step: 0,
            ego: EgoState {
                position: self.route.point_at(0.0),
                heading: self.route.heading_at(0.0),
                speed: start_speed,
            },
            actors: self.actors,
            lights: self.lights,
            route: self.route,
            route_length,
            scenario: template,
            seed,
            progress: 0.0,
            offroad: false,
        }
    }
}

/// Builds the initial world for a template. Identical `(template, seed)`
/// pairs always produce identical states.
pub fn spawn_scenario(template: ScenarioTemplate, seed: u64, cfg: &WorldConfig) -> WorldState {
    let mut b = Builder::new(cfg, seed, template);
    match template {
        ScenarioTemplate::ClearRoad => {
            b.route = straight_route(CLEAR_ROAD_LENGTH);
        }
        ScenarioTemplate::LeadVehicle => {
            if b.rng.gen_bool(0.5) {
                b.curved();
            } else {
                b.straight();
            }
            let s = b.uniform(25.0, 45.0);
            let cruise_speed = b.uniform(3.5, 5.5);
            let start = b.uniform(4.0, 12.0);
            let duration = b.uniform(2.0, 5.0);
            let behavior = Behavior::Cruise {
                lane_offset: 0.0,
                cruise_speed,
                accel: 3.0,
                stop_window: Some((start, start + duration)),
            };
            b.push(ActorKind::Vehicle, s, 0.0, 0.0, behavior);
            if let Some(lead) = b.actors.last_mut() {
                lead.speed = cruise_speed;
            }
            b.parked_vehicles(2);
            b.sidewalk_pedestrians(2);
        }
        ScenarioTemplate::RedLight => {
            b.straight();
            let stop_s = b.uniform(50.0, 110.0);
            b.light_red_on_arrival(stop_s);
            b.parked_vehicles(1);
            b.sidewalk_pedestrians(2);
        }
        ScenarioTemplate::CrossingPedestrian => {
            b.straight();
            let s = b.uniform(50.0, 120.0);
            let side = b.side();
            let gap = b.uniform(10.0, 16.0);
            if b.rng.gen_bool(0.25) {
                let speed = b.uniform(2.5, 4.0);
                b.crossing(ActorKind::Cyclist, s, side * 7.0, speed, gap + 4.0);
            } else {
                let speed = b.uniform(1.0, 1.6);
                b.crossing(ActorKind::Pedestrian, s, side * 6.0, speed, gap);
            }
            b.parked_vehicles(1);
            b.sidewalk_pedestrians(1);
        }
        ScenarioTemplate::OccludedPedestrian => {
            b.straight();
            let s = b.uniform(50.0, 110.0);
            let side = b.side();
            b.push(ActorKind::Vehicle, s, side * PARKED_OFFSET, 0.0, Behavior::Static);
            let speed = b.uniform(1.0, 1.5);
            let gap = b.uniform(10.0, 14.0);
            b.crossing(ActorKind::Pedestrian, s + 3.2, side * 3.3, speed, gap);
            b.sidewalk_pedestrians(1);
        }
        ScenarioTemplate::Mixed => {
            b.curved();
            let len = b.route.length();
            let stop_s = b.uniform(50.0, 80.0);
            b.light(stop_s);
            let ped_s = (stop_s + b.uniform(40.0, 70.0)).min(len - 20.0);
            let side = b.side();
            let speed = b.uniform(1.0, 1.6);
            let gap = b.uniform(10.0, 16.0);
            b.crossing(ActorKind::Pedestrian, ped_s, side * 6.0, speed, gap);
            b.parked_vehicles(2);
            b.sidewalk_pedestrians(2);
        }
    }
    b.finish(template, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> WorldConfig {
        WorldConfig::default()
    }

    #[test]
    fn clear_road_is_empty_200m() {
        let w = spawn_scenario(ScenarioTemplate::ClearRoad, 7, &cfg());
        assert!(w.actors.is_empty());
        assert!(w.lights.is_empty());
        assert!((w.route_length - 200.0).abs() < 1e-9);
    }

    #[test]
    fn spawn_is_deterministic() {
        let a = spawn_scenario(ScenarioTemplate::RedLight, 7, &cfg());
        let b = spawn_scenario(ScenarioTemplate::RedLight, 7, &cfg());
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = spawn_scenario(ScenarioTemplate::RedLight, 8, &cfg());
        assert_ne!(a, c);
    }

    #[test]
    fn footprints_never_overlap_at_spawn() {
        for template in ScenarioTemplate::ALL {
            for seed in 0..50 {
                let w = spawn_scenario(template, seed, &cfg());
                for (i, a) in w.actors.iter().enumerate() {
                    for b in &w.actors[i + 1..] {
                        assert!(!a.footprint().overlaps(&b.footprint()), "{template} seed {seed}: {} vs {}", a.id, b.id);
                    }
                }
            }
        }
        let w = spawn_scenario(ScenarioTemplate::Mixed, 3, &cfg());
        assert!(!w.actors.is_empty());
    }

    #[test]
    fn route_lengths_within_bounds() {
        let c = cfg();
        for template in ScenarioTemplate::ALL.into_iter().skip(1) {
            for seed in 0..20 {
                let w = spawn_scenario(template, seed, &c);
                assert!(w.route_length >= c.min_route_length - 1e-6 && w.route_length <= c.max_route_length + 1e-6);
                for seg in w.route.points().windows(2) {
                    assert!(seg[0].dist(seg[1]) > 0.0);
                }
            }
        }
    }

    #[test]
    fn template_names_round_trip() {
        for t in ScenarioTemplate::ALL {
            assert_eq!(ScenarioTemplate::parse(t.name()).unwrap(), t);
        }
        assert_eq!(ScenarioTemplate::parse("town05"), Err(WorldError::UnknownTemplate("town05".into())));
    }
}
