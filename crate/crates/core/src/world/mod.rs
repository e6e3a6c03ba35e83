//! Deterministic 2D lane-world micro-simulator.
//!
//! A [`WorldState`] is an immutable snapshot holding the privileged
//! information the expert sees: ego pose, every actor, light phases, and the
//! route. [`step`] advances it by one fixed time step and reports new
//! infractions; [`render_sensors`] produces the noisy, range-limited view the
//! learner gets.

mod dynamics;
mod pid;
mod scenario;
mod sensors;
pub mod trace;

use serde::{Deserialize, Serialize};

use crate::config::WorldConfig;
use crate::geometry::{Obb, Route, RouteProjection, Vec2};

pub use dynamics::step;
pub use pid::{implied_target_speed, PidController};
pub use scenario::{spawn_scenario, ScenarioTemplate};
pub use sensors::{render_sensors, Detection, LightObs, SensorObs, SENTINEL_RANGE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub position: Vec2,
    /// Radians in (-pi, pi].
    pub heading: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActorKind {
    Vehicle,
    Pedestrian,
    Cyclist,
}

impl ActorKind {
    /// Footprint (length, width) in meters.
    pub fn footprint(self) -> (f64, f64) {
        match self {
            ActorKind::Vehicle => (4.5, 2.0),
            ActorKind::Pedestrian => (0.6, 0.6),
            ActorKind::Cyclist => (1.8, 0.7),
        }
    }
}

/// Scripted motion of an actor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Behavior {
    Static,
    /// Follows the route at a fixed lateral offset, optionally halting
    /// during a time window (seconds since spawn).
    Cruise {
        lane_offset: f64,
        cruise_speed: f64,
        accel: f64,
        stop_window: Option<(f64, f64)>,
    },
    /// Walks along its heading once the ego has progressed to `trigger_s`
    /// along the route, then stands still after `distance` meters.
    Crossing {
        trigger_s: f64,
        walk_speed: f64,
        distance: f64,
        walked: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub id: u32,
    pub kind: ActorKind,
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    pub behavior: Behavior,
}

impl Actor {
    pub fn footprint(&self) -> Obb {
        let (length, width) = self.kind.footprint();
        Obb { center: self.position, heading: self.heading, length, width }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LightPhase {
    Green,
    Yellow,
    Red,
}

impl LightPhase {
    pub fn next(self) -> Self {
        match self {
            LightPhase::Green => LightPhase::Yellow,
            LightPhase::Yellow => LightPhase::Red,
            LightPhase::Red => LightPhase::Green,
        }
    }

    pub fn duration(self, cfg: &WorldConfig) -> f64 {
        match self {
            LightPhase::Green => cfg.green_duration,
            LightPhase::Yellow => cfg.yellow_duration,
            LightPhase::Red => cfg.red_duration,
        }
    }

    /// Phase length in whole simulation steps.
    pub fn duration_ticks(self, cfg: &WorldConfig) -> u32 {
        ((self.duration(cfg) / cfg.dt).round() as u32).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficLight {
    pub id: u32,
    pub stop_line: Vec2,
    /// Arc length of the stop line along the route.
    pub stop_s: f64,
    pub phase: LightPhase,
    /// Steps elapsed in the current phase.
    pub phase_ticks: u32,
}

impl TrafficLight {
    pub fn phase_timer(&self, dt: f64) -> f64 {
        self.phase_ticks as f64 * dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    /// Left positive, in [-1, 1].
    pub steer: f64,
    pub throttle: f64,
    pub brake: bool,
}

impl Control {
    pub const REST: Control = Control { steer: 0.0, throttle: 0.0, brake: true };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InfractionKind {
    PedestrianCollision,
    VehicleCollision,
    LayoutCollision,
    RedLightViolation,
    Offroad,
    RouteTimeout,
}

impl InfractionKind {
    pub const ALL: [InfractionKind; 6] = [
        InfractionKind::PedestrianCollision,
        InfractionKind::VehicleCollision,
        InfractionKind::LayoutCollision,
        InfractionKind::RedLightViolation,
        InfractionKind::Offroad,
        InfractionKind::RouteTimeout,
    ];

    /// Collisions end an evaluation episode.
    pub fn is_fatal(self) -> bool {
        matches!(
            self,
            InfractionKind::PedestrianCollision | InfractionKind::VehicleCollision | InfractionKind::LayoutCollision
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfractionEvent {
    pub kind: InfractionKind,
    pub time_step: u64,
    /// Actor or light involved, when there is one.
    pub actor_id: Option<u32>,
}

/// Full privileged simulator state at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time_step: u64,
    pub ego: EgoState,
    pub actors: Vec<Actor>,
    pub lights: Vec<TrafficLight>,
    pub route: Route,
    pub route_length: f64,
    pub scenario: ScenarioTemplate,
    pub seed: u64,
    /// Ego arc-length progress along the route.
    pub progress: f64,
    /// Whether the ego was off-road after the previous step.
    pub offroad: bool,
}

impl WorldState {
    pub fn ego_footprint(&self, cfg: &WorldConfig) -> Obb {
        Obb {
            center: self.ego.position,
            heading: self.ego.heading,
            length: cfg.ego_length,
            width: cfg.ego_width,
        }
    }

    /// Projects a point onto the route near the ego.
    pub fn project(&self, p: Vec2) -> RouteProjection {
        self.route.project(p, None)
    }

    pub fn ego_projection(&self) -> RouteProjection {
        self.route.project(self.ego.position, Some((self.progress, 15.0)))
    }

    pub fn route_complete(&self) -> bool {
        self.progress >= self.route_length
    }

    pub fn actor(&self, id: u32) -> Option<&Actor> {
        self.actors.iter().find(|a| a.id == id)
    }

    pub fn next_actor_id(&self) -> u32 {
        self.actors.iter().map(|a| a.id + 1).chain(self.lights.iter().map(|l| l.id + 1)).max().unwrap_or(1)
    }
}
