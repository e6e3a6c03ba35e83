//! Rule-based privileged expert.
//!
//! Four rules are checked in priority order and exactly one fires:
//!
//! 1. a pedestrian or cyclist inside the forward corridor: stop;
//! 2. a red light, or a yellow light that can still be stopped for, whose
//!    stop line lies within braking distance plus a margin: stop at the line;
//! 3. a lead vehicle inside the headway or minimum-distance envelope: stop
//!    if it is (nearly) stationary, otherwise match its speed;
//! 4. otherwise cruise.
//!
//! Waypoints are sampled along the route at the arc lengths implied by the
//! chosen speed profile and expressed in the ego frame.

use serde::{Deserialize, Serialize};

use crate::config::{ExpertConfig, WorldConfig};
use crate::geometry::{to_local, Vec2, Waypoint};
use crate::observation::{discretize_action, ActionClass};
use crate::world::{ActorKind, LightPhase, WorldState};

pub const HORIZON: usize = 10;

/// Ten future waypoints plus longitudinal commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// Ego frame, meters; one per future time step.
    pub waypoints: [Waypoint; HORIZON],
    /// Signed acceleration command, m/s^2.
    pub accel: f64,
    pub brake: bool,
    pub class_hint: ActionClass,
}

impl Action {
    /// Distances origin -> w0, w0 -> w1, ...
    pub fn spacings(&self) -> [f64; HORIZON] {
        let mut prev = Vec2::default();
        std::array::from_fn(|k| {
            let d = self.waypoints[k].dist(prev);
            prev = self.waypoints[k];
            d
        })
    }

    /// Clips consecutive spacing to `max_step` and, when braking, makes the
    /// spacing non-increasing. Directions are preserved.
    pub fn project_spacing(&mut self, max_step: f64) {
        let mut prev = Vec2::default();
        let mut cap = max_step;
        for k in 0..HORIZON {
            let step = self.waypoints[k] - prev;
            let len = step.norm();
            let allowed = len.min(cap);
            let next = if len > 0.0 && allowed < len { prev + step.scale(allowed / len) } else { self.waypoints[k] };
            if self.brake {
                cap = next.dist(prev);
            }
            self.waypoints[k] = next;
            prev = next;
        }
    }

    pub fn satisfies_invariants(&self, max_step: f64, tol: f64) -> bool {
        let sp = self.spacings();
        let finite = self.waypoints.iter().all(|w| w.is_finite()) && self.accel.is_finite();
        let bounded = sp.iter().all(|s| *s <= max_step + tol);
        let monotone = !self.brake || sp.windows(2).all(|w| w[1] <= w[0] + tol);
        finite && bounded && monotone
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertRule {
    VulnerableInCorridor,
    TrafficLight,
    LeadActor,
    Cruise,
}

impl ExpertRule {
    pub fn index(self) -> u8 {
        match self {
            ExpertRule::VulnerableInCorridor => 1,
            ExpertRule::TrafficLight => 2,
            ExpertRule::LeadActor => 3,
            ExpertRule::Cruise => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub rule: ExpertRule,
}

enum Profile {
    /// Constant speed.
    Speed(f64),
    /// Decelerate so the ego centre travels at most this far.
    StopWithin(f64),
}

/// Braking distance at full deceleration.
pub fn braking_distance(speed: f64, a_max: f64) -> f64 {
    speed * speed / (2.0 * a_max)
}

fn choose(world: &WorldState, wc: &WorldConfig, ec: &ExpertConfig) -> (Profile, ExpertRule) {
    let ego_s = world.ego_projection().s;
    let v = world.ego.speed;
    let half_len = wc.ego_length / 2.0;

    // R1
    let corridor_half = (wc.ego_width + ec.corridor_margin) / 2.0;
    let vulnerable = world
        .actors
        .iter()
        .filter(|a| matches!(a.kind, ActorKind::Pedestrian | ActorKind::Cyclist))
        .filter_map(|a| {
            let p = world.route.project(a.position, Some((ego_s, ec.corridor_lookahead + 10.0)));
            let ahead = p.s - ego_s;
            (ahead > 0.0 && ahead <= ec.corridor_lookahead && p.lateral.abs() <= corridor_half)
                .then(|| ahead - half_len - a.kind.footprint().0 / 2.0 - ec.stop_buffer)
        })
        .min_by(f64::total_cmp);
    if let Some(limit) = vulnerable {
        return (Profile::StopWithin(limit), ExpertRule::VulnerableInCorridor);
    }

    // R2
    let braking = braking_distance(v, wc.a_max);
    let light = world
        .lights
        .iter()
        .map(|l| (l.stop_s - (ego_s + half_len), l.phase))
        .filter(|(d, _)| *d > 0.0)
        .min_by(|a, b| a.0.total_cmp(&b.0));
    if let Some((d, phase)) = light {
        let within = d <= braking + ec.light_margin;
        let must_stop = match phase {
            LightPhase::Red => within,
            LightPhase::Yellow => within && d >= braking,
            LightPhase::Green => false,
        };
        if must_stop {
            return (Profile::StopWithin(d), ExpertRule::TrafficLight);
        }
    }

    // R3
    let lead = world
        .actors
        .iter()
        .filter(|a| matches!(a.kind, ActorKind::Vehicle | ActorKind::Cyclist))
        .filter_map(|a| {
            let p = world.route.project(a.position, Some((ego_s, 80.0)));
            let ahead = p.s - ego_s;
            (ahead > 0.0 && p.lateral.abs() < wc.lane_half_width).then(|| (ahead - half_len - a.kind.footprint().0 / 2.0, a.speed))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0));
    if let Some((gap, lead_speed)) = lead {
        let close = gap < ec.min_distance || (v > 0.0 && gap / v < ec.headway);
        if close {
            let profile = if lead_speed < ec.stopped_speed {
                Profile::StopWithin(gap - ec.stop_buffer)
            } else {
                Profile::Speed(lead_speed.min(wc.cruise_speed))
            };
            return (profile, ExpertRule::LeadActor);
        }
    }

    (Profile::Speed(wc.cruise_speed), ExpertRule::Cruise)
}

fn arc_offsets(profile: &Profile, v: f64, wc: &WorldConfig) -> ([f64; HORIZON], f64, bool) {
    match *profile {
        Profile::Speed(target) => {
            let accel = ((target - v) / 1.0).clamp(-wc.a_max, wc.a_max);
            (std::array::from_fn(|k| (k + 1) as f64 * target * wc.dt), accel, false)
        }
        Profile::StopWithin(limit) => {
            let limit = limit.max(0.0);
            if v <= 0.0 {
                return ([0.0; HORIZON], 0.0, true);
            }
            let decel = if limit > 0.0 { v * v / (2.0 * limit) } else { wc.a_max };
            let decel = decel.clamp(1e-9, wc.a_max);
            let t_stop = v / decel;
            let offsets = std::array::from_fn(|k| {
                let t = ((k + 1) as f64 * wc.dt).min(t_stop);
                (v * t - 0.5 * decel * t * t).min(limit)
            });
            (offsets, -decel, true)
        }
    }
}

/// Full expert decision including which rule fired.
pub fn expert_decide(world: &WorldState, wc: &WorldConfig, ec: &ExpertConfig) -> Decision {
    let (profile, rule) = choose(world, wc, ec);
    let ego_s = world.ego_projection().s;
    let (offsets, accel, brake) = arc_offsets(&profile, world.ego.speed, wc);
    let waypoints = offsets.map(|ds| to_local(world.ego.position, world.ego.heading, world.route.point_at(ego_s + ds)));
    let mut action = Action { waypoints, accel, brake, class_hint: ActionClass::Go };
    action.project_spacing(wc.v_max * wc.dt);
    action.class_hint = discretize_action(&action, wc, ec);
    Decision { action, rule }
}

/// The expert policy: privileged world state in, action out.
pub fn expert_act(world: &WorldState, wc: &WorldConfig, ec: &ExpertConfig) -> Action {
    expert_decide(world, wc, ec).action
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{spawn_scenario, Actor, Behavior, ScenarioTemplate, TrafficLight};

    fn clear(speed: f64) -> WorldState {
        let mut w = spawn_scenario(ScenarioTemplate::ClearRoad, 7, &WorldConfig::default());
        w.ego.speed = speed;
        w
    }

    fn cfgs() -> (WorldConfig, ExpertConfig) {
        (WorldConfig::default(), ExpertConfig::default())
    }

    #[test]
    fn cruise_spacing() {
        let (wc, ec) = cfgs();
        let d = expert_decide(&clear(6.0), &wc, &ec);
        assert_eq!(d.rule, ExpertRule::Cruise);
        assert!(!d.action.brake);
        for s in d.action.spacings() {
            assert!((s - 0.6).abs() < 1e-9);
        }
        assert_eq!(d.action.class_hint, ActionClass::Go);
    }

    #[test]
    fn red_light_within_braking_margin_stops() {
        let (wc, ec) = cfgs();
        let mut w = clear(6.0);
        let stop_s = wc.ego_length / 2.0 + 8.0;
        w.lights.push(TrafficLight { id: 9, stop_line: Vec2::new(stop_s, 0.0), stop_s, phase: LightPhase::Red, phase_ticks: 0 });
        let d = expert_decide(&w, &wc, &ec);
        assert_eq!(d.rule, ExpertRule::TrafficLight);
        assert!(d.action.brake);
        assert_eq!(d.action.class_hint, ActionClass::Stop);
        let last = d.action.waypoints[HORIZON - 1];
        assert!(last.x <= 8.0 + 1e-9);
        assert!(d.action.satisfies_invariants(wc.v_max * wc.dt, 1e-9));
        // 10 m is past the 9.5 m threshold.
        let stop_s = wc.ego_length / 2.0 + 10.0;
        w.lights[0].stop_s = stop_s;
        w.lights[0].stop_line = Vec2::new(stop_s, 0.0);
        assert_eq!(expert_decide(&w, &wc, &ec).rule, ExpertRule::Cruise);
    }

    #[test]
    fn yellow_too_close_to_stop_is_passed() {
        let (wc, ec) = cfgs();
        let mut w = clear(6.0);
        let stop_s = wc.ego_length / 2.0 + 3.0;
        w.lights.push(TrafficLight { id: 9, stop_line: Vec2::new(stop_s, 0.0), stop_s, phase: LightPhase::Yellow, phase_ticks: 0 });
        assert_eq!(expert_decide(&w, &wc, &ec).rule, ExpertRule::Cruise);
        w.lights[0].phase = LightPhase::Red;
        assert_eq!(expert_decide(&w, &wc, &ec).rule, ExpertRule::TrafficLight);
    }

    #[test]
    fn stationary_lead_vehicle_stops() {
        let (wc, ec) = cfgs();
        let mut w = clear(6.0);
        w.actors.push(Actor {
            id: 4,
            kind: ActorKind::Vehicle,
            position: Vec2::new(wc.ego_length + 6.0, 0.0),
            heading: 0.0,
            speed: 0.0,
            behavior: Behavior::Static,
        });
        let d = expert_decide(&w, &wc, &ec);
        assert_eq!(d.rule, ExpertRule::LeadActor);
        assert!(d.action.brake);
        w.actors[0].speed = 3.0;
        let d = expert_decide(&w, &wc, &ec);
        assert_eq!(d.rule, ExpertRule::LeadActor);
        assert!(!d.action.brake);
        assert_eq!(d.action.class_hint, ActionClass::Slow);
    }

    #[test]
    fn pedestrian_in_corridor_outranks_everything() {
        let (wc, ec) = cfgs();
        let mut w = clear(6.0);
        w.actors.push(Actor {
            id: 4,
            kind: ActorKind::Pedestrian,
            position: Vec2::new(12.0, 0.8),
            heading: 0.0,
            speed: 1.0,
            behavior: Behavior::Static,
        });
        w.lights.push(TrafficLight { id: 9, stop_line: Vec2::new(8.0, 0.0), stop_s: 8.0, phase: LightPhase::Red, phase_ticks: 0 });
        assert_eq!(expert_decide(&w, &wc, &ec).rule, ExpertRule::VulnerableInCorridor);
        w.actors[0].position.y = 3.0;
        assert_eq!(expert_decide(&w, &wc, &ec).rule, ExpertRule::TrafficLight);
    }

    #[test]
    fn stopped_ego_braking_waypoints_collapse() {
        let (wc, ec) = cfgs();
        let mut w = clear(0.0);
        w.lights.push(TrafficLight { id: 9, stop_line: Vec2::new(7.0, 0.0), stop_s: 7.0, phase: LightPhase::Red, phase_ticks: 0 });
        let a = expert_act(&w, &wc, &ec);
        assert!(a.brake);
        assert!(a.waypoints.iter().all(|p| p.norm() < 1e-9));
    }

    #[test]
    fn projection_caps_and_orders_spacing() {
        let mut a = Action {
            waypoints: std::array::from_fn(|k| Vec2::new((k + 1) as f64 * (1.0 + 0.1 * k as f64), 0.0)),
            accel: 0.0,
            brake: true,
            class_hint: ActionClass::Stop,
        };
        a.project_spacing(0.8);
        assert!(a.satisfies_invariants(0.8, 1e-12));
    }
}
