//! Forward dynamics and infraction detection.

use super::{
    Actor, ActorKind, Behavior, Control, InfractionEvent, InfractionKind, WorldState,
};
use crate::config::WorldConfig;
use crate::geometry::{normalize_angle, Vec2};

fn advance_ego(world: &WorldState, control: &Control, cfg: &WorldConfig) -> super::EgoState {
    let ego = world.ego;
    let steer = control.steer.clamp(-1.0, 1.0);
    let throttle = if control.brake { 0.0 } else { control.throttle.clamp(0.0, 1.0) };
    let brake = if control.brake { cfg.a_max } else { 0.0 };
    let accel = (throttle * cfg.a_max - brake - cfg.drag * ego.speed).clamp(-cfg.a_max, cfg.a_max);
    let v = ego.speed;
    let position = ego.position + Vec2::from_heading(ego.heading).scale(v * cfg.dt);
    let yaw_rate = v / cfg.wheelbase * (steer * cfg.max_steer_angle).tan();
    super::EgoState {
        position,
        heading: normalize_angle(ego.heading + yaw_rate * cfg.dt),
        speed: (v + accel * cfg.dt).clamp(0.0, cfg.v_max),
    }
}

fn advance_actor(actor: &Actor, world: &WorldState, ego_progress: f64, cfg: &WorldConfig) -> Actor {
    let mut next = actor.clone();
    let time = world.time_step as f64 * cfg.dt;
    match actor.behavior {
        Behavior::Static => {}
        Behavior::Cruise { lane_offset, cruise_speed, accel, stop_window } => {
            let halted = stop_window.is_some_and(|(a, b)| time >= a && time < b);
            let target = if halted { 0.0 } else { cruise_speed };
            let dv = (target - actor.speed).clamp(-accel * cfg.dt, accel * cfg.dt);
            let s = world.route.project(actor.position, None).s + actor.speed * cfg.dt;
            next.position = world.route.offset_point(s, lane_offset);
            next.heading = world.route.heading_at(s);
            next.speed = (actor.speed + dv).max(0.0);
        }
        Behavior::Crossing { trigger_s, walk_speed, distance, walked } => {
            if ego_progress >= trigger_s && walked < distance {
                let stride = (walk_speed * cfg.dt).min(distance - walked);
                next.position = actor.position + Vec2::from_heading(actor.heading).scale(stride);
                next.speed = if walked + stride < distance { walk_speed } else { 0.0 };
                next.behavior = Behavior::Crossing { trigger_s, walk_speed, distance, walked: walked + stride };
            } else {
                next.speed = 0.0;
            }
        }
    }
    next
}

/// Advances the world by one step under `control`, returning the new state
/// and every infraction that occurred during the step.
pub fn step(world: &WorldState, control: &Control, cfg: &WorldConfig) -> (WorldState, Vec<InfractionEvent>) {
    let ego = advance_ego(world, control, cfg);
    let proj = world.route.project(ego.position, Some((world.progress, 15.0)));
    let progress = proj.s.max(world.progress);
    let time_step = world.time_step + 1;
    let mut events = Vec::new();

    // Stop lines crossed by the front bumper while red, judged on the phase
    // in force during the step.
    let half = cfg.ego_length / 2.0;
    let front_before = world.progress + half;
    let front_after = progress + half;
    for light in &world.lights {
        if light.phase == super::LightPhase::Red && light.stop_s > front_before && light.stop_s <= front_after {
            events.push(InfractionEvent {
                kind: InfractionKind::RedLightViolation,
                time_step,
                actor_id: Some(light.id),
            });
        }
    }

    let actors: Vec<Actor> = world.actors.iter().map(|a| advance_actor(a, world, progress, cfg)).collect();
    let lights = world
        .lights
        .iter()
        .map(|l| {
            let mut l = l.clone();
            l.phase_ticks += 1;
            if l.phase_ticks >= l.phase.duration_ticks(cfg) {
                l.phase = l.phase.next();
                l.phase_ticks = 0;
            }
            l
        })
        .collect();

    let mut next = WorldState {
        time_step,
        ego,
        actors,
        lights,
        route: world.route.clone(),
        route_length: world.route_length,
        scenario: world.scenario,
        seed: world.seed,
        progress,
        offroad: false,
    };

    let ego_fp = next.ego_footprint(cfg);
    for actor in &next.actors {
        if actor.footprint().overlaps(&ego_fp) {
            let kind = match actor.kind {
                ActorKind::Pedestrian => InfractionKind::PedestrianCollision,
                ActorKind::Vehicle | ActorKind::Cyclist => InfractionKind::VehicleCollision,
            };
            events.push(InfractionEvent { kind, time_step, actor_id: Some(actor.id) });
        }
    }

    let lateral = proj.lateral.abs();
    next.offroad = lateral > cfg.offroad_offset;
    if next.offroad && !world.offroad {
        events.push(InfractionEvent { kind: InfractionKind::Offroad, time_step, actor_id: None });
    }
    if lateral > cfg.layout_offset {
        events.push(InfractionEvent { kind: InfractionKind::LayoutCollision, time_step, actor_id: None });
    }
    (next, events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{spawn_scenario, LightPhase, ScenarioTemplate, TrafficLight};

    fn cfg() -> WorldConfig {
        WorldConfig::default()
    }

    fn clear(speed: f64) -> WorldState {
        let mut w = spawn_scenario(ScenarioTemplate::ClearRoad, 7, &cfg());
        w.ego.speed = speed;
        w
    }

    #[test]
    fn rest_state_is_stationary() {
        let w = clear(0.0);
        let (n, ev) = step(&w, &Control { steer: 0.0, throttle: 0.0, brake: true }, &cfg());
        assert_eq!(n.ego.position, w.ego.position);
        assert_eq!(n.ego.speed, 0.0);
        assert!(ev.is_empty());
        assert_eq!(n.time_step, 1);
    }

    #[test]
    fn constant_speed_displacement() {
        let w = clear(6.0);
        let (n, _) = step(&w, &Control { steer: 0.0, throttle: 0.15, brake: false }, &cfg());
        assert!((n.ego.position.dist(w.ego.position) - 0.6).abs() < 1e-12);
        assert!((n.progress - 0.6).abs() < 1e-12);
    }

    #[test]
    fn red_light_crossing_is_reported() {
        let c = cfg();
        let mut w = clear(6.0);
        w.lights.push(TrafficLight {
            id: 50,
            stop_line: Vec2::new(c.ego_length / 2.0 + 0.3, 0.0),
            stop_s: c.ego_length / 2.0 + 0.3,
            phase: LightPhase::Red,
            phase_ticks: 0,
        });
        let (_, ev) = step(&w, &Control { steer: 0.0, throttle: 0.0, brake: false }, &c);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, InfractionKind::RedLightViolation);
        w.lights[0].phase = LightPhase::Green;
        let (_, ev) = step(&w, &Control { steer: 0.0, throttle: 0.0, brake: false }, &c);
        assert!(ev.is_empty());
    }

    #[test]
    fn collision_reported_once_per_actor() {
        let c = cfg();
        let mut w = clear(0.0);
        w.actors.push(Actor {
            id: 3,
            kind: ActorKind::Pedestrian,
            position: Vec2::new(1.0, 0.0),
            heading: 0.0,
            speed: 0.0,
            behavior: Behavior::Static,
        });
        let (_, ev) = step(&w, &Control::REST, &c);
        assert_eq!(ev, vec![InfractionEvent { kind: InfractionKind::PedestrianCollision, time_step: 1, actor_id: Some(3) }]);
    }

    #[test]
    fn light_cycle_order_and_period() {
        let c = cfg();
        let mut w = clear(0.0);
        w.lights.push(TrafficLight { id: 9, stop_line: Vec2::new(50.0, 0.0), stop_s: 50.0, phase: LightPhase::Green, phase_ticks: 0 });
        let mut seen = vec![(LightPhase::Green, 0u64)];
        for _ in 0..(c.light_cycle() / c.dt).round() as usize {
            w = step(&w, &Control::REST, &c).0;
            let p = w.lights[0].phase;
            if seen.last().unwrap().0 != p {
                seen.push((p, w.time_step));
            }
        }
        assert_eq!(
            seen,
            vec![(LightPhase::Green, 0), (LightPhase::Yellow, 80), (LightPhase::Red, 100), (LightPhase::Green, 160)]
        );
    }

    #[test]
    fn offroad_reported_on_entry_only() {
        let c = cfg();
        let mut w = clear(6.0);
        w.ego.heading = 0.5;
        let mut offroad = 0;
        for _ in 0..20 {
            let (n, ev) = step(&w, &Control { steer: 0.0, throttle: 0.0, brake: false }, &c);
            offroad += ev.iter().filter(|e| e.kind == InfractionKind::Offroad).count();
            w = n;
        }
        assert_eq!(offroad, 1);
    }
}
