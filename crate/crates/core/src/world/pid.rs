//! Low-level waypoint tracking.

use serde::{Deserialize, Serialize};

use super::{Control, WorldState};
use crate::config::{PidConfig, WorldConfig};
use crate::expert::Action;
use crate::geometry::Vec2;

/// Speed an action asks for: the mean waypoint spacing over the horizon,
/// or zero when braking.
pub fn implied_target_speed(action: &Action, dt: f64) -> f64 {
    if action.brake {
        return 0.0;
    }
    let mut prev = Vec2::default();
    let mut total = 0.0;
    for w in &action.waypoints {
        total += w.dist(prev);
        prev = *w;
    }
    total / (action.waypoints.len() as f64 * dt)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct Loop {
    integral: f64,
    prev_error: Option<f64>,
}

impl Loop {
    fn update(&mut self, error: f64, kp: f64, ki: f64, kd: f64, dt: f64, clamp: f64) -> f64 {
        self.integral = (self.integral + error * dt).clamp(-clamp, clamp);
        let derivative = self.prev_error.map_or(0.0, |p| (error - p) / dt);
        self.prev_error = Some(error);
        kp * error + ki * self.integral + kd * derivative
    }
}

/// Lateral PID on heading error to the next waypoint plus longitudinal PID
/// on speed error. Holds the loop memory between steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PidController {
    lateral: Loop,
    longitudinal: Loop,
}

impl PidController {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn control(&mut self, world: &WorldState, action: &Action, pid: &PidConfig, wc: &WorldConfig) -> Control {
        let target = action
            .waypoints
            .iter()
            .find(|w| w.norm() >= pid.lookahead)
            .or_else(|| action.waypoints.last().filter(|w| w.norm() > 0.5));
        let heading_error = target.map_or(0.0, |w| w.y.atan2(w.x));
        let steer = self
            .lateral
            .update(heading_error, pid.lat_kp, pid.lat_ki, pid.lat_kd, wc.dt, pid.integral_clamp)
            .clamp(-1.0, 1.0);

        if action.brake {
            self.longitudinal = Loop::default();
            return Control { steer, throttle: 0.0, brake: true };
        }
        let speed_error = implied_target_speed(action, wc.dt) - world.ego.speed;
        let throttle = self
            .longitudinal
            .update(speed_error, pid.lon_kp, pid.lon_ki, pid.lon_kd, wc.dt, pid.integral_clamp)
            .clamp(0.0, 1.0);
        Control { steer, throttle, brake: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::Action;
    use crate::observation::ActionClass;
    use crate::world::{spawn_scenario, ScenarioTemplate};

    fn action(points: impl Fn(usize) -> Vec2, brake: bool) -> Action {
        Action {
            waypoints: std::array::from_fn(points),
            accel: 0.0,
            brake,
            class_hint: ActionClass::Go,
        }
    }

    fn world(speed: f64) -> WorldState {
        let mut w = spawn_scenario(ScenarioTemplate::ClearRoad, 1, &WorldConfig::default());
        w.ego.speed = speed;
        w
    }

    #[test]
    fn zero_error_gives_zero_commands() {
        let wc = WorldConfig::default();
        let a = action(|k| Vec2::new(0.6 * (k + 1) as f64, 0.0), false);
        let c = PidController::new().control(&world(6.0), &a, &PidConfig::default(), &wc);
        assert!(c.steer.abs() < 1e-6);
        assert!(c.throttle.abs() < 1e-6);
        assert!(!c.brake);
    }

    #[test]
    fn brake_dominates() {
        let wc = WorldConfig::default();
        let a = action(|k| Vec2::new(0.6 * (k + 1) as f64, 0.0), true);
        let c = PidController::new().control(&world(0.0), &a, &PidConfig::default(), &wc);
        assert!(c.brake);
        assert_eq!(c.throttle, 0.0);
    }

    #[test]
    fn steers_left_toward_left_waypoint() {
        let wc = WorldConfig::default();
        let dir = Vec2::from_heading(30f64.to_radians());
        let a = action(|k| dir.scale(0.6 * (k + 1) as f64), false);
        let c = PidController::new().control(&world(6.0), &a, &PidConfig::default(), &wc);
        assert!(c.steer > 0.0);
        let right = action(|k| Vec2::new(dir.x, -dir.y).scale(0.6 * (k + 1) as f64), false);
        assert!(PidController::new().control(&world(6.0), &right, &PidConfig::default(), &wc).steer < 0.0);
    }

    #[test]
    fn implied_speed_from_spacing() {
        let a = action(|k| Vec2::new(0.6 * (k + 1) as f64, 0.0), false);
        assert!((implied_target_speed(&a, 0.1) - 6.0).abs() < 1e-12);
        let b = action(|k| Vec2::new(0.6 * (k + 1) as f64, 0.0), true);
        assert_eq!(implied_target_speed(&b, 0.1), 0.0);
    }
}
