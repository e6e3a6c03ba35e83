//! Closed-loop evaluation with fixed policies.

use cfdriver_core::augment::{eval_episodes, Episode};
use cfdriver_core::config::Config;
use cfdriver_core::eval::{driving_score, evaluate, run_episode, ExpertPolicy, PenaltyTable, Policy};
use cfdriver_core::expert::{Action, HORIZON};
use cfdriver_core::geometry::Vec2;
use cfdriver_core::observation::ActionClass;
use cfdriver_core::world::{InfractionKind, ScenarioTemplate, WorldState};

struct AlwaysBrake;

impl Policy for AlwaysBrake {
    fn name(&self) -> String {
        "brake".into()
    }

    fn act(&self, _: &WorldState, _: &Config) -> Action {
        Action { waypoints: [Vec2::default(); HORIZON], accel: 0.0, brake: true, class_hint: ActionClass::Stop }
    }
}

#[test]
fn expert_completes_clear_road() {
    let cfg = Config::default();
    let routes = eval_episodes(&[ScenarioTemplate::ClearRoad], 3, 0);
    let r = evaluate(&ExpertPolicy, &routes, &cfg, 1).unwrap();
    assert_eq!(r.driving_score, 100.0);
    assert_eq!(r.route_completion_mean, 100.0);
}

#[test]
fn braking_policy_times_out() {
    let cfg = Config::default();
    let ep = Episode { template: ScenarioTemplate::ClearRoad, seed: 2 };
    let res = run_episode(&AlwaysBrake, ep, Some(50), &cfg);
    assert_eq!(res.steps_used, 50);
    let kinds: Vec<InfractionKind> = res.infractions.iter().map(|e| e.kind).collect();
    assert_eq!(kinds, vec![InfractionKind::RouteTimeout]);
    assert!(res.route_completion < 1.0);
    let report = driving_score("brake", std::slice::from_ref(&res), &PenaltyTable::from(&cfg.eval)).unwrap();
    let expected = res.route_completion * cfg.eval.route_timeout;
    assert!((report.driving_score - expected).abs() < 1e-12);
}

#[test]
fn evaluation_is_deterministic_and_order_free() {
    let cfg = Config::default();
    let routes = eval_episodes(&ScenarioTemplate::ALL, 6, 4);
    let a = evaluate(&ExpertPolicy, &routes, &cfg, 1).unwrap();
    let b = evaluate(&ExpertPolicy, &routes, &cfg, 2).unwrap();
    assert_eq!(a, b);
    let mut reversed = routes.clone();
    reversed.reverse();
    assert_eq!(evaluate(&ExpertPolicy, &reversed, &cfg, 1).unwrap(), a);
}
