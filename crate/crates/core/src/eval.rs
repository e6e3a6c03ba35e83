//! Closed-loop evaluation and leaderboard-style metrics.
//!
//! A route's score is its completion percentage times the product of the
//! penalty coefficients of its infractions; the driving score is the mean
//! over routes.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::augment::Episode;
use crate::config::{Config, EvalConfig};
use crate::error::EvalError;
use crate::expert::{expert_decide, Action};
use crate::learner::{learner_act, LearnerModel};
use crate::parallel::ordered_map;
use crate::world::{
    render_sensors, spawn_scenario, step, InfractionEvent, InfractionKind, PidController, ScenarioTemplate, WorldState,
};

/// Sensor noise stream used during evaluation rollouts.
const EVAL_SENSOR_SALT: u64 = 0x4556_414c;

pub trait Policy: Sync {
    fn name(&self) -> String;
    fn act(&self, world: &WorldState, cfg: &Config) -> Action;
}

/// The privileged rule-based expert.
pub struct ExpertPolicy;

impl Policy for ExpertPolicy {
    fn name(&self) -> String {
        "expert".into()
    }

    fn act(&self, world: &WorldState, cfg: &Config) -> Action {
        expert_decide(world, &cfg.world, &cfg.expert).action
    }
}

/// A trained learner driving from rendered sensors.
pub struct LearnerPolicy<'a> {
    pub name: String,
    pub model: &'a LearnerModel,
}

impl Policy for LearnerPolicy<'_> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn act(&self, world: &WorldState, cfg: &Config) -> Action {
        let obs = render_sensors(world, &cfg.sensor, EVAL_SENSOR_SALT);
        learner_act(self.model, &obs, cfg).expect("sensor shape matches the model")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scenario: ScenarioTemplate,
    pub seed: u64,
    /// Percent of the route's arc length covered, in [0, 100].
    pub route_completion: f64,
    pub infractions: Vec<InfractionEvent>,
    pub steps_used: u64,
    pub timeout_steps: u64,
}

/// Drives one route until it is complete, a collision ends it, or
/// `max_steps` run out (which adds a ROUTE_TIMEOUT event).
pub fn run_episode(policy: &dyn Policy, ep: Episode, max_steps: Option<u64>, cfg: &Config) -> EpisodeResult {
    let mut world = spawn_scenario(ep.template, ep.seed, &cfg.world);
    let budget = max_steps.unwrap_or_else(|| cfg.max_steps(world.route_length)).max(1);
    let mut pid = PidController::new();
    let mut infractions = Vec::new();
    let mut steps = 0;
    let mut fatal = false;
    while steps < budget && !world.route_complete() {
        let action = policy.act(&world, cfg);
        let control = pid.control(&world, &action, &cfg.pid, &cfg.world);
        let (next, events) = step(&world, &control, &cfg.world);
        world = next;
        steps += 1;
        fatal = events.iter().any(|e| e.kind.is_fatal());
        infractions.extend(events);
        if fatal {
            break;
        }
    }
    if !fatal && !world.route_complete() {
        infractions.push(InfractionEvent { kind: InfractionKind::RouteTimeout, time_step: world.time_step, actor_id: None });
    }
    EpisodeResult {
        scenario: ep.template,
        seed: ep.seed,
        route_completion: (100.0 * world.progress / world.route_length).clamp(0.0, 100.0),
        infractions,
        steps_used: steps,
        timeout_steps: budget,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyTable {
    pub pedestrian_collision: f64,
    pub vehicle_collision: f64,
    pub layout_collision: f64,
    pub red_light_violation: f64,
    pub offroad: f64,
    pub route_timeout: f64,
}

impl Default for PenaltyTable {
    fn default() -> Self {
        PenaltyTable::from(&EvalConfig::default())
    }
}

impl From<&EvalConfig> for PenaltyTable {
    fn from(e: &EvalConfig) -> Self {
        PenaltyTable {
            pedestrian_collision: e.pedestrian_collision,
            vehicle_collision: e.vehicle_collision,
            layout_collision: e.layout_collision,
            red_light_violation: e.red_light,
            offroad: e.offroad,
            route_timeout: e.route_timeout,
        }
    }
}

impl PenaltyTable {
    pub fn coefficient(&self, kind: InfractionKind) -> f64 {
        match kind {
            InfractionKind::PedestrianCollision => self.pedestrian_collision,
            InfractionKind::VehicleCollision => self.vehicle_collision,
            InfractionKind::LayoutCollision => self.layout_collision,
            InfractionKind::RedLightViolation => self.red_light_violation,
            InfractionKind::Offroad => self.offroad,
            InfractionKind::RouteTimeout => self.route_timeout,
        }
    }
}

/// Product of the penalty coefficients of every infraction; a route
/// timeout counts once.
pub fn infraction_score(result: &EpisodeResult, penalties: &PenaltyTable) -> f64 {
    let mut score = 1.0;
    let mut timed_out = false;
    for e in &result.infractions {
        if e.kind == InfractionKind::RouteTimeout {
            if timed_out {
                continue;
            }
            timed_out = true;
        }
        score *= penalties.coefficient(e.kind);
    }
    score
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub results: Vec<EpisodeResult>,
    pub driving_score: f64,
    pub route_completion_mean: f64,
    pub infraction_score_mean: f64,
    /// Events per route for every infraction kind.
    pub infraction_rates: BTreeMap<InfractionKind, f64>,
}

/// Aggregates per-route results. Routes are folded in (scenario, seed)
/// order so the input order never matters.
pub fn driving_score(policy: &str, results: &[EpisodeResult], penalties: &PenaltyTable) -> Result<EvalReport, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let mut sorted = results.to_vec();
    sorted.sort_by_key(|a| (a.scenario.id(), a.seed));
    let n = sorted.len() as f64;
    let mut score = 0.0;
    let mut completion = 0.0;
    let mut infraction = 0.0;
    let mut counts: BTreeMap<InfractionKind, usize> = InfractionKind::ALL.iter().map(|k| (*k, 0)).collect();
    for r in &sorted {
        let s = infraction_score(r, penalties);
        score += r.route_completion * s;
        completion += r.route_completion;
        infraction += s;
        for e in &r.infractions {
            *counts.get_mut(&e.kind).expect("all kinds listed") += 1;
        }
    }
    Ok(EvalReport {
        policy: policy.to_string(),
        results: sorted,
        driving_score: score / n,
        route_completion_mean: completion / n,
        infraction_score_mean: infraction / n,
        infraction_rates: counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect(),
    })
}

/// Runs `policy` on every route and aggregates.
pub fn evaluate(policy: &dyn Policy, routes: &[Episode], cfg: &Config, workers: usize) -> Result<EvalReport, EvalError> {
    let results = ordered_map(routes, workers, |_, ep| run_episode(policy, *ep, None, cfg));
    driving_score(&policy.name(), &results, &PenaltyTable::from(&cfg.eval))
}

const CSV_HEADER: [&str; 10] = [
    "policy",
    "driving_score",
    "route_completion",
    "infraction_score",
    "pedestrian_collision",
    "vehicle_collision",
    "layout_collision",
    "red_light_violation",
    "offroad",
    "route_timeout",
];

/// One row per report: scores, then events per route by kind.
pub fn write_reports_csv<W: Write>(reports: &[&EvalReport], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in reports {
        let mut row = vec![
            r.policy.clone(),
            format!("{:.4}", r.driving_score),
            format!("{:.4}", r.route_completion_mean),
            format!("{:.4}", r.infraction_score_mean),
        ];
        row.extend(InfractionKind::ALL.iter().map(|k| format!("{:.4}", r.infraction_rates[k])));
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(completion: f64, kinds: &[InfractionKind], seed: u64) -> EpisodeResult {
        EpisodeResult {
            scenario: ScenarioTemplate::ClearRoad,
            seed,
            route_completion: completion,
            infractions: kinds.iter().map(|k| InfractionEvent { kind: *k, time_step: 0, actor_id: None }).collect(),
            steps_used: 0,
            timeout_steps: 100,
        }
    }

    #[test]
    fn infraction_score_cases() {
        let p = PenaltyTable::default();
        assert_eq!(infraction_score(&result(100.0, &[], 0), &p), 1.0);
        assert_eq!(infraction_score(&result(100.0, &[InfractionKind::RedLightViolation], 0), &p), 0.70);
        let two = infraction_score(&result(100.0, &[InfractionKind::VehicleCollision; 2], 0), &p);
        assert!((two - 0.36).abs() < 1e-12);
        let timeouts = infraction_score(&result(10.0, &[InfractionKind::RouteTimeout; 3], 0), &p);
        assert_eq!(timeouts, 0.70);
    }

    #[test]
    fn driving_score_cases() {
        let p = PenaltyTable::default();
        assert_eq!(driving_score("x", &[result(100.0, &[], 0)], &p).unwrap().driving_score, 100.0);
        let one = driving_score("x", &[result(80.0, &[InfractionKind::RedLightViolation], 0)], &p).unwrap();
        assert!((one.driving_score - 56.0).abs() < 1e-12);
        let half = PenaltyTable { offroad: 0.5, ..p };
        let two = driving_score("x", &[result(100.0, &[], 0), result(50.0, &[InfractionKind::Offroad], 1)], &half).unwrap();
        assert!((two.driving_score - 62.5).abs() < 1e-12);
        assert_eq!(driving_score("x", &[], &p).unwrap_err(), EvalError::EmptyResults);
    }

    #[test]
    fn rates_are_events_per_route() {
        let p = PenaltyTable::default();
        let r = driving_score(
            "x",
            &[result(100.0, &[InfractionKind::Offroad, InfractionKind::Offroad], 0), result(100.0, &[], 1)],
            &p,
        )
        .unwrap();
        assert_eq!(r.infraction_rates[&InfractionKind::Offroad], 1.0);
        assert_eq!(r.infraction_rates[&InfractionKind::RouteTimeout], 0.0);
    }
}
