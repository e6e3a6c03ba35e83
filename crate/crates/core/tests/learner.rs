//! Learner training behaviour on small real datasets.

mod common;

use cfdriver_core::augment::{collect_episode, DemoRecord, Episode};
use cfdriver_core::config::{Config, TrainConfig};
use cfdriver_core::learner::{train_with, LearnerModel};
use cfdriver_core::world::ScenarioTemplate;

fn records(n: usize) -> Vec<DemoRecord> {
    let cfg = Config::default();
    let ep = Episode { template: ScenarioTemplate::LeadVehicle, seed: 21 };
    collect_episode(ep, &cfg, None).into_iter().step_by(7).take(n).collect()
}

fn tc(epochs: usize, batch: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: batch, hidden: vec![64, 64], learning_rate: 3e-3, ..TrainConfig::default() }
}

fn waypoint_error(model: &LearnerModel, r: &DemoRecord) -> f64 {
    let h = model.predict(&[&r.sensor_obs]).unwrap();
    r.action
        .waypoints
        .iter()
        .enumerate()
        .map(|(k, w)| (h.waypoints[[0, 2 * k]] - w.x).hypot(h.waypoints[[0, 2 * k + 1]] - w.y))
        .fold(0.0, f64::max)
}

#[test]
fn memorizes_ten_records() {
    let data = records(10);
    let m = train_with(&data, &Config::default().sensor, &tc(200, 10)).unwrap();
    let first = m.loss_curve.first().unwrap().total;
    let last = m.loss_curve.last().unwrap().total;
    assert!(last < 0.1 * first, "loss {first} -> {last}");
    assert_eq!(m.loss_curve.len(), 200);
}

#[test]
fn overfits_a_single_record() {
    let data = records(1);
    // One record standardizes to a zero input, so only biases carry the
    // fit; Adam moves them about one learning rate per step.
    let t = TrainConfig { learning_rate: 2e-2, ..tc(500, 1) };
    let m = train_with(&data, &Config::default().sensor, &t).unwrap();
    let err = waypoint_error(&m, &data[0]);
    assert!(err < 0.1, "max waypoint error {err}");
}

#[test]
fn training_is_deterministic() {
    let data = records(10);
    let a = train_with(&data, &Config::default().sensor, &tc(5, 4)).unwrap();
    let b = train_with(&data, &Config::default().sensor, &tc(5, 4)).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let mut other = tc(5, 4);
    other.seed = 1;
    assert_ne!(train_with(&data, &Config::default().sensor, &other).unwrap().to_json(), a.to_json());
}

#[test]
fn parameters_stay_finite_and_checkpoint_round_trips() {
    let data = records(10);
    let m = train_with(&data, &Config::default().sensor, &tc(20, 3)).unwrap();
    assert!(m.layers.iter().all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite())));
    let back = LearnerModel::from_json(&m.to_json()).unwrap();
    assert_eq!(back, m);
}

#[test]
fn gradient_matches_finite_differences() {
    let mut t = TrainConfig { hidden: vec![12, 12], ..TrainConfig::default() };
    for seed in 0..3 {
        t.seed = seed;
        let model = LearnerModel::init(&Config::default().sensor, &t, 50);
        let (x, target) = common::random_batch(&model, 6, seed);
        let err = common::max_grad_error(&model, &x, &target, 1e-5);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}
