//! Nearest-four filtering of the privileged state and action classes.
//!
//! The flattened layout is `[ego_speed, slot0 .. slot3]` where each slot is
//! `(rel_x, rel_y, rel_heading, speed, kind_code, light_phase_code)`.

use serde::{Deserialize, Serialize};

use crate::config::{ExpertConfig, WorldConfig};
use crate::expert::Action;
use crate::geometry::{normalize_angle, to_local};
use crate::world::{implied_target_speed, ActorKind, LightPhase, WorldState, SENTINEL_RANGE};

pub const SLOT_COUNT: usize = 4;
pub const SLOT_WIDTH: usize = 6;
pub const FEATURE_LEN: usize = 1 + SLOT_COUNT * SLOT_WIDTH;

pub const KIND_NONE: f64 = 0.0;
pub const KIND_VEHICLE: f64 = 1.0;
pub const KIND_PEDESTRIAN: f64 = 2.0;
pub const KIND_CYCLIST: f64 = 3.0;
pub const KIND_LIGHT: f64 = 4.0;

/// Offsets inside a slot.
pub mod field {
    pub const REL_X: usize = 0;
    pub const REL_Y: usize = 1;
    pub const REL_HEADING: usize = 2;
    pub const SPEED: usize = 3;
    pub const KIND: usize = 4;
    pub const PHASE: usize = 5;
}

/// Index of `field` in slot `slot` of the flattened vector.
pub const fn feature_index(slot: usize, field: usize) -> usize {
    1 + slot * SLOT_WIDTH + field
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionClass {
    Go = 0,
    Slow = 1,
    Stop = 2,
}

impl ActionClass {
    pub const ALL: [ActionClass; 3] = [ActionClass::Go, ActionClass::Slow, ActionClass::Stop];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

pub fn kind_code(kind: ActorKind) -> f64 {
    match kind {
        ActorKind::Vehicle => KIND_VEHICLE,
        ActorKind::Pedestrian => KIND_PEDESTRIAN,
        ActorKind::Cyclist => KIND_CYCLIST,
    }
}

pub fn kind_from_code(code: f64) -> Option<ActorKind> {
    match code {
        c if c == KIND_VEHICLE => Some(ActorKind::Vehicle),
        c if c == KIND_PEDESTRIAN => Some(ActorKind::Pedestrian),
        c if c == KIND_CYCLIST => Some(ActorKind::Cyclist),
        _ => None,
    }
}

pub fn phase_code(phase: LightPhase) -> f64 {
    match phase {
        LightPhase::Green => 1.0,
        LightPhase::Yellow => 2.0,
        LightPhase::Red => 3.0,
    }
}

pub fn phase_from_code(code: f64) -> Option<LightPhase> {
    [LightPhase::Green, LightPhase::Yellow, LightPhase::Red].into_iter().find(|p| phase_code(*p) == code)
}

/// Filtered observation `o`: ego speed plus the four nearest actors or
/// lights, relative to the ego.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FilteredObs(pub [f64; FEATURE_LEN]);

impl FilteredObs {
    pub const SENTINEL_SLOT: [f64; SLOT_WIDTH] = [SENTINEL_RANGE, 0.0, 0.0, 0.0, KIND_NONE, 0.0];

    pub fn ego_speed(&self) -> f64 {
        self.0[0]
    }

    pub fn slot(&self, i: usize) -> &[f64] {
        &self.0[1 + i * SLOT_WIDTH..1 + (i + 1) * SLOT_WIDTH]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        v.try_into().ok().map(FilteredObs)
    }

    pub fn is_sentinel_slot(&self, i: usize) -> bool {
        self.slot(i)[field::KIND] == KIND_NONE
    }
}

impl TryFrom<Vec<f64>> for FilteredObs {
    type Error = String;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        FilteredObs::from_slice(&v).ok_or_else(|| format!("expected {FEATURE_LEN} features, got {}", v.len()))
    }
}

impl From<FilteredObs> for Vec<f64> {
    fn from(o: FilteredObs) -> Self {
        o.0.to_vec()
    }
}

/// What occupies a filtered slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotSource {
    Actor(u32),
    Light(u32),
    Empty,
}

/// Like [`filter_observation`] but also reports which entity fills each
/// slot.
pub fn filter_with_sources(world: &WorldState) -> (FilteredObs, [SlotSource; SLOT_COUNT]) {
    let ego = world.ego;
    let mut candidates: Vec<(f64, u32, [f64; SLOT_WIDTH], SlotSource)> = Vec::with_capacity(world.actors.len() + world.lights.len());
    for a in &world.actors {
        let rel = to_local(ego.position, ego.heading, a.position);
        candidates.push((
            a.position.dist(ego.position),
            a.id,
            [rel.x, rel.y, normalize_angle(a.heading - ego.heading), a.speed, kind_code(a.kind), 0.0],
            SlotSource::Actor(a.id),
        ));
    }
    for l in &world.lights {
        let rel = to_local(ego.position, ego.heading, l.stop_line);
        candidates.push((
            l.stop_line.dist(ego.position),
            l.id,
            [rel.x, rel.y, 0.0, 0.0, KIND_LIGHT, phase_code(l.phase)],
            SlotSource::Light(l.id),
        ));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut features = [0.0; FEATURE_LEN];
    features[0] = ego.speed;
    let mut sources = [SlotSource::Empty; SLOT_COUNT];
    for i in 0..SLOT_COUNT {
        let (slot, src) = match candidates.get(i) {
            Some((_, _, slot, src)) => (*slot, *src),
            None => (FilteredObs::SENTINEL_SLOT, SlotSource::Empty),
        };
        features[1 + i * SLOT_WIDTH..1 + (i + 1) * SLOT_WIDTH].copy_from_slice(&slot);
        sources[i] = src;
    }
    (FilteredObs(features), sources)
}

/// Keeps the four actors or lights nearest to the ego, ordered by distance
/// with ties broken by id.
pub fn filter_observation(world: &WorldState) -> FilteredObs {
    filter_with_sources(world).0
}

/// STOP when braking, GO when the implied speed reaches the GO fraction of
/// cruise, SLOW otherwise.
pub fn discretize_action(action: &Action, wc: &WorldConfig, ec: &ExpertConfig) -> ActionClass {
    if action.brake {
        ActionClass::Stop
    } else if implied_target_speed(action, wc.dt) >= ec.go_fraction * wc.cruise_speed - 1e-9 {
        ActionClass::Go
    } else {
        ActionClass::Slow
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub index: usize,
    pub unit: String,
    /// Never altered by counterfactual search.
    pub frozen: bool,
    /// Takes integer codes only.
    pub integer: bool,
}

/// Describes every entry of the flattened observation.
pub fn feature_schema() -> Vec<FeatureSpec> {
    let mut out = vec![FeatureSpec { name: "ego_speed".into(), index: 0, unit: "m/s".into(), frozen: false, integer: false }];
    let fields = [
        ("rel_x", "m", false, false),
        ("rel_y", "m", false, false),
        ("rel_heading", "rad", false, false),
        ("speed", "m/s", false, false),
        ("kind_code", "code", true, true),
        ("light_phase_code", "code", false, true),
    ];
    for slot in 0..SLOT_COUNT {
        for (f, (name, unit, frozen, integer)) in fields.iter().enumerate() {
            out.push(FeatureSpec {
                name: format!("slot{slot}_{name}"),
                index: feature_index(slot, f),
                unit: unit.to_string(),
                frozen: *frozen,
                integer: *integer,
            });
        }
    }
    out
}

/// Frozen mask for counterfactual search around a specific observation:
/// kind codes always, every field of empty slots, heading and speed of
/// light slots, and the phase code of non-light slots.
pub fn instance_frozen(o: &FilteredObs) -> Vec<bool> {
    let mut frozen: Vec<bool> = feature_schema().iter().map(|f| f.frozen).collect();
    for slot in 0..SLOT_COUNT {
        let kind = o.slot(slot)[field::KIND];
        let idx = |f| feature_index(slot, f);
        if kind == KIND_NONE {
            for f in 0..SLOT_WIDTH {
                frozen[idx(f)] = true;
            }
        } else if kind == KIND_LIGHT {
            frozen[idx(field::REL_HEADING)] = true;
            frozen[idx(field::SPEED)] = true;
        } else {
            frozen[idx(field::PHASE)] = true;
        }
    }
    frozen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::world::{spawn_scenario, Actor, Behavior, ScenarioTemplate, TrafficLight};
    use proptest::prelude::*;

    fn empty_world() -> WorldState {
        spawn_scenario(ScenarioTemplate::ClearRoad, 1, &WorldConfig::default())
    }

    fn vehicle(id: u32, x: f64, y: f64) -> Actor {
        Actor { id, kind: ActorKind::Vehicle, position: Vec2::new(x, y), heading: 0.0, speed: 1.0, behavior: Behavior::Static }
    }

    #[test]
    fn nearest_four_with_light() {
        let mut w = empty_world();
        for (id, d) in [(1, 3.0), (2, 8.0), (3, 15.0), (4, 20.0)] {
            w.actors.push(vehicle(id, d, 0.0));
        }
        w.lights.push(TrafficLight { id: 9, stop_line: Vec2::new(12.0, 0.0), stop_s: 12.0, phase: LightPhase::Red, phase_ticks: 0 });
        let o = filter_observation(&w);
        let xs: Vec<f64> = (0..4).map(|i| o.slot(i)[field::REL_X]).collect();
        assert_eq!(xs, vec![3.0, 8.0, 12.0, 15.0]);
        assert_eq!(o.slot(2)[field::KIND], KIND_LIGHT);
        assert_eq!(o.slot(2)[field::PHASE], 3.0);
        assert_eq!(o.slot(0)[field::PHASE], 0.0);
    }

    #[test]
    fn padding_after_single_vehicle() {
        let mut w = empty_world();
        w.actors.push(vehicle(1, 10.0, 0.0));
        let o = filter_observation(&w);
        assert!(!o.is_sentinel_slot(0));
        for i in 1..4 {
            assert_eq!(o.slot(i), &FilteredObs::SENTINEL_SLOT);
        }
        assert_eq!(o.as_slice().len(), 25);
    }

    #[test]
    fn equal_distance_tie_breaks_by_id() {
        let mut w = empty_world();
        w.actors.push(vehicle(5, 10.0, 0.0));
        w.actors.push(vehicle(2, 0.0, 10.0));
        let (_, src) = filter_with_sources(&w);
        assert_eq!(src[0], SlotSource::Actor(2));
        assert_eq!(src[1], SlotSource::Actor(5));
    }

    #[test]
    fn discretization_rules() {
        let wc = WorldConfig::default();
        let ec = ExpertConfig::default();
        let mk = |spacing: f64, brake: bool| Action {
            waypoints: std::array::from_fn(|k| Vec2::new(spacing * (k + 1) as f64, 0.0)),
            accel: 0.0,
            brake,
            class_hint: ActionClass::Go,
        };
        assert_eq!(discretize_action(&mk(0.6, true), &wc, &ec), ActionClass::Stop);
        assert_eq!(discretize_action(&mk(0.6, false), &wc, &ec), ActionClass::Go);
        assert_eq!(discretize_action(&mk(0.3, false), &wc, &ec), ActionClass::Slow);
    }

    #[test]
    fn instance_mask_freezes_empty_and_codes() {
        let mut w = empty_world();
        w.actors.push(vehicle(1, 10.0, 0.0));
        w.lights.push(TrafficLight { id: 9, stop_line: Vec2::new(20.0, 0.0), stop_s: 20.0, phase: LightPhase::Green, phase_ticks: 0 });
        let m = instance_frozen(&filter_observation(&w));
        assert!(!m[0]);
        assert!(!m[feature_index(0, field::REL_X)]);
        assert!(m[feature_index(0, field::KIND)]);
        assert!(m[feature_index(0, field::PHASE)]);
        assert!(!m[feature_index(1, field::PHASE)]);
        assert!(m[feature_index(1, field::SPEED)]);
        assert!((0..SLOT_WIDTH).all(|f| m[feature_index(2, f)] && m[feature_index(3, f)]));
    }

    #[test]
    fn schema_matches_layout() {
        let s = feature_schema();
        assert_eq!(s.len(), FEATURE_LEN);
        assert!(s.iter().enumerate().all(|(i, f)| f.index == i));
        assert_eq!(s[1].name, "slot0_rel_x");
    }

    proptest! {
        #[test]
        fn insertion_order_does_not_matter(
            pts in proptest::collection::vec((-60.0f64..60.0, -30.0f64..30.0), 1..9),
            rot in 0usize..9,
        ) {
            let mut w = empty_world();
            for (i, (x, y)) in pts.iter().enumerate() {
                w.actors.push(vehicle(i as u32 + 1, *x, *y));
            }
            let dists: Vec<f64> = w.actors.iter().map(|a| a.position.norm()).collect();
            for i in 0..dists.len() {
                for j in i + 1..dists.len() {
                    prop_assume!((dists[i] - dists[j]).abs() > 1e-9);
                }
            }
            let a = filter_observation(&w);
            let n = w.actors.len();
            w.actors.rotate_left(rot % n);
            w.actors.reverse();
            let b = filter_observation(&w);
            prop_assert_eq!(a, b);
            prop_assert_eq!(a.as_slice().len(), FEATURE_LEN);
        }
    }
}
