//! Expert demonstrations and counterfactual augmentation.
//!
//! Demonstrations are collected by rolling out the expert. Counterfactual
//! records are produced post hoc: a seed record's episode is replayed to
//! recover its world, the tree classifier is searched for counterfactual
//! filtered observations, each one is written back into the world, and the
//! expert relabels the realized scene. The expert label always wins.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cf::{generate_diverse_cfs, CfConfig, CfExample};
use crate::config::Config;
use crate::error::{AugmentError, CfError, SceneError};
use crate::expert::{expert_decide, Action, Decision, ExpertRule};
use crate::geometry::{normalize_angle, to_global, to_local, Vec2};
use crate::observation::{
    discretize_action, field, filter_observation, filter_with_sources, kind_from_code, phase_from_code, ActionClass,
    FilteredObs, SlotSource, KIND_LIGHT, KIND_NONE, SLOT_COUNT,
};
use crate::parallel::ordered_map;
use crate::rng;
use crate::trees::{LabeledObs, TreeModel};
use crate::world::{
    render_sensors, spawn_scenario, step, Actor, Behavior, LightPhase, PidController, ScenarioTemplate, SensorObs,
    WorldState,
};

pub const DATASET_VERSION: u32 = 1;

const EPISODE_SALT: u64 = 0x4550_4953;
const CF_SALT: u64 = 0x4346_5345;
const SHUFFLE_SALT: u64 = 0x5348_5546;
const SEED_ORDER_SALT: u64 = 0x4f52_4445;
const NOISE_SALT: u64 = 0x4e4f_4953;
/// Offset separating held-out evaluation seeds from training seeds.
pub const EVAL_SEED_OFFSET: u64 = 10_000;
/// Half-extent of the ego-centric occupancy window, meters.
const GRID_HALF: f64 = 12.5;
/// The occupancy window starts this far behind the ego.
const GRID_BEHIND: f64 = 2.5;
const JUNCTION_RADIUS: f64 = 10.0;

/// Auxiliary learner targets derived from the world at record time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxTargets {
    /// `G x G x 2`, row-major over (x, y), channels occupancy then red light.
    pub grid: Vec<f64>,
    /// red_light_ahead, stop_required, at_junction.
    pub flags: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfMeta {
    pub distance: f64,
    pub lambda_final: f64,
    pub target_class: ActionClass,
    pub expert_agreed: bool,
    /// Index of the original record that seeded the search.
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoRecord {
    pub sensor_obs: SensorObs,
    pub filtered_obs: FilteredObs,
    pub action: Action,
    pub action_class: ActionClass,
    pub rule: ExpertRule,
    pub aux: AuxTargets,
    pub scenario: ScenarioTemplate,
    pub seed: u64,
    pub time_step: u64,
    pub is_cf: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cf_meta: Option<CfMeta>,
}

impl DemoRecord {
    pub fn labeled(&self) -> LabeledObs {
        LabeledObs { features: self.filtered_obs.as_slice().to_vec(), label: self.action_class }
    }

    /// Structural checks applied when a record is read back from disk.
    pub fn validate(&self) -> Result<(), String> {
        if self.is_cf != self.cf_meta.is_some() {
            return Err("is_cf and cf_meta disagree".into());
        }
        let finite = self.filtered_obs.as_slice().iter().all(|v| v.is_finite())
            && self.action.waypoints.iter().all(|w| w.is_finite())
            && self.action.accel.is_finite()
            && self.aux.grid.iter().chain(&self.aux.flags).all(|v| v.is_finite())
            && self.sensor_obs.ego_speed.is_finite()
            && self.sensor_obs.light_rel_x.is_finite()
            && self.sensor_obs.detections.iter().all(|d| {
                d.rel_x.is_finite() && d.rel_y.is_finite() && d.rel_heading.is_finite() && d.speed.is_finite()
            })
            && self.sensor_obs.route_context.iter().all(|p| p.is_finite());
        if !finite {
            return Err("non-finite value".into());
        }
        if self.aux.flags.iter().any(|f| *f != 0.0 && *f != 1.0) {
            return Err("flags must be 0 or 1".into());
        }
        Ok(())
    }

    /// Bit pattern of the filtered observation, for duplicate detection.
    fn obs_key(&self) -> Vec<u64> {
        self.filtered_obs.as_slice().iter().map(|v| v.to_bits()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentedDataset {
    pub records: Vec<DemoRecord>,
}

impl AugmentedDataset {
    /// `(n_original, n_cf)`.
    pub fn counts(&self) -> (usize, usize) {
        let n_cf = self.records.iter().filter(|r| r.is_cf).count();
        (self.records.len() - n_cf, n_cf)
    }

    pub fn cf_fraction(&self) -> f64 {
        let (o, c) = self.counts();
        if o + c == 0 {
            0.0
        } else {
            c as f64 / (o + c) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Episode {
    pub template: ScenarioTemplate,
    pub seed: u64,
}

/// Episodes `first..first + count`, with templates assigned round-robin.
pub fn episode_list(templates: &[ScenarioTemplate], count: usize, first: usize, base_seed: u64) -> Vec<Episode> {
    (first..first + count)
        .map(|i| {
            let t = templates[i % templates.len()];
            Episode { template: t, seed: rng::derive_seed(base_seed, &[EPISODE_SALT, t.id(), i as u64]) }
        })
        .collect()
}

/// Held-out routes, namespaced away from every training seed.
pub fn eval_episodes(templates: &[ScenarioTemplate], routes: usize, base_seed: u64) -> Vec<Episode> {
    episode_list(templates, routes, 0, base_seed + EVAL_SEED_OFFSET)
}

pub fn aux_targets(world: &WorldState, action: &Action, cfg: &Config) -> AuxTargets {
    let g = cfg.train.grid_size;
    let cell = 2.0 * GRID_HALF / g as f64;
    let ego = world.ego;
    let front = world.progress + cfg.world.ego_length / 2.0;
    let red_ahead = world.lights.iter().any(|l| {
        let d = l.stop_s - front;
        l.phase == LightPhase::Red && d > 0.0 && d <= cfg.sensor.visibility_range
    });
    let at_junction = world.lights.iter().any(|l| (l.stop_s - front).abs() <= JUNCTION_RADIUS);

    let mut grid = vec![0.0; g * g * 2];
    for a in &world.actors {
        let rel = to_local(ego.position, ego.heading, a.position);
        let ix = ((rel.x + GRID_BEHIND) / cell).floor();
        let iy = ((rel.y + GRID_HALF) / cell).floor();
        if ix >= 0.0 && iy >= 0.0 && (ix as usize) < g && (iy as usize) < g {
            grid[(ix as usize * g + iy as usize) * 2] = 1.0;
        }
    }
    if red_ahead {
        for c in 0..g * g {
            grid[c * 2 + 1] = 1.0;
        }
    }
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    AuxTargets { grid, flags: [flag(red_ahead), flag(action.brake), flag(at_junction)] }
}

fn make_record(world: &WorldState, decision: &Decision, cfg: &Config, salt: u64, cf_meta: Option<CfMeta>) -> DemoRecord {
    let action = decision.action.clone();
    DemoRecord {
        sensor_obs: render_sensors(world, &cfg.sensor, salt),
        filtered_obs: filter_observation(world),
        action_class: discretize_action(&action, &cfg.world, &cfg.expert),
        aux: aux_targets(world, &action, cfg),
        action,
        rule: decision.rule,
        scenario: world.scenario,
        seed: world.seed,
        time_step: world.time_step,
        is_cf: cf_meta.is_some(),
        cf_meta,
    }
}

/// Correlation of consecutive collection-noise samples.
const NOISE_RHO: f64 = 0.9;

/// Drives `ep` with the expert until the route ends, a fatal infraction
/// occurs, the time budget runs out, or `visit` returns false. The executed
/// controls carry correlated noise so the recorded states include small
/// recoveries; the recorded labels are always the expert's.
pub fn expert_rollout(ep: Episode, cfg: &Config, mut visit: impl FnMut(&WorldState, &Decision) -> bool) {
    let mut world = spawn_scenario(ep.template, ep.seed, &cfg.world);
    let budget = cfg.max_steps(world.route_length);
    let mut pid = PidController::new();
    let mut noise_rng = rng::stream(ep.seed, &[NOISE_SALT]);
    let innovation = (1.0 - NOISE_RHO * NOISE_RHO).sqrt();
    let (mut steer_noise, mut throttle_noise) = (0.0, 0.0);
    for _ in 0..budget {
        if world.route_complete() {
            break;
        }
        let d = expert_decide(&world, &cfg.world, &cfg.expert);
        if !visit(&world, &d) {
            break;
        }
        let (a, b): (f64, f64) = (StandardNormal.sample(&mut noise_rng), StandardNormal.sample(&mut noise_rng));
        steer_noise = NOISE_RHO * steer_noise + innovation * cfg.pipeline.collect_steer_noise * a;
        throttle_noise = NOISE_RHO * throttle_noise + innovation * cfg.pipeline.collect_throttle_noise * b;
        let mut control = pid.control(&world, &d.action, &cfg.pid, &cfg.world);
        control.steer = (control.steer + steer_noise).clamp(-1.0, 1.0);
        if !control.brake {
            control.throttle = (control.throttle + throttle_noise).clamp(0.0, 1.0);
        }
        let (next, events) = step(&world, &control, &cfg.world);
        world = next;
        if events.iter().any(|e| e.kind.is_fatal()) {
            break;
        }
    }
}

/// One record per step of an expert episode, capped at `max_records`.
pub fn collect_episode(ep: Episode, cfg: &Config, max_records: Option<usize>) -> Vec<DemoRecord> {
    let mut out = Vec::new();
    expert_rollout(ep, cfg, |world, d| {
        out.push(make_record(world, d, cfg, 0, None));
        max_records.is_none_or(|m| out.len() < m)
    });
    out
}

pub fn collect_demonstrations(episodes: &[Episode], cfg: &Config, workers: usize) -> Vec<DemoRecord> {
    ordered_map(episodes, workers, |_, ep| collect_episode(*ep, cfg, None)).into_iter().flatten().collect()
}

/// World states of `ep` at the given time steps, by replaying the expert.
pub fn replay_states(ep: Episode, steps: &[u64], cfg: &Config) -> BTreeMap<u64, WorldState> {
    let wanted: HashSet<u64> = steps.iter().copied().collect();
    let last = steps.iter().copied().max().unwrap_or(0);
    let mut out = BTreeMap::new();
    expert_rollout(ep, cfg, |world, _| {
        if wanted.contains(&world.time_step) {
            out.insert(world.time_step, world.clone());
        }
        world.time_step < last
    });
    out
}

fn implausible(msg: impl Into<String>) -> SceneError {
    SceneError::Implausible(msg.into())
}

/// Writes a counterfactual filtered observation back into `world`. Only
/// fields that differ from the world's own filtered observation are
/// touched; the result must filter back to `o_prime`.
pub fn realize_scene(world: &WorldState, o_prime: &FilteredObs, cfg: &Config) -> Result<WorldState, SceneError> {
    let wc = &cfg.world;
    if o_prime.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(implausible("non-finite feature"));
    }
    let (o, sources) = filter_with_sources(world);
    let mut out = world.clone();
    if o_prime.ego_speed() != o.ego_speed() {
        let v = o_prime.ego_speed();
        if !(0.0..=wc.v_max).contains(&v) {
            return Err(implausible(format!("ego speed {v} out of range")));
        }
        out.ego.speed = v;
    }
    let ego = world.ego;
    let mut touched: Vec<u32> = Vec::new();
    let mut removed_actors: Vec<u32> = Vec::new();
    let mut removed_lights: Vec<u32> = Vec::new();

    for slot in 0..SLOT_COUNT {
        let new = o_prime.slot(slot);
        let old = o.slot(slot);
        if new == old {
            continue;
        }
        let changed = |f: usize| new[f] != old[f];
        let sentinel = new[field::KIND] == KIND_NONE;
        let position = to_global(ego.position, ego.heading, Vec2::new(new[field::REL_X], new[field::REL_Y]));
        match sources[slot] {
            SlotSource::Actor(id) => {
                if sentinel {
                    removed_actors.push(id);
                    continue;
                }
                if changed(field::KIND) || new[field::PHASE] != 0.0 {
                    return Err(implausible("actor slot changed kind or gained a phase"));
                }
                let a = out.actors.iter_mut().find(|a| a.id == id).expect("filtered actor exists");
                if changed(field::REL_X) || changed(field::REL_Y) {
                    a.position = position;
                }
                if changed(field::REL_HEADING) {
                    a.heading = normalize_angle(ego.heading + new[field::REL_HEADING]);
                }
                if changed(field::SPEED) {
                    if new[field::SPEED] < 0.0 {
                        return Err(implausible("negative actor speed"));
                    }
                    a.speed = new[field::SPEED];
                }
                touched.push(id);
            }
            SlotSource::Light(id) => {
                if sentinel {
                    removed_lights.push(id);
                    continue;
                }
                if changed(field::KIND) || new[field::REL_HEADING] != 0.0 || new[field::SPEED] != 0.0 {
                    return Err(implausible("light slot changed kind, heading or speed"));
                }
                let l = out.lights.iter_mut().find(|l| l.id == id).expect("filtered light exists");
                if changed(field::REL_X) || changed(field::REL_Y) {
                    let p = world.route.project(position, None);
                    if p.lateral.abs() > wc.offroad_offset {
                        return Err(implausible("stop line moved off the road"));
                    }
                    l.stop_line = position;
                    l.stop_s = p.s;
                }
                if changed(field::PHASE) {
                    l.phase = phase_from_code(new[field::PHASE]).ok_or_else(|| implausible("unknown light phase"))?;
                    l.phase_ticks = 0;
                }
            }
            SlotSource::Empty => {
                if sentinel {
                    return Err(implausible("sentinel slot altered"));
                }
                if new[field::KIND] == KIND_LIGHT {
                    return Err(implausible("cannot materialize a light"));
                }
                let kind = kind_from_code(new[field::KIND]).ok_or_else(|| implausible("unknown actor kind"))?;
                if new[field::SPEED] < 0.0 || new[field::PHASE] != 0.0 {
                    return Err(implausible("invalid new actor"));
                }
                let id = out.next_actor_id();
                out.actors.push(Actor {
                    id,
                    kind,
                    position,
                    heading: normalize_angle(ego.heading + new[field::REL_HEADING]),
                    speed: new[field::SPEED],
                    behavior: Behavior::Static,
                });
                touched.push(id);
            }
        }
    }
    out.actors.retain(|a| !removed_actors.contains(&a.id));
    out.lights.retain(|l| !removed_lights.contains(&l.id));

    let ego_fp = out.ego_footprint(wc);
    for &id in &touched {
        let a = out.actor(id).expect("touched actor exists");
        if out.route.project(a.position, None).lateral.abs() > wc.scene_band {
            return Err(implausible(format!("actor {id} outside the scene band")));
        }
        let fp = a.footprint();
        if fp.overlaps(&ego_fp) {
            return Err(implausible(format!("actor {id} overlaps the ego")));
        }
        if out.actors.iter().any(|b| b.id != id && b.footprint().overlaps(&fp)) {
            return Err(implausible(format!("actor {id} overlaps another actor")));
        }
    }

    let back = filter_observation(&out);
    let consistent = back.as_slice().iter().zip(o_prime.as_slice()).all(|(a, b)| (a - b).abs() <= 1e-9);
    if !consistent {
        return Err(implausible("realized scene filters to a different observation"));
    }
    Ok(out)
}

/// Expert relabeling of a realized counterfactual scene.
pub fn relabel_and_record(world_prime: &WorldState, cf: &CfExample, source: usize, cfg: &Config, salt: u64) -> DemoRecord {
    let d = expert_decide(world_prime, &cfg.world, &cfg.expert);
    let class = discretize_action(&d.action, &cfg.world, &cfg.expert);
    let meta = CfMeta {
        distance: cf.distance,
        lambda_final: cf.lambda_final,
        target_class: cf.target_class,
        expert_agreed: class == cf.target_class,
        source,
    };
    make_record(world_prime, &d, cfg, salt, Some(meta))
}

/// Base counterfactual configuration: feature spreads and ranges from the
/// original observations, integer flags from the schema.
pub fn cf_config_for(records: &[DemoRecord], cfg: &Config) -> CfConfig {
    let rows: Vec<Vec<f64>> = records.iter().filter(|r| !r.is_cf).map(|r| r.filtered_obs.as_slice().to_vec()).collect();
    let scales = crate::cf::mad_scales(&rows, cfg.cf.mad_floor);
    let ranges = crate::cf::observed_ranges(&rows);
    let integer = crate::observation::feature_schema().iter().map(|f| f.integer).collect();
    CfConfig::new(&cfg.cf, scales, ranges).with_integer(integer)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentStats {
    pub n_original: usize,
    pub target_n_cf: usize,
    pub n_cf: usize,
    pub seeds_tried: usize,
    pub searches: usize,
    pub searches_failed: usize,
    pub candidates: usize,
    pub implausible: usize,
    pub duplicates: usize,
    pub expert_agreed: usize,
}

impl AugmentStats {
    pub fn search_success_rate(&self) -> f64 {
        if self.searches == 0 {
            0.0
        } else {
            1.0 - self.searches_failed as f64 / self.searches as f64
        }
    }

    pub fn agreement_rate(&self) -> f64 {
        if self.n_cf == 0 {
            0.0
        } else {
            self.expert_agreed as f64 / self.n_cf as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutput {
    pub dataset: AugmentedDataset,
    pub stats: AugmentStats,
}

impl AugmentOutput {
    /// Whether the target count was reached.
    pub fn shortfall(&self) -> Option<AugmentError> {
        (self.stats.n_cf < self.stats.target_n_cf)
            .then_some(AugmentError::InsufficientCfs { got: self.stats.n_cf, wanted: self.stats.target_n_cf })
    }
}

/// Number of counterfactual records that makes them `fraction` of the whole.
pub fn cf_target_count(n_original: usize, fraction: f64) -> usize {
    (fraction * n_original as f64 / (1.0 - fraction)).round() as usize
}

struct SeedOutcome {
    records: Vec<DemoRecord>,
    searches: usize,
    failed: usize,
    candidates: usize,
    implausible: usize,
}

fn augment_seed(index: usize, record: &DemoRecord, world: &WorldState, model: &TreeModel, base: &CfConfig, cfg: &Config, seed: u64) -> Result<SeedOutcome, AugmentError> {
    let o = record.filtered_obs.as_slice();
    let current = model.predict_class(o)?;
    let cf_cfg = base.clone().with_frozen(crate::observation::instance_frozen(&record.filtered_obs));
    let mut out = SeedOutcome { records: Vec::new(), searches: 0, failed: 0, candidates: 0, implausible: 0 };
    for target in ActionClass::ALL.into_iter().filter(|c| *c != current) {
        let mut stream = rng::stream(seed, &[CF_SALT, index as u64, target.index() as u64]);
        out.searches += 1;
        let found = match generate_diverse_cfs(model, o, target, &cf_cfg, &mut stream) {
            Ok(v) => v,
            Err(CfError::Model(e)) => return Err(e.into()),
            Err(_) => Vec::new(),
        };
        if found.is_empty() {
            out.failed += 1;
        }
        for (j, ex) in found.iter().enumerate() {
            out.candidates += 1;
            let o_prime = FilteredObs::from_slice(&ex.cf).expect("feature length");
            match realize_scene(world, &o_prime, cfg) {
                Ok(w) => {
                    let salt = rng::derive_seed(seed, &[CF_SALT, index as u64, target.index() as u64, j as u64]);
                    out.records.push(relabel_and_record(&w, ex, index, cfg, salt));
                }
                Err(SceneError::Implausible(_)) => out.implausible += 1,
            }
        }
    }
    Ok(out)
}

/// Enriches `demos` with counterfactual records until they make up
/// `fraction` of the result. Seeds are original records taken in a seeded
/// random order; every class other than the classifier's prediction is
/// tried as a target. Falls short (see [`AugmentOutput::shortfall`]) when
/// the seeds run out first.
pub fn build_dataset(
    demos: &[DemoRecord],
    model: &TreeModel,
    cfg: &Config,
    fraction: f64,
    seed: u64,
    workers: usize,
) -> Result<AugmentOutput, AugmentError> {
    if !(0.0..=0.5).contains(&fraction) || fraction.is_nan() {
        return Err(AugmentError::BadFraction(fraction));
    }
    let originals: Vec<&DemoRecord> = demos.iter().filter(|r| !r.is_cf).collect();
    let n = originals.len();
    let target = cf_target_count(n, fraction);
    let mut stats = AugmentStats { n_original: n, target_n_cf: target, ..AugmentStats::default() };
    if target == 0 {
        return Ok(AugmentOutput { dataset: AugmentedDataset { records: demos.to_vec() }, stats });
    }

    let base = cf_config_for(demos, cfg);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[SEED_ORDER_SALT]));
    let mut seen: HashSet<Vec<u64>> = originals.iter().map(|r| r.obs_key()).collect();
    let mut cfs: Vec<DemoRecord> = Vec::new();
    let chunk = (16 * workers.max(1)).max(32);

    'chunks: for idx in order.chunks(chunk) {
        // Recover the worlds of this chunk, one replay per episode.
        let mut by_episode: BTreeMap<Episode, Vec<u64>> = BTreeMap::new();
        for &i in idx {
            let r = originals[i];
            by_episode.entry(Episode { template: r.scenario, seed: r.seed }).or_default().push(r.time_step);
        }
        let episodes: Vec<(Episode, Vec<u64>)> = by_episode.into_iter().collect();
        let replayed = ordered_map(&episodes, workers, |_, (ep, steps)| replay_states(*ep, steps, cfg));
        let mut worlds: BTreeMap<(Episode, u64), WorldState> = BTreeMap::new();
        for ((ep, _), states) in episodes.iter().zip(replayed) {
            for (t, w) in states {
                worlds.insert((*ep, t), w);
            }
        }
        let mut jobs = Vec::with_capacity(idx.len());
        for &i in idx {
            let r = originals[i];
            let key = (Episode { template: r.scenario, seed: r.seed }, r.time_step);
            let w = worlds.get(&key).ok_or_else(|| {
                AugmentError::Replay(format!("{} seed {} never reached step {}", r.scenario, r.seed, r.time_step))
            })?;
            if filter_observation(w) != r.filtered_obs {
                return Err(AugmentError::Replay(format!("{} seed {} step {}", r.scenario, r.seed, r.time_step)));
            }
            jobs.push((i, r, w));
        }

        let outcomes = ordered_map(&jobs, workers, |_, (i, r, w)| augment_seed(*i, r, w, model, &base, cfg, seed));
        for outcome in outcomes {
            let o = outcome?;
            stats.seeds_tried += 1;
            stats.searches += o.searches;
            stats.searches_failed += o.failed;
            stats.candidates += o.candidates;
            stats.implausible += o.implausible;
            for rec in o.records {
                if !seen.insert(rec.obs_key()) {
                    stats.duplicates += 1;
                    continue;
                }
                cfs.push(rec);
                if cfs.len() >= target {
                    break 'chunks;
                }
            }
        }
    }

    stats.n_cf = cfs.len();
    stats.expert_agreed = cfs.iter().filter(|r| r.cf_meta.as_ref().is_some_and(|m| m.expert_agreed)).count();
    let mut records: Vec<DemoRecord> = demos.to_vec();
    records.extend(cfs);
    records.shuffle(&mut rng::stream(seed, &[SHUFFLE_SALT]));
    Ok(AugmentOutput { dataset: AugmentedDataset { records }, stats })
}
