//! Pipeline stages and run manifests.
//!
//! Each stage is a pure function of its inputs, the configuration and a
//! seed; the CLI wraps them with file handoff and manifests.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{build_dataset, collect_demonstrations, episode_list, eval_episodes, AugmentOutput, AugmentStats, DemoRecord};
use crate::config::Config;
use crate::error::{AugmentError, EvalError, IoError, LearnerError, TreeError};
use crate::eval::{evaluate, EvalReport, ExpertPolicy, LearnerPolicy};
use crate::io::sha256_file;
use crate::learner::{train, LearnerModel};
use crate::observation::feature_schema;
use crate::rng;
use crate::trees::{accuracy, fit, LabeledObs, TreeHyper, TreeModel};

const HOLDOUT_SALT: u64 = 0x484f_4c44;
const RESERVE_SALT: u64 = 0x5245_5345;

pub const ARM_SMALL: &str = "A_original";
pub const ARM_MATCHED: &str = "B_original_matched";
pub const ARM_CF: &str = "C_cf_augmented";
pub const ARM_EXPERT: &str = "expert";

/// A file produced or consumed by a stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path) -> Result<Self, IoError> {
        Ok(Artifact { path: path.display().to_string(), sha256: sha256_file(path)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: Config,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    /// Wall-clock seconds per step.
    pub timings: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_original: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cf: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cf_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree_agreement: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<AugmentStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driving_score: Option<f64>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(stage: &str, seed: u64, config: &Config) -> Self {
        RunManifest {
            stage: stage.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config: config.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            n_original: None,
            n_cf: None,
            cf_fraction: None,
            tree_agreement: None,
            augment: None,
            driving_score: None,
            warnings: Vec::new(),
        }
    }

    /// Every referenced file exists and still has its recorded digest.
    pub fn verify(&self) -> Result<(), String> {
        for a in self.inputs.iter().chain(&self.outputs) {
            let actual = sha256_file(Path::new(&a.path)).map_err(|e| e.to_string())?;
            if actual != a.sha256 {
                return Err(format!("{}: digest changed", a.path));
            }
        }
        Ok(())
    }
}

/// Expert demonstrations from the training episodes.
pub fn collect(cfg: &Config, seed: u64) -> Vec<DemoRecord> {
    let p = &cfg.pipeline;
    collect_demonstrations(&episode_list(&p.templates, p.train_episodes, 0, seed), cfg, p.workers)
}

/// Extra original records from episodes after the training ones.
pub fn collect_reserve(cfg: &Config, seed: u64) -> Vec<DemoRecord> {
    let p = &cfg.pipeline;
    collect_demonstrations(&episode_list(&p.templates, p.reserve_episodes, p.train_episodes, seed), cfg, p.workers)
}

/// Splits original records by episode; a seeded share of episodes is held
/// out, spread across templates, and every template keeps at least one
/// training episode. Returns `(train, held_out)`.
pub fn holdout_split(records: &[DemoRecord], fraction: f64, seed: u64) -> (Vec<&DemoRecord>, Vec<&DemoRecord>) {
    let mut by_template: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    let episodes: BTreeSet<(u64, u64)> = records.iter().filter(|r| !r.is_cf).map(|r| (r.scenario.id(), r.seed)).collect();
    for (t, s) in &episodes {
        by_template.entry(*t).or_default().push(*s);
    }
    let mut rng = rng::stream(seed, &[HOLDOUT_SALT]);
    let mut groups: Vec<(u64, Vec<u64>)> = by_template.into_iter().collect();
    groups.shuffle(&mut rng);
    for (_, seeds) in &mut groups {
        seeds.shuffle(&mut rng);
    }
    // Rank-major order: the first pick of every template, then the second, ...
    // The last episode of each template is never a candidate.
    let longest = groups.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
    let candidates: Vec<(u64, u64)> = (0..longest.saturating_sub(1))
        .flat_map(|k| groups.iter().filter(move |(_, s)| k + 1 < s.len()).map(move |(t, s)| (*t, s[k])))
        .collect();
    let n_hold = ((fraction * episodes.len() as f64).ceil() as usize).min(candidates.len());
    let held: BTreeSet<(u64, u64)> = candidates.into_iter().take(n_hold).collect();
    records.iter().filter(|r| !r.is_cf).partition(|r| !held.contains(&(r.scenario.id(), r.seed)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Distilled {
    pub model: TreeModel,
    /// Class agreement with the expert on held-out episodes (on the
    /// training records when nothing could be held out).
    pub agreement: f64,
    pub n_train: usize,
    pub n_held_out: usize,
}

pub fn distill(records: &[DemoRecord], cfg: &Config, seed: u64) -> Result<Distilled, TreeError> {
    let (train_part, held) = holdout_split(records, cfg.trees.holdout_fraction, seed);
    let data: Vec<LabeledObs> = train_part.iter().map(|r| r.labeled()).collect();
    let model = fit(&data, &TreeHyper::from(&cfg.trees), feature_schema())?;
    let held_data: Vec<LabeledObs> = held.iter().map(|r| r.labeled()).collect();
    let agreement = if held_data.is_empty() { accuracy(&model, &data)? } else { accuracy(&model, &held_data)? };
    Ok(Distilled { model, agreement, n_train: data.len(), n_held_out: held_data.len() })
}

pub fn augment(records: &[DemoRecord], model: &TreeModel, cfg: &Config, seed: u64) -> Result<AugmentOutput, AugmentError> {
    build_dataset(records, model, cfg, cfg.cf.target_fraction, seed, cfg.pipeline.workers)
}

pub fn train_learner(records: &[DemoRecord], cfg: &Config, seed: u64) -> Result<LearnerModel, LearnerError> {
    let mut c = cfg.clone();
    c.train.seed = seed;
    train(records, &c)
}

pub fn evaluate_expert(cfg: &Config, seed: u64) -> Result<EvalReport, EvalError> {
    let routes = eval_episodes(&cfg.pipeline.templates, cfg.pipeline.eval_routes, seed);
    evaluate(&ExpertPolicy, &routes, cfg, cfg.pipeline.workers)
}

pub fn evaluate_learner(name: &str, model: &LearnerModel, cfg: &Config, seed: u64) -> Result<EvalReport, EvalError> {
    let routes = eval_episodes(&cfg.pipeline.templates, cfg.pipeline.eval_routes, seed);
    evaluate(&LearnerPolicy { name: name.into(), model }, &routes, cfg, cfg.pipeline.workers)
}

#[derive(Debug, thiserror::Error)]
pub enum AblationError {
    #[error("distill: {0}")]
    Distill(#[from] TreeError),
    #[error("augment: {0}")]
    Augment(#[from] AugmentError),
    #[error("train: {0}")]
    Train(#[from] LearnerError),
    #[error("evaluate: {0}")]
    Eval(#[from] EvalError),
    #[error("reserve pool has {have} records but the matched arm needs {need}; raise pipeline.reserve_episodes")]
    Reserve { have: usize, need: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub n_original: usize,
    pub n_cf: usize,
    pub tree_agreement: f64,
    /// Held-out records behind `tree_agreement`.
    pub tree_held_out: usize,
    pub augment: AugmentStats,
    /// Arms A, B, C, then the expert.
    pub arms: Vec<EvalReport>,
}

impl AblationReport {
    pub fn arm(&self, name: &str) -> Option<&EvalReport> {
        self.arms.iter().find(|a| a.policy == name)
    }

    /// Driving score of the CF arm minus the size-matched arm.
    pub fn cf_gap(&self) -> f64 {
        self.arm(ARM_CF).map_or(f64::NAN, |c| c.driving_score) - self.arm(ARM_MATCHED).map_or(f64::NAN, |b| b.driving_score)
    }
}

/// The three-arm ablation on one seed: (A) original records only, (B)
/// original records plus as many reserve originals as there are CF
/// records, (C) original plus CF records. All arms and the expert are
/// evaluated on the same held-out routes.
pub fn run_ablation(cfg: &Config, seed: u64) -> Result<AblationReport, AblationError> {
    let demos = collect(cfg, seed);
    let distilled = distill(&demos, cfg, seed)?;
    let out = augment(&demos, &distilled.model, cfg, seed)?;
    if let Some(w) = out.shortfall() {
        log::warn!("{w}");
    }
    let n_cf = out.stats.n_cf;

    let mut reserve = collect_reserve(cfg, seed);
    if reserve.len() < n_cf {
        return Err(AblationError::Reserve { have: reserve.len(), need: n_cf });
    }
    reserve.shuffle(&mut rng::stream(seed, &[RESERVE_SALT]));
    let mut matched = demos.clone();
    matched.extend(reserve.into_iter().take(n_cf));
    debug_assert_eq!(matched.len(), out.dataset.records.len());

    let mut arms = Vec::new();
    for (name, data) in [(ARM_SMALL, &demos), (ARM_MATCHED, &matched), (ARM_CF, &out.dataset.records)] {
        let model = train_learner(data, cfg, seed)?;
        arms.push(evaluate_learner(name, &model, cfg, seed)?);
    }
    arms.push(evaluate_expert(cfg, seed)?);
    Ok(AblationReport {
        seed,
        n_original: demos.len(),
        n_cf,
        tree_agreement: distilled.agreement,
        tree_held_out: distilled.n_held_out,
        augment: out.stats,
        arms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::ScenarioTemplate;

    #[test]
    fn holdout_is_by_episode() {
        let mut cfg = Config::default();
        cfg.pipeline.templates = vec![ScenarioTemplate::ClearRoad, ScenarioTemplate::RedLight];
        cfg.pipeline.train_episodes = 5;
        let demos: Vec<DemoRecord> = collect(&cfg, 3).into_iter().filter(|r| r.time_step < 20).collect();
        let (train, held) = holdout_split(&demos, 0.4, 3);
        assert_eq!(train.len() + held.len(), demos.len());
        assert_eq!(held.len(), 40);
        let held_eps: BTreeSet<u64> = held.iter().map(|r| r.seed).collect();
        assert!(train.iter().all(|r| !held_eps.contains(&r.seed)));
        // One held-out episode per template.
        let held_templates: BTreeSet<u64> = held.iter().map(|r| r.scenario.id()).collect();
        assert_eq!(held_templates.len(), 2);
    }

    #[test]
    fn every_template_keeps_a_training_episode() {
        let mut cfg = Config::default();
        cfg.pipeline.templates = ScenarioTemplate::ALL.to_vec();
        cfg.pipeline.train_episodes = 18;
        let demos: Vec<DemoRecord> = collect(&cfg, 1).into_iter().filter(|r| r.time_step < 3).collect();
        for seed in 0..20 {
            let (train, held) = holdout_split(&demos, 0.5, seed);
            let trained: BTreeSet<u64> = train.iter().map(|r| r.scenario.id()).collect();
            assert_eq!(trained.len(), 6);
            assert_eq!(held.len(), 9 * 3);
        }
    }

    #[test]
    fn single_episode_is_never_held_out() {
        let mut cfg = Config::default();
        cfg.pipeline.templates = vec![ScenarioTemplate::ClearRoad];
        cfg.pipeline.train_episodes = 1;
        let demos: Vec<DemoRecord> = collect(&cfg, 0).into_iter().take(10).collect();
        let (train, held) = holdout_split(&demos, 0.5, 0);
        assert_eq!((train.len(), held.len()), (10, 0));
    }
}
