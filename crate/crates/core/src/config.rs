//! Plain-text `key = value` configuration with `[section]` headers.
//!
//! Every key has a default; a config file only needs to list overrides.
//! Unknown sections or keys are rejected so typos never silently fall back
//! to defaults.
//!
//! ```text
//! # comment
//! [world]
//! cruise_speed = 6.0
//!
//! [pipeline]
//! templates = red_light, crossing_pedestrian
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::world::ScenarioTemplate;

/// One parsed `key = value` entry with its source line.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Splits a config document into raw entries. Does not interpret values.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut section = String::new();
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find(['#', ';']) {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or(ConfigError::Syntax {
                line,
                message: "unterminated section header".into(),
            })?;
            let name = name.trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("invalid section name `{name}`"),
                });
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax {
            line,
            message: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: "empty key".into(),
            });
        }
        if section.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: format!("key `{key}` outside of any section"),
            });
        }
        entries.push(Entry {
            section: section.clone(),
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub dt: f64,
    pub cruise_speed: f64,
    pub v_max: f64,
    pub a_max: f64,
    /// Linear speed drag (1/s) applied every step.
    pub drag: f64,
    pub wheelbase: f64,
    /// Front-wheel angle (rad) at full steer command.
    pub max_steer_angle: f64,
    pub ego_length: f64,
    pub ego_width: f64,
    pub lane_half_width: f64,
    /// Lateral offset from the route beyond which the ego is off-road.
    pub offroad_offset: f64,
    /// Lateral offset at which the ego hits road furniture.
    pub layout_offset: f64,
    /// Lateral band in which counterfactual actors may be placed.
    pub scene_band: f64,
    pub green_duration: f64,
    pub yellow_duration: f64,
    pub red_duration: f64,
    pub min_route_length: f64,
    pub max_route_length: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            cruise_speed: 6.0,
            v_max: 8.0,
            a_max: 4.0,
            drag: 0.1,
            wheelbase: 2.7,
            max_steer_angle: 0.6,
            ego_length: 4.5,
            ego_width: 2.0,
            lane_half_width: 1.75,
            offroad_offset: 3.0,
            layout_offset: 6.0,
            scene_band: 8.0,
            green_duration: 8.0,
            yellow_duration: 2.0,
            red_duration: 6.0,
            min_route_length: 150.0,
            max_route_length: 250.0,
        }
    }
}

impl WorldConfig {
    pub fn light_cycle(&self) -> f64 {
        self.green_duration + self.yellow_duration + self.red_duration
    }

    /// Upper bound on per-step ego displacement.
    pub fn max_step_displacement(&self) -> f64 {
        self.v_max * self.dt + 0.5 * self.a_max * self.dt * self.dt
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidConfig {
    pub lat_kp: f64,
    pub lat_ki: f64,
    pub lat_kd: f64,
    pub lon_kp: f64,
    pub lon_ki: f64,
    pub lon_kd: f64,
    pub integral_clamp: f64,
    /// Minimum distance (m) of the waypoint used for heading error.
    pub lookahead: f64,
}

impl Default for PidConfig {
    fn default() -> Self {
        Self {
            lat_kp: 1.2,
            lat_ki: 0.0,
            lat_kd: 0.1,
            lon_kp: 0.8,
            lon_ki: 0.05,
            lon_kd: 0.0,
            integral_clamp: 1.0,
            lookahead: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub noise_sigma: f64,
    pub detection_range: f64,
    pub detection_slots: usize,
    pub visibility_range: f64,
    /// Half-angle (degrees) of the forward cone in which lights are seen.
    pub light_cone_deg: f64,
    pub route_context: usize,
    pub route_context_spacing: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.2,
            detection_range: 50.0,
            detection_slots: 8,
            visibility_range: 60.0,
            light_cone_deg: 30.0,
            route_context: 10,
            route_context_spacing: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertConfig {
    /// Extra corridor width (m) on top of the ego width.
    pub corridor_margin: f64,
    pub corridor_lookahead: f64,
    pub light_margin: f64,
    pub headway: f64,
    pub min_distance: f64,
    pub stopped_speed: f64,
    /// Clearance (m) kept in front of a stop constraint.
    pub stop_buffer: f64,
    /// Fraction of cruise speed at or above which an action counts as GO.
    pub go_fraction: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            corridor_margin: 1.0,
            corridor_lookahead: 15.0,
            light_margin: 5.0,
            headway: 2.0,
            min_distance: 8.0,
            stopped_speed: 0.5,
            stop_buffer: 1.5,
            go_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    pub l2: f64,
    /// Fraction of expert records held out to measure agreement.
    pub holdout_fraction: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            max_depth: 4,
            learning_rate: 0.1,
            min_leaf: 5,
            l2: 1.0,
            holdout_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfSettings {
    pub lambda_init: f64,
    pub lambda_growth: f64,
    pub lambda_max: f64,
    pub max_search_iters: usize,
    pub iters_per_lambda: usize,
    pub population: usize,
    pub m_diverse: usize,
    pub diversity_weight: f64,
    pub min_diversity: f64,
    pub mad_floor: f64,
    pub target_fraction: f64,
    pub fraction_tolerance: f64,
}

impl Default for CfSettings {
    fn default() -> Self {
        Self {
            lambda_init: 0.1,
            lambda_growth: 2.0,
            lambda_max: 1e4,
            max_search_iters: 2000,
            iters_per_lambda: 25,
            population: 40,
            m_diverse: 4,
            diversity_weight: 0.5,
            min_diversity: 0.3,
            mad_floor: 1e-6,
            target_fraction: 0.122,
            fraction_tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda_pt: f64,
    pub lambda_map: f64,
    pub lambda_tf: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub grid_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_pt: 0.4,
            lambda_map: 0.4,
            lambda_tf: 1.0,
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 64,
            epochs: 30,
            hidden: vec![128, 128],
            grid_size: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub pedestrian_collision: f64,
    pub vehicle_collision: f64,
    pub layout_collision: f64,
    pub red_light: f64,
    pub offroad: f64,
    pub route_timeout: f64,
    /// Time budget as a multiple of the route length driven at cruise speed.
    pub timeout_factor: f64,
    /// Extra seconds added to every time budget.
    pub timeout_slack: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            pedestrian_collision: 0.50,
            vehicle_collision: 0.60,
            layout_collision: 0.65,
            red_light: 0.70,
            offroad: 0.80,
            route_timeout: 0.70,
            timeout_factor: 2.0,
            timeout_slack: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub templates: Vec<ScenarioTemplate>,
    pub train_episodes: usize,
    /// Extra episodes collected so the size-matched ablation arm never
    /// runs out of original records.
    pub reserve_episodes: usize,
    pub eval_routes: usize,
    pub seed: u64,
    pub workers: usize,
    /// Std-dev of the correlated steering noise executed (not recorded)
    /// while collecting demonstrations.
    pub collect_steer_noise: f64,
    /// Std-dev of the correlated throttle noise executed while collecting.
    pub collect_throttle_noise: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            templates: ScenarioTemplate::ALL.to_vec(),
            train_episodes: 5,
            reserve_episodes: 2,
            eval_routes: 3,
            seed: 0,
            workers: 1,
            collect_steer_noise: 0.15,
            collect_throttle_noise: 0.2,
        }
    }
}

/// Full configuration for every pipeline stage.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Config {
    pub world: WorldConfig,
    pub pid: PidConfig,
    pub sensor: SensorConfig,
    pub expert: ExpertConfig,
    pub trees: TreeConfig,
    pub cf: CfSettings,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub pipeline: PipelineConfig,
}

fn parse_f64(e: &Entry) -> Result<f64, ConfigError> {
    let v: f64 = e.value.parse().map_err(|_| e.bad("expected a number"))?;
    if !v.is_finite() {
        return Err(e.bad("expected a finite number"));
    }
    Ok(v)
}

fn parse_usize(e: &Entry) -> Result<usize, ConfigError> {
    e.value.parse().map_err(|_| e.bad("expected a non-negative integer"))
}

fn parse_u64(e: &Entry) -> Result<u64, ConfigError> {
    e.value.parse().map_err(|_| e.bad("expected a non-negative integer"))
}

fn parse_list<T>(e: &Entry, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, ConfigError> {
    e.value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s).ok_or_else(|| e.bad(&format!("invalid list item `{s}`"))))
        .collect()
}

impl Entry {
    fn bad(&self, message: &str) -> ConfigError {
        ConfigError::Value {
            line: self.line,
            key: format!("{}.{}", self.section, self.key),
            message: message.to_string(),
        }
    }
}

macro_rules! apply_keys {
    ($entry:expr, $target:expr, { $($key:literal => $field:ident : $parse:ident),* $(,)? }) => {
        match $entry.key.as_str() {
            $($key => { $target.$field = $parse($entry)?; })*
            _ => return Err(ConfigError::UnknownKey {
                line: $entry.line,
                key: format!("{}.{}", $entry.section, $entry.key),
            }),
        }
    };
}

impl Config {
    /// Episode time budget in steps: the route driven at cruise speed,
    /// scaled by the timeout factor, plus the slack.
    pub fn max_steps(&self, route_length: f64) -> u64 {
        let seconds = route_length / self.world.cruise_speed * self.eval.timeout_factor + self.eval.timeout_slack;
        (seconds / self.world.dt).ceil() as u64
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        for e in parse_entries(text)? {
            cfg.apply(&e)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str(&text)
    }

    fn apply(&mut self, e: &Entry) -> Result<(), ConfigError> {
        match e.section.as_str() {
            "world" => apply_keys!(e, self.world, {
                "dt" => dt: parse_f64,
                "cruise_speed" => cruise_speed: parse_f64,
                "v_max" => v_max: parse_f64,
                "a_max" => a_max: parse_f64,
                "drag" => drag: parse_f64,
                "wheelbase" => wheelbase: parse_f64,
                "max_steer_angle" => max_steer_angle: parse_f64,
                "ego_length" => ego_length: parse_f64,
                "ego_width" => ego_width: parse_f64,
                "lane_half_width" => lane_half_width: parse_f64,
                "offroad_offset" => offroad_offset: parse_f64,
                "layout_offset" => layout_offset: parse_f64,
                "scene_band" => scene_band: parse_f64,
                "green_duration" => green_duration: parse_f64,
                "yellow_duration" => yellow_duration: parse_f64,
                "red_duration" => red_duration: parse_f64,
                "min_route_length" => min_route_length: parse_f64,
                "max_route_length" => max_route_length: parse_f64,
            }),
            "pid" => apply_keys!(e, self.pid, {
                "lat_kp" => lat_kp: parse_f64,
                "lat_ki" => lat_ki: parse_f64,
                "lat_kd" => lat_kd: parse_f64,
                "lon_kp" => lon_kp: parse_f64,
                "lon_ki" => lon_ki: parse_f64,
                "lon_kd" => lon_kd: parse_f64,
                "integral_clamp" => integral_clamp: parse_f64,
                "lookahead" => lookahead: parse_f64,
            }),
            "sensor" => apply_keys!(e, self.sensor, {
                "noise_sigma" => noise_sigma: parse_f64,
                "detection_range" => detection_range: parse_f64,
                "detection_slots" => detection_slots: parse_usize,
                "visibility_range" => visibility_range: parse_f64,
                "light_cone_deg" => light_cone_deg: parse_f64,
                "route_context" => route_context: parse_usize,
                "route_context_spacing" => route_context_spacing: parse_f64,
            }),
            "expert" => apply_keys!(e, self.expert, {
                "corridor_margin" => corridor_margin: parse_f64,
                "corridor_lookahead" => corridor_lookahead: parse_f64,
                "light_margin" => light_margin: parse_f64,
                "headway" => headway: parse_f64,
                "min_distance" => min_distance: parse_f64,
                "stopped_speed" => stopped_speed: parse_f64,
                "stop_buffer" => stop_buffer: parse_f64,
                "go_fraction" => go_fraction: parse_f64,
            }),
            "trees" => apply_keys!(e, self.trees, {
                "rounds" => rounds: parse_usize,
                "max_depth" => max_depth: parse_usize,
                "learning_rate" => learning_rate: parse_f64,
                "min_leaf" => min_leaf: parse_usize,
                "l2" => l2: parse_f64,
                "holdout_fraction" => holdout_fraction: parse_f64,
            }),
            "cf" => apply_keys!(e, self.cf, {
                "lambda_init" => lambda_init: parse_f64,
                "lambda_growth" => lambda_growth: parse_f64,
                "lambda_max" => lambda_max: parse_f64,
                "max_search_iters" => max_search_iters: parse_usize,
                "iters_per_lambda" => iters_per_lambda: parse_usize,
                "population" => population: parse_usize,
                "m_diverse" => m_diverse: parse_usize,
                "diversity_weight" => diversity_weight: parse_f64,
                "min_diversity" => min_diversity: parse_f64,
                "mad_floor" => mad_floor: parse_f64,
                "target_fraction" => target_fraction: parse_f64,
                "fraction_tolerance" => fraction_tolerance: parse_f64,
            }),
            "train" => match e.key.as_str() {
                "hidden" => self.train.hidden = parse_list(e, |s| s.parse().ok())?,
                _ => apply_keys!(e, self.train, {
                    "lambda_pt" => lambda_pt: parse_f64,
                    "lambda_map" => lambda_map: parse_f64,
                    "lambda_tf" => lambda_tf: parse_f64,
                    "learning_rate" => learning_rate: parse_f64,
                    "momentum" => momentum: parse_f64,
                    "batch_size" => batch_size: parse_usize,
                    "epochs" => epochs: parse_usize,
                    "grid_size" => grid_size: parse_usize,
                    "seed" => seed: parse_u64,
                }),
            },
            "eval" => apply_keys!(e, self.eval, {
                "pedestrian_collision" => pedestrian_collision: parse_f64,
                "vehicle_collision" => vehicle_collision: parse_f64,
                "layout_collision" => layout_collision: parse_f64,
                "red_light" => red_light: parse_f64,
                "offroad" => offroad: parse_f64,
                "route_timeout" => route_timeout: parse_f64,
                "timeout_factor" => timeout_factor: parse_f64,
                "timeout_slack" => timeout_slack: parse_f64,
            }),
            "pipeline" => match e.key.as_str() {
                "templates" => self.pipeline.templates = parse_list(e, ScenarioTemplate::from_name)?,
                _ => apply_keys!(e, self.pipeline, {
                    "train_episodes" => train_episodes: parse_usize,
                    "reserve_episodes" => reserve_episodes: parse_usize,
                    "eval_routes" => eval_routes: parse_usize,
                    "seed" => seed: parse_u64,
                    "workers" => workers: parse_usize,
                    "collect_steer_noise" => collect_steer_noise: parse_f64,
                    "collect_throttle_noise" => collect_throttle_noise: parse_f64,
                }),
            },
            other => {
                return Err(ConfigError::UnknownSection {
                    line: e.line,
                    section: other.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Checks cross-field constraints that individual parsers cannot.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = &self.world;
        let positive = [
            ("world.dt", w.dt),
            ("world.cruise_speed", w.cruise_speed),
            ("world.v_max", w.v_max),
            ("world.a_max", w.a_max),
            ("world.wheelbase", w.wheelbase),
            ("world.ego_length", w.ego_length),
            ("world.ego_width", w.ego_width),
            ("world.green_duration", w.green_duration),
            ("world.yellow_duration", w.yellow_duration),
            ("world.red_duration", w.red_duration),
            ("cf.lambda_init", self.cf.lambda_init),
            ("cf.mad_floor", self.cf.mad_floor),
            ("train.learning_rate", self.train.learning_rate),
        ];
        for (name, v) in positive {
            if v <= 0.0 {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        if w.cruise_speed > w.v_max {
            return Err(ConfigError::Invalid("world.cruise_speed exceeds world.v_max".into()));
        }
        if w.min_route_length > w.max_route_length || w.min_route_length < 50.0 {
            return Err(ConfigError::Invalid(
                "route length bounds must satisfy 50 <= min_route_length <= max_route_length".into(),
            ));
        }
        if self.cf.lambda_growth <= 1.0 {
            return Err(ConfigError::Invalid("cf.lambda_growth must exceed 1".into()));
        }
        if self.cf.m_diverse == 0 || self.cf.population < 2 {
            return Err(ConfigError::Invalid("cf.m_diverse >= 1 and cf.population >= 2 required".into()));
        }
        if !(0.0..=0.5).contains(&self.cf.target_fraction) {
            return Err(ConfigError::Invalid("cf.target_fraction must lie in [0, 0.5]".into()));
        }
        if [self.train.lambda_pt, self.train.lambda_map, self.train.lambda_tf]
            .iter()
            .any(|l| *l < 0.0)
        {
            return Err(ConfigError::Invalid("train loss weights must be non-negative".into()));
        }
        if self.train.batch_size == 0 || self.train.grid_size == 0 {
            return Err(ConfigError::Invalid("train.batch_size and train.grid_size must be positive".into()));
        }
        let e = &self.eval;
        for (name, c) in [
            ("eval.pedestrian_collision", e.pedestrian_collision),
            ("eval.vehicle_collision", e.vehicle_collision),
            ("eval.layout_collision", e.layout_collision),
            ("eval.red_light", e.red_light),
            ("eval.offroad", e.offroad),
            ("eval.route_timeout", e.route_timeout),
        ] {
            if !(c > 0.0 && c <= 1.0) {
                return Err(ConfigError::Invalid(format!("{name} must lie in (0, 1]")));
            }
        }
        if self.pipeline.templates.is_empty() {
            return Err(ConfigError::Invalid("pipeline.templates must not be empty".into()));
        }
        if self.sensor.detection_slots == 0 || self.sensor.route_context == 0 {
            return Err(ConfigError::Invalid("sensor slot counts must be positive".into()));
        }
        if self.pipeline.collect_steer_noise < 0.0 || self.pipeline.collect_throttle_noise < 0.0 {
            return Err(ConfigError::Invalid("collection noise must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.trees.holdout_fraction) {
            return Err(ConfigError::Invalid("trees.holdout_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Renders the full configuration, defaults included, in the same
    /// `key = value` format accepted by [`Config::from_str`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let value = serde_json::to_value(self).expect("config serializes");
        let sections = value.as_object().expect("config is an object");
        for (name, body) in sections {
            let _ = writeln!(out, "[{name}]");
            for (key, v) in body.as_object().expect("section is an object") {
                let rendered = match v {
                    serde_json::Value::Array(items) => items
                        .iter()
                        .map(|i| match i {
                            serde_json::Value::String(s) => s.clone(),
                            other => other.to_string(),
                        })
                        .collect::<Vec<_>>()
                        .join(", "),
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                let _ = writeln!(out, "{key} = {rendered}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn overrides_apply() {
        let cfg = Config::from_str(
            "# smoke\n[world]\ncruise_speed = 5.5 ; inline\n\n[pipeline]\ntemplates = clear_road, red_light\nseed = 9\n[train]\nhidden = 16, 8\n",
        )
        .unwrap();
        assert_eq!(cfg.world.cruise_speed, 5.5);
        assert_eq!(cfg.pipeline.templates, vec![ScenarioTemplate::ClearRoad, ScenarioTemplate::RedLight]);
        assert_eq!(cfg.pipeline.seed, 9);
        assert_eq!(cfg.train.hidden, vec![16, 8]);
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = Config::from_str("[world]\n\ncruise = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 3, .. }), "{err}");
    }

    #[test]
    fn unknown_template_rejected() {
        let err = Config::from_str("[pipeline]\ntemplates = highway\n").unwrap_err();
        assert!(matches!(err, ConfigError::Value { line: 2, .. }), "{err}");
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(Config::from_str("[world\n"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(Config::from_str("dt = 1\n"), Err(ConfigError::Syntax { .. })));
        assert!(matches!(Config::from_str("[world]\njunk\n"), Err(ConfigError::Syntax { line: 2, .. })));
        assert!(matches!(Config::from_str("[world]\ndt = nan\n"), Err(ConfigError::Value { .. })));
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = Config::default();
        cfg.world.cruise_speed = 5.25;
        cfg.train.hidden = vec![32];
        cfg.pipeline.templates = vec![ScenarioTemplate::Mixed];
        let back = Config::from_str(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }
}
