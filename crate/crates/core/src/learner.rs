//! Sensor-input imitation learner.
//!
//! A ReLU feed-forward network maps the flattened sensor observation to
//! three heads: 10 waypoints (linear), an ego-centric auxiliary grid
//! (sigmoid) and three traffic flags (sigmoid). Training minimizes
//! `lambda_pt * L1(waypoints) + lambda_map * MSE(grid) + lambda_tf * BCE(flags)`
//! with mini-batch Adam in 64-bit floats.

use std::io::Write;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::augment::DemoRecord;
use crate::config::{Config, SensorConfig, TrainConfig};
use crate::error::LearnerError;
use crate::expert::{Action, HORIZON};
use crate::geometry::Vec2;
use crate::observation::{discretize_action, ActionClass};
use crate::rng;
use crate::world::{ActorKind, LightObs, SensorObs};

pub const LEARNER_FORMAT: &str = "cfdriver-learner";
pub const LEARNER_VERSION: u32 = 1;
pub const N_WAYPOINT_COORDS: usize = 2 * HORIZON;
pub const N_FLAGS: usize = 3;
/// Index of the stop_required flag.
pub const FLAG_STOP: usize = 1;
/// Probability clamp inside the flag cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

/// Per-layer `(weights, bias)` gradients, in layer order.
pub type Gradients = Vec<(Array2<f64>, Array1<f64>)>;

const INIT_SALT: u64 = 0x494e_4954;
const BATCH_SALT: u64 = 0x4241_5443;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Values per detection slot: position, heading, speed, one-hot kind.
const DETECTION_WIDTH: usize = 8;

pub fn input_dim(sc: &SensorConfig) -> usize {
    1 + sc.detection_slots * DETECTION_WIDTH + 5 + 2 * sc.route_context
}

/// Flattens a sensor observation into the network input.
pub fn encode_sensor(obs: &SensorObs, sc: &SensorConfig) -> Result<Vec<f64>, LearnerError> {
    if obs.detections.len() != sc.detection_slots || obs.route_context.len() != sc.route_context {
        return Err(LearnerError::ShapeMismatch(format!(
            "observation has {} detections and {} route points, expected {} and {}",
            obs.detections.len(),
            obs.route_context.len(),
            sc.detection_slots,
            sc.route_context
        )));
    }
    let mut v = Vec::with_capacity(input_dim(sc));
    v.push(obs.ego_speed);
    for d in &obs.detections {
        v.extend([d.rel_x, d.rel_y, d.rel_heading, d.speed]);
        let kind = match d.kind {
            None => 0,
            Some(ActorKind::Vehicle) => 1,
            Some(ActorKind::Pedestrian) => 2,
            Some(ActorKind::Cyclist) => 3,
        };
        v.extend((0..4).map(|k| if k == kind { 1.0 } else { 0.0 }));
    }
    let light = match obs.visible_light_phase {
        LightObs::Red => 0,
        LightObs::Yellow => 1,
        LightObs::Green => 2,
        LightObs::Unknown => 3,
    };
    v.extend((0..4).map(|k| if k == light { 1.0 } else { 0.0 }));
    v.push(obs.light_rel_x);
    for p in &obs.route_context {
        v.extend([p.x, p.y]);
    }
    Ok(v)
}

/// One value per row for each head. Grid and flag entries are
/// probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Heads {
    pub waypoints: Array2<f64>,
    pub grid: Array2<f64>,
    pub flags: Array2<f64>,
}

impl Heads {
    pub fn rows(&self) -> usize {
        self.waypoints.nrows()
    }

    pub fn from_records(records: &[&DemoRecord]) -> Self {
        let n = records.len();
        let g = records.first().map_or(0, |r| r.aux.grid.len());
        let mut waypoints = Array2::zeros((n, N_WAYPOINT_COORDS));
        let mut grid = Array2::zeros((n, g));
        let mut flags = Array2::zeros((n, N_FLAGS));
        for (i, r) in records.iter().enumerate() {
            for (k, w) in r.action.waypoints.iter().enumerate() {
                waypoints[[i, 2 * k]] = w.x;
                waypoints[[i, 2 * k + 1]] = w.y;
            }
            for (j, c) in r.aux.grid.iter().enumerate() {
                grid[[i, j]] = *c;
            }
            for (j, f) in r.aux.flags.iter().enumerate() {
                flags[[i, j]] = *f;
            }
        }
        Heads { waypoints, grid, flags }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub pt: f64,
    pub map: f64,
    pub tf: f64,
}

impl From<&TrainConfig> for LossWeights {
    fn from(t: &TrainConfig) -> Self {
        LossWeights { pt: t.lambda_pt, map: t.lambda_map, tf: t.lambda_tf }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub l_pt: f64,
    pub l_map: f64,
    pub l_tf: f64,
    pub total: f64,
}

impl LossParts {
    fn combine(l_pt: f64, l_map: f64, l_tf: f64, w: &LossWeights) -> Self {
        LossParts { l_pt, l_map, l_tf, total: w.pt * l_pt + w.map * l_map + w.tf * l_tf }
    }
}

fn check_shape(name: &str, a: &Array2<f64>, b: &Array2<f64>) -> Result<(), LearnerError> {
    if a.dim() != b.dim() {
        return Err(LearnerError::ShapeMismatch(format!("{name}: prediction {:?} vs target {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Mean absolute waypoint error, mean squared grid error, mean flag
/// cross-entropy, and their weighted sum.
pub fn loss(pred: &Heads, target: &Heads, w: &LossWeights) -> Result<LossParts, LearnerError> {
    check_shape("waypoints", &pred.waypoints, &target.waypoints)?;
    check_shape("grid", &pred.grid, &target.grid)?;
    check_shape("flags", &pred.flags, &target.flags)?;
    let mean = |a: &Array2<f64>, b: &Array2<f64>, f: &dyn Fn(f64, f64) -> f64| {
        if a.is_empty() {
            0.0
        } else {
            a.iter().zip(b.iter()).map(|(p, t)| f(*p, *t)).sum::<f64>() / a.len() as f64
        }
    };
    let l_pt = mean(&pred.waypoints, &target.waypoints, &|p, t| (p - t).abs());
    let l_map = mean(&pred.grid, &target.grid, &|p, t| (p - t).powi(2));
    let l_tf = mean(&pred.flags, &target.flags, &bce);
    Ok(LossParts::combine(l_pt, l_map, l_tf, w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `inputs x outputs`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub l_pt: f64,
    pub l_map: f64,
    pub l_tf: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerModel {
    pub format: String,
    pub version: u32,
    pub sensor: SensorConfig,
    pub train: TrainConfig,
    pub grid_len: usize,
    /// Input standardization fitted on the training set.
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub layers: Vec<Dense>,
    pub loss_curve: Vec<EpochLoss>,
}

/// Activations kept for the backward pass.
struct Forward {
    /// Input of every layer, then the raw output.
    acts: Vec<Array2<f64>>,
}

impl Forward {
    fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("at least the input")
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LearnerModel {
    /// Randomly initialized network (He-normal weights, zero biases) with
    /// identity input standardization.
    pub fn init(sensor: &SensorConfig, train: &TrainConfig, grid_len: usize) -> Self {
        let n_in = input_dim(sensor);
        let mut dims = vec![n_in];
        dims.extend(&train.hidden);
        dims.push(N_WAYPOINT_COORDS + grid_len + N_FLAGS);
        let mut r = rng::stream(train.seed, &[INIT_SALT]);
        let layers = dims
            .windows(2)
            .map(|d| {
                let normal = Normal::new(0.0, (2.0 / d[0] as f64).sqrt()).expect("positive sigma");
                Dense {
                    weights: Array2::from_shape_simple_fn((d[0], d[1]), || normal.sample(&mut r)),
                    bias: Array1::zeros(d[1]),
                }
            })
            .collect();
        LearnerModel {
            format: LEARNER_FORMAT.into(),
            version: LEARNER_VERSION,
            sensor: sensor.clone(),
            train: train.clone(),
            grid_len,
            input_mean: vec![0.0; n_in],
            input_scale: vec![1.0; n_in],
            layers,
            loss_curve: Vec::new(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_mean.len()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Fits the input standardization to `x`.
    fn fit_standardization(&mut self, x: &Array2<f64>) {
        let n = x.nrows().max(1) as f64;
        for j in 0..x.ncols() {
            let col = x.column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            self.input_mean[j] = mean;
            self.input_scale[j] = if var.sqrt() > 1e-8 { var.sqrt() } else { 1.0 };
        }
    }

    fn standardize(&self, x: &mut Array2<f64>) {
        for mut row in x.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.input_mean[j]) / self.input_scale[j];
            }
        }
    }

    fn forward(&self, x: ArrayView2<f64>) -> Forward {
        let mut acts = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&layer.weights) + &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        Forward { acts }
    }

    fn split_heads(&self, out: &Array2<f64>) -> Heads {
        let g0 = N_WAYPOINT_COORDS;
        let f0 = g0 + self.grid_len;
        Heads {
            waypoints: out.slice(s![.., ..g0]).to_owned(),
            grid: out.slice(s![.., g0..f0]).mapv(sigmoid),
            flags: out.slice(s![.., f0..]).mapv(sigmoid),
        }
    }

    /// Head outputs for already standardized inputs.
    pub fn predict_standardized(&self, x: ArrayView2<f64>) -> Heads {
        self.split_heads(self.forward(x).output())
    }

    pub fn predict(&self, obs: &[&SensorObs]) -> Result<Heads, LearnerError> {
        let x = self.encode(obs)?;
        Ok(self.predict_standardized(x.view()))
    }

    /// Encoded and standardized input rows.
    pub fn encode(&self, obs: &[&SensorObs]) -> Result<Array2<f64>, LearnerError> {
        let n_in = self.input_dim();
        let mut x = Array2::zeros((obs.len(), n_in));
        for (i, o) in obs.iter().enumerate() {
            let v = encode_sensor(o, &self.sensor)?;
            x.row_mut(i).assign(&Array1::from(v));
        }
        self.standardize(&mut x);
        Ok(x)
    }

    /// Loss and its gradient for one batch of standardized inputs. Gradients
    /// come back in layer order, as `(weights, bias)` pairs.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, target: &Heads) -> Result<(LossParts, Gradients), LearnerError> {
        let fwd = self.forward(x);
        let out = fwd.output();
        let pred = self.split_heads(out);
        let w = LossWeights::from(&self.train);
        let parts = loss(&pred, target, &w)?;

        let b = out.nrows() as f64;
        let g0 = N_WAYPOINT_COORDS;
        let f0 = g0 + self.grid_len;
        let mut dz = Array2::zeros(out.raw_dim());
        let scale_pt = w.pt / (b * g0 as f64);
        let scale_map = if self.grid_len == 0 { 0.0 } else { w.map / (b * self.grid_len as f64) };
        let scale_tf = w.tf / (b * N_FLAGS as f64);
        for i in 0..out.nrows() {
            for k in 0..g0 {
                let d = pred.waypoints[[i, k]] - target.waypoints[[i, k]];
                dz[[i, k]] = scale_pt * if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
            }
            for k in 0..self.grid_len {
                let p = pred.grid[[i, k]];
                dz[[i, g0 + k]] = scale_map * 2.0 * (p - target.grid[[i, k]]) * p * (1.0 - p);
            }
            for k in 0..N_FLAGS {
                let p = pred.flags[[i, k]];
                // Inside the clamp the BCE-through-sigmoid derivative is p - y.
                let inside = p > BCE_EPS && p < 1.0 - BCE_EPS;
                dz[[i, f0 + k]] = if inside { scale_tf * (p - target.flags[[i, k]]) } else { 0.0 };
            }
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let a = &fwd.acts[l];
            let gw = a.t().dot(&dz);
            let gb = dz.sum_axis(Axis(0));
            if l > 0 {
                let mut da = dz.dot(&self.layers[l].weights.t());
                da.zip_mut_with(a, |d, act| {
                    if *act <= 0.0 {
                        *d = 0.0;
                    }
                });
                dz = da;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        Ok((parts, grads))
    }

    fn check_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: String| Err(LearnerError::Malformed(m));
        if self.format != LEARNER_FORMAT {
            return bad(format!("format {:?}", self.format));
        }
        if self.version != LEARNER_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        let n_in = input_dim(&self.sensor);
        if self.input_mean.len() != n_in || self.input_scale.len() != n_in {
            return bad("standardization length".into());
        }
        if self.input_scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) || self.input_mean.iter().any(|m| !m.is_finite()) {
            return bad("standardization values".into());
        }
        let mut dims = vec![n_in];
        dims.extend(&self.train.hidden);
        dims.push(N_WAYPOINT_COORDS + self.grid_len + N_FLAGS);
        if self.layers.len() + 1 != dims.len() {
            return bad("layer count".into());
        }
        for (l, d) in self.layers.iter().zip(dims.windows(2)) {
            if l.weights.dim() != (d[0], d[1]) || l.bias.len() != d[1] {
                return bad("layer shape".into());
            }
        }
        if !self.check_finite() {
            return bad("non-finite parameter".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LearnerError> {
        let m: LearnerModel = serde_json::from_str(text).map_err(|e| LearnerError::Malformed(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    /// Loss curve as CSV with columns epoch, l_pt, l_map, l_tf, total.
    pub fn write_loss_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for e in &self.loss_curve {
            out.serialize(e)?;
        }
        out.flush()?;
        Ok(())
    }
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl Adam {
    fn new(model: &LearnerModel) -> Self {
        let zeros = || model.layers.iter().map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len()))).collect();
        Adam { m: zeros(), v: zeros(), t: 0 }
    }

    fn step(&mut self, model: &mut LearnerModel, grads: &[(Array2<f64>, Array1<f64>)], lr: f64, beta1: f64) {
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        };
        for (l, layer) in model.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads[l];
            let (mw, mb) = &mut self.m[l];
            let (vw, vb) = &mut self.v[l];
            ndarray::Zip::from(&mut layer.weights).and(gw).and(mw).and(vw).for_each(|p, g, m, v| update(p, *g, m, v));
            ndarray::Zip::from(&mut layer.bias).and(gb).and(mb).and(vb).for_each(|p, g, m, v| update(p, *g, m, v));
        }
    }
}

/// Trains a fresh network on `records`.
pub fn train(records: &[DemoRecord], cfg: &Config) -> Result<LearnerModel, LearnerError> {
    train_with(records, &cfg.sensor, &cfg.train)
}

pub fn train_with(records: &[DemoRecord], sensor: &SensorConfig, tc: &TrainConfig) -> Result<LearnerModel, LearnerError> {
    let first = records.first().ok_or(LearnerError::EmptyDataset)?;
    let grid_len = first.aux.grid.len();
    if let Some(r) = records.iter().find(|r| r.aux.grid.len() != grid_len) {
        return Err(LearnerError::ShapeMismatch(format!("grid of length {} among {grid_len}", r.aux.grid.len())));
    }
    let mut model = LearnerModel::init(sensor, tc, grid_len);
    let refs: Vec<&DemoRecord> = records.iter().collect();
    let obs: Vec<&SensorObs> = refs.iter().map(|r| &r.sensor_obs).collect();
    let mut x = model.encode(&obs)?;
    model.fit_standardization(&x);
    model.standardize(&mut x);
    let targets = Heads::from_records(&refs);

    let n = records.len();
    let batch = tc.batch_size.max(1);
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=tc.epochs {
        order.shuffle(&mut rng::stream(tc.seed, &[BATCH_SALT, epoch as u64]));
        let mut sums = [0.0; 4];
        for chunk in order.chunks(batch) {
            let xb = x.select(Axis(0), chunk);
            let tb = Heads {
                waypoints: targets.waypoints.select(Axis(0), chunk),
                grid: targets.grid.select(Axis(0), chunk),
                flags: targets.flags.select(Axis(0), chunk),
            };
            let (parts, grads) = model.loss_and_grad(xb.view(), &tb)?;
            if !parts.total.is_finite() {
                return Err(LearnerError::DivergedLoss { epoch });
            }
            let k = chunk.len() as f64;
            for (s, v) in sums.iter_mut().zip([parts.l_pt, parts.l_map, parts.l_tf, parts.total]) {
                *s += v * k;
            }
            adam.step(&mut model, &grads, tc.learning_rate, tc.momentum);
            if !model.check_finite() {
                return Err(LearnerError::DivergedLoss { epoch });
            }
        }
        let nf = n as f64;
        model.loss_curve.push(EpochLoss {
            epoch,
            l_pt: sums[0] / nf,
            l_map: sums[1] / nf,
            l_tf: sums[2] / nf,
            total: sums[3] / nf,
        });
        log::debug!("epoch {epoch}: total loss {:.5}", sums[3] / nf);
    }
    Ok(model)
}

/// Action from the learner's heads: waypoints projected onto the spacing
/// limit, brake when stop_required is more likely than not, acceleration
/// from the change in waypoint spacing.
pub fn learner_act(model: &LearnerModel, obs: &SensorObs, cfg: &Config) -> Result<Action, LearnerError> {
    let heads = model.predict(&[obs])?;
    Ok(action_from_heads(&heads, 0, cfg))
}

pub fn action_from_heads(heads: &Heads, row: usize, cfg: &Config) -> Action {
    let wc = &cfg.world;
    let wp = heads.waypoints.row(row);
    let waypoints = std::array::from_fn(|k| Vec2::new(wp[2 * k], wp[2 * k + 1]));
    let brake = heads.flags[[row, FLAG_STOP]] > 0.5;
    let mut action = Action { waypoints, accel: 0.0, brake, class_hint: ActionClass::Go };
    action.project_spacing(wc.v_max * wc.dt);
    let sp = action.spacings();
    let accel = (sp[HORIZON - 1] - sp[0]) / ((HORIZON - 1) as f64 * wc.dt * wc.dt);
    action.accel = accel.clamp(-wc.a_max, wc.a_max);
    action.class_hint = discretize_action(&action, wc, &cfg.expert);
    action
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heads(b: usize, g: usize, wp: f64, grid: f64, flag: f64) -> Heads {
        Heads {
            waypoints: Array2::from_elem((b, N_WAYPOINT_COORDS), wp),
            grid: Array2::from_elem((b, g), grid),
            flags: Array2::from_elem((b, N_FLAGS), flag),
        }
    }

    fn w() -> LossWeights {
        LossWeights { pt: 0.4, map: 0.4, tf: 1.0 }
    }

    #[test]
    fn perfect_prediction_has_near_zero_loss() {
        let t = heads(3, 50, 2.0, 1.0, 1.0);
        let l = loss(&t, &t, &w()).unwrap();
        assert!(l.l_pt.abs() < 1e-12 && l.l_map.abs() < 1e-12);
        assert!(l.l_tf <= 1e-6);
        let t0 = heads(3, 50, 2.0, 0.0, 0.0);
        assert!(loss(&t0, &t0, &w()).unwrap().l_tf <= 1e-6);
    }

    #[test]
    fn unit_waypoint_offset() {
        let t = heads(2, 50, 0.0, 1.0, 1.0);
        let mut p = t.clone();
        p.waypoints.mapv_inplace(|v| v + 1.0);
        let l = loss(&p, &t, &w()).unwrap();
        assert_eq!(l.l_pt, 1.0);
        assert_eq!(l.total, 0.4 + 1.0 * l.l_tf);
        assert!(l.l_tf <= 1e-6);
    }

    #[test]
    fn zero_weights_zero_total() {
        let t = heads(2, 8, 0.3, 0.2, 0.7);
        let p = heads(2, 8, -1.0, 0.9, 0.1);
        let l = loss(&p, &t, &LossWeights { pt: 0.0, map: 0.0, tf: 0.0 }).unwrap();
        assert_eq!(l.total, 0.0);
        assert!(l.l_pt > 0.0);
    }

    #[test]
    fn loss_decomposition_is_exact() {
        let t = heads(4, 8, 0.3, 0.2, 0.7);
        let p = heads(4, 8, -1.0, 0.9, 0.1);
        let l = loss(&p, &t, &w()).unwrap();
        assert_eq!(l.total, 0.4 * l.l_pt + 0.4 * l.l_map + 1.0 * l.l_tf);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let t = heads(2, 8, 0.0, 0.0, 0.0);
        let p = heads(2, 9, 0.0, 0.0, 0.0);
        assert!(matches!(loss(&p, &t, &w()), Err(LearnerError::ShapeMismatch(_))));
    }

    #[test]
    fn empty_dataset_rejected() {
        let c = Config::default();
        assert_eq!(train(&[], &c).unwrap_err(), LearnerError::EmptyDataset);
    }

    #[test]
    fn stop_probability_sets_brake() {
        let c = Config::default();
        let mut h = heads(1, 50, 0.0, 0.0, 0.0);
        h.flags[[0, FLAG_STOP]] = 0.9;
        for k in 0..HORIZON {
            h.waypoints[[0, 2 * k]] = 0.1 * (k + 1) as f64;
        }
        let a = action_from_heads(&h, 0, &c);
        assert!(a.brake);
        assert_eq!(a.class_hint, ActionClass::Stop);
        h.flags[[0, FLAG_STOP]] = 0.1;
        assert!(!action_from_heads(&h, 0, &c).brake);
    }

    #[test]
    fn projected_actions_have_valid_spacing() {
        let c = Config::default();
        let max = c.world.v_max * c.world.dt;
        let mut r = rng::stream(3, &[]);
        let normal = Normal::new(0.0, 5.0).unwrap();
        for _ in 0..200 {
            let mut h = heads(1, 50, 0.0, 0.0, 0.0);
            h.waypoints.mapv_inplace(|_| normal.sample(&mut r));
            h.flags[[0, FLAG_STOP]] = rand::Rng::gen(&mut r);
            let a = action_from_heads(&h, 0, &c);
            assert_eq!(a.waypoints.len(), HORIZON);
            assert!(a.satisfies_invariants(max, 1e-9));
        }
    }
}
