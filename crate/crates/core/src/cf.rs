//! Counterfactual search against a tree classifier.
//!
//! The objective for a candidate `c` around the original `o` is
//! `lam * (p_target(c) - 1)^2 + dist(o, c) + w * sum_j exp(-dist(c, prev_j))`,
//! where `dist` is Euclidean over scale-standardized differences and the last
//! term only applies when earlier counterfactuals for the same input exist.
//! Trees are piecewise constant, so the search is evolutionary: a population
//! of perturbed copies of `o` is evolved under an escalating `lam` until a
//! candidate predicts the target class, and the best candidates are then
//! pulled back toward `o` while they stay valid.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::CfSettings;
use crate::error::{CfError, TreeError};
use crate::observation::ActionClass;
use crate::trees::TreeModel;

const POLISH_STEPS: usize = 40;
const POLISH_CANDIDATES: usize = 4;
const LATTICE_BUDGET: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfConfig {
    pub lambda_init: f64,
    pub lambda_growth: f64,
    pub lambda_max: f64,
    /// Cap on generations across all lambda levels.
    pub max_search_iters: usize,
    pub iters_per_lambda: usize,
    pub population: usize,
    pub m_diverse: usize,
    pub diversity_weight: f64,
    /// Smallest standardized distance allowed between two returned
    /// counterfactuals for the same input.
    pub min_diversity: f64,
    pub frozen: Vec<bool>,
    pub integer: Vec<bool>,
    pub scales: Vec<f64>,
    pub ranges: Vec<(f64, f64)>,
}

impl CfConfig {
    pub fn new(s: &CfSettings, scales: Vec<f64>, ranges: Vec<(f64, f64)>) -> Self {
        let n = scales.len();
        CfConfig {
            lambda_init: s.lambda_init,
            lambda_growth: s.lambda_growth,
            lambda_max: s.lambda_max,
            max_search_iters: s.max_search_iters,
            iters_per_lambda: s.iters_per_lambda,
            population: s.population,
            m_diverse: s.m_diverse,
            diversity_weight: s.diversity_weight,
            min_diversity: s.min_diversity,
            frozen: vec![false; n],
            integer: vec![false; n],
            scales,
            ranges,
        }
    }

    pub fn with_frozen(mut self, frozen: Vec<bool>) -> Self {
        self.frozen = frozen;
        self
    }

    pub fn with_integer(mut self, integer: Vec<bool>) -> Self {
        self.integer = integer;
        self
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.scales)
            .map(|((x, y), s)| {
                let d = (x - y) / s;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    fn check(&self, n: usize) -> Result<(), CfError> {
        let ok = self.scales.len() == n
            && self.ranges.len() == n
            && self.frozen.len() == n
            && self.integer.len() == n
            && self.scales.iter().all(|s| *s > 0.0 && s.is_finite())
            && self.lambda_init > 0.0
            && self.population >= 2;
        if ok {
            Ok(())
        } else {
            Err(CfError::Model(TreeError::Malformed("counterfactual configuration does not match the model".into())))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfExample {
    pub original: Vec<f64>,
    pub original_class: ActionClass,
    pub cf: Vec<f64>,
    pub target_class: ActionClass,
    pub distance: f64,
    pub lambda_final: f64,
    pub valid: bool,
}

/// One line of a counterfactual JSON-lines file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfRecord {
    #[serde(flatten)]
    pub example: CfExample,
    pub seed: u64,
    /// Set when a test fixture checked the example against a grid oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<bool>,
}

impl CfRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn from_line(line: &str) -> Result<Self, String> {
        let r: CfRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let e = &r.example;
        if e.original.len() != e.cf.len() {
            return Err("original and cf lengths differ".into());
        }
        if !(e.distance.is_finite() && e.distance >= 0.0) || !e.lambda_final.is_finite() {
            return Err("distance and lambda_final must be finite".into());
        }
        if e.original.iter().chain(&e.cf).any(|v| !v.is_finite()) {
            return Err("non-finite feature value".into());
        }
        Ok(r)
    }
}

/// Search objective without the diversity term.
pub fn cf_loss(
    model: &TreeModel,
    o_prime: &[f64],
    o: &[f64],
    target: ActionClass,
    lam: f64,
    cfg: &CfConfig,
) -> Result<f64, TreeError> {
    let p = model.predict_proba(o_prime)?[target.index()];
    Ok(lam * (p - 1.0).powi(2) + cfg.distance(o, o_prime))
}

/// Per-feature spread: median absolute deviation, falling back to the mean
/// absolute deviation and then to 1 when the spread is below `floor`.
pub fn mad_scales(rows: &[Vec<f64>], floor: f64) -> Vec<f64> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|f| {
            let mut col: Vec<f64> = rows.iter().map(|r| r[f]).collect();
            let med = median(&mut col);
            let mut dev: Vec<f64> = col.iter().map(|v| (v - med).abs()).collect();
            let mad = median(&mut dev);
            if mad >= floor {
                return mad;
            }
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let mean_abs = col.iter().map(|v| (v - mean).abs()).sum::<f64>() / col.len() as f64;
            if mean_abs >= floor {
                mean_abs
            } else {
                1.0
            }
        })
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Observed `[min, max]` of every feature.
pub fn observed_ranges(rows: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|f| rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[f]), hi.max(r[f]))))
        .collect()
}

#[derive(Debug, Clone)]
struct Candidate {
    x: Vec<f64>,
    p_target: f64,
    class_ok: bool,
    dist: f64,
    div_penalty: f64,
    min_div: f64,
}

impl Candidate {
    fn objective(&self) -> f64 {
        self.dist + self.div_penalty
    }

    fn loss(&self, lam: f64) -> f64 {
        lam * (self.p_target - 1.0).powi(2) + self.objective()
    }
}

struct Search<'a> {
    model: &'a TreeModel,
    o: &'a [f64],
    target: ActionClass,
    cfg: &'a CfConfig,
    previous: &'a [Vec<f64>],
    /// Free features the model splits on.
    movable: Vec<usize>,
    thresholds: Vec<Vec<f64>>,
}

impl Search<'_> {
    fn evaluate(&self, x: Vec<f64>) -> Candidate {
        let p = self.model.predict_proba(&x).expect("length checked");
        let class_ok = crate::trees::argmax_class(&p) == self.target;
        let dist = self.cfg.distance(self.o, &x);
        let mut div_penalty = 0.0;
        let mut min_div = f64::INFINITY;
        for prev in self.previous {
            let d = self.cfg.distance(&x, prev);
            div_penalty += self.cfg.diversity_weight * (-d).exp();
            min_div = min_div.min(d);
        }
        Candidate { x, p_target: p[self.target.index()], class_ok, dist, div_penalty, min_div }
    }

    fn valid(&self, c: &Candidate) -> bool {
        c.class_ok && (self.previous.is_empty() || c.min_div >= self.cfg.min_diversity)
    }

    fn finish(&self, f: usize, v: f64) -> f64 {
        let (lo, hi) = self.cfg.ranges[f];
        let v = v.clamp(lo.min(self.o[f]), hi.max(self.o[f]));
        if self.cfg.integer[f] {
            v.round()
        } else {
            v
        }
    }

    fn mutate_feature<R: Rng>(&self, x: &mut [f64], k: usize, rng: &mut R) {
        let f = self.movable[k];
        let scale = self.cfg.scales[f];
        let r: f64 = rng.gen();
        let v = if r < 0.4 && !self.thresholds[k].is_empty() {
            let t = *self.thresholds[k].choose(rng).expect("non-empty");
            let left = rng.gen_bool(0.5);
            if self.cfg.integer[f] {
                if left {
                    t.ceil() - 1.0
                } else {
                    t.ceil()
                }
            } else if left {
                t - (1e-6 * scale).max(1e-9 * t.abs())
            } else {
                t
            }
        } else if r < 0.8 {
            let sigma = [0.1, 0.5, 2.0][rng.gen_range(0..3)];
            let z: f64 = StandardNormal.sample(rng);
            x[f] + z * sigma * scale
        } else {
            let (lo, hi) = self.cfg.ranges[f];
            if hi > lo {
                rng.gen_range(lo..=hi)
            } else {
                lo
            }
        };
        x[f] = self.finish(f, v);
    }

    fn mutate<R: Rng>(&self, x: &mut [f64], count: usize, rng: &mut R) {
        let n = self.movable.len();
        for k in rand::seq::index::sample(rng, n, count.min(n)).into_iter() {
            self.mutate_feature(x, k, rng);
        }
    }

    fn run<R: Rng>(&self, rng: &mut R) -> Option<(Candidate, f64)> {
        let cfg = self.cfg;
        let pop_size = cfg.population;
        let elite = (pop_size / 2).max(1);
        let mut pop: Vec<Candidate> = (0..pop_size)
            .map(|_| {
                let mut x = self.o.to_vec();
                let k = rng.gen_range(1..=3);
                self.mutate(&mut x, k, rng);
                self.evaluate(x)
            })
            .collect();
        let mut archive: Vec<Candidate> = Vec::new();
        let consider = |c: &Candidate, archive: &mut Vec<Candidate>| {
            if !self.valid(c) || archive.iter().any(|a| a.x == c.x) {
                return;
            }
            archive.push(c.clone());
            archive.sort_by(|a, b| a.objective().total_cmp(&b.objective()));
            archive.truncate(POLISH_CANDIDATES);
        };
        for c in &pop {
            consider(c, &mut archive);
        }
        for (slot, c) in self.lattice().into_iter().enumerate() {
            consider(&c, &mut archive);
            pop[pop_size - 1 - slot % pop_size] = c;
        }

        let mut lam = cfg.lambda_init;
        let mut generations = 0;
        let mut refined = false;
        loop {
            for _ in 0..cfg.iters_per_lambda {
                if generations >= cfg.max_search_iters {
                    break;
                }
                generations += 1;
                if refined {
                    // Constrained phase: valid candidates first, nearest first.
                    pop.sort_by(|a, b| {
                        self.valid(b).cmp(&self.valid(a)).then_with(|| {
                            if self.valid(a) {
                                a.objective().total_cmp(&b.objective())
                            } else {
                                a.loss(lam).total_cmp(&b.loss(lam))
                            }
                        })
                    });
                } else {
                    pop.sort_by(|a, b| a.loss(lam).total_cmp(&b.loss(lam)));
                }
                pop.truncate(elite);
                while pop.len() < pop_size {
                    let a = &pop[rng.gen_range(0..elite)];
                    let mut x = a.x.clone();
                    let op: f64 = rng.gen();
                    if op < 0.5 {
                        let k = if rng.gen_bool(0.7) { 1 } else { 2 };
                        self.mutate(&mut x, k, rng);
                    } else if op < 0.75 {
                        let b = &pop[rng.gen_range(0..elite)];
                        for &f in &self.movable {
                            if rng.gen_bool(0.5) {
                                x[f] = b.x[f];
                            }
                        }
                    } else {
                        for &f in &self.movable {
                            if rng.gen_bool(0.5) {
                                x[f] = self.o[f];
                            }
                        }
                        if rng.gen_bool(0.5) {
                            self.mutate(&mut x, 1, rng);
                        }
                    }
                    let c = self.evaluate(x);
                    consider(&c, &mut archive);
                    pop.push(c);
                }
            }
            if !archive.is_empty() {
                // One more level at the same lambda to look for nearer cells.
                if refined || generations >= cfg.max_search_iters {
                    break;
                }
                refined = true;
                continue;
            }
            lam *= cfg.lambda_growth;
            if lam > cfg.lambda_max || generations >= cfg.max_search_iters {
                return None;
            }
        }

        let best = archive
            .into_iter()
            .map(|c| self.polish(c))
            .min_by(|a, b| a.objective().total_cmp(&b.objective()))
            .expect("archive non-empty");
        Some((best, lam))
    }

    /// Value of feature `f` just across threshold `t` as seen from the
    /// original.
    fn crossing(&self, f: usize, t: f64) -> f64 {
        let o = self.o[f];
        if self.cfg.integer[f] {
            if o < t {
                t.ceil()
            } else {
                t.ceil() - 1.0
            }
        } else if o < t {
            t
        } else {
            t - (1e-6 * self.cfg.scales[f]).max(1e-9 * t.abs())
        }
    }

    /// Best-first walk over combinations of threshold crossings, cheapest
    /// first. For axis-aligned trees the nearest point of every decision
    /// cell is such a combination, so small models are covered exactly;
    /// large ones up to the evaluation budget.
    fn lattice(&self) -> Vec<Candidate> {
        let options: Vec<Vec<(f64, f64)>> = self
            .movable
            .iter()
            .zip(&self.thresholds)
            .map(|(&f, thr)| {
                let (lo, hi) = self.cfg.ranges[f];
                let mut opts: Vec<(f64, f64)> = thr
                    .iter()
                    .map(|&t| self.crossing(f, t))
                    .filter(|v| *v >= lo.min(self.o[f]) && *v <= hi.max(self.o[f]) && *v != self.o[f])
                    .map(|v| (v, ((v - self.o[f]) / self.cfg.scales[f]).powi(2)))
                    .collect();
                opts.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
                opts.dedup_by(|a, b| a.0 == b.0);
                opts.insert(0, (self.o[f], 0.0));
                opts
            })
            .collect();

        let cost = |idx: &[usize]| idx.iter().enumerate().map(|(k, &i)| options[k][i].1).sum::<f64>();
        let mut heap = BinaryHeap::new();
        let mut seen = HashSet::new();
        let start = vec![0usize; options.len()];
        seen.insert(start.clone());
        heap.push(Reverse((OrdF64(0.0), start)));
        let mut found = Vec::new();
        let mut evaluations = 0;
        while let Some(Reverse((_, idx))) = heap.pop() {
            if evaluations >= LATTICE_BUDGET || found.len() >= POLISH_CANDIDATES {
                break;
            }
            if idx.iter().any(|&i| i > 0) {
                let mut x = self.o.to_vec();
                for (k, &i) in idx.iter().enumerate() {
                    x[self.movable[k]] = options[k][i].0;
                }
                evaluations += 1;
                let c = self.evaluate(x);
                if self.valid(&c) {
                    found.push(c);
                    // Combinations extending a valid one are only farther.
                    continue;
                }
            }
            for k in 0..idx.len() {
                if idx[k] + 1 < options[k].len() {
                    let mut next = idx.clone();
                    next[k] += 1;
                    if seen.insert(next.clone()) {
                        heap.push(Reverse((OrdF64(cost(&next)), next)));
                    }
                }
            }
        }
        found
    }

    /// Moves a valid candidate toward the original: first along the joining
    /// segment, then one coordinate at a time, never giving up validity.
    fn polish(&self, mut best: Candidate) -> Candidate {
        let (mut lo, mut hi) = (0.0, 1.0);
        let start = best.x.clone();
        for _ in 0..POLISH_STEPS {
            let mid = 0.5 * (lo + hi);
            let x: Vec<f64> = self
                .o
                .iter()
                .zip(&start)
                .enumerate()
                .map(|(f, (a, b))| if self.cfg.integer[f] { (a + mid * (b - a)).round() } else { a + mid * (b - a) })
                .collect();
            let c = self.evaluate(x);
            if self.valid(&c) {
                hi = mid;
                if c.dist < best.dist {
                    best = c;
                }
            } else {
                lo = mid;
            }
        }

        for _pass in 0..3 {
            let mut improved = false;
            let mut order: Vec<usize> = self.movable.iter().copied().filter(|&f| best.x[f] != self.o[f]).collect();
            order.sort_by(|&a, &b| {
                let da = ((best.x[a] - self.o[a]) / self.cfg.scales[a]).abs();
                let db = ((best.x[b] - self.o[b]) / self.cfg.scales[b]).abs();
                db.total_cmp(&da).then(a.cmp(&b))
            });
            for f in order {
                let mut x = best.x.clone();
                x[f] = self.o[f];
                let c = self.evaluate(x);
                if self.valid(&c) {
                    best = c;
                    improved = true;
                    continue;
                }
                let (mut inner, mut outer) = (self.o[f], best.x[f]);
                for _ in 0..POLISH_STEPS {
                    let mid = if self.cfg.integer[f] {
                        let m = (0.5 * (inner + outer)).round();
                        if m == inner || m == outer {
                            break;
                        }
                        m
                    } else {
                        0.5 * (inner + outer)
                    };
                    let mut x = best.x.clone();
                    x[f] = mid;
                    let c = self.evaluate(x);
                    if self.valid(&c) {
                        outer = mid;
                        if c.dist < best.dist {
                            best = c;
                            improved = true;
                        }
                    } else {
                        inner = mid;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        best
    }
}

fn prepare<'a>(
    model: &'a TreeModel,
    o: &'a [f64],
    target: ActionClass,
    cfg: &'a CfConfig,
    previous: &'a [Vec<f64>],
) -> Result<(ActionClass, Option<Search<'a>>), CfError> {
    cfg.check(model.n_features)?;
    let current = model.predict_class(o)?;
    if current == target {
        return Err(CfError::InvalidTarget);
    }
    let used: BTreeSet<usize> = model.used_features();
    let movable: Vec<usize> = used.into_iter().filter(|&f| !cfg.frozen[f]).collect();
    if movable.is_empty() {
        return Ok((current, None));
    }
    let thresholds = movable.iter().map(|&f| model.thresholds(f)).collect();
    Ok((current, Some(Search { model, o, target, cfg, previous, movable, thresholds })))
}

fn search_one<R: Rng>(
    model: &TreeModel,
    o: &[f64],
    target: ActionClass,
    cfg: &CfConfig,
    previous: &[Vec<f64>],
    rng: &mut R,
) -> Result<CfExample, CfError> {
    let (current, search) = prepare(model, o, target, cfg, previous)?;
    let search = search.ok_or(CfError::NotFound)?;
    let (best, lam) = search.run(rng).ok_or(CfError::NotFound)?;
    Ok(CfExample {
        original: o.to_vec(),
        original_class: current,
        distance: best.dist,
        cf: best.x,
        target_class: target,
        lambda_final: lam,
        valid: true,
    })
}

/// Finds one counterfactual of `o` that the model assigns to `target`.
pub fn generate_cf<R: Rng>(
    model: &TreeModel,
    o: &[f64],
    target: ActionClass,
    cfg: &CfConfig,
    rng: &mut R,
) -> Result<CfExample, CfError> {
    search_one(model, o, target, cfg, &[], rng)
}

/// Finds up to `cfg.m_diverse` counterfactuals, each penalized for lying
/// close to the ones already found. Stops at the first slot whose search
/// fails.
pub fn generate_diverse_cfs<R: Rng>(
    model: &TreeModel,
    o: &[f64],
    target: ActionClass,
    cfg: &CfConfig,
    rng: &mut R,
) -> Result<Vec<CfExample>, CfError> {
    let mut out: Vec<CfExample> = Vec::new();
    let mut previous: Vec<Vec<f64>> = Vec::new();
    for _ in 0..cfg.m_diverse {
        match search_one(model, o, target, cfg, &previous, rng) {
            Ok(ex) => {
                previous.push(ex.cf.clone());
                out.push(ex);
            }
            Err(CfError::NotFound) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::trees::Tree;

    fn stop_if_below(feature: usize, n: usize, thr: f64) -> TreeModel {
        TreeModel::from_trees(
            n,
            [0.0; 3],
            vec![[Tree::leaf(0.0), Tree::leaf(-3.0), Tree::split(feature, thr, Tree::leaf(3.0), Tree::leaf(-3.0))]],
        )
    }

    fn config(n: usize) -> CfConfig {
        CfConfig::new(&CfSettings::default(), vec![1.0; n], vec![(0.0, 50.0); n])
    }

    #[test]
    fn loss_terms() {
        let m = stop_if_below(0, 2, 10.0);
        let cfg = config(2);
        let o = [14.0, 1.0];
        let p = m.predict_proba(&o).unwrap()[ActionClass::Stop.index()];
        let l = cf_loss(&m, &o, &o, ActionClass::Stop, 3.0, &cfg).unwrap();
        assert!((l - 3.0 * (p - 1.0).powi(2)).abs() < 1e-15);
        let certain = TreeModel::from_trees(1, [0.0, 0.0, 800.0], vec![]);
        assert_eq!(cf_loss(&certain, &[1.0], &[1.0], ActionClass::Stop, 5.0, &config(1)).unwrap(), 0.0);
    }

    #[test]
    fn loss_grid_minimizer_matches_search() {
        let m = stop_if_below(0, 1, 10.0);
        let cfg = config(1);
        let o = [14.0];
        let lam = 50.0;
        let grid: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.01).collect();
        let loss = |v: f64| cf_loss(&m, &[v], &o, ActionClass::Stop, lam, &cfg).unwrap();
        let (arg, best) = grid.iter().map(|&v| (v, loss(v))).fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        // The grid argmin is the first grid point past the threshold.
        assert!((arg - 9.99).abs() < 1e-9);
        let ex = generate_cf(&m, &o, ActionClass::Stop, &cfg, &mut rng::stream(1, &[])).unwrap();
        assert!(loss(ex.cf[0]) <= best + 1e-6);
    }

    #[test]
    fn single_threshold_counterfactual() {
        let m = stop_if_below(1, 3, 10.0);
        let cfg = config(3);
        let o = [5.0, 14.0, 2.0];
        let ex = generate_cf(&m, &o, ActionClass::Stop, &cfg, &mut rng::stream(3, &[])).unwrap();
        assert!(ex.cf[1] < 10.0 && ex.cf[1] >= 10.0 - 0.01, "{:?}", ex.cf);
        assert_eq!(ex.cf[0], 5.0);
        assert_eq!(ex.cf[2], 2.0);
        assert!((ex.distance - 4.0).abs() <= 0.05 * 4.0);
        assert!(ex.valid);
        assert_eq!(ex.original_class, ActionClass::Go);
        // Halving the gap lands back on the original class.
        let mid: Vec<f64> = o.iter().zip(&ex.cf).map(|(a, b)| 0.5 * (a + b)).collect();
        assert_eq!(m.predict_class(&mid).unwrap(), ActionClass::Go);
    }

    #[test]
    fn current_class_target_is_rejected() {
        let m = stop_if_below(0, 1, 10.0);
        let r = generate_cf(&m, &[14.0], ActionClass::Go, &config(1), &mut rng::stream(0, &[]));
        assert_eq!(r, Err(CfError::InvalidTarget));
    }

    #[test]
    fn frozen_only_splits_are_not_found() {
        let m = stop_if_below(0, 2, 10.0);
        let cfg = config(2).with_frozen(vec![true, false]);
        let r = generate_cf(&m, &[14.0, 1.0], ActionClass::Stop, &cfg, &mut rng::stream(0, &[]));
        assert_eq!(r, Err(CfError::NotFound));
    }

    #[test]
    fn unreachable_target_is_not_found() {
        let m = stop_if_below(0, 1, 10.0);
        let r = generate_cf(&m, &[14.0], ActionClass::Slow, &config(1), &mut rng::stream(0, &[]));
        assert_eq!(r, Err(CfError::NotFound));
    }

    #[test]
    fn single_diverse_equals_plain() {
        let m = stop_if_below(1, 3, 10.0);
        let cfg = CfConfig { m_diverse: 1, ..config(3) };
        let o = [5.0, 14.0, 2.0];
        let a = generate_cf(&m, &o, ActionClass::Stop, &cfg, &mut rng::stream(9, &[])).unwrap();
        let b = generate_diverse_cfs(&m, &o, ActionClass::Stop, &cfg, &mut rng::stream(9, &[])).unwrap();
        assert_eq!(b, vec![a]);
    }

    #[test]
    fn diverse_results_are_valid_and_spread() {
        let m = stop_if_below(1, 3, 10.0);
        let cfg = config(3);
        let o = [5.0, 14.0, 2.0];
        let out = generate_diverse_cfs(&m, &o, ActionClass::Stop, &cfg, &mut rng::stream(4, &[])).unwrap();
        assert!(!out.is_empty());
        for (i, a) in out.iter().enumerate() {
            assert_eq!(m.predict_class(&a.cf).unwrap(), ActionClass::Stop);
            for b in &out[..i] {
                assert!(cfg.distance(&a.cf, &b.cf) >= cfg.min_diversity);
            }
        }
    }

    #[test]
    fn integer_features_stay_integral() {
        let m = stop_if_below(0, 1, 2.5);
        let cfg = config(1).with_integer(vec![true]);
        let ex = generate_cf(&m, &[3.0], ActionClass::Stop, &cfg, &mut rng::stream(2, &[])).unwrap();
        assert_eq!(ex.cf, vec![2.0]);
    }

    #[test]
    fn search_is_seed_deterministic() {
        let m = stop_if_below(1, 3, 10.0);
        let cfg = config(3);
        let o = [5.0, 14.0, 2.0];
        let a = generate_diverse_cfs(&m, &o, ActionClass::Stop, &cfg, &mut rng::stream(5, &[])).unwrap();
        let b = generate_diverse_cfs(&m, &o, ActionClass::Stop, &cfg, &mut rng::stream(5, &[])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mad_falls_back_on_constant_columns() {
        let rows = vec![vec![1.0, 0.0, 2.0], vec![2.0, 0.0, 2.0], vec![4.0, 0.0, 2.0], vec![9.0, 0.0, 6.0]];
        let s = mad_scales(&rows, 1e-6);
        assert_eq!(s[0], 1.5);
        assert_eq!(s[1], 1.0);
        assert_eq!(s[2], 1.5);
        assert_eq!(observed_ranges(&rows)[0], (1.0, 9.0));
    }

    #[test]
    fn record_lines_round_trip() {
        let m = stop_if_below(0, 1, 10.0);
        let ex = generate_cf(&m, &[14.0], ActionClass::Stop, &config(1), &mut rng::stream(0, &[])).unwrap();
        let r = CfRecord { example: ex, seed: 7, oracle: Some(true) };
        assert_eq!(CfRecord::from_line(&r.to_line()).unwrap(), r);
        assert!(CfRecord::from_line("{\"seed\":1}").is_err());
    }
}
