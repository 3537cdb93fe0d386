//! Learners' arms: their own classification functions and peer learners.
//!
//! Two backends produce predictions. [`SyntheticArm`] has a known accuracy
//! surface so the oracle can compute regret exactly; [`BaseClassifier`]
//! is trained on real feature vectors.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of a learner's own functions or another learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArmId {
    Own(usize),
    Peer(usize),
}

impl fmt::Display for ArmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArmId::Own(k) => write!(f, "own:{k}"),
            ArmId::Peer(j) => write!(f, "peer:{j}"),
        }
    }
}

/// The arm set of one learner: own functions first, then reachable peers in
/// ascending learner order. Policies address arms by their position here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmSet {
    pub owner: usize,
    pub own: usize,
    pub peers: Vec<usize>,
}

impl ArmSet {
    pub fn new(owner: usize, own: usize, peers: Vec<usize>) -> Result<Self> {
        if own == 0 {
            return Err(Error::config(
                format!("learners[{owner}].functions"),
                "a learner needs at least one classification function",
            ));
        }
        if peers.contains(&owner) {
            return Err(Error::Invariant(format!(
                "learner {owner} lists itself as a peer"
            )));
        }
        Ok(ArmSet { owner, own, peers })
    }

    pub fn len(&self) -> usize {
        self.own + self.peers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn id(&self, slot: usize) -> ArmId {
        if slot < self.own {
            ArmId::Own(slot)
        } else {
            ArmId::Peer(self.peers[slot - self.own])
        }
    }

    pub fn slot(&self, arm: ArmId) -> Option<usize> {
        match arm {
            ArmId::Own(k) if k < self.own => Some(k),
            ArmId::Own(_) => None,
            ArmId::Peer(j) => self.peers.iter().position(|&p| p == j).map(|i| self.own + i),
        }
    }

    pub fn is_peer(&self, slot: usize) -> bool {
        slot >= self.own
    }

    /// Index into per-peer arrays for a peer slot.
    pub fn peer_index(&self, slot: usize) -> usize {
        slot - self.own
    }
}

/// Per-learner costs `d^i_k`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    #[serde(default)]
    pub own: Vec<f64>,
    #[serde(default)]
    pub peers: BTreeMap<usize, f64>,
}

impl CostModel {
    pub fn validate(&self, learner: usize) -> Result<()> {
        for (k, &c) in self.own.iter().enumerate() {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::config(
                    format!("learners[{learner}].costs.own[{k}]"),
                    format!("cost {c} outside [0, 1]"),
                ));
            }
        }
        for (j, &c) in &self.peers {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::config(
                    format!("learners[{learner}].costs.peers.{j}"),
                    format!("cost {c} outside [0, 1]"),
                ));
            }
        }
        Ok(())
    }

    /// Cost vector aligned with an arm set's slots.
    pub fn aligned(&self, arms: &ArmSet) -> Vec<f64> {
        (0..arms.len())
            .map(|slot| match arms.id(slot) {
                ArmId::Own(k) => self.own.get(k).copied().unwrap_or(0.0),
                ArmId::Peer(j) => self.peers.get(&j).copied().unwrap_or(0.0),
            })
            .collect()
    }
}

/// Classification function with a closed-form accuracy surface
/// `clamp(0.5 + a sin(2 pi (w.x + phi + v s)), lo, hi)`, where `s = t/T` is
/// normalized time and `v` the drift velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticArm {
    pub amplitude: f64,
    pub frequency: Vec<f64>,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub drift: f64,
    #[serde(default = "default_clip")]
    pub clip: (f64, f64),
}

fn default_clip() -> (f64, f64) {
    (0.05, 0.95)
}

impl SyntheticArm {
    pub fn new(amplitude: f64, frequency: Vec<f64>, phase: f64) -> Self {
        SyntheticArm {
            amplitude,
            frequency,
            phase,
            drift: 0.0,
            clip: default_clip(),
        }
    }

    pub fn with_drift(mut self, drift: f64) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_clip(mut self, lo: f64, hi: f64) -> Self {
        self.clip = (lo, hi);
        self
    }

    pub fn dim(&self) -> usize {
        self.frequency.len()
    }

    /// Accuracy at time zero.
    pub fn accuracy(&self, x: &[f64]) -> Result<f64> {
        self.accuracy_at(x, 0.0)
    }

    pub fn accuracy_at(&self, x: &[f64], s: f64) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let dot: f64 = self.frequency.iter().zip(x).map(|(w, v)| w * v).sum();
        let raw = 0.5 + self.amplitude * (2.0 * PI * (dot + self.phase + self.drift * s)).sin();
        Ok(raw.clamp(self.clip.0, self.clip.1))
    }

    /// Lipschitz constant in the context (exponent 1): `2 pi a |w|`.
    pub fn lipschitz(&self) -> f64 {
        let norm = self.frequency.iter().map(|w| w * w).sum::<f64>().sqrt();
        2.0 * PI * self.amplitude.abs() * norm
    }

    /// Lipschitz constant in normalized time: `2 pi a |v|`.
    pub fn drift_lipschitz(&self) -> f64 {
        2.0 * PI * self.amplitude.abs() * self.drift.abs()
    }
}

/// Returns `label` with probability `accuracy`, its complement otherwise.
/// Consumes exactly one draw from `rng`.
pub fn synthetic_predict<R: Rng + ?Sized>(accuracy: f64, label: u8, rng: &mut R) -> u8 {
    let u: f64 = rng.random();
    if u < accuracy {
        label
    } else {
        1 - label
    }
}

const VARIANCE_FLOOR: f64 = 1e-9;

/// Gaussian naive Bayes with running (Welford) moments per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub counts: [u64; 2],
    pub means: [Vec<f64>; 2],
    pub m2: [Vec<f64>; 2],
}

impl GaussianNb {
    pub fn new(dim: usize) -> Self {
        GaussianNb {
            counts: [0, 0],
            means: [vec![0.0; dim], vec![0.0; dim]],
            m2: [vec![0.0; dim], vec![0.0; dim]],
        }
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Two-pass batch estimate of the same moments `update` maintains.
    pub fn fit(rows: &[(Vec<f64>, u8)], dim: usize) -> Self {
        let mut nb = GaussianNb::new(dim);
        for class in 0..2 {
            let members: Vec<&Vec<f64>> = rows
                .iter()
                .filter(|(_, y)| *y as usize == class)
                .map(|(x, _)| x)
                .collect();
            let n = members.len();
            nb.counts[class] = n as u64;
            if n == 0 {
                continue;
            }
            for f in 0..dim {
                let mean = members.iter().map(|x| x[f]).sum::<f64>() / n as f64;
                nb.means[class][f] = mean;
                nb.m2[class][f] = members.iter().map(|x| (x[f] - mean).powi(2)).sum();
            }
        }
        nb
    }

    pub fn update(&mut self, x: &[f64], label: u8) {
        let c = label as usize;
        self.counts[c] += 1;
        let n = self.counts[c] as f64;
        for (f, &v) in x.iter().enumerate() {
            let delta = v - self.means[c][f];
            self.means[c][f] += delta / n;
            self.m2[c][f] += delta * (v - self.means[c][f]);
        }
    }

    pub fn variance(&self, class: usize, feature: usize) -> f64 {
        let n = self.counts[class];
        if n == 0 {
            return VARIANCE_FLOOR;
        }
        (self.m2[class][feature] / n as f64).max(VARIANCE_FLOOR)
    }

    fn log_joint(&self, class: usize, x: &[f64]) -> f64 {
        let total = (self.counts[0] + self.counts[1]) as f64;
        let prior = (self.counts[class] as f64 / total).ln();
        prior
            + x.iter()
                .enumerate()
                .map(|(f, &v)| {
                    let var = self.variance(class, f);
                    -0.5 * (2.0 * PI * var).ln() - (v - self.means[class][f]).powi(2) / (2.0 * var)
                })
                .sum::<f64>()
    }

    /// Posterior probability of class 1.
    pub fn score(&self, x: &[f64]) -> f64 {
        match (self.counts[0], self.counts[1]) {
            (0, 0) => 0.5,
            (0, _) => 1.0,
            (_, 0) => 0.0,
            _ => {
                let diff = self.log_joint(1, x) - self.log_joint(0, x);
                sigmoid(diff)
            }
        }
    }
}

/// Logistic regression trained by one SGD step per labeled example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineLogistic {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub rate: f64,
}

impl OnlineLogistic {
    pub fn new(dim: usize, rate: f64) -> Self {
        OnlineLogistic {
            weights: vec![0.0; dim],
            bias: 0.0,
            rate,
        }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let z: f64 = self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias;
        sigmoid(z)
    }

    /// Ascent on the log-likelihood: `w += rate * (y - sigma(w.x)) * x`.
    pub fn update(&mut self, x: &[f64], label: u8) {
        let residual = label as f64 - self.score(x);
        let step = self.rate * residual;
        for (w, v) in self.weights.iter_mut().zip(x) {
            *w += step * v;
        }
        self.bias += step;
    }
}

/// Single-feature threshold rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionStump {
    pub feature: usize,
    pub threshold: f64,
    /// Predict 1 when `x[feature] > threshold` if true, when `<=` otherwise.
    pub above_is_one: bool,
}

impl DecisionStump {
    /// Exhaustive search for the stump with fewest training errors.
    pub fn fit(rows: &[(Vec<f64>, u8)], dim: usize) -> Self {
        let mut best = DecisionStump {
            feature: 0,
            threshold: f64::INFINITY,
            above_is_one: false,
        };
        let positives = rows.iter().filter(|(_, y)| *y == 1).count();
        // error of "everything is 1" / "everything is 0"
        let mut best_err = positives.min(rows.len() - positives);
        if positives < rows.len() - positives {
            best.above_is_one = true; // x > inf never true: predicts 0
        }
        for f in 0..dim {
            let mut sorted: Vec<(f64, u8)> = rows.iter().map(|(x, y)| (x[f], *y)).collect();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            // ones_below: labels == 1 among values <= threshold
            let mut ones_below = 0usize;
            let mut i = 0;
            while i < sorted.len() {
                let v = sorted[i].0;
                while i < sorted.len() && sorted[i].0 == v {
                    ones_below += sorted[i].1 as usize;
                    i += 1;
                }
                let below = i;
                let zeros_below = below - ones_below;
                let ones_above = positives - ones_below;
                let zeros_above = (rows.len() - below) - ones_above;
                // above -> 1: errors are ones below + zeros above
                let err_up = ones_below + zeros_above;
                let err_down = zeros_below + ones_above;
                if err_up < best_err {
                    best_err = err_up;
                    best = DecisionStump { feature: f, threshold: v, above_is_one: true };
                }
                if err_down < best_err {
                    best_err = err_down;
                    best = DecisionStump { feature: f, threshold: v, above_is_one: false };
                }
            }
        }
        best
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        let above = x[self.feature] > self.threshold;
        u8::from(above == self.above_is_one)
    }
}

/// Classification functions trained on feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseClassifier {
    ConstantZero,
    ConstantOne,
    RandomCoin,
    GaussianNaiveBayes(GaussianNb),
    OnlineLogistic(OnlineLogistic),
    DecisionStump(DecisionStump),
}

impl BaseClassifier {
    fn expected_dim(&self) -> Option<usize> {
        match self {
            BaseClassifier::GaussianNaiveBayes(nb) => Some(nb.dim()),
            BaseClassifier::OnlineLogistic(lr) => Some(lr.weights.len()),
            _ => None,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        match self.expected_dim() {
            Some(d) if d != x.len() => Err(Error::DimensionMismatch {
                expected: d,
                actual: x.len(),
            }),
            _ => match self {
                BaseClassifier::DecisionStump(s) if s.feature >= x.len() => {
                    Err(Error::DimensionMismatch {
                        expected: s.feature + 1,
                        actual: x.len(),
                    })
                }
                _ => Ok(()),
            },
        }
    }

    /// Predicted label; a score of exactly 0.5 predicts 1.
    pub fn predict<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<u8> {
        self.check_dim(x)?;
        Ok(match self {
            BaseClassifier::ConstantZero => 0,
            BaseClassifier::ConstantOne => 1,
            BaseClassifier::RandomCoin => u8::from(rng.random_bool(0.5)),
            BaseClassifier::GaussianNaiveBayes(nb) => u8::from(nb.score(x) >= 0.5),
            BaseClassifier::OnlineLogistic(lr) => u8::from(lr.score(x) >= 0.5),
            BaseClassifier::DecisionStump(s) => s.predict(x),
        })
    }

    pub fn update(&mut self, x: &[f64], label: u8) -> Result<()> {
        if label > 1 {
            return Err(Error::Invariant(format!("label {label} is not binary")));
        }
        self.check_dim(x)?;
        match self {
            BaseClassifier::GaussianNaiveBayes(nb) => nb.update(x, label),
            BaseClassifier::OnlineLogistic(lr) => lr.update(x, label),
            _ => {}
        }
        Ok(())
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self, BaseClassifier::RandomCoin)
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

/// Undirected weighted communication graph between learners.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearnerTopology {
    pub edges: Vec<(usize, usize, f64)>,
}

impl LearnerTopology {
    /// All-pairs lowest path cost (Floyd-Warshall). Unreachable pairs are
    /// `f64::INFINITY`; the diagonal is zero.
    pub fn path_costs(&self, learners: usize) -> Result<Vec<Vec<f64>>> {
        let mut dist = vec![vec![f64::INFINITY; learners]; learners];
        for (i, row) in dist.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for (e, &(i, j, w)) in self.edges.iter().enumerate() {
            if !(w >= 0.0) {
                return Err(Error::config(
                    format!("topology.edges[{e}]"),
                    format!("edge weight {w} must be nonnegative"),
                ));
            }
            if i >= learners || j >= learners {
                return Err(Error::config(
                    format!("topology.edges[{e}]"),
                    format!("endpoint out of range for {learners} learners"),
                ));
            }
            if w < dist[i][j] {
                dist[i][j] = w;
                dist[j][i] = w;
            }
        }
        for k in 0..learners {
            for i in 0..learners {
                for j in 0..learners {
                    let via = dist[i][k] + dist[k][j];
                    if via < dist[i][j] {
                        dist[i][j] = via;
                    }
                }
            }
        }
        Ok(dist)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn synthetic_accuracy_examples() {
        let arm = SyntheticArm::new(0.4, vec![1.0], 0.0);
        assert_abs_diff_eq!(arm.accuracy(&[0.0]).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(arm.accuracy(&[0.25]).unwrap(), 0.9, epsilon = 1e-12);
        let clipped = SyntheticArm::new(0.6, vec![1.0], 0.0);
        assert_eq!(clipped.accuracy(&[0.25]).unwrap(), 0.95);
        assert!(arm.accuracy(&[0.1, 0.2]).is_err());
    }

    #[test]
    fn synthetic_predict_extremes_and_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let always = SyntheticArm::new(0.4, vec![1.0], 0.0).with_clip(1.0, 1.0);
        let never = SyntheticArm::new(0.4, vec![1.0], 0.0).with_clip(0.0, 0.0);
        for _ in 0..1000 {
            let p = always.accuracy(&[0.3]).unwrap();
            assert_eq!(synthetic_predict(p, 1, &mut rng), 1);
            let q = never.accuracy(&[0.3]).unwrap();
            assert_eq!(synthetic_predict(q, 1, &mut rng), 0);
        }
        let n = 100_000;
        let hits = (0..n).filter(|_| synthetic_predict(0.9, 0, &mut rng) == 0).count();
        assert_abs_diff_eq!(hits as f64 / n as f64, 0.9, epsilon = 0.01);
    }

    #[test]
    fn classifier_predict_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(BaseClassifier::ConstantOne.predict(&[3.0, -1.0], &mut rng).unwrap(), 1);
        assert_eq!(BaseClassifier::ConstantZero.predict(&[3.0], &mut rng).unwrap(), 0);
        let lr = BaseClassifier::OnlineLogistic(OnlineLogistic::new(3, 0.1));
        assert_eq!(lr.predict(&[1.0, 2.0, 3.0], &mut rng).unwrap(), 1);
        assert!(lr.predict(&[1.0], &mut rng).is_err());

        let nb = GaussianNb::fit(&[(vec![0.0], 0), (vec![1.0], 1)], 1);
        // analytic check: equal priors, equal floored variance, so the
        // nearer mean wins
        let var = nb.variance(0, 0);
        assert_eq!(var, VARIANCE_FLOOR);
        let ll = |m: f64| -(0.9f64 - m).powi(2) / (2.0 * var);
        assert!(ll(1.0) > ll(0.0));
        let nb = BaseClassifier::GaussianNaiveBayes(nb);
        assert_eq!(nb.predict(&[0.9], &mut rng).unwrap(), 1);
        assert_eq!(nb.predict(&[0.2], &mut rng).unwrap(), 0);
    }

    #[test]
    fn classifier_update_examples() {
        let mut c = BaseClassifier::ConstantZero;
        c.update(&[1.0], 1).unwrap();
        assert_eq!(c, BaseClassifier::ConstantZero);

        let mut lr = OnlineLogistic::new(1, 0.0);
        lr.update(&[1.0], 1);
        assert_eq!(lr.weights, vec![0.0]);

        let mut lr = OnlineLogistic::new(1, 1.0);
        lr.update(&[1.0], 1);
        assert_abs_diff_eq!(lr.weights[0], 0.5, epsilon = 1e-15);

        assert!(BaseClassifier::RandomCoin.update(&[0.0], 2).is_err());
    }

    #[test]
    fn stump_finds_separating_threshold() {
        let rows: Vec<(Vec<f64>, u8)> = (0..20)
            .map(|i| (vec![(i % 3) as f64, i as f64], u8::from(i >= 12)))
            .collect();
        let stump = DecisionStump::fit(&rows, 2);
        assert_eq!(stump.feature, 1);
        assert!(rows.iter().all(|(x, y)| stump.predict(x) == *y));
    }

    #[test]
    fn path_cost_examples() {
        // i=0, j'=1, j=2
        let topo = LearnerTopology { edges: vec![(0, 1, 0.2), (1, 2, 0.3)] };
        let d = topo.path_costs(3).unwrap();
        assert_abs_diff_eq!(d[0][2], 0.5, epsilon = 1e-12);

        let topo = LearnerTopology { edges: vec![(0, 1, 0.2), (1, 2, 0.3), (0, 2, 0.4)] };
        assert_abs_diff_eq!(topo.path_costs(3).unwrap()[0][2], 0.4, epsilon = 1e-12);

        let topo = LearnerTopology { edges: vec![(0, 1, 0.3), (1, 2, 0.3), (2, 3, 0.3)] };
        let d = topo.path_costs(4).unwrap();
        assert_abs_diff_eq!(d[0][3], brute_force_path(&topo, 4, 0, 3), epsilon = 1e-12);
        assert_abs_diff_eq!(d[0][3], 0.9, epsilon = 1e-12);

        let topo = LearnerTopology { edges: vec![(0, 1, -0.1)] };
        assert!(topo.path_costs(2).is_err());

        let topo = LearnerTopology { edges: vec![(0, 1, 0.1)] };
        assert!(topo.path_costs(3).unwrap()[0][2].is_infinite());
    }

    /// Enumerates simple paths by DFS.
    fn brute_force_path(topo: &LearnerTopology, n: usize, from: usize, to: usize) -> f64 {
        fn dfs(
            topo: &LearnerTopology,
            at: usize,
            to: usize,
            seen: &mut Vec<bool>,
            cost: f64,
            best: &mut f64,
        ) {
            if at == to {
                *best = best.min(cost);
                return;
            }
            for &(a, b, w) in &topo.edges {
                for (u, v) in [(a, b), (b, a)] {
                    if u == at && !seen[v] {
                        seen[v] = true;
                        dfs(topo, v, to, seen, cost + w, best);
                        seen[v] = false;
                    }
                }
            }
        }
        let mut seen = vec![false; n];
        seen[from] = true;
        let mut best = f64::INFINITY;
        dfs(topo, from, to, &mut seen, 0.0, &mut best);
        best
    }

    #[test]
    fn arm_set_slots() {
        let arms = ArmSet::new(1, 2, vec![0, 2]).unwrap();
        assert_eq!(arms.id(0), ArmId::Own(0));
        assert_eq!(arms.id(3), ArmId::Peer(2));
        assert_eq!(arms.slot(ArmId::Peer(0)), Some(2));
        assert_eq!(arms.slot(ArmId::Own(5)), None);
        assert!(ArmSet::new(1, 2, vec![1]).is_err());
    }
}
