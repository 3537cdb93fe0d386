//! Delayed and missing labels, the ensemble layer, context-only replies,
//! unsupervised learners and reward shaping.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{argmax_first, check_reward};

/// Records waiting for their label, each with a delivery slot.
#[derive(Debug, Clone)]
pub struct DelayBuffer<T> {
    l_max: u64,
    pending: Vec<(u64, T)>,
}

impl<T> DelayBuffer<T> {
    pub fn new(l_max: u64) -> Self {
        DelayBuffer {
            l_max,
            pending: Vec::new(),
        }
    }

    pub fn l_max(&self) -> u64 {
        self.l_max
    }

    /// Uniform on `0..=L_max`; no draw is made when `L_max = 0`.
    pub fn draw_delay<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.l_max == 0 {
            0
        } else {
            rng.random_range(0..=self.l_max)
        }
    }

    pub fn enqueue(&mut self, slot: u64, delay: u64, item: T) -> Result<()> {
        if delay > self.l_max {
            return Err(Error::Invariant(format!(
                "delay {delay} exceeds L_max = {}",
                self.l_max
            )));
        }
        self.pending.push((slot + delay, item));
        Ok(())
    }

    /// Records due at or before `slot`, in enqueue order.
    pub fn deliver(&mut self, slot: u64) -> Vec<T> {
        let mut out = Vec::new();
        let mut keep = Vec::with_capacity(self.pending.len());
        for (due, item) in self.pending.drain(..) {
            if due <= slot {
                out.push(item);
            } else {
                keep.push((due, item));
            }
        }
        self.pending = keep;
        out
    }

    /// Everything still pending, regardless of due slot.
    pub fn flush(&mut self) -> Vec<T> {
        self.pending.drain(..).map(|(_, item)| item).collect()
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Latest due slot among pending records.
    pub fn latest_due(&self) -> Option<u64> {
        self.pending.iter().map(|(due, _)| *due).max()
    }
}

/// Reveals each label independently with probability `p_r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelProcess {
    p_r: f64,
}

impl LabelProcess {
    pub fn new(p_r: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_r) {
            return Err(Error::config("p_r", format!("must lie in [0, 1], got {p_r}")));
        }
        Ok(LabelProcess { p_r })
    }

    pub fn p_r(&self) -> f64 {
        self.p_r
    }

    pub fn reveal<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        rng.random_bool(self.p_r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EnsembleRule {
    /// `w <- max(0, w + (y - s) yhat / alpha_w)` with `s = sum w yhat`.
    Sgd { alpha_w: f64 },
    /// Wrong learners' weights are scaled by `beta`, then renormalized.
    Mult { beta: f64 },
}

impl EnsembleRule {
    pub fn sgd() -> Self {
        EnsembleRule::Sgd { alpha_w: 100.0 }
    }

    pub fn mult() -> Self {
        EnsembleRule::Mult { beta: 0.5 }
    }
}

/// Weighted-majority combination of the learners' predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    rule: EnsembleRule,
    learners: usize,
    per_cell: bool,
    weights: HashMap<usize, Vec<f64>>,
}

impl EnsembleState {
    pub fn new(rule: EnsembleRule, learners: usize, per_cell: bool) -> Result<Self> {
        if learners == 0 {
            return Err(Error::config("ensemble", "needs at least one learner"));
        }
        match rule {
            EnsembleRule::Sgd { alpha_w } if !(alpha_w > 0.0) => {
                return Err(Error::config("ensemble.alpha_w", "must be positive"))
            }
            EnsembleRule::Mult { beta } if !(beta > 0.0 && beta <= 1.0) => {
                return Err(Error::config("ensemble.beta", "must lie in (0, 1]"))
            }
            _ => {}
        }
        Ok(EnsembleState {
            rule,
            learners,
            per_cell,
            weights: HashMap::new(),
        })
    }

    fn key(&self, cell: usize) -> usize {
        if self.per_cell {
            cell
        } else {
            0
        }
    }

    /// Current weights for `cell` (uniform `1/M` until first updated).
    pub fn weights(&self, cell: usize) -> Vec<f64> {
        self.weights
            .get(&self.key(cell))
            .cloned()
            .unwrap_or_else(|| vec![1.0 / self.learners as f64; self.learners])
    }

    pub fn set_weights(&mut self, cell: usize, w: Vec<f64>) -> Result<()> {
        self.check_len(w.len())?;
        let key = self.key(cell);
        self.weights.insert(key, w);
        Ok(())
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.learners {
            return Err(Error::DimensionMismatch {
                expected: self.learners,
                actual: n,
            });
        }
        Ok(())
    }

    /// 1 iff `sum_i w_i yhat_i >= 1/2`.
    pub fn predict(&self, cell: usize, predictions: &[u8]) -> Result<u8> {
        self.check_len(predictions.len())?;
        Ok(u8::from(weighted_sum(&self.weights(cell), predictions) >= 0.5))
    }

    pub fn update(&mut self, cell: usize, predictions: &[u8], label: u8) -> Result<()> {
        self.check_len(predictions.len())?;
        let mut w = self.weights(cell);
        match self.rule {
            EnsembleRule::Sgd { alpha_w } => {
                let residual = label as f64 - weighted_sum(&w, predictions);
                for (wi, &p) in w.iter_mut().zip(predictions) {
                    *wi = (*wi + residual * p as f64 / alpha_w).max(0.0);
                }
            }
            EnsembleRule::Mult { beta } => {
                for (wi, &p) in w.iter_mut().zip(predictions) {
                    if p != label {
                        *wi *= beta;
                    }
                }
                let total: f64 = w.iter().sum();
                if total > 0.0 {
                    w.iter_mut().for_each(|wi| *wi /= total);
                }
            }
        }
        let key = self.key(cell);
        self.weights.insert(key, w);
        Ok(())
    }
}

fn weighted_sum(w: &[f64], predictions: &[u8]) -> f64 {
    w.iter().zip(predictions).map(|(wi, &p)| wi * p as f64).sum()
}

/// Reward `g(signal, cost)` from a correctness signal (indicator or expected
/// accuracy) and the arm's cost.
#[derive(Clone, Default)]
pub enum RewardHook {
    /// `signal - cost`.
    #[default]
    Indicator,
    /// `signal - cost_weight * cost`.
    Weighted { cost_weight: f64 },
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for RewardHook {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewardHook::Indicator => f.write_str("Indicator"),
            RewardHook::Weighted { cost_weight } => {
                write!(f, "Weighted {{ cost_weight: {cost_weight} }}")
            }
            RewardHook::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl RewardHook {
    pub fn apply(&self, signal: f64, cost: f64) -> Result<f64> {
        let r = match self {
            RewardHook::Indicator => signal - cost,
            RewardHook::Weighted { cost_weight } => signal - cost_weight * cost,
            RewardHook::Custom(g) => g(signal, cost),
        };
        check_reward(r)?;
        Ok(r)
    }
}

/// Counts of observed true labels in one region.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelHistogram {
    pub zeros: u64,
    pub ones: u64,
}

impl LabelHistogram {
    pub fn record(&mut self, label: u8) {
        if label == 0 {
            self.zeros += 1;
        } else {
            self.ones += 1;
        }
    }
}

/// Majority label seen so far; ties and empty histories give `default`.
pub fn context_only_reply(hist: &LabelHistogram, default: u8) -> u8 {
    match hist.ones.cmp(&hist.zeros) {
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Less => 0,
        std::cmp::Ordering::Equal => default,
    }
}

/// Arm chosen by a learner without labels: the best of its own sample means
/// and the peers' reported best-function means. Peers without data (`None`)
/// are skipped; ties go to the lowest slot. `peer_reports` is indexed by
/// peer position, so slot `own.len() + j` is peer `j`.
pub fn unsupervised_query(own_means: &[f64], peer_reports: &[Option<f64>]) -> usize {
    let values = own_means.iter().copied().chain(
        peer_reports
            .iter()
            .map(|r| r.unwrap_or(f64::NEG_INFINITY)),
    );
    let values: Vec<f64> = values
        .map(|v| if v.is_finite() { v } else { f64::NEG_INFINITY })
        .collect();
    if values.iter().all(|v| *v == f64::NEG_INFINITY) {
        return 0;
    }
    argmax_first(values).unwrap_or(0)
}
