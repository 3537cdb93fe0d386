//! Arm-selection policies and the bookkeeping they share.
//!
//! Every policy keeps, per region of the context space and per arm, a
//! selection counter and a running reward mean, plus a training counter per
//! peer. A slot is spent training a peer, exploring an under-sampled arm, or
//! exploiting the best empirical arm; the control functions
//! `D(t) = c * t^z * ln t` decide which.

pub mod cos;
pub mod cosmc;
pub mod dcza;
pub mod dispatch;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::context_space::CubeId;
use crate::error::{Error, Result};

pub use cos::CosPolicy;
pub use cosmc::CosMcPolicy;
pub use dcza::DczaPolicy;
pub use dispatch::{Policy, RegionKey};

/// Parameters of the three control functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    /// Exponents of `D1`, `D2`, `D3`.
    pub exponents: [f64; 3],
    /// Known upper bound on any peer's number of functions; scales `D2`.
    pub f_max: u32,
}

impl ControlParams {
    pub fn new(z: f64, f_max: u32) -> Result<Self> {
        if !(z > 0.0 && z < 1.0) {
            return Err(Error::config("z", format!("must lie in (0, 1), got {z}")));
        }
        if f_max == 0 {
            return Err(Error::config("F_max", "must be positive"));
        }
        Ok(ControlParams {
            exponents: [z; 3],
            f_max,
        })
    }

    /// Default exponent `2 alpha / (3 alpha + d)`.
    pub fn theorem_exponent(alpha: f64, dim: usize) -> f64 {
        2.0 * alpha / (3.0 * alpha + dim as f64)
    }

    pub fn with_exponents(mut self, exponents: [f64; 3]) -> Result<Self> {
        for (i, z) in exponents.iter().enumerate() {
            if !(*z > 0.0 && *z < 1.0) {
                return Err(Error::config(
                    format!("overrides.D{}_exp", i + 1),
                    format!("must lie in (0, 1), got {z}"),
                ));
            }
        }
        self.exponents = exponents;
        Ok(self)
    }

    /// `(D1, D2, D3)` at slot `t >= 1`.
    pub fn control_values(&self, t: u64) -> (f64, f64, f64) {
        let t = t.max(1) as f64;
        let ln = t.ln();
        let [z1, z2, z3] = self.exponents;
        (
            t.powf(z1) * ln,
            self.f_max as f64 * t.powf(z2) * ln,
            t.powf(z3) * ln,
        )
    }
}

/// `ceil(T^(1/(3 alpha + d)))`, exact for perfect powers.
pub fn slicing_parameter(horizon: u64, alpha: f64, dim: usize) -> u32 {
    root_ceil(horizon, 1.0 / (3.0 * alpha + dim as f64))
}

/// `ceil(T^e)` with a guard against `powf` overshooting an exact root.
pub fn root_ceil(horizon: u64, exponent: f64) -> u32 {
    if horizon <= 1 {
        return 1;
    }
    let r = (horizon as f64).powf(exponent);
    let k = r.round();
    if (r - k).abs() <= 1e-9 * k.max(1.0) {
        return k.max(1.0) as u32;
    }
    r.ceil().max(1.0) as u32
}

/// Zooming parameters `p = (3a + sqrt(9a^2 + 8ad)) / 2` and `z = 2a / p`.
pub fn dcza_parameters(alpha: f64, dim: usize) -> (f64, f64) {
    let d = dim as f64;
    let p = (3.0 * alpha + (9.0 * alpha * alpha + 8.0 * alpha * d).sqrt()) / 2.0;
    (p, 2.0 * alpha / p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Training,
    Exploration,
    Exploitation,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Training => "training",
            Phase::Exploration => "exploration",
            Phase::Exploitation => "exploitation",
        })
    }
}

/// Why an arm is in the under-explored set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reason {
    OwnExploration,
    Training,
    PeerExploration,
}

/// A policy decision for one data instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    /// Arm slot in the learner's [`crate::arms::ArmSet`].
    pub arm: usize,
    pub phase: Phase,
    /// Context axis the decision was made on (CoS-MC only).
    pub dim: Option<usize>,
}

impl Selection {
    pub fn new(arm: usize, phase: Phase) -> Self {
        Selection {
            arm,
            phase,
            dim: None,
        }
    }
}

/// Sample count and reward sum of one arm in one region.
///
/// The mean is kept as `sum / n`, which is the incremental update
/// `r <- (n r + x) / (n + 1)` without accumulated rounding drift.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub n: u64,
    pub sum: f64,
}

impl ArmStats {
    pub fn from_mean(n: u64, mean: f64) -> Self {
        ArmStats {
            n,
            sum: mean * n as f64,
        }
    }

    pub fn record(&mut self, reward: f64) {
        self.n += 1;
        self.sum += reward;
    }

    /// Zero when nothing has been recorded, as in the initialization.
    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }
}

/// Counters of one learner in one region.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub arms: Vec<ArmStats>,
    /// Training counters `N_1`, one per peer.
    pub training: Vec<u64>,
}

impl RegionStats {
    pub fn new(arms: usize, peers: usize) -> Self {
        RegionStats {
            arms: vec![ArmStats::default(); arms],
            training: vec![0; peers],
        }
    }
}

pub fn check_reward(reward: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&reward) {
        return Err(Error::Invariant(format!(
            "reward {reward} outside [-1, 1]"
        )));
    }
    Ok(())
}

/// First index of the maximum; `NaN` never wins.
pub fn argmax_first<I: IntoIterator<Item = f64>>(values: I) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            None if !v.is_nan() => best = Some((i, v)),
            Some((_, b)) if v > b => best = Some((i, v)),
            _ => {}
        }
    }
    best.map(|(i, _)| i)
}

/// A region of a peer's context space that a caller asks about.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionQuery<'a> {
    Cell(usize),
    Cube(&'a CubeId),
    DimCell { dim: usize, cell: usize },
}

/// Requests a learner can make to its peers during arm selection.
pub trait PeerLink {
    /// The peer's labeled-arrival count in `region`. A zooming peer that has
    /// never seen the cube creates it and answers zero.
    fn arrival_count(&mut self, peer: usize, region: &RegionQuery<'_>) -> Result<u64>;
}

/// Link for learners without peers; any request is a logic error.
pub struct NoPeers;

impl PeerLink for NoPeers {
    fn arrival_count(&mut self, peer: usize, _region: &RegionQuery<'_>) -> Result<u64> {
        Err(Error::Invariant(format!("no link to peer {peer}")))
    }
}

/// Outcome of the train/explore branches for one region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Select(Selection),
    /// The region is fully explored; the caller picks the best arm.
    Exploit,
}

/// Members of the under-explored set in branch-priority order: own arms
/// with `N <= D1`, then peers with `N_1 <= D2` (training), then peers with
/// `N <= D3` (exploration). A peer appears at most once.
pub fn underexplored(
    stats: &RegionStats,
    arms: &crate::arms::ArmSet,
    d: (f64, f64, f64),
) -> Vec<(usize, Reason)> {
    let (d1, d2, d3) = d;
    let mut out: Vec<(usize, Reason)> = (0..arms.own)
        .filter(|&k| stats.arms[k].n as f64 <= d1)
        .map(|k| (k, Reason::OwnExploration))
        .collect();
    let mut training = Vec::new();
    let mut exploring = Vec::new();
    for slot in arms.own..arms.len() {
        if stats.training[arms.peer_index(slot)] as f64 <= d2 {
            training.push((slot, Reason::Training));
        } else if stats.arms[slot].n as f64 <= d3 {
            exploring.push((slot, Reason::PeerExploration));
        }
    }
    out.extend(training);
    out.extend(exploring);
    out
}

/// The train/explore branches shared by every policy.
///
/// (a) explore the first own arm with `N <= D1`; (b) for each peer whose
/// training counter is `<= D2`, refresh it from the peer's arrival count
/// (`N_1 = N^peer - N`) and train it if it is still `<= D2`; (c) explore the
/// first peer with `N <= D3`; otherwise exploit.
pub fn branch_select(
    stats: &mut RegionStats,
    arms: &crate::arms::ArmSet,
    d: (f64, f64, f64),
    link: &mut dyn PeerLink,
    query: &RegionQuery<'_>,
) -> Result<Branch> {
    let (d1, d2, d3) = d;
    if let Some(k) = (0..arms.own).find(|&k| stats.arms[k].n as f64 <= d1) {
        return Ok(Branch::Select(Selection::new(k, Phase::Exploration)));
    }
    for slot in arms.own..arms.len() {
        let pi = arms.peer_index(slot);
        if stats.training[pi] as f64 > d2 {
            continue;
        }
        let count = link.arrival_count(arms.peers[pi], query)?;
        stats.training[pi] = count.saturating_sub(stats.arms[slot].n);
        if stats.training[pi] as f64 <= d2 {
            return Ok(Branch::Select(Selection::new(slot, Phase::Training)));
        }
    }
    if let Some(slot) = (arms.own..arms.len()).find(|&s| stats.arms[s].n as f64 <= d3) {
        return Ok(Branch::Select(Selection::new(slot, Phase::Exploration)));
    }
    Ok(Branch::Exploit)
}

/// Applies one labeled outcome: training bumps `N_1` only, the other phases
/// update the arm's count and mean.
pub fn apply_outcome(
    stats: &mut RegionStats,
    arms: &crate::arms::ArmSet,
    selection: Selection,
    reward: f64,
) -> Result<()> {
    check_reward(reward)?;
    match selection.phase {
        Phase::Training => {
            if !arms.is_peer(selection.arm) {
                return Err(Error::Invariant(format!(
                    "training phase on own arm {}",
                    selection.arm
                )));
            }
            stats.training[arms.peer_index(selection.arm)] += 1;
        }
        Phase::Exploration | Phase::Exploitation => stats.arms[selection.arm].record(reward),
    }
    Ok(())
}
