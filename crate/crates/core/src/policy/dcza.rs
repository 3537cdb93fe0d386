//! DCZA: per-learner adaptive tree with cubes created on peer request.

use std::collections::{BTreeSet, HashMap};

use crate::arms::ArmSet;
use crate::context_space::{AdaptiveTree, Context, CubeId};
use crate::error::{Error, Result};
use crate::policy::{
    apply_outcome, argmax_first, branch_select, check_reward, underexplored, ArmStats, Branch,
    ControlParams, PeerLink, Phase, Reason, RegionQuery, RegionStats, Selection,
};

/// Statistics of one active cube.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeStats {
    pub region: RegionStats,
    /// Per-child, per-arm samples recorded while this cube was active.
    pub children: Option<Vec<Vec<ArmStats>>>,
    /// Per-arm counts inherited at activation (excluded from child memory).
    pub seeded: Vec<u64>,
}

impl CubeStats {
    fn new(arms: usize, peers: usize, dim: usize, memory: bool) -> Self {
        CubeStats {
            region: RegionStats::new(arms, peers),
            children: memory.then(|| vec![vec![ArmStats::default(); arms]; 1 << dim]),
            seeded: vec![0; arms],
        }
    }
}

#[derive(Debug, Clone)]
pub struct DczaPolicy {
    arms: ArmSet,
    params: ControlParams,
    tree: AdaptiveTree,
    stats: HashMap<CubeId, CubeStats>,
    /// Labeled arrivals inside every cube ever activated, by own split or
    /// by a peer's request.
    tracked: HashMap<CubeId, u64>,
    tracked_levels: BTreeSet<u32>,
    child_memory: bool,
}

impl DczaPolicy {
    pub fn new(arms: ArmSet, params: ControlParams, tree: AdaptiveTree, child_memory: bool) -> Self {
        let root = CubeId::root(tree.dim());
        let mut stats = HashMap::new();
        stats.insert(
            root.clone(),
            CubeStats::new(arms.len(), arms.peers.len(), tree.dim(), child_memory),
        );
        let mut tracked = HashMap::new();
        tracked.insert(root, 0);
        DczaPolicy {
            arms,
            params,
            tree,
            stats,
            tracked,
            tracked_levels: BTreeSet::from([0]),
            child_memory,
        }
    }

    pub fn arms(&self) -> &ArmSet {
        &self.arms
    }

    pub fn params(&self) -> &ControlParams {
        &self.params
    }

    pub fn tree(&self) -> &AdaptiveTree {
        &self.tree
    }

    pub fn child_memory(&self) -> bool {
        self.child_memory
    }

    pub fn active_cube(&self, x: &Context) -> Result<CubeId> {
        x.check_dim(self.tree.dim())?;
        self.tree.find_active(x).ok_or(Error::NoActiveCube {
            active: self.tree.active_len(),
        })
    }

    pub fn stats(&self, cube: &CubeId) -> Option<&CubeStats> {
        self.stats.get(cube)
    }

    pub fn stats_mut(&mut self, cube: &CubeId) -> Result<&mut CubeStats> {
        self.stats
            .get_mut(cube)
            .ok_or_else(|| Error::MissingCube(cube.clone()))
    }

    pub fn underexplored_set(&self, cube: &CubeId, t: u64) -> Result<Vec<(usize, Reason)>> {
        let stats = self
            .stats
            .get(cube)
            .ok_or_else(|| Error::MissingCube(cube.clone()))?;
        Ok(underexplored(&stats.region, &self.arms, self.params.control_values(t)))
    }

    pub fn select(
        &mut self,
        x: &Context,
        t: u64,
        link: &mut dyn PeerLink,
    ) -> Result<(Selection, CubeId)> {
        let cube = self.active_cube(x)?;
        let d = self.params.control_values(t);
        let stats = self
            .stats
            .get_mut(&cube)
            .ok_or_else(|| Error::MissingCube(cube.clone()))?;
        let sel = match branch_select(&mut stats.region, &self.arms, d, link, &RegionQuery::Cube(&cube))? {
            Branch::Select(s) => s,
            Branch::Exploit => Selection::new(self.exploit(&cube)?, Phase::Exploitation),
        };
        Ok((sel, cube))
    }

    /// Arm maximizing [`DczaPolicy::exploit_mean`]; ties go to the lowest slot.
    pub fn exploit(&self, cube: &CubeId) -> Result<usize> {
        let values: Vec<f64> = (0..self.arms.len())
            .map(|k| self.exploit_mean(cube, k))
            .collect::<Result<_>>()?;
        Ok(argmax_first(values).unwrap_or(0))
    }

    /// Estimated reward of `arm` in `cube`. Without child memory this is the
    /// sample mean; with it, the unweighted average of the sampled children's
    /// means, falling back to the cube's own mean when no child has samples.
    /// Arms with no samples at all are `-inf`.
    pub fn exploit_mean(&self, cube: &CubeId, arm: usize) -> Result<f64> {
        let stats = self
            .stats
            .get(cube)
            .ok_or_else(|| Error::MissingCube(cube.clone()))?;
        if let Some(children) = &stats.children {
            let sampled: Vec<f64> = children
                .iter()
                .map(|c| c[arm])
                .filter(|s| s.n > 0)
                .map(|s| s.mean())
                .collect();
            if !sampled.is_empty() {
                return Ok(sampled.iter().sum::<f64>() / sampled.len() as f64);
            }
        }
        let own = stats.region.arms[arm];
        Ok(if own.n == 0 { f64::NEG_INFINITY } else { own.mean() })
    }

    /// Applies a labeled outcome. Returns `false` when the cube was split
    /// while the label was pending, in which case the record is dropped.
    pub fn record_outcome(
        &mut self,
        cube: &CubeId,
        selection: Selection,
        reward: f64,
        x: &Context,
    ) -> Result<bool> {
        check_reward(reward)?;
        let Some(stats) = self.stats.get_mut(cube) else {
            return Ok(false);
        };
        apply_outcome(&mut stats.region, &self.arms, selection, reward)?;
        if selection.phase != Phase::Training {
            if let Some(children) = stats.children.as_mut() {
                children[cube.child_slot(x)][selection.arm].record(reward);
            }
        }
        Ok(true)
    }

    /// Own-function choice when serving a peer: explore an own function with
    /// `N <= D1` in the active cube of `x`, else exploit among own functions.
    pub fn serve_select(&self, x: &Context, t: u64) -> Result<(Selection, CubeId)> {
        let cube = self.active_cube(x)?;
        let (d1, _, _) = self.params.control_values(t);
        let stats = self
            .stats
            .get(&cube)
            .ok_or_else(|| Error::MissingCube(cube.clone()))?;
        let own = self.arms.own;
        let sel = match (0..own).find(|&k| stats.region.arms[k].n as f64 <= d1) {
            Some(k) => Selection::new(k, Phase::Exploration),
            None => {
                let values: Vec<f64> = (0..own)
                    .map(|k| self.exploit_mean(&cube, k))
                    .collect::<Result<_>>()?;
                Selection::new(argmax_first(values).unwrap_or(0), Phase::Exploitation)
            }
        };
        Ok((sel, cube))
    }

    /// Counts one labeled arrival at `x` in every tracked cube containing it.
    pub fn record_labeled_arrival(&mut self, x: &Context) {
        for &level in &self.tracked_levels {
            if let Some(c) = self.tracked.get_mut(&CubeId::containing(level, x)) {
                *c += 1;
            }
        }
    }

    /// Answer to a peer's count request; an unknown cube is created with a
    /// zero count.
    pub fn peer_count(&mut self, cube: &CubeId) -> Result<u64> {
        if cube.dim() != self.tree.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.tree.dim(),
                actual: cube.dim(),
            });
        }
        if let Some(&c) = self.tracked.get(cube) {
            return Ok(c);
        }
        self.track(cube.clone());
        Ok(0)
    }

    pub fn is_tracked(&self, cube: &CubeId) -> bool {
        self.tracked.contains_key(cube)
    }

    pub fn tracked_count(&self, cube: &CubeId) -> Option<u64> {
        self.tracked.get(cube).copied()
    }

    fn track(&mut self, cube: CubeId) {
        self.tracked_levels.insert(cube.level);
        self.tracked.entry(cube).or_insert(0);
    }

    /// Best sampled own-function estimate in the active cube of `x`.
    pub fn best_own_mean(&self, x: &Context) -> Result<Option<f64>> {
        let cube = self.active_cube(x)?;
        let mut best: Option<f64> = None;
        for k in 0..self.arms.own {
            let v = self.exploit_mean(&cube, k)?;
            if v.is_finite() {
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        Ok(best)
    }

    /// Own-function estimates in the active cube of `x` (`-inf` if unsampled).
    pub fn own_means(&self, x: &Context) -> Result<Vec<f64>> {
        let cube = self.active_cube(x)?;
        (0..self.arms.own).map(|k| self.exploit_mean(&cube, k)).collect()
    }

    /// Registers the learner's own arrival at `x` and splits the containing
    /// cube when its count reaches the threshold. New cubes start with zero
    /// statistics, or with the parent's per-child records when child memory
    /// is enabled.
    pub fn after_slot_update(&mut self, x: &Context) -> Result<Vec<CubeId>> {
        let obs = self.tree.observe_and_maybe_split(x)?;
        if obs.new_cubes.is_empty() {
            return Ok(obs.new_cubes);
        }
        let parent = self
            .stats
            .remove(&obs.containing)
            .ok_or_else(|| Error::MissingCube(obs.containing.clone()))?;
        let (n, peers, dim) = (self.arms.len(), self.arms.peers.len(), self.tree.dim());
        for (slot, child) in obs.new_cubes.iter().enumerate() {
            let mut stats = CubeStats::new(n, peers, dim, self.child_memory);
            if let Some(records) = &parent.children {
                stats.region.arms.clone_from(&records[slot]);
                stats.seeded = records[slot].iter().map(|s| s.n).collect();
            }
            self.stats.insert(child.clone(), stats);
            self.track(child.clone());
        }
        Ok(obs.new_cubes)
    }

    /// Child-memory bookkeeping check: for every active cube and arm, the
    /// per-child counts add up to the samples recorded since activation.
    pub fn child_memory_consistent(&self) -> bool {
        self.stats.values().all(|s| match &s.children {
            None => true,
            Some(children) => (0..self.arms.len()).all(|k| {
                children.iter().map(|c| c[k].n).sum::<u64>() + s.seeded[k] == s.region.arms[k].n
            }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::NoPeers;

    struct CreatingPeer<'a>(&'a mut DczaPolicy);

    impl PeerLink for CreatingPeer<'_> {
        fn arrival_count(&mut self, _peer: usize, region: &RegionQuery<'_>) -> Result<u64> {
            match region {
                RegionQuery::Cube(c) => self.0.peer_count(c),
                _ => Err(Error::Invariant("unexpected query".into())),
            }
        }
    }

    fn policy(own: usize, peers: Vec<usize>, memory: bool) -> DczaPolicy {
        let owner = if peers.contains(&0) { 1 } else { 0 };
        DczaPolicy::new(
            ArmSet::new(owner, own, peers).unwrap(),
            ControlParams::new(0.5, 2).unwrap(),
            AdaptiveTree::new(1, 1.0, 2.0).unwrap(),
            memory,
        )
    }

    fn x(v: f64) -> Context {
        Context::scalar(v).unwrap()
    }

    #[test]
    fn fresh_state_explores_first_own_arm() {
        let mut p = policy(2, vec![1], false);
        let (sel, cube) = p.select(&x(0.4), 1, &mut NoPeers).unwrap();
        assert_eq!(sel, Selection::new(0, Phase::Exploration));
        assert_eq!(cube, CubeId::root(1));
    }

    #[test]
    fn absent_peer_cube_is_created_and_trained() {
        let mut caller = policy(1, vec![1], false);
        let mut peer = policy(1, vec![0], false);
        caller.after_slot_update(&x(0.7)).unwrap();
        let cube = caller.active_cube(&x(0.7)).unwrap();
        assert_eq!(cube.level, 1);
        caller.stats_mut(&cube).unwrap().region.arms[0].n = 100;
        assert!(!peer.is_tracked(&cube));
        let (sel, _) = caller
            .select(&x(0.7), 100, &mut CreatingPeer(&mut peer))
            .unwrap();
        assert_eq!(sel, Selection::new(1, Phase::Training));
        assert!(peer.is_tracked(&cube));
        assert_eq!(caller.stats(&cube).unwrap().region.training[0], 0);
        // the peer's own partition is untouched
        assert_eq!(peer.tree().max_active_level(), 0);
        peer.record_labeled_arrival(&x(0.7));
        assert_eq!(peer.tracked_count(&cube), Some(1));
        assert_eq!(peer.tracked_count(&CubeId::root(1)), Some(1));
    }

    #[test]
    fn saturated_cube_exploits() {
        let mut p = policy(2, vec![], false);
        let root = CubeId::root(1);
        {
            let s = p.stats_mut(&root).unwrap();
            s.region.arms[0] = ArmStats::from_mean(100, 0.1);
            s.region.arms[1] = ArmStats::from_mean(100, 0.7);
        }
        let (sel, _) = p.select(&x(0.2), 10, &mut NoPeers).unwrap();
        assert_eq!(sel, Selection::new(1, Phase::Exploitation));
    }

    #[test]
    fn split_without_memory_zeroes_children() {
        let mut p = policy(2, vec![], false);
        let root = CubeId::root(1);
        p.record_outcome(&root, Selection::new(0, Phase::Exploration), 0.5, &x(0.2))
            .unwrap();
        let new = p.after_slot_update(&x(0.2)).unwrap();
        assert_eq!(new.len(), 2);
        for c in &new {
            assert_eq!(p.stats(c).unwrap().region, RegionStats::new(2, 0));
        }
        assert!(p.stats(&root).is_none());
        // pending record for the retired cube is dropped
        assert!(!p
            .record_outcome(&root, Selection::new(0, Phase::Exploration), 0.5, &x(0.2))
            .unwrap());
    }

    #[test]
    fn split_with_memory_seeds_children() {
        let mut p = policy(2, vec![], true);
        let root = CubeId::root(1);
        for i in 0..12 {
            let r = if i % 5 < 3 { 1.0 } else { 0.0 };
            p.record_outcome(&root, Selection::new(1, Phase::Exploration), r, &x(0.1))
                .unwrap();
        }
        p.record_outcome(&root, Selection::new(1, Phase::Exploration), 0.0, &x(0.9))
            .unwrap();
        assert!(p.child_memory_consistent());
        let new = p.after_slot_update(&x(0.1)).unwrap();
        let first = p.stats(&new[0]).unwrap();
        assert_eq!(first.region.arms[1].n, 12);
        assert!((first.region.arms[1].mean() - 8.0 / 12.0).abs() < 1e-12);
        assert_eq!(p.stats(&new[1]).unwrap().region.arms[1].n, 1);
        assert!(p.child_memory_consistent());
    }

    #[test]
    fn exploit_mean_examples() {
        let root = CubeId::root(1);
        let mut off = policy(1, vec![], false);
        off.stats_mut(&root).unwrap().region.arms[0] = ArmStats::from_mean(5, 0.4);
        assert_eq!(off.exploit_mean(&root, 0).unwrap(), 0.4);

        let mut on = policy(1, vec![], true);
        {
            let s = on.stats_mut(&root).unwrap();
            let ch = s.children.as_mut().unwrap();
            ch[0][0] = ArmStats::from_mean(4, 0.2);
            ch[1][0] = ArmStats::from_mean(9, 0.6);
        }
        assert!((on.exploit_mean(&root, 0).unwrap() - 0.4).abs() < 1e-12);
        on.stats_mut(&root).unwrap().children.as_mut().unwrap()[0][0] = ArmStats::default();
        assert!((on.exploit_mean(&root, 0).unwrap() - 0.6).abs() < 1e-12);

        let fresh = policy(1, vec![], false);
        assert_eq!(fresh.exploit_mean(&root, 0).unwrap(), f64::NEG_INFINITY);
    }
}
