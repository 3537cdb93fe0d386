//! CoS: one bandit problem per cell of a uniform grid.

use std::collections::HashMap;

use crate::arms::ArmSet;
use crate::context_space::{Context, UniformPartition};
use crate::error::Result;
use crate::policy::{
    apply_outcome, argmax_first, branch_select, underexplored, Branch, ControlParams, PeerLink,
    Phase, Reason, RegionQuery, RegionStats, Selection,
};

#[derive(Debug, Clone)]
pub struct CosPolicy {
    partition: UniformPartition,
    arms: ArmSet,
    params: ControlParams,
    cells: HashMap<usize, RegionStats>,
    /// Labeled arrivals per cell, own stream and served requests alike.
    arrivals: HashMap<usize, u64>,
}

impl CosPolicy {
    pub fn new(partition: UniformPartition, arms: ArmSet, params: ControlParams) -> Self {
        CosPolicy {
            partition,
            arms,
            params,
            cells: HashMap::new(),
            arrivals: HashMap::new(),
        }
    }

    pub fn partition(&self) -> &UniformPartition {
        &self.partition
    }

    pub fn arms(&self) -> &ArmSet {
        &self.arms
    }

    pub fn params(&self) -> &ControlParams {
        &self.params
    }

    pub fn cell_of(&self, x: &Context) -> Result<usize> {
        self.partition.flat_index(x)
    }

    pub fn stats(&self, cell: usize) -> Option<&RegionStats> {
        self.cells.get(&cell)
    }

    pub fn stats_mut(&mut self, cell: usize) -> &mut RegionStats {
        let (n, peers) = (self.arms.len(), self.arms.peers.len());
        self.cells
            .entry(cell)
            .or_insert_with(|| RegionStats::new(n, peers))
    }

    pub fn underexplored_set(&self, cell: usize, t: u64) -> Vec<(usize, Reason)> {
        let d = self.params.control_values(t);
        match self.cells.get(&cell) {
            Some(stats) => underexplored(stats, &self.arms, d),
            None => underexplored(
                &RegionStats::new(self.arms.len(), self.arms.peers.len()),
                &self.arms,
                d,
            ),
        }
    }

    pub fn select(&mut self, x: &Context, t: u64, link: &mut dyn PeerLink) -> Result<Selection> {
        let cell = self.cell_of(x)?;
        self.select_in_cell(cell, t, link, &RegionQuery::Cell(cell))
    }

    /// Selection with an explicit peer query (CoS-MC asks per-axis cells).
    pub fn select_in_cell(
        &mut self,
        cell: usize,
        t: u64,
        link: &mut dyn PeerLink,
        query: &RegionQuery<'_>,
    ) -> Result<Selection> {
        match self.branch_in_cell(cell, t, link, query)? {
            Branch::Select(s) => Ok(s),
            Branch::Exploit => Ok(Selection::new(self.exploit(cell), Phase::Exploitation)),
        }
    }

    pub fn branch_in_cell(
        &mut self,
        cell: usize,
        t: u64,
        link: &mut dyn PeerLink,
        query: &RegionQuery<'_>,
    ) -> Result<Branch> {
        let d = self.params.control_values(t);
        let arms = self.arms.clone();
        let stats = self.stats_mut(cell);
        branch_select(stats, &arms, d, link, query)
    }

    /// Highest sample mean in the cell; ties go to the lowest slot.
    pub fn exploit(&self, cell: usize) -> usize {
        match self.cells.get(&cell) {
            Some(stats) => argmax_first(stats.arms.iter().map(|a| a.mean())).unwrap_or(0),
            None => 0,
        }
    }

    pub fn record_outcome(&mut self, cell: usize, selection: Selection, reward: f64) -> Result<()> {
        let arms = self.arms.clone();
        apply_outcome(self.stats_mut(cell), &arms, selection, reward)
    }

    /// Own-function choice when serving a peer's request: explore an own
    /// function with `N <= D1`, else exploit among own functions.
    pub fn serve_select(&self, cell: usize, t: u64) -> Selection {
        let (d1, _, _) = self.params.control_values(t);
        let own = self.arms.own;
        match self.cells.get(&cell) {
            None => Selection::new(0, Phase::Exploration),
            Some(stats) => match (0..own).find(|&k| stats.arms[k].n as f64 <= d1) {
                Some(k) => Selection::new(k, Phase::Exploration),
                None => Selection::new(
                    argmax_first(stats.arms[..own].iter().map(|a| a.mean())).unwrap_or(0),
                    Phase::Exploitation,
                ),
            },
        }
    }

    pub fn record_arrival(&mut self, cell: usize) {
        *self.arrivals.entry(cell).or_insert(0) += 1;
    }

    pub fn arrival_count(&self, cell: usize) -> u64 {
        self.arrivals.get(&cell).copied().unwrap_or(0)
    }

    /// Means of the own functions (zero if never sampled).
    pub fn own_means(&self, cell: usize) -> Vec<f64> {
        match self.cells.get(&cell) {
            Some(stats) => stats.arms[..self.arms.own].iter().map(|a| a.mean()).collect(),
            None => vec![0.0; self.arms.own],
        }
    }

    /// Best sampled own-function mean, `None` if the cell has no samples.
    pub fn best_own_mean(&self, cell: usize) -> Option<f64> {
        let stats = self.cells.get(&cell)?;
        stats.arms[..self.arms.own]
            .iter()
            .filter(|a| a.n > 0)
            .map(|a| a.mean())
            .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |b| b.max(m))))
    }
}
