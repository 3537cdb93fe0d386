//! A learner's policy, whichever of the three variants is configured.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arms::ArmSet;
use crate::context_space::{Context, CubeId};
use crate::error::{Error, Result};
use crate::policy::{CosMcPolicy, CosPolicy, DczaPolicy, PeerLink, RegionQuery, Selection};

/// Where a decision was made: a grid cell, a tree cube, or one axis's cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionKey {
    Cell(usize),
    Cube(CubeId),
    DimCell { dim: usize, cell: usize },
    /// Cells of every axis (per-axis policies, used for label histograms).
    Axes(Vec<usize>),
}

impl fmt::Display for RegionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionKey::Cell(c) => write!(f, "cell:{c}"),
            RegionKey::Cube(c) => {
                write!(f, "cube:{}:", c.level)?;
                let idx: Vec<String> = c.index.iter().map(u64::to_string).collect();
                f.write_str(&idx.join("-"))
            }
            RegionKey::DimCell { dim, cell } => write!(f, "dim{dim}:{cell}"),
            RegionKey::Axes(cells) => {
                let idx: Vec<String> = cells.iter().map(usize::to_string).collect();
                write!(f, "axes:{}", idx.join("-"))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum Policy {
    Cos(CosPolicy),
    Dcza(DczaPolicy),
    CosMc(CosMcPolicy),
}

impl Policy {
    pub fn arms(&self) -> &ArmSet {
        match self {
            Policy::Cos(p) => p.arms(),
            Policy::Dcza(p) => p.arms(),
            Policy::CosMc(p) => p.arms(),
        }
    }

    pub fn select<R: Rng + ?Sized>(
        &mut self,
        x: &Context,
        t: u64,
        link: &mut dyn PeerLink,
        rng: &mut R,
    ) -> Result<(Selection, RegionKey)> {
        match self {
            Policy::Cos(p) => {
                let cell = p.cell_of(x)?;
                let sel = p.select_in_cell(cell, t, link, &RegionQuery::Cell(cell))?;
                Ok((sel, RegionKey::Cell(cell)))
            }
            Policy::Dcza(p) => {
                let (sel, cube) = p.select(x, t, link)?;
                Ok((sel, RegionKey::Cube(cube)))
            }
            Policy::CosMc(p) => {
                let sel = p.select(x, t, link, rng)?;
                let m = sel.dim.unwrap_or(0);
                let cell = p.cells(x)?[m];
                Ok((sel, RegionKey::DimCell { dim: m, cell }))
            }
        }
    }

    /// Applies a labeled outcome of a decision made in `key`. Returns
    /// `false` if the region no longer exists and the record was dropped.
    pub fn record_outcome(
        &mut self,
        key: &RegionKey,
        selection: Selection,
        reward: f64,
        x: &Context,
    ) -> Result<bool> {
        match (self, key) {
            (Policy::Cos(p), RegionKey::Cell(c)) => p.record_outcome(*c, selection, reward).map(|_| true),
            (Policy::Dcza(p), RegionKey::Cube(c)) => p.record_outcome(c, selection, reward, x),
            (Policy::CosMc(p), RegionKey::DimCell { .. } | RegionKey::Axes(_)) => {
                p.record_outcome(x, selection, reward).map(|_| true)
            }
            (_, key) => Err(Error::Invariant(format!("region {key} does not match the policy"))),
        }
    }

    /// Own-function choice when a peer asks for a prediction at `x`.
    pub fn serve_select(&self, x: &Context, t: u64) -> Result<(Selection, RegionKey)> {
        match self {
            Policy::Cos(p) => {
                let cell = p.cell_of(x)?;
                Ok((p.serve_select(cell, t), RegionKey::Cell(cell)))
            }
            Policy::Dcza(p) => {
                let (sel, cube) = p.serve_select(x, t)?;
                Ok((sel, RegionKey::Cube(cube)))
            }
            Policy::CosMc(p) => {
                let sel = p.serve_select(x, t)?;
                Ok((sel, RegionKey::Axes(p.cells(x)?)))
            }
        }
    }

    /// The region used for per-region label histograms.
    pub fn home_region(&self, x: &Context) -> Result<RegionKey> {
        match self {
            Policy::Cos(p) => Ok(RegionKey::Cell(p.cell_of(x)?)),
            Policy::Dcza(p) => Ok(RegionKey::Cube(p.active_cube(x)?)),
            Policy::CosMc(p) => Ok(RegionKey::Axes(p.cells(x)?)),
        }
    }

    pub fn record_labeled_arrival(&mut self, x: &Context) -> Result<()> {
        match self {
            Policy::Cos(p) => {
                let cell = p.cell_of(x)?;
                p.record_arrival(cell);
                Ok(())
            }
            Policy::Dcza(p) => {
                x.check_dim(p.tree().dim())?;
                p.record_labeled_arrival(x);
                Ok(())
            }
            Policy::CosMc(p) => p.record_labeled_arrival(x),
        }
    }

    /// Labeled-arrival count reported to a peer.
    pub fn answer(&mut self, query: &RegionQuery<'_>) -> Result<u64> {
        match (self, query) {
            (Policy::Cos(p), RegionQuery::Cell(c)) => Ok(p.arrival_count(*c)),
            (Policy::Dcza(p), RegionQuery::Cube(c)) => p.peer_count(c),
            (Policy::CosMc(p), RegionQuery::DimCell { dim, cell }) => p.arrival_count(*dim, *cell),
            (_, q) => Err(Error::Invariant(format!("query {q:?} does not match the peer's policy"))),
        }
    }

    pub fn best_own_mean(&self, x: &Context) -> Result<Option<f64>> {
        match self {
            Policy::Cos(p) => Ok(p.best_own_mean(p.cell_of(x)?)),
            Policy::Dcza(p) => p.best_own_mean(x),
            Policy::CosMc(p) => p.best_own_mean(x),
        }
    }

    pub fn own_means(&self, x: &Context) -> Result<Vec<f64>> {
        match self {
            Policy::Cos(p) => Ok(p.own_means(p.cell_of(x)?)),
            Policy::Dcza(p) => p.own_means(x),
            Policy::CosMc(p) => p.own_means(x),
        }
    }

    /// End-of-slot bookkeeping for an own arrival; returns cubes created by a
    /// split.
    pub fn after_slot_update(&mut self, x: &Context) -> Result<Vec<CubeId>> {
        match self {
            Policy::Dcza(p) => p.after_slot_update(x),
            _ => Ok(Vec::new()),
        }
    }

    pub fn max_active_level(&self) -> Option<u32> {
        match self {
            Policy::Dcza(p) => Some(p.tree().max_active_level()),
            _ => None,
        }
    }
}
