//! CoS over several candidate contexts, one uniform partition per axis.

use rand::Rng;

use crate::arms::ArmSet;
use crate::context_space::{Context, UniformPartition};
use crate::error::{Error, Result};
use crate::policy::{
    argmax_first, Branch, ControlParams, CosPolicy, PeerLink, Phase, Reason, RegionQuery,
    Selection,
};

#[derive(Debug, Clone)]
pub struct CosMcPolicy {
    dims: Vec<CosPolicy>,
    arms: ArmSet,
}

impl CosMcPolicy {
    pub fn new(slices: u32, dim: usize, arms: ArmSet, params: ControlParams) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("context_dim", "dimension must be at least 1"));
        }
        let partition = UniformPartition::new(slices, 1)?;
        Ok(CosMcPolicy {
            dims: (0..dim)
                .map(|_| CosPolicy::new(partition, arms.clone(), params))
                .collect(),
            arms,
        })
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn arms(&self) -> &ArmSet {
        &self.arms
    }

    pub fn axis(&self, m: usize) -> &CosPolicy {
        &self.dims[m]
    }

    pub fn axis_mut(&mut self, m: usize) -> &mut CosPolicy {
        &mut self.dims[m]
    }

    /// Cell of `x` along each axis.
    pub fn cells(&self, x: &Context) -> Result<Vec<usize>> {
        x.check_dim(self.dims.len())?;
        self.dims
            .iter()
            .enumerate()
            .map(|(m, p)| p.cell_of(&x.project(m)))
            .collect()
    }

    /// Union of the per-axis under-explored sets as `(axis, arm, reason)`.
    pub fn underexplored_union(&self, x: &Context, t: u64) -> Result<Vec<(usize, usize, Reason)>> {
        let cells = self.cells(x)?;
        Ok(cells
            .iter()
            .enumerate()
            .flat_map(|(m, &c)| {
                self.dims[m]
                    .underexplored_set(c, t)
                    .into_iter()
                    .map(move |(k, r)| (m, k, r))
            })
            .collect())
    }

    /// Picks an axis uniformly among those with a non-empty under-explored
    /// set and applies the train/explore branches there; an axis whose
    /// candidates all fall through is dropped and another is drawn. With no
    /// axis left, exploits the best `(axis, arm)` estimate. The generator is
    /// only consulted when more than one axis qualifies.
    pub fn select<R: Rng + ?Sized>(
        &mut self,
        x: &Context,
        t: u64,
        link: &mut dyn PeerLink,
        rng: &mut R,
    ) -> Result<Selection> {
        let cells = self.cells(x)?;
        let mut candidates: Vec<usize> = (0..self.dims.len())
            .filter(|&m| !self.dims[m].underexplored_set(cells[m], t).is_empty())
            .collect();
        while !candidates.is_empty() {
            let pick = if candidates.len() > 1 {
                rng.random_range(0..candidates.len())
            } else {
                0
            };
            let m = candidates.remove(pick);
            let query = RegionQuery::DimCell {
                dim: m,
                cell: cells[m],
            };
            if let Branch::Select(mut s) = self.dims[m].branch_in_cell(cells[m], t, link, &query)? {
                s.dim = Some(m);
                return Ok(s);
            }
        }
        let (m, k) = self.exploit_pair(&cells, self.arms.len());
        Ok(Selection {
            arm: k,
            phase: Phase::Exploitation,
            dim: Some(m),
        })
    }

    /// Argmax over axes and the first `arms` slots; ties go to the lowest
    /// axis, then the lowest arm.
    fn exploit_pair(&self, cells: &[usize], arms: usize) -> (usize, usize) {
        let values = cells.iter().enumerate().flat_map(|(m, &c)| {
            let means = match self.dims[m].stats(c) {
                Some(s) => s.arms[..arms].iter().map(|a| a.mean()).collect(),
                None => vec![0.0; arms],
            };
            means.into_iter()
        });
        let flat = argmax_first(values).unwrap_or(0);
        (flat / arms, flat % arms)
    }

    /// Updates every axis's cell of `x` for the chosen arm. A training
    /// outcome only bumps the training counter of the axis that asked for it.
    pub fn record_outcome(&mut self, x: &Context, selection: Selection, reward: f64) -> Result<()> {
        let cells = self.cells(x)?;
        if selection.phase == Phase::Training {
            let m = selection
                .dim
                .ok_or_else(|| Error::Invariant("training selection without an axis".into()))?;
            return self.dims[m].record_outcome(cells[m], selection, reward);
        }
        for (m, &c) in cells.iter().enumerate() {
            self.dims[m].record_outcome(c, selection, reward)?;
        }
        Ok(())
    }

    /// Own-function choice when serving a peer: the first own function with
    /// `N <= D1` on any axis, else the best own estimate over all axes.
    pub fn serve_select(&self, x: &Context, t: u64) -> Result<Selection> {
        let cells = self.cells(x)?;
        for (m, &c) in cells.iter().enumerate() {
            let s = self.dims[m].serve_select(c, t);
            if s.phase == Phase::Exploration {
                return Ok(Selection {
                    dim: Some(m),
                    ..s
                });
            }
        }
        let (m, k) = self.exploit_pair(&cells, self.arms.own);
        Ok(Selection {
            arm: k,
            phase: Phase::Exploitation,
            dim: Some(m),
        })
    }

    pub fn record_labeled_arrival(&mut self, x: &Context) -> Result<()> {
        let cells = self.cells(x)?;
        for (m, &c) in cells.iter().enumerate() {
            self.dims[m].record_arrival(c);
        }
        Ok(())
    }

    pub fn arrival_count(&self, dim: usize, cell: usize) -> Result<u64> {
        self.dims
            .get(dim)
            .map(|p| p.arrival_count(cell))
            .ok_or(Error::DimensionMismatch {
                expected: self.dims.len(),
                actual: dim + 1,
            })
    }

    pub fn best_own_mean(&self, x: &Context) -> Result<Option<f64>> {
        let cells = self.cells(x)?;
        Ok(cells
            .iter()
            .enumerate()
            .filter_map(|(m, &c)| self.dims[m].best_own_mean(c))
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |b| b.max(v)))))
    }

    /// Per own function, the best estimate over axes.
    pub fn own_means(&self, x: &Context) -> Result<Vec<f64>> {
        let cells = self.cells(x)?;
        let mut out = vec![f64::NEG_INFINITY; self.arms.own];
        for (m, &c) in cells.iter().enumerate() {
            for (k, v) in self.dims[m].own_means(c).into_iter().enumerate() {
                out[k] = out[k].max(v);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{ArmStats, NoPeers};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy(dim: usize, own: usize) -> CosMcPolicy {
        CosMcPolicy::new(
            4,
            dim,
            ArmSet::new(0, own, vec![]).unwrap(),
            ControlParams::new(0.4, 1).unwrap(),
        )
        .unwrap()
    }

    fn ctx(v: &[f64]) -> Context {
        Context::new(v.to_vec()).unwrap()
    }

    #[test]
    fn fresh_state_explores_on_some_axis() {
        let mut p = policy(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = p.select(&ctx(&[0.1, 0.9]), 1, &mut NoPeers, &mut rng).unwrap();
        assert_eq!(s.phase, Phase::Exploration);
        assert_eq!(s.arm, 0);
        assert!(s.dim.is_some());
        assert_eq!(p.underexplored_union(&ctx(&[0.1, 0.9]), 1).unwrap().len(), 4);
    }

    #[test]
    fn global_argmax_over_axes() {
        let mut p = policy(2, 2);
        let x = ctx(&[0.1, 0.9]);
        let cells = p.cells(&x).unwrap();
        let set = |p: &mut CosMcPolicy, m: usize, means: [f64; 2]| {
            let s = p.axis_mut(m).stats_mut(cells[m]);
            for (k, v) in means.iter().enumerate() {
                s.arms[k] = ArmStats::from_mean(1000, *v);
            }
        };
        set(&mut p, 0, [0.3, 0.4]);
        set(&mut p, 1, [0.6, 0.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = p.select(&x, 10, &mut NoPeers, &mut rng).unwrap();
        assert_eq!((s.arm, s.phase, s.dim), (0, Phase::Exploitation, Some(1)));

        set(&mut p, 0, [0.6, 0.1]);
        let s = p.select(&x, 10, &mut NoPeers, &mut rng).unwrap();
        assert_eq!(s.dim, Some(0));
    }

    #[test]
    fn outcome_updates_every_axis() {
        let mut p = policy(2, 2);
        let x = ctx(&[0.1, 0.9]);
        let sel = Selection {
            arm: 1,
            phase: Phase::Exploration,
            dim: Some(0),
        };
        p.record_outcome(&x, sel, 0.5).unwrap();
        let cells = p.cells(&x).unwrap();
        for (m, &c) in cells.iter().enumerate() {
            let s = p.axis(m).stats(c).unwrap();
            assert_eq!(s.arms[1].n, 1);
            assert_eq!(s.arms[1].mean(), 0.5);
        }
    }

    #[test]
    fn training_touches_only_the_asking_axis() {
        let mut p = CosMcPolicy::new(
            4,
            2,
            ArmSet::new(0, 1, vec![1]).unwrap(),
            ControlParams::new(0.4, 1).unwrap(),
        )
        .unwrap();
        let x = ctx(&[0.1, 0.9]);
        let sel = Selection {
            arm: 1,
            phase: Phase::Training,
            dim: Some(1),
        };
        p.record_outcome(&x, sel, 1.0).unwrap();
        let cells = p.cells(&x).unwrap();
        assert!(p.axis(0).stats(cells[0]).is_none());
        assert_eq!(p.axis(1).stats(cells[1]).unwrap().training[0], 1);
        assert!(p
            .record_outcome(&x, Selection::new(1, Phase::Training), 1.0)
            .is_err());
    }
}
