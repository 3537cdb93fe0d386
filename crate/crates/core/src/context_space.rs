//! Geometry of the context space `[0,1]^d`.
//!
//! Two partitions live here: the uniform grid used by CoS and the adaptive
//! binary-split tree used by DCZA. Both follow the same boundary rule: a
//! cell on axis `l` (1-based) of `m` slices owns the half-open interval
//! `((l-1)/m, l/m]`, and the coordinate `0` belongs to the first cell. With
//! that rule every point of the closed cube falls in exactly one cell.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of `[0,1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Context(Vec<f64>);

impl Context {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::config("context", "dimension must be at least 1"));
        }
        for (axis, &value) in coords.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::ContextOutOfRange { axis, value });
            }
        }
        Ok(Context(coords))
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Context::new(vec![value])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn coord(&self, axis: usize) -> f64 {
        self.0[axis]
    }

    /// Appends a coordinate (used to add normalized time as an extra axis).
    pub fn with_extra(&self, value: f64) -> Result<Self> {
        let mut coords = self.0.clone();
        coords.push(value);
        Context::new(coords)
    }

    /// The one-dimensional context made of a single axis of this one.
    pub fn project(&self, axis: usize) -> Context {
        Context(vec![self.0[axis]])
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: self.dim(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for Context {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Context::new(value)
    }
}

impl From<Context> for Vec<f64> {
    fn from(value: Context) -> Self {
        value.0
    }
}

/// 1-based slice index of `value` on an axis cut into `slices` equal pieces.
///
/// The float estimate `ceil(value * slices)` is corrected against the
/// interval bounds so the answer agrees with a direct `(l-1)/m < v <= l/m`
/// check even at representable boundaries.
pub fn axis_slice(value: f64, slices: u64) -> u64 {
    if value <= 0.0 {
        return 1;
    }
    let m = slices as f64;
    let mut l = ((value * m).ceil() as u64).clamp(1, slices);
    while l > 1 && value <= (l - 1) as f64 / m {
        l -= 1;
    }
    while l < slices && value > l as f64 / m {
        l += 1;
    }
    l
}

/// Uniform grid with `slices` cells per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformPartition {
    slices: u32,
    dim: usize,
}

impl UniformPartition {
    pub fn new(slices: u32, dim: usize) -> Result<Self> {
        if slices == 0 {
            return Err(Error::config("m_T", "slicing parameter must be at least 1"));
        }
        if dim == 0 {
            return Err(Error::config("context_dim", "dimension must be at least 1"));
        }
        Ok(UniformPartition { slices, dim })
    }

    pub fn slices(&self) -> u32 {
        self.slices
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cell_count(&self) -> u64 {
        (self.slices as u64).pow(self.dim as u32)
    }

    /// Per-axis 1-based cell indices of `x`.
    pub fn locate(&self, x: &Context) -> Result<Vec<u32>> {
        x.check_dim(self.dim)?;
        Ok(x.coords()
            .iter()
            .map(|&v| axis_slice(v, self.slices as u64) as u32)
            .collect())
    }

    /// Row-major flat index in `0..cell_count()`.
    pub fn flat_index(&self, x: &Context) -> Result<usize> {
        let cell = self.locate(x)?;
        Ok(cell
            .iter()
            .fold(0usize, |acc, &l| acc * self.slices as usize + (l as usize - 1)))
    }
}

/// A dyadic hypercube: side `2^-level`, `index[a] < 2^level` on every axis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CubeId {
    pub level: u32,
    pub index: Vec<u64>,
}

impl CubeId {
    pub fn root(dim: usize) -> Self {
        CubeId {
            level: 0,
            index: vec![0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn side(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn volume(&self) -> f64 {
        self.side().powi(self.dim() as i32)
    }

    /// The level-`level` cube containing `x`.
    pub fn containing(level: u32, x: &Context) -> Self {
        let slices = 1u64 << level;
        CubeId {
            level,
            index: x
                .coords()
                .iter()
                .map(|&v| axis_slice(v, slices) - 1)
                .collect(),
        }
    }

    pub fn contains(&self, x: &Context) -> bool {
        if x.dim() != self.dim() {
            return false;
        }
        let slices = 1u64 << self.level;
        x.coords()
            .iter()
            .zip(&self.index)
            .all(|(&v, &i)| axis_slice(v, slices) - 1 == i)
    }

    /// The `2^d` children; axis 0 varies slowest.
    pub fn children(&self) -> Vec<CubeId> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| CubeId {
                level: self.level + 1,
                index: self
                    .index
                    .iter()
                    .enumerate()
                    .map(|(a, &i)| 2 * i + ((mask >> (d - 1 - a)) & 1) as u64)
                    .collect(),
            })
            .collect()
    }

    /// Position of the child containing `x` in the order of [`CubeId::children`].
    pub fn child_slot(&self, x: &Context) -> usize {
        let child = CubeId::containing(self.level + 1, x);
        child
            .index
            .iter()
            .fold(0usize, |acc, &i| (acc << 1) | (i & 1) as usize)
    }
}

/// Result of registering one arrival in an [`AdaptiveTree`].
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Active cube that contained the context before any split.
    pub containing: CubeId,
    /// Children activated by this arrival (empty when no split happened).
    pub new_cubes: Vec<CubeId>,
}

/// Adaptive partition refined by the `A * 2^(p * level)` arrival rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptiveTree {
    dim: usize,
    a: f64,
    p: f64,
    split_strict: bool,
    active: HashMap<CubeId, u64>,
    level_counts: BTreeMap<u32, usize>,
    arrivals: u64,
}

impl AdaptiveTree {
    pub fn new(dim: usize, a: f64, p: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("context_dim", "dimension must be at least 1"));
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::config("A", format!("must be positive, got {a}")));
        }
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::config("p", format!("must be positive, got {p}")));
        }
        let mut active = HashMap::new();
        active.insert(CubeId::root(dim), 0);
        let mut level_counts = BTreeMap::new();
        level_counts.insert(0, 1);
        Ok(AdaptiveTree {
            dim,
            a,
            p,
            split_strict: false,
            active,
            level_counts,
            arrivals: 0,
        })
    }

    /// Use `count > threshold` instead of `count >= threshold`.
    pub fn with_strict_split(mut self, strict: bool) -> Self {
        self.split_strict = strict;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn arrivals(&self) -> u64 {
        self.arrivals
    }

    pub fn threshold(&self, level: u32) -> f64 {
        self.a * (self.p * level as f64).exp2()
    }

    pub fn active_cubes(&self) -> impl Iterator<Item = &CubeId> {
        self.active.keys()
    }

    pub fn active_len(&self) -> usize {
        self.active.len()
    }

    pub fn count(&self, cube: &CubeId) -> Option<u64> {
        self.active.get(cube).copied()
    }

    /// Overwrites an active cube's arrival counter.
    pub fn set_count(&mut self, cube: &CubeId, count: u64) -> Result<()> {
        match self.active.get_mut(cube) {
            Some(c) => {
                *c = count;
                Ok(())
            }
            None => Err(Error::MissingCube(cube.clone())),
        }
    }

    pub fn max_active_level(&self) -> u32 {
        self.level_counts.keys().next_back().copied().unwrap_or(0)
    }

    pub fn find_active(&self, x: &Context) -> Option<CubeId> {
        if x.dim() != self.dim {
            return None;
        }
        (0..=self.max_active_level())
            .map(|level| CubeId::containing(level, x))
            .find(|cube| self.active.contains_key(cube))
    }

    pub fn observe_and_maybe_split(&mut self, x: &Context) -> Result<Observation> {
        x.check_dim(self.dim)?;
        let cube = self.find_active(x).ok_or(Error::NoActiveCube {
            active: self.active.len(),
        })?;
        self.arrivals += 1;
        let count = {
            let c = self.active.get_mut(&cube).expect("found above");
            *c += 1;
            *c as f64
        };
        let threshold = self.threshold(cube.level);
        let split = if self.split_strict {
            count > threshold
        } else {
            count >= threshold
        };
        if !split {
            return Ok(Observation {
                containing: cube,
                new_cubes: Vec::new(),
            });
        }
        self.active.remove(&cube);
        self.decrement_level(cube.level);
        let children = cube.children();
        for child in &children {
            self.active.insert(child.clone(), 0);
        }
        *self.level_counts.entry(cube.level + 1).or_insert(0) += children.len();
        Ok(Observation {
            containing: cube,
            new_cubes: children,
        })
    }

    fn decrement_level(&mut self, level: u32) {
        if let Some(n) = self.level_counts.get_mut(&level) {
            *n -= 1;
            if *n == 0 {
                self.level_counts.remove(&level);
            }
        }
    }
}

/// Largest level the split rule allows after `arrivals` arrivals:
/// `floor(log2(max(t / A, 1)) / p) + 1`.
pub fn level_bound(arrivals: u64, a: f64, p: f64) -> u32 {
    let ratio = (arrivals as f64 / a).max(1.0);
    (ratio.log2() / p).floor() as u32 + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx(v: &[f64]) -> Context {
        Context::new(v.to_vec()).unwrap()
    }

    #[test]
    fn context_rejects_out_of_range() {
        assert!(Context::new(vec![1.2]).is_err());
        assert!(Context::new(vec![]).is_err());
        assert!(Context::new(vec![-0.0, 1.0]).is_ok());
    }

    #[test]
    fn locate_uniform_examples() {
        let p1 = UniformPartition::new(4, 1).unwrap();
        assert_eq!(p1.locate(&ctx(&[0.3])).unwrap(), vec![2]);
        assert_eq!(p1.locate(&ctx(&[0.0])).unwrap(), vec![1]);
        assert_eq!(p1.locate(&ctx(&[0.25])).unwrap(), vec![1]);
        let p2 = UniformPartition::new(3, 2).unwrap();
        assert_eq!(p2.locate(&ctx(&[1.0, 0.34])).unwrap(), vec![3, 2]);
        assert_eq!(p2.flat_index(&ctx(&[1.0, 0.34])).unwrap(), 2 * 3 + 1);
    }

    #[test]
    fn locate_dimension_mismatch() {
        let p = UniformPartition::new(3, 2).unwrap();
        assert!(matches!(
            p.locate(&ctx(&[0.5])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn axis_slice_matches_direct_interval_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20_000 {
            let m: u64 = rng.random_range(1..40);
            // hit exact boundaries often
            let v = if rng.random_bool(0.5) {
                rng.random_range(0..=m) as f64 / m as f64
            } else {
                rng.random::<f64>()
            };
            let expected = if v == 0.0 {
                1
            } else {
                (1..=m)
                    .find(|&l| (l - 1) as f64 / (m as f64) < v && v <= l as f64 / m as f64)
                    .unwrap()
            };
            assert_eq!(axis_slice(v, m), expected, "v={v} m={m}");
        }
    }

    #[test]
    fn cube_contains_examples() {
        assert!(CubeId::root(1).contains(&ctx(&[0.77])));
        let low = CubeId { level: 1, index: vec![0] };
        let high = CubeId { level: 1, index: vec![1] };
        assert!(low.contains(&ctx(&[0.5])));
        assert!(!high.contains(&ctx(&[0.5])));
        assert!(low.contains(&ctx(&[0.0])));
        assert!(high.contains(&ctx(&[1.0])));
    }

    #[test]
    fn children_examples() {
        let c = CubeId { level: 1, index: vec![0] };
        assert_eq!(
            c.children(),
            vec![
                CubeId { level: 2, index: vec![0] },
                CubeId { level: 2, index: vec![1] }
            ]
        );
        let kids = CubeId::root(2).children();
        let idx: Vec<Vec<u64>> = kids.iter().map(|k| k.index.clone()).collect();
        assert_eq!(idx, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert!(kids.iter().all(|k| k.level == 1));
        let c = CubeId { level: 3, index: vec![5] };
        assert_eq!(
            c.children(),
            vec![
                CubeId { level: 4, index: vec![10] },
                CubeId { level: 4, index: vec![11] }
            ]
        );
    }

    #[test]
    fn child_slot_agrees_with_children_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let parent = CubeId { level: 2, index: vec![1, 3] };
        let kids = parent.children();
        for _ in 0..2000 {
            let x = ctx(&[rng.random_range(0.25..0.5), rng.random_range(0.75..=1.0)]);
            if !parent.contains(&x) {
                continue;
            }
            let slot = parent.child_slot(&x);
            assert!(kids[slot].contains(&x));
        }
    }

    #[test]
    fn root_splits_on_first_arrival() {
        let mut tree = AdaptiveTree::new(2, 1.0, 2.0).unwrap();
        assert_eq!(tree.max_active_level(), 0);
        let obs = tree.observe_and_maybe_split(&ctx(&[0.2, 0.9])).unwrap();
        assert_eq!(obs.containing, CubeId::root(2));
        assert_eq!(obs.new_cubes.len(), 4);
        assert_eq!(tree.max_active_level(), 1);
        assert!(obs.new_cubes.iter().all(|c| tree.count(c) == Some(0)));
    }

    #[test]
    fn level_one_threshold_is_four() {
        let mut tree = AdaptiveTree::new(1, 1.0, 2.0).unwrap();
        tree.observe_and_maybe_split(&ctx(&[0.1])).unwrap();
        let cube = CubeId { level: 1, index: vec![0] };
        tree.set_count(&cube, 2).unwrap();
        let obs = tree.observe_and_maybe_split(&ctx(&[0.1])).unwrap();
        assert!(obs.new_cubes.is_empty());
        assert_eq!(tree.count(&cube), Some(3));
        let obs = tree.observe_and_maybe_split(&ctx(&[0.1])).unwrap();
        assert_eq!(obs.new_cubes.len(), 2);
        assert_eq!(tree.count(&cube), None);
    }

    #[test]
    fn strict_split_waits_one_more_arrival() {
        let mut tree = AdaptiveTree::new(1, 1.0, 2.0).unwrap().with_strict_split(true);
        let obs = tree.observe_and_maybe_split(&ctx(&[0.1])).unwrap();
        assert!(obs.new_cubes.is_empty());
        let obs = tree.observe_and_maybe_split(&ctx(&[0.1])).unwrap();
        assert_eq!(obs.new_cubes.len(), 2);
    }

    /// Independent replay of the split rule on a single point: walk the
    /// nested cubes containing `x` and count arrivals per level.
    fn brute_force_level(arrivals: u64, a: f64, p: f64) -> u32 {
        let mut level = 0u32;
        let mut count = 0u64;
        for _ in 0..arrivals {
            count += 1;
            if count as f64 >= a * 2f64.powf(p * level as f64) {
                level += 1;
                count = 0;
            }
        }
        level
    }

    #[test]
    fn max_active_level_examples() {
        let tree = AdaptiveTree::new(1, 1.0, 2.0).unwrap();
        assert_eq!(tree.max_active_level(), 0);

        let mut tree = AdaptiveTree::new(1, 1.0, 2.0).unwrap();
        for _ in 0..1024 {
            tree.observe_and_maybe_split(&ctx(&[0.1])).unwrap();
        }
        let expected = brute_force_level(1024, 1.0, 2.0);
        assert_eq!(tree.max_active_level(), expected);
        assert!(expected <= level_bound(1024, 1.0, 2.0));
        assert_eq!(level_bound(1024, 1.0, 2.0), 6);
    }

    #[test]
    fn fresh_tree_tiles() {
        let tree = AdaptiveTree::new(3, 1.0, 1.0).unwrap();
        assert_eq!(tree.active_len(), 1);
        assert_eq!(tree.find_active(&ctx(&[0.0, 1.0, 0.5])), Some(CubeId::root(3)));
    }
}
