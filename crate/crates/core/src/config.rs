//! Run configuration: JSON schema, presets and validation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arms::{CostModel, LearnerTopology, SyntheticArm};
use crate::environment::{ArrivalKind, ContextSpec, Correlation, Eta, Schema};
use crate::error::{Error, Result};
use crate::extensions::EnsembleRule;
use crate::policy::{dcza_parameters, root_ceil, slicing_parameter, ControlParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum PolicyConfig {
    Cos {
        #[serde(default, rename = "m_T")]
        m_t: Option<u32>,
    },
    Dcza {
        #[serde(default, rename = "A")]
        a: Option<f64>,
        #[serde(default)]
        p: Option<f64>,
        #[serde(default)]
        child_memory: bool,
        #[serde(default)]
        split_strict: bool,
    },
    CosMc {
        #[serde(default, rename = "m_T")]
        m_t: Option<u32>,
    },
}

impl PolicyConfig {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyConfig::Cos { .. } => "cos",
            PolicyConfig::Dcza { .. } => "dcza",
            PolicyConfig::CosMc { .. } => "cos_mc",
        }
    }
}

/// Parameter families for the control functions and partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Exponents and slicing from the regret analysis.
    #[default]
    Theorem,
    /// `t^(1/8) log t` control functions; DCZA with `A = 1`, `p = 4`.
    Z1,
    /// `t^(1/2) log t` for CoS; DCZA with `p = (3 + sqrt 17)/2`, `z = 2/p`.
    Z2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Overrides {
    #[serde(default, rename = "D1_exp")]
    pub d1_exp: Option<f64>,
    #[serde(default, rename = "D2_exp")]
    pub d2_exp: Option<f64>,
    #[serde(default, rename = "D3_exp")]
    pub d3_exp: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayConfig {
    #[serde(rename = "L_max")]
    pub l_max: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    #[serde(flatten)]
    pub rule: EnsembleRuleConfig,
    #[serde(default)]
    pub per_cell: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EnsembleRuleConfig {
    Sgd {
        #[serde(default = "default_alpha_w")]
        alpha_w: f64,
    },
    Mult {
        #[serde(default = "default_beta")]
        beta: f64,
    },
}

fn default_alpha_w() -> f64 {
    100.0
}

fn default_beta() -> f64 {
    0.5
}

impl EnsembleRuleConfig {
    pub fn rule(&self) -> EnsembleRule {
        match *self {
            EnsembleRuleConfig::Sgd { alpha_w } => EnsembleRule::Sgd { alpha_w },
            EnsembleRuleConfig::Mult { beta } => EnsembleRule::Mult { beta },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardConfig {
    #[default]
    Indicator,
    Weighted { cost_weight: f64 },
}

/// Alternative location for partition parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionConfig {
    Uniform {
        #[serde(rename = "m_T")]
        m_t: u32,
    },
    Adaptive {
        #[serde(rename = "A")]
        a: f64,
        p: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionSpec {
    Synthetic(SyntheticArm),
    ConstantZero,
    ConstantOne,
    RandomCoin,
    NaiveBayes,
    Logistic {
        #[serde(default = "default_rate")]
        rate: f64,
    },
    Stump,
}

fn default_rate() -> f64 {
    0.1
}

impl FunctionSpec {
    pub fn is_synthetic(&self) -> bool {
        matches!(self, FunctionSpec::Synthetic(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub functions: Vec<FunctionSpec>,
    #[serde(default)]
    pub costs: CostModel,
    /// Overrides the run-wide label reveal probability.
    #[serde(default)]
    pub p_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemaChoice {
    Named(NamedSchema),
    Custom(Schema),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedSchema {
    Kdd99,
    Numeric,
}

impl SchemaChoice {
    pub fn schema(&self) -> Schema {
        match self {
            SchemaChoice::Named(NamedSchema::Kdd99) => Schema::kdd99(),
            SchemaChoice::Named(NamedSchema::Numeric) => Schema::numeric(),
            SchemaChoice::Custom(s) => s.clone(),
        }
    }
}

fn default_dim() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentConfig {
    Synthetic {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        arrival: ArrivalKind,
        #[serde(default)]
        correlation: Correlation,
        #[serde(default)]
        eta: Eta,
    },
    Dataset {
        path: PathBuf,
        schema: SchemaChoice,
        context: ContextSpec,
        /// Leading rows used to fit the classifiers.
        #[serde(default)]
        train_rows: usize,
        /// Rows streamed after the training block (all remaining if absent).
        #[serde(default)]
        test_rows: Option<usize>,
        #[serde(default)]
        correlation: Correlation,
        /// Keep updating trainable classifiers with revealed labels.
        #[serde(default = "default_true")]
        online_updates: bool,
    },
}

fn default_one() -> f64 {
    1.0
}

fn default_batch() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub policy: PolicyConfig,
    /// Hölder exponent of the accuracy surfaces.
    #[serde(default = "default_one")]
    pub alpha: f64,
    #[serde(default)]
    pub preset: Preset,
    #[serde(default)]
    pub z: Option<f64>,
    #[serde(default, rename = "F_max")]
    pub f_max: Option<u32>,
    #[serde(default)]
    pub overrides: Overrides,
    /// Append normalized time `t/T` to the context.
    #[serde(default)]
    pub time_context: bool,
    #[serde(default)]
    pub delay: Option<DelayConfig>,
    #[serde(default = "default_one")]
    pub p_r: f64,
    #[serde(default)]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default)]
    pub context_only: bool,
    /// Label returned by context-only replies on empty or tied histories.
    #[serde(default = "default_reply")]
    pub context_only_default: u8,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default)]
    pub unsupervised: Vec<usize>,
    #[serde(default)]
    pub peer_fault_prob: f64,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub partition: Option<PartitionConfig>,
    #[serde(default)]
    pub topology: Option<LearnerTopology>,
    pub environment: EnvironmentConfig,
    pub learners: Vec<LearnerConfig>,
}

fn default_reply() -> u8 {
    1
}

/// Policy parameters after presets, overrides and defaults are applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub policy: String,
    pub preset: Preset,
    pub context_dim: usize,
    pub control: ControlParams,
    #[serde(rename = "m_T")]
    pub m_t: Option<u32>,
    #[serde(rename = "A")]
    pub a: Option<f64>,
    pub p: Option<f64>,
    pub child_memory: bool,
    pub split_strict: bool,
    /// Slicing used for hindsight regions and per-cell ensemble weights.
    pub region_slices: u32,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::config("config", format!("file not found: {}", path.display()))
            } else {
                Error::Io(e)
            }
        })?;
        Self::from_json(&text)
    }

    /// Dimension of the environment's own context (before time is appended).
    pub fn environment_dim(&self) -> usize {
        match &self.environment {
            EnvironmentConfig::Synthetic { dim, .. } => *dim,
            EnvironmentConfig::Dataset { context, .. } => context.axes().len(),
        }
    }

    /// Dimension of the context seen by the policies.
    pub fn context_dim(&self) -> usize {
        self.environment_dim() + usize::from(self.time_context)
    }

    pub fn is_synthetic(&self) -> bool {
        matches!(self.environment, EnvironmentConfig::Synthetic { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if self.learners.is_empty() {
            return Err(Error::config("learners", "at least one learner is required"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha", "must be positive"));
        }
        if self.environment_dim() == 0 {
            return Err(Error::config("environment", "context dimension must be at least 1"));
        }
        if let Some(z) = self.z {
            if !(z > 0.0 && z < 1.0) {
                return Err(Error::config("z", format!("must lie in (0, 1), got {z}")));
            }
        }
        for (name, v) in [
            ("overrides.D1_exp", self.overrides.d1_exp),
            ("overrides.D2_exp", self.overrides.d2_exp),
            ("overrides.D3_exp", self.overrides.d3_exp),
        ] {
            if let Some(z) = v {
                if !(z > 0.0 && z < 1.0) {
                    return Err(Error::config(name, format!("must lie in (0, 1), got {z}")));
                }
            }
        }
        if self.f_max == Some(0) {
            return Err(Error::config("F_max", "must be positive"));
        }
        match &self.policy {
            PolicyConfig::Cos { m_t } | PolicyConfig::CosMc { m_t } => {
                if *m_t == Some(0) {
                    return Err(Error::config("m_T", "must be at least 1"));
                }
            }
            PolicyConfig::Dcza { a, p, .. } => {
                if a.is_some_and(|a| !(a > 0.0 && a.is_finite())) {
                    return Err(Error::config("A", "must be positive"));
                }
                if p.is_some_and(|p| !(p > 0.0 && p.is_finite())) {
                    return Err(Error::config("p", "must be positive"));
                }
            }
        }
        if let Some(PartitionConfig::Uniform { m_t: 0 }) = self.partition {
            return Err(Error::config("partition.m_T", "must be at least 1"));
        }
        if let Some(PartitionConfig::Adaptive { a, p }) = self.partition {
            if !(a > 0.0) || !(p > 0.0) {
                return Err(Error::config("partition", "A and p must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.p_r) {
            return Err(Error::config("p_r", format!("must lie in [0, 1], got {}", self.p_r)));
        }
        if !(0.0..=1.0).contains(&self.peer_fault_prob) {
            return Err(Error::config("peer_fault_prob", "must lie in [0, 1]"));
        }
        if self.batch == 0 {
            return Err(Error::config("batch", "must be at least 1"));
        }
        if self.context_only_default > 1 {
            return Err(Error::config("context_only_default", "must be 0 or 1"));
        }
        if let RewardConfig::Weighted { cost_weight } = self.reward {
            if !(0.0..=1.0).contains(&cost_weight) {
                return Err(Error::config("reward.cost_weight", "must lie in [0, 1]"));
            }
        }
        if let Some(e) = &self.ensemble {
            match e.rule {
                EnsembleRuleConfig::Sgd { alpha_w } if !(alpha_w > 0.0) => {
                    return Err(Error::config("ensemble.alpha_w", "must be positive"))
                }
                EnsembleRuleConfig::Mult { beta } if !(beta > 0.0 && beta <= 1.0) => {
                    return Err(Error::config("ensemble.beta", "must lie in (0, 1]"))
                }
                _ => {}
            }
            if self.batch != 1 {
                return Err(Error::config("ensemble", "requires batch = 1"));
            }
        }
        let m = self.learners.len();
        for &u in &self.unsupervised {
            if u >= m {
                return Err(Error::config(
                    "unsupervised",
                    format!("learner {u} does not exist"),
                ));
            }
        }
        let synthetic = self.is_synthetic();
        for (i, l) in self.learners.iter().enumerate() {
            if l.functions.is_empty() {
                return Err(Error::config(
                    format!("learners[{i}].functions"),
                    "a learner needs at least one classification function",
                ));
            }
            l.costs.validate(i)?;
            if !l.costs.own.is_empty() && l.costs.own.len() != l.functions.len() {
                return Err(Error::config(
                    format!("learners[{i}].costs.own"),
                    format!(
                        "{} costs for {} functions",
                        l.costs.own.len(),
                        l.functions.len()
                    ),
                ));
            }
            for &j in l.costs.peers.keys() {
                if j >= m || j == i {
                    return Err(Error::config(
                        format!("learners[{i}].costs.peers.{j}"),
                        "not a peer of this learner",
                    ));
                }
            }
            if let Some(p) = l.p_r {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::config(format!("learners[{i}].p_r"), "must lie in [0, 1]"));
                }
            }
            for (k, f) in l.functions.iter().enumerate() {
                let field = || format!("learners[{i}].functions[{k}]");
                match f {
                    FunctionSpec::Synthetic(arm) if synthetic => {
                        if arm.dim() != self.environment_dim() {
                            return Err(Error::config(
                                field(),
                                format!(
                                    "frequency has {} entries, context has {}",
                                    arm.dim(),
                                    self.environment_dim()
                                ),
                            ));
                        }
                        if !(arm.amplitude >= 0.0) {
                            return Err(Error::config(field(), "amplitude must be nonnegative"));
                        }
                    }
                    FunctionSpec::Synthetic(_) => {
                        return Err(Error::config(field(), "synthetic functions need a synthetic environment"))
                    }
                    FunctionSpec::Logistic { rate } if !(*rate >= 0.0) => {
                        return Err(Error::config(field(), "learning rate must be nonnegative"))
                    }
                    _ if synthetic => {
                        return Err(Error::config(field(), "a synthetic environment needs synthetic functions"))
                    }
                    _ => {}
                }
            }
        }
        if let EnvironmentConfig::Synthetic { eta, correlation, .. } = &self.environment {
            eta.validate(self.environment_dim())?;
            if let Correlation::Worst { learner } = correlation {
                if *learner >= m {
                    return Err(Error::config(
                        "environment.correlation.worst.learner",
                        format!("learner {learner} does not exist"),
                    ));
                }
            }
        }
        if let Some(topology) = &self.topology {
            topology.path_costs(m)?;
        }
        Ok(())
    }

    /// Largest number of functions of any learner.
    pub fn max_functions(&self) -> u32 {
        self.learners.iter().map(|l| l.functions.len()).max().unwrap_or(1) as u32
    }

    /// Applies the preset, explicit `z`/`m_T`/`A`/`p` and per-function
    /// exponent overrides for horizon `horizon`.
    pub fn resolve(&self, horizon: u64) -> Result<ResolvedParams> {
        let d = self.context_dim();
        let alpha = self.alpha;
        let f_max = self.f_max.unwrap_or_else(|| self.max_functions());
        let (partition_m, partition_ap) = match self.partition {
            Some(PartitionConfig::Uniform { m_t }) => (Some(m_t), None),
            Some(PartitionConfig::Adaptive { a, p }) => (None, Some((a, p))),
            None => (None, None),
        };
        let (z, m_t, a, p, child_memory, split_strict) = match &self.policy {
            PolicyConfig::Cos { m_t } => {
                let z = match self.preset {
                    Preset::Theorem => ControlParams::theorem_exponent(alpha, d),
                    Preset::Z1 => 0.125,
                    Preset::Z2 => 0.5,
                };
                let m = m_t
                    .or(partition_m)
                    .unwrap_or_else(|| slicing_parameter(horizon, alpha, d));
                (z, Some(m), None, None, false, false)
            }
            PolicyConfig::CosMc { m_t } => {
                let z = match self.preset {
                    Preset::Z1 => 0.125,
                    _ => 2.0 * alpha / (3.0 * alpha + 2.0),
                };
                let m = m_t
                    .or(partition_m)
                    .unwrap_or_else(|| root_ceil(horizon, 1.0 / (3.0 * alpha + 2.0)));
                (z, Some(m), None, None, false, false)
            }
            PolicyConfig::Dcza {
                a,
                p,
                child_memory,
                split_strict,
            } => {
                let (p_default, z_default) = match self.preset {
                    Preset::Theorem => dcza_parameters(alpha, d),
                    Preset::Z1 => (4.0, 0.125),
                    Preset::Z2 => {
                        let p = (3.0 + 17f64.sqrt()) / 2.0;
                        (p, 2.0 / p)
                    }
                };
                let p = p.or(partition_ap.map(|x| x.1)).unwrap_or(p_default);
                let a = a.or(partition_ap.map(|x| x.0)).unwrap_or(1.0);
                (z_default, None, Some(a), Some(p), *child_memory, *split_strict)
            }
        };
        let z = self.z.unwrap_or(z);
        let control = ControlParams::new(z, f_max)?.with_exponents([
            self.overrides.d1_exp.unwrap_or(z),
            self.overrides.d2_exp.unwrap_or(z),
            self.overrides.d3_exp.unwrap_or(z),
        ])?;
        let region_slices = m_t.unwrap_or_else(|| slicing_parameter(horizon, alpha, d));
        Ok(ResolvedParams {
            policy: self.policy.name().to_string(),
            preset: self.preset,
            context_dim: d,
            control,
            m_t,
            a,
            p,
            child_memory,
            split_strict,
            region_slices,
        })
    }

    /// Costs of learner `i` toward its peers: explicit entries first, then
    /// topology path costs, else zero. Unreachable peers are infinite.
    pub fn peer_costs(&self, i: usize) -> Result<BTreeMap<usize, f64>> {
        let m = self.learners.len();
        let paths = match &self.topology {
            Some(t) => Some(t.path_costs(m)?),
            None => None,
        };
        Ok((0..m)
            .filter(|&j| j != i)
            .map(|j| {
                let c = self.learners[i]
                    .costs
                    .peers
                    .get(&j)
                    .copied()
                    .or_else(|| paths.as_ref().map(|p| p[i][j]))
                    .unwrap_or(0.0);
                (j, c)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "horizon": 100,
            "policy": "cos",
            "environment": {"kind": "synthetic", "dim": 1},
            "learners": [
                {"functions": [{"synthetic": {"amplitude": 0.4, "frequency": [1.0]}}]},
                {"functions": [{"synthetic": {"amplitude": 0.3, "frequency": [2.0]}}],
                 "costs": {"own": [0.1], "peers": {"0": 0.2}}}
            ]
        })
    }

    fn parse(v: serde_json::Value) -> Result<RunConfig> {
        RunConfig::from_json(&v.to_string())
    }

    #[test]
    fn parses_and_resolves_theorem_defaults() {
        let cfg = parse(base()).unwrap();
        let r = cfg.resolve(20_000).unwrap();
        assert_eq!(r.m_t, Some(12));
        assert_eq!(r.control.exponents, [0.5; 3]);
        assert_eq!(r.control.f_max, 1);
        assert_eq!(cfg.peer_costs(1).unwrap()[&0], 0.2);
    }

    #[test]
    fn presets_and_overrides() {
        let mut v = base();
        v["policy"] = "dcza".into();
        v["preset"] = "z1".into();
        let r = parse(v.clone()).unwrap().resolve(1000).unwrap();
        assert_eq!((r.a, r.p), (Some(1.0), Some(4.0)));
        assert_eq!(r.control.exponents, [0.125; 3]);
        v["preset"] = "z2".into();
        v["overrides"] = serde_json::json!({"D2_exp": 0.3});
        let r = parse(v).unwrap().resolve(1000).unwrap();
        let p = (3.0 + 17f64.sqrt()) / 2.0;
        assert_eq!(r.p, Some(p));
        assert_eq!(r.control.exponents[1], 0.3);
        assert_eq!(r.control.exponents[0], 2.0 / p);
    }

    #[test]
    fn validation_reports_fields() {
        let mut v = base();
        v["z"] = 1.5.into();
        let err = parse(v).unwrap_err().to_string();
        assert!(err.contains("`z`"), "{err}");
        let mut v = base();
        v["p_r"] = (-0.1).into();
        assert!(parse(v).unwrap_err().to_string().contains("p_r"));
        let mut v = base();
        v["m_T"] = 0.into();
        assert!(parse(v).unwrap_err().to_string().contains("m_T"));
        let mut v = base();
        v["learners"][1]["costs"]["own"] = serde_json::json!([1.5]);
        assert!(parse(v).unwrap_err().to_string().contains("costs.own"));
        let mut v = base();
        v["learners"][0]["functions"] = serde_json::json!(["constant_one"]);
        assert!(parse(v).is_err());
    }

    #[test]
    fn time_context_adds_a_dimension() {
        let mut v = base();
        v["time_context"] = true.into();
        let cfg = parse(v).unwrap();
        assert_eq!(cfg.context_dim(), 2);
        let r = cfg.resolve(20_000).unwrap();
        assert_eq!(r.control.exponents[0], 0.4);
        assert_eq!(r.m_t, Some(root_ceil(20_000, 0.2)));
    }
}
