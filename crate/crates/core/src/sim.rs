//! Slot-by-slot execution of a configured run.
//!
//! In every slot, for each learner in index order: its contexts arrive, it
//! picks an arm (peer requests are answered within the slot), the chosen
//! function or peer predicts, the label is revealed or not, and due labels
//! are applied to the learner and forwarded to the peers that served them.

use std::collections::HashMap;

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arms::{
    synthetic_predict, ArmId, ArmSet, BaseClassifier, DecisionStump, GaussianNb, OnlineLogistic,
};
use crate::config::{EnvironmentConfig, FunctionSpec, ResolvedParams, RewardConfig, RunConfig};
use crate::context_space::{level_bound, AdaptiveTree, Context, UniformPartition};
use crate::environment::{
    context_from_row, draw_label, load_csv, ContextMode, ContextSource, Correlation, Dataset,
    FeatureScaler, Row, Scaling, SyntheticWorld,
};
use crate::error::{Error, Result};
use crate::extensions::{
    context_only_reply, unsupervised_query, DelayBuffer, EnsembleState, LabelHistogram,
    LabelProcess, RewardHook,
};
use crate::metrics::{
    finalize_report, oracle_best_arm, regret_step, LearnerSummary, RunMetrics, SlotRecord,
};
use crate::policy::{
    CosMcPolicy, CosPolicy, DczaPolicy, PeerLink, Phase, Policy, RegionKey, RegionQuery,
    Selection,
};

/// Generator for one purpose and index, derived from the run's master
/// seed. Streams of different learners are independent of each other, so
/// adding a learner leaves the others' draws unchanged.
pub fn substream(master: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    let tag = purpose
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
        });
    ChaCha8Rng::seed_from_u64(splitmix64(master ^ splitmix64(tag ^ splitmix64(index))))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One decision, for audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotEvent {
    pub t: u64,
    pub learner: usize,
    pub region: RegionKey,
    pub arm: ArmId,
    pub phase: Phase,
    pub dim: Option<usize>,
}

/// A split of a learner's adaptive tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitEvent {
    pub t: u64,
    pub learner: usize,
    /// The learner's own arrivals so far.
    pub arrivals: u64,
    pub max_level: u32,
    pub bound: u32,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub horizon: u64,
    pub resolved: ResolvedParams,
    pub metrics: RunMetrics,
    pub summaries: Vec<LearnerSummary>,
    pub ensemble: Option<LearnerSummary>,
    pub events: Vec<SlotEvent>,
    pub splits: Vec<SplitEvent>,
    /// Labeled records whose region was split before the label arrived.
    pub dropped_records: u64,
    pub policies: Vec<Policy>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Keep a per-decision event log in the output.
    pub record_events: bool,
}

#[derive(Debug, Clone)]
struct Instance {
    /// Context as produced by the environment (accuracies are defined on it).
    env_x: Context,
    /// Context seen by the policies.
    x: Context,
    label: u8,
    features: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct Served {
    peer: usize,
    /// Function the peer used, where it decided, and its reward.
    function: Option<(Selection, RegionKey, f64)>,
}

#[derive(Debug, Clone)]
struct Pending {
    x: Context,
    key: RegionKey,
    selection: Selection,
    reward: f64,
    label: u8,
    features: Option<Vec<f64>>,
    served: Option<Served>,
}

#[derive(Debug, Clone)]
struct Learner {
    id: usize,
    policy: Policy,
    /// Costs aligned with the arm slots.
    costs: Vec<f64>,
    own_costs: Vec<f64>,
    classifiers: Vec<BaseClassifier>,
    labels: LabelProcess,
    unsupervised: bool,
    buffer: DelayBuffer<Pending>,
    histograms: HashMap<RegionKey, LabelHistogram>,
    rng_predict: ChaCha8Rng,
    rng_reveal: ChaCha8Rng,
    rng_delay: ChaCha8Rng,
    rng_policy: ChaCha8Rng,
    rng_fault: ChaCha8Rng,
    rng_hindsight: ChaCha8Rng,
}

/// All learners except the one currently deciding.
struct Others<'a> {
    left: &'a mut [Learner],
    right: &'a mut [Learner],
    me: usize,
}

impl Others<'_> {
    fn get(&mut self, j: usize) -> &mut Learner {
        if j < self.me {
            &mut self.left[j]
        } else {
            &mut self.right[j - self.me - 1]
        }
    }
}

fn split_learners(learners: &mut [Learner], i: usize) -> (&mut Learner, Others<'_>) {
    let (left, rest) = learners.split_at_mut(i);
    let (me, right) = rest.split_first_mut().expect("learner index in range");
    (me, Others { left, right, me: i })
}

struct Link<'a, 'b> {
    others: &'a mut Others<'b>,
    t: u64,
    fault_prob: f64,
    rng: &'a mut ChaCha8Rng,
}

impl PeerLink for Link<'_, '_> {
    fn arrival_count(&mut self, peer: usize, region: &RegionQuery<'_>) -> Result<u64> {
        if self.fault_prob > 0.0 && self.rng.random_bool(self.fault_prob) {
            return Err(Error::PeerFault { peer, slot: self.t });
        }
        self.others.get(peer).policy.answer(region)
    }
}

/// Counts per hindsight region for the best-fixed-arm comparison.
#[derive(Debug, Clone, Default)]
struct CellTally {
    n: u64,
    /// `correct[j][k]`: instances learner `j`'s function `k` got right.
    correct: Vec<Vec<u64>>,
}

enum Source {
    Synthetic {
        contexts: ContextSource,
        label_rngs: Vec<ChaCha8Rng>,
        correlation: Correlation,
    },
    Data {
        rows: Vec<Row>,
        scaled: Vec<Vec<f64>>,
        modes: Vec<ContextMode>,
        correlation: Correlation,
        prev: Vec<Option<u8>>,
    },
}

pub struct Simulation {
    seed: u64,
    horizon: u64,
    batch: usize,
    resolved: ResolvedParams,
    learners: Vec<Learner>,
    world: Option<SyntheticWorld>,
    source: Source,
    time_context: bool,
    context_only: bool,
    context_only_default: u8,
    online_updates: bool,
    fault_prob: f64,
    reward: RewardHook,
    ensemble: Option<(EnsembleState, UniformPartition, LabelProcess, ChaCha8Rng)>,
    ensemble_correct: Vec<bool>,
    regions: UniformPartition,
    hindsight: Vec<HashMap<usize, CellTally>>,
    realized_reward: Vec<f64>,
    metrics: RunMetrics,
    events: Vec<SlotEvent>,
    splits: Vec<SplitEvent>,
    options: SimOptions,
    dropped: u64,
    next_slot: u64,
}

fn scaled_features(row: &Row, scalers: &[FeatureScaler]) -> Vec<f64> {
    row.features
        .iter()
        .zip(scalers)
        .map(|(v, s)| s.transform(*v))
        .collect()
}

fn build_classifier(spec: &FunctionSpec, train: &[(Vec<f64>, u8)], dim: usize) -> Result<BaseClassifier> {
    Ok(match spec {
        FunctionSpec::ConstantZero => BaseClassifier::ConstantZero,
        FunctionSpec::ConstantOne => BaseClassifier::ConstantOne,
        FunctionSpec::RandomCoin => BaseClassifier::RandomCoin,
        FunctionSpec::NaiveBayes => BaseClassifier::GaussianNaiveBayes(GaussianNb::fit(train, dim)),
        FunctionSpec::Logistic { rate } => {
            let mut lr = OnlineLogistic::new(dim, *rate);
            for (x, y) in train {
                lr.update(x, *y);
            }
            BaseClassifier::OnlineLogistic(lr)
        }
        FunctionSpec::Stump => BaseClassifier::DecisionStump(DecisionStump::fit(train, dim)),
        FunctionSpec::Synthetic(_) => {
            return Err(Error::config("functions", "synthetic function in a dataset run"))
        }
    })
}

impl Simulation {
    pub fn new(cfg: &RunConfig, seed: u64, options: SimOptions) -> Result<Self> {
        cfg.validate()?;
        let m = cfg.learners.len();
        let batch = cfg.batch;

        // environment first: a dataset caps the horizon
        let (world, source, horizon, classifiers, online_updates) = match &cfg.environment {
            EnvironmentConfig::Synthetic {
                dim,
                arrival,
                correlation,
                eta,
            } => {
                let horizon = cfg.horizon;
                let correlation = if cfg.ensemble.is_some() {
                    Correlation::Best
                } else {
                    *correlation
                };
                let count = horizon.saturating_mul(batch as u64).max(1);
                let contexts = ContextSource::new(arrival, correlation, m, *dim, count, |s| {
                    substream(seed, "context", s as u64)
                })?;
                let label_rngs = (0..m).map(|s| substream(seed, "label", s as u64)).collect();
                let functions = cfg
                    .learners
                    .iter()
                    .map(|l| {
                        l.functions
                            .iter()
                            .map(|f| match f {
                                FunctionSpec::Synthetic(a) => a.clone(),
                                _ => unreachable!("validated"),
                            })
                            .collect()
                    })
                    .collect();
                let world = SyntheticWorld {
                    functions,
                    eta: *eta,
                    horizon,
                };
                (
                    Some(world),
                    Source::Synthetic {
                        contexts,
                        label_rngs,
                        correlation,
                    },
                    horizon,
                    vec![Vec::new(); m],
                    false,
                )
            }
            EnvironmentConfig::Dataset {
                path,
                schema,
                context,
                train_rows,
                test_rows,
                correlation,
                online_updates,
            } => {
                let data = load_csv(path, &schema.schema())?;
                let correlation = if cfg.ensemble.is_some() {
                    Correlation::Best
                } else {
                    *correlation
                };
                let (source, horizon, classifiers) = Self::dataset_source(
                    cfg,
                    &data,
                    *train_rows,
                    *test_rows,
                    correlation,
                    context,
                )?;
                (None, source, horizon, classifiers, *online_updates)
            }
        };

        let resolved = cfg.resolve(horizon)?;
        let d = resolved.context_dim;
        let mut learners = Vec::with_capacity(m);
        for (i, (lc, classifiers)) in cfg.learners.iter().zip(classifiers).enumerate() {
            let (arms, costs, own_costs) = arm_layout(cfg, i)?;
            let policy = match &cfg.policy {
                crate::config::PolicyConfig::Cos { .. } => Policy::Cos(CosPolicy::new(
                    UniformPartition::new(resolved.m_t.unwrap_or(1), d)?,
                    arms,
                    resolved.control,
                )),
                crate::config::PolicyConfig::CosMc { .. } => Policy::CosMc(CosMcPolicy::new(
                    resolved.m_t.unwrap_or(1),
                    d,
                    arms,
                    resolved.control,
                )?),
                crate::config::PolicyConfig::Dcza { .. } => {
                    let tree = AdaptiveTree::new(d, resolved.a.unwrap_or(1.0), resolved.p.unwrap_or(1.0))?
                        .with_strict_split(resolved.split_strict);
                    Policy::Dcza(DczaPolicy::new(arms, resolved.control, tree, resolved.child_memory))
                }
            };
            let unsupervised = cfg.unsupervised.contains(&i);
            let p_r = if unsupervised { 0.0 } else { lc.p_r.unwrap_or(cfg.p_r) };
            let l_max = cfg.delay.map_or(0, |dl| dl.l_max);
            let id = i as u64;
            learners.push(Learner {
                id: i,
                policy,
                costs,
                own_costs,
                classifiers,
                labels: LabelProcess::new(p_r)?,
                unsupervised,
                buffer: DelayBuffer::new(l_max),
                histograms: HashMap::new(),
                rng_predict: substream(seed, "predict", id),
                rng_reveal: substream(seed, "reveal", id),
                rng_delay: substream(seed, "delay", id),
                rng_policy: substream(seed, "policy", id),
                rng_fault: substream(seed, "fault", id),
                rng_hindsight: substream(seed, "hindsight", id),
            });
        }

        let regions = UniformPartition::new(resolved.region_slices.max(1), d)?;
        let ensemble = match &cfg.ensemble {
            Some(e) => Some((
                EnsembleState::new(e.rule.rule(), m, e.per_cell)?,
                regions,
                LabelProcess::new(cfg.p_r)?,
                substream(seed, "ensemble", 0),
            )),
            None => None,
        };
        let reward = match cfg.reward {
            RewardConfig::Indicator => RewardHook::Indicator,
            RewardConfig::Weighted { cost_weight } => RewardHook::Weighted { cost_weight },
        };
        debug!("resolved parameters: {resolved:?}");
        Ok(Simulation {
            seed,
            horizon,
            batch,
            resolved,
            learners,
            world,
            source,
            time_context: cfg.time_context,
            context_only: cfg.context_only,
            context_only_default: cfg.context_only_default,
            online_updates,
            fault_prob: cfg.peer_fault_prob,
            reward,
            ensemble,
            ensemble_correct: Vec::new(),
            regions,
            hindsight: vec![HashMap::new(); m],
            realized_reward: vec![0.0; m],
            metrics: RunMetrics::new(m),
            events: Vec::new(),
            splits: Vec::new(),
            options,
            dropped: 0,
            next_slot: 1,
        })
    }

    #[allow(clippy::type_complexity)]
    fn dataset_source(
        cfg: &RunConfig,
        data: &Dataset,
        train_rows: usize,
        test_rows: Option<usize>,
        correlation: Correlation,
        context: &crate::environment::ContextSpec,
    ) -> Result<(Source, u64, Vec<Vec<BaseClassifier>>)> {
        let m = cfg.learners.len();
        if train_rows > data.len() {
            return Err(Error::config(
                "environment.train_rows",
                format!("{train_rows} exceeds the {} rows available", data.len()),
            ));
        }
        let available = data.len() - train_rows;
        let test_len = test_rows.map_or(available, |n| n.min(available));
        let rows: Vec<Row> = data.rows[train_rows..train_rows + test_len].to_vec();
        let streams = match correlation {
            Correlation::Independent => m,
            _ => 1,
        } as u64;
        let per_slot = streams * cfg.batch as u64;
        let horizon = cfg.horizon.min(test_len as u64 / per_slot);
        if horizon < cfg.horizon {
            warn!(
                "dataset supplies {test_len} rows; horizon reduced from {} to {horizon}",
                cfg.horizon
            );
        }
        let dim = data.feature_names.len();
        let train_block = &data.rows[..train_rows];
        let scalers: Vec<FeatureScaler> = (0..dim)
            .map(|f| FeatureScaler::fit(train_block.iter().map(|r| r.features[f]), Scaling::MinMax))
            .collect();
        let train: Vec<(Vec<f64>, u8)> = train_block
            .iter()
            .map(|r| (scaled_features(r, &scalers), r.label))
            .collect();
        let classifiers = cfg
            .learners
            .iter()
            .map(|l| {
                l.functions
                    .iter()
                    .map(|f| build_classifier(f, &train, dim))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let modes = context
            .axes()
            .iter()
            .map(|a| ContextMode::resolve(a, data, horizon))
            .collect::<Result<Vec<_>>>()?;
        let scaled = rows.iter().map(|r| scaled_features(r, &scalers)).collect();
        Ok((
            Source::Data {
                rows,
                scaled,
                modes,
                correlation,
                prev: vec![None; m],
            },
            horizon,
            classifiers,
        ))
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn resolved(&self) -> &ResolvedParams {
        &self.resolved
    }

    /// Instances for every learner in slot `t` (empty when none arrive).
    fn next_instances(&mut self, t: u64) -> Result<Vec<Vec<Instance>>> {
        let m = self.learners.len();
        let mut out = vec![Vec::new(); m];
        let time = if self.horizon == 0 {
            0.0
        } else {
            t as f64 / self.horizon as f64
        };
        for b in 0..self.batch {
            match &mut self.source {
                Source::Synthetic {
                    contexts,
                    label_rngs,
                    correlation,
                } => {
                    let xs = contexts.generate();
                    let world = self.world.as_ref().expect("synthetic run");
                    let shared_label = match correlation {
                        Correlation::Best => {
                            let x = xs[0].as_ref().expect("shared context");
                            Some(draw_label(&world.eta, x, &mut label_rngs[0]))
                        }
                        _ => None,
                    };
                    for (i, x) in xs.into_iter().enumerate() {
                        let Some(env_x) = x else { continue };
                        let label = match shared_label {
                            Some(l) => l,
                            None => draw_label(&world.eta, &env_x, &mut label_rngs[i]),
                        };
                        let x = if self.time_context {
                            env_x.with_extra(time.min(1.0))?
                        } else {
                            env_x.clone()
                        };
                        out[i].push(Instance {
                            env_x,
                            x,
                            label,
                            features: None,
                        });
                    }
                }
                Source::Data {
                    rows,
                    scaled,
                    modes,
                    correlation,
                    prev,
                } => {
                    let item = (t - 1) * self.batch as u64 + b as u64;
                    let targets: Vec<(usize, usize)> = match correlation {
                        Correlation::Independent => (0..m)
                            .map(|i| (i, (item as usize) * m + i))
                            .collect(),
                        Correlation::Best => (0..m).map(|i| (i, item as usize)).collect(),
                        Correlation::Worst { learner } => vec![(*learner, item as usize)],
                    };
                    for (i, r) in targets {
                        let row = &rows[r];
                        let env_x = context_from_row(modes, row, t, prev[i])?;
                        prev[i] = Some(row.label);
                        let x = if self.time_context {
                            env_x.with_extra(time.min(1.0))?
                        } else {
                            env_x.clone()
                        };
                        out[i].push(Instance {
                            env_x,
                            x,
                            label: row.label,
                            features: Some(scaled[r].clone()),
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Executes slot `t`: arrivals, selections, predictions, label reveal,
    /// deliveries and forwarding, then tree refinement.
    pub fn run_slot(&mut self, t: u64) -> Result<()> {
        if t == 0 || t > self.horizon {
            return Err(Error::Invariant(format!("slot {t} outside 1..={}", self.horizon)));
        }
        let instances = self.next_instances(t)?;
        let mut predictions: Vec<Option<u8>> = vec![None; self.learners.len()];
        for (i, items) in instances.iter().enumerate() {
            if items.is_empty() {
                continue;
            }
            for inst in items {
                predictions[i] = self.decide(i, t, inst)?;
            }
            self.deliver(i, t)?;
            for inst in items {
                let new = self.learners[i].policy.after_slot_update(&inst.x)?;
                if !new.is_empty() {
                    if let Policy::Dcza(p) = &self.learners[i].policy {
                        let arrivals = p.tree().arrivals();
                        self.splits.push(SplitEvent {
                            t,
                            learner: i,
                            arrivals,
                            max_level: p.tree().max_active_level(),
                            bound: level_bound(arrivals, self.resolved.a.unwrap_or(1.0), self.resolved.p.unwrap_or(1.0)),
                        });
                    }
                }
            }
        }
        if let Some((state, partition, labels, rng)) = &mut self.ensemble {
            if let Some(inst) = instances.iter().find_map(|v| v.first()) {
                let preds: Vec<u8> = predictions.iter().map(|p| p.unwrap_or(0)).collect();
                let cell = partition.flat_index(&inst.x)?;
                let y = state.predict(cell, &preds)?;
                self.ensemble_correct.push(y == inst.label);
                if labels.reveal(rng) {
                    state.update(cell, &preds, inst.label)?;
                }
            }
        }
        self.next_slot = t + 1;
        Ok(())
    }

    fn decide(&mut self, i: usize, t: u64, inst: &Instance) -> Result<Option<u8>> {
        let fault_prob = self.fault_prob;
        let (me, mut others) = split_learners(&mut self.learners, i);

        let (selection, key) = if me.unsupervised {
            let own = me.policy.own_means(&inst.x)?;
            let reports = me
                .policy
                .arms()
                .peers
                .clone()
                .into_iter()
                .map(|j| others.get(j).policy.best_own_mean(&inst.x))
                .collect::<Result<Vec<_>>>()?;
            let arm = unsupervised_query(&own, &reports);
            (
                Selection::new(arm, Phase::Exploitation),
                me.policy.home_region(&inst.x)?,
            )
        } else {
            let mut link = Link {
                others: &mut others,
                t,
                fault_prob,
                rng: &mut me.rng_fault,
            };
            match me.policy.select(&inst.x, t, &mut link, &mut me.rng_policy) {
                Ok(v) => v,
                Err(Error::PeerFault { peer, slot }) => {
                    warn!("learner {i}: peer {peer} failed at slot {slot}; slot aborted");
                    self.metrics.aborted[i] += 1;
                    return Ok(None);
                }
                Err(e) => return Err(e),
            }
        };

        let arm = me.policy.arms().id(selection.arm);
        let world = self.world.as_ref();
        let (prediction, accuracy, served) = match arm {
            ArmId::Own(k) => {
                let (p, a) = predict_with(me, world, k, inst, t)?;
                (p, a, None)
            }
            ArmId::Peer(j) => {
                let peer = others.get(j);
                if self.context_only {
                    let region = peer.policy.home_region(&inst.x)?;
                    let hist = peer.histograms.get(&region).copied().unwrap_or_default();
                    let reply = context_only_reply(&hist, self.context_only_default);
                    let accuracy = match world {
                        Some(w) => {
                            let eta = w.eta.at(&inst.env_x);
                            if reply == 1 {
                                eta
                            } else {
                                1.0 - eta
                            }
                        }
                        None => f64::NAN,
                    };
                    (reply, accuracy, Some((j, None)))
                } else {
                    let (sel, region) = peer.policy.serve_select(&inst.x, t)?;
                    let (p, a) = predict_with(peer, world, sel.arm, inst, t)?;
                    (p, a, Some((j, Some((sel, region)))))
                }
            }
        };
        let correct = prediction == inst.label;
        let cost = me.costs[selection.arm];

        let (exp_regret, realized_regret) = match world {
            Some(w) => {
                let arms = me.policy.arms();
                let accs = (0..arms.len())
                    .map(|s| match arms.id(s) {
                        ArmId::Own(k) => w.accuracy(i, k, &inst.env_x, t),
                        ArmId::Peer(j) => w.best_accuracy(j, &inst.env_x, t).map(|b| b.1),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (_, best) = oracle_best_arm(&accs, &me.costs)?;
                let (e, r) = regret_step(best, accuracy, cost, correct);
                (Some(e), Some(r))
            }
            None => (None, None),
        };

        if world.is_none() {
            // best fixed arm in hindsight, per region
            let cell = self.regions.flat_index(&inst.x)?;
            let features = inst.features.as_deref().unwrap_or(&[]);
            let m = others.left.len() + others.right.len() + 1;
            let tally = self.hindsight[i].entry(cell).or_default();
            if tally.correct.is_empty() {
                tally.correct = vec![Vec::new(); m];
            }
            tally.n += 1;
            for j in 0..m {
                let classifiers = if j == i {
                    &me.classifiers
                } else {
                    &others.get(j).classifiers
                };
                if tally.correct[j].is_empty() {
                    tally.correct[j] = vec![0; classifiers.len()];
                }
                for (k, c) in classifiers.iter().enumerate() {
                    let p = c.predict(features, &mut me.rng_hindsight)?;
                    tally.correct[j][k] += u64::from(p == inst.label);
                }
            }
            self.realized_reward[i] += f64::from(u8::from(correct)) - cost;
        }

        let labeled = !me.unsupervised && me.labels.reveal(&mut me.rng_reveal);
        self.metrics.records.push(SlotRecord {
            t,
            learner: i,
            phase: selection.phase,
            arm,
            correct,
            cost,
            exp_regret,
            realized_regret,
            labeled,
        });
        if self.options.record_events {
            self.events.push(SlotEvent {
                t,
                learner: i,
                region: key.clone(),
                arm,
                phase: selection.phase,
                dim: selection.dim,
            });
        }

        if labeled {
            let signal = f64::from(u8::from(correct));
            let reward = self.reward.apply(signal, cost)?;
            let served = match served {
                None => None,
                Some((j, None)) => Some(Served {
                    peer: j,
                    function: None,
                }),
                Some((j, Some((sel, region)))) => {
                    let peer_cost = others.get(j).own_costs[sel.arm];
                    Some(Served {
                        peer: j,
                        function: Some((sel, region, self.reward.apply(signal, peer_cost)?)),
                    })
                }
            };
            let delay = me.buffer.draw_delay(&mut me.rng_delay);
            me.buffer.enqueue(
                t,
                delay,
                Pending {
                    x: inst.x.clone(),
                    key,
                    selection,
                    reward,
                    label: inst.label,
                    features: inst.features.clone(),
                    served,
                },
            )?;
        }
        Ok(Some(prediction))
    }

    fn deliver(&mut self, i: usize, t: u64) -> Result<()> {
        let due = self.learners[i].buffer.deliver(t);
        let online = self.online_updates;
        for p in due {
            let (me, mut others) = split_learners(&mut self.learners, i);
            if !me.policy.record_outcome(&p.key, p.selection, p.reward, &p.x)? {
                self.dropped += 1;
            }
            absorb_label(me, &p, online)?;
            if let Some(s) = &p.served {
                let peer = others.get(s.peer);
                if let Some((sel, key, reward)) = &s.function {
                    if !peer.policy.record_outcome(key, *sel, *reward, &p.x)? {
                        self.dropped += 1;
                    }
                }
                absorb_label(peer, &p, online)?;
            }
        }
        Ok(())
    }

    /// Next slot to execute.
    pub fn next_slot(&self) -> u64 {
        self.next_slot
    }

    pub fn is_done(&self) -> bool {
        self.next_slot > self.horizon
    }

    /// Executes the next slot; `false` once the horizon has been reached.
    pub fn step(&mut self) -> Result<bool> {
        if self.is_done() {
            return Ok(false);
        }
        self.run_slot(self.next_slot)?;
        Ok(true)
    }

    /// Runs the remaining slots and assembles the report.
    pub fn run(mut self) -> Result<RunOutput> {
        while self.step()? {}
        Ok(self.finish())
    }

    /// Report over the slots executed so far.
    pub fn finish(self) -> RunOutput {
        let mut summaries = finalize_report(&self.metrics);
        if self.world.is_none() {
            for (i, s) in summaries.iter_mut().enumerate() {
                let (pseudo, best_error) = self.hindsight_summary(i);
                s.pseudo_regret = pseudo;
                s.best_fixed_error_pct = best_error;
            }
        }
        let ensemble = self.ensemble.as_ref().map(|_| {
            let n = self.ensemble_correct.len() as u64;
            let wrong = self.ensemble_correct.iter().filter(|c| !**c).count() as u64;
            LearnerSummary {
                learner: "ensemble".into(),
                slots: n,
                error_pct: if n == 0 { 0.0 } else { 100.0 * wrong as f64 / n as f64 },
                training_pct: 0.0,
                exploration_pct: 0.0,
                exploitation_pct: 0.0,
                cum_exp_regret: None,
                cum_realized_regret: None,
                regret_slope: None,
                pseudo_regret: None,
                best_fixed_error_pct: None,
                aborted: 0,
                arm_selection: Default::default(),
            }
        });
        RunOutput {
            seed: self.seed,
            horizon: self.horizon,
            resolved: self.resolved,
            metrics: self.metrics,
            summaries,
            ensemble,
            events: self.events,
            splits: self.splits,
            dropped_records: self.dropped,
            policies: self.learners.into_iter().map(|l| l.policy).collect(),
        }
    }

    /// Pseudo-regret against the best fixed arm per region and that arm's
    /// error rate, from the hindsight tallies of learner `i`.
    fn hindsight_summary(&self, i: usize) -> (Option<f64>, Option<f64>) {
        let tallies = &self.hindsight[i];
        if tallies.is_empty() {
            return (None, None);
        }
        let arms = self.learners[i].policy.arms();
        let costs = &self.learners[i].costs;
        let (mut best_total, mut best_correct, mut n) = (0.0, 0u64, 0u64);
        let mut cells: Vec<_> = tallies.iter().collect();
        cells.sort_by_key(|(c, _)| **c);
        for (_, tally) in cells {
            let mut best: Option<(f64, u64)> = None;
            for (s, &cost) in costs.iter().enumerate().take(arms.len()) {
                let correct = match arms.id(s) {
                    ArmId::Own(k) => tally.correct[i][k],
                    ArmId::Peer(j) => tally.correct[j].iter().copied().max().unwrap_or(0),
                };
                let value = correct as f64 - tally.n as f64 * cost;
                if best.is_none_or(|(v, _)| value > v) {
                    best = Some((value, correct));
                }
            }
            let (v, c) = best.unwrap_or((0.0, 0));
            best_total += v;
            best_correct += c;
            n += tally.n;
        }
        (
            Some(best_total - self.realized_reward[i]),
            Some(100.0 * (n - best_correct) as f64 / n as f64),
        )
    }
}

fn predict_with(
    learner: &mut Learner,
    world: Option<&SyntheticWorld>,
    k: usize,
    inst: &Instance,
    t: u64,
) -> Result<(u8, f64)> {
    match world {
        Some(w) => {
            let a = w.accuracy(learner.id, k, &inst.env_x, t)?;
            Ok((synthetic_predict(a, inst.label, &mut learner.rng_predict), a))
        }
        None => {
            let features = inst.features.as_deref().unwrap_or(&[]);
            let p = learner.classifiers[k].predict(features, &mut learner.rng_predict)?;
            Ok((p, f64::NAN))
        }
    }
}

/// Arrival count, label histogram and classifier updates for a labeled
/// instance a learner handled (its own or a served request).
fn absorb_label(learner: &mut Learner, p: &Pending, online: bool) -> Result<()> {
    learner.policy.record_labeled_arrival(&p.x)?;
    let region = learner.policy.home_region(&p.x)?;
    learner.histograms.entry(region).or_default().record(p.label);
    if online {
        if let Some(f) = &p.features {
            for c in learner.classifiers.iter_mut() {
                c.update(f, p.label)?;
            }
        }
    }
    Ok(())
}

/// Arm set of learner `i` with slot-aligned costs and its own-function
/// costs. Peers whose cost exceeds 1 are never worth calling and are left
/// out; ensemble runs have no peer arms.
pub fn arm_layout(cfg: &RunConfig, i: usize) -> Result<(ArmSet, Vec<f64>, Vec<f64>)> {
    let lc = cfg
        .learners
        .get(i)
        .ok_or_else(|| Error::config("learner", format!("no learner {i}")))?;
    let peer_costs = cfg.peer_costs(i)?;
    let peers: Vec<usize> = if cfg.ensemble.is_some() {
        Vec::new()
    } else {
        peer_costs
            .iter()
            .filter(|(_, &c)| c <= 1.0)
            .map(|(&j, _)| j)
            .collect()
    };
    let arms = ArmSet::new(i, lc.functions.len(), peers)?;
    let own_costs = if lc.costs.own.is_empty() {
        vec![0.0; lc.functions.len()]
    } else {
        lc.costs.own.clone()
    };
    let costs = (0..arms.len())
        .map(|s| match arms.id(s) {
            ArmId::Own(k) => own_costs[k],
            ArmId::Peer(j) => peer_costs[&j],
        })
        .collect();
    Ok((arms, costs, own_costs))
}

/// One point of the best-arm map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OraclePoint {
    pub x: Context,
    pub arm: ArmId,
    pub net_value: f64,
}

/// Best arm of learner `i` at each point, at slot `t`, for a synthetic
/// configuration.
pub fn oracle_map(cfg: &RunConfig, i: usize, points: &[Context], t: u64) -> Result<Vec<OraclePoint>> {
    let EnvironmentConfig::Synthetic { eta, .. } = &cfg.environment else {
        return Err(Error::config("environment", "the oracle needs known accuracies"));
    };
    let world = SyntheticWorld {
        functions: cfg
            .learners
            .iter()
            .map(|l| {
                l.functions
                    .iter()
                    .filter_map(|f| match f {
                        FunctionSpec::Synthetic(a) => Some(a.clone()),
                        _ => None,
                    })
                    .collect()
            })
            .collect(),
        eta: *eta,
        horizon: cfg.horizon,
    };
    let (arms, costs, _) = arm_layout(cfg, i)?;
    points
        .iter()
        .map(|x| {
            let accs = (0..arms.len())
                .map(|s| match arms.id(s) {
                    ArmId::Own(k) => world.accuracy(i, k, x, t),
                    ArmId::Peer(j) => world.best_accuracy(j, x, t).map(|b| b.1),
                })
                .collect::<Result<Vec<_>>>()?;
            let (s, net_value) = oracle_best_arm(&accs, &costs)?;
            Ok(OraclePoint {
                x: x.clone(),
                arm: arms.id(s),
                net_value,
            })
        })
        .collect()
}

/// Builds and runs one seed of `cfg`.
pub fn run(cfg: &RunConfig, seed: u64, options: SimOptions) -> Result<RunOutput> {
    Simulation::new(cfg, seed, options)?.run()
}

/// Run manifest: the configuration as given plus the resolved parameters.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub version: &'static str,
    pub seed: u64,
    pub horizon: u64,
    pub resolved: &'a ResolvedParams,
    pub dropped_records: u64,
    pub config: &'a RunConfig,
}

/// Writes `metrics.csv`, `summary.csv` and `manifest.json` into `dir`.
pub fn write_outputs(dir: &std::path::Path, cfg: &RunConfig, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    crate::metrics::write_metrics_csv(&dir.join("metrics.csv"), &out.metrics)?;
    let mut rows = out.summaries.clone();
    rows.extend(out.ensemble.clone());
    crate::metrics::write_summary_csv(&dir.join("summary.csv"), &rows)?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        seed: out.seed,
        horizon: out.horizon,
        resolved: &out.resolved,
        dropped_records: out.dropped_records,
        config: cfg,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}
