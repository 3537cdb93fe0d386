//! Oracle, regret accounting and run reports.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arms::ArmId;
use crate::error::{Error, Result};
use crate::policy::{argmax_first, Phase};

/// Best arm by net value `accuracy - cost`; ties go to the lowest slot.
pub fn oracle_best_arm(accuracies: &[f64], costs: &[f64]) -> Result<(usize, f64)> {
    if accuracies.len() != costs.len() || accuracies.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: accuracies.len(),
            actual: costs.len(),
        });
    }
    let nets: Vec<f64> = accuracies.iter().zip(costs).map(|(a, c)| a - c).collect();
    let k = argmax_first(nets.iter().copied()).unwrap_or(0);
    Ok((k, nets[k]))
}

/// `(expected, realized)` regret increments of one decision.
pub fn regret_step(best_net: f64, chosen_accuracy: f64, chosen_cost: f64, correct: bool) -> (f64, f64) {
    let expected = best_net - (chosen_accuracy - chosen_cost);
    let realized = best_net - (f64::from(u8::from(correct)) - chosen_cost);
    (expected, realized)
}

/// One decision of one learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub t: u64,
    pub learner: usize,
    pub phase: Phase,
    pub arm: ArmId,
    pub correct: bool,
    pub cost: f64,
    /// Known only when the accuracies are known.
    pub exp_regret: Option<f64>,
    pub realized_regret: Option<f64>,
    pub labeled: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub learners: usize,
    pub records: Vec<SlotRecord>,
    /// Slots dropped because a peer failed to answer, per learner.
    pub aborted: Vec<u64>,
}

impl RunMetrics {
    pub fn new(learners: usize) -> Self {
        RunMetrics {
            learners,
            records: Vec::new(),
            aborted: vec![0; learners],
        }
    }

    pub fn learner_records(&self, learner: usize) -> impl Iterator<Item = &SlotRecord> {
        self.records.iter().filter(move |r| r.learner == learner)
    }

    /// Cumulative expected regret of `learner` after each of its decisions.
    pub fn cumulative_regret(&self, learner: usize) -> Vec<f64> {
        let mut acc = 0.0;
        self.learner_records(learner)
            .map(|r| {
                acc += r.exp_regret.unwrap_or(0.0);
                acc
            })
            .collect()
    }
}

/// Aggregates of one learner's run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSummary {
    pub learner: String,
    pub slots: u64,
    pub error_pct: f64,
    pub training_pct: f64,
    pub exploration_pct: f64,
    pub exploitation_pct: f64,
    pub cum_exp_regret: Option<f64>,
    pub cum_realized_regret: Option<f64>,
    pub regret_slope: Option<f64>,
    /// Regret against the best fixed arm per region, in hindsight.
    pub pseudo_regret: Option<f64>,
    pub best_fixed_error_pct: Option<f64>,
    pub aborted: u64,
    /// Share of exploitation slots per arm, in percent.
    pub arm_selection: BTreeMap<ArmId, f64>,
}

fn pct(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

pub fn finalize_report(metrics: &RunMetrics) -> Vec<LearnerSummary> {
    (0..metrics.learners)
        .map(|i| {
            let (mut n, mut wrong, mut train, mut explore, mut exploit) = (0u64, 0u64, 0u64, 0u64, 0u64);
            let mut exp = 0.0;
            let mut realized = 0.0;
            let mut known = true;
            let mut picks: BTreeMap<ArmId, u64> = BTreeMap::new();
            for r in metrics.learner_records(i) {
                n += 1;
                wrong += u64::from(!r.correct);
                match r.phase {
                    Phase::Training => train += 1,
                    Phase::Exploration => explore += 1,
                    Phase::Exploitation => {
                        exploit += 1;
                        *picks.entry(r.arm).or_insert(0) += 1;
                    }
                }
                match (r.exp_regret, r.realized_regret) {
                    (Some(e), Some(z)) => {
                        exp += e;
                        realized += z;
                    }
                    _ => known = false,
                }
            }
            let known = known && n > 0;
            let slope = if known {
                slope_fit(&metrics.cumulative_regret(i)).ok()
            } else {
                None
            };
            LearnerSummary {
                learner: i.to_string(),
                slots: n,
                error_pct: pct(wrong, n),
                training_pct: pct(train, n),
                exploration_pct: pct(explore, n),
                exploitation_pct: pct(exploit, n),
                cum_exp_regret: known.then_some(exp),
                cum_realized_regret: known.then_some(realized),
                regret_slope: slope,
                pseudo_regret: None,
                best_fixed_error_pct: None,
                aborted: metrics.aborted.get(i).copied().unwrap_or(0),
                arm_selection: picks.into_iter().map(|(a, c)| (a, pct(c, exploit))).collect(),
            }
        })
        .collect()
}

/// Least-squares slope of `ln R(t)` against `ln t` over the last 90% of
/// the series (`t` is 1-based); nonpositive values are skipped.
pub fn slope_fit(series: &[f64]) -> Result<f64> {
    let burn_in = series.len() / 10;
    let pts: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .skip(burn_in)
        .filter(|(_, &r)| r > 0.0 && r.is_finite())
        .map(|(i, &r)| (((i + 1) as f64).ln(), r.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(Error::TooFewPoints(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::TooFewPoints(1));
    }
    Ok(sxy / sxx)
}

pub const METRICS_HEADER: &str = "t,learner,phase,arm,correct,cost,exp_regret,cum_exp_regret";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per decision. Regret columns are empty when accuracies are
/// unknown.
pub fn write_metrics_csv(path: &Path, metrics: &RunMetrics) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{METRICS_HEADER}")?;
    let mut cum = vec![0.0; metrics.learners];
    for r in &metrics.records {
        let cum_cell = match r.exp_regret {
            Some(e) => {
                cum[r.learner] += e;
                cum[r.learner].to_string()
            }
            None => String::new(),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.learner,
            r.phase,
            r.arm,
            u8::from(r.correct),
            r.cost,
            opt(r.exp_regret),
            cum_cell
        )?;
    }
    w.flush()?;
    Ok(())
}

pub const SUMMARY_HEADER: [&str; 13] = [
    "learner",
    "slots",
    "error_pct",
    "training_pct",
    "exploration_pct",
    "exploitation_pct",
    "cum_exp_regret",
    "cum_realized_regret",
    "regret_slope",
    "pseudo_regret",
    "best_fixed_error_pct",
    "aborted",
    "arm_selection",
];

pub fn summary_row(s: &LearnerSummary) -> Vec<String> {
    let arms: Vec<String> = s
        .arm_selection
        .iter()
        .map(|(a, p)| format!("{a}={p:.4}"))
        .collect();
    vec![
        s.learner.clone(),
        s.slots.to_string(),
        s.error_pct.to_string(),
        s.training_pct.to_string(),
        s.exploration_pct.to_string(),
        s.exploitation_pct.to_string(),
        opt(s.cum_exp_regret),
        opt(s.cum_realized_regret),
        opt(s.regret_slope),
        opt(s.pseudo_regret),
        opt(s.best_fixed_error_pct),
        s.aborted.to_string(),
        arms.join(";"),
    ]
}

pub fn write_summary_csv(path: &Path, rows: &[LearnerSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for s in rows {
        w.write_record(summary_row(s))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn oracle_examples() {
        let (k, v) = oracle_best_arm(&[0.9, 0.7, 0.8], &[0.3, 0.0, 0.05]).unwrap();
        assert_eq!(k, 2);
        assert_abs_diff_eq!(v, 0.75, epsilon = 1e-12);
        assert_eq!(oracle_best_arm(&[0.5, 0.6], &[0.0, 0.1]).unwrap().0, 0);
        assert!(oracle_best_arm(&[0.5], &[]).is_err());
    }

    #[test]
    fn regret_examples() {
        assert_eq!(regret_step(0.75, 0.8, 0.05, true).0, 0.0);
        assert_abs_diff_eq!(regret_step(0.75, 0.7, 0.1, true).0, 0.15, epsilon = 1e-12);
        assert_abs_diff_eq!(regret_step(0.75, 0.7, 0.1, false).1, 0.85, epsilon = 1e-12);
    }

    #[test]
    fn slope_examples() {
        let linear: Vec<f64> = (1..=5000).map(|t| t as f64).collect();
        assert_abs_diff_eq!(slope_fit(&linear).unwrap(), 1.0, epsilon = 0.01);
        let power: Vec<f64> = (1..=5000).map(|t| (t as f64).powf(0.75)).collect();
        assert_abs_diff_eq!(slope_fit(&power).unwrap(), 0.75, epsilon = 0.01);
        let log: Vec<f64> = (1..=5000).map(|t| (t as f64).ln()).collect();
        assert!(slope_fit(&log).unwrap() < 0.2);
        assert!(matches!(slope_fit(&[1.0; 5]), Err(Error::TooFewPoints(_))));
    }

    fn record(phase: Phase, correct: bool) -> SlotRecord {
        SlotRecord {
            t: 1,
            learner: 0,
            phase,
            arm: ArmId::Own(0),
            correct,
            cost: 0.0,
            exp_regret: Some(0.0),
            realized_regret: Some(0.0),
            labeled: true,
        }
    }

    #[test]
    fn report_percentages() {
        let mut m = RunMetrics::new(1);
        m.records.extend((0..10).map(|_| record(Phase::Training, true)));
        m.records.extend((0..20).map(|_| record(Phase::Exploration, false)));
        m.records.extend((0..70).map(|_| record(Phase::Exploitation, true)));
        let s = &finalize_report(&m)[0];
        assert_eq!((s.training_pct, s.exploration_pct, s.exploitation_pct), (10.0, 20.0, 70.0));
        assert_eq!(s.error_pct, 20.0);
        assert_eq!(s.arm_selection[&ArmId::Own(0)], 100.0);

        let mut all = RunMetrics::new(1);
        all.records.extend((0..5).map(|_| record(Phase::Exploitation, true)));
        let s = &finalize_report(&all)[0];
        assert_eq!((s.error_pct, s.exploration_pct), (0.0, 0.0));
    }
}
