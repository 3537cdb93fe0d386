use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use rayon::prelude::*;

use coopstream::config::RunConfig;
use coopstream::context_space::Context;
use coopstream::metrics::{summary_row, LearnerSummary, SUMMARY_HEADER};
use coopstream::sim::{self, SimOptions};
use coopstream::{Error, Result};

#[derive(Parser)]
#[command(name = "coopstream", version, about = "Cooperative contextual bandit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seed and write metrics.csv, summary.csv and manifest.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run several seeds in parallel and aggregate their summaries.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Inclusive range `a..b` or a comma-separated list.
        #[arg(long, default_value = "1..10")]
        seeds: String,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Dump the best arm and its net value on an evenly spaced grid.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        /// Points per axis for d = 1; the total point budget otherwise.
        #[arg(long, default_value_t = 1000)]
        grid: usize,
        #[arg(long, default_value_t = 0)]
        learner: usize,
        /// Slot at which drifting accuracies are evaluated (defaults to T).
        #[arg(long)]
        t: Option<u64>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge every summary.csv under a directory into report.csv.
    Report { dir: PathBuf },
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let bad = || Error::config("seeds", format!("cannot parse `{spec}`"));
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

fn cmd_run(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = RunConfig::from_path(config)?;
    let seed = seed.unwrap_or(cfg.seed);
    let output = sim::run(&cfg, seed, SimOptions::default())?;
    sim::write_outputs(out, &cfg, &output)?;
    info!("seed {seed}: {} decisions written to {}", output.metrics.records.len(), out.display());
    Ok(())
}

fn numeric_columns(s: &LearnerSummary) -> Vec<Option<f64>> {
    vec![
        Some(s.slots as f64),
        Some(s.error_pct),
        Some(s.training_pct),
        Some(s.exploration_pct),
        Some(s.exploitation_pct),
        s.cum_exp_regret,
        s.cum_realized_regret,
        s.regret_slope,
        s.pseudo_regret,
        s.best_fixed_error_pct,
        Some(s.aborted as f64),
    ]
}

fn cmd_sweep(config: &Path, seeds: &str, out: &Path) -> Result<()> {
    let cfg = RunConfig::from_path(config)?;
    let seeds = parse_seeds(seeds)?;
    let runs: Vec<(u64, Vec<LearnerSummary>)> = seeds
        .par_iter()
        .map(|&seed| {
            let output = sim::run(&cfg, seed, SimOptions::default())?;
            sim::write_outputs(&out.join(format!("seed_{seed}")), &cfg, &output)?;
            let mut rows = output.summaries;
            rows.extend(output.ensemble);
            Ok((seed, rows))
        })
        .collect::<Result<_>>()?;

    let mut w = csv::Writer::from_path(out.join("sweep_summary.csv"))?;
    let mut header = vec!["seed"];
    header.extend(SUMMARY_HEADER);
    w.write_record(&header)?;
    for (seed, rows) in &runs {
        for s in rows {
            let mut rec = vec![seed.to_string()];
            rec.extend(summary_row(s));
            w.write_record(&rec)?;
        }
    }
    // mean and sample std per learner over the seeds
    let learners: Vec<String> = runs[0].1.iter().map(|s| s.learner.clone()).collect();
    for (li, name) in learners.iter().enumerate() {
        let cols: Vec<Vec<Option<f64>>> = runs.iter().map(|(_, r)| numeric_columns(&r[li])).collect();
        let mut mean_row = vec!["mean".to_string(), name.clone()];
        let mut std_row = vec!["std".to_string(), name.clone()];
        for c in 0..cols[0].len() {
            let vals: Vec<f64> = cols.iter().filter_map(|r| r[c]).collect();
            if vals.is_empty() {
                mean_row.push(String::new());
                std_row.push(String::new());
                continue;
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = if vals.len() > 1 {
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            mean_row.push(mean.to_string());
            std_row.push(var.sqrt().to_string());
        }
        mean_row.push(String::new());
        std_row.push(String::new());
        w.write_record(&mean_row)?;
        w.write_record(&std_row)?;
    }
    w.flush()?;
    info!("{} seeds aggregated into {}", runs.len(), out.display());
    Ok(())
}

fn grid_points(dim: usize, budget: usize) -> Result<Vec<Context>> {
    let per_axis = if dim == 1 {
        budget
    } else {
        ((budget as f64).powf(1.0 / dim as f64).floor() as usize).max(1)
    };
    let total = per_axis.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut coords = Vec::with_capacity(dim);
            for _ in 0..dim {
                coords.push(((idx % per_axis) as f64 + 0.5) / per_axis as f64);
                idx /= per_axis;
            }
            Context::new(coords)
        })
        .collect()
}

fn cmd_oracle(config: &Path, grid: usize, learner: usize, t: Option<u64>, out: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::from_path(config)?;
    let points = grid_points(cfg.environment_dim(), grid)?;
    let map = sim::oracle_map(&cfg, learner, &points, t.unwrap_or(cfg.horizon))?;
    let sink: Box<dyn std::io::Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["x", "best_arm", "net_value"])?;
    for p in map {
        let x: Vec<String> = p.x.coords().iter().map(|c| c.to_string()).collect();
        w.write_record([x.join(";"), p.arm.to_string(), p.net_value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn collect_summaries(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let path = e.path();
        if path.is_dir() {
            collect_summaries(&path, found)?;
        } else if path.file_name().is_some_and(|n| n == "summary.csv") {
            found.push(path);
        }
    }
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<()> {
    if !dir.is_dir() {
        return Err(Error::MissingDataset(dir.to_path_buf()));
    }
    let mut files = Vec::new();
    collect_summaries(dir, &mut files)?;
    let mut w = csv::Writer::from_path(dir.join("report.csv"))?;
    let mut header = vec!["source"];
    header.extend(SUMMARY_HEADER);
    w.write_record(&header)?;
    for f in &files {
        let source = f
            .parent()
            .and_then(|p| p.strip_prefix(dir).ok())
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        let mut r = csv::Reader::from_path(f)?;
        for rec in r.records() {
            let rec = rec?;
            let mut row = vec![source.clone()];
            row.extend(rec.iter().map(str::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    info!("merged {} summaries", files.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, seed, out } => cmd_run(config, *seed, out),
        Command::Sweep { config, seeds, out } => cmd_sweep(config, seeds, out),
        Command::Oracle {
            config,
            grid,
            learner,
            t,
            out,
        } => cmd_oracle(config, *grid, *learner, *t, out.as_deref()),
        Command::Report { dir } => cmd_report(dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } | Error::Json(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
