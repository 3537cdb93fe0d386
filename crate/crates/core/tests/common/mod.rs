#![allow(dead_code)]

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use coopstream::config::RunConfig;
use coopstream::sim::{self, RunOutput, SimOptions};

pub fn synthetic(amplitude: f64, frequency: &[f64], phase: f64) -> Value {
    json!({"synthetic": {"amplitude": amplitude, "frequency": frequency, "phase": phase}})
}

/// Two learners with two sinusoidal functions each on `[0, 1]`.
pub fn two_by_two(policy: &str, preset: &str, horizon: u64) -> Value {
    json!({
        "horizon": horizon,
        "policy": policy,
        "preset": preset,
        "environment": {"kind": "synthetic", "dim": 1},
        "learners": [
            {"functions": [synthetic(0.3, &[1.0], 0.0), synthetic(0.3, &[1.0], 0.5)]},
            {"functions": [synthetic(0.25, &[1.0], 0.25), synthetic(0.2, &[2.0], 0.0)]}
        ]
    })
}

pub fn config(v: &Value) -> RunConfig {
    RunConfig::from_json(&v.to_string()).expect("valid config")
}

pub fn run(v: &Value, seed: u64) -> RunOutput {
    sim::run(&config(v), seed, SimOptions::default()).expect("run succeeds")
}

pub fn run_with_events(v: &Value, seed: u64) -> RunOutput {
    sim::run(&config(v), seed, SimOptions { record_events: true }).expect("run succeeds")
}

/// Writes `rows` lines in the 42-column KDD Cup 1999 layout. This is a
/// generated fixture, not the real data set: labels come in bursts (a
/// sticky two-state chain) and `src_bytes` is weakly informative.
pub fn write_kdd_fixture(path: &Path, rows: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
    let protocols = ["tcp", "udp", "icmp"];
    let services = ["http", "smtp", "ecr_i", "private", "ftp_data"];
    let flags = ["SF", "S0", "REJ"];
    let attacks = ["smurf.", "neptune.", "back."];
    let mut attack = false;
    for _ in 0..rows {
        if rng.random_bool(0.03) {
            attack = !attack;
        }
        let mut cols: Vec<String> = Vec::with_capacity(42);
        cols.push(rng.random_range(0..50).to_string());
        cols.push(protocols[rng.random_range(0..3)].to_string());
        cols.push(services[rng.random_range(0..5)].to_string());
        cols.push(flags[rng.random_range(0..3)].to_string());
        let src_bytes = if attack && rng.random_bool(0.7) {
            rng.random_range(500..1100)
        } else {
            rng.random_range(0..2000)
        };
        cols.push(src_bytes.to_string());
        for _ in 5..41 {
            cols.push(format!("{:.2}", rng.random::<f64>()));
        }
        let label = if attack {
            attacks[rng.random_range(0..3)]
        } else {
            "normal."
        };
        cols.push(label.to_string());
        writeln!(f, "{}", cols.join(",")).unwrap();
    }
    f.flush().unwrap();
}

/// Four learners with two functions each, streaming a KDD-format file with
/// the previous label as context.
pub fn kdd_config(path: &Path, policy: &str, m_t: Option<u32>, train: usize, test: usize) -> Value {
    let mut v = json!({
        "horizon": test,
        "policy": policy,
        "preset": "z1",
        "environment": {
            "kind": "dataset",
            "path": path,
            "schema": "kdd99",
            "context": "prev_label",
            "train_rows": train,
            "test_rows": test,
            "correlation": "best"
        },
        "learners": [
            {"functions": ["naive_bayes", {"logistic": {"rate": 0.1}}]},
            {"functions": ["constant_one", "stump"]},
            {"functions": ["naive_bayes", "stump"]},
            {"functions": ["stump", "constant_zero"]}
        ]
    });
    if let Some(m) = m_t {
        v["m_T"] = m.into();
    }
    v
}
