//! Context streams, synthetic worlds and CSV datasets.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arms::SyntheticArm;
use crate::context_space::Context;
use crate::error::{Error, Result};

/// How context points are produced for one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalKind {
    /// Independent uniform draws.
    #[default]
    Iid,
    /// A random permutation of a jittered grid whose points are pairwise at
    /// least `T^(-1/d)` apart.
    Worst,
    /// Uniform draws inside one random cube of level `ceil(log2(T) / p) + 1`.
    Best {
        #[serde(default = "default_best_p")]
        p: f64,
    },
    /// A fixed list of points, cycled.
    Trace { points: Vec<Vec<f64>> },
}

fn default_best_p() -> f64 {
    4.0
}

/// Which learners receive a context in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    /// Every learner draws its own context.
    #[default]
    Independent,
    /// All learners receive the same context.
    Best,
    /// Only the designated learner receives contexts.
    Worst { learner: usize },
}

/// Generator of one stream of contexts.
#[derive(Debug, Clone)]
pub struct ArrivalStream {
    dim: usize,
    kind: StreamKind,
    rng: ChaCha8Rng,
    next: usize,
}

#[derive(Debug, Clone)]
enum StreamKind {
    Iid,
    Points(Vec<Context>),
    Cube { level: u32, index: Vec<u64> },
}

impl ArrivalStream {
    /// `count` is the number of points the stream must supply; the
    /// worst-case grid is sized for it.
    pub fn new(kind: &ArrivalKind, dim: usize, count: u64, mut rng: ChaCha8Rng) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("environment.dim", "must be at least 1"));
        }
        let kind = match kind {
            ArrivalKind::Iid => StreamKind::Iid,
            ArrivalKind::Worst => StreamKind::Points(jittered_grid(dim, count.max(1), &mut rng)?),
            ArrivalKind::Best { p } => {
                if !(*p > 0.0) {
                    return Err(Error::config("environment.arrival.best.p", "must be positive"));
                }
                let level = best_case_level(count, *p);
                let index = (0..dim).map(|_| rng.random_range(0..1u64 << level)).collect();
                StreamKind::Cube { level, index }
            }
            ArrivalKind::Trace { points } => {
                if points.is_empty() {
                    return Err(Error::config("environment.arrival.trace", "is empty"));
                }
                let pts = points
                    .iter()
                    .map(|p| {
                        let c = Context::new(p.clone())?;
                        c.check_dim(dim)?;
                        Ok(c)
                    })
                    .collect::<Result<Vec<_>>>()?;
                StreamKind::Points(pts)
            }
        };
        Ok(ArrivalStream {
            dim,
            kind,
            rng,
            next: 0,
        })
    }

    pub fn next_context(&mut self) -> Context {
        match &self.kind {
            StreamKind::Iid => {
                let coords = (0..self.dim).map(|_| self.rng.random::<f64>()).collect();
                Context::new(coords).expect("unit draws lie in [0, 1)")
            }
            StreamKind::Points(points) => {
                let c = points[self.next % points.len()].clone();
                self.next += 1;
                c
            }
            StreamKind::Cube { level, index } => {
                let side = (-(*level as f64)).exp2();
                let coords = index
                    .iter()
                    .map(|&i| {
                        // u in (0, 1] keeps the point inside the half-open cube
                        let u = 1.0 - self.rng.random::<f64>();
                        ((i as f64 + u) * side).min(1.0)
                    })
                    .collect();
                Context::new(coords).expect("cube points lie in [0, 1]")
            }
        }
    }
}

/// Level `ceil(log2(T) / p) + 1` used by the best-case arrival process.
pub fn best_case_level(horizon: u64, p: f64) -> u32 {
    ((horizon.max(1) as f64).log2() / p).ceil() as u32 + 1
}

/// `count` points in `[0,1]^d`, pairwise separated by at least
/// `count^(-1/d)`: grid points with spacing `g = 1/(n-1)`, jittered by at
/// most `(g - s)/2` per axis, taken in random order.
pub fn jittered_grid(dim: usize, count: u64, rng: &mut ChaCha8Rng) -> Result<Vec<Context>> {
    if count == 1 {
        return Ok(vec![Context::new(vec![0.5; dim])?]);
    }
    let s = (count as f64).powf(-1.0 / dim as f64);
    let mut n = (count as f64).powf(1.0 / dim as f64).ceil() as u64;
    while n.checked_pow(dim as u32).is_some_and(|total| total < count) {
        n += 1;
    }
    let n = n.max(2);
    let total = n
        .checked_pow(dim as u32)
        .filter(|&t| t <= 1 << 26)
        .ok_or_else(|| Error::config("environment.arrival", "worst-case grid is too large"))?;
    let g = 1.0 / (n - 1) as f64;
    let slack = ((g - s) / 2.0).max(0.0);
    let chosen = index::sample(rng, total as usize, count as usize);
    let mut out = Vec::with_capacity(count as usize);
    for flat in chosen.iter() {
        let mut rem = flat as u64;
        let mut coords = vec![0.0; dim];
        for c in coords.iter_mut().rev() {
            let i = rem % n;
            rem /= n;
            let jitter = if slack > 0.0 {
                rng.random_range(-slack..=slack)
            } else {
                0.0
            };
            *c = (i as f64 * g + jitter).clamp(0.0, 1.0);
        }
        out.push(Context::new(coords)?);
    }
    out.shuffle(rng);
    Ok(out)
}

/// Smallest pairwise Euclidean distance (quadratic; for audits).
pub fn min_pairwise_distance(points: &[Context]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d: f64 = a
                .coords()
                .iter()
                .zip(b.coords())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            best = best.min(d);
        }
    }
    best
}

/// Contexts for every learner, slot by slot.
#[derive(Debug, Clone)]
pub struct ContextSource {
    learners: usize,
    correlation: Correlation,
    streams: Vec<ArrivalStream>,
}

impl ContextSource {
    /// `make_rng(stream)` supplies the generator of stream `stream`: learner
    /// `i` for independent arrivals, `0` for a shared stream.
    pub fn new(
        kind: &ArrivalKind,
        correlation: Correlation,
        learners: usize,
        dim: usize,
        count: u64,
        mut make_rng: impl FnMut(usize) -> ChaCha8Rng,
    ) -> Result<Self> {
        let streams = match correlation {
            Correlation::Independent => (0..learners)
                .map(|i| ArrivalStream::new(kind, dim, count, make_rng(i)))
                .collect::<Result<_>>()?,
            Correlation::Best => vec![ArrivalStream::new(kind, dim, count, make_rng(0))?],
            Correlation::Worst { learner } => {
                if learner >= learners {
                    return Err(Error::config(
                        "environment.correlation.worst.learner",
                        format!("learner {learner} does not exist"),
                    ));
                }
                vec![ArrivalStream::new(kind, dim, count, make_rng(learner))?]
            }
        };
        Ok(ContextSource {
            learners,
            correlation,
            streams,
        })
    }

    pub fn generate(&mut self) -> Vec<Option<Context>> {
        match self.correlation {
            Correlation::Independent => self.streams.iter_mut().map(|s| Some(s.next_context())).collect(),
            Correlation::Best => {
                let x = self.streams[0].next_context();
                vec![Some(x); self.learners]
            }
            Correlation::Worst { learner } => {
                let mut out = vec![None; self.learners];
                out[learner] = Some(self.streams[0].next_context());
                out
            }
        }
    }
}

/// Probability that the true label is 1 at a context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eta {
    Constant(f64),
    /// `eta(x) = x[axis]`.
    Coordinate(usize),
}

impl Default for Eta {
    fn default() -> Self {
        Eta::Constant(0.5)
    }
}

impl Eta {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            Eta::Constant(c) if !(0.0..=1.0).contains(&c) => {
                Err(Error::config("environment.eta", format!("{c} outside [0, 1]")))
            }
            Eta::Coordinate(a) if a >= dim => Err(Error::config(
                "environment.eta",
                format!("axis {a} out of range for dimension {dim}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn at(&self, x: &Context) -> f64 {
        match *self {
            Eta::Constant(c) => c,
            Eta::Coordinate(a) => x.coord(a),
        }
    }
}

pub fn draw_label<R: Rng + ?Sized>(eta: &Eta, x: &Context, rng: &mut R) -> u8 {
    u8::from(rng.random_bool(eta.at(x)))
}

/// Known accuracy surfaces of every learner's functions.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub functions: Vec<Vec<SyntheticArm>>,
    pub eta: Eta,
    pub horizon: u64,
}

impl SyntheticWorld {
    /// Normalized time `t / T` used by drifting arms.
    pub fn time(&self, t: u64) -> f64 {
        if self.horizon == 0 {
            0.0
        } else {
            t as f64 / self.horizon as f64
        }
    }

    pub fn accuracy(&self, learner: usize, function: usize, x: &Context, t: u64) -> Result<f64> {
        self.functions[learner][function].accuracy_at(x.coords(), self.time(t))
    }

    /// Accuracy of a learner's best function at `x`.
    pub fn best_accuracy(&self, learner: usize, x: &Context, t: u64) -> Result<(usize, f64)> {
        let mut best = (0, f64::NEG_INFINITY);
        for k in 0..self.functions[learner].len() {
            let a = self.accuracy(learner, k, x, t)?;
            if a > best.1 {
                best = (k, a);
            }
        }
        Ok(best)
    }
}

/// One labeled instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub features: Vec<f64>,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Row>,
    pub provenance: String,
}

impl Dataset {
    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::config("context.feature", format!("unknown feature `{name}`")))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    #[default]
    Ordinal,
    OneHot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UnknownCategory {
    #[default]
    Error,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CategoricalSpec {
    #[serde(default)]
    pub encoding: Encoding,
    /// Known categories; when absent they are learned in order of first
    /// appearance and no value is unknown.
    #[serde(default)]
    pub categories: Option<Vec<String>>,
    #[serde(default)]
    pub unknown: UnknownCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMap {
    /// `normal.` is 0, every attack type is 1.
    Kdd,
    /// Numeric 0/1.
    Binary,
    /// Listed values are 1, everything else 0.
    Positive(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default)]
    pub columns: Option<Vec<String>>,
    #[serde(default)]
    pub has_header: bool,
    /// Label column index; the last column by default.
    #[serde(default)]
    pub label_column: Option<usize>,
    pub label_map: LabelMap,
    #[serde(default)]
    pub categorical: HashMap<String, CategoricalSpec>,
}

const KDD_COLUMNS: [&str; 41] = [
    "duration",
    "protocol_type",
    "service",
    "flag",
    "src_bytes",
    "dst_bytes",
    "land",
    "wrong_fragment",
    "urgent",
    "hot",
    "num_failed_logins",
    "logged_in",
    "num_compromised",
    "root_shell",
    "su_attempted",
    "num_root",
    "num_file_creations",
    "num_shells",
    "num_access_files",
    "num_outbound_cmds",
    "is_host_login",
    "is_guest_login",
    "count",
    "srv_count",
    "serror_rate",
    "srv_serror_rate",
    "rerror_rate",
    "srv_rerror_rate",
    "same_srv_rate",
    "diff_srv_rate",
    "srv_diff_host_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate",
    "dst_host_srv_serror_rate",
    "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
];

impl Schema {
    /// The 1999 KDD Cup layout: 41 features, then the connection type.
    pub fn kdd99() -> Self {
        let mut columns: Vec<String> = KDD_COLUMNS.iter().map(|s| s.to_string()).collect();
        columns.push("label".into());
        let categorical = ["protocol_type", "service", "flag"]
            .iter()
            .map(|c| (c.to_string(), CategoricalSpec::default()))
            .collect();
        Schema {
            columns: Some(columns),
            has_header: false,
            label_column: None,
            label_map: LabelMap::Kdd,
            categorical,
        }
    }

    /// Numeric features with a header row and a trailing 0/1 label, as
    /// written by [`write_csv`].
    pub fn numeric() -> Self {
        Schema {
            columns: None,
            has_header: true,
            label_column: None,
            label_map: LabelMap::Binary,
            categorical: HashMap::new(),
        }
    }

    fn map_label(&self, raw: &str, line: usize) -> Result<u8> {
        let raw = raw.trim();
        match &self.label_map {
            LabelMap::Kdd => Ok(u8::from(raw != "normal." && raw != "normal")),
            LabelMap::Positive(values) => Ok(u8::from(values.iter().any(|v| v == raw))),
            LabelMap::Binary => match raw.parse::<f64>() {
                Ok(0.0) => Ok(0),
                Ok(1.0) => Ok(1),
                _ => Err(Error::MalformedRow {
                    line,
                    message: format!("label `{raw}` is not 0 or 1"),
                }),
            },
        }
    }
}

/// Reads a comma-separated file. Stream order is preserved; an empty file
/// gives an empty dataset.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::MissingDataset(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(File::open(path)?));
    let header: Option<Vec<String>> = if schema.has_header {
        let h = reader.headers()?;
        if h.is_empty() {
            None
        } else {
            Some(h.iter().map(str::to_string).collect())
        }
    } else {
        None
    };
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec.get(0).is_some_and(str::is_empty) {
            continue;
        }
        records.push((line, rec));
    }
    let width = match (&schema.columns, &header, records.first()) {
        (Some(c), _, _) => c.len(),
        (None, Some(h), _) => h.len(),
        (None, None, Some((_, r))) => r.len(),
        (None, None, None) => {
            return Ok(Dataset {
                provenance: path.display().to_string(),
                ..Dataset::default()
            })
        }
    };
    if width < 2 {
        return Err(Error::config("schema", "need at least one feature and a label"));
    }
    let names: Vec<String> = schema
        .columns
        .clone()
        .or(header)
        .unwrap_or_else(|| (0..width).map(|i| format!("col{i}")).collect());
    let label_col = schema.label_column.unwrap_or(width - 1);
    if label_col >= width {
        return Err(Error::config("schema.label_column", "out of range"));
    }
    for name in schema.categorical.keys() {
        if !names.contains(name) {
            return Err(Error::config(
                format!("schema.categorical.{name}"),
                "no such column",
            ));
        }
    }

    // categories per categorical column
    let mut categories: HashMap<usize, Vec<String>> = HashMap::new();
    for (col, name) in names.iter().enumerate() {
        if let Some(spec) = schema.categorical.get(name) {
            let cats = match &spec.categories {
                Some(c) => c.clone(),
                None => {
                    let mut seen: Vec<String> = Vec::new();
                    for (_, rec) in &records {
                        if let Some(v) = rec.get(col) {
                            if !seen.iter().any(|s| s == v) {
                                seen.push(v.to_string());
                            }
                        }
                    }
                    seen
                }
            };
            categories.insert(col, cats);
        }
    }

    let mut feature_names = Vec::new();
    for (col, name) in names.iter().enumerate() {
        if col == label_col {
            continue;
        }
        match (schema.categorical.get(name), categories.get(&col)) {
            (Some(spec), Some(cats)) if spec.encoding == Encoding::OneHot => {
                feature_names.extend(cats.iter().map(|c| format!("{name}={c}")));
                if spec.unknown == UnknownCategory::Other && spec.categories.is_some() {
                    feature_names.push(format!("{name}=__other__"));
                }
            }
            _ => feature_names.push(name.clone()),
        }
    }

    let mut rows = Vec::with_capacity(records.len());
    for (line, rec) in &records {
        if rec.len() != width {
            return Err(Error::MalformedRow {
                line: *line,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let mut features = Vec::with_capacity(feature_names.len());
        for (col, name) in names.iter().enumerate() {
            if col == label_col {
                continue;
            }
            let raw = &rec[col];
            match schema.categorical.get(name) {
                Some(spec) => {
                    let cats = &categories[&col];
                    let pos = cats.iter().position(|c| c == raw);
                    let pos = match (pos, spec.unknown) {
                        (Some(p), _) => p,
                        (None, UnknownCategory::Other) => cats.len(),
                        (None, UnknownCategory::Error) => {
                            return Err(Error::MalformedRow {
                                line: *line,
                                message: format!("unknown category `{raw}` in column `{name}`"),
                            })
                        }
                    };
                    match spec.encoding {
                        Encoding::Ordinal => features.push(pos as f64),
                        Encoding::OneHot => {
                            let slots = cats.len() + usize::from(spec.unknown == UnknownCategory::Other && spec.categories.is_some());
                            features.extend((0..slots).map(|i| f64::from(u8::from(i == pos))));
                        }
                    }
                }
                None => features.push(raw.parse::<f64>().map_err(|_| Error::MalformedRow {
                    line: *line,
                    message: format!("column `{name}`: `{raw}` is not a number"),
                })?),
            }
        }
        let label = schema.map_label(&rec[label_col], *line)?;
        rows.push(Row { features, label });
    }
    Ok(Dataset {
        feature_names,
        rows,
        provenance: path.display().to_string(),
    })
}

/// Writes numeric features and a 0/1 label with a header row.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = dataset.feature_names.clone();
    header.push("label".into());
    w.write_record(&header)?;
    for row in &dataset.rows {
        let mut rec: Vec<String> = row.features.iter().map(|v| v.to_string()).collect();
        rec.push(row.label.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes raw text lines (used to build fixtures).
pub fn write_lines(path: &Path, lines: &[&str]) -> Result<()> {
    let mut f = File::create(path)?;
    for l in lines {
        writeln!(f, "{l}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// `log1p`, then min-max.
    #[default]
    Log1p,
    MinMax,
}

/// Maps one feature into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub scaling: Scaling,
    pub min: f64,
    pub max: f64,
}

impl FeatureScaler {
    pub fn fit(values: impl IntoIterator<Item = f64>, scaling: Scaling) -> Self {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = Self::pre(scaling, v);
            min = min.min(v);
            max = max.max(v);
        }
        FeatureScaler { scaling, min, max }
    }

    fn pre(scaling: Scaling, v: f64) -> f64 {
        match scaling {
            Scaling::Log1p => v.max(0.0).ln_1p(),
            Scaling::MinMax => v,
        }
    }

    /// Constant (or empty) columns map to 0.5.
    pub fn transform(&self, v: f64) -> f64 {
        let range = self.max - self.min;
        if !(range > 0.0) || !range.is_finite() {
            return 0.5;
        }
        ((Self::pre(self.scaling, v) - self.min) / range).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedAxis {
    /// The previous slot's true label.
    PrevLabel,
    /// Normalized time `t / T`.
    Time,
}

/// One context coordinate extracted from a data stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ContextAxis {
    Named(NamedAxis),
    Feature {
        feature: String,
        #[serde(default)]
        scaling: Scaling,
    },
}

/// A single axis or a list of axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ContextSpec {
    One(ContextAxis),
    Many(Vec<ContextAxis>),
}

impl ContextSpec {
    pub fn axes(&self) -> Vec<ContextAxis> {
        match self {
            ContextSpec::One(a) => vec![a.clone()],
            ContextSpec::Many(v) => v.clone(),
        }
    }
}

/// Resolved context axes with fitted scalers.
#[derive(Debug, Clone, PartialEq)]
pub enum ContextMode {
    PrevLabel,
    Time { horizon: u64 },
    Feature { index: usize, scaler: FeatureScaler },
}

impl ContextMode {
    /// Resolves `axis` against `dataset`, fitting scalers on all its rows.
    pub fn resolve(axis: &ContextAxis, dataset: &Dataset, horizon: u64) -> Result<Self> {
        Ok(match axis {
            ContextAxis::Named(NamedAxis::PrevLabel) => ContextMode::PrevLabel,
            ContextAxis::Named(NamedAxis::Time) => ContextMode::Time { horizon },
            ContextAxis::Feature { feature, scaling } => {
                let index = dataset.feature_index(feature)?;
                let scaler =
                    FeatureScaler::fit(dataset.rows.iter().map(|r| r.features[index]), *scaling);
                ContextMode::Feature { index, scaler }
            }
        })
    }

    /// Coordinate for `row` at slot `t`, given the previous slot's label
    /// (`None` in the first slot, giving 0).
    pub fn value(&self, row: &Row, t: u64, prev_label: Option<u8>) -> f64 {
        match self {
            ContextMode::PrevLabel => prev_label.map_or(0.0, f64::from),
            ContextMode::Time { horizon } => {
                if *horizon == 0 {
                    0.0
                } else {
                    (t as f64 / *horizon as f64).clamp(0.0, 1.0)
                }
            }
            ContextMode::Feature { index, scaler } => scaler.transform(row.features[*index]),
        }
    }
}

pub fn context_from_row(
    modes: &[ContextMode],
    row: &Row,
    t: u64,
    prev_label: Option<u8>,
) -> Result<Context> {
    Context::new(modes.iter().map(|m| m.value(row, t, prev_label)).collect())
}
