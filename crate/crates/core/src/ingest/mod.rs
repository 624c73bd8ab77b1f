//! Haptic trace ingestion: parsing, validation, normalization and windowing.
//!
//! Every module indexes the nine signal channels in the canonical order
//! `[fx, fy, fz, vx, vy, vz, px, py, pz]`.

mod csv_io;
pub mod synthetic;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{parse_trace, parse_trace_str, trace_to_csv, write_trace, Schema};
pub use synthetic::{generate_synthetic, SyntheticKind, SyntheticSpec};

pub const NUM_FEATURES: usize = 9;
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = ["fx", "fy", "fz", "vx", "vy", "vz", "px", "py", "pz"];
pub const DEFAULT_WINDOW: usize = 10;
pub const PREDICTION_BLOCK: usize = 10;
/// One input window plus one prediction block.
pub const MIN_TRACE_LEN: usize = DEFAULT_WINDOW + PREDICTION_BLOCK + 1;

/// Relative spread below which a column is treated as constant.
const CONSTANT_COLUMN_RTOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("time column is not strictly increasing at row {row}")]
    NonMonotoneTime { row: usize },
    #[error("non-finite value in column `{column}` at row {row}")]
    NonFiniteValue { row: usize, column: String },
    #[error("unparseable value `{value}` in column `{column}` at row {row}")]
    BadNumber { row: usize, column: String, value: String },
    #[error("trace too short: {len} samples, need at least {required}")]
    TooShort { len: usize, required: usize },
    #[error("invalid trace: {0}")]
    Invalid(String),
    #[error("schema: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Human,
    Robot,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Human => "human",
            Side::Robot => "robot",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "human" | "h" => Ok(Side::Human),
            "robot" | "r" => Ok(Side::Robot),
            other => Err(format!("unknown side `{other}`")),
        }
    }
}

/// One timestamped 9-vector for one side of the teleoperation link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalSample {
    /// 1-based sample index.
    pub t: u64,
    pub side: Side,
    pub values: [f64; NUM_FEATURES],
}

impl SignalSample {
    pub fn force(&self) -> [f64; 3] {
        [self.values[0], self.values[1], self.values[2]]
    }

    pub fn velocity(&self) -> [f64; 3] {
        [self.values[3], self.values[4], self.values[5]]
    }

    pub fn position(&self) -> [f64; 3] {
        [self.values[6], self.values[7], self.values[8]]
    }
}

/// Per-feature affine map `raw = shift + scale * stored`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub shift: [f64; NUM_FEATURES],
    pub scale: [f64; NUM_FEATURES],
}

impl Default for Normalization {
    fn default() -> Self {
        Self::identity()
    }
}

impl Normalization {
    pub fn identity() -> Self {
        Self { shift: [0.0; NUM_FEATURES], scale: [1.0; NUM_FEATURES] }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn denormalize(&self, row: &[f64; NUM_FEATURES]) -> [f64; NUM_FEATURES] {
        std::array::from_fn(|k| self.shift[k] + self.scale[k] * row[k])
    }

    pub fn normalize(&self, row: &[f64; NUM_FEATURES]) -> [f64; NUM_FEATURES] {
        std::array::from_fn(|k| (row[k] - self.shift[k]) / self.scale[k])
    }

    /// `self` applied after `inner`: raw = inner(self(x)).
    fn compose(&self, inner: &Normalization) -> Normalization {
        Normalization {
            shift: std::array::from_fn(|k| inner.shift[k] + inner.scale[k] * self.shift[k]),
            scale: std::array::from_fn(|k| inner.scale[k] * self.scale[k]),
        }
    }
}

/// An ordered, validated sequence of samples from one side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    name: String,
    side: Side,
    samples: Vec<SignalSample>,
    norm: Normalization,
}

impl Trace {
    pub fn new(
        name: impl Into<String>,
        side: Side,
        samples: Vec<SignalSample>,
        norm: Normalization,
    ) -> Result<Self, IngestError> {
        if samples.is_empty() {
            return Err(IngestError::TooShort { len: 0, required: 1 });
        }
        for (i, s) in samples.iter().enumerate() {
            if let Some(k) = s.values.iter().position(|v| !v.is_finite()) {
                return Err(IngestError::NonFiniteValue { row: i + 1, column: FEATURE_NAMES[k].to_string() });
            }
            if s.side != side {
                return Err(IngestError::Invalid(format!("sample {} has side {}, trace is {side}", i + 1, s.side)));
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(IngestError::NonMonotoneTime { row: i + 1 });
            }
        }
        if let Some(k) = (0..NUM_FEATURES).find(|&k| !(norm.scale[k] > 0.0 && norm.scale[k].is_finite())) {
            return Err(IngestError::Invalid(format!("normalization scale for {} must be positive", FEATURE_NAMES[k])));
        }
        if norm.shift.iter().any(|v| !v.is_finite()) {
            return Err(IngestError::Invalid("normalization shift must be finite".into()));
        }
        Ok(Self { name: name.into(), side, samples, norm })
    }

    /// Builds a trace with sample indices `1..=rows.len()` and identity normalization.
    pub fn from_rows(name: impl Into<String>, side: Side, rows: Vec<[f64; NUM_FEATURES]>) -> Result<Self, IngestError> {
        let samples = rows
            .into_iter()
            .enumerate()
            .map(|(i, values)| SignalSample { t: i as u64 + 1, side, values })
            .collect();
        Self::new(name, side, samples, Normalization::identity())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn samples(&self) -> &[SignalSample] {
        &self.samples
    }

    pub fn norm(&self) -> &Normalization {
        &self.norm
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn rows(&self) -> Vec<[f64; NUM_FEATURES]> {
        self.samples.iter().map(|s| s.values).collect()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.values[k]).collect()
    }

    /// Contiguous sub-trace over 0-based positions `[from, to)`, keeping the normalization.
    pub fn slice(&self, from: usize, to: usize) -> Result<Trace, IngestError> {
        if from >= to || to > self.len() {
            return Err(IngestError::Invalid(format!("slice [{from}, {to}) out of bounds for {} samples", self.len())));
        }
        Trace::new(self.name.clone(), self.side, self.samples[from..to].to_vec(), self.norm)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// Standardizes every column to zero mean and unit population standard
/// deviation. Constant columns keep scale 1. The stored record composes with
/// any existing normalization so that [`denormalize`] always returns raw values.
pub fn normalize(trace: &Trace) -> Trace {
    let n = trace.len() as f64;
    let mut step = Normalization::identity();
    for k in 0..NUM_FEATURES {
        let col = trace.column(k);
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        step.shift[k] = mean;
        step.scale[k] = if sd > CONSTANT_COLUMN_RTOL * mean.abs().max(1.0) { sd } else { 1.0 };
    }
    let samples = trace
        .samples
        .iter()
        .map(|s| SignalSample { values: step.normalize(&s.values), ..*s })
        .collect();
    Trace { name: trace.name.clone(), side: trace.side, samples, norm: step.compose(&trace.norm) }
}

/// Maps stored values back to raw units and resets the record to identity.
pub fn denormalize(trace: &Trace) -> Trace {
    let samples = trace
        .samples
        .iter()
        .map(|s| SignalSample { values: trace.norm.denormalize(&s.values), ..*s })
        .collect();
    Trace { name: trace.name.clone(), side: trace.side, samples, norm: Normalization::identity() }
}

/// A contiguous lag window of samples in canonical feature order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalWindow {
    /// Sample index (`t`) of the first row.
    pub start: u64,
    pub values: Vec<[f64; NUM_FEATURES]>,
}

impl SignalWindow {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row-major flattening restricted to `features`.
    pub fn flatten(&self, features: &[usize]) -> Vec<f64> {
        encode_window(&self.values, features)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowPair {
    pub input: SignalWindow,
    pub target: SignalWindow,
}

/// Row-major flattening of `rows` restricted to the given feature columns.
pub fn encode_window<R: AsRef<[f64]>>(rows: &[R], features: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * features.len());
    for r in rows {
        let r = r.as_ref();
        out.extend(features.iter().map(|&k| r[k]));
    }
    out
}

/// Input windows of length `n` paired with the following prediction block.
pub fn make_windows(trace: &Trace, n: usize, stride: usize) -> Result<Vec<WindowPair>, IngestError> {
    make_windows_with_block(trace, n, PREDICTION_BLOCK, stride)
}

pub fn make_windows_with_block(
    trace: &Trace,
    n: usize,
    block: usize,
    stride: usize,
) -> Result<Vec<WindowPair>, IngestError> {
    if n == 0 || block == 0 || stride == 0 {
        return Err(IngestError::Invalid("window length, block and stride must be at least 1".into()));
    }
    let required = n + block;
    if trace.len() < required {
        return Err(IngestError::TooShort { len: trace.len(), required });
    }
    let s = trace.samples();
    let window = |from: usize, len: usize| SignalWindow {
        start: s[from].t,
        values: s[from..from + len].iter().map(|x| x.values).collect(),
    };
    Ok((0..=trace.len() - required)
        .step_by(stride)
        .map(|i| WindowPair { input: window(i, n), target: window(i + n, block) })
        .collect())
}

/// One-step regression pairs: each window of `n` rows (restricted to
/// `features`) with the row that follows it.
pub fn one_step_pairs<R: AsRef<[f64]>>(rows: &[R], n: usize, features: &[usize]) -> (Vec<Vec<f64>>, Vec<usize>) {
    if rows.len() <= n {
        return (Vec::new(), Vec::new());
    }
    (n..rows.len()).map(|j| (encode_window(&rows[j - n..j], features), j)).unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(len: usize) -> Trace {
        let rows = (0..len).map(|i| std::array::from_fn(|k| (i * (k + 1)) as f64)).collect();
        Trace::from_rows("ramp", Side::Human, rows).unwrap()
    }

    #[test]
    fn constant_column_keeps_unit_scale() {
        let rows = (0..30).map(|i| {
            let mut r = [5.0; NUM_FEATURES];
            r[1] = i as f64;
            r
        });
        let t = Trace::from_rows("c", Side::Human, rows.collect()).unwrap();
        let n = normalize(&t);
        assert_eq!(n.norm().shift[0], 5.0);
        assert_eq!(n.norm().scale[0], 1.0);
        assert!(n.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_point_column_uses_population_sd() {
        let t = Trace::from_rows("p", Side::Human, vec![[0.0; 9], [2.0; 9]]).unwrap();
        let n = normalize(&t);
        assert_eq!(n.norm().shift[3], 1.0);
        assert_eq!(n.norm().scale[3], 1.0);
        assert_eq!(n.column(3), vec![-1.0, 1.0]);
    }

    #[test]
    fn worked_example_has_one_pair() {
        let pairs = make_windows(&ramp(20), 10, 10).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].input.start, 1);
        assert_eq!(pairs[0].target.start, 11);
        assert_eq!(pairs[0].target.values.last().unwrap()[0], 19.0);
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(&ramp(30), 10, 10).unwrap().len(), 2);
        assert!(matches!(make_windows(&ramp(19), 10, 10), Err(IngestError::TooShort { len: 19, required: 20 })));
    }

    #[test]
    fn rejects_non_finite_and_unsorted() {
        let mut rows = vec![[0.0; 9]; 3];
        rows[1][4] = f64::NAN;
        assert!(matches!(
            Trace::from_rows("x", Side::Robot, rows),
            Err(IngestError::NonFiniteValue { row: 2, .. })
        ));
        let samples = vec![
            SignalSample { t: 2, side: Side::Human, values: [0.0; 9] },
            SignalSample { t: 1, side: Side::Human, values: [0.0; 9] },
        ];
        assert!(matches!(
            Trace::new("x", Side::Human, samples, Normalization::identity()),
            Err(IngestError::NonMonotoneTime { row: 2 })
        ));
    }

    #[test]
    fn flatten_is_row_major_over_subset() {
        let w = SignalWindow { start: 1, values: vec![std::array::from_fn(|k| k as f64), std::array::from_fn(|k| 10.0 + k as f64)] };
        assert_eq!(w.flatten(&[0, 8]), vec![0.0, 8.0, 10.0, 18.0]);
    }

    #[test]
    fn one_step_pairs_target_follows_window() {
        let rows = ramp(15).rows();
        let (x, j) = one_step_pairs(&rows, 10, &[0]);
        assert_eq!(x.len(), 5);
        assert_eq!(j[0], 10);
        assert_eq!(x[0], (0..10).map(|i| i as f64).collect::<Vec<_>>());
    }
}
