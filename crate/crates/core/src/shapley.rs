//! Shapley feature values over a cached characteristic function.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use once_cell::sync::OnceCell;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::range_accuracy;
use crate::gp::{FitOptions, GpModel, Hyperparams};
use crate::ingest::{Side, Trace, FEATURE_NAMES, NUM_FEATURES};
use crate::util;

/// Upper bound on players; the memo table holds `2^M` entries.
pub const MAX_FEATURES: usize = 20;
pub const TRANSFER_TOL: f64 = 1e-10;
pub const NULL_TOL: f64 = 1e-12;
pub const SYMMETRY_TOL: f64 = 1e-12;
pub const LINEARITY_TOL: f64 = 1e-10;
pub const DOMINANCE_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ShapleyError {
    #[error("{m} features exceeds the limit of {max}")]
    TooManyFeatures { m: usize, max: usize },
    #[error("evaluator failed on subset {subset}: {reason}")]
    EvaluatorFailure { subset: FeatureSubset, reason: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSubset {
    mask: u32,
    m: usize,
}

impl FeatureSubset {
    pub fn new(mask: u32, m: usize) -> Result<Self, ShapleyError> {
        if m > MAX_FEATURES {
            return Err(ShapleyError::TooManyFeatures { m, max: MAX_FEATURES });
        }
        if u64::from(mask) >= 1u64 << m {
            return Err(ShapleyError::InvalidArgument(format!("mask {mask:#x} has bits beyond {m} features")));
        }
        Ok(Self { mask, m })
    }

    pub fn empty(m: usize) -> Self {
        Self { mask: 0, m }
    }

    pub fn full(m: usize) -> Self {
        Self { mask: ((1u64 << m) - 1) as u32, m }
    }

    pub fn from_indices(indices: &[usize], m: usize) -> Result<Self, ShapleyError> {
        let mut mask = 0u32;
        for &i in indices {
            if i >= m {
                return Err(ShapleyError::InvalidArgument(format!("feature {i} out of range for {m} features")));
            }
            mask |= 1 << i;
        }
        Self::new(mask, m)
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn n_features(&self) -> usize {
        self.m
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.m && self.mask & (1 << i) != 0
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn with(&self, i: usize) -> Self {
        Self { mask: self.mask | (1 << i), m: self.m }
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.m).filter(|&i| self.contains(i)).collect()
    }
}

impl fmt::Display for FeatureSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:0width$b}", self.mask, width = self.m.max(1))
    }
}

type Evaluator = dyn Fn(FeatureSubset) -> Result<f64, String> + Send + Sync;

/// A memoized game `V: 2^M -> R`.
///
/// Each subset is evaluated at most once, even under concurrent access, and
/// [`evaluations`](Self::evaluations) counts real evaluator calls exactly.
pub struct CharacteristicFn {
    m: usize,
    evaluator: Arc<Evaluator>,
    cache: Vec<OnceCell<f64>>,
    evaluations: AtomicUsize,
}

impl fmt::Debug for CharacteristicFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CharacteristicFn").field("m", &self.m).field("evaluations", &self.evaluations()).finish()
    }
}

impl CharacteristicFn {
    pub fn new<F>(m: usize, evaluator: F) -> Result<Self, ShapleyError>
    where
        F: Fn(FeatureSubset) -> Result<f64, String> + Send + Sync + 'static,
    {
        if m > MAX_FEATURES {
            return Err(ShapleyError::TooManyFeatures { m, max: MAX_FEATURES });
        }
        Ok(Self {
            m,
            evaluator: Arc::new(evaluator),
            cache: (0..1usize << m).map(|_| OnceCell::new()).collect(),
            evaluations: AtomicUsize::new(0),
        })
    }

    /// Game given by an explicit table indexed by mask.
    pub fn from_table(values: Vec<f64>) -> Result<Self, ShapleyError> {
        let m = values.len().trailing_zeros() as usize;
        if values.len() != 1 << m {
            return Err(ShapleyError::InvalidArgument(format!("table length {} is not a power of two", values.len())));
        }
        Self::new(m, move |s| Ok(values[s.mask() as usize]))
    }

    pub fn n_features(&self) -> usize {
        self.m
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::SeqCst)
    }

    pub fn value(&self, s: FeatureSubset) -> Result<f64, ShapleyError> {
        if s.n_features() != self.m {
            return Err(ShapleyError::InvalidArgument(format!("subset over {} features, game has {}", s.n_features(), self.m)));
        }
        self.cache[s.mask() as usize]
            .get_or_try_init(|| {
                self.evaluations.fetch_add(1, Ordering::SeqCst);
                match (self.evaluator)(s) {
                    Ok(v) if v.is_finite() => Ok(v),
                    Ok(v) => Err(format!("non-finite value {v}")),
                    Err(e) => Err(e),
                }
            })
            .copied()
            .map_err(|reason| ShapleyError::EvaluatorFailure { subset: s, reason })
    }

    pub fn v_empty(&self) -> Result<f64, ShapleyError> {
        self.value(FeatureSubset::empty(self.m))
    }

    pub fn v_full(&self) -> Result<f64, ShapleyError> {
        self.value(FeatureSubset::full(self.m))
    }

    /// Evaluates every subset (in parallel) and returns the table by mask.
    pub fn table(&self) -> Result<Vec<f64>, ShapleyError> {
        (0..1u32 << self.m)
            .into_par_iter()
            .map(|mask| self.value(FeatureSubset { mask, m: self.m }))
            .collect()
    }

    /// The game `self + other`, evaluated through both caches.
    pub fn sum(a: Arc<Self>, b: Arc<Self>) -> Result<Self, ShapleyError> {
        if a.m != b.m {
            return Err(ShapleyError::InvalidArgument("games differ in feature count".into()));
        }
        let m = a.m;
        Self::new(m, move |s| {
            let x = a.value(s).map_err(|e| e.to_string())?;
            let y = b.value(s).map_err(|e| e.to_string())?;
            Ok(x + y)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapleyMethod {
    Exact,
    Sampled { n_perms: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapleyReport {
    pub phi: Vec<f64>,
    pub method: ShapleyMethod,
    pub v_full: f64,
    pub v_empty: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<Vec<f64>>,
    pub evaluations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub feature_names: Vec<String>,
}

impl ShapleyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Features ordered by decreasing value (ties by index).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.phi.len()).collect();
        idx.sort_by(|&a, &b| self.phi[b].total_cmp(&self.phi[a]).then(a.cmp(&b)));
        idx
    }

    fn name(&self, i: usize) -> String {
        self.feature_names.get(i).cloned().unwrap_or_else(|| format!("f{i}"))
    }

    /// `rank,feature,index,phi[,stderr]`, ranked.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(if self.stderr.is_some() { "rank,feature,index,phi,stderr\n" } else { "rank,feature,index,phi\n" });
        for (r, i) in self.ranking().into_iter().enumerate() {
            out.push_str(&format!("{},{},{},{:?}", r + 1, self.name(i), i, self.phi[i]));
            if let Some(se) = &self.stderr {
                out.push_str(&format!(",{:?}", se[i]));
            }
            out.push('\n');
        }
        out
    }

    pub fn render_table(&self) -> String {
        let mut out = format!("{:>4}  {:<10} {:>14}\n", "rank", "feature", "phi");
        for (r, i) in self.ranking().into_iter().enumerate() {
            out.push_str(&format!("{:>4}  {:<10} {:>14.6e}", r + 1, self.name(i), self.phi[i]));
            if let Some(se) = &self.stderr {
                out.push_str(&format!("  ± {:.2e}", se[i]));
            }
            out.push('\n');
        }
        out.push_str(&format!("V(full) = {:.6}, V(empty) = {:.6}, evaluations = {}\n", self.v_full, self.v_empty, self.evaluations));
        out
    }
}

/// `|S|! (M - |S| - 1)! / M!` for every `|S|`.
fn coalition_weights(m: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(m);
    for s in 0..m {
        // 1 / (M * C(M-1, s))
        let mut c = 1.0f64;
        for j in 0..s {
            c = c * (m - 1 - j) as f64 / (j + 1) as f64;
        }
        w.push(1.0 / (m as f64 * c));
    }
    w
}

fn exact_from_table(table: &[f64], m: usize) -> Vec<f64> {
    let w = coalition_weights(m);
    (0..m)
        .map(|a| {
            let bit = 1usize << a;
            let mut phi = 0.0;
            for s in 0..table.len() {
                if s & bit == 0 {
                    phi += w[s.count_ones() as usize] * (table[s | bit] - table[s]);
                }
            }
            phi
        })
        .collect()
}

pub fn shapley_exact(v: &CharacteristicFn) -> Result<ShapleyReport, ShapleyError> {
    let m = v.n_features();
    let table = v.table()?;
    Ok(ShapleyReport {
        phi: exact_from_table(&table, m),
        method: ShapleyMethod::Exact,
        v_full: table[table.len() - 1],
        v_empty: table[0],
        stderr: None,
        evaluations: v.evaluations(),
        feature_names: Vec::new(),
    })
}

/// Permutation-sampling estimate. Permutation `j` is drawn from its own
/// stream derived from `seed`, so the result does not depend on scheduling.
pub fn shapley_sampled(v: &CharacteristicFn, n_perms: usize, seed: u64) -> Result<ShapleyReport, ShapleyError> {
    if n_perms == 0 {
        return Err(ShapleyError::InvalidArgument("n_perms must be at least 1".into()));
    }
    let m = v.n_features();
    let marginals: Vec<Vec<f64>> = (0..n_perms)
        .into_par_iter()
        .map(|j| {
            let mut order: Vec<usize> = (0..m).collect();
            order.shuffle(&mut util::rng(seed, &[0x5a, j as u64]));
            let mut s = FeatureSubset::empty(m);
            let mut prev = v.value(s)?;
            let mut out = vec![0.0; m];
            for a in order {
                s = s.with(a);
                let cur = v.value(s)?;
                out[a] = cur - prev;
                prev = cur;
            }
            Ok(out)
        })
        .collect::<Result<_, ShapleyError>>()?;
    let n = n_perms as f64;
    let mut phi = vec![0.0; m];
    for row in &marginals {
        phi.iter_mut().zip(row).for_each(|(p, x)| *p += x);
    }
    phi.iter_mut().for_each(|p| *p /= n);
    let stderr = (0..m)
        .map(|a| {
            if n_perms < 2 {
                return 0.0;
            }
            let ss: f64 = marginals.iter().map(|r| (r[a] - phi[a]).powi(2)).sum();
            (ss / (n - 1.0) / n).sqrt()
        })
        .collect();
    Ok(ShapleyReport {
        phi,
        method: ShapleyMethod::Sampled { n_perms, seed },
        v_full: v.v_full()?,
        v_empty: v.v_empty()?,
        stderr: Some(stderr),
        evaluations: v.evaluations(),
        feature_names: Vec::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomCheck {
    pub passed: bool,
    /// Largest violation observed (0 when nothing was checked).
    pub max_violation: f64,
    pub detail: String,
}

impl AxiomCheck {
    fn new(max_violation: f64, tol: f64, detail: String) -> Self {
        Self { passed: max_violation <= tol, max_violation, detail }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomVerdict {
    pub transferability: AxiomCheck,
    pub null_player: AxiomCheck,
    pub symmetry: AxiomCheck,
    pub linearity: AxiomCheck,
}

impl AxiomVerdict {
    pub fn all_passed(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn failures(&self) -> Vec<&'static str> {
        [
            ("transferability", &self.transferability),
            ("null_player", &self.null_player),
            ("symmetry", &self.symmetry),
            ("linearity", &self.linearity),
        ]
        .into_iter()
        .filter(|(_, c)| !c.passed)
        .map(|(n, _)| n)
        .collect()
    }
}

/// Checks the report against the axioms. Null and symmetry use the game's
/// own marginals to decide which features qualify; linearity pairs `v` with a
/// seeded random companion game.
pub fn axiom_suite(v: &CharacteristicFn, report: &ShapleyReport) -> Result<AxiomVerdict, ShapleyError> {
    let m = v.n_features();
    if report.phi.len() != m {
        return Err(ShapleyError::InvalidArgument(format!("report has {} values for {m} features", report.phi.len())));
    }
    let table = v.table()?;
    let phi = &report.phi;

    let total = table[table.len() - 1] - table[0];
    let gap = (phi.iter().sum::<f64>() - total).abs();
    let transferability = AxiomCheck::new(gap, TRANSFER_TOL, format!("sum(phi) - (V(Z) - V(0)) = {gap:e}"));

    let subsets_without = |a: usize| (0..table.len()).filter(move |s| s & (1 << a) == 0);
    let mut null_worst = 0.0f64;
    let mut nulls = Vec::new();
    for a in 0..m {
        if subsets_without(a).all(|s| (table[s | 1 << a] - table[s]).abs() <= NULL_TOL) {
            nulls.push(a);
            null_worst = null_worst.max(phi[a].abs());
        }
    }
    let null_player = AxiomCheck::new(null_worst, NULL_TOL, format!("null features {nulls:?}"));

    let mut sym_worst = 0.0f64;
    let mut pairs = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            let both = (1 << a) | (1 << b);
            let symmetric = (0..table.len())
                .filter(|s| s & both == 0)
                .all(|s| (table[s | 1 << a] - table[s | 1 << b]).abs() <= SYMMETRY_TOL);
            if symmetric {
                pairs.push((a, b));
                sym_worst = sym_worst.max((phi[a] - phi[b]).abs());
            }
        }
    }
    let symmetry = AxiomCheck::new(sym_worst, SYMMETRY_TOL, format!("symmetric pairs {pairs:?}"));

    let mut rng = util::rng(0x11ea, &[m as u64]);
    let companion: Vec<f64> = (0..table.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let summed: Vec<f64> = table.iter().zip(&companion).map(|(a, b)| a + b).collect();
    let phi_v = exact_from_table(&table, m);
    let phi_c = exact_from_table(&companion, m);
    let phi_s = exact_from_table(&summed, m);
    let lin = (0..m).map(|a| (phi_s[a] - phi_v[a] - phi_c[a]).abs()).fold(0.0, f64::max);
    let linearity = AxiomCheck::new(lin, LINEARITY_TOL, format!("max |phi(V+W) - phi(V) - phi(W)| = {lin:e}"));

    Ok(AxiomVerdict { transferability, null_player, symmetry, linearity })
}

/// Exact linearity check between two arbitrary games.
pub fn linearity_gap(v1: &CharacteristicFn, v2: &CharacteristicFn) -> Result<f64, ShapleyError> {
    if v1.n_features() != v2.n_features() {
        return Err(ShapleyError::InvalidArgument("games differ in feature count".into()));
    }
    let m = v1.n_features();
    let (t1, t2) = (v1.table()?, v2.table()?);
    let t: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| a + b).collect();
    let (p1, p2, p) = (exact_from_table(&t1, m), exact_from_table(&t2, m), exact_from_table(&t, m));
    Ok((0..m).map(|a| (p[a] - p1[a] - p2[a]).abs()).fold(0.0, f64::max))
}

/// Monotonicity for feature `a`: `None` if `v1`'s marginals do not dominate
/// `v2`'s on every subset, otherwise whether `phi_a(v1) >= phi_a(v2)`.
pub fn dominance_holds(v1: &CharacteristicFn, v2: &CharacteristicFn, a: usize) -> Result<Option<bool>, ShapleyError> {
    let m = v1.n_features();
    if v2.n_features() != m || a >= m {
        return Err(ShapleyError::InvalidArgument("feature or game size mismatch".into()));
    }
    let (t1, t2) = (v1.table()?, v2.table()?);
    let bit = 1usize << a;
    let dominates = (0..t1.len()).filter(|s| s & bit == 0).all(|s| t1[s | bit] - t1[s] >= t2[s | bit] - t2[s]);
    if !dominates {
        return Ok(None);
    }
    let (p1, p2) = (exact_from_table(&t1, m), exact_from_table(&t2, m));
    Ok(Some(p1[a] >= p2[a] - DOMINANCE_TOL))
}

/// The `k` features with the largest values; ties go to the lower index.
pub fn select_top_k(report: &ShapleyReport, k: usize) -> Result<FeatureSubset, ShapleyError> {
    let m = report.phi.len();
    if k == 0 || k > m {
        return Err(ShapleyError::InvalidArgument(format!("k must lie in 1..={m}, got {k}")));
    }
    FeatureSubset::from_indices(&report.ranking()[..k], m)
}

/// One candidate input column for the feature-value game.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureColumn {
    pub name: String,
    pub side: Side,
    pub channel: usize,
    pub values: Vec<f64>,
}

/// The nine channels of `trace` as candidate inputs.
pub fn same_side_columns(trace: &Trace) -> Vec<FeatureColumn> {
    (0..NUM_FEATURES)
        .map(|k| FeatureColumn {
            name: format!("{}_{}", trace.side().as_str(), FEATURE_NAMES[k]),
            side: trace.side(),
            channel: k,
            values: trace.column(k),
        })
        .collect()
}

/// Same-side channels followed by the opposite side's channels (`M = 18`).
pub fn cross_side_columns(target: &Trace, other: &Trace) -> Result<Vec<FeatureColumn>, ShapleyError> {
    if other.len() != target.len() {
        return Err(ShapleyError::InsufficientData(format!(
            "traces differ in length ({} vs {})",
            target.len(),
            other.len()
        )));
    }
    let mut cols = same_side_columns(target);
    cols.extend(same_side_columns(other));
    Ok(cols)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueFnSettings {
    pub window: usize,
    /// Fraction of one-step pairs (in time order) used for fitting.
    pub train_fraction: f64,
    pub max_train: usize,
    pub max_validation: usize,
    /// Hyperparameter-search budget per channel and subset.
    pub fit_evals: usize,
}

impl Default for ValueFnSettings {
    fn default() -> Self {
        Self { window: crate::ingest::DEFAULT_WINDOW, train_fraction: 0.7, max_train: 64, max_validation: 64, fit_evals: 20 }
    }
}

fn evenly(n: usize, cap: usize) -> Vec<usize> {
    if cap == 0 || n <= cap {
        (0..n).collect()
    } else {
        (0..cap).map(|i| i * n / cap).collect()
    }
}

/// Builds `V(S)`: mean validation accuracy over the nine target channels of
/// GPs fitted on the columns in `S` alone. `V(empty)` is the accuracy of the
/// zero (prior-mean) predictor.
///
/// Selected columns are always laid out in (channel, side) order, so two
/// columns with identical data yield identical values wherever they are
/// interchangeable.
pub fn make_feature_value_fn(
    columns: Vec<FeatureColumn>,
    targets: &Trace,
    settings: &ValueFnSettings,
) -> Result<CharacteristicFn, ShapleyError> {
    let m = columns.len();
    if m == 0 || m > MAX_FEATURES {
        return Err(ShapleyError::TooManyFeatures { m, max: MAX_FEATURES });
    }
    let len = targets.len();
    if let Some(c) = columns.iter().find(|c| c.values.len() != len) {
        return Err(ShapleyError::InsufficientData(format!("column {} has {} rows, targets {len}", c.name, c.values.len())));
    }
    let w = settings.window;
    if w == 0 || !(0.0..1.0).contains(&settings.train_fraction) {
        return Err(ShapleyError::InvalidArgument("window must be positive and train_fraction in (0, 1)".into()));
    }
    let pairs = len.saturating_sub(w);
    let n_train = (pairs as f64 * settings.train_fraction).floor() as usize;
    if n_train < 2 || pairs - n_train < 2 {
        return Err(ShapleyError::InsufficientData(format!("{len} samples leave too few train/validation pairs for window {w}")));
    }
    // Pair j predicts row j + w from rows j..j+w.
    let train_ids: Vec<usize> = evenly(n_train, settings.max_train);
    let val_ids: Vec<usize> = evenly(pairs - n_train, settings.max_validation).into_iter().map(|j| j + n_train).collect();
    let rows = targets.rows();
    let y_train: Vec<[f64; NUM_FEATURES]> = train_ids.iter().map(|&j| rows[j + w]).collect();
    let y_val: Vec<[f64; NUM_FEATURES]> = val_ids.iter().map(|&j| rows[j + w]).collect();

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&i| (columns[i].channel, columns[i].side == Side::Robot, i));
    let fit_evals = settings.fit_evals;
    let columns = Arc::new(columns);

    let score = move |pred: &dyn Fn(usize, usize) -> f64| -> f64 {
        let mut acc = 0.0;
        for k in 0..NUM_FEATURES {
            let truth: Vec<f64> = y_val.iter().map(|r| r[k]).collect();
            let p: Vec<f64> = (0..y_val.len()).map(|i| pred(i, k)).collect();
            acc += range_accuracy(&p, &truth);
        }
        acc / NUM_FEATURES as f64
    };

    CharacteristicFn::new(m, move |s| {
        if s.is_empty() {
            return Ok(score(&|_, _| 0.0));
        }
        let selected: Vec<&FeatureColumn> = order.iter().filter(|&&i| s.contains(i)).map(|&i| &columns[i]).collect();
        let encode = |j: usize| -> Vec<f64> {
            let mut x = Vec::with_capacity(w * selected.len());
            for t in j..j + w {
                x.extend(selected.iter().map(|c| c.values[t]));
            }
            x
        };
        let x_train: Vec<Vec<f64>> = train_ids.iter().map(|&j| encode(j)).collect();
        let x_val: Vec<Vec<f64>> = val_ids.iter().map(|&j| encode(j)).collect();
        let opts = FitOptions { max_evals: fit_evals, ..FitOptions::default() };
        let mut preds = vec![vec![0.0; NUM_FEATURES]; x_val.len()];
        for k in 0..NUM_FEATURES {
            let y: Vec<f64> = y_train.iter().map(|r| r[k]).collect();
            let model = GpModel::fit(&x_train, &y, Hyperparams::default(), opts).map_err(|e| e.to_string())?;
            for (row, x) in preds.iter_mut().zip(&x_val) {
                row[k] = model.predict(x).map_err(|e| e.to_string())?.mean;
            }
        }
        Ok(score(&|i, k| preds[i][k]))
    })
}
