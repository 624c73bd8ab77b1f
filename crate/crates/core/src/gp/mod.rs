//! Exact Gaussian process regression used as the probabilistic oracle.
//!
//! The model is a zero-mean GP with a squared-exponential kernel
//! `k(a, b) = sf2 * exp(-|a - b|^2 / (2 l^2))` and i.i.d. Gaussian noise.
//! Predictions follow the standard posterior
//!
//! ```text
//! mean = k*^T (K + sn2 I)^-1 y
//! var  = k** - k*^T (K + sn2 I)^-1 k*
//! ```
//!
//! evaluated through a Cholesky factor of `K + sn2 I` (plus jitter when the
//! plain factorization fails). Hyperparameters are fitted by maximizing the
//! log marginal likelihood with a bounded Nelder-Mead search in log space.

mod bank;
pub mod linalg;
pub mod optimize;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub use bank::{training_pairs, GpBank};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Raw posterior variances in `(-NEG_VARIANCE_TOL, 0)` are clamped to zero.
pub const NEG_VARIANCE_TOL: f64 = 1e-9;
pub const DOC_VERSION: u32 = 1;

// Search box in log space: lengthscale, signal variance, noise variance.
const LOG_BOUNDS: [(f64, f64); 3] = [(-6.907_755, 6.907_755), (-9.21034, 9.21034), (-18.420_68, 2.302_585)];

#[derive(Debug, Error)]
pub enum GpError {
    #[error("kernel matrix is not positive definite even with jitter up to {ceiling:e}")]
    SingularKernel { ceiling: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported model document version {0}")]
    Version(u32),
}

/// Squared-exponential covariance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    pub lengthscale: f64,
    pub signal_variance: f64,
}

impl RbfKernel {
    pub fn new(lengthscale: f64, signal_variance: f64) -> Result<Self, GpError> {
        if !(lengthscale > 0.0 && lengthscale.is_finite() && signal_variance > 0.0 && signal_variance.is_finite()) {
            return Err(GpError::InvalidInput(format!(
                "kernel needs positive lengthscale and signal variance, got {lengthscale}, {signal_variance}"
            )));
        }
        Ok(Self { lengthscale, signal_variance })
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.from_sq_dist(sq_dist(a, b))
    }

    #[inline]
    pub fn from_sq_dist(&self, d2: f64) -> f64 {
        self.signal_variance * (-0.5 * d2 / (self.lengthscale * self.lengthscale)).exp()
    }
}

pub fn kernel_eval(k: &RbfKernel, a: &[f64], b: &[f64]) -> Result<f64, GpError> {
    if a.len() != b.len() {
        return Err(GpError::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(k.eval(a, b))
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Default for Hyperparams {
    /// Starting point on normalized data.
    fn default() -> Self {
        Self { lengthscale: 1.0, signal_variance: 1.0, noise_variance: 0.01 }
    }
}

impl Hyperparams {
    pub fn new(lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Self {
        Self { lengthscale, signal_variance, noise_variance }
    }

    fn validate(&self) -> Result<(), GpError> {
        RbfKernel::new(self.lengthscale, self.signal_variance)?;
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(GpError::InvalidInput(format!("noise variance must be >= 0, got {}", self.noise_variance)));
        }
        Ok(())
    }

    fn kernel(&self) -> RbfKernel {
        RbfKernel { lengthscale: self.lengthscale, signal_variance: self.signal_variance }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// When false the initial hyperparameters are used as-is.
    pub optimize: bool,
    pub max_evals: usize,
    /// Initial simplex edge in log-hyperparameter space.
    pub initial_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { optimize: true, max_evals: 200, initial_step: 0.5 }
    }
}

impl FitOptions {
    pub fn fixed() -> Self {
        Self { optimize: false, ..Self::default() }
    }

    /// Short search around a previous optimum.
    pub fn warm_start(max_evals: usize) -> Self {
        Self { optimize: max_evals > 0, max_evals, initial_step: 0.2 }
    }
}

/// Diagonal jitter that made the kernel matrix factorizable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JitterRecord {
    pub jitter: f64,
    pub attempts: u32,
}

/// Posterior predictive of one scalar output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GaussianPredictive {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianPredictive {
    pub fn new(mean: f64, variance: f64) -> Self {
        Self { mean, variance }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Set when a slightly negative posterior variance was clamped to zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NumericalClamp {
    pub raw_variance: f64,
}

/// A fitted single-output GP.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GpModelDoc", into = "GpModelDoc")]
pub struct GpModel {
    hyper: Hyperparams,
    dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    jitter: JitterRecord,
    evaluations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GpModelDoc {
    version: u32,
    hyperparams: Hyperparams,
    dim: usize,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    jitter: JitterRecord,
}

impl From<GpModel> for GpModelDoc {
    fn from(m: GpModel) -> Self {
        let inputs = if m.dim == 0 {
            vec![Vec::new(); m.targets.len()]
        } else {
            m.inputs.chunks(m.dim).map(<[f64]>::to_vec).collect()
        };
        GpModelDoc { version: DOC_VERSION, hyperparams: m.hyper, dim: m.dim, inputs, targets: m.targets, jitter: m.jitter }
    }
}

impl TryFrom<GpModelDoc> for GpModel {
    type Error = GpError;
    fn try_from(doc: GpModelDoc) -> Result<Self, GpError> {
        if doc.version != DOC_VERSION {
            return Err(GpError::Version(doc.version));
        }
        let (flat, dim) = flatten_inputs(&doc.inputs, &doc.targets)?;
        if dim != doc.dim {
            return Err(GpError::DimensionMismatch { expected: doc.dim, got: dim });
        }
        doc.hyperparams.validate()?;
        let d2 = pairwise_sq_dists(&flat, dim, doc.targets.len());
        let n = doc.targets.len();
        let mut a = kernel_matrix(&d2, n, &doc.hyperparams);
        for i in 0..n {
            a[i * n + i] += doc.jitter.jitter;
        }
        linalg::cholesky_in_place(&mut a, n).map_err(|_| GpError::SingularKernel { ceiling: doc.jitter.jitter })?;
        Ok(GpModel::assemble(doc.hyperparams, dim, flat, doc.targets, a, doc.jitter, 0))
    }
}

fn flatten_inputs(inputs: &[Vec<f64>], targets: &[f64]) -> Result<(Vec<f64>, usize), GpError> {
    if inputs.is_empty() {
        return Err(GpError::InvalidInput("at least one training point is required".into()));
    }
    if inputs.len() != targets.len() {
        return Err(GpError::DimensionMismatch { expected: inputs.len(), got: targets.len() });
    }
    let dim = inputs[0].len();
    let mut flat = Vec::with_capacity(inputs.len() * dim);
    for (i, row) in inputs.iter().enumerate() {
        if row.len() != dim {
            return Err(GpError::DimensionMismatch { expected: dim, got: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(GpError::InvalidInput(format!("training input {i} is not finite")));
        }
        flat.extend_from_slice(row);
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(GpError::InvalidInput("training targets must be finite".into()));
    }
    Ok((flat, dim))
}

fn pairwise_sq_dists(flat: &[f64], dim: usize, n: usize) -> Vec<f64> {
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let v = sq_dist(&flat[i * dim..(i + 1) * dim], &flat[j * dim..(j + 1) * dim]);
            d2[i * n + j] = v;
            d2[j * n + i] = v;
        }
    }
    d2
}

fn kernel_matrix(d2: &[f64], n: usize, h: &Hyperparams) -> Vec<f64> {
    let k = h.kernel();
    let mut a: Vec<f64> = d2.iter().map(|&d| k.from_sq_dist(d)).collect();
    for i in 0..n {
        a[i * n + i] += h.noise_variance;
    }
    a
}

/// Log marginal likelihood from a factor and `alpha = (K + sn2 I)^-1 y`.
fn lml_from_factor(chol: &[f64], alpha: &[f64], targets: &[f64]) -> f64 {
    let n = targets.len();
    let fit: f64 = targets.iter().zip(alpha).map(|(y, a)| y * a).sum();
    let log_det: f64 = (0..n).map(|i| chol[i * n + i].ln()).sum();
    -0.5 * fit - log_det - 0.5 * n as f64 * LN_2PI
}

struct Evaluated {
    chol: Vec<f64>,
    alpha: Vec<f64>,
    jitter: JitterRecord,
    lml: f64,
}

fn evaluate(d2: &[f64], targets: &[f64], h: &Hyperparams) -> Option<Evaluated> {
    let n = targets.len();
    let a = kernel_matrix(d2, n, h);
    let (chol, jitter, attempts) = linalg::cholesky_with_jitter(&a, n)?;
    let mut alpha = targets.to_vec();
    linalg::cholesky_solve(&chol, n, &mut alpha);
    let lml = lml_from_factor(&chol, &alpha, targets);
    Some(Evaluated { chol, alpha, jitter: JitterRecord { jitter, attempts }, lml })
}

impl GpModel {
    fn assemble(
        hyper: Hyperparams,
        dim: usize,
        inputs: Vec<f64>,
        targets: Vec<f64>,
        chol: Vec<f64>,
        jitter: JitterRecord,
        evaluations: usize,
    ) -> Self {
        let n = targets.len();
        let mut alpha = targets.clone();
        linalg::cholesky_solve(&chol, n, &mut alpha);
        Self { hyper, dim, inputs, targets, chol, alpha, jitter, evaluations }
    }

    /// Fits a GP to `inputs` (one row per training point) and scalar `targets`.
    ///
    /// With `opts.optimize` the log marginal likelihood is maximized from
    /// `init`; the result is never worse than `init`. A zero initial noise
    /// variance stays fixed at zero.
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64], init: Hyperparams, opts: FitOptions) -> Result<Self, GpError> {
        let (flat, dim) = flatten_inputs(inputs, targets)?;
        init.validate()?;
        let n = targets.len();
        let d2 = pairwise_sq_dists(&flat, dim, n);

        let mut best = init;
        let mut evaluations = 1;
        if opts.optimize && opts.max_evals > 1 {
            let fit_noise = init.noise_variance > 0.0;
            let mut x0 = vec![init.lengthscale.ln(), init.signal_variance.ln()];
            if fit_noise {
                x0.push(init.noise_variance.ln());
            }
            let unpack = |x: &[f64]| Hyperparams {
                lengthscale: x[0].exp(),
                signal_variance: x[1].exp(),
                noise_variance: if fit_noise { x[2].exp() } else { 0.0 },
            };
            let outcome = optimize::nelder_mead_max(
                |x| {
                    if x.iter().zip(LOG_BOUNDS).any(|(v, (lo, hi))| *v < lo || *v > hi) {
                        return f64::NEG_INFINITY;
                    }
                    evaluate(&d2, targets, &unpack(x)).map_or(f64::NEG_INFINITY, |e| e.lml)
                },
                &x0,
                opts.initial_step,
                opts.max_evals,
            );
            evaluations = outcome.evaluations;
            if outcome.value.is_finite() {
                best = unpack(&outcome.best);
                // Starting point of the search: keep it exactly when nothing beat it.
                if outcome.best == x0 {
                    best = init;
                }
            }
        }
        let e = evaluate(&d2, targets, &best).ok_or(GpError::SingularKernel { ceiling: linalg::JITTER_CEILING })?;
        Ok(Self {
            hyper: best,
            dim,
            inputs: flat,
            targets: targets.to_vec(),
            chol: e.chol,
            alpha: e.alpha,
            jitter: e.jitter,
            evaluations,
        })
    }

    /// Refit on new data starting from this model's hyperparameters.
    pub fn refit(&self, inputs: &[Vec<f64>], targets: &[f64], max_evals: usize) -> Result<Self, GpError> {
        Self::fit(inputs, targets, self.hyper, FitOptions::warm_start(max_evals))
    }

    pub fn hyperparams(&self) -> Hyperparams {
        self.hyper
    }

    pub fn kernel(&self) -> RbfKernel {
        self.hyper.kernel()
    }

    pub fn noise_variance(&self) -> f64 {
        self.hyper.noise_variance
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_train(&self) -> usize {
        self.targets.len()
    }

    pub fn train_targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn train_input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn jitter(&self) -> JitterRecord {
        self.jitter
    }

    /// Objective evaluations spent by the fit that produced this model.
    pub fn fit_evaluations(&self) -> usize {
        self.evaluations
    }

    /// Lower Cholesky factor of `K + (sn2 + jitter) I`, row-major.
    pub fn cholesky_factor(&self) -> &[f64] {
        &self.chol
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        lml_from_factor(&self.chol, &self.alpha, &self.targets)
    }

    /// Relative Frobenius error of `L L^T` against the regularized kernel matrix.
    pub fn factorization_residual(&self) -> f64 {
        let n = self.n_train();
        let d2 = pairwise_sq_dists(&self.inputs, self.dim, n);
        let mut a = kernel_matrix(&d2, n, &self.hyper);
        for i in 0..n {
            a[i * n + i] += self.jitter.jitter;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            for j in 0..n {
                let llt = linalg::dot(&self.chol[i * n..i * n + n], &self.chol[j * n..j * n + n]);
                num += (llt - a[i * n + j]).powi(2);
                den += a[i * n + j].powi(2);
            }
        }
        (num / den).sqrt()
    }

    pub fn predict(&self, x: &[f64]) -> Result<GaussianPredictive, GpError> {
        self.predict_with_note(x).map(|(p, _)| p)
    }

    /// Predictive distribution of a new noisy observation at `x`: the latent
    /// posterior plus the fitted noise variance.
    pub fn predict_observation(&self, x: &[f64]) -> Result<GaussianPredictive, GpError> {
        let p = self.predict(x)?;
        Ok(GaussianPredictive { mean: p.mean, variance: p.variance + self.hyper.noise_variance })
    }

    /// Posterior predictive at `x`, reporting whether the variance was clamped.
    pub fn predict_with_note(&self, x: &[f64]) -> Result<(GaussianPredictive, Option<NumericalClamp>), GpError> {
        if x.len() != self.dim {
            return Err(GpError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let n = self.n_train();
        let k = self.kernel();
        let mut kstar: Vec<f64> =
            (0..n).map(|i| k.from_sq_dist(sq_dist(&self.inputs[i * self.dim..(i + 1) * self.dim], x))).collect();
        let mean = linalg::dot(&kstar, &self.alpha);
        linalg::solve_lower(&self.chol, n, &mut kstar);
        let raw = k.signal_variance - linalg::dot(&kstar, &kstar);
        if raw >= 0.0 {
            Ok((GaussianPredictive { mean, variance: raw }, None))
        } else {
            debug_assert!(raw > -NEG_VARIANCE_TOL * k.signal_variance.max(1.0), "posterior variance {raw}");
            Ok((GaussianPredictive { mean, variance: 0.0 }, Some(NumericalClamp { raw_variance: raw })))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("GP model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Central credible interval `mean +- z * sd` with `z` the standard-normal
/// quantile for `level`.
pub fn uncertainty_band(p: &GaussianPredictive, level: f64) -> Result<(f64, f64), GpError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(GpError::InvalidInput(format!("credible level must lie in (0, 1), got {level}")));
    }
    let z = Normal::standard().inverse_cdf(0.5 + 0.5 * level);
    let half = z * p.variance.max(0.0).sqrt();
    Ok((p.mean - half, p.mean + half))
}
