//! Discretized KL and Jensen-Shannon divergences between Gaussian predictives.
//!
//! A Gaussian is mapped onto a uniform grid of bin centers by integrating its
//! density over each bin; the two outer bins extend to infinity so no mass is
//! lost. All logarithms are natural, so the JSD is bounded by `ln 2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::GaussianPredictive;

/// Bins used for the training loss grid.
pub const DEFAULT_BINS: usize = 201;
/// Grid half-width in units of the larger standard deviation.
pub const DEFAULT_SPAN_SD: f64 = 6.0;
/// Floor applied to `q` inside [`kl`].
pub const KL_FLOOR: f64 = 1e-12;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// Standard deviation used for the grid when both inputs are degenerate.
const MIN_GRID_SD: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum DivergenceError {
    #[error("distributions are defined on different grids")]
    GridMismatch,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Uniformly spaced bin centers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    first: f64,
    step: f64,
    bins: usize,
}

impl Grid {
    /// `bins` centers from `lo` to `hi` inclusive.
    pub fn spanning(lo: f64, hi: f64, bins: usize) -> Result<Self, DivergenceError> {
        if bins < 2 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(DivergenceError::InvalidGrid(format!("need bins >= 2 and lo < hi, got {bins} over [{lo}, {hi}]")));
        }
        Ok(Self { first: lo, step: (hi - lo) / (bins - 1) as f64, bins })
    }

    /// Shared grid for a pair: `[min mean - span * sd_max, max mean + span * sd_max]`.
    pub fn for_pair(a: &GaussianPredictive, b: &GaussianPredictive, bins: usize, span_sd: f64) -> Result<Self, DivergenceError> {
        let sd = a.std_dev().max(b.std_dev()).max(MIN_GRID_SD);
        let lo = a.mean.min(b.mean) - span_sd * sd;
        let hi = a.mean.max(b.mean) + span_sd * sd;
        Self::spanning(lo, hi, bins)
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn center(&self, i: usize) -> f64 {
        self.first + self.step * i as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins).map(|i| self.center(i)).collect()
    }

    /// Inner edge between bins `i - 1` and `i`, for `i` in `1..bins`.
    fn inner_edge(&self, i: usize) -> f64 {
        self.first + self.step * (i as f64 - 0.5)
    }

    fn nearest_bin(&self, x: f64) -> usize {
        let pos = ((x - self.first) / self.step).round();
        pos.clamp(0.0, (self.bins - 1) as f64) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Gp,
    Nn,
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedDist {
    pub grid: Grid,
    pub probs: Vec<f64>,
    pub source: Source,
}

impl DiscretizedDist {
    pub fn new(grid: Grid, probs: Vec<f64>, source: Source) -> Result<Self, DivergenceError> {
        if probs.len() != grid.bins() {
            return Err(DivergenceError::InvalidGrid(format!("{} probabilities for {} bins", probs.len(), grid.bins())));
        }
        Ok(Self { grid, probs, source })
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| p * self.grid.center(i)).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.probs.iter().enumerate().map(|(i, p)| p * (self.grid.center(i) - m).powi(2)).sum()
    }
}

/// Upper tail `P(Z > z)` of the standard normal.
#[inline]
fn upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// `P(a < Z <= b)` computed on the side of zero that avoids cancellation.
#[inline]
fn normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        upper_tail(a) - upper_tail(b)
    } else if b <= 0.0 {
        upper_tail(-b) - upper_tail(-a)
    } else {
        1.0 - upper_tail(-a) - upper_tail(b)
    }
}

#[inline]
fn std_pdf(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
    }
}

/// Standardized bin edges `z_0 = -inf, z_1, ..., z_{B-1}, z_B = +inf`.
fn standardized_edges(mean: f64, sd: f64, grid: &Grid) -> Vec<f64> {
    let b = grid.bins();
    let mut z = Vec::with_capacity(b + 1);
    z.push(f64::NEG_INFINITY);
    z.extend((1..b).map(|i| (grid.inner_edge(i) - mean) / sd));
    z.push(f64::INFINITY);
    z
}

/// Bin masses of `N(mean, variance)`; zero variance gives a one-hot at the nearest bin.
pub fn discretize(mean: f64, variance: f64, grid: &Grid) -> DiscretizedDist {
    discretize_tagged(mean, variance, grid, Source::Other)
}

pub fn discretize_tagged(mean: f64, variance: f64, grid: &Grid, source: Source) -> DiscretizedDist {
    let mut probs = vec![0.0; grid.bins()];
    if variance <= 0.0 {
        probs[grid.nearest_bin(mean)] = 1.0;
    } else {
        let z = standardized_edges(mean, variance.sqrt(), grid);
        for (i, p) in probs.iter_mut().enumerate() {
            *p = normal_mass(z[i], z[i + 1]).max(0.0);
        }
    }
    DiscretizedDist { grid: *grid, probs, source }
}

fn check_grid(p: &DiscretizedDist, q: &DiscretizedDist) -> Result<(), DivergenceError> {
    if p.grid != q.grid || p.probs.len() != q.probs.len() {
        return Err(DivergenceError::GridMismatch);
    }
    Ok(())
}

/// `sum_i p_i ln(p_i / q_i)` with `0 ln 0 = 0`. Bins where `q` falls below
/// [`KL_FLOOR`] are raised to the floor so the sum stays finite.
pub fn kl(p: &DiscretizedDist, q: &DiscretizedDist) -> Result<f64, DivergenceError> {
    check_grid(p, q)?;
    let total: f64 = p
        .probs
        .iter()
        .zip(&q.probs)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi.max(KL_FLOOR)).ln())
        .sum();
    Ok(total.max(0.0))
}

/// `ln(x / m)` for `m = (x + y) / 2`, written so that subnormal `x` with
/// `y = 0` still gives `ln 2` instead of dividing by an underflowed midpoint.
#[inline]
fn log_ratio_to_mid(x: f64, y: f64) -> f64 {
    (2.0 * x / (x + y)).ln()
}

/// `x ln(x / m)` with the `0 ln 0 = 0` convention.
#[inline]
fn xlog_ratio(x: f64, y: f64) -> f64 {
    if x > 0.0 {
        x * log_ratio_to_mid(x, y)
    } else {
        0.0
    }
}

#[inline]
fn jsd_terms(p: &[f64], q: &[f64]) -> f64 {
    let s: f64 = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| 0.5 * (xlog_ratio(a, b) + xlog_ratio(b, a)))
        .sum();
    s.clamp(0.0, std::f64::consts::LN_2)
}

/// `0.5 KL(P || M) + 0.5 KL(Q || M)` with `M = (P + Q) / 2`.
pub fn jsd(p: &DiscretizedDist, q: &DiscretizedDist) -> Result<f64, DivergenceError> {
    check_grid(p, q)?;
    Ok(jsd_terms(&p.probs, &q.probs))
}

/// JSD value and its gradient with respect to `(mean_q, ln var_q)` for
/// `Q = discretize(mean_q, exp(log_var_q), grid)` and a fixed `P`.
pub fn jsd_value_and_grad(
    p_fixed: &DiscretizedDist,
    mean_q: f64,
    log_var_q: f64,
    grid: &Grid,
) -> Result<(f64, f64, f64), DivergenceError> {
    if p_fixed.grid != *grid {
        return Err(DivergenceError::GridMismatch);
    }
    let sd = (0.5 * log_var_q).exp();
    let z = standardized_edges(mean_q, sd, grid);
    let b = grid.bins();
    // pdf(z) and z * pdf(z) at every edge, zero at the infinite ends.
    let phi: Vec<f64> = z.iter().map(|&v| std_pdf(v)).collect();
    let zphi: Vec<f64> = z.iter().zip(&phi).map(|(&v, &f)| if v.is_finite() { v * f } else { 0.0 }).collect();

    let mut value = 0.0;
    let mut d_mean = 0.0;
    let mut d_logvar = 0.0;
    for i in 0..b {
        let q = normal_mass(z[i], z[i + 1]).max(0.0);
        let p = p_fixed.probs[i];
        value += 0.5 * (xlog_ratio(p, q) + xlog_ratio(q, p));
        if q > 0.0 {
            // d JSD / d q_i = 0.5 ln(q_i / m_i)
            let g = 0.5 * log_ratio_to_mid(q, p);
            let dq_dmean = (phi[i] - phi[i + 1]) / sd;
            let dq_dlogvar = 0.5 * (zphi[i] - zphi[i + 1]);
            d_mean += g * dq_dmean;
            d_logvar += g * dq_dlogvar;
        }
    }
    Ok((value.clamp(0.0, std::f64::consts::LN_2), d_mean, d_logvar))
}

/// Gradient of the discretized JSD with respect to the second distribution's
/// mean and log-variance, holding the grid fixed.
pub fn jsd_grad(p_fixed: &DiscretizedDist, mean_q: f64, log_var_q: f64, grid: &Grid) -> Result<(f64, f64), DivergenceError> {
    jsd_value_and_grad(p_fixed, mean_q, log_var_q, grid).map(|(_, a, b)| (a, b))
}

/// JSD between two Gaussian predictives on their default shared grid.
pub fn pair_jsd(p: &GaussianPredictive, q: &GaussianPredictive) -> f64 {
    let grid = Grid::for_pair(p, q, DEFAULT_BINS, DEFAULT_SPAN_SD).expect("finite predictive");
    let pd = discretize_tagged(p.mean, p.variance, &grid, Source::Gp);
    let qd = discretize_tagged(q.mean, q.variance, &grid, Source::Nn);
    jsd_terms(&pd.probs, &qd.probs)
}

/// Per-channel JSD, as used by the training loss (which sums the entries).
pub fn feature_jsd<const N: usize>(p: &[GaussianPredictive; N], q: &[GaussianPredictive; N]) -> [f64; N] {
    std::array::from_fn(|k| pair_jsd(&p[k], &q[k]))
}
