//! Deterministic synthetic haptic traces.
//!
//! Each kind is a closed-form smooth trajectory (position, its analytic
//! velocity, and a force derived from a spring/damper or contact model),
//! optionally corrupted by i.i.d. Gaussian noise per channel. Phases are drawn
//! from the seed; the robot side follows the human trajectory with a small lag.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{IngestError, Side, Trace, NUM_FEATURES};
use crate::util;

/// Sample period in seconds (1 kHz haptic loop).
pub const SAMPLE_PERIOD: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    Sine,
    Drag,
    Tap,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 3] = [SyntheticKind::Sine, SyntheticKind::Drag, SyntheticKind::Tap];

    pub fn as_str(self) -> &'static str {
        match self {
            SyntheticKind::Sine => "sine",
            SyntheticKind::Drag => "drag",
            SyntheticKind::Tap => "tap",
        }
    }
}

impl std::str::FromStr for SyntheticKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sine" => Ok(SyntheticKind::Sine),
            "drag" => Ok(SyntheticKind::Drag),
            "tap" => Ok(SyntheticKind::Tap),
            other => Err(format!("unknown synthetic kind `{other}` (sine|drag|tap)")),
        }
    }
}

/// Trajectory constants for one generated trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    /// Position amplitude per axis (m).
    pub amplitude: [f64; 3],
    /// Angular frequency per axis (rad / sample).
    pub omega: [f64; 3],
    pub phase: [f64; 3],
    /// Spring constant per axis (N/m).
    pub stiffness: [f64; 3],
    /// Damping per axis (N s/m).
    pub damping: [f64; 3],
    /// Robot lag in samples (0 for the human side).
    pub lag: f64,
    pub force_gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub len: usize,
    pub noise_sd: f64,
    pub seed: u64,
    pub side: Side,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, len: usize, noise_sd: f64, seed: u64) -> Self {
        Self { kind, len, noise_sd, seed, side: Side::Human }
    }

    pub fn with_side(mut self, side: Side) -> Self {
        self.side = side;
        self
    }

    pub fn params(&self) -> SyntheticParams {
        // Phases depend only on the seed so both sides share one trajectory.
        let mut rng = util::rng(self.seed, &[0x5157]);
        let phase = [rng.random::<f64>() * TAU, rng.random::<f64>() * TAU, rng.random::<f64>() * TAU];
        let (amplitude, period, stiffness, damping) = match self.kind {
            SyntheticKind::Sine => ([0.05, 0.04, 0.03], [400.0, 300.0, 500.0], [120.0, 100.0, 150.0], [0.5, 0.5, 0.5]),
            SyntheticKind::Drag => ([0.01, 0.06, 0.005], [350.0, 600.0, 250.0], [40.0, 300.0, 60.0], [2.0, 4.0, 1.0]),
            SyntheticKind::Tap => ([0.008, 0.006, 0.03], [500.0, 450.0, 200.0], [30.0, 30.0, 500.0], [0.3, 0.3, 1.5]),
        };
        let (lag, force_gain) = match self.side {
            Side::Human => (0.0, 1.0),
            Side::Robot => (3.0, 1.2),
        };
        SyntheticParams { amplitude, omega: period.map(|p| TAU / p), phase, stiffness, damping, lag, force_gain }
    }

    /// Noise-free channel values at 1-based sample index `t`.
    pub fn clean_value(&self, t: u64) -> [f64; NUM_FEATURES] {
        let p = self.params();
        let time = t as f64 - p.lag;
        let mut out = [0.0; NUM_FEATURES];
        for j in 0..3 {
            let (pos, vel) = axis_motion(self.kind, j, &p, time);
            let force = match (self.kind, j) {
                (SyntheticKind::Drag, 1) => {
                    // Wall at 70% of the sweep amplitude plus viscous drag.
                    let wall = 0.7 * p.amplitude[1];
                    -p.stiffness[1] * softplus(pos - wall, 0.002) - p.damping[1] * vel
                }
                (SyntheticKind::Tap, 2) => {
                    // Contact plane below the rest position.
                    let depth = 0.6 * p.amplitude[2];
                    p.stiffness[2] * softplus(-pos - depth, 0.001) - p.damping[2] * vel
                }
                _ => -p.stiffness[j] * pos - p.damping[j] * vel,
            };
            out[j] = p.force_gain * force;
            out[3 + j] = vel;
            out[6 + j] = pos;
        }
        out
    }

    pub fn generate(&self) -> Result<Trace, IngestError> {
        if self.len < super::MIN_TRACE_LEN {
            return Err(IngestError::TooShort { len: self.len, required: super::MIN_TRACE_LEN });
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(IngestError::Invalid(format!("noise_sd must be a finite non-negative number, got {}", self.noise_sd)));
        }
        let side_stream = match self.side {
            Side::Human => 1,
            Side::Robot => 2,
        };
        let mut rng = util::rng(self.seed, &[0x401e, side_stream]);
        let noise = Normal::new(0.0, self.noise_sd).map_err(|e| IngestError::Invalid(e.to_string()))?;
        let rows = (1..=self.len as u64)
            .map(|t| {
                let mut v = self.clean_value(t);
                if self.noise_sd > 0.0 {
                    for x in &mut v {
                        *x += noise.sample(&mut rng);
                    }
                }
                v
            })
            .collect();
        let name = format!("{}-{}", self.kind.as_str(), self.seed);
        Trace::from_rows(name, self.side, rows)
    }
}

/// Human-side synthetic trace.
pub fn generate_synthetic(kind: SyntheticKind, len: usize, noise_sd: f64, seed: u64) -> Result<Trace, IngestError> {
    SyntheticSpec::new(kind, len, noise_sd, seed).generate()
}

/// Position and velocity (m/s) of one axis at fractional sample time.
fn axis_motion(kind: SyntheticKind, axis: usize, p: &SyntheticParams, time: f64) -> (f64, f64) {
    let (a, w, ph) = (p.amplitude[axis], p.omega[axis], p.phase[axis]);
    let theta = w * time + ph;
    match (kind, axis) {
        (SyntheticKind::Drag, 1) => {
            // Sweep with a third harmonic to flatten the turnarounds.
            let pos = a * (theta.sin() + (3.0 * theta).sin() / 9.0);
            let vel = a * w * (theta.cos() + (3.0 * theta).cos() / 3.0) / SAMPLE_PERIOD;
            (pos, vel)
        }
        (SyntheticKind::Tap, 2) => {
            // Periodic downward taps: -a * sin^4(theta / 2).
            let s = (0.5 * theta).sin();
            let c = (0.5 * theta).cos();
            let pos = -a * s.powi(4);
            let vel = -a * 2.0 * w * s.powi(3) * c / SAMPLE_PERIOD;
            (pos, vel)
        }
        _ => (a * theta.sin(), a * w * theta.cos() / SAMPLE_PERIOD),
    }
}

/// Smooth ramp `s * ln(1 + exp(x / s))`.
fn softplus(x: f64, s: f64) -> f64 {
    let z = x / s;
    s * if z > 30.0 { z } else { z.exp().ln_1p() }
}
