//! Two-stage haptic signal prediction.
//!
//! An exact Gaussian process acts as a probabilistic oracle for the next
//! haptic sample; a compact neural predictor learns to mimic the oracle's
//! predictive distribution under a discretized Jensen-Shannon loss; and a
//! Shapley feature-value engine ranks input channels so that inference can
//! run on the most informative subset.
//!
//! Module map:
//!
//! - [`ingest`]: CSV traces, normalization, windowing, synthetic traces.
//! - [`gp`]: RBF kernel, exact GP fit/predict, hyperparameter search.
//! - [`divergence`]: discretized KL / JSD and the JSD gradient used for training.
//! - [`nn`]: fully-connected and residual MLPs trained by SGD with momentum.
//! - [`shapley`]: exact and sampled Shapley values, axiom checks, top-k selection.
//! - [`pipeline`]: the inference protocol with refits every prediction block.
//! - [`bench`]: accuracy metric, experiment grid, report export.

pub mod bench;
pub mod divergence;
pub mod gp;
pub mod ingest;
pub mod nn;
pub mod pipeline;
pub mod shapley;

mod util;

pub use divergence::{DiscretizedDist, Grid};
pub use gp::{GaussianPredictive, GpBank, GpModel, Hyperparams, RbfKernel};
pub use ingest::{Normalization, Side, SignalSample, SignalWindow, Trace, FEATURE_NAMES, NUM_FEATURES};
pub use nn::{Architecture, NetConfig, TrainConfig, TrainedNet};
pub use pipeline::{EpisodeConfig, EpisodeResult, LossModel, Predictor};
pub use shapley::{CharacteristicFn, FeatureSubset, ShapleyReport};
