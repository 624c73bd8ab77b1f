//! Python bindings for the haptic prediction toolkit.

use haptic_core::divergence::pair_jsd;
use haptic_core::gp::{FitOptions, GaussianPredictive, GpBank, GpModel, Hyperparams};
use haptic_core::ingest::{self, parse_trace, trace_to_csv, Schema, Side, SyntheticKind, Trace, FEATURE_NAMES, NUM_FEATURES};
use haptic_core::nn::{Architecture, Mode, NetConfig, TrainedNet};
use haptic_core::pipeline::{run_episode, EpisodeConfig, LossModel, Predictor};
use haptic_core::shapley::{shapley_exact, shapley_sampled, CharacteristicFn};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pairs(p: &[GaussianPredictive]) -> Vec<(f64, f64)> {
    p.iter().map(|g| (g.mean, g.variance)).collect()
}

fn to_rows(rows: Vec<Vec<f64>>) -> PyResult<Vec<[f64; NUM_FEATURES]>> {
    rows.into_iter()
        .map(|r| <[f64; NUM_FEATURES]>::try_from(r).map_err(|r| err(format!("row has {} values, expected {NUM_FEATURES}", r.len()))))
        .collect()
}

/// A time-ordered trace of nine-feature samples from one side of the link.
#[pyclass(name = "Trace", frozen)]
struct PyTrace {
    inner: Trace,
}

#[pymethods]
impl PyTrace {
    /// Generate a synthetic trace. `kind` is "sine", "drag" or "tap".
    #[staticmethod]
    #[pyo3(signature = (kind, length, noise_sd = 0.01, seed = 0))]
    fn synthetic(kind: &str, length: usize, noise_sd: f64, seed: u64) -> PyResult<Self> {
        let kind: SyntheticKind = kind.parse().map_err(err)?;
        Ok(Self { inner: ingest::generate_synthetic(kind, length, noise_sd, seed).map_err(err)? })
    }

    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        Ok(Self { inner: parse_trace(path, &Schema::canonical()).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (name, rows, side = "human"))]
    fn from_rows(name: &str, rows: Vec<Vec<f64>>, side: &str) -> PyResult<Self> {
        let side: Side = side.parse().map_err(err)?;
        Ok(Self { inner: Trace::from_rows(name, side, to_rows(rows)?).map_err(err)? })
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn side(&self) -> &'static str {
        self.inner.side().as_str()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows().iter().map(|r| r.to_vec()).collect()
    }

    fn column(&self, k: usize) -> PyResult<Vec<f64>> {
        if k >= NUM_FEATURES {
            return Err(err(format!("feature index {k} out of range")));
        }
        Ok(self.inner.column(k))
    }

    /// Copy scaled to zero mean and unit deviation per feature.
    fn normalized(&self) -> Self {
        Self { inner: ingest::normalize(&self.inner) }
    }

    fn to_csv(&self) -> String {
        trace_to_csv(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Trace(name={:?}, side={}, len={})", self.inner.name(), self.inner.side().as_str(), self.inner.len())
    }
}

/// Single-output Gaussian process with an RBF kernel.
#[pyclass(name = "GpModel", frozen)]
struct PyGpModel {
    inner: GpModel,
}

#[pymethods]
impl PyGpModel {
    #[staticmethod]
    #[pyo3(signature = (inputs, targets, lengthscale = 1.0, signal_variance = 1.0, noise_variance = 0.01, max_evals = 0))]
    fn fit(
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        lengthscale: f64,
        signal_variance: f64,
        noise_variance: f64,
        max_evals: usize,
    ) -> PyResult<Self> {
        let opts = if max_evals == 0 { FitOptions::fixed() } else { FitOptions { max_evals, ..FitOptions::default() } };
        let h = Hyperparams::new(lengthscale, signal_variance, noise_variance);
        Ok(Self { inner: GpModel::fit(&inputs, &targets, h, opts).map_err(err)? })
    }

    /// Latent predictive (mean, variance) at `x`.
    fn predict(&self, x: Vec<f64>) -> PyResult<(f64, f64)> {
        let p = self.inner.predict(&x).map_err(err)?;
        Ok((p.mean, p.variance))
    }

    fn log_marginal_likelihood(&self) -> f64 {
        self.inner.log_marginal_likelihood()
    }

    /// (lengthscale, signal_variance, noise_variance)
    fn hyperparams(&self) -> (f64, f64, f64) {
        let h = self.inner.hyperparams();
        (h.lengthscale, h.signal_variance, h.noise_variance)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: GpModel::from_json(text).map_err(err)? })
    }
}

/// One GP per output feature over a shared window encoding.
#[pyclass(name = "GpBank", frozen)]
struct PyGpBank {
    inner: GpBank,
}

#[pymethods]
impl PyGpBank {
    #[staticmethod]
    #[pyo3(signature = (trace, window = 10, features = None, max_train = 200, max_evals = 60))]
    fn fit(trace: &PyTrace, window: usize, features: Option<Vec<usize>>, max_train: usize, max_evals: usize) -> PyResult<Self> {
        let features = features.unwrap_or_else(|| (0..NUM_FEATURES).collect());
        let opts = if max_evals == 0 { FitOptions::fixed() } else { FitOptions { max_evals, ..FitOptions::default() } };
        let bank = GpBank::fit_rows(&trace.inner.rows(), window, &features, max_train, opts).map_err(err)?;
        Ok(Self { inner: bank })
    }

    #[getter]
    fn features(&self) -> Vec<usize> {
        self.inner.features().to_vec()
    }

    #[getter]
    fn window(&self) -> usize {
        self.inner.window()
    }

    /// Next-sample predictive (mean, variance) per feature from the last `window` rows.
    fn predict_window(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<(f64, f64)>> {
        let rows = to_rows(rows)?;
        Ok(pairs(&self.inner.predict_window(&rows).map_err(err)?))
    }
}

/// Network that maps a window to a Gaussian per feature.
#[pyclass(name = "Net", frozen)]
struct PyNet {
    inner: TrainedNet,
}

#[pymethods]
impl PyNet {
    #[new]
    #[pyo3(signature = (input_dim, arch = "fc", depth = None, width = None, dropout = 0.1, seed = 0))]
    fn new(input_dim: usize, arch: &str, depth: Option<usize>, width: Option<usize>, dropout: f64, seed: u64) -> PyResult<Self> {
        let arch = match arch {
            "fc" | "fully_connected" => Architecture::FullyConnected,
            "resnet" | "residual_mlp" => Architecture::ResidualMlp,
            other => return Err(err(format!("unknown architecture {other:?}"))),
        };
        let base = NetConfig::for_arch(arch, input_dim);
        let cfg = NetConfig { depth: depth.unwrap_or(base.depth), width: width.unwrap_or(base.width), dropout_p: dropout, ..base };
        Ok(Self { inner: TrainedNet::init(cfg, seed).map_err(err)? })
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    /// Evaluation-mode (mean, variance) per feature.
    fn forward(&self, x: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
        Ok(pairs(&self.inner.forward(&x, Mode::Eval).map_err(err)?))
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: TrainedNet::from_json(text).map_err(err)? })
    }
}

/// Jensen-Shannon divergence in nats between two Gaussians on the default grid.
#[pyfunction]
fn gaussian_jsd(mean_p: f64, var_p: f64, mean_q: f64, var_q: f64) -> f64 {
    pair_jsd(&GaussianPredictive::new(mean_p, var_p), &GaussianPredictive::new(mean_q, var_q))
}

/// Exact Shapley values of a game given as a table indexed by coalition bitmask.
#[pyfunction]
fn shapley_from_table(values: Vec<f64>) -> PyResult<Vec<f64>> {
    let v = CharacteristicFn::from_table(values).map_err(err)?;
    Ok(shapley_exact(&v).map_err(err)?.phi)
}

/// Permutation-sampled Shapley values and their standard errors.
#[pyfunction]
#[pyo3(signature = (values, n_perms, seed = 0))]
fn shapley_sampled_from_table(values: Vec<f64>, n_perms: usize, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let v = CharacteristicFn::from_table(values).map_err(err)?;
    let r = shapley_sampled(&v, n_perms, seed).map_err(err)?;
    let se = r.stderr.unwrap_or_default();
    Ok((r.phi, se))
}

/// Run a GP prediction episode and return its summary as a JSON string.
/// `loss` is "none", "drop_all", or a JSON loss-model object.
#[pyfunction]
#[pyo3(signature = (trace, bank, start, blocks = 3, loss = "none"))]
fn gp_episode(trace: &PyTrace, bank: &PyGpBank, start: usize, blocks: usize, loss: &str) -> PyResult<String> {
    let lm: LossModel = match loss {
        "none" => LossModel::None,
        "drop_all" | "drop-all" => LossModel::DropAll,
        json => serde_json::from_str(json).map_err(err)?,
    };
    let cfg = EpisodeConfig { blocks: Some(blocks), window: bank.inner.window(), ..EpisodeConfig::default() };
    let events = lm.arrivals(&trace.inner, start + cfg.window, trace.inner.len());
    let r = run_episode(&trace.inner, start, Predictor::Gp, &bank.inner, &events, &cfg).map_err(err)?;
    serde_json::to_string(&r.summary(false)).map_err(err)
}

#[pymodule]
fn haptic(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrace>()?;
    m.add_class::<PyGpModel>()?;
    m.add_class::<PyGpBank>()?;
    m.add_class::<PyNet>()?;
    m.add_function(wrap_pyfunction!(gaussian_jsd, m)?)?;
    m.add_function(wrap_pyfunction!(shapley_from_table, m)?)?;
    m.add_function(wrap_pyfunction!(shapley_sampled_from_table, m)?)?;
    m.add_function(wrap_pyfunction!(gp_episode, m)?)?;
    m.add("FEATURE_NAMES", FEATURE_NAMES.to_vec())?;
    m.add("NUM_FEATURES", NUM_FEATURES)?;
    Ok(())
}
