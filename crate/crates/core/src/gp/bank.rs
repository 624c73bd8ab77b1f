use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FitOptions, GaussianPredictive, GpError, GpModel, Hyperparams};
use crate::ingest::{encode_window, one_step_pairs, NUM_FEATURES};

/// One independent GP per output channel, all sharing the same encoded input
/// (a window of `window` rows restricted to `features`, flattened row-major).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GpBank {
    window: usize,
    features: Vec<usize>,
    models: Vec<GpModel>,
}

/// One-step training pairs from `rows`, evenly subsampled to at most
/// `max_points`. Targets are the full 9-channel row following each window.
pub fn training_pairs<R: AsRef<[f64]>>(
    rows: &[R],
    window: usize,
    features: &[usize],
    max_points: usize,
) -> (Vec<Vec<f64>>, Vec<[f64; NUM_FEATURES]>) {
    let (inputs, idx) = one_step_pairs(rows, window, features);
    let total = inputs.len();
    let keep: Vec<usize> = if max_points == 0 || total <= max_points {
        (0..total).collect()
    } else {
        (0..max_points).map(|i| i * total / max_points).collect()
    };
    let target = |j: usize| -> [f64; NUM_FEATURES] {
        let r = rows[j].as_ref();
        std::array::from_fn(|k| r[k])
    };
    let mut xs = Vec::with_capacity(keep.len());
    let mut ys = Vec::with_capacity(keep.len());
    let mut inputs: Vec<Option<Vec<f64>>> = inputs.into_iter().map(Some).collect();
    for i in keep {
        xs.push(inputs[i].take().expect("indices are distinct"));
        ys.push(target(idx[i]));
    }
    (xs, ys)
}

impl GpBank {
    /// Fits the nine per-channel models in parallel.
    pub fn fit(
        inputs: &[Vec<f64>],
        targets: &[[f64; NUM_FEATURES]],
        window: usize,
        features: &[usize],
        init: &[Hyperparams; NUM_FEATURES],
        opts: FitOptions,
    ) -> Result<Self, GpError> {
        if let Some(row) = inputs.iter().find(|r| r.len() != window * features.len()) {
            return Err(GpError::DimensionMismatch { expected: window * features.len(), got: row.len() });
        }
        let models = (0..NUM_FEATURES)
            .into_par_iter()
            .map(|k| {
                let y: Vec<f64> = targets.iter().map(|t| t[k]).collect();
                GpModel::fit(inputs, &y, init[k], opts)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { window, features: features.to_vec(), models })
    }

    /// Convenience: build pairs from `rows` and fit from the default hyperparameters.
    pub fn fit_rows<R: AsRef<[f64]> + Sync>(
        rows: &[R],
        window: usize,
        features: &[usize],
        max_points: usize,
        opts: FitOptions,
    ) -> Result<Self, GpError> {
        let (x, y) = training_pairs(rows, window, features, max_points);
        Self::fit(&x, &y, window, features, &[Hyperparams::default(); NUM_FEATURES], opts)
    }

    /// New bank on `inputs`/`targets`, warm-started from the current hyperparameters.
    pub fn refit(&self, inputs: &[Vec<f64>], targets: &[[f64; NUM_FEATURES]], max_evals: usize) -> Result<Self, GpError> {
        let init: [Hyperparams; NUM_FEATURES] = std::array::from_fn(|k| self.models[k].hyperparams());
        Self::fit(inputs, targets, self.window, &self.features, &init, FitOptions::warm_start(max_evals))
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn models(&self) -> &[GpModel] {
        &self.models
    }

    pub fn input_dim(&self) -> usize {
        self.window * self.features.len()
    }

    /// Training inputs shared by every per-channel model.
    pub fn train_inputs(&self) -> Vec<Vec<f64>> {
        let m = &self.models[0];
        (0..m.n_train()).map(|i| m.train_input(i).to_vec()).collect()
    }

    pub fn train_targets(&self) -> Vec<[f64; NUM_FEATURES]> {
        let n = self.models[0].n_train();
        (0..n).map(|i| std::array::from_fn(|k| self.models[k].train_targets()[i])).collect()
    }

    pub fn encode<R: AsRef<[f64]>>(&self, rows: &[R]) -> Vec<f64> {
        encode_window(rows, &self.features)
    }

    pub fn predict(&self, x: &[f64]) -> Result<[GaussianPredictive; NUM_FEATURES], GpError> {
        let mut out = [GaussianPredictive::default(); NUM_FEATURES];
        for (o, m) in out.iter_mut().zip(&self.models) {
            *o = m.predict(x)?;
        }
        Ok(out)
    }

    /// Per-channel predictive of the next observed sample (noise included).
    pub fn predict_observation(&self, x: &[f64]) -> Result<[GaussianPredictive; NUM_FEATURES], GpError> {
        let mut out = [GaussianPredictive::default(); NUM_FEATURES];
        for (o, m) in out.iter_mut().zip(&self.models) {
            *o = m.predict_observation(x)?;
        }
        Ok(out)
    }

    pub fn predict_window<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<[GaussianPredictive; NUM_FEATURES], GpError> {
        if rows.len() != self.window {
            return Err(GpError::DimensionMismatch { expected: self.window, got: rows.len() });
        }
        self.predict(&self.encode(rows))
    }
}
