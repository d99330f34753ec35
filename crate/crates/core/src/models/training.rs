use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Model, TrainingMeta};
use crate::error::{Error, Result};
use crate::neural::AdamState;
use crate::simulator::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            learning_rate: 0.003,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Training MSE evaluated before each update.
    pub train_mse: Vec<f64>,
    /// Testing MSE at the same parameters as `train_mse`.
    pub test_mse: Vec<f64>,
    /// Errors after the last update.
    pub final_train_mse: f64,
    pub final_test_mse: f64,
    pub final_parameters: Vec<f64>,
    pub wall_seconds: f64,
    pub seed: u64,
}

fn check_mode(model: &Model, data: &Dataset) -> Result<()> {
    if data.mode != model.mode() {
        return Err(Error::shape(
            format!("{} dataset ({} outputs)", model.mode(), model.output_len()),
            format!("{} dataset ({} outputs)", data.mode, data.output_len()),
        ));
    }
    data.validate()
}

/// Mean squared error over all examples and output coordinates.
pub fn evaluate_model(model: &Model, data: &Dataset) -> Result<f64> {
    check_mode(model, data)?;
    if data.is_empty() {
        return Ok(0.0);
    }
    let (x, y) = data.to_arrays();
    let pred = model.predict_batch(x.view())?;
    let total: f64 = pred
        .iter()
        .zip(y.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(total / (pred.len() as f64))
}

/// Full-batch Adam on the training set.
pub fn train_model(
    model: &mut Model,
    train: &Dataset,
    test: &Dataset,
    config: &TrainConfig,
) -> Result<TrainReport> {
    train_model_with(model, train, test, config, |_, _, _| {})
}

/// As [`train_model`], calling `progress(iteration, train_mse, test_mse)`
/// once per iteration.
pub fn train_model_with(
    model: &mut Model,
    train: &Dataset,
    test: &Dataset,
    config: &TrainConfig,
    mut progress: impl FnMut(usize, f64, f64),
) -> Result<TrainReport> {
    check_mode(model, train)?;
    check_mode(model, test)?;
    if train.is_empty() {
        return Err(Error::shape("at least one training example", 0));
    }
    let start = Instant::now();
    let (x, y) = train.to_arrays();
    let mut params = model.params();
    let mut adam = AdamState::new(params.len(), config.learning_rate);
    let mut train_curve = Vec::with_capacity(config.iterations);
    let mut test_curve = Vec::with_capacity(config.iterations);

    for it in 0..config.iterations {
        let (loss, grad) = model.mse_and_gradient(x.view(), y.view())?;
        let test_loss = evaluate_model(model, test)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { iteration: it });
        }
        train_curve.push(loss);
        test_curve.push(test_loss);
        progress(it, loss, test_loss);
        adam.step(&mut params, &grad)?;
        model.set_params(&params)?;
    }

    let final_train_mse = evaluate_model(model, train)?;
    let final_test_mse = evaluate_model(model, test)?;
    if !final_train_mse.is_finite() {
        return Err(Error::NonFiniteLoss {
            iteration: config.iterations,
        });
    }
    model.set_training(Some(TrainingMeta {
        iterations: config.iterations,
        learning_rate: config.learning_rate,
        final_train_mse,
        final_test_mse,
    }));
    Ok(TrainReport {
        train_mse: train_curve,
        test_mse: test_curve,
        final_train_mse,
        final_test_mse,
        final_parameters: params,
        wall_seconds: start.elapsed().as_secs_f64(),
        seed: model.seed(),
    })
}
