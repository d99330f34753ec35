//! The three end-to-end architectures, their training loop and checkpoints.

mod blackbox;
mod checkpoint;
mod graybox;
mod training;
mod whitebox;

pub use blackbox::{blackbox_spec, BlackboxModel};
pub use checkpoint::{Checkpoint, CheckpointParameters, LayerRecord};
pub use graybox::{graybox_spec, hamiltonian_from_outputs, GrayboxModel, GrayboxPrediction};
pub use training::{evaluate_model, train_model, train_model_with, TrainConfig, TrainReport};
pub use whitebox::{WhiteboxModel, WhiteboxPrediction};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::quantum::ProbabilityMatrix;
use crate::simulator::{ChipParams, ControlVector, MeasurementMode, WAVEGUIDES};

/// Examples per work unit in batched loss evaluation. Fixed so that the
/// floating-point reduction order does not depend on the thread count.
pub(crate) const PARALLEL_CHUNK: usize = 256;

/// Summary of a completed training run, stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub iterations: usize,
    pub learning_rate: f64,
    pub final_train_mse: f64,
    pub final_test_mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Graybox,
    Whitebox,
    Blackbox,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [
        Architecture::Graybox,
        Architecture::Whitebox,
        Architecture::Blackbox,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Graybox => "graybox",
            Architecture::Whitebox => "whitebox",
            Architecture::Blackbox => "blackbox",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "graybox" => Ok(Architecture::Graybox),
            "whitebox" => Ok(Architecture::Whitebox),
            "blackbox" => Ok(Architecture::Blackbox),
            other => Err(Error::Parse(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Graybox(GrayboxModel),
    Whitebox(WhiteboxModel),
    Blackbox(BlackboxModel),
}

impl From<GrayboxModel> for Model {
    fn from(m: GrayboxModel) -> Self {
        Model::Graybox(m)
    }
}

impl From<WhiteboxModel> for Model {
    fn from(m: WhiteboxModel) -> Self {
        Model::Whitebox(m)
    }
}

impl From<BlackboxModel> for Model {
    fn from(m: BlackboxModel) -> Self {
        Model::Blackbox(m)
    }
}

fn no_unitary(what: &str) -> Error {
    Error::UnsupportedModel(format!("a blackbox does not provide access to {what}"))
}

impl Model {
    pub fn new(arch: Architecture, mode: MeasurementMode, seed: u64) -> Self {
        match arch {
            Architecture::Graybox => GrayboxModel::new(mode, seed).into(),
            Architecture::Whitebox => WhiteboxModel::new(mode, seed).into(),
            Architecture::Blackbox => BlackboxModel::new(mode, seed).into(),
        }
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            Model::Graybox(_) => Architecture::Graybox,
            Model::Whitebox(_) => Architecture::Whitebox,
            Model::Blackbox(_) => Architecture::Blackbox,
        }
    }

    pub fn mode(&self) -> MeasurementMode {
        match self {
            Model::Graybox(m) => m.mode,
            Model::Whitebox(m) => m.mode,
            Model::Blackbox(m) => m.mode,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Model::Graybox(m) => m.seed,
            Model::Whitebox(m) => m.seed,
            Model::Blackbox(m) => m.seed,
        }
    }

    pub fn output_len(&self) -> usize {
        self.mode().output_len(WAVEGUIDES)
    }

    pub fn training(&self) -> Option<&TrainingMeta> {
        match self {
            Model::Graybox(m) => m.training.as_ref(),
            Model::Whitebox(m) => m.training.as_ref(),
            Model::Blackbox(m) => m.training.as_ref(),
        }
    }

    pub fn set_training(&mut self, meta: Option<TrainingMeta>) {
        match self {
            Model::Graybox(m) => m.training = meta,
            Model::Whitebox(m) => m.training = meta,
            Model::Blackbox(m) => m.training = meta,
        }
    }

    pub fn is_trained(&self) -> bool {
        self.training().is_some()
    }

    /// Flat trainable parameters.
    pub fn params(&self) -> Vec<f64> {
        match self {
            Model::Graybox(m) => m.net.weights.params.clone(),
            Model::Whitebox(m) => m.params.to_vec(),
            Model::Blackbox(m) => m.net.weights.params.clone(),
        }
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        let want = self.num_params();
        if p.len() != want {
            return Err(Error::shape(format!("{want} parameters"), p.len()));
        }
        match self {
            Model::Graybox(m) => m.net.weights.params.copy_from_slice(p),
            Model::Whitebox(m) => m.params = ChipParams::from_slice(p)?,
            Model::Blackbox(m) => m.net.weights.params.copy_from_slice(p),
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        match self {
            Model::Graybox(m) => m.net.spec.num_params(),
            Model::Whitebox(_) => crate::simulator::WHITEBOX_PARAMS,
            Model::Blackbox(m) => m.net.spec.num_params(),
        }
    }

    /// SHA-256 of the little-endian parameter bytes, hex encoded.
    pub fn parameter_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.architecture().as_str().as_bytes());
        for p in self.params() {
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Measurement-layer outputs at `v`.
    pub fn predict(&self, v: &ControlVector) -> Result<Vec<f64>> {
        match self {
            Model::Graybox(m) => Ok(m.predict(v)?.outputs),
            Model::Whitebox(m) => Ok(m.predict(v)?.outputs),
            Model::Blackbox(m) => m.predict(v),
        }
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            Model::Graybox(m) => m.predict_batch(x),
            Model::Whitebox(m) => m.predict_batch(x),
            Model::Blackbox(m) => m.predict_batch(x),
        }
    }

    /// Predicted Hamiltonian. For the whitebox this is the voltage-dependent
    /// chip section only.
    pub fn predict_hamiltonian(&self, v: &ControlVector) -> Result<ComplexMatrix> {
        match self {
            Model::Graybox(m) => Ok(m.predict(v)?.hamiltonian),
            Model::Whitebox(m) => Ok(m.predict(v)?.hamiltonian),
            Model::Blackbox(_) => Err(no_unitary("a Hamiltonian")),
        }
    }

    pub fn predict_unitary(&self, v: &ControlVector) -> Result<ComplexMatrix> {
        match self {
            Model::Graybox(m) => Ok(m.predict(v)?.unitary),
            Model::Whitebox(m) => Ok(m.predict(v)?.unitary),
            Model::Blackbox(_) => Err(no_unitary("unitaries")),
        }
    }

    /// Predicted port-to-port distribution. Available for every model except
    /// an interferometric blackbox, whose outputs do not determine powers.
    pub fn predict_probabilities(&self, v: &ControlVector) -> Result<ProbabilityMatrix> {
        match self {
            Model::Blackbox(m) => match m.mode {
                MeasurementMode::Power => {
                    ProbabilityMatrix::from_column_stacked(WAVEGUIDES, &m.predict(v)?)
                }
                MeasurementMode::Interferometric => Err(Error::UnsupportedModel(
                    "an interferometric blackbox does not predict output powers".into(),
                )),
            },
            _ => Ok(crate::quantum::born_unchecked(&self.predict_unitary(v)?)),
        }
    }

    /// Mean squared error on `(x, y)` and its gradient with respect to
    /// [`Model::params`].
    pub fn mse_and_gradient(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView2<f64>,
    ) -> Result<(f64, Vec<f64>)> {
        match self {
            Model::Graybox(m) => m.mse_and_gradient(x, y),
            Model::Whitebox(m) => m.mse_and_gradient(x, y),
            Model::Blackbox(m) => m.mse_and_gradient(x, y),
        }
    }
}
