//! JSON checkpoints.
//!
//! ```json
//! {"architecture": "graybox", "mode": "power", "dim": 3, "seed": 7,
//!  "parameters": {"layers": [{"rows": 50, "cols": 4, "activation": "tanh",
//!                             "weights": [[...], ...], "bias": [...]}, ...]},
//!  "training": {"iterations": 3000, ...}}
//! ```
//!
//! Whitebox parameters are stored by name instead of as layers.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, BlackboxModel, GrayboxModel, Model, TrainingMeta, WhiteboxModel};
use crate::error::{Error, Result};
use crate::neural::{Activation, Mlp, MlpSpec, MlpWeights};
use crate::simulator::{ChipParams, MeasurementMode, ELECTRODES, WAVEGUIDES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub rows: usize,
    pub cols: usize,
    pub activation: Activation,
    /// `rows` vectors of length `cols`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CheckpointParameters {
    Network { layers: Vec<LayerRecord> },
    Chip(ChipParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub mode: MeasurementMode,
    pub dim: usize,
    pub seed: u64,
    pub parameters: CheckpointParameters,
    pub training: Option<TrainingMeta>,
}

fn layers_of(net: &Mlp) -> Vec<LayerRecord> {
    (0..net.spec.num_layers())
        .map(|l| {
            let (w, b) = net.weights.layer(&net.spec, l);
            LayerRecord {
                rows: w.nrows(),
                cols: w.ncols(),
                activation: net.spec.activations[l],
                weights: w.rows().into_iter().map(|r| r.to_vec()).collect(),
                bias: b.to_vec(),
            }
        })
        .collect()
}

fn net_from_layers(layers: &[LayerRecord]) -> Result<Mlp> {
    let Some(first) = layers.first() else {
        return Err(Error::InvalidSpec("checkpoint has no layers".into()));
    };
    let mut sizes = vec![first.cols];
    let mut activations = Vec::with_capacity(layers.len());
    let mut params = Vec::new();
    for (l, layer) in layers.iter().enumerate() {
        if layer.cols != *sizes.last().unwrap() {
            return Err(Error::InvalidSpec(format!(
                "layer {l} takes {} inputs but the previous layer has {} outputs",
                layer.cols,
                sizes.last().unwrap()
            )));
        }
        if layer.weights.len() != layer.rows
            || layer.weights.iter().any(|r| r.len() != layer.cols)
            || layer.bias.len() != layer.rows
        {
            return Err(Error::shape(
                format!(
                    "{}x{} weights and {} biases in layer {l}",
                    layer.rows, layer.cols, layer.rows
                ),
                "ragged or mis-sized arrays",
            ));
        }
        sizes.push(layer.rows);
        activations.push(layer.activation);
        for row in &layer.weights {
            params.extend_from_slice(row);
        }
        params.extend_from_slice(&layer.bias);
    }
    let spec = MlpSpec::new(sizes, activations)?;
    let weights = MlpWeights { params };
    weights.check(&spec)?;
    Ok(Mlp { spec, weights })
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        let parameters = match model {
            Model::Graybox(m) => CheckpointParameters::Network {
                layers: layers_of(&m.net),
            },
            Model::Blackbox(m) => CheckpointParameters::Network {
                layers: layers_of(&m.net),
            },
            Model::Whitebox(m) => CheckpointParameters::Chip(m.params),
        };
        Checkpoint {
            architecture: model.architecture(),
            mode: model.mode(),
            dim: WAVEGUIDES,
            seed: model.seed(),
            parameters,
            training: model.training().cloned(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        if self.dim != WAVEGUIDES {
            return Err(Error::shape(
                format!("dim {WAVEGUIDES}"),
                format!("dim {}", self.dim),
            ));
        }
        let out_len = self.mode.output_len(WAVEGUIDES);
        let check_net = |net: &Mlp| -> Result<()> {
            let want_out = match self.architecture {
                Architecture::Graybox => 2 * WAVEGUIDES * WAVEGUIDES,
                _ => out_len,
            };
            if net.spec.input_size() != ELECTRODES || net.spec.output_size() != want_out {
                return Err(Error::shape(
                    format!("{ELECTRODES} -> {want_out} network"),
                    format!(
                        "{} -> {} network",
                        net.spec.input_size(),
                        net.spec.output_size()
                    ),
                ));
            }
            Ok(())
        };
        let model = match (self.architecture, self.parameters) {
            (Architecture::Graybox, CheckpointParameters::Network { layers }) => {
                let net = net_from_layers(&layers)?;
                check_net(&net)?;
                Model::Graybox(GrayboxModel {
                    mode: self.mode,
                    seed: self.seed,
                    net,
                    training: self.training,
                })
            }
            (Architecture::Blackbox, CheckpointParameters::Network { layers }) => {
                let net = net_from_layers(&layers)?;
                check_net(&net)?;
                Model::Blackbox(BlackboxModel {
                    mode: self.mode,
                    seed: self.seed,
                    net,
                    training: self.training,
                })
            }
            (Architecture::Whitebox, CheckpointParameters::Chip(params)) => {
                Model::Whitebox(WhiteboxModel {
                    mode: self.mode,
                    seed: self.seed,
                    params,
                    training: self.training,
                })
            }
            (arch, _) => {
                return Err(Error::Parse(format!(
                    "parameter block does not match architecture {arch}"
                )));
            }
        };
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

impl Model {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Checkpoint::from_model(self).save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::load(path)?.into_model()
    }
}
