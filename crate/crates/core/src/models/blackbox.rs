use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::TrainingMeta;
use crate::error::{Error, Result};
use crate::neural::{mlp_backward, mlp_forward, Activation, Mlp, MlpSpec};
use crate::simulator::{check_controls, ControlVector, MeasurementMode, ELECTRODES, WAVEGUIDES};

/// Plain network from voltages to measured outputs.
///
/// Power mode ends in `N` softmax groups of `N`, one distribution per input
/// port. Interferometric outputs are not normalised, so that head is sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlackboxModel {
    pub mode: MeasurementMode,
    pub seed: u64,
    pub net: Mlp,
    pub training: Option<TrainingMeta>,
}

pub fn blackbox_spec(mode: MeasurementMode) -> MlpSpec {
    let head = match mode {
        MeasurementMode::Power => Activation::Softmax { group: WAVEGUIDES },
        MeasurementMode::Interferometric => Activation::Sigmoid,
    };
    MlpSpec::new(
        vec![ELECTRODES, 50, 100, mode.output_len(WAVEGUIDES)],
        vec![Activation::Tanh, Activation::Tanh, head],
    )
    .expect("static spec is valid")
}

impl BlackboxModel {
    pub fn new(mode: MeasurementMode, seed: u64) -> Self {
        Self {
            mode,
            seed,
            net: Mlp::new(blackbox_spec(mode), seed),
            training: None,
        }
    }

    pub fn predict(&self, v: &ControlVector) -> Result<Vec<f64>> {
        check_controls(v)?;
        self.net.predict(v)
    }

    /// Outputs at `v` together with a pullback from `dL/dy` to `dL/dV`.
    #[allow(clippy::type_complexity)]
    pub fn outputs_with_pullback(
        &self,
        v: &ControlVector,
    ) -> Result<(Vec<f64>, impl Fn(&[f64]) -> Result<ControlVector> + '_)> {
        check_controls(v)?;
        let (y, tape) = mlp_forward(&self.net.weights, &self.net.spec, v)?;
        let pullback = move |ybar: &[f64]| -> Result<ControlVector> {
            let (_, gx) = mlp_backward(&self.net.weights, &self.net.spec, &tape, ybar)?;
            Ok(std::array::from_fn(|i| gx[i]))
        };
        Ok((y, pullback))
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.net.forward(x)?.output().clone())
    }

    pub fn mse_and_gradient(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView2<f64>,
    ) -> Result<(f64, Vec<f64>)> {
        let tape = self.net.forward(x)?;
        let out = tape.output();
        if y.dim() != out.dim() {
            return Err(Error::shape(
                format!("{:?}", out.dim()),
                format!("{:?}", y.dim()),
            ));
        }
        let count = (out.nrows() * out.ncols()) as f64;
        let resid = out - &y;
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / count;
        let upstream = resid.mapv(|r| 2.0 * r / count);
        let grads = self.net.backward(&tape, upstream.view())?;
        Ok((loss, grads.params))
    }
}
