use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{TrainingMeta, PARALLEL_CHUNK};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, Evolution, C64};
use crate::neural::{Activation, Mlp, MlpSpec};
use crate::quantum::hermitianize;
use crate::simulator::{check_controls, ControlVector, MeasurementMode, ELECTRODES, WAVEGUIDES};

const N2: usize = WAVEGUIDES * WAVEGUIDES;

/// Network from voltages to a general complex matrix, followed by
/// Hermitian projection, `e^{-iH}` and the measurement layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayboxModel {
    pub mode: MeasurementMode,
    pub seed: u64,
    pub net: Mlp,
    pub training: Option<TrainingMeta>,
}

/// Hidden quantities exposed by a graybox prediction.
#[derive(Debug, Clone)]
pub struct GrayboxPrediction {
    pub hamiltonian: ComplexMatrix,
    pub unitary: ComplexMatrix,
    pub outputs: Vec<f64>,
}

pub fn graybox_spec() -> MlpSpec {
    MlpSpec::new(
        vec![ELECTRODES, 50, 100, 2 * N2],
        vec![Activation::Tanh, Activation::Tanh, Activation::Linear],
    )
    .expect("static spec is valid")
}

/// Network outputs `[Re A (row-major), Im A (row-major)]` to `H = (A + A^dagger)/2`.
pub fn hamiltonian_from_outputs(out: &[f64]) -> ComplexMatrix {
    let a = ComplexMatrix::from_fn(WAVEGUIDES, |r, c| {
        let i = r * WAVEGUIDES + c;
        C64::new(out[i], out[N2 + i])
    });
    hermitianize(&a)
}

/// Maps an adjoint of `H` back to the 18 network outputs.
fn output_adjoint(hbar: &ComplexMatrix, row: &mut [f64]) {
    let abar = hermitianize(hbar);
    for (i, z) in abar.as_slice().iter().enumerate() {
        row[i] = z.re;
        row[N2 + i] = z.im;
    }
}

impl GrayboxModel {
    pub fn new(mode: MeasurementMode, seed: u64) -> Self {
        Self {
            mode,
            seed,
            net: Mlp::new(graybox_spec(), seed),
            training: None,
        }
    }

    pub fn predict(&self, v: &ControlVector) -> Result<GrayboxPrediction> {
        check_controls(v)?;
        let out = self.net.predict(v)?;
        let hamiltonian = hamiltonian_from_outputs(&out);
        let unitary = Evolution::new(&hamiltonian, 1.0)?.into_unitary();
        let outputs = self.mode.outputs(&unitary);
        Ok(GrayboxPrediction {
            hamiltonian,
            unitary,
            outputs,
        })
    }

    /// Unitary at `v` together with a pullback from `dL/dU` to `dL/dV`.
    pub fn unitary_with_pullback(
        &self,
        v: &ControlVector,
    ) -> Result<(
        ComplexMatrix,
        impl Fn(&ComplexMatrix) -> Result<ControlVector> + '_,
    )> {
        check_controls(v)?;
        let x = ArrayView2::from_shape((1, ELECTRODES), v.as_slice()).expect("1 x 4 view");
        let tape = self.net.forward(x)?;
        let out = tape.output().row(0).to_vec();
        let evo = Evolution::new(&hamiltonian_from_outputs(&out), 1.0)?;
        let u = evo.unitary().clone();
        let pullback = move |ubar: &ComplexMatrix| -> Result<ControlVector> {
            let mut up = Array2::zeros((1, 2 * N2));
            output_adjoint(&evo.pullback(ubar), up.as_slice_mut().expect("contiguous"));
            let g = self.net.backward(&tape, up.view())?;
            Ok(std::array::from_fn(|i| g.input[(0, i)]))
        };
        Ok((u, pullback))
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let tape = self.net.forward(x)?;
        let out = tape.output();
        let d = self.mode.output_len(WAVEGUIDES);
        let rows: Vec<Vec<f64>> = (0..out.nrows())
            .into_par_iter()
            .map(|i| {
                let h = hamiltonian_from_outputs(out.row(i).as_slice().expect("contiguous"));
                Ok(self.mode.outputs(Evolution::new(&h, 1.0)?.unitary()))
            })
            .collect::<Result<_>>()?;
        Ok(Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j]))
    }

    /// Mean squared error over examples and coordinates, and its gradient
    /// with respect to the network parameters.
    pub fn mse_and_gradient(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView2<f64>,
    ) -> Result<(f64, Vec<f64>)> {
        let n = x.nrows();
        let d = self.mode.output_len(WAVEGUIDES);
        if y.dim() != (n, d) {
            return Err(Error::shape(
                format!("({n}, {d})"),
                format!("{:?}", y.dim()),
            ));
        }
        let tape = self.net.forward(x)?;
        let out = tape.output();
        let norm = 2.0 / (n * d) as f64;
        let mode = self.mode;

        let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .collect::<Vec<_>>()
            .par_chunks(PARALLEL_CHUNK)
            .map(|idx| {
                let mut losses = Vec::with_capacity(idx.len());
                let mut adj = vec![0.0; idx.len() * 2 * N2];
                for (slot, &i) in idx.iter().enumerate() {
                    let h = hamiltonian_from_outputs(out.row(i).as_slice().expect("contiguous"));
                    let evo = Evolution::new(&h, 1.0)?;
                    let u = evo.unitary();
                    let pred = mode.outputs(u);
                    let mut ybar = vec![0.0; d];
                    let mut loss = 0.0;
                    for j in 0..d {
                        let r = pred[j] - y[(i, j)];
                        loss += r * r;
                        ybar[j] = norm * r;
                    }
                    losses.push(loss);
                    let hbar = evo.pullback(&mode.adjoint(u, &ybar));
                    output_adjoint(&hbar, &mut adj[slot * 2 * N2..(slot + 1) * 2 * N2]);
                }
                Ok((losses, adj))
            })
            .collect::<Result<_>>()?;

        let mut total = 0.0;
        let mut upstream = Vec::with_capacity(n * 2 * N2);
        for (losses, adj) in chunks {
            total += losses.iter().sum::<f64>();
            upstream.extend(adj);
        }
        let upstream = Array2::from_shape_vec((n, 2 * N2), upstream).expect("one row per example");
        let grads = self.net.backward(&tape, upstream.view())?;
        Ok((total / (n * d) as f64, grads.params))
    }
}
