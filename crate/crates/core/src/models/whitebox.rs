use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{TrainingMeta, PARALLEL_CHUNK};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::simulator::{
    check_controls, fan_parameter_gradient, ChipParams, ChipPhysics, ControlVector, FanParams,
    MeasurementMode, CHIP_PARAMS, WAVEGUIDES, WHITEBOX_PARAMS,
};

/// Tridiagonal chip Hamiltonian linear in the waveguide potential
/// differences, between trainable fan-in and fan-out sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteboxModel {
    pub mode: MeasurementMode,
    pub seed: u64,
    pub params: ChipParams,
    pub training: Option<TrainingMeta>,
}

#[derive(Debug, Clone)]
pub struct WhiteboxPrediction {
    /// Voltage-dependent chip Hamiltonian (fans excluded).
    pub hamiltonian: ComplexMatrix,
    /// Fan-out * chip * fan-in.
    pub unitary: ComplexMatrix,
    pub outputs: Vec<f64>,
}

impl WhiteboxModel {
    /// Near-physical start: beta0 = 0, C0 = 1, sensitivities 0.1, identity
    /// fans, every parameter then jittered by a seeded uniform +-0.01.
    pub fn new(mode: MeasurementMode, seed: u64) -> Self {
        let base = ChipParams {
            beta0: [0.0; 3],
            dbeta: [0.1; 3],
            c0: [1.0; 2],
            dc: [0.1; 2],
            fan_in: FanParams::zero(),
            fan_out: FanParams::zero(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jittered: Vec<f64> = base
            .to_vec()
            .iter()
            .map(|p| p + rng.gen_range(-0.01..=0.01))
            .collect();
        Self {
            mode,
            seed,
            params: ChipParams::from_slice(&jittered).expect("20 parameters"),
            training: None,
        }
    }

    pub fn from_params(mode: MeasurementMode, params: ChipParams) -> Self {
        Self {
            mode,
            seed: 0,
            params,
            training: None,
        }
    }

    pub fn physics(&self) -> ChipPhysics<'_> {
        ChipPhysics::linear(&self.params)
    }

    pub fn predict(&self, v: &ControlVector) -> Result<WhiteboxPrediction> {
        let physics = self.physics();
        let pass = physics.forward(v, &physics.fans()?)?;
        let outputs = self.mode.outputs(&pass.total);
        Ok(WhiteboxPrediction {
            hamiltonian: pass.hamiltonian,
            unitary: pass.total,
            outputs,
        })
    }

    pub fn unitary_with_pullback(
        &self,
        v: &ControlVector,
    ) -> Result<(
        ComplexMatrix,
        impl Fn(&ComplexMatrix) -> Result<ControlVector> + '_,
    )> {
        check_controls(v)?;
        let physics = self.physics();
        let fans = physics.fans()?;
        let pass = physics.forward(v, &fans)?;
        let u = pass.total.clone();
        let pullback = move |ubar: &ComplexMatrix| -> Result<ControlVector> {
            Ok(self.physics().pullback(&pass, &fans, ubar).controls)
        };
        Ok((u, pullback))
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let physics = self.physics();
        let fans = physics.fans()?;
        let d = self.mode.output_len(WAVEGUIDES);
        let rows: Vec<Vec<f64>> = (0..x.nrows())
            .into_par_iter()
            .map(|i| {
                let v: ControlVector = std::array::from_fn(|j| x[(i, j)]);
                Ok(self.mode.outputs(&physics.forward(&v, &fans)?.total))
            })
            .collect::<Result<_>>()?;
        Ok(Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j]))
    }

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
        let physics = self.physics();
        let fans = physics.fans()?;
        let norm = 2.0 / (n * d) as f64;
        let mode = self.mode;

        struct Partial {
            loss: f64,
            chip: [f64; CHIP_PARAMS],
            fan_in: ComplexMatrix,
            fan_out: ComplexMatrix,
        }

        let partials: Vec<Partial> = (0..n)
            .collect::<Vec<_>>()
            .par_chunks(PARALLEL_CHUNK)
            .map(|idx| {
                let mut acc = Partial {
                    loss: 0.0,
                    chip: [0.0; CHIP_PARAMS],
                    fan_in: ComplexMatrix::zeros(WAVEGUIDES),
                    fan_out: ComplexMatrix::zeros(WAVEGUIDES),
                };
                for &i in idx {
                    let v: ControlVector = std::array::from_fn(|j| x[(i, j)]);
                    let pass = physics.forward(&v, &fans)?;
                    let pred = mode.outputs(&pass.total);
                    let mut ybar = vec![0.0; d];
                    for j in 0..d {
                        let r = pred[j] - y[(i, j)];
                        acc.loss += r * r;
                        ybar[j] = norm * r;
                    }
                    let adj = physics.pullback(&pass, &fans, &mode.adjoint(&pass.total, &ybar));
                    for (a, g) in acc.chip.iter_mut().zip(adj.chip_params) {
                        *a += g;
                    }
                    acc.fan_in = acc.fan_in.add(&adj.fan_in_unitary);
                    acc.fan_out = acc.fan_out.add(&adj.fan_out_unitary);
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;

        let mut loss = 0.0;
        let mut grad = vec![0.0; WHITEBOX_PARAMS];
        let mut fan_in = ComplexMatrix::zeros(WAVEGUIDES);
        let mut fan_out = ComplexMatrix::zeros(WAVEGUIDES);
        for p in partials {
            loss += p.loss;
            for (g, c) in grad.iter_mut().zip(p.chip) {
                *g += c;
            }
            fan_in = fan_in.add(&p.fan_in);
            fan_out = fan_out.add(&p.fan_out);
        }
        grad[CHIP_PARAMS..].copy_from_slice(&fan_parameter_gradient(&fans, &fan_in, &fan_out));
        Ok((loss / (n * d) as f64, grad))
    }
}
