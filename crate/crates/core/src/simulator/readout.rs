//! Measurement models turning a device unitary into dataset outputs.
//!
//! Power mode records `|U_kj|^2`, column-stacked. Interferometric mode mixes
//! each output amplitude with a unit reference arm at two phases,
//! `I_theta = |U_kj + e^{i theta}|^2 / 4` for `theta in {0, pi/2}`, which
//! together with `|U_kj|^2` pins down `U_kj` including its phase.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ensure_unitary, ComplexMatrix, C64};
use crate::quantum::UNITARY_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementMode {
    Power,
    Interferometric,
}

impl MeasurementMode {
    /// Number of outputs per example for an `dim x dim` device.
    pub fn output_len(self, dim: usize) -> usize {
        match self {
            MeasurementMode::Power => dim * dim,
            MeasurementMode::Interferometric => 2 * dim * dim,
        }
    }

    /// Outputs for a unitary assumed valid.
    pub fn outputs(self, u: &ComplexMatrix) -> Vec<f64> {
        match self {
            MeasurementMode::Power => power_outputs(u),
            MeasurementMode::Interferometric => interferometric_unchecked(u),
        }
    }

    /// Adjoint with respect to `U` of `sum(ybar * outputs(U))`.
    pub fn adjoint(self, u: &ComplexMatrix, ybar: &[f64]) -> ComplexMatrix {
        let n = u.dim();
        let mut g = ComplexMatrix::zeros(n);
        match self {
            MeasurementMode::Power => {
                for j in 0..n {
                    for k in 0..n {
                        g[(k, j)] = u[(k, j)] * (2.0 * ybar[j * n + k]);
                    }
                }
            }
            MeasurementMode::Interferometric => {
                let one = C64::new(1.0, 0.0);
                let i = C64::new(0.0, 1.0);
                for (idx, (z, out)) in u.as_slice().iter().zip(g.as_mut_slice()).enumerate() {
                    *out = (z + one) * (0.5 * ybar[2 * idx]) + (z + i) * (0.5 * ybar[2 * idx + 1]);
                }
            }
        }
        g
    }
}

impl fmt::Display for MeasurementMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeasurementMode::Power => "power",
            MeasurementMode::Interferometric => "interferometric",
        })
    }
}

impl FromStr for MeasurementMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power" => Ok(MeasurementMode::Power),
            "interferometric" => Ok(MeasurementMode::Interferometric),
            other => Err(Error::Parse(format!("unknown measurement mode {other:?}"))),
        }
    }
}

/// Column-stacked `|U_kj|^2`.
pub fn power_outputs(u: &ComplexMatrix) -> Vec<f64> {
    let n = u.dim();
    let mut y = Vec::with_capacity(n * n);
    for j in 0..n {
        for k in 0..n {
            y.push(u[(k, j)].norm_sqr());
        }
    }
    y
}

fn interferometric_unchecked(u: &ComplexMatrix) -> Vec<f64> {
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    u.as_slice()
        .iter()
        .flat_map(|z| [(z + one).norm_sqr() / 4.0, (z + i).norm_sqr() / 4.0])
        .collect()
}

/// `[I_0, I_{pi/2}]` for each entry of `U`, row-major.
pub fn interferometric_readout(u: &ComplexMatrix) -> Result<Vec<f64>> {
    ensure_unitary(u, UNITARY_TOL)?;
    Ok(interferometric_unchecked(u))
}

/// Recovers `u` from its two interference intensities and its power `|u|^2`.
pub fn reconstruct_amplitude(i0: f64, i90: f64, power: f64) -> C64 {
    // 4 I_0 = |u|^2 + 1 + 2 Re u,  4 I_{pi/2} = |u|^2 + 1 + 2 Im u
    C64::new(
        (4.0 * i0 - power - 1.0) / 2.0,
        (4.0 * i90 - power - 1.0) / 2.0,
    )
}
