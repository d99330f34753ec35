//! Coupled three-waveguide chip: tridiagonal Hamiltonian driven by four
//! electrodes, sandwiched between voltage-independent fan-in and fan-out
//! sections.
//!
//! Electrodes flank the waveguides, so waveguide `i` sees the potential
//! difference `dV_i = V_i - V_{i+1}`. Propagation constants respond to their
//! own waveguide's `dV`, couplings to the sum over the two waveguides they join.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, Evolution, C64};

pub const WAVEGUIDES: usize = 3;
pub const ELECTRODES: usize = 4;
/// `4N - 2` parameters of the voltage-dependent chip Hamiltonian.
pub const CHIP_PARAMS: usize = 4 * WAVEGUIDES - 2;
/// Chip parameters plus two tridiagonal fan Hamiltonians.
pub const WHITEBOX_PARAMS: usize = CHIP_PARAMS + 2 * (2 * WAVEGUIDES - 1);

/// Electrode voltages.
pub type ControlVector = [f64; ELECTRODES];

/// Rejects voltages outside `[-1, 1]` or non-finite.
pub fn check_controls(v: &ControlVector) -> Result<()> {
    if v.iter().all(|x| x.is_finite() && (-1.0..=1.0).contains(x)) {
        Ok(())
    } else {
        Err(Error::ControlOutOfDomain(v.to_vec()))
    }
}

/// Converts an arbitrary slice into a checked control vector.
pub fn controls_from_slice(v: &[f64]) -> Result<ControlVector> {
    let arr: ControlVector = v
        .try_into()
        .map_err(|_| Error::shape(format!("{ELECTRODES} voltages"), v.len()))?;
    check_controls(&arr)?;
    Ok(arr)
}

/// Potential difference across each waveguide.
pub fn potential_differences(v: &ControlVector) -> [f64; WAVEGUIDES] {
    [v[0] - v[1], v[1] - v[2], v[2] - v[3]]
}

/// Real symmetric tridiagonal matrix.
pub fn tridiagonal(
    diagonal: &[f64; WAVEGUIDES],
    coupling: &[f64; WAVEGUIDES - 1],
) -> ComplexMatrix {
    let mut h = ComplexMatrix::diagonal(diagonal);
    for i in 0..WAVEGUIDES - 1 {
        h[(i, i + 1)] = C64::new(coupling[i], 0.0);
        h[(i + 1, i)] = C64::new(coupling[i], 0.0);
    }
    h
}

/// Extracts `(d/d diagonal, d/d coupling)` from a Hamiltonian adjoint.
pub fn tridiagonal_adjoint(hbar: &ComplexMatrix) -> ([f64; WAVEGUIDES], [f64; WAVEGUIDES - 1]) {
    let mut d = [0.0; WAVEGUIDES];
    let mut c = [0.0; WAVEGUIDES - 1];
    for i in 0..WAVEGUIDES {
        d[i] = hbar[(i, i)].re;
    }
    for i in 0..WAVEGUIDES - 1 {
        c[i] = hbar[(i, i + 1)].re + hbar[(i + 1, i)].re;
    }
    (d, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanParams {
    pub diagonal: [f64; WAVEGUIDES],
    pub coupling: [f64; WAVEGUIDES - 1],
}

impl FanParams {
    pub fn zero() -> Self {
        Self {
            diagonal: [0.0; WAVEGUIDES],
            coupling: [0.0; WAVEGUIDES - 1],
        }
    }

    pub fn hamiltonian(&self) -> ComplexMatrix {
        tridiagonal(&self.diagonal, &self.coupling)
    }
}

/// Parameters of the linear physical model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChipParams {
    /// Zero-voltage propagation constants.
    pub beta0: [f64; WAVEGUIDES],
    /// Propagation-constant sensitivities.
    pub dbeta: [f64; WAVEGUIDES],
    /// Zero-voltage couplings.
    pub c0: [f64; WAVEGUIDES - 1],
    /// Coupling sensitivities.
    pub dc: [f64; WAVEGUIDES - 1],
    pub fan_in: FanParams,
    pub fan_out: FanParams,
}

impl ChipParams {
    /// Flattened as beta0, dbeta, c0, dc, fan-in (diag, coupling), fan-out (diag, coupling).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(WHITEBOX_PARAMS);
        out.extend_from_slice(&self.beta0);
        out.extend_from_slice(&self.dbeta);
        out.extend_from_slice(&self.c0);
        out.extend_from_slice(&self.dc);
        for fan in [&self.fan_in, &self.fan_out] {
            out.extend_from_slice(&fan.diagonal);
            out.extend_from_slice(&fan.coupling);
        }
        out
    }

    pub fn from_slice(p: &[f64]) -> Result<Self> {
        if p.len() != WHITEBOX_PARAMS {
            return Err(Error::shape(WHITEBOX_PARAMS, p.len()));
        }
        let a3 = |o: usize| [p[o], p[o + 1], p[o + 2]];
        let a2 = |o: usize| [p[o], p[o + 1]];
        Ok(Self {
            beta0: a3(0),
            dbeta: a3(3),
            c0: a2(6),
            dc: a2(8),
            fan_in: FanParams {
                diagonal: a3(10),
                coupling: a2(13),
            },
            fan_out: FanParams {
                diagonal: a3(15),
                coupling: a2(18),
            },
        })
    }
}

/// Quadratic voltage response the linear model does not know about.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Nonlinearity {
    pub dbeta2: [f64; WAVEGUIDES],
    pub dc2: [f64; WAVEGUIDES - 1],
}

impl Nonlinearity {
    pub fn is_zero(&self) -> bool {
        self.dbeta2.iter().chain(&self.dc2).all(|&x| x == 0.0)
    }
}

/// Chip physics with optional quadratic terms; the common forward map of the
/// simulator and the whitebox model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChipPhysics<'a> {
    pub params: &'a ChipParams,
    pub nonlinearity: Option<&'a Nonlinearity>,
}

/// Fan-in and fan-out evolutions, shared by every control vector.
#[derive(Debug, Clone)]
pub struct Fans {
    pub fan_in: Evolution,
    pub fan_out: Evolution,
}

/// Forward pass through the cascade for one control vector.
#[derive(Debug, Clone)]
pub struct ChipPass {
    pub dv: [f64; WAVEGUIDES],
    pub hamiltonian: ComplexMatrix,
    pub chip: Evolution,
    pub total: ComplexMatrix,
}

/// Adjoints produced by [`ChipPhysics::pullback`].
#[derive(Debug, Clone)]
pub struct ChipAdjoint {
    /// Gradient of the chip part (beta0, dbeta, c0, dc), in `to_vec` order.
    pub chip_params: [f64; CHIP_PARAMS],
    /// Adjoint with respect to the fan-in unitary.
    pub fan_in_unitary: ComplexMatrix,
    /// Adjoint with respect to the fan-out unitary.
    pub fan_out_unitary: ComplexMatrix,
    /// Gradient with respect to the electrode voltages.
    pub controls: ControlVector,
}

impl<'a> ChipPhysics<'a> {
    pub fn linear(params: &'a ChipParams) -> Self {
        Self {
            params,
            nonlinearity: None,
        }
    }

    /// Propagation constants and couplings at the given voltages.
    pub fn hamiltonian_terms(
        &self,
        dv: &[f64; WAVEGUIDES],
    ) -> ([f64; WAVEGUIDES], [f64; WAVEGUIDES - 1]) {
        let p = self.params;
        let mut beta = [0.0; WAVEGUIDES];
        let mut coupling = [0.0; WAVEGUIDES - 1];
        for i in 0..WAVEGUIDES {
            beta[i] = p.beta0[i] + p.dbeta[i] * dv[i];
        }
        for i in 0..WAVEGUIDES - 1 {
            let s = dv[i] + dv[i + 1];
            coupling[i] = p.c0[i] + p.dc[i] * s;
        }
        if let Some(q) = self.nonlinearity {
            for i in 0..WAVEGUIDES {
                beta[i] += q.dbeta2[i] * dv[i] * dv[i];
            }
            for i in 0..WAVEGUIDES - 1 {
                let s = dv[i] + dv[i + 1];
                coupling[i] += q.dc2[i] * s * s;
            }
        }
        (beta, coupling)
    }

    pub fn hamiltonian(&self, v: &ControlVector) -> ComplexMatrix {
        let (beta, coupling) = self.hamiltonian_terms(&potential_differences(v));
        tridiagonal(&beta, &coupling)
    }

    pub fn fans(&self) -> Result<Fans> {
        Ok(Fans {
            fan_in: Evolution::new(&self.params.fan_in.hamiltonian(), 1.0)?,
            fan_out: Evolution::new(&self.params.fan_out.hamiltonian(), 1.0)?,
        })
    }

    pub fn forward(&self, v: &ControlVector, fans: &Fans) -> Result<ChipPass> {
        check_controls(v)?;
        let dv = potential_differences(v);
        let (beta, coupling) = self.hamiltonian_terms(&dv);
        let hamiltonian = tridiagonal(&beta, &coupling);
        let chip = Evolution::new(&hamiltonian, 1.0)?;
        let total = fans
            .fan_out
            .unitary()
            .matmul(chip.unitary())
            .matmul(fans.fan_in.unitary());
        Ok(ChipPass {
            dv,
            hamiltonian,
            chip,
            total,
        })
    }

    /// Total device unitary at `v`.
    pub fn unitary(&self, v: &ControlVector) -> Result<ComplexMatrix> {
        Ok(self.forward(v, &self.fans()?)?.total)
    }

    /// Back-propagates the adjoint of the total unitary.
    pub fn pullback(&self, pass: &ChipPass, fans: &Fans, ubar: &ComplexMatrix) -> ChipAdjoint {
        let f_in = fans.fan_in.unitary();
        let f_out = fans.fan_out.unitary();
        let c = pass.chip.unitary();

        let fan_out_unitary = ubar.matmul(&c.matmul(f_in).adjoint());
        let chip_bar = f_out.adjoint().matmul(ubar).matmul(&f_in.adjoint());
        let fan_in_unitary = f_out.matmul(c).adjoint().matmul(ubar);

        let hbar = pass.chip.pullback(&chip_bar);
        let (gbeta, gcoup) = tridiagonal_adjoint(&hbar);
        let p = self.params;
        let dv = &pass.dv;

        let mut chip_params = [0.0; CHIP_PARAMS];
        let mut gdv = [0.0; WAVEGUIDES];
        for i in 0..WAVEGUIDES {
            chip_params[i] = gbeta[i];
            chip_params[3 + i] = gbeta[i] * dv[i];
            let mut slope = p.dbeta[i];
            if let Some(q) = self.nonlinearity {
                slope += 2.0 * q.dbeta2[i] * dv[i];
            }
            gdv[i] += gbeta[i] * slope;
        }
        for i in 0..WAVEGUIDES - 1 {
            let s = dv[i] + dv[i + 1];
            chip_params[6 + i] = gcoup[i];
            chip_params[8 + i] = gcoup[i] * s;
            let mut slope = p.dc[i];
            if let Some(q) = self.nonlinearity {
                slope += 2.0 * q.dc2[i] * s;
            }
            gdv[i] += gcoup[i] * slope;
            gdv[i + 1] += gcoup[i] * slope;
        }
        let controls = [gdv[0], gdv[1] - gdv[0], gdv[2] - gdv[1], -gdv[2]];
        ChipAdjoint {
            chip_params,
            fan_in_unitary,
            fan_out_unitary,
            controls,
        }
    }
}

/// Gradient of the fan parameters given the accumulated fan-unitary adjoints.
pub fn fan_parameter_gradient(
    fans: &Fans,
    fan_in_bar: &ComplexMatrix,
    fan_out_bar: &ComplexMatrix,
) -> [f64; 10] {
    let mut g = [0.0; 10];
    for (k, (evo, ubar)) in [(&fans.fan_in, fan_in_bar), (&fans.fan_out, fan_out_bar)]
        .into_iter()
        .enumerate()
    {
        let (d, c) = tridiagonal_adjoint(&evo.pullback(ubar));
        g[5 * k..5 * k + 3].copy_from_slice(&d);
        g[5 * k + 3..5 * k + 5].copy_from_slice(&c);
    }
    g
}
