//! Controllers that search the voltage box for a target output distribution
//! or a target unitary, using a frozen model as the forward map.

mod evaluate;
mod targets;

pub use evaluate::{evaluate_controls, ControlRecord, ControlReport, ControlSummary};
pub use targets::{
    sample_haar_target, sample_haar_unitary, sample_reachable_target, sample_reachable_targets,
    Provenance, TargetKind, TargetPayload, TargetSpec,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ensure_unitary, ComplexMatrix};
use crate::models::Model;
use crate::neural::AdamState;
use crate::quantum::{overlap_trace, ProbabilityMatrix, UNITARY_TOL};
use crate::simulator::{
    power_outputs, ChipGroundTruth, ControlVector, Fans, MeasurementMode, ELECTRODES, WAVEGUIDES,
};

/// Objective below which a run counts as converged.
pub const CONVERGED_OBJECTIVE: f64 = 1e-8;

/// Forward maps a controller can differentiate through.
pub trait Controllable: Sync {
    fn label(&self) -> String;

    /// Fails if the map is not fit for control (e.g. an untrained model).
    fn ensure_ready(&self) -> Result<()> {
        Ok(())
    }

    /// Fails if this map cannot be controlled towards targets of `kind`.
    fn check_supports(&self, _kind: TargetKind) -> Result<()> {
        Ok(())
    }

    /// Predicted column-stacked distribution at `v`, and the gradient with
    /// respect to `v` of `sum(cotangent(p) * p)`.
    fn distribution_vjp(
        &self,
        v: &ControlVector,
        cotangent: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, ControlVector)>;

    /// Predicted unitary at `v`, and the gradient with respect to `v` of the
    /// loss whose adjoint at `U` is `cotangent(U)`.
    fn unitary_vjp(
        &self,
        v: &ControlVector,
        cotangent: &dyn Fn(&ComplexMatrix) -> ComplexMatrix,
    ) -> Result<(ComplexMatrix, ControlVector)>;
}

/// Distribution VJP for any map that exposes its unitary.
fn distribution_via_unitary<C: Controllable + ?Sized>(
    map: &C,
    v: &ControlVector,
    cotangent: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Result<(Vec<f64>, ControlVector)> {
    let (u, g) = map.unitary_vjp(v, &|u| {
        let p = power_outputs(u);
        MeasurementMode::Power.adjoint(u, &cotangent(&p))
    })?;
    Ok((power_outputs(&u), g))
}

impl Controllable for Model {
    fn label(&self) -> String {
        self.architecture().to_string()
    }

    fn ensure_ready(&self) -> Result<()> {
        if !self.is_trained() {
            return Err(Error::ModelNotTrained);
        }
        Ok(())
    }

    fn check_supports(&self, kind: TargetKind) -> Result<()> {
        match (self, kind) {
            (Model::Blackbox(_), TargetKind::Unitary) => Err(Error::UnsupportedModel(
                "a blackbox does not provide access to unitaries; use a graybox or whitebox model"
                    .into(),
            )),
            (Model::Blackbox(m), TargetKind::Distribution) if m.mode != MeasurementMode::Power => {
                Err(Error::UnsupportedModel(
                    "an interferometric blackbox does not predict output powers".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    fn distribution_vjp(
        &self,
        v: &ControlVector,
        cotangent: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, ControlVector)> {
        match self {
            Model::Blackbox(m) => {
                if m.mode != MeasurementMode::Power {
                    return Err(Error::UnsupportedModel(
                        "an interferometric blackbox does not predict output powers".into(),
                    ));
                }
                let (p, pullback) = m.outputs_with_pullback(v)?;
                let g = pullback(&cotangent(&p))?;
                Ok((p, g))
            }
            _ => distribution_via_unitary(self, v, cotangent),
        }
    }

    fn unitary_vjp(
        &self,
        v: &ControlVector,
        cotangent: &dyn Fn(&ComplexMatrix) -> ComplexMatrix,
    ) -> Result<(ComplexMatrix, ControlVector)> {
        match self {
            Model::Graybox(m) => {
                let (u, pullback) = m.unitary_with_pullback(v)?;
                let g = pullback(&cotangent(&u))?;
                Ok((u, g))
            }
            Model::Whitebox(m) => {
                let (u, pullback) = m.unitary_with_pullback(v)?;
                let g = pullback(&cotangent(&u))?;
                Ok((u, g))
            }
            Model::Blackbox(_) => Err(Error::UnsupportedModel(
                "a blackbox does not provide access to unitaries; use a graybox or whitebox model"
                    .into(),
            )),
        }
    }
}

/// The simulator itself as a controllable map: the perfect model.
pub struct ExactSimulator<'a> {
    gt: &'a ChipGroundTruth,
    fans: Fans,
}

impl<'a> ExactSimulator<'a> {
    pub fn new(gt: &'a ChipGroundTruth) -> Result<Self> {
        Ok(Self {
            gt,
            fans: gt.physics().fans()?,
        })
    }
}

impl Controllable for ExactSimulator<'_> {
    fn label(&self) -> String {
        "simulator".into()
    }

    fn distribution_vjp(
        &self,
        v: &ControlVector,
        cotangent: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, ControlVector)> {
        distribution_via_unitary(self, v, cotangent)
    }

    fn unitary_vjp(
        &self,
        v: &ControlVector,
        cotangent: &dyn Fn(&ComplexMatrix) -> ComplexMatrix,
    ) -> Result<(ComplexMatrix, ControlVector)> {
        let physics = self.gt.physics();
        let pass = physics.forward(v, &self.fans)?;
        let ubar = cotangent(&pass.total);
        let g = physics.pullback(&pass, &self.fans, &ubar).controls;
        Ok((pass.total, g))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    pub restarts: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Initial voltages are drawn uniformly from `[-init_range, init_range]`.
    pub init_range: f64,
    /// A restart stops once its objective reaches this value.
    pub stop_objective: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            iterations: 500,
            learning_rate: 0.05,
            seed: 0,
            init_range: 0.9,
            stop_objective: 1e-10,
        }
    }
}

impl ControlConfig {
    /// Configuration for target `index` of a batch run under `self.seed`.
    pub fn for_target(&self, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        Self {
            seed: rng.gen(),
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlResult {
    pub v_star: ControlVector,
    /// Model-predicted objective at `v_star`: squared error for
    /// distributions, `1 - F` for unitaries.
    pub predicted_objective: f64,
    /// Filled in by [`evaluate_controls`].
    pub achieved_objective: Option<f64>,
    pub restarts_used: usize,
    pub converged: bool,
}

/// Gradient descent over `V = tanh(w)`, best of several seeded restarts.
fn minimize(
    objective: impl Fn(&ControlVector) -> Result<(f64, ControlVector)>,
    config: &ControlConfig,
) -> Result<ControlResult> {
    let mut best_v = [0.0; ELECTRODES];
    let mut best = f64::INFINITY;
    let mut restarts_used = 0;

    for restart in 0..config.restarts.max(1) {
        restarts_used = restart + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(restart as u64);
        let mut w: Vec<f64> = (0..ELECTRODES)
            .map(|_| {
                rng.gen_range(-config.init_range..=config.init_range)
                    .atanh()
            })
            .collect();
        let mut adam = AdamState::new(ELECTRODES, config.learning_rate);

        for _ in 0..=config.iterations {
            let v: ControlVector = std::array::from_fn(|i| w[i].tanh());
            let (f, gv) = objective(&v)?;
            if f < best {
                best = f;
                best_v = v;
            }
            if f <= config.stop_objective {
                break;
            }
            let gw: Vec<f64> = (0..ELECTRODES)
                .map(|i| gv[i] * (1.0 - v[i] * v[i]))
                .collect();
            adam.step(&mut w, &gw)?;
        }
        if best <= config.stop_objective {
            break;
        }
    }

    let v_star = best_v.map(|x| x.clamp(-1.0, 1.0));
    let predicted_objective = objective(&v_star)?.0;
    Ok(ControlResult {
        v_star,
        predicted_objective,
        achieved_objective: None,
        restarts_used,
        converged: predicted_objective < CONVERGED_OBJECTIVE,
    })
}

/// Voltages whose predicted distribution is closest to `target` in squared error.
pub fn optimize_output<C: Controllable + ?Sized>(
    model: &C,
    target: &ProbabilityMatrix,
    config: &ControlConfig,
) -> Result<ControlResult> {
    model.check_supports(TargetKind::Distribution)?;
    model.ensure_ready()?;
    if target.dim() != WAVEGUIDES {
        return Err(Error::shape(WAVEGUIDES, target.dim()));
    }
    let t = target.column_stacked();
    minimize(
        |v| {
            let (p, g) = model.distribution_vjp(v, &|p| {
                p.iter().zip(&t).map(|(a, b)| 2.0 * (a - b)).collect()
            })?;
            Ok((p.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum(), g))
        },
        config,
    )
}

/// Voltages maximising the predicted gate fidelity with `target`.
pub fn optimize_unitary<C: Controllable + ?Sized>(
    model: &C,
    target: &ComplexMatrix,
    config: &ControlConfig,
) -> Result<ControlResult> {
    model.check_supports(TargetKind::Unitary)?;
    model.ensure_ready()?;
    if target.dim() != WAVEGUIDES {
        return Err(Error::shape(WAVEGUIDES, target.dim()));
    }
    ensure_unitary(target, UNITARY_TOL)?;
    let n2 = (WAVEGUIDES * WAVEGUIDES) as f64;
    minimize(
        |v| {
            let (u, g) = model.unitary_vjp(v, &|u| {
                let s = overlap_trace(u, target);
                target.scale(-s.conj() * (2.0 / n2))
            })?;
            let fidelity = overlap_trace(&u, target).norm_sqr() / n2;
            Ok((1.0 - fidelity, g))
        },
        config,
    )
}

pub fn optimize_target<C: Controllable + ?Sized>(
    model: &C,
    target: &TargetSpec,
    config: &ControlConfig,
) -> Result<ControlResult> {
    match &target.payload {
        TargetPayload::Distribution(p) => optimize_output(model, p, config),
        TargetPayload::Unitary(u) => optimize_unitary(model, u, config),
    }
}

/// Optimises every target in parallel; target `i` uses
/// `config.for_target(i)`, so results do not depend on scheduling.
pub fn optimize_targets<C: Controllable + ?Sized>(
    model: &C,
    targets: &[TargetSpec],
    config: &ControlConfig,
) -> Result<Vec<ControlResult>> {
    for t in targets {
        model.check_supports(t.kind())?;
    }
    model.ensure_ready()?;
    targets
        .par_iter()
        .enumerate()
        .map(|(i, t)| optimize_target(model, t, &config.for_target(i)))
        .collect()
}
