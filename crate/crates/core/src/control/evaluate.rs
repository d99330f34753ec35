use serde::{Deserialize, Serialize};

use super::{ControlResult, TargetKind, TargetPayload, TargetSpec};
use crate::error::{Error, Result};
use crate::quantum::{born_unchecked, distribution_fidelity_avg, gate_fidelity, ProbabilityMatrix};
use crate::simulator::{
    example_rng, ground_truth_unitary, measure_distribution, ChipGroundTruth, Split,
};

/// One row of a control report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub target_id: usize,
    pub kind: TargetKind,
    pub model: String,
    pub predicted_objective: f64,
    pub achieved_fidelity: f64,
    pub achieved_mse: f64,
    pub restarts_used: usize,
}

/// Fidelity statistics over all targets; `None` when there are none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSummary {
    pub count: usize,
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub fraction_gt_99: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlReport {
    pub records: Vec<ControlRecord>,
    pub summary: ControlSummary,
}

fn mse(a: &ProbabilityMatrix, b: &ProbabilityMatrix) -> f64 {
    let n = a.row_major().len() as f64;
    a.row_major()
        .iter()
        .zip(b.row_major())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n
}

impl ControlSummary {
    pub fn from_fidelities(f: &[f64]) -> Self {
        if f.is_empty() {
            return Self {
                count: 0,
                mean: None,
                min: None,
                fraction_gt_99: None,
            };
        }
        let n = f.len() as f64;
        Self {
            count: f.len(),
            mean: Some(f.iter().sum::<f64>() / n),
            min: Some(f.iter().cloned().fold(f64::INFINITY, f64::min)),
            fraction_gt_99: Some(f.iter().filter(|&&x| x > 0.99).count() as f64 / n),
        }
    }
}

/// Tests the found controls on the simulator.
///
/// Distribution targets are compared with the simulator's measured (and, for
/// `sigma > 0`, noisy) distribution at `v_star`; unitary targets with its
/// true unitary. The MSE column compares port-to-port probability matrices
/// in both cases. Each result's `achieved_objective` is set to the fidelity.
pub fn evaluate_controls(
    gt: &ChipGroundTruth,
    model: &str,
    results: &mut [ControlResult],
    targets: &[TargetSpec],
) -> Result<ControlReport> {
    if results.len() != targets.len() {
        return Err(Error::shape(
            format!("{} results", targets.len()),
            results.len(),
        ));
    }
    let mut records = Vec::with_capacity(results.len());
    for (i, (res, target)) in results.iter_mut().zip(targets).enumerate() {
        let (fidelity, achieved_mse) = match &target.payload {
            TargetPayload::Distribution(p) => {
                let measured = measure_distribution(
                    gt,
                    &res.v_star,
                    &mut example_rng(gt.seed, Split::Control, i as u64),
                )?;
                (distribution_fidelity_avg(&measured, p)?, mse(&measured, p))
            }
            TargetPayload::Unitary(w) => {
                let u = ground_truth_unitary(gt, &res.v_star)?;
                (
                    gate_fidelity(&u, w)?,
                    mse(&born_unchecked(&u), &born_unchecked(w)),
                )
            }
        };
        res.achieved_objective = Some(fidelity);
        records.push(ControlRecord {
            target_id: i,
            kind: target.kind(),
            model: model.to_string(),
            predicted_objective: res.predicted_objective,
            achieved_fidelity: fidelity,
            achieved_mse,
            restarts_used: res.restarts_used,
        });
    }
    let fid: Vec<f64> = records.iter().map(|r| r.achieved_fidelity).collect();
    Ok(ControlReport {
        records,
        summary: ControlSummary::from_fidelities(&fid),
    })
}
