//! Software stand-in for the photonic chip: hidden ground-truth physics,
//! noisy power measurements, interferometric readout, iterated proportional
//! fitting and dataset generation.

mod chip;
mod dataset;
mod readout;
mod sinkhorn;

pub use chip::{
    check_controls, controls_from_slice, fan_parameter_gradient, potential_differences,
    tridiagonal, tridiagonal_adjoint, ChipAdjoint, ChipParams, ChipPass, ChipPhysics,
    ControlVector, FanParams, Fans, Nonlinearity, CHIP_PARAMS, ELECTRODES, WAVEGUIDES,
    WHITEBOX_PARAMS,
};
pub use dataset::{Dataset, DatasetExample, Split};
pub use readout::{interferometric_readout, power_outputs, reconstruct_amplitude, MeasurementMode};
pub use sinkhorn::{sinkhorn_normalize, SinkhornConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::linalg::ComplexMatrix;
use crate::quantum::{born_unchecked, ProbabilityMatrix};

/// Hidden parameters of the simulated chip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipGroundTruth {
    pub params: ChipParams,
    pub nonlinearity: Nonlinearity,
    /// Standard deviation of additive Gaussian noise on measured powers.
    pub sigma: f64,
    /// Seeds noise draws made outside dataset generation (control assessment).
    pub seed: u64,
}

impl Default for ChipGroundTruth {
    fn default() -> Self {
        Self::reference()
    }
}

impl ChipGroundTruth {
    /// Reference simulation: linear chip plus quadratic voltage response,
    /// noiseless.
    pub fn reference() -> Self {
        Self {
            params: ChipParams {
                beta0: [0.0; 3],
                dbeta: [0.8; 3],
                c0: [1.0; 2],
                dc: [0.15; 2],
                fan_in: FanParams::zero(),
                fan_out: FanParams::zero(),
            },
            nonlinearity: Nonlinearity {
                dbeta2: [0.3; 3],
                dc2: [0.08; 2],
            },
            sigma: 0.0,
            seed: 0,
        }
    }

    /// The reference chip with the quadratic terms removed, exactly
    /// representable by the whitebox model.
    pub fn linear() -> Self {
        Self {
            nonlinearity: Nonlinearity::default(),
            ..Self::reference()
        }
    }

    pub fn physics(&self) -> ChipPhysics<'_> {
        ChipPhysics {
            params: &self.params,
            nonlinearity: if self.nonlinearity.is_zero() {
                None
            } else {
                Some(&self.nonlinearity)
            },
        }
    }

    /// Short content hash identifying this ground truth in dataset headers.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("ground truth serialises");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

/// Device unitary at `v`, quadratic terms included.
pub fn ground_truth_unitary(gt: &ChipGroundTruth, v: &ControlVector) -> Result<ComplexMatrix> {
    gt.physics().unitary(v)
}

/// Raw 3x3 powers (row-major, entry `(k, j)` = port `j` to port `k`) with
/// additive Gaussian noise clipped to `[0, 1]`; not yet normalised.
pub fn measure_powers(
    gt: &ChipGroundTruth,
    v: &ControlVector,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let u = ground_truth_unitary(gt, v)?;
    let mut p = born_unchecked(&u).row_major().to_vec();
    if gt.sigma > 0.0 {
        let noise = Normal::new(0.0, gt.sigma).expect("sigma is finite and positive");
        for x in &mut p {
            *x = (*x + noise.sample(rng)).clamp(0.0, 1.0);
        }
    }
    Ok(p)
}

/// Noisy measurement followed by iterated proportional fitting.
pub fn measure_distribution(
    gt: &ChipGroundTruth,
    v: &ControlVector,
    rng: &mut impl Rng,
) -> Result<ProbabilityMatrix> {
    let raw = measure_powers(gt, v, rng)?;
    sinkhorn_normalize(&raw, WAVEGUIDES, SinkhornConfig::default())
}

/// Per-example random stream: independent for every `(seed, split, index)`.
pub fn example_rng(seed: u64, split: Split, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((split.stream_tag() << 48) | index);
    rng
}

pub fn sample_controls(rng: &mut impl Rng) -> ControlVector {
    std::array::from_fn(|_| rng.gen_range(-1.0..=1.0))
}

/// Generates `n` examples for one split.
pub fn generate_split(
    gt: &ChipGroundTruth,
    n: usize,
    mode: MeasurementMode,
    seed: u64,
    split: Split,
) -> Result<Dataset> {
    let examples = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = example_rng(seed, split, i as u64);
            let v = sample_controls(&mut rng);
            let y = match mode {
                MeasurementMode::Power => measure_distribution(gt, &v, &mut rng)?.column_stacked(),
                MeasurementMode::Interferometric => {
                    interferometric_readout(&ground_truth_unitary(gt, &v)?)?
                }
            };
            Ok(DatasetExample { v, y })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        mode,
        split,
        seed,
        sigma: gt.sigma,
        gt_hash: gt.hash(),
        examples,
    })
}

/// Training and testing sets drawn from independent streams.
pub fn generate_dataset(
    gt: &ChipGroundTruth,
    n_train: usize,
    n_test: usize,
    mode: MeasurementMode,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    Ok((
        generate_split(gt, n_train, mode, seed, Split::Train)?,
        generate_split(gt, n_test, mode, seed, Split::Test)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::unitarity_defect;
    use crate::linalg::{expm_minus_i, C64};
    use crate::quantum::{born_probabilities, hermitianize};

    #[test]
    fn quadratic_terms_vanish_at_zero_voltage() {
        let gt = ChipGroundTruth::reference();
        let lin = ChipGroundTruth::linear();
        let v = [0.0; 4];
        let a = ground_truth_unitary(&gt, &v).unwrap();
        let b = ground_truth_unitary(&lin, &v).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn ground_truth_is_unitary() {
        let u =
            ground_truth_unitary(&ChipGroundTruth::reference(), &[0.5, -0.5, 0.25, 0.0]).unwrap();
        assert!(unitarity_defect(&u) < 1e-10);
        assert!(
            ground_truth_unitary(&ChipGroundTruth::reference(), &[1.5, 0.0, 0.0, 0.0]).is_err()
        );
    }

    #[test]
    fn reference_dynamics_are_nontrivial() {
        // Every output probability must move by more than 0.02 somewhere in the domain.
        let gt = ChipGroundTruth::reference();
        let base = power_outputs(&ground_truth_unitary(&gt, &[0.0; 4]).unwrap());
        let mut spread = vec![0.0f64; 9];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let v = sample_controls(&mut rng);
            let y = power_outputs(&ground_truth_unitary(&gt, &v).unwrap());
            for (s, (a, b)) in spread.iter_mut().zip(y.iter().zip(&base)) {
                *s = s.max((a - b).abs());
            }
        }
        assert!(spread.iter().all(|&s| s > 0.02), "{spread:?}");
    }

    #[test]
    fn noiseless_measurement_is_exact_and_deterministic() {
        let gt = ChipGroundTruth::reference();
        let v = [0.3, -0.7, 0.1, 0.9];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let raw = measure_powers(&gt, &v, &mut rng).unwrap();
        let again = measure_powers(&gt, &v, &mut rng).unwrap();
        assert_eq!(raw, again);
        let p = ProbabilityMatrix::from_row_major(3, raw.clone()).unwrap();
        assert!(p.bistochastic_defect() < 1e-12);
        let normalised = measure_distribution(&gt, &v, &mut rng).unwrap();
        for (a, b) in normalised.row_major().iter().zip(&raw) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn noisy_column_sums_stay_within_noise_bound() {
        let gt = ChipGroundTruth {
            sigma: 0.01,
            ..ChipGroundTruth::reference()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let raw = measure_powers(&gt, &[0.2, 0.4, -0.3, 0.8], &mut rng).unwrap();
        let bound = 3.0 * 0.01 * 3f64.sqrt();
        for j in 0..3 {
            let s: f64 = (0..3).map(|k| raw[k * 3 + j]).sum();
            assert!((s - 1.0).abs() < bound, "column {j} sums to {s}");
        }
    }

    #[test]
    fn interferometric_readout_cases() {
        let y = interferometric_readout(&ComplexMatrix::identity(3)).unwrap();
        for k in 0..3 {
            for j in 0..3 {
                let (i0, i90) = (y[2 * (3 * k + j)], y[2 * (3 * k + j) + 1]);
                if k == j {
                    assert!((i0 - 1.0).abs() < 1e-15 && (i90 - 0.5).abs() < 1e-15);
                } else {
                    assert!((i0 - 0.25).abs() < 1e-15 && (i90 - 0.25).abs() < 1e-15);
                }
            }
        }
        let u = ComplexMatrix::diagonal(&[-1.0, 1.0, 1.0]);
        assert_eq!(interferometric_readout(&u).unwrap()[0], 0.0);
    }

    #[test]
    fn interferometric_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let a = ComplexMatrix::from_fn(3, |_, _| {
                C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
            });
            let u = expm_minus_i(&hermitianize(&a), 1.0).unwrap();
            let y = interferometric_readout(&u).unwrap();
            for (idx, z) in u.as_slice().iter().enumerate() {
                let rec = reconstruct_amplitude(y[2 * idx], y[2 * idx + 1], z.norm_sqr());
                assert!((rec - z).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn single_power_example_is_bistochastic() {
        let (train, _) = generate_dataset(
            &ChipGroundTruth::reference(),
            1,
            0,
            MeasurementMode::Power,
            5,
        )
        .unwrap();
        let p = ProbabilityMatrix::from_column_stacked(3, &train.examples[0].y).unwrap();
        assert!(p.bistochastic_defect() < 1e-10);
    }

    #[test]
    fn generation_is_deterministic_and_splits_are_disjoint() {
        let gt = ChipGroundTruth::reference();
        let a = generate_dataset(&gt, 700, 100, MeasurementMode::Interferometric, 11).unwrap();
        let b = generate_dataset(&gt, 700, 100, MeasurementMode::Interferometric, 11).unwrap();
        assert_eq!(a, b);
        for tr in &a.0.examples {
            for te in &a.1.examples {
                let same = tr.v.iter().zip(&te.v).all(|(x, y)| (x - y).abs() <= 1e-12);
                assert!(!same);
            }
        }
        assert!(a
            .0
            .examples
            .iter()
            .all(|e| e.v.iter().all(|x| x.abs() <= 1.0)));
    }

    #[test]
    fn noisy_power_dataset_is_bistochastic_after_fitting() {
        let gt = ChipGroundTruth {
            sigma: 0.02,
            ..ChipGroundTruth::reference()
        };
        let (train, _) = generate_dataset(&gt, 200, 0, MeasurementMode::Power, 3).unwrap();
        for ex in &train.examples {
            let p = ProbabilityMatrix::from_column_stacked(3, &ex.y).unwrap();
            assert!(p.bistochastic_defect() < 1e-8);
        }
    }

    #[test]
    fn born_of_ground_truth_matches_power_outputs() {
        let gt = ChipGroundTruth::reference();
        let u = ground_truth_unitary(&gt, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(
            born_probabilities(&u).unwrap().column_stacked(),
            power_outputs(&u)
        );
    }

    #[test]
    fn jsonl_round_trip() {
        let gt = ChipGroundTruth::reference();
        let (train, _) = generate_dataset(&gt, 20, 0, MeasurementMode::Power, 8).unwrap();
        let mut buf = Vec::new();
        train.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 21);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["mode", "n", "seed", "sigma", "gt_hash"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        let back = Dataset::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, train);
    }
}
