//! Shared fixtures for the benchmarks.

use ndarray::Array2;
use qctrl_core::quantum::hermitianize;
use qctrl_core::simulator::{generate_split, Split};
use qctrl_core::{ChipGroundTruth, ComplexMatrix, MeasurementMode, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_hamiltonian(seed: u64) -> ComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = ComplexMatrix::from_fn(3, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    hermitianize(&a)
}

/// Inputs and targets from the reference simulator.
pub fn training_arrays(n: usize, mode: MeasurementMode) -> (Array2<f64>, Array2<f64>) {
    generate_split(&ChipGroundTruth::reference(), n, mode, 0, Split::Train)
        .expect("reference simulator is well formed")
        .to_arrays()
}
