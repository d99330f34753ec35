//! Graybox, whitebox and blackbox modelling of a voltage-controlled
//! three-waveguide photonic chip, with output-distribution and unitary-gate
//! controllers built on top of the trained models.

pub mod control;
pub mod error;
pub mod linalg;
pub mod models;
pub mod neural;
pub mod quantum;
pub mod simulator;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, EigenDecomposition, C64};
pub use models::{Architecture, Model};
pub use quantum::ProbabilityMatrix;
pub use simulator::{ChipGroundTruth, ControlVector, Dataset, DatasetExample, MeasurementMode};
