use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};
use crate::quantum::{born_unchecked, ProbabilityMatrix};
use crate::simulator::{
    example_rng, ground_truth_unitary, sample_controls, ChipGroundTruth, Split, WAVEGUIDES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Distribution,
    Unitary,
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetKind::Distribution => "distribution",
            TargetKind::Unitary => "unitary",
        })
    }
}

impl FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distribution" => Ok(TargetKind::Distribution),
            "unitary" => Ok(TargetKind::Unitary),
            other => Err(Error::Parse(format!("unknown target kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Simulated at a random admissible control vector.
    ReachableSampled,
    /// Haar-random unitary, not necessarily reachable.
    Haar,
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetPayload {
    Distribution(ProbabilityMatrix),
    Unitary(ComplexMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub payload: TargetPayload,
    pub provenance: Provenance,
}

impl TargetSpec {
    pub fn kind(&self) -> TargetKind {
        match self.payload {
            TargetPayload::Distribution(_) => TargetKind::Distribution,
            TargetPayload::Unitary(_) => TargetKind::Unitary,
        }
    }

    pub fn external(payload: TargetPayload) -> Self {
        Self {
            payload,
            provenance: Provenance::External,
        }
    }
}

fn reachable(gt: &ChipGroundTruth, kind: TargetKind, rng: &mut ChaCha8Rng) -> Result<TargetSpec> {
    let v = sample_controls(rng);
    let u = ground_truth_unitary(gt, &v)?;
    let payload = match kind {
        TargetKind::Distribution => TargetPayload::Distribution(born_unchecked(&u)),
        TargetKind::Unitary => TargetPayload::Unitary(u),
    };
    Ok(TargetSpec {
        payload,
        provenance: Provenance::ReachableSampled,
    })
}

/// Target produced by the noiseless simulator at a uniformly drawn control vector.
pub fn sample_reachable_target(
    gt: &ChipGroundTruth,
    kind: TargetKind,
    seed: u64,
) -> Result<TargetSpec> {
    reachable(gt, kind, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `count` reachable targets, target `i` drawn from its own stream of `seed`.
pub fn sample_reachable_targets(
    gt: &ChipGroundTruth,
    kind: TargetKind,
    count: usize,
    seed: u64,
) -> Result<Vec<TargetSpec>> {
    (0..count)
        .map(|i| reachable(gt, kind, &mut example_rng(seed, Split::Control, i as u64)))
        .collect()
}

/// Haar-random unitary: Gram-Schmidt on a complex Gaussian matrix with the
/// phases of the triangular factor removed.
pub fn sample_haar_unitary(seed: u64) -> ComplexMatrix {
    let n = WAVEGUIDES;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<C64>> = (0..n)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    C64::new(re, im)
                })
                .collect()
        })
        .collect();
    for j in 0..n {
        let (done, rest) = cols.split_at_mut(j);
        let col = &mut rest[0];
        for prev in done.iter() {
            let proj: C64 = prev.iter().zip(col.iter()).map(|(p, x)| p.conj() * x).sum();
            for (x, p) in col.iter_mut().zip(prev) {
                *x -= proj * p;
            }
        }
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in col.iter_mut() {
            *z /= norm;
        }
    }
    ComplexMatrix::from_fn(n, |r, c| cols[c][r])
}

pub fn sample_haar_target(seed: u64) -> TargetSpec {
    TargetSpec {
        payload: TargetPayload::Unitary(sample_haar_unitary(seed)),
        provenance: Provenance::Haar,
    }
}
