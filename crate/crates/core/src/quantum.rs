//! Physics layers shared by the graybox and whitebox models: Hermitian
//! projection, Born-rule readout, the fan-in/chip/fan-out cascade and the
//! two fidelity measures used to score controllers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ensure_unitary, ComplexMatrix, C64};

/// Unitarity tolerance on inputs to the Born rule, cascade and fidelities.
pub const UNITARY_TOL: f64 = 1e-8;
/// Tolerance on the normalisation of classical distributions.
pub const DISTRIBUTION_TOL: f64 = 1e-6;

/// Transition probabilities: entry `(k, j)` is `P(j -> k)`, so each column is
/// the output distribution for one input port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl ProbabilityMatrix {
    /// Wraps row-major entries after checking that every column is a distribution.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::shape(format!("{} entries", dim * dim), data.len()));
        }
        let m = Self { dim, data };
        for j in 0..dim {
            check_distribution(&m.column(j))?;
        }
        Ok(m)
    }

    /// Builds the matrix from the column-stacked `N^2` vector used in datasets.
    pub fn from_column_stacked(dim: usize, stacked: &[f64]) -> Result<Self> {
        if stacked.len() != dim * dim {
            return Err(Error::shape(
                format!("{} entries", dim * dim),
                stacked.len(),
            ));
        }
        let mut data = vec![0.0; dim * dim];
        for j in 0..dim {
            for k in 0..dim {
                data[k * dim + j] = stacked[j * dim + k];
            }
        }
        Self::from_row_major(dim, data)
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    pub(crate) fn from_raw_unchecked(dim: usize, data: Vec<f64>) -> Self {
        Self { dim, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.data[k * self.dim + j]
    }

    pub fn row_major(&self) -> &[f64] {
        &self.data
    }

    /// Output distribution for input port `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|k| self.get(k, j)).collect()
    }

    /// Columns concatenated, giving the `N^2` vector used as a model output.
    pub fn column_stacked(&self) -> Vec<f64> {
        (0..self.dim).flat_map(|j| self.column(j)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|k| (0..self.dim).map(|j| self.get(k, j)).sum())
            .collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|k| self.get(k, j)).sum())
            .collect()
    }

    /// Largest deviation of any row or column sum from one.
    pub fn bistochastic_defect(&self) -> f64 {
        self.row_sums()
            .into_iter()
            .chain(self.column_sums())
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// `(A + A^dagger) / 2` with an exactly real diagonal.
pub fn hermitianize(a: &ComplexMatrix) -> ComplexMatrix {
    let n = a.dim();
    ComplexMatrix::from_fn(n, |r, c| {
        if r == c {
            C64::new(a[(r, r)].re, 0.0)
        } else {
            (a[(r, c)] + a[(c, r)].conj()) * 0.5
        }
    })
}

/// `|U_kj|^2` for every entry.
pub fn born_probabilities(u: &ComplexMatrix) -> Result<ProbabilityMatrix> {
    ensure_unitary(u, UNITARY_TOL)?;
    Ok(born_unchecked(u))
}

pub(crate) fn born_unchecked(u: &ComplexMatrix) -> ProbabilityMatrix {
    ProbabilityMatrix::from_raw_unchecked(
        u.dim(),
        u.as_slice().iter().map(|z| z.norm_sqr()).collect(),
    )
}

/// `U_fan_out * U_chip * U_fan_in`.
pub fn cascade(
    fan_in: &ComplexMatrix,
    chip: &ComplexMatrix,
    fan_out: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    for u in [fan_in, chip, fan_out] {
        ensure_unitary(u, UNITARY_TOL)?;
    }
    Ok(fan_out.matmul(chip).matmul(fan_in))
}

/// `|tr(U^dagger W)|^2 / N^2`.
pub fn gate_fidelity(u: &ComplexMatrix, w: &ComplexMatrix) -> Result<f64> {
    if u.dim() != w.dim() {
        return Err(Error::shape(u.dim(), w.dim()));
    }
    ensure_unitary(u, UNITARY_TOL)?;
    ensure_unitary(w, UNITARY_TOL)?;
    Ok(gate_fidelity_unchecked(u, w))
}

pub(crate) fn overlap_trace(u: &ComplexMatrix, w: &ComplexMatrix) -> C64 {
    u.as_slice()
        .iter()
        .zip(w.as_slice())
        .map(|(a, b)| a.conj() * b)
        .sum()
}

pub(crate) fn gate_fidelity_unchecked(u: &ComplexMatrix, w: &ComplexMatrix) -> f64 {
    let n = u.dim() as f64;
    (overlap_trace(u, w).norm_sqr() / (n * n)).min(1.0)
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if let Some(bad) = p.iter().find(|&&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::NotADistribution(format!(
            "entry {bad} is negative or non-finite"
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOL {
        return Err(Error::NotADistribution(format!("entries sum to {total}")));
    }
    Ok(())
}

/// Bhattacharyya overlap `sum_i sqrt(p_i q_i)`.
pub fn classical_fidelity(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape(p.len(), q.len()));
    }
    check_distribution(p)?;
    check_distribution(q)?;
    Ok(p.iter()
        .zip(q)
        .map(|(a, b)| (a * b).sqrt())
        .sum::<f64>()
        .min(1.0))
}

/// Classical fidelity averaged over the input ports (columns).
pub fn distribution_fidelity_avg(
    measured: &ProbabilityMatrix,
    target: &ProbabilityMatrix,
) -> Result<f64> {
    if measured.dim() != target.dim() {
        return Err(Error::shape(target.dim(), measured.dim()));
    }
    let n = measured.dim();
    let mut total = 0.0;
    for j in 0..n {
        total += classical_fidelity(&measured.column(j), &target.column(j))?;
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::expm_minus_i;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_unitary(rng: &mut impl Rng) -> ComplexMatrix {
        let a = ComplexMatrix::from_fn(3, |_, _| {
            C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
        });
        expm_minus_i(&hermitianize(&a), 1.0).unwrap()
    }

    fn dft3() -> ComplexMatrix {
        ComplexMatrix::from_fn(3, |r, c| {
            C64::from_polar(1.0 / 3f64.sqrt(), 2.0 * PI * (r * c) as f64 / 3.0)
        })
    }

    #[test]
    fn hermitianize_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = hermitianize(&ComplexMatrix::from_fn(3, |_, _| {
            C64::new(rng.gen(), rng.gen())
        }));
        assert_eq!(hermitianize(&h), h);

        let b = ComplexMatrix::from_fn(3, |_, _| C64::new(rng.gen(), rng.gen()));
        let anti = b.sub(&b.adjoint());
        assert!(hermitianize(&anti).max_abs_diff(&ComplexMatrix::zeros(3)) < 1e-15);

        let mut a = ComplexMatrix::zeros(3);
        a[(0, 1)] = C64::new(1.0, 2.0);
        a[(1, 0)] = C64::new(3.0, 0.0);
        assert_eq!(hermitianize(&a)[(0, 1)], C64::new(2.0, 1.0));
    }

    #[test]
    fn born_rule_cases() {
        let p = born_probabilities(&ComplexMatrix::identity(3)).unwrap();
        assert_eq!(p, ProbabilityMatrix::identity(3));

        let mut swap = ComplexMatrix::zeros(3);
        swap[(0, 1)] = C64::new(0.0, -1.0);
        swap[(1, 0)] = C64::new(0.0, -1.0);
        swap[(2, 2)] = C64::new(1.0, 0.0);
        let p = born_probabilities(&swap).unwrap();
        assert_eq!(
            p.row_major(),
            &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]
        );

        let p = born_probabilities(&dft3()).unwrap();
        assert!(p.row_major().iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));

        let bad = ComplexMatrix::identity(3).scale(C64::new(1.1, 0.0));
        assert!(matches!(
            born_probabilities(&bad),
            Err(Error::NotUnitary { .. })
        ));
    }

    #[test]
    fn born_output_is_bistochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let p = born_probabilities(&random_unitary(&mut rng)).unwrap();
            assert!(p.bistochastic_defect() < 1e-9);
        }
    }

    #[test]
    fn column_stacking_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = born_probabilities(&random_unitary(&mut rng)).unwrap();
        let stacked = p.column_stacked();
        assert_eq!(&stacked[0..3], p.column(0).as_slice());
        assert_eq!(
            ProbabilityMatrix::from_column_stacked(3, &stacked).unwrap(),
            p
        );
    }

    #[test]
    fn cascade_cases() {
        let id = ComplexMatrix::identity(3);
        assert_eq!(cascade(&id, &id, &id).unwrap(), id);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b, c) = (
            random_unitary(&mut rng),
            random_unitary(&mut rng),
            random_unitary(&mut rng),
        );
        assert!(cascade(&id, &b, &id).unwrap().max_abs_diff(&b) < 1e-15);
        let grouped = c.matmul(&b.matmul(&a));
        assert!(cascade(&a, &b, &c).unwrap().max_abs_diff(&grouped) < 1e-12);
    }

    #[test]
    fn gate_fidelity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_unitary(&mut rng);
        assert!((gate_fidelity(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        let phased = u.scale(C64::from_polar(1.0, 0.77));
        assert!((gate_fidelity(&u, &phased).unwrap() - 1.0).abs() < 1e-12);
        let z = ComplexMatrix::diagonal(&[1.0, 1.0, -1.0]);
        assert!(
            (gate_fidelity(&ComplexMatrix::identity(3), &z).unwrap() - 1.0 / 9.0).abs() < 1e-15
        );
        let w = random_unitary(&mut rng);
        assert!((gate_fidelity(&u, &w).unwrap() - gate_fidelity(&w, &u).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn classical_fidelity_cases() {
        let p = [0.2, 0.3, 0.5];
        assert!((classical_fidelity(&p, &p).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            classical_fidelity(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(),
            0.0
        );
        let u = [1.0 / 3.0; 3];
        assert!(
            (classical_fidelity(&u, &[1.0, 0.0, 0.0]).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-12
        );
        assert!(matches!(
            classical_fidelity(&[0.5, 0.6, 0.0], &p),
            Err(Error::NotADistribution(_))
        ));
        assert!(matches!(
            classical_fidelity(&[-0.1, 0.6, 0.5], &p),
            Err(Error::NotADistribution(_))
        ));
    }

    #[test]
    fn classical_fidelity_drops_under_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let eps = rng.gen_range(1e-3..0.04);
            let q = vec![p[0] + eps, p[1] - eps, p[2]];
            let f = classical_fidelity(&p, &q).unwrap();
            assert!((0.0..1.0 - 1e-9).contains(&f));
        }
    }

    #[test]
    fn averaged_distribution_fidelity() {
        let id = ProbabilityMatrix::identity(3);
        assert!((distribution_fidelity_avg(&id, &id).unwrap() - 1.0).abs() < 1e-15);
        let swap =
            ProbabilityMatrix::from_row_major(3, vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0])
                .unwrap();
        assert!((distribution_fidelity_avg(&id, &swap).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let flat = ProbabilityMatrix::from_row_major(3, vec![1.0 / 3.0; 9]).unwrap();
        assert!((distribution_fidelity_avg(&id, &flat).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }
}
