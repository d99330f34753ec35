use crate::error::{Error, Result};
use crate::quantum::ProbabilityMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    /// Allowed deviation of every row and column sum from one.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 1000,
        }
    }
}

fn residual(m: &[f64], n: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..n {
        let row: f64 = m[i * n..(i + 1) * n].iter().sum();
        let col: f64 = (0..n).map(|k| m[k * n + i]).sum();
        worst = worst.max((row - 1.0).abs()).max((col - 1.0).abs());
    }
    worst
}

/// Iterated proportional fitting: alternately rescales columns then rows of a
/// nonnegative row-major matrix until it is bistochastic.
pub fn sinkhorn_normalize(
    raw: &[f64],
    dim: usize,
    config: SinkhornConfig,
) -> Result<ProbabilityMatrix> {
    if raw.len() != dim * dim {
        return Err(Error::shape(dim * dim, raw.len()));
    }
    if raw.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::DegenerateMatrix);
    }
    let mut m = raw.to_vec();
    for i in 0..dim {
        let row_zero = m[i * dim..(i + 1) * dim].iter().all(|&x| x == 0.0);
        let col_zero = (0..dim).all(|k| m[k * dim + i] == 0.0);
        if row_zero || col_zero {
            return Err(Error::DegenerateMatrix);
        }
    }

    let mut sweeps = 0;
    loop {
        let r = residual(&m, dim);
        if r <= config.tol {
            return Ok(ProbabilityMatrix::from_raw_unchecked(dim, m));
        }
        if sweeps == config.max_iter {
            return Err(Error::NoConvergence {
                iterations: sweeps,
                residual: r,
            });
        }
        for j in 0..dim {
            let s: f64 = (0..dim).map(|k| m[k * dim + j]).sum();
            for k in 0..dim {
                m[k * dim + j] /= s;
            }
        }
        for k in 0..dim {
            let s: f64 = m[k * dim..(k + 1) * dim].iter().sum();
            for x in &mut m[k * dim..(k + 1) * dim] {
                *x /= s;
            }
        }
        sweeps += 1;
    }
}
