//! Small dense complex linear algebra.
//!
//! Everything here is sized for the qutrit problem (N = 3) but works for any
//! square dimension. The matrix exponential `e^{-iHT}` is evaluated through a
//! Hermitian eigendecomposition, which keeps the result unitary to rounding
//! and gives a closed-form reverse-mode derivative.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Maximum tolerated `|H - H^dagger|` entry for inputs to the eigensolver.
pub const HERMITIAN_TOL: f64 = 1e-9;
/// Eigenvalue gaps below this use the analytic diagonal limit in the gradient.
pub const DEGENERACY_TOL: f64 = 1e-9;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_TOL: f64 = 1e-13;

/// Dense square complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_vec(dim: usize, data: Vec<C64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::shape(format!("{} entries", dim * dim), data.len()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                data.push(f(r, c));
            }
        }
        Self { dim, data }
    }

    /// Builds a real matrix from row-major values.
    pub fn from_real(dim: usize, values: &[f64]) -> Result<Self> {
        Self::from_vec(dim, values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, |r, c| {
            if r == c {
                C64::new(values[r], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |r, c| self[(c, r)].conj())
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matmul");
        let n = self.dim;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self.data[r * n + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..n {
                    out.data[r * n + c] += a * rhs.data[k * n + c];
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in add");
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in sub");
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// Largest entry-wise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry-wise modulus of `H - H^dagger`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.dim + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.dim + c]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{}) [", self.dim, self.dim)?;
        for r in 0..self.dim {
            write!(f, "  ")?;
            for c in 0..self.dim {
                let z = self[(r, c)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Spectrum and orthonormal eigenvectors of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Real eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: ComplexMatrix,
}

impl EigenDecomposition {
    /// `V diag(lambda) V^dagger`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let v = &self.eigenvectors;
        let n = v.dim();
        ComplexMatrix::from_fn(n, |r, c| {
            (0..n)
                .map(|k| v[(r, k)] * self.eigenvalues[k] * v[(c, k)].conj())
                .sum()
        })
    }
}

/// Cyclic Jacobi diagonalisation of a Hermitian matrix.
///
/// Eigenvalues come back ascending; each eigenvector column is phase-fixed so
/// that its largest-magnitude entry is real and positive.
pub fn hermitian_eig(h: &ComplexMatrix) -> Result<EigenDecomposition> {
    let defect = h.hermiticity_defect();
    if defect.is_nan() || defect > HERMITIAN_TOL {
        return Err(Error::NotHermitian { defect });
    }
    let n = h.dim();
    let mut a = h.clone();
    for i in 0..n {
        a[(i, i)] = C64::new(a[(i, i)].re, 0.0);
    }
    let mut v = ComplexMatrix::identity(n);
    let scale = a.frobenius_norm().max(1.0);

    let mut converged = false;
    for _ in 0..=JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= JACOBI_TOL * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                jacobi_rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged {
        return Err(Error::ConvergenceFailure {
            sweeps: JACOBI_MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let eigenvalues = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = ComplexMatrix::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        let mut pivot = 0;
        for r in 1..n {
            if v[(r, src)].norm() > v[(pivot, src)].norm() {
                pivot = r;
            }
        }
        let z = v[(pivot, src)];
        let phase = if z.norm() > 0.0 {
            z.conj() / z.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for r in 0..n {
            vectors[(r, dst)] = v[(r, src)] * phase;
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors: vectors,
    })
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.dim();
    let mut s = 0.0;
    for r in 0..n {
        for c in 0..n {
            if r != c {
                s += a[(r, c)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Applies `a <- W^dagger a W`, `v <- v W` with the unitary `W` that zeroes `a[p][q]`.
fn jacobi_rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let r = apq.norm();
    if r < f64::MIN_POSITIVE {
        return;
    }
    let n = a.dim();
    let phase = apq.conj() / r;
    let theta = (a[(q, q)].re - a[(p, p)].re) / (2.0 * r);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let cs = 1.0 / (t * t + 1.0).sqrt();
    let sn = t * cs;

    let w_pp = C64::new(cs, 0.0);
    let w_pq = C64::new(sn, 0.0);
    let w_qp = phase * (-sn);
    let w_qq = phase * cs;

    for k in 0..n {
        let (akp, akq) = (a[(k, p)], a[(k, q)]);
        a[(k, p)] = akp * w_pp + akq * w_qp;
        a[(k, q)] = akp * w_pq + akq * w_qq;
        let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
        v[(k, p)] = vkp * w_pp + vkq * w_qp;
        v[(k, q)] = vkp * w_pq + vkq * w_qq;
    }
    for k in 0..n {
        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
        a[(p, k)] = w_pp.conj() * apk + w_qp.conj() * aqk;
        a[(q, k)] = w_pq.conj() * apk + w_qq.conj() * aqk;
    }
    a[(p, q)] = C64::new(0.0, 0.0);
    a[(q, p)] = C64::new(0.0, 0.0);
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
}

/// A cached evaluation of `U = e^{-iHT}` that can also pull adjoints back to `H`.
#[derive(Debug, Clone)]
pub struct Evolution {
    eig: EigenDecomposition,
    time: f64,
    phases: Vec<C64>,
    unitary: ComplexMatrix,
}

impl Evolution {
    pub fn new(h: &ComplexMatrix, time: f64) -> Result<Self> {
        let eig = hermitian_eig(h)?;
        let phases: Vec<C64> = eig
            .eigenvalues
            .iter()
            .map(|&l| C64::from_polar(1.0, -l * time))
            .collect();
        let v = &eig.eigenvectors;
        let n = v.dim();
        let unitary = ComplexMatrix::from_fn(n, |r, c| {
            (0..n)
                .map(|k| v[(r, k)] * phases[k] * v[(c, k)].conj())
                .sum()
        });
        Ok(Self {
            eig,
            time,
            phases,
            unitary,
        })
    }

    #[inline]
    pub fn unitary(&self) -> &ComplexMatrix {
        &self.unitary
    }

    pub fn into_unitary(self) -> ComplexMatrix {
        self.unitary
    }

    pub fn eigen(&self) -> &EigenDecomposition {
        &self.eig
    }

    /// Maps the adjoint of a real loss with respect to `U` to its adjoint with
    /// respect to `H`.
    ///
    /// Adjoints follow `dL = Re tr(G^dagger dZ)`, i.e. `G = dL/dRe Z + i dL/dIm Z`.
    /// The eigenbasis divided differences are written as
    /// `-2i sin(dT/2)/d * e^{-i mean T}`, which is exact away from degeneracy
    /// and tends to `-iT e^{-i lambda T}` as the gap closes.
    pub fn pullback(&self, upstream: &ComplexMatrix) -> ComplexMatrix {
        let v = &self.eig.eigenvectors;
        let lam = &self.eig.eigenvalues;
        let n = v.dim();
        let t = self.time;
        let vh = v.adjoint();
        let b = vh.matmul(upstream).matmul(v);
        let mut m = ComplexMatrix::zeros(n);
        for p in 0..n {
            for q in 0..n {
                let g = if p == q {
                    C64::new(0.0, -t) * self.phases[p]
                } else {
                    let gap = lam[p] - lam[q];
                    let mean = 0.5 * (lam[p] + lam[q]);
                    let rot = C64::from_polar(1.0, -mean * t);
                    if gap.abs() < DEGENERACY_TOL {
                        C64::new(0.0, -t) * rot
                    } else {
                        C64::new(0.0, -2.0 * (0.5 * gap * t).sin() / gap) * rot
                    }
                };
                m[(p, q)] = b[(p, q)] * g.conj();
            }
        }
        v.matmul(&m).matmul(&vh)
    }
}

/// `e^{-iHT}` for Hermitian `H`.
pub fn expm_minus_i(h: &ComplexMatrix, time: f64) -> Result<ComplexMatrix> {
    Ok(Evolution::new(h, time)?.into_unitary())
}

/// Adjoint of a real loss with respect to `H`, given its adjoint with respect
/// to `U = e^{-iHT}`.
pub fn expm_minus_i_gradient(
    h: &ComplexMatrix,
    time: f64,
    upstream: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    Ok(Evolution::new(h, time)?.pullback(upstream))
}

/// `max |U^dagger U - I|`.
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    let n = u.dim();
    let mut worst = 0.0f64;
    for r in 0..n {
        for c in 0..n {
            let mut s: C64 = (0..n).map(|k| u[(k, r)].conj() * u[(k, c)]).sum();
            if r == c {
                s -= 1.0;
            }
            worst = worst.max(s.norm());
        }
    }
    worst
}

/// Checks unitarity within `tol`, returning the defect on failure.
pub fn ensure_unitary(u: &ComplexMatrix, tol: f64) -> Result<()> {
    let defect = unitarity_defect(u);
    if defect <= tol {
        Ok(())
    } else {
        Err(Error::NotUnitary { defect })
    }
}
