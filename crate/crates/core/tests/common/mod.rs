#![allow(dead_code)]

use num_complex::Complex64 as C;

pub type M3 = [[C; 3]; 3];

pub fn zero() -> M3 {
    [[C::new(0.0, 0.0); 3]; 3]
}

pub fn eye() -> M3 {
    let mut m = zero();
    for i in 0..3 {
        m[i][i] = C::new(1.0, 0.0);
    }
    m
}

pub fn mul(a: &M3, b: &M3) -> M3 {
    let mut c = zero();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// `exp(-i t H)` by Taylor series after halving until the norm is small,
/// then squaring back.
pub fn expm_minus_i(h: &M3, t: f64) -> M3 {
    let norm: f64 = h.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt() * t.abs();
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.05 {
        s += 1;
    }
    let scale = C::new(0.0, -t / 2f64.powi(s));
    let mut a = zero();
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = h[i][j] * scale;
        }
    }
    let mut term = eye();
    let mut sum = eye();
    for k in 1..30 {
        term = mul(&term, &a);
        for row in term.iter_mut() {
            for z in row.iter_mut() {
                *z /= k as f64;
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                sum[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..s {
        sum = mul(&sum, &sum);
    }
    sum
}

pub fn max_diff(a: &M3, b: &qctrl_core::ComplexMatrix) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            m = m.max((a[i][j] - b[(i, j)]).norm());
        }
    }
    m
}
