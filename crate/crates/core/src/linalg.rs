//! Small dense linear-algebra helpers on top of nalgebra.
//!
//! The Cholesky factorization is written out by hand so that a failure can
//! report the offending pivot, which nalgebra's `Cholesky::new` discards.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    lower: DMatrix<f64>,
}

#[allow(clippy::needless_range_loop)]
impl Cholesky {
    /// Factorizes a symmetric matrix, reading only its lower triangle.
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension {
                context: "cholesky (square)",
                expected: n,
                actual: a.ncols(),
            });
        }
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Factorization { index: j, pivot: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Solves `L w = b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let mut w = b.to_vec();
        for i in 0..n {
            let mut s = w[i];
            for k in 0..i {
                s -= self.lower[(i, k)] * w[k];
            }
            w[i] = s / self.lower[(i, i)];
        }
        w
    }

    /// Solves `Lᵀ x = w`.
    pub fn backward(&self, w: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = w.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lower[(k, i)] * x[k];
            }
            x[i] = s / self.lower[(i, i)];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(b))
    }

    /// `bᵀ A⁻¹ b`, computed as `‖L⁻¹ b‖²`.
    pub fn inverse_quadratic_form(&self, b: &[f64]) -> f64 {
        self.forward(b).iter().map(|w| w * w).sum()
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().iter().fold(0.0_f64, |acc, &s| acc.max(s))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn complex_eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect()
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    complex_eigenvalues(m).iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Minimum over pairings of the largest pairwise distance between two
/// equally sized multisets of complex numbers. Exhaustive over pairings,
/// intended for the small spectra of control design (≲ 10 elements).
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut best = f64::INFINITY;
    bottleneck(a, b, 0, 0.0, &mut used, &mut best);
    best
}

fn bottleneck(a: &[Complex64], b: &[Complex64], i: usize, current: f64, used: &mut [bool], best: &mut f64) {
    if current >= *best {
        return;
    }
    if i == a.len() {
        *best = current;
        return;
    }
    for j in 0..b.len() {
        if !used[j] {
            used[j] = true;
            let d = (a[i] - b[j]).norm();
            bottleneck(a, b, i + 1, current.max(d), used, best);
            used[j] = false;
        }
    }
}

pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
