//! Thomas elimination for complex tridiagonal systems.
//!
//! The matrix is factored once; each solve is one forward and one backward sweep.
//! No pivoting: the Crank–Nicolson matrix `1 + i a H` with Hermitian `H` has a
//! positive definite Hermitian part, so every leading minor is nonsingular.

use num_complex::Complex64;

use crate::{Error, Result};

/// LU factors of a tridiagonal matrix with constant off-diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalLu {
    lower: Complex64,
    upper: Complex64,
    /// Reciprocal pivots `1 / d'_i`.
    inv_pivot: Vec<Complex64>,
    /// Modified super-diagonal `c'_i = c / d'_i`.
    c_prime: Vec<Complex64>,
}

impl TridiagonalLu {
    /// Factors the matrix with diagonal `diag`, sub-diagonal `lower` and super-diagonal `upper`.
    pub fn factor(diag: &[Complex64], lower: Complex64, upper: Complex64) -> Result<Self> {
        let n = diag.len();
        let mut inv_pivot = Vec::with_capacity(n);
        let mut c_prime = Vec::with_capacity(n);
        let mut prev_c = Complex64::new(0.0, 0.0);
        for (row, &d) in diag.iter().enumerate() {
            let pivot = d - lower * prev_c;
            if pivot.norm() == 0.0 || !pivot.is_finite() {
                return Err(Error::SingularSystem { row });
            }
            let inv = pivot.inv();
            prev_c = upper * inv;
            inv_pivot.push(inv);
            c_prime.push(prev_c);
        }
        Ok(Self {
            lower,
            upper,
            inv_pivot,
            c_prime,
        })
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    /// Overwrites `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [Complex64]) {
        let n = rhs.len();
        assert_eq!(n, self.len(), "right-hand side length mismatch");
        if n == 0 {
            return;
        }
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] = rhs[i] - self.c_prime[i] * rhs[i + 1];
        }
    }

    pub fn upper(&self) -> Complex64 {
        self.upper
    }
}

/// `y = A x` for a tridiagonal `A` with constant off-diagonals.
pub fn multiply(diag: &[Complex64], lower: Complex64, upper: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    let n = x.len();
    assert!(diag.len() == n && y.len() == n);
    for i in 0..n {
        let mut acc = diag[i] * x[i];
        if i > 0 {
            acc += lower * x[i - 1];
        }
        if i + 1 < n {
            acc += upper * x[i + 1];
        }
        y[i] = acc;
    }
}
