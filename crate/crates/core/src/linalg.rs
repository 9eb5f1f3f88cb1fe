//! Dense LU factorization with partial pivoting for `(I − M) x = c`.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

/// Systems with reciprocal condition number below this are refused.
pub const MIN_RCOND: f64 = 1e-12;

/// LU factorization with partial pivoting of a small dense matrix.
#[derive(Debug, Clone)]
pub struct LinearSolver {
    n: usize,
    lu: LU<f64, Dyn, Dyn>,
    rcond: f64,
}

impl LinearSolver {
    /// Factors `I − M` for a row-major `n × n` matrix `M`.
    pub fn for_expectation_matrix(m: &[f64], n: usize) -> Result<Self> {
        let mut a: Vec<f64> = m.iter().map(|v| -v).collect();
        for i in 0..n {
            a[i * n + i] += 1.0;
        }
        Self::factor(a, n)
    }

    /// Factors a general row-major `n × n` matrix.
    pub fn factor(a: Vec<f64>, n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let a = DMatrix::from_row_slice(n, n, &a);
        let norm1 = a
            .column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let lu = a.lu();
        let u = lu.u();
        if let Some(k) = (0..n).find(|&k| u[(k, k)] == 0.0 || !u[(k, k)].is_finite()) {
            return Err(Error::SingularPivot(k));
        }
        let mut solver = LinearSolver { n, lu, rcond: 1.0 };
        // exact ‖A⁻¹‖₁ from the n unit solves; n is small
        if n > 0 {
            let mut inv_norm = 0.0f64;
            for j in 0..n {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                let col = solver.solve(&e)?;
                inv_norm = inv_norm.max(col.iter().map(|v| v.abs()).sum());
            }
            solver.rcond = 1.0 / (norm1 * inv_norm);
        }
        Ok(solver)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Reciprocal 1-norm condition number.
    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    /// Fails if the factored matrix is too ill-conditioned to trust.
    pub fn require_well_conditioned(&self) -> Result<()> {
        if self.rcond < MIN_RCOND || !self.rcond.is_finite() {
            Err(Error::IllConditioned { rcond: self.rcond })
        } else {
            Ok(())
        }
    }

    pub fn solve(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: c.len(),
            });
        }
        if self.n == 0 {
            return Ok(Vec::new());
        }
        let x = self
            .lu
            .solve(&DVector::from_column_slice(c))
            .ok_or(Error::SingularPivot(0))?;
        Ok(x.iter().copied().collect())
    }
}
