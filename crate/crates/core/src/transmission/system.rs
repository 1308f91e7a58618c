use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{PercondError, Result};

/// Square system on `(theta_i, theta_o, a, b)`: two boundary equations each carrying a
/// Lagrange multiplier column, and two rows fixing the zero means of the densities.
#[derive(Debug, Clone)]
pub struct BorderedSystem {
    pub n: usize,
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

/// Densities and multipliers from a bordered solve.
#[derive(Debug, Clone)]
pub struct BorderedSolution {
    pub theta_i: Vec<f64>,
    pub theta_o: Vec<f64>,
    pub multipliers: [f64; 2],
}

impl BorderedSystem {
    /// Builds
    ///
    /// ```text
    /// [ lp(1/2 - Wt)          lm(1/2 + Wt)  1  0 ]
    /// [ lp(-1/2 + Wt) + g PVt   -g PVt      0  1 ]
    /// [ w^T                     0           0  0 ]
    /// [ 0                       w^T         0  0 ]
    /// ```
    ///
    /// where `P = I - 1 w^T / |dOmega|` subtracts the boundary mean.
    pub fn assemble(
        weights: &[f64],
        wt: &DMatrix<f64>,
        vt: &DMatrix<f64>,
        lambda_plus: f64,
        lambda_minus: f64,
        gamma: f64,
    ) -> Self {
        let n = weights.len();
        let perimeter: f64 = weights.iter().sum();
        let size = 2 * n + 2;
        let mut a = DMatrix::<f64>::zeros(size, size);
        // Column means of Vt under the boundary quadrature.
        let col_mean: Vec<f64> = (0..n)
            .map(|c| (0..n).map(|r| weights[r] * vt[(r, c)]).sum::<f64>() / perimeter)
            .collect();
        for c in 0..n {
            for r in 0..n {
                let w = wt[(r, c)];
                let delta = if r == c { 0.5 } else { 0.0 };
                let pv = gamma * (vt[(r, c)] - col_mean[c]);
                a[(r, c)] = lambda_plus * (delta - w);
                a[(r, n + c)] = lambda_minus * (delta + w);
                a[(n + r, c)] = lambda_plus * (w - delta) + pv;
                a[(n + r, n + c)] = -pv;
            }
            a[(2 * n, c)] = weights[c];
            a[(2 * n + 1, n + c)] = weights[c];
        }
        for r in 0..n {
            a[(r, 2 * n)] = 1.0;
            a[(n + r, 2 * n + 1)] = 1.0;
        }
        Self { n, matrix: a, rhs: DVector::zeros(size) }
    }

    /// Sets the right-hand side `(b1, b2, 0, 0)`.
    pub fn with_rhs(mut self, b1: &[f64], b2: &[f64]) -> Self {
        let n = self.n;
        for i in 0..n {
            self.rhs[i] = b1[i];
            self.rhs[n + i] = b2[i];
        }
        self.rhs[2 * n] = 0.0;
        self.rhs[2 * n + 1] = 0.0;
        self
    }

    pub fn factor(&self) -> Result<FactoredSystem> {
        FactoredSystem::new(self.matrix.clone())
    }

    pub fn solve(&self) -> Result<BorderedSolution> {
        self.factor()?.solve_bordered(&self.rhs, self.n)
    }

    /// Applies the bordered matrix to `(theta_i, theta_o, a, b)`.
    pub fn apply(&self, theta_i: &[f64], theta_o: &[f64], multipliers: [f64; 2]) -> Vec<f64> {
        let n = self.n;
        let mut x = DVector::zeros(2 * n + 2);
        for i in 0..n {
            x[i] = theta_i[i];
            x[n + i] = theta_o[i];
        }
        x[2 * n] = multipliers[0];
        x[2 * n + 1] = multipliers[1];
        (&self.matrix * x).iter().copied().collect()
    }
}

/// LU factorization with a lazily computed 1-norm condition number.
pub struct FactoredSystem {
    lu: LU<f64, Dyn, Dyn>,
    norm1: f64,
}

impl FactoredSystem {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(PercondError::Numerical("system matrix has non-finite entries".into()));
        }
        let norm1 = one_norm(&matrix);
        Ok(Self { lu: matrix.lu(), norm1 })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let x = self.lu.solve(rhs).ok_or_else(|| PercondError::Singular {
            what: "bordered system".into(),
            condition: f64::INFINITY,
        })?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PercondError::Singular {
                what: "bordered system".into(),
                condition: self.condition(),
            });
        }
        Ok(x)
    }

    pub fn solve_bordered(&self, rhs: &DVector<f64>, n: usize) -> Result<BorderedSolution> {
        let x = self.solve(rhs)?;
        Ok(BorderedSolution {
            theta_i: x.rows(0, n).iter().copied().collect(),
            theta_o: x.rows(n, n).iter().copied().collect(),
            multipliers: [x[2 * n], x[2 * n + 1]],
        })
    }

    /// `||A||_1 ||A^{-1}||_1`, infinite when singular.
    pub fn condition(&self) -> f64 {
        match self.lu.try_inverse() {
            Some(inv) => self.norm1 * one_norm(&inv),
            None => f64::INFINITY,
        }
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}
