//! Dense square matrices and a symmetric eigensolver.

use crate::{Error, Result};

/// Row-major dense `n × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// Builds a matrix from rows; every row must have length `rows.len()`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::Matrix(format!(
                "row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
        Ok(Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn max_abs_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Eigen-decomposition of a real symmetric matrix.
///
/// `values` are sorted in descending order and `vectors[k]` is the unit
/// eigenvector belonging to `values[k]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi rotations on a symmetric matrix.
///
/// Only the upper triangle is read. Converges quadratically; the sweep limit
/// is never reached for well-formed input.
pub fn symmetric_eigen(matrix: &SquareMatrix) -> Result<SymmetricEigen> {
    let n = matrix.dim();
    let mut a = SquareMatrix::from_fn(n, |i, j| {
        if i <= j {
            matrix.get(i, j)
        } else {
            matrix.get(j, i)
        }
    });
    if a.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Matrix("matrix has non-finite entries".into()));
    }
    let mut v = SquareMatrix::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 });

    let scale: f64 = a.data.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut converged = scale == 0.0 || n < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);

                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)).then(i.cmp(&j)));
    let values = order.iter().map(|&k| a.get(k, k)).collect();
    let vectors = order
        .iter()
        .map(|&k| (0..n).map(|i| v.get(i, k)).collect())
        .collect();
    Ok(SymmetricEigen { values, vectors })
}
