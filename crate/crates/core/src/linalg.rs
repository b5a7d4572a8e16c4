//! Small dense matrix routines: left-eigenvector tests, symmetric floors,
//! and a pivoted linear solve. Sizes here are k ≤ 8, so everything is
//! plain row-major `Vec` storage.

use thiserror::Error;

use crate::scalar::{dot, norm, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("vector is not unit length (norm {norm})")]
    NotUnit { norm: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(k: usize) -> Self {
        let mut m = Self::zeros(k, k);
        for i in 0..k {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self { rows: r, cols: c, data: rows.concat() }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * s).collect() }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `A x`
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `xᵀ A` as a vector (equivalently `Aᵀ x`).
    pub fn vec_mul(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j] += x[i] * self[(i, j)];
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(l, j)];
                }
            }
        }
        out
    }

    pub fn symmetric_part(&self) -> Self {
        let half = T::lit(0.5);
        let mut s = Self::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                s[(i, j)] = half * (self[(i, j)] + self[(j, i)]);
            }
        }
        s
    }

    /// Infinity norm (max absolute row sum); bounds the operator norm for the
    /// stability estimate.
    pub fn max_row_sum(&self) -> T {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn abs_sum(&self) -> T {
        self.data.iter().map(|x| x.abs()).sum()
    }

    pub fn check_finite(&self) -> Result<(), LinalgError> {
        match self.data.iter().position(|x| !x.is_finite()) {
            Some(p) => Err(LinalgError::NonFinite { row: p / self.cols, col: p % self.cols }),
            None => Ok(()),
        }
    }

    /// Spectral norm via the largest eigenvalue of `AᵀA`.
    pub fn operator_norm(&self) -> T {
        let ata = self.transpose().mul(self);
        symmetric_eigenvalues(&ata)
            .into_iter()
            .fold(T::zero(), T::max)
            .max(T::zero())
            .sqrt()
    }
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Outcome of a left-eigenvector test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeftEigen<T> {
    /// `νᵀA = λνᵀ` to tolerance; carries λ and the residual norm.
    Accepted { value: T, residual: T },
    Rejected { value: T, residual: T },
}

impl<T: Copy> LeftEigen<T> {
    pub fn value(&self) -> Option<T> {
        match *self {
            LeftEigen::Accepted { value, .. } => Some(value),
            LeftEigen::Rejected { .. } => None,
        }
    }

    /// The Rayleigh value, whether or not ν was accepted.
    pub fn rayleigh(&self) -> T {
        match *self {
            LeftEigen::Accepted { value, .. } | LeftEigen::Rejected { value, .. } => value,
        }
    }

    pub fn residual(&self) -> T {
        match *self {
            LeftEigen::Accepted { residual, .. } | LeftEigen::Rejected { residual, .. } => residual,
        }
    }
}

/// Tests whether the unit vector `nu` is a left eigenvector of `a`.
///
/// λ is the Rayleigh value `νᵀAν` and the residual is `|νᵀA − λνᵀ|₂`.
pub fn left_eigenvalue<T: Real>(nu: &[T], a: &Mat<T>, tol: T) -> Result<LeftEigen<T>, LinalgError> {
    if a.rows() != nu.len() || a.cols() != nu.len() {
        return Err(LinalgError::Dimension { expected: nu.len(), got: a.rows() });
    }
    a.check_finite()?;
    let nrm = norm(nu);
    if (nrm - T::one()).abs() > T::lit(1e-9).max(T::lit(T::NORM_TOL)) {
        return Err(LinalgError::NotUnit { norm: nrm.as_f64() });
    }
    let row = a.vec_mul(nu);
    let value = dot(&row, nu);
    let residual = norm(&row.iter().zip(nu).map(|(&r, &n)| r - value * n).collect::<Vec<_>>());
    Ok(if residual <= tol {
        LeftEigen::Accepted { value, residual }
    } else {
        LeftEigen::Rejected { value, residual }
    })
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method, ascending.
pub fn symmetric_eigenvalues<T: Real>(s: &Mat<T>) -> Vec<T> {
    let k = s.rows();
    let mut a = s.clone();
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let off: T = (0..k)
            .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let scale: T = a.as_slice().iter().map(|&x| x * x).sum();
        if off <= eps * eps * scale || off == T::zero() {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let sn = t * c;
                for r in 0..k {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = c * arp - sn * arq;
                    a[(r, q)] = sn * arp + c * arq;
                }
                for r in 0..k {
                    let apr = a[(p, r)];
                    let aqr = a[(q, r)];
                    a[(p, r)] = c * apr - sn * aqr;
                    a[(q, r)] = sn * apr + c * aqr;
                }
            }
        }
    }
    let mut ev: Vec<T> = (0..k).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Smallest eigenvalue of the symmetric part `(A + Aᵀ)/2`. A positive value
/// certifies `zᵀAz ≥ floor·|z|²`.
pub fn positive_definite_floor<T: Real>(a: &Mat<T>) -> T {
    symmetric_eigenvalues(&a.symmetric_part())
        .first()
        .copied()
        .unwrap_or_else(T::zero)
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting. Returns
/// `None` when a pivot falls below `pivot_tol` times the largest entry.
pub fn solve<T: Real>(a: &Mat<T>, b: &[T], pivot_tol: T) -> Option<Vec<T>> {
    let n = a.rows();
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let scale = m.as_slice().iter().fold(T::zero(), |acc, x| acc.max(x.abs()));
    if scale == T::zero() {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            m[(i, col)].abs().partial_cmp(&m[(j, col)].abs()).unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[(piv, col)].abs() <= pivot_tol * scale {
            return None;
        }
        if piv != col {
            for j in 0..n {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(piv, j)];
                m[(piv, j)] = tmp;
            }
            rhs.swap(col, piv);
        }
        for i in col + 1..n {
            let f = m[(i, col)] / m[(col, col)];
            if f == T::zero() {
                continue;
            }
            for j in col..n {
                let v = m[(col, j)];
                m[(i, j)] -= f * v;
            }
            let r = rhs[col];
            rhs[i] -= f * r;
        }
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let s: T = (i + 1..n).map(|j| m[(i, j)] * x[j]).sum();
        x[i] = (rhs[i] - s) / m[(i, i)];
    }
    Some(x)
}
