//! Small dense symmetric matrices.
//!
//! Every matrix in the algorithm is d×d with d at most a few tens, so a plain
//! row-major buffer with Cholesky solves and a Jacobi eigensolver is enough.

use crate::error::{LogTsError, Result};
use crate::scalar::Scalar;

/// Dense row-major symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> SymMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = T::one();
        }
        m
    }

    /// Builds a matrix from rows and symmetrizes it.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(LogTsError::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            m.data[i * dim..(i + 1) * dim].copy_from_slice(row);
        }
        m.symmetrize();
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.dim + j] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// `self += scale · x xᵀ`, writing both triangles.
    #[inline]
    pub fn add_outer(&mut self, x: &[T], scale: T) {
        let d = self.dim;
        debug_assert_eq!(x.len(), d);
        for i in 0..d {
            let si = scale * x[i];
            if si == T::zero() {
                continue;
            }
            let row = &mut self.data[i * d..(i + 1) * d];
            for j in 0..d {
                row[j] += si * x[j];
            }
        }
    }

    pub fn add_diagonal(&mut self, eps: T) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += eps;
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| *v * s).collect(),
        }
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// `M ← (M + Mᵀ)/2`.
    pub fn symmetrize(&mut self) {
        let d = self.dim;
        let half = T::lit(0.5);
        for i in 0..d {
            for j in (i + 1)..d {
                let v = (self.data[i * d + j] + self.data[j * d + i]) * half;
                self.data[i * d + j] = v;
                self.data[j * d + i] = v;
            }
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let d = self.dim;
        (0..d)
            .map(|i| {
                let row = &self.data[i * d..(i + 1) * d];
                row.iter().zip(x).fold(T::zero(), |acc, (a, b)| acc + *a * *b)
            })
            .collect()
    }

    /// `xᵀ M x`.
    pub fn quad_form(&self, x: &[T]) -> T {
        let mx = self.mul_vec(x);
        crate::scalar::dot(x, &mx)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    /// Smallest eigenvalue. Closed form for d ≤ 2, cyclic Jacobi otherwise.
    pub fn min_eigenvalue(&self) -> T {
        match self.dim {
            0 => T::zero(),
            1 => self.data[0],
            2 => {
                let (a, b, c) = (self.data[0], self.data[1], self.data[3]);
                let half = T::lit(0.5);
                let mean = (a + c) * half;
                let diff = (a - c) * half;
                mean - (diff * diff + b * b).sqrt()
            }
            _ => self.eigenvalues().into_iter().fold(T::infinity(), |m, v| m.min(v)),
        }
    }

    /// Whether `λ_min > s`, decided by a Cholesky attempt on `M − sI` for d > 2.
    pub fn min_eigenvalue_exceeds(&self, s: T) -> bool {
        if self.dim <= 2 {
            return self.min_eigenvalue() > s;
        }
        let mut m = self.clone();
        m.add_diagonal(-s);
        m.cholesky().is_ok()
    }

    /// All eigenvalues (unordered) by cyclic Jacobi rotations.
    pub fn eigenvalues(&self) -> Vec<T> {
        let d = self.dim;
        let mut a = self.data.clone();
        let frob = a.iter().fold(T::zero(), |s, v| s + *v * *v).sqrt();
        if frob == T::zero() {
            return vec![T::zero(); d];
        }
        let tol = T::epsilon() * frob;
        for _sweep in 0..64 {
            let mut off = T::zero();
            for i in 0..d {
                for j in (i + 1)..d {
                    off += a[i * d + j] * a[i * d + j];
                }
            }
            if off.sqrt() <= tol {
                break;
            }
            for p in 0..d {
                for q in (p + 1)..d {
                    let apq = a[p * d + q];
                    if apq.abs() <= T::min_positive_value() {
                        continue;
                    }
                    let app = a[p * d + p];
                    let aqq = a[q * d + q];
                    let theta = (aqq - app) / (T::lit(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..d {
                        let akp = a[k * d + p];
                        let akq = a[k * d + q];
                        a[k * d + p] = c * akp - s * akq;
                        a[k * d + q] = s * akp + c * akq;
                    }
                    for k in 0..d {
                        let apk = a[p * d + k];
                        let aqk = a[q * d + k];
                        a[p * d + k] = c * apk - s * aqk;
                        a[q * d + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..d).map(|i| a[i * d + i]).collect()
    }

    /// Cholesky factorization `M = L Lᵀ`.
    pub fn cholesky(&self) -> Result<Cholesky<T>> {
        let d = self.dim;
        let mut l = vec![T::zero(); d * d];
        for j in 0..d {
            let mut diag = self.data[j * d + j];
            for k in 0..j {
                diag -= l[j * d + k] * l[j * d + k];
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return Err(LogTsError::NotPositiveDefinite);
            }
            let ljj = diag.sqrt();
            l[j * d + j] = ljj;
            for i in (j + 1)..d {
                let mut v = self.data[i * d + j];
                for k in 0..j {
                    v -= l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = v / ljj;
            }
        }
        Ok(Cholesky { dim: d, l })
    }

    /// Cholesky of `M + ε I` with `ε = rel · trace(M) / d`.
    pub fn regularized_cholesky(&self, rel: T) -> Result<Cholesky<T>> {
        let eps = rel * self.trace() / T::from_count(self.dim as u64);
        let mut m = self.clone();
        m.add_diagonal(eps);
        m.cholesky()
    }
}

/// Lower-triangular Cholesky factor.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    dim: usize,
    l: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Smallest squared diagonal entry of `L`; never below `λ_min`.
    pub fn min_pivot_sq(&self) -> T {
        (0..self.dim)
            .map(|j| self.l[j * self.dim + j] * self.l[j * self.dim + j])
            .fold(T::infinity(), |m, v| m.min(v))
    }

    /// Solves `L z = b` in place.
    fn forward(&self, z: &mut [T]) {
        let d = self.dim;
        for i in 0..d {
            let mut v = z[i];
            for k in 0..i {
                v -= self.l[i * d + k] * z[k];
            }
            z[i] = v / self.l[i * d + i];
        }
    }

    fn backward(&self, z: &mut [T]) {
        let d = self.dim;
        for i in (0..d).rev() {
            let mut v = z[i];
            for k in (i + 1)..d {
                v -= self.l[k * d + i] * z[k];
            }
            z[i] = v / self.l[i * d + i];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut z = b.to_vec();
        self.solve_in_place(&mut z);
        z
    }

    pub fn solve_in_place(&self, z: &mut [T]) {
        self.forward(z);
        self.backward(z);
    }

    /// `yᵀ M⁻¹ y = ‖L⁻¹ y‖²`.
    pub fn inv_quad(&self, y: &[T]) -> T {
        const STACK: usize = 8;
        if self.dim <= STACK {
            let mut buf = [T::zero(); STACK];
            let z = &mut buf[..self.dim];
            z.copy_from_slice(y);
            self.forward(z);
            return crate::scalar::dot(z, z);
        }
        let mut z = y.to_vec();
        self.forward(&mut z);
        crate::scalar::dot(&z, &z)
    }
}
