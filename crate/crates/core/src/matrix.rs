//! Small dense square matrices, row-major.
//!
//! Everything in the model works with M×M or 2M×2M matrices where M is at
//! most [`MAX_STATES`](crate::model::MAX_STATES), so a plain `Vec` backed type
//! is all that is needed.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from rows. Fails unless the rows form a non-empty square.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty matrix".into()));
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    /// `u vᵀ`.
    pub fn outer(u: &[T], v: &[T]) -> Self {
        debug_assert_eq!(u.len(), v.len());
        let n = u.len();
        let mut data = Vec::with_capacity(n * n);
        for &a in u {
            for &b in v {
                data.push(a * b);
            }
        }
        Self { n, data }
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: T) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&x| x * s).collect() }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: T, other: &Self) {
        debug_assert_eq!(self.n, other.n);
        for (d, &o) in self.data.iter_mut().zip(&other.data) {
            *d += s * o;
        }
    }

    /// `self - diag(d)`.
    pub fn minus_diag(&self, d: &[T]) -> Self {
        let mut m = self.clone();
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] -= v;
        }
        m
    }

    /// Multiplies column `j` by `d[j]`, i.e. `self · diag(d)`.
    pub fn scale_cols(&self, d: &[T]) -> Self {
        let mut m = self.clone();
        for i in 0..self.n {
            for j in 0..self.n {
                m[(i, j)] *= d[j];
            }
        }
        m
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.n).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn row_sums(&self) -> Vec<T> {
        self.data.chunks(self.n).map(|r| r.iter().copied().sum()).collect()
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> T {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)].abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Row vector times matrix: `v · self`.
    pub fn left_mul_vec(&self, v: &[T]) -> Vec<T> {
        let n = self.n;
        let mut out = vec![T::zero(); n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == T::zero() {
                continue;
            }
            for j in 0..n {
                out[j] += vi * self.data[i * n + j];
            }
        }
        out
    }

    /// Matrix times column vector: `self · v`.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        self.data
            .chunks(self.n)
            .map(|r| r.iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// Assembles the block upper-triangular matrix `[[a, w], [0, a]]`.
    pub fn block_upper(a: &Self, w: &Self) -> Self {
        assert_eq!(a.n, w.n);
        let m = a.n;
        let mut big = Self::zeros(2 * m);
        for i in 0..m {
            for j in 0..m {
                big[(i, j)] = a[(i, j)];
                big[(i + m, j + m)] = a[(i, j)];
                big[(i, j + m)] = w[(i, j)];
            }
        }
        big
    }

    /// Upper-right `n/2 × n/2` block.
    pub fn upper_right(&self) -> Self {
        assert!(self.n % 2 == 0);
        let m = self.n / 2;
        let mut out = Self::zeros(m);
        for i in 0..m {
            for j in 0..m {
                out[(i, j)] = self[(i, j + m)];
            }
        }
        out
    }

    /// Upper-left `n/2 × n/2` block.
    pub fn upper_left(&self) -> Self {
        assert!(self.n % 2 == 0);
        let m = self.n / 2;
        let mut out = Self::zeros(m);
        for i in 0..m {
            for j in 0..m {
                out[(i, j)] = self[(i, j)];
            }
        }
        out
    }

    /// Solves `self · X = rhs` by LU decomposition with partial pivoting.
    pub fn solve(&self, rhs: &Self) -> Result<Self> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut b = rhs.data.clone();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&r, &s| a[r * n + col].abs().partial_cmp(&a[s * n + col].abs()).unwrap())
                .unwrap();
            let p = a[pivot * n + col];
            if p == T::zero() || !p.is_finite() {
                return Err(Error::Numerical("singular matrix in linear solve".into()));
            }
            if pivot != col {
                for k in 0..n {
                    a.swap(col * n + k, pivot * n + k);
                    b.swap(col * n + k, pivot * n + k);
                }
            }
            for r in col + 1..n {
                let factor = a[r * n + col] / p;
                if factor == T::zero() {
                    continue;
                }
                for k in col..n {
                    let v = a[col * n + k];
                    a[r * n + k] -= factor * v;
                }
                for k in 0..n {
                    let v = b[col * n + k];
                    b[r * n + k] -= factor * v;
                }
            }
        }
        for col in (0..n).rev() {
            let p = a[col * n + col];
            for k in 0..n {
                let mut s = b[col * n + k];
                for j in col + 1..n {
                    s -= a[col * n + j] * b[j * n + k];
                }
                b[col * n + k] = s / p;
            }
        }
        Ok(Self { n, data: b })
    }

    pub fn inverse(&self) -> Result<Self> {
        self.solve(&Self::identity(self.n))
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

impl<T: Scalar> Mul for &Mat<T> {
    type Output = Mat<T>;
    fn mul(self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.n, rhs.n, "matrix order mismatch");
        let n = self.n;
        let mut out = vec![T::zero(); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == T::zero() {
                    continue;
                }
                let row = &rhs.data[k * n..(k + 1) * n];
                let dst = &mut out[i * n..(i + 1) * n];
                for (d, &r) in dst.iter_mut().zip(row) {
                    *d += a * r;
                }
            }
        }
        Mat { n, data: out }
    }
}

impl<T: Scalar> Add for &Mat<T> {
    type Output = Mat<T>;
    fn add(self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.n, rhs.n);
        Mat { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect() }
    }
}

impl<T: Scalar> Sub for &Mat<T> {
    type Output = Mat<T>;
    fn sub(self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.n, rhs.n);
        Mat { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect() }
    }
}
