//! Small dense vectors and matrices over a [`Scalar`].

use crate::scalar::Scalar;

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .fold(S::zero(), |acc, (x, y)| acc + &(x.clone() * y))
}

pub fn norm_sq<S: Scalar>(a: &[S]) -> S {
    dot(a, a)
}

pub fn sub<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| x.clone() - y).collect()
}

pub fn add<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| x.clone() + y).collect()
}

pub fn scale<S: Scalar>(a: &[S], k: &S) -> Vec<S> {
    a.iter().map(|x| x.clone() * k).collect()
}

/// Row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<S> {
    dim: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(dim: usize) -> Self {
        Matrix {
            dim,
            data: vec![S::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, S::one())
    }

    pub fn scalar(dim: usize, c: S) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = c.clone();
        }
        m
    }

    /// Builds from rows; panics on ragged input.
    pub fn from_rows(rows: Vec<Vec<S>>) -> Self {
        let dim = rows.len();
        assert!(rows.iter().all(|r| r.len() == dim), "matrix must be square");
        Matrix {
            dim,
            data: rows.into_iter().flatten().collect(),
        }
    }

    /// `a b^T`.
    pub fn outer(a: &[S], b: &[S]) -> Self {
        let dim = a.len();
        let mut data = Vec::with_capacity(dim * dim);
        for x in a {
            for y in b {
                data.push(x.clone() * y);
            }
        }
        Matrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.data[i * self.dim + j]
    }

    pub fn apply(&self, v: &[S]) -> Vec<S> {
        self.data.chunks(self.dim).map(|row| dot(row, v)).collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j].clone();
            }
        }
        out
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = &self.data[i * n + k];
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] = out.data[i * n + j].clone() + &(a.clone() * &rhs.data[k * n + j]);
                }
            }
        }
        out
    }

    pub fn scaled(&self, k: &S) -> Self {
        Matrix {
            dim: self.dim,
            data: self.data.iter().map(|x| x.clone() * k).collect(),
        }
    }

    /// Operator norm at most 1, i.e. `I - M^T M` is positive semidefinite.
    ///
    /// Exact for rationals; in float mode the identity is inflated by
    /// `(1 + 1e-12)^2`.
    pub fn is_contraction(&self) -> bool {
        let n = self.dim;
        let gram = self.transpose().mul(self);
        let slack = if S::EXACT {
            S::one()
        } else {
            let s = S::from_f64(1.0 + 1e-12);
            s.clone() * &s
        };
        let mut a = Matrix::scalar(n, slack).data;
        for (x, g) in a.iter_mut().zip(&gram.data) {
            *x = x.clone() - g;
        }
        is_psd(n, a)
    }
}

/// Symmetric elimination: a zero pivot must have a zero row, a negative
/// pivot is fatal.
fn is_psd<S: Scalar>(n: usize, mut a: Vec<S>) -> bool {
    let tol = if S::EXACT { S::zero() } else { S::from_f64(1e-12) };
    let mut alive: Vec<usize> = (0..n).collect();
    while let Some(k) = alive.pop() {
        let pivot = a[k * n + k].clone();
        if pivot < -tol.clone() {
            return false;
        }
        if pivot <= tol {
            if alive.iter().any(|&i| a[k * n + i].abs() > tol) {
                return false;
            }
            continue;
        }
        for &i in &alive {
            let f = a[i * n + k].clone() / &pivot;
            if f.is_zero() {
                continue;
            }
            for &j in &alive {
                a[i * n + j] = a[i * n + j].clone() - &(f.clone() * &a[k * n + j]);
            }
        }
    }
    true
}
