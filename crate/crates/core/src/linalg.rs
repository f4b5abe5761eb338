//! Dense symmetric positive-definite factorization.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense symmetric matrix stored row-major in full.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> SymmetricMatrix<T> {
    /// Builds `A_ij = entry(i, j)` evaluating only `j <= i`.
    pub fn from_fn(n: usize, mut entry: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = entry(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data }
    }

    pub fn from_rows(n: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::SizeMismatch {
                what: "matrix data",
                expected: n * n,
                found: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[T]) -> T {
        self.mul_vec(x).iter().zip(x).map(|(&a, &b)| a * b).sum()
    }
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    // row-major, only j <= i used
    l: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factorizes `a`; fails at the first pivot that is not strictly positive.
    pub fn factor(a: &SymmetricMatrix<T>) -> Result<Self> {
        let n = a.n;
        let mut l = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                let dot: T = ri.iter().zip(rj).map(|(&x, &y)| x * y).sum();
                let v = a.get(i, j) - dot;
                if i == j {
                    if !(v > T::zero()) {
                        let partial = Self { n: i, l: compact(&l, n, i) };
                        return Err(Error::NotPositiveDefinite {
                            pivot: i,
                            condition_estimate: if i == 0 {
                                f64::INFINITY
                            } else {
                                partial.condition_estimate().to_f64_lossy()
                            },
                        });
                    }
                    l[i * n + i] = v.sqrt();
                } else {
                    l[i * n + j] = v / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.l[i * self.n + j]
    }

    /// Solves `L z = b`.
    pub fn forward(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut z = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let dot: T = row.iter().zip(&z[..i]).map(|(&a, &b)| a * b).sum();
            z[i] = (z[i] - dot) / self.at(i, i);
        }
        z
    }

    /// Solves `Lᵀ x = z`.
    pub fn backward(&self, z: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x = z.to_vec();
        for i in (0..n).rev() {
            x[i] = x[i] / self.at(i, i);
            let xi = x[i];
            for k in 0..i {
                x[k] = x[k] - self.at(i, k) * xi;
            }
        }
        x
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.backward(&self.forward(b))
    }

    /// `(max_i L_ii / min_i L_ii)^2`, a cheap lower estimate of the
    /// spectral condition number of `A`.
    pub fn condition_estimate(&self) -> T {
        if self.n == 0 {
            return T::one();
        }
        let (lo, hi) = (0..self.n)
            .map(|i| self.at(i, i))
            .fold((T::infinity(), T::zero()), |(lo, hi), v| (lo.min(v), hi.max(v)));
        (hi / lo).powi(2)
    }

    /// `L Lᵀ`, for checking the factorization.
    pub fn reconstruct(&self) -> SymmetricMatrix<T> {
        let n = self.n;
        SymmetricMatrix::from_fn(n, |i, j| {
            (0..=j).map(|k| self.at(i, k) * self.at(j, k)).sum()
        })
    }
}

fn compact<T: Real>(l: &[T], n: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * m];
    for i in 0..m {
        out[i * m..i * m + m].copy_from_slice(&l[i * n..i * n + m]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn hilbertish(n: usize) -> SymmetricMatrix<f64> {
        SymmetricMatrix::from_fn(n, |i, j| 1.0 / (1.0 + i as f64 + j as f64) + if i == j { 1.0 } else { 0.0 })
    }

    #[test]
    fn solves_and_reconstructs() {
        let a = hilbertish(12);
        let c = Cholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let x = c.solve(&b);
        for (r, e) in a.mul_vec(&x).iter().zip(&b) {
            assert_relative_eq!(*r, *e, epsilon = 1e-13);
        }
        let back = c.reconstruct();
        for i in 0..12 {
            for j in 0..12 {
                assert_relative_eq!(back.get(i, j), a.get(i, j), epsilon = 1e-14);
            }
        }
        assert!(c.condition_estimate() >= 1.0);
    }

    #[test]
    fn reports_failing_pivot() {
        let a = SymmetricMatrix::from_rows(3, vec![4.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        match Cholesky::factor(&a) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quadratic_form_matches_whitened_norm() {
        let a = hilbertish(8);
        let c = Cholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..8).map(|i| 1.0 - 0.1 * i as f64).collect();
        let x = c.solve(&b);
        let z = c.forward(&b);
        let zz: f64 = z.iter().map(|v| v * v).sum();
        assert_relative_eq!(a.quadratic_form(&x), zz, max_relative = 1e-13);
    }
}
