//! Row-major dense matrix.

use crate::error::{Error, Result};

/// Dense matrix of `f64`, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be >= 1");
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, validating length and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows < 1 || cols < 1 || data.len() != rows * cols {
            return Err(Error::Shape {
                op: "DenseMatrix::from_vec",
                expected: format!("{}x{} = {} entries", rows, cols, rows * cols),
                got: format!("{} entries", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix data".into()));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// y = M x with fixed left-to-right summation per row.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Shape {
                op: "matvec",
                expected: format!("vector of length {}", self.cols),
                got: format!("length {}", x.len()),
            });
        }
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += row[j] * x[j];
            }
            y[i] = acc;
        }
        Ok(y)
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                expected: format!("rhs with {} rows", self.cols),
                got: format!("{} rows", other.rows),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for j in 0..other.cols {
                    dst[j] += a * orow[j];
                }
            }
        }
        Ok(out)
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute difference between `a[i][j]` and `a[j][i]`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols.min(self.rows) {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_identity() {
        let m = DenseMatrix::identity(3);
        let y = m.matvec(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn matvec_zero_matrix() {
        let m = DenseMatrix::zeros(2, 2);
        let y = m.matvec(&[4.2, -1.3]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn matvec_direct() {
        let m = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = m.matvec(&[1.0, 1.0]).unwrap();
        assert_eq!(y, vec![3.0, 7.0]);
    }

    #[test]
    fn matvec_rejects_bad_length() {
        let m = DenseMatrix::identity(3);
        assert!(matches!(m.matvec(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn from_vec_rejects_non_finite() {
        let r = DenseMatrix::from_vec(1, 2, vec![1.0, f64::NAN]);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn matvec_is_linear() {
        let m = DenseMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.37 - 1.0);
        let x = [0.5, -1.25, 2.0];
        let y = [3.0, 0.125, -0.75];
        let (a, b) = (2.5, -0.5);
        let combo: Vec<f64> = (0..3).map(|j| a * x[j] + b * y[j]).collect();
        let lhs = m.matvec(&combo).unwrap();
        let mx = m.matvec(&x).unwrap();
        let my = m.matvec(&y).unwrap();
        for i in 0..4 {
            let rhs = a * mx[i] + b * my[i];
            assert!((lhs[i] - rhs).abs() < 1e-12, "{} vs {}", lhs[i], rhs);
        }
    }

    #[test]
    fn matmul_transpose_consistency() {
        let a = DenseMatrix::from_fn(3, 2, |i, j| (i + j) as f64);
        let b = DenseMatrix::from_fn(2, 4, |i, j| (i * 4 + j) as f64 * 0.5);
        let ab = a.matmul(&b).unwrap();
        let btat = b.transpose().matmul(&a.transpose()).unwrap();
        assert_eq!(ab.transpose(), btat);
    }
}
