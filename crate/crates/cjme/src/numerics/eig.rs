//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

/// Off-diagonal Frobenius tolerance relative to the input norm.
const OFF_DIAG_TOL: f64 = 1e-12;
/// Sweep cap; Jacobi converges quadratically, so hitting this means trouble.
const MAX_SWEEPS: usize = 100;

/// Eigenvalues in descending order; `vectors` holds the matching
/// orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

/// Decomposes a symmetric matrix. `tol` bounds the accepted asymmetry of
/// the input; convergence itself is governed by [`OFF_DIAG_TOL`].
pub fn sym_eig(m: &DenseMatrix, tol: f64) -> Result<SymEig> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::Shape {
            op: "sym_eig",
            expected: "square matrix".into(),
            got: format!("{}x{}", m.rows(), m.cols()),
        });
    }
    let max_asym = m.max_asymmetry();
    if max_asym > tol {
        return Err(Error::NotSymmetric { tol, max_asym });
    }

    // Work on the symmetrized copy so the iteration sees an exactly
    // symmetric matrix even when the input is only symmetric within tol.
    let mut a = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (m.get(i, j) + m.get(j, i)));
    let mut v = DenseMatrix::identity(n);
    let norm = a.frob_norm().max(f64::MIN_POSITIVE);

    let off = |a: &DenseMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a.get(i, j) * a.get(i, j);
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off(&a) > OFF_DIAG_TOL * norm {
        if sweeps >= MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps,
                off: off(&a),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // Rotate rows/columns p and q of A.
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
                // Accumulate the rotation into the eigenvector columns.
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).partial_cmp(&a.get(i, i)).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    Ok(SymEig { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn random_symmetric(n: usize, rng: &mut SeededRng) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.standard_normal();
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        m
    }

    fn residual(a: &DenseMatrix, eig: &SymEig, k: usize) -> f64 {
        let n = a.rows();
        let v: Vec<f64> = (0..n).map(|r| eig.vectors.get(r, k)).collect();
        let av = a.matvec(&v).unwrap();
        (0..n)
            .map(|r| {
                let d = av[r] - eig.values[k] * v[r];
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn identity_eigenvalues_are_ones() {
        let eig = sym_eig(&DenseMatrix::identity(4), 1e-12).unwrap();
        for v in &eig.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_matrix_axis_aligned() {
        let m = DenseMatrix::from_vec(2, 2, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let eig = sym_eig(&m, 1e-12).unwrap();
        assert!((eig.values[0] - 3.0).abs() < 1e-12);
        assert!((eig.values[1] - 1.0).abs() < 1e-12);
        assert!((eig.vectors.get(0, 0).abs() - 1.0).abs() < 1e-12);
        assert!((eig.vectors.get(1, 1).abs() - 1.0).abs() < 1e-12);
        assert!(eig.vectors.get(1, 0).abs() < 1e-12);
    }

    #[test]
    fn random_8x8_residuals_small() {
        let mut rng = SeededRng::new(77);
        let a = random_symmetric(8, &mut rng);
        let eig = sym_eig(&a, 1e-9).unwrap();
        for k in 0..8 {
            assert!(residual(&a, &eig, k) < 1e-10, "pair {}", k);
        }
    }

    #[test]
    fn eigenvectors_orthonormal() {
        let mut rng = SeededRng::new(3);
        let a = random_symmetric(12, &mut rng);
        let eig = sym_eig(&a, 1e-9).unwrap();
        let vt_v = eig.vectors.transpose().matmul(&eig.vectors).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((vt_v.get(i, j) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn reconstruction_up_to_64() {
        for &n in &[2usize, 3, 5, 8, 16, 33, 64] {
            let mut rng = SeededRng::new(1000 + n as u64);
            let a = random_symmetric(n, &mut rng);
            let eig = sym_eig(&a, 1e-9).unwrap();
            // ||V L V^T - A||_F / ||A||_F
            let mut err2 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let mut r = 0.0;
                    for k in 0..n {
                        r += eig.vectors.get(i, k) * eig.values[k] * eig.vectors.get(j, k);
                    }
                    let d = r - a.get(i, j);
                    err2 += d * d;
                }
            }
            let rel = err2.sqrt() / a.frob_norm();
            assert!(rel <= 1e-8, "n={} rel={}", n, rel);
        }
    }

    #[test]
    fn eigenvalues_sorted_descending() {
        let mut rng = SeededRng::new(99);
        let a = random_symmetric(10, &mut rng);
        let eig = sym_eig(&a, 1e-9).unwrap();
        for w in eig.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn rejects_non_square_and_asymmetric() {
        let m = DenseMatrix::zeros(2, 3);
        assert!(matches!(sym_eig(&m, 1e-9), Err(Error::Shape { .. })));
        let m = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 0.5, 1.0]).unwrap();
        assert!(matches!(
            sym_eig(&m, 1e-9),
            Err(Error::NotSymmetric { .. })
        ));
    }
}
