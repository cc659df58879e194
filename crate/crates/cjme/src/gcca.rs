//! Generalized canonical correlation analysis over three views.
//!
//! Shared-representation formulation: with centered views `X_i`, the
//! shared directions are the top eigenvectors of
//! `M = sum_i X_i (X_i^T X_i + r I)^-1 X_i^T`. Writing
//! `B_i = X_i (X_i^T X_i + r I)^-1/2` and `B = [B_1 .. B_m]`, the nonzero
//! eigenvalues of `M = B B^T` equal those of the small matrix `B^T B`,
//! which is what gets eigensolved here. An eigenvalue `l` maps to the
//! canonical correlation `(l - 1) / (m - 1)`, clamped to [0, 1]; for two
//! views this reduces to the classic `l = 1 + rho` relation. Per-view
//! projections are regularized least-squares maps onto the shared
//! representation.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::dataio::{read_exact_buf, read_f64, read_tensor_raw, read_u32, write_tensor, write_u32};
use crate::error::{Error, Result};
use crate::numerics::{sym_eig, DenseMatrix};

const COND_LIMIT: f64 = 1e14;
const EIG_SYM_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct GccaModel {
    /// One `d_i x k` projection per view.
    pub projections: Vec<DenseMatrix>,
    pub means: Vec<Vec<f64>>,
    /// Descending canonical correlations in [0, 1].
    pub correlations: Vec<f64>,
    pub r: f64,
    pub k: usize,
}

fn center(view: &DenseMatrix) -> (DenseMatrix, Vec<f64>) {
    let (n, d) = (view.rows(), view.cols());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (j, m) in mean.iter_mut().enumerate() {
            *m += view.get(i, j);
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let centered = DenseMatrix::from_fn(n, d, |i, j| view.get(i, j) - mean[j]);
    (centered, mean)
}

/// `U f(S) U^T` for the covariance `X^T X`, with a condition check.
fn covariance_transform(
    centered: &DenseMatrix,
    r: f64,
    f: impl Fn(f64) -> f64,
) -> Result<DenseMatrix> {
    let cov = centered.transpose().matmul(centered)?;
    let eig = sym_eig(&cov, EIG_SYM_TOL * cov.frob_norm().max(1.0))?;
    let s_max = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let s_min = eig.values.last().copied().unwrap_or(0.0).max(0.0);
    let cond = (s_max + r) / (s_min + r);
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(Error::Numerical(format!(
            "view covariance is rank deficient beyond regularization (condition {cond:.3e} at r={r:.3e})"
        )));
    }
    let d = cov.rows();
    let mut out = DenseMatrix::zeros(d, d);
    for (idx, &s) in eig.values.iter().enumerate() {
        let scale = f(s.max(0.0));
        for i in 0..d {
            let ui = eig.vectors.get(i, idx) * scale;
            for j in 0..d {
                out.set(i, j, out.get(i, j) + ui * eig.vectors.get(j, idx));
            }
        }
    }
    Ok(out)
}

/// Fits the shared space. Views are `N x d_i` with a common row count;
/// rows are paired observations.
pub fn fit_gcca(views: &[DenseMatrix], k: usize, r: f64) -> Result<GccaModel> {
    if views.len() < 2 {
        return Err(Error::InvalidConfig("GCCA needs at least two views".into()));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidConfig("GCCA regularizer must be > 0".into()));
    }
    let n = views[0].rows();
    for (i, v) in views.iter().enumerate() {
        if v.rows() != n {
            return Err(Error::Shape {
                op: "fit_gcca",
                expected: format!("{n} rows in every view"),
                got: format!("view {i} has {}", v.rows()),
            });
        }
        if v.cols() < k {
            return Err(Error::InvalidConfig(format!(
                "view {i} has {} columns, fewer than k={k}",
                v.cols()
            )));
        }
    }
    if n <= k {
        return Err(Error::InvalidConfig(format!(
            "need more observations than components (N={n}, k={k})"
        )));
    }

    let m = views.len();
    let mut centered = Vec::with_capacity(m);
    let mut means = Vec::with_capacity(m);
    let mut whitened = Vec::with_capacity(m);
    for view in views {
        let (c, mu) = center(view);
        let white = covariance_transform(&c, r, |s| 1.0 / (s + r).sqrt())?;
        whitened.push(c.matmul(&white)?);
        centered.push(c);
        means.push(mu);
    }

    // Stack whitened views; the small Gram matrix carries the spectrum.
    let d_total: usize = whitened.iter().map(|b| b.cols()).sum();
    let mut stacked = DenseMatrix::zeros(n, d_total);
    let mut col0 = 0;
    for b in &whitened {
        for i in 0..n {
            for j in 0..b.cols() {
                stacked.set(i, col0 + j, b.get(i, j));
            }
        }
        col0 += b.cols();
    }
    let gram = stacked.transpose().matmul(&stacked)?;
    let eig = sym_eig(&gram, EIG_SYM_TOL * gram.frob_norm().max(1.0))?;

    let correlations: Vec<f64> = eig.values[..k]
        .iter()
        .map(|&l| ((l - 1.0) / (m as f64 - 1.0)).clamp(0.0, 1.0))
        .collect();

    // Shared representation: G columns are B w / |B w|.
    let mut shared = DenseMatrix::zeros(n, k);
    for j in 0..k {
        let w: Vec<f64> = (0..d_total).map(|i| eig.vectors.get(i, j)).collect();
        let mut col = vec![0.0; n];
        for i in 0..n {
            let row = stacked.row(i);
            col[i] = row.iter().zip(&w).map(|(a, b)| a * b).sum();
        }
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        for i in 0..n {
            shared.set(i, j, col[i] / norm);
        }
    }

    // Per-view regularized least squares onto the shared representation.
    let mut projections = Vec::with_capacity(m);
    for c in &centered {
        let inv = covariance_transform(c, r, |s| 1.0 / (s + r))?;
        let xtg = c.transpose().matmul(&shared)?;
        projections.push(inv.matmul(&xtg)?);
    }

    Ok(GccaModel {
        projections,
        means,
        correlations,
        r,
        k,
    })
}

/// Centers `x` with the view's training mean and projects it into the
/// shared k-dimensional space.
pub fn transform_gcca(model: &GccaModel, view_index: usize, x: &[f64]) -> Result<Vec<f64>> {
    let proj = model.projections.get(view_index).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "view index {view_index} out of range ({} views)",
            model.projections.len()
        ))
    })?;
    let mean = &model.means[view_index];
    if x.len() != mean.len() {
        return Err(Error::Shape {
            op: "transform_gcca",
            expected: format!("vector of length {}", mean.len()),
            got: format!("{}", x.len()),
        });
    }
    let mut out = vec![0.0; model.k];
    for (j, xm) in x.iter().zip(mean).map(|(a, b)| a - b).enumerate() {
        if xm == 0.0 {
            continue;
        }
        for (c, o) in out.iter_mut().enumerate() {
            *o += xm * proj.get(j, c);
        }
    }
    Ok(out)
}

const GCCA_MAGIC: &[u8; 4] = b"GCCA";
const GCCA_VERSION: u32 = 1;

/// Same container conventions as the model checkpoint, distinct magic.
pub fn save_gcca(model: &GccaModel, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(GCCA_MAGIC)?;
    write_u32(&mut w, GCCA_VERSION)?;
    write_u32(&mut w, model.projections.len() as u32)?;
    write_u32(&mut w, model.k as u32)?;
    w.write_all(&model.r.to_le_bytes())?;
    for (proj, mean) in model.projections.iter().zip(&model.means) {
        write_u32(&mut w, mean.len() as u32)?;
        write_tensor(&mut w, mean)?;
        write_tensor(&mut w, proj.data())?;
    }
    write_tensor(&mut w, &model.correlations)?;
    w.flush()?;
    Ok(())
}

pub fn load_gcca(path: &Path) -> Result<GccaModel> {
    let file = fs::File::open(path).map_err(|_| Error::MissingFile {
        path: path.to_path_buf(),
    })?;
    let mut r = BufReader::new(file);
    let magic = read_exact_buf(&mut r, 4)?;
    if magic != GCCA_MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {magic:?} (expected {GCCA_MAGIC:?})"
        )));
    }
    let version = read_u32(&mut r)?;
    if version != GCCA_VERSION {
        return Err(Error::Version {
            expected: GCCA_VERSION,
            got: version,
        });
    }
    let n_views = read_u32(&mut r)? as usize;
    let k = read_u32(&mut r)? as usize;
    let reg = read_f64(&mut r)?;
    let mut projections = Vec::with_capacity(n_views);
    let mut means = Vec::with_capacity(n_views);
    for vi in 0..n_views {
        let dim = read_u32(&mut r)? as usize;
        means.push(read_tensor_raw(&mut r, &format!("gcca.mean{vi}"), dim)?);
        let data = read_tensor_raw(&mut r, &format!("gcca.proj{vi}"), dim * k)?;
        projections.push(DenseMatrix::from_vec(dim, k, data)?);
    }
    let correlations = read_tensor_raw(&mut r, "gcca.correlations", k)?;
    Ok(GccaModel {
        projections,
        means,
        correlations,
        r: reg,
        k,
    })
}

/// Checks whether a model file holds a GCCA model (as opposed to a
/// projection checkpoint) by its magic bytes.
pub fn is_gcca_file(path: &Path) -> Result<bool> {
    let file = fs::File::open(path).map_err(|_| Error::MissingFile {
        path: path.to_path_buf(),
    })?;
    let mut r = BufReader::new(file);
    let magic = read_exact_buf(&mut r, 4)?;
    Ok(&magic[..] == GCCA_MAGIC)
}
