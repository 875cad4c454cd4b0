//! Dense matrix/vector arithmetic, blocked partitioning, and the small local
//! solvers (CG, pseudo-inverse apply) used by the master.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {context} ({left} vs {right})")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },
    #[error("matrix entry at ({row},{col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("data length {len} does not match {rows}x{cols}")]
    BadShape { rows: usize, cols: usize, len: usize },
    #[error("matrix is not symmetric: max asymmetry {asymmetry:.3e}")]
    NotSymmetric { asymmetry: f64 },
    #[error("CG did not converge in {iters} iterations: relative residual {residual:.3e}")]
    CgNoConvergence { iters: usize, residual: f64 },
}

/// Dense real matrix in row-major order. Constructors reject NaN/Inf entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::BadShape {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: if cols > 0 { i / cols } else { 0 },
                col: if cols > 0 { i % cols } else { 0 },
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Exact dense product `A x`, single-threaded reference.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.cols {
            return Err(LinalgError::DimensionMismatch {
                context: "matvec",
                left: self.cols,
                right: x.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Dense product `A B`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch {
                context: "matmul",
                left: self.cols,
                right: other.rows,
            });
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(i);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    /// Gram product `A^T A`.
    pub fn gram(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.cols);
        for k in 0..self.rows {
            let r = self.row(k).to_vec();
            for i in 0..self.cols {
                let a = r[i];
                if a == 0.0 {
                    continue;
                }
                let dst = out.row_mut(i);
                for (d, s) in dst.iter_mut().zip(&r) {
                    *d += a * s;
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn add_scaled(&mut self, other: &DenseMatrix, scale: f64) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (d, s) in self.data.iter_mut().zip(&other.data) {
            *d += scale * s;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for d in &mut self.data {
            *d *= factor;
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols.min(self.rows) {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let m = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, m);
                self.set(j, i, m);
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// A `b x b` tile view over a matrix, zero-padded to full tiles.
#[derive(Debug)]
pub struct BlockGrid<'a> {
    source: &'a DenseMatrix,
    block: usize,
    grid_rows: usize,
    grid_cols: usize,
}

impl<'a> BlockGrid<'a> {
    pub fn block_size(&self) -> usize {
        self.block
    }

    pub fn grid_rows(&self) -> usize {
        self.grid_rows
    }

    pub fn grid_cols(&self) -> usize {
        self.grid_cols
    }

    /// Rows of implicit zero padding below the source.
    pub fn pad_rows(&self) -> usize {
        self.grid_rows * self.block - self.source.rows()
    }

    pub fn pad_cols(&self) -> usize {
        self.grid_cols * self.block - self.source.cols()
    }

    /// The `b x b` tile at grid position `(i, j)`; padded region reads as zero.
    pub fn tile(&self, i: usize, j: usize) -> DenseMatrix {
        assert!(i < self.grid_rows && j < self.grid_cols);
        let b = self.block;
        DenseMatrix::from_fn(b, b, |r, c| {
            let (sr, sc) = (i * b + r, j * b + c);
            if sr < self.source.rows() && sc < self.source.cols() {
                self.source.get(sr, sc)
            } else {
                0.0
            }
        })
    }

    /// Reassemble the source matrix from its tiles, dropping padding.
    pub fn reassemble(&self) -> DenseMatrix {
        let b = self.block;
        let mut out = DenseMatrix::zeros(self.source.rows(), self.source.cols());
        for gi in 0..self.grid_rows {
            for gj in 0..self.grid_cols {
                let t = self.tile(gi, gj);
                for r in 0..b {
                    for c in 0..b {
                        let (sr, sc) = (gi * b + r, gj * b + c);
                        if sr < out.rows() && sc < out.cols() {
                            out.set(sr, sc, t.get(r, c));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Partition `a` into a minimal grid of `b x b` tiles with zero padding.
pub fn block_partition(a: &DenseMatrix, b: usize) -> BlockGrid<'_> {
    assert!(b >= 1, "block size must be at least 1");
    BlockGrid {
        source: a,
        block: b,
        grid_rows: a.rows().div_ceil(b).max(1),
        grid_cols: a.cols().div_ceil(b).max(1),
    }
}

const SYMMETRY_TOL: f64 = 1e-10;

fn check_symmetric(h: &DenseMatrix) -> Result<(), LinalgError> {
    if h.rows() != h.cols() {
        return Err(LinalgError::DimensionMismatch {
            context: "symmetric solve",
            left: h.rows(),
            right: h.cols(),
        });
    }
    let scale = h.frobenius_norm().max(1.0);
    let asym = h.max_asymmetry();
    if asym > SYMMETRY_TOL * scale {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Conjugate gradient for SPD systems. Returns `p` with
/// `||H p - g|| <= tol * ||g||`, or an error carrying the final residual.
pub fn cg_solve(
    h: &DenseMatrix,
    g: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, LinalgError> {
    check_symmetric(h)?;
    if g.len() != h.cols() {
        return Err(LinalgError::DimensionMismatch {
            context: "cg_solve",
            left: h.cols(),
            right: g.len(),
        });
    }
    let gnorm = norm(g);
    if gnorm == 0.0 {
        return Ok(vec![0.0; g.len()]);
    }
    let mut x = vec![0.0; g.len()];
    let mut r = g.to_vec();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    for _ in 0..max_iter {
        if rs.sqrt() <= tol * gnorm {
            return Ok(x);
        }
        let hp = h.matvec(&p)?;
        let alpha = rs / dot(&p, &hp);
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &hp, &mut r);
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rs = rs_new;
    }
    if rs.sqrt() <= tol * gnorm {
        Ok(x)
    } else {
        Err(LinalgError::CgNoConvergence {
            iters: max_iter,
            residual: rs.sqrt() / gnorm,
        })
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
/// Returns `(eigenvalues, V)` with `H = V diag(lambda) V^T`, eigenvectors in
/// the columns of `V`.
pub fn sym_eig(h: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix), LinalgError> {
    check_symmetric(h)?;
    let n = h.rows();
    let mut a = h.clone();
    a.symmetrize();
    let mut v = DenseMatrix::identity(n);
    let scale = a.frobenius_norm();
    if scale == 0.0 || n == 0 {
        return Ok((vec![0.0; n], v));
    }
    let tol = 1e-14 * scale;
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a.get(i, j).powi(2);
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= tol / (n as f64) {
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
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let eigs: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    Ok((eigs, v))
}

/// Apply the Moore-Penrose pseudo-inverse of a symmetric PSD matrix:
/// `p = H^dagger g`, zeroing eigenvalues below `rank_tol * lambda_max`.
/// The result lies in Range(H); `H = 0` gives the zero vector.
pub fn pinv_apply(h: &DenseMatrix, g: &[f64], rank_tol: f64) -> Result<Vec<f64>, LinalgError> {
    let (eigs, v) = sym_eig(h)?;
    if g.len() != h.cols() {
        return Err(LinalgError::DimensionMismatch {
            context: "pinv_apply",
            left: h.cols(),
            right: g.len(),
        });
    }
    let lambda_max = eigs.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = rank_tol * lambda_max;
    let n = g.len();
    let mut out = vec![0.0; n];
    for (k, &lam) in eigs.iter().enumerate() {
        if lam <= cutoff {
            continue;
        }
        let vk: Vec<f64> = (0..n).map(|i| v.get(i, k)).collect();
        let coeff = dot(&vk, g) / lam;
        axpy(coeff, &vk, &mut out);
    }
    Ok(out)
}

/// Default relative eigenvalue cutoff for [`pinv_apply`].
pub const RANK_TOL: f64 = 1e-10;

/// Power-iteration estimates of the extreme eigenvalues of a symmetric PSD
/// matrix.
#[derive(Debug, Clone, Copy)]
pub struct SpectralEstimates {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub iterations: usize,
    pub tolerance: f64,
}

fn power_iteration(h: &DenseMatrix, tol: f64, max_iter: usize) -> (f64, usize) {
    let n = h.rows();
    // Deterministic start vector with a mild irrational skew so it is not
    // orthogonal to the dominant eigenvector for common structured matrices.
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.37 * ((i as f64 + 1.0) * 0.754877).sin())
        .collect();
    let nv = norm(&v);
    for x in &mut v {
        *x /= nv;
    }
    let mut lambda = 0.0f64;
    for it in 0..max_iter {
        let hv = h.matvec(&v).expect("square matrix");
        let new_lambda = dot(&v, &hv);
        let hv_norm = norm(&hv);
        if hv_norm == 0.0 {
            return (0.0, it);
        }
        v = hv.iter().map(|x| x / hv_norm).collect();
        if (new_lambda - lambda).abs() <= tol * new_lambda.abs().max(1e-300) && it > 2 {
            return (new_lambda, it);
        }
        lambda = new_lambda;
    }
    (lambda, max_iter)
}

/// Estimate the extreme eigenvalues of a symmetric PSD matrix:
/// `lambda_max` by power iteration, `lambda_min` by power iteration on the
/// shifted matrix `lambda_max I - H`.
pub fn estimate_spectrum(h: &DenseMatrix) -> Result<SpectralEstimates, LinalgError> {
    check_symmetric(h)?;
    let tol = 1e-10;
    let max_iter = 20_000;
    let (lambda_max, it1) = power_iteration(h, tol, max_iter);
    let n = h.rows();
    let shifted = DenseMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { lambda_max } else { 0.0 };
        d - h.get(i, j)
    });
    let (shift_max, it2) = power_iteration(&shifted, tol, max_iter);
    let lambda_min = (lambda_max - shift_max).max(0.0);
    Ok(SpectralEstimates {
        lambda_min,
        lambda_max,
        iterations: it1 + it2,
        tolerance: tol,
    })
}
