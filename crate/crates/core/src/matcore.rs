//! Dense linear-algebra kernel.
//!
//! Row-major real matrices plus the handful of factorizations the recovery
//! algorithms need: a full SVD with a fixed sign convention, its truncated
//! variant, minimum-norm least squares, and thin QR. The factorizations are
//! delegated to `faer` (built without its thread pool); everything here
//! normalizes ordering and signs so that results are reproducible
//! bit-for-bit for a given input.

use std::fmt;
use std::ops::{Index, IndexMut};

use faer::Mat;

use crate::error::{dim_mismatch, Error, Result};

/// Default relative cutoff used to decide numerical rank in least squares.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Singular triplets below this fraction of the leading singular value are
/// dropped by truncated decompositions.
pub const DROP_TOL: f64 = 1e-12;


/// Dense real matrix stored in row-major order.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
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
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Square matrix with `diag` on its diagonal.
    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major entries, validating shape and finiteness.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(dim_mismatch(rows * cols, data.len()));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Convenience constructor from nested rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), ncols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: nrows,
            cols: ncols,
            data,
        }
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), rows, "column length mismatch");
            for (i, &x) in c.iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        m
    }

    /// Rank-one matrix `scale * u v^T`.
    pub fn outer(u: &[f64], v: &[f64], scale: f64) -> Self {
        let mut m = Self::zeros(u.len(), v.len());
        m.add_outer(u, v, scale);
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
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

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(dim_mismatch(
                format!("{} rows on the right", self.cols),
                rhs.rows,
            ));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * x` for a vector `x` of length `cols`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `self^T * y` for a vector `y` of length `rows`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            axpy(yi, self.row(i), &mut out);
        }
        out
    }

    /// In-place `self += scale * u v^T`.
    pub fn add_outer(&mut self, u: &[f64], v: &[f64], scale: f64) {
        assert_eq!(u.len(), self.rows);
        assert_eq!(v.len(), self.cols);
        for (i, &ui) in u.iter().enumerate() {
            let a = scale * ui;
            if a == 0.0 {
                continue;
            }
            axpy(a, v, &mut self.data[i * self.cols..(i + 1) * self.cols]);
        }
    }

    pub fn scaled(&self, s: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| s * x).collect(),
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &DenseMatrix, s: f64) -> DenseMatrix {
        assert_eq!(self.shape(), other.shape());
        let mut out = self.clone();
        axpy(s, &other.data, &mut out.data);
        out
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        self.add_scaled(other, -1.0)
    }

    /// Frobenius inner product `tr(other^T self)`.
    pub fn inner(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        dot(&self.data, &other.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub(crate) fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }

    pub(crate) fn from_faer(m: faer::MatRef<'_, f64>) -> Self {
        let (rows, cols) = (m.nrows(), m.ncols());
        let mut out = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] = m[(i, j)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a * x`.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Singular value decomposition `M = U diag(sigma) V^T` with `k` triplets.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    /// rows x k, orthonormal columns.
    pub u: DenseMatrix,
    /// Non-increasing, non-negative.
    pub sigma: Vec<f64>,
    /// cols x k, orthonormal columns.
    pub v: DenseMatrix,
}

impl SvdFactors {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn u_col(&self, i: usize) -> Vec<f64> {
        self.u.column(i)
    }

    pub fn v_col(&self, i: usize) -> Vec<f64> {
        self.v.column(i)
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.u.rows(), self.v.rows());
        for (i, &s) in self.sigma.iter().enumerate() {
            out.add_outer(&self.u_col(i), &self.v_col(i), s);
        }
        out
    }

    fn keep_leading(self, k: usize) -> SvdFactors {
        let k = k.min(self.sigma.len());
        let take = |m: &DenseMatrix| {
            let cols: Vec<Vec<f64>> = (0..k).map(|j| m.column(j)).collect();
            DenseMatrix::from_columns(m.rows(), &cols)
        };
        SvdFactors {
            u: take(&self.u),
            v: take(&self.v),
            sigma: self.sigma[..k].to_vec(),
        }
    }
}

/// Backend used by [`svd_truncated_with`].
#[non_exhaustive]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SvdBackend {
    /// Full dense decomposition followed by truncation.
    #[default]
    Dense,
}

fn check_finite(m: &DenseMatrix) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput("matrix contains NaN or Inf".into()))
    }
}

/// Full SVD with `k = min(rows, cols)`.
///
/// Singular values come back sorted non-increasing. Each left singular vector
/// is signed so that its first entry with magnitude above roundoff is
/// non-negative; the matching right vector is flipped with it.
pub fn svd(m: &DenseMatrix) -> Result<SvdFactors> {
    check_finite(m)?;
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    let scale = m.max_abs();
    if scale == 0.0 {
        // Pin the basis; the backend's choice for a zero matrix is arbitrary.
        let eye = |n: usize| {
            let mut e = DenseMatrix::zeros(n, k);
            for i in 0..k {
                e[(i, i)] = 1.0;
            }
            e
        };
        return Ok(SvdFactors {
            u: eye(rows),
            sigma: vec![0.0; k],
            v: eye(cols),
        });
    }

    let decomp = m
        .to_faer()
        .thin_svd()
        .map_err(|e| Error::NoConvergence(format!("{rows}x{cols} SVD: {e:?}")))?;
    let u = decomp.U();
    let v = decomp.V();
    let sv = decomp.S().column_vector();

    let mut order: Vec<usize> = (0..k).collect();
    // Already non-increasing from the backend; the stable sort only guards it.
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));

    let mut out_u = DenseMatrix::zeros(rows, k);
    let mut out_v = DenseMatrix::zeros(cols, k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let ucol: Vec<f64> = (0..rows).map(|i| u[(i, src)]).collect();
        let sign = sign_of_first_significant(&ucol);
        for i in 0..rows {
            out_u[(i, dst)] = sign * ucol[i];
        }
        for j in 0..cols {
            out_v[(j, dst)] = sign * v[(j, src)];
        }
        sigma.push(sv[src].max(0.0));
    }
    Ok(SvdFactors {
        u: out_u,
        sigma,
        v: out_v,
    })
}

fn sign_of_first_significant(x: &[f64]) -> f64 {
    let amax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = amax * 1e-12;
    match x.iter().find(|v| v.abs() > floor) {
        Some(v) if *v < 0.0 => -1.0,
        _ => 1.0,
    }
}

/// Leading `k` singular triplets using the default backend.
pub fn svd_truncated(m: &DenseMatrix, k: usize) -> Result<SvdFactors> {
    svd_truncated_with(m, k, SvdBackend::default())
}

/// Leading `k` singular triplets; triplets with `sigma < 1e-12 * sigma_1`
/// are dropped, so fewer than `k` may be returned.
pub fn svd_truncated_with(m: &DenseMatrix, k: usize, backend: SvdBackend) -> Result<SvdFactors> {
    let kmax = m.rows().min(m.cols());
    if k == 0 || k > kmax {
        return Err(Error::InvalidArgument(format!(
            "truncation rank {k} outside 1..={kmax}"
        )));
    }
    let full = match backend {
        SvdBackend::Dense => svd(m)?,
    };
    let cutoff = full.sigma.first().copied().unwrap_or(0.0) * DROP_TOL;
    let kept = full
        .sigma
        .iter()
        .take(k)
        .take_while(|&&s| s > cutoff && s > 0.0)
        .count();
    Ok(full.keep_leading(kept))
}

/// Minimum-norm minimizer of `||b - phi * alpha||_2`.
///
/// Rank is decided by singular values `>= rank_tol * sigma_1(phi)`.
pub fn least_squares_minnorm(phi: &DenseMatrix, b: &[f64], rank_tol: f64) -> Result<Vec<f64>> {
    let (p, t) = phi.shape();
    if b.len() != p {
        return Err(dim_mismatch(p, b.len()));
    }
    check_finite(phi)?;
    if let Some(x) = b.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite right-hand side {x}")));
    }
    if b.iter().all(|&x| x == 0.0) || phi.max_abs() == 0.0 {
        return Ok(vec![0.0; t]);
    }
    let decomp = phi
        .to_faer()
        .thin_svd()
        .map_err(|e| Error::NoConvergence(format!("{p}x{t} least squares: {e:?}")))?;
    let u = decomp.U();
    let v = decomp.V();
    let sv = decomp.S().column_vector();
    let smax = (0..sv.nrows()).fold(0.0f64, |m, i| m.max(sv[i]));
    let cutoff = rank_tol * smax;

    let mut alpha = vec![0.0; t];
    for i in 0..sv.nrows() {
        if sv[i] < cutoff || sv[i] == 0.0 {
            continue;
        }
        let ub: f64 = (0..p).map(|r| u[(r, i)] * b[r]).sum();
        let w = ub / sv[i];
        for (j, a) in alpha.iter_mut().enumerate() {
            *a += w * v[(j, i)];
        }
    }
    Ok(alpha)
}

/// Thin QR: `m = q r` with `q` of shape rows x min(rows, cols).
pub fn thin_qr(m: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let qr = m.to_faer().qr();
    let q = qr.compute_thin_Q();
    (DenseMatrix::from_faer(q.as_ref()), DenseMatrix::from_faer(qr.thin_R()))
}

pub fn frobenius_norm(m: &DenseMatrix) -> f64 {
    norm2(m.as_slice())
}

pub fn nuclear_norm(m: &DenseMatrix) -> Result<f64> {
    Ok(svd(m)?.sigma.iter().sum())
}
