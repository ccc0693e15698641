//! Dense and sparse matrices, just enough for the cells and the reservoir.

use crate::error::{dim_check, Error, Result};
use serde::{Deserialize, Serialize};

/// Row-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        dim_check(data.len() == rows * cols, || {
            format!("{rows}x{cols} matrix needs {} values, got {}", rows * cols, data.len())
        })?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix entries must be finite".into()));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        dim_check(rows.iter().all(|r| r.len() == cols), || {
            "ragged rows".to_string()
        })?;
        Mat::new(rows.len(), cols, rows.concat())
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

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        dim_check(x.len() == self.cols, || {
            format!("matvec: {}x{} matrix, vector of length {}", self.rows, self.cols, x.len())
        })?;
        let mut y = vec![0.0; self.rows];
        self.matvec_add(x, &mut y);
        Ok(y)
    }

    /// `y += A x`. Dimensions are the caller's responsibility.
    #[inline]
    pub(crate) fn matvec_add(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (yi, row) in y.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *yi += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `y += Aᵀ x`.
    #[inline]
    pub(crate) fn matvec_t_add(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for (&xi, row) in x.iter().zip(self.data.chunks_exact(self.cols.max(1))) {
            if xi != 0.0 {
                for (yj, a) in y.iter_mut().zip(row) {
                    *yj += a * xi;
                }
            }
        }
    }

    /// `A += u vᵀ`.
    #[inline]
    pub(crate) fn add_outer(&mut self, u: &[f64], v: &[f64]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for (&ui, row) in u.iter().zip(self.data.chunks_exact_mut(self.cols.max(1))) {
            if ui != 0.0 {
                for (a, vj) in row.iter_mut().zip(v) {
                    *a += ui * vj;
                }
            }
        }
    }

    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        dim_check(self.cols == other.rows, || {
            format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )
        })?;
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a != 0.0 {
                    for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                        *o += a * b;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }
}

/// Coordinate-format sparse matrix with unique (row, col) entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseMat {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMat {
    pub fn new(rows: usize, cols: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|&(r, c, _)| (r, c));
        for w in entries.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate sparse entry at ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }
        for &(r, c, v) in &entries {
            dim_check(r < rows && c < cols, || {
                format!("entry ({r}, {c}) outside {rows}x{cols}")
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidArgument("sparse entries must be finite".into()));
            }
        }
        Ok(SparseMat {
            rows,
            cols,
            entries,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn density(&self) -> f64 {
        if self.rows * self.cols == 0 {
            0.0
        } else {
            self.nnz() as f64 / (self.rows * self.cols) as f64
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.entries.iter_mut().for_each(|e| e.2 *= factor);
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        dim_check(x.len() == self.cols, || {
            format!("sparse matvec: {} columns, vector of length {}", self.cols, x.len())
        })?;
        let mut y = vec![0.0; self.rows];
        self.matvec_add(x, &mut y);
        Ok(y)
    }

    #[inline]
    pub(crate) fn matvec_add(&self, x: &[f64], y: &mut [f64]) {
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            m.set(r, c, v);
        }
        m
    }
}

pub const DEFAULT_SPECTRAL_ITERS: usize = 1000;

/// Spectral radius of a square matrix.
///
/// Runs the power method on the matrix itself rather than on a vector:
/// `B_{j+1} = B_j² / ‖B_j²‖_F` while tracking the log of the discarded
/// scale, so `‖A^(2^j)‖^(1/2^j)` is available at every step and converges
/// to ρ(A) from above (Gelfand). Unlike vector power iteration this
/// converges when several eigenvalues share the dominant modulus, which is
/// the usual case for 1%-dense reservoirs built from short cycles.
/// Stops when successive estimates differ by less than 1e-10, after
/// `max_iters` squarings, or when a power vanishes (nilpotent input).
pub fn spectral_radius(a: &SparseMat, max_iters: usize) -> Result<f64> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "spectral radius of non-square {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let mut b = a.to_dense();
    let norm = b.frobenius_norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    b.scale(1.0 / norm);
    let mut log_scale = norm.ln();
    let mut power = 1.0f64;
    let mut estimate = norm;
    // 2^j stays finite in f64 well past the point where estimates stop moving
    for _ in 0..max_iters.min(1000) {
        let sq = b.matmul(&b)?;
        let nu = sq.frobenius_norm();
        if nu == 0.0 || !nu.is_finite() {
            return Ok(0.0);
        }
        b = sq;
        b.scale(1.0 / nu);
        log_scale = 2.0 * log_scale + nu.ln();
        power *= 2.0;
        let next = (log_scale / power).exp();
        let delta = (next - estimate).abs();
        estimate = next;
        if delta < 1e-10 {
            break;
        }
    }
    Ok(estimate)
}

/// Cholesky factor `L` of a symmetric positive-definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Mat,
}

impl Cholesky {
    pub fn new(a: &Mat) -> Result<Self> {
        let n = a.rows();
        dim_check(a.cols() == n, || format!("cholesky of {}x{} matrix", a.rows(), a.cols()))?;
        let scale = (0..n)
            .map(|i| a.get(i, i).abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l.get(j, k) * l.get(j, k);
            }
            if d <= scale * 1e-14 {
                return Err(Error::Singular(format!(
                    "matrix is not positive definite (pivot {d:e} at column {j}); use a ridge penalty > 0"
                )));
            }
            let d = d.sqrt();
            l.set(j, j, d);
            for i in j + 1..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / d);
            }
        }
        Ok(Cholesky { l })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.l.rows();
        dim_check(b.len() == n, || format!("rhs of length {} for {n} unknowns", b.len()))?;
        let l = &self.l;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l.get(i, k) * y[k];
            }
            y[i] = s / l.get(i, i);
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l.get(k, i) * x[k];
            }
            x[i] = s / l.get(i, i);
        }
        Ok(x)
    }
}

/// Solve `A x = b` for symmetric positive-definite `A`.
pub fn solve_spd(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    dim_check(a.rows() == b.len(), || {
        format!("solve_spd: {}x{} system, rhs length {}", a.rows(), a.cols(), b.len())
    })?;
    Cholesky::new(a)?.solve(b)
}
