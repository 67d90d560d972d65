//! Dense complex matrices and the handful of factorizations the relay schemes
//! need: partial-pivot linear solves, a Householder QR with column pivoting
//! (numerical rank and null spaces), Cholesky for log-determinants, and the
//! Kronecker / vectorization pair used by the distributed-relay solver.
//!
//! Everything here is sized for the tiny systems that show up in the schemes
//! (at most a few dozen rows), so the routines favour clarity over blocking.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;

/// Relative threshold used by the rank / null-space decisions when the caller
/// does not supply one.
pub const DEFAULT_REL_EPS: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix must have at least one row and one column, got {rows}x{cols}")]
    EmptyShape { rows: usize, cols: usize },
    #[error("{len} entries cannot fill a {rows}x{cols} matrix")]
    EntryCount { rows: usize, cols: usize, len: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular matrix: pivot {pivot:.3e} at step {step} is below threshold {threshold:.3e}")]
    Singular {
        step: usize,
        pivot: f64,
        threshold: f64,
    },
    #[error("null space is empty: numerical rank {rank} equals column count")]
    EmptyNullSpace { rank: usize },
    #[error("relative tolerance must lie strictly between 0 and 1, got {0}")]
    BadTolerance(f64),
    #[error("matrix is not Hermitian positive definite")]
    NotPositiveDefinite,
}

/// Relative threshold for rank and null-space decisions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    rel_eps: f64,
}

impl Tolerance {
    pub fn new(rel_eps: f64) -> Result<Self, LinalgError> {
        if rel_eps > 0.0 && rel_eps < 1.0 {
            Ok(Tolerance { rel_eps })
        } else {
            Err(LinalgError::BadTolerance(rel_eps))
        }
    }

    pub fn rel_eps(&self) -> f64 {
        self.rel_eps
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rel_eps: DEFAULT_REL_EPS,
        }
    }
}

/// Dense row-major complex matrix with at least one row and one column and
/// only finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<C64>,
}

impl TryFrom<RawMatrix> for CMatrix {
    type Error = LinalgError;

    fn try_from(raw: RawMatrix) -> Result<Self, Self::Error> {
        CMatrix::new(raw.rows, raw.cols, raw.entries)
    }
}

impl From<CMatrix> for RawMatrix {
    fn from(m: CMatrix) -> Self {
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            entries: m.data,
        }
    }
}

impl CMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::EmptyShape { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(LinalgError::EntryCount {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(CMatrix { rows, cols, data })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "CMatrix::zeros({rows}, {cols}): empty shape");
        CMatrix {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::DimensionMismatch("ragged rows".into()));
        }
        CMatrix::new(rows.len(), cols, rows.concat())
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self, LinalgError> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn column(entries: &[C64]) -> Self {
        Self::from_fn(entries.len(), 1, |i, _| entries[i])
    }

    pub fn row(entries: &[C64]) -> Self {
        Self::from_fn(1, entries.len(), |_, j| entries[j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn col(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row_entries(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col_matrix(&self, j: usize) -> CMatrix {
        CMatrix::column(&self.col(j))
    }

    pub fn row_matrix(&self, i: usize) -> CMatrix {
        CMatrix::row(self.row_entries(i))
    }

    pub fn select_columns(&self, cols: &[usize]) -> CMatrix {
        CMatrix::from_fn(self.rows, cols.len(), |i, j| self[(i, cols[j])])
    }

    pub fn select_rows(&self, rows: &[usize]) -> CMatrix {
        CMatrix::from_fn(rows.len(), self.cols, |i, j| self[(rows[i], j)])
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: C64) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> CMatrix {
        self.scale(C64::new(s, 0.0))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// # Panics
    /// On inner-dimension mismatch.
    pub fn matmul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul: {}x{} times {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        out
    }

    pub fn vstack(blocks: &[&CMatrix]) -> Result<CMatrix, LinalgError> {
        let cols = blocks
            .first()
            .ok_or_else(|| LinalgError::DimensionMismatch("vstack of nothing".into()))?
            .cols;
        if blocks.iter().any(|b| b.cols != cols) {
            return Err(LinalgError::DimensionMismatch("vstack column counts differ".into()));
        }
        let data = blocks.iter().flat_map(|b| b.data.iter().copied()).collect();
        CMatrix::new(blocks.iter().map(|b| b.rows).sum(), cols, data)
    }

    pub fn hstack(blocks: &[&CMatrix]) -> Result<CMatrix, LinalgError> {
        let transposed: Vec<CMatrix> = blocks.iter().map(|b| b.transpose()).collect();
        let refs: Vec<&CMatrix> = transposed.iter().collect();
        Ok(CMatrix::vstack(&refs)?.transpose())
    }

    /// `‖self − other‖_F`.
    pub fn distance(&self, other: &CMatrix) -> f64 {
        (self - other).frobenius_norm()
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        assert!(i < self.rows && j < self.cols, "index ({i}, {j}) out of bounds");
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        assert!(i < self.rows && j < self.cols, "index ({i}, {j}) out of bounds");
        &mut self.data[i * self.cols + j]
    }
}

impl Mul<&CMatrix> for &CMatrix {
    type Output = CMatrix;

    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

impl Add<&CMatrix> for &CMatrix {
    type Output = CMatrix;

    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape(), "add: shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub<&CMatrix> for &CMatrix {
    type Output = CMatrix;

    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape(), "sub: shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row_entries(i) {
                write!(f, "{:+.4e}{:+.4e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Unconjugated inner product `Σ a_i b_i`.
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    assert_eq!(a.len(), b.len(), "dot: length mismatch");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `a x = b` with the default tolerance.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix, LinalgError> {
    solve_with(a, b, Tolerance::default())
}

/// Gaussian elimination with partial pivoting. A pivot smaller than
/// `rel_eps` times the largest entry of `a` is reported as [`LinalgError::Singular`].
pub fn solve_with(a: &CMatrix, b: &CMatrix, tol: Tolerance) -> Result<CMatrix, LinalgError> {
    let n = a.rows;
    if a.cols != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "solve needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    if b.rows != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "right-hand side has {} rows, expected {n}",
            b.rows
        )));
    }
    let m = b.cols;
    let threshold = tol.rel_eps * a.max_abs();
    let mut lu = a.clone();
    let mut x = b.clone();

    for step in 0..n {
        let (p, pivot) = (step..n)
            .map(|i| (i, lu[(i, step)].norm()))
            .fold((step, -1.0), |best, cand| if cand.1 > best.1 { cand } else { best });
        if pivot <= threshold || pivot == 0.0 {
            return Err(LinalgError::Singular {
                step,
                pivot,
                threshold,
            });
        }
        if p != step {
            for j in 0..n {
                lu.data.swap(step * n + j, p * n + j);
            }
            for j in 0..m {
                x.data.swap(step * m + j, p * m + j);
            }
        }
        let inv = lu[(step, step)].inv();
        for i in step + 1..n {
            let factor = lu[(i, step)] * inv;
            if factor == C64::new(0.0, 0.0) {
                continue;
            }
            for j in step..n {
                let v = lu[(step, j)];
                lu[(i, j)] -= factor * v;
            }
            for j in 0..m {
                let v = x[(step, j)];
                x[(i, j)] -= factor * v;
            }
        }
    }

    for step in (0..n).rev() {
        let inv = lu[(step, step)].inv();
        for j in 0..m {
            let mut acc = x[(step, j)];
            for k in step + 1..n {
                acc -= lu[(step, k)] * x[(k, j)];
            }
            x[(step, j)] = acc * inv;
        }
    }
    Ok(x)
}

pub fn inverse(a: &CMatrix) -> Result<CMatrix, LinalgError> {
    solve(a, &CMatrix::identity(a.rows))
}

/// Zero-forcing left inverse `(HᴴH)⁻¹Hᴴ` of a tall, full-column-rank matrix.
/// Square inputs go straight through [`inverse`].
pub fn left_inverse(h: &CMatrix) -> Result<CMatrix, LinalgError> {
    if h.rows < h.cols {
        return Err(LinalgError::DimensionMismatch(format!(
            "left inverse needs rows >= cols, got {}x{}",
            h.rows, h.cols
        )));
    }
    if h.rows == h.cols {
        return inverse(h);
    }
    let ha = h.adjoint();
    solve(&(&ha * h), &ha)
}

/// Householder QR with column pivoting: `a Π = Q R`.
struct PivotedQr {
    q: CMatrix,
    r: CMatrix,
}

fn pivoted_qr(a: &CMatrix) -> PivotedQr {
    let (m, n) = a.shape();
    let mut r = a.clone();
    let mut q = CMatrix::identity(m);
    let steps = m.min(n);

    for k in 0..steps {
        let col_norm_sqr = |r: &CMatrix, j: usize| (k..m).map(|i| r[(i, j)].norm_sqr()).sum::<f64>();
        let (p, best) = (k..n)
            .map(|j| (j, col_norm_sqr(&r, j)))
            .fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        if p != k {
            for i in 0..m {
                r.data.swap(i * n + k, i * n + p);
            }
        }
        let norm = best.sqrt();
        if norm == 0.0 {
            break;
        }
        let x0 = r[(k, k)];
        let phase = if x0.norm() == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            x0 / x0.norm()
        };
        let alpha = -phase * norm;
        let mut v: Vec<C64> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let v_norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if v_norm == 0.0 {
            continue;
        }
        for z in &mut v {
            *z /= v_norm;
        }
        // R ← (I − 2vvᴴ) R on rows k.., columns k..
        for j in k..n {
            let s: C64 = v.iter().enumerate().map(|(t, vt)| vt.conj() * r[(k + t, j)]).sum();
            for (t, vt) in v.iter().enumerate() {
                r[(k + t, j)] -= 2.0 * vt * s;
            }
        }
        // Q ← Q (I − 2vvᴴ) on columns k..
        for i in 0..m {
            let s: C64 = v.iter().enumerate().map(|(t, vt)| q[(i, k + t)] * vt).sum();
            for (t, vt) in v.iter().enumerate() {
                q[(i, k + t)] -= 2.0 * s * vt.conj();
            }
        }
        for i in k + 1..m {
            r[(i, k)] = C64::new(0.0, 0.0);
        }
    }
    PivotedQr { q, r }
}

fn qr_rank(r: &CMatrix, tol: Tolerance) -> usize {
    let steps = r.rows.min(r.cols);
    let lead = r[(0, 0)].norm();
    if lead == 0.0 {
        return 0;
    }
    (0..steps)
        .take_while(|&k| r[(k, k)].norm() > tol.rel_eps * lead)
        .count()
}

/// Numerical rank: pivots of a column-pivoted QR exceeding `rel_eps` times the
/// largest. The factorization runs on whichever of `a`, `aᴴ` is tall, so
/// `rank(a) == rank(aᴴ)` holds exactly for non-square inputs.
pub fn rank(a: &CMatrix, tol: Tolerance) -> usize {
    let qr = if a.rows >= a.cols {
        pivoted_qr(a)
    } else {
        pivoted_qr(&a.adjoint())
    };
    qr_rank(&qr.r, tol)
}

/// Orthonormal basis (as columns) of the null space of `a`.
///
/// Computed from the trailing columns of the Q factor of `aᴴ`. Each column is
/// rotated so that its first non-negligible entry is real and positive.
pub fn null_space(a: &CMatrix, tol: Tolerance) -> Result<CMatrix, LinalgError> {
    let n = a.cols;
    let qr = pivoted_qr(&a.adjoint());
    let r = qr_rank(&qr.r, tol);
    if r >= n {
        return Err(LinalgError::EmptyNullSpace { rank: r });
    }
    let mut basis = CMatrix::from_fn(n, n - r, |i, j| qr.q[(i, r + j)]);
    for j in 0..basis.cols {
        let col = basis.col(j);
        let largest = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if let Some(first) = col.iter().find(|z| z.norm() > 1e-12 * largest.max(f64::MIN_POSITIVE)) {
            let rot = first.conj() / first.norm();
            for i in 0..n {
                basis[(i, j)] *= rot;
            }
            basis[(col.iter().position(|z| z == first).unwrap(), j)].im = 0.0;
        }
    }
    Ok(basis)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    CMatrix::from_fn(ra * rb, ca * cb, |i, j| a[(i / rb, j / cb)] * b[(i % rb, j % cb)])
}

/// Column-stacking vectorization.
pub fn vec(a: &CMatrix) -> CMatrix {
    let (m, n) = a.shape();
    CMatrix::from_fn(m * n, 1, |i, _| a[(i % m, i / m)])
}

/// Inverse of [`vec`].
pub fn unvec(v: &CMatrix, rows: usize, cols: usize) -> Result<CMatrix, LinalgError> {
    if v.cols != 1 || v.rows != rows * cols {
        return Err(LinalgError::DimensionMismatch(format!(
            "cannot reshape {}x{} into {rows}x{cols}",
            v.rows, v.cols
        )));
    }
    Ok(CMatrix::from_fn(rows, cols, |i, j| v[(j * rows + i, 0)]))
}

/// Lower-triangular Cholesky factor of a Hermitian positive definite matrix.
pub fn cholesky(a: &CMatrix) -> Result<CMatrix, LinalgError> {
    let n = a.rows;
    if a.cols != n {
        return Err(LinalgError::DimensionMismatch("cholesky needs a square matrix".into()));
    }
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite);
        }
        let djj = d.sqrt();
        l[(j, j)] = C64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `a x = b` for Hermitian positive definite `a` through its Cholesky
/// factor. Unlike [`solve`] there is no relative pivot threshold, so widely
/// scaled covariance matrices are accepted as long as they are definite.
pub fn cholesky_solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix, LinalgError> {
    let l = cholesky(a)?;
    let n = a.rows;
    if b.rows != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "right-hand side has {} rows, expected {n}",
            b.rows
        )));
    }
    let mut x = b.clone();
    for j in 0..b.cols {
        for i in 0..n {
            let mut acc = x[(i, j)];
            for k in 0..i {
                acc -= l[(i, k)] * x[(k, j)];
            }
            x[(i, j)] = acc / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut acc = x[(i, j)];
            for k in i + 1..n {
                acc -= l[(k, i)].conj() * x[(k, j)];
            }
            x[(i, j)] = acc / l[(i, i)];
        }
    }
    Ok(x)
}

/// `log₂ det(a)` for Hermitian positive definite `a`.
pub fn log2_det_hpd(a: &CMatrix) -> Result<f64, LinalgError> {
    let l = cholesky(a)?;
    Ok((0..a.rows).map(|i| 2.0 * l[(i, i)].re.log2()).sum())
}
