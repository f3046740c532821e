//! Dense matrices, symmetric eigendecomposition and the small set of solvers
//! the estimators need.
//!
//! Everything is row-major `f64`. Dimensions in this crate are small (tens of
//! inputs), so the algorithms favour robustness over asymptotic speed: the
//! symmetric eigensolver is a cyclic Jacobi iteration.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative tolerance used when checking that a matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
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

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major entries; rejects a size mismatch or non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::invalid(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite matrix entry {bad}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::from_vec(n, m, rows.iter().flatten().copied().collect())
    }

    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        Ok(Self::from_rows(cols)?.transpose())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect()
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

    /// Keeps the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            for (k, &j) in cols.iter().enumerate() {
                out[(i, k)] = self[(i, j)];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ · v` without forming the transpose.
    pub fn tmatvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "tmatvec shape mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.add(&other.scale(-1.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.rows))?;
        for i in 0..self.rows {
            seq.serialize_element(self.row(i))?;
        }
        seq.end()
    }
}

/// A square matrix whose symmetry has been checked (or enforced).
#[derive(Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SymmetricMatrix(Matrix);

impl SymmetricMatrix {
    /// Checks symmetry to `SYMMETRY_TOL` relative and finiteness.
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid(format!(
                "{}x{} matrix is not square",
                m.rows, m.cols
            )));
        }
        if !m.is_finite() {
            return Err(Error::invalid("non-finite entry in symmetric matrix"));
        }
        for i in 0..m.rows {
            for j in (i + 1)..m.cols {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if (a - b).abs() > SYMMETRY_TOL * a.abs().max(1.0) {
                    return Err(Error::invalid(format!(
                        "matrix not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self(m))
    }

    /// Stores `(M + Mᵀ)/2`.
    pub fn symmetrize(m: &Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid("cannot symmetrize a non-square matrix"));
        }
        if !m.is_finite() {
            return Err(Error::invalid("non-finite entry in matrix"));
        }
        let n = m.rows;
        let mut s = Matrix::zeros(n, n);
        for i in 0..n {
            s[(i, i)] = m[(i, i)];
            for j in (i + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        Ok(Self(s))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(Matrix::zeros(n, n))
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        Self(Matrix::from_diag(diag))
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.0.diagonal()
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        self.0.matvec(v)
    }
}

impl Index<(usize, usize)> for SymmetricMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

impl fmt::Debug for SymmetricMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors stored as columns.
#[derive(Clone, Debug, Serialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        self.eigenvectors.column(k)
    }

    /// `V · diag(λ) · Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.dim();
        let mut out = Matrix::zeros(n, n);
        for k in 0..n {
            let lam = self.eigenvalues[k];
            for i in 0..n {
                let vik = self.eigenvectors[(i, k)] * lam;
                for j in 0..n {
                    out[(i, j)] += vik * self.eigenvectors[(j, k)];
                }
            }
        }
        out
    }
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Eigenvalues come back in descending order. Each eigenvector is oriented so that
/// its first non-negligible component is positive; among equal eigenvalues the
/// order left by the sweep is kept.
pub fn sym_eig(s: &SymmetricMatrix) -> Result<Spectrum> {
    let n = s.dim();
    if !s.matrix().is_finite() {
        return Err(Error::invalid("non-finite entry in eigenproblem"));
    }
    let mut a = s.matrix().clone();
    let mut v = Matrix::identity(n);

    let norm: f64 = a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        let target = f64::EPSILON * norm * 1e-2;
        let mut converged = false;
        for _ in 0..JACOBI_MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
                .map(|(p, q)| a[(p, q)] * a[(p, q)])
                .sum::<f64>()
                .sqrt();
            if off <= target {
                converged = true;
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    rotate(&mut a, &mut v, p, q);
                }
            }
        }
        if !converged {
            let off: f64 = (0..n)
                .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
                .map(|(p, q)| a[(p, q)].abs())
                .fold(0.0, f64::max);
            if off > 1e-10 * norm {
                return Err(Error::numeric(format!(
                    "Jacobi iteration did not converge (off-diagonal {off:e})"
                )));
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[(j, j)]
            .partial_cmp(&a[(i, i)])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = v.select_columns(&order);
    for k in 0..n {
        let lead = (0..n)
            .map(|i| eigenvectors[(i, k)])
            .find(|x| x.abs() > 1e-12);
        if matches!(lead, Some(x) if x < 0.0) {
            for i in 0..n {
                eigenvectors[(i, k)] = -eigenvectors[(i, k)];
            }
        }
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

// One Jacobi rotation annihilating a[p][q]; accumulates the rotation into v.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
        sign / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Moore–Penrose inverse of a symmetric matrix through its spectrum.
///
/// Eigenvalues with `|λ| <= tol · max|λ|` are treated as zero. The zero matrix maps to itself.
pub fn pseudo_inverse(s: &SymmetricMatrix, tol: f64) -> Result<SymmetricMatrix> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!(
            "pseudo-inverse tolerance must be positive, got {tol}"
        )));
    }
    let spec = sym_eig(s)?;
    let max = spec.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
    let n = s.dim();
    if max == 0.0 {
        return Ok(SymmetricMatrix::zeros(n));
    }
    let inv = Spectrum {
        eigenvalues: spec
            .eigenvalues
            .iter()
            .map(|&l| if l.abs() <= tol * max { 0.0 } else { 1.0 / l })
            .collect(),
        eigenvectors: spec.eigenvectors,
    };
    SymmetricMatrix::symmetrize(&inv.reconstruct())
}

pub fn trace(s: &SymmetricMatrix) -> f64 {
    s.diagonal().iter().sum()
}

/// Lower Cholesky factor `L` with `L·Lᵀ = S`. Fails unless `S` is positive definite.
pub fn cholesky(s: &SymmetricMatrix) -> Result<Matrix> {
    let n = s.dim();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::numeric(format!(
                "matrix is not positive definite (pivot {j} = {d:e})"
            )));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut x = s[(i, j)];
            for k in 0..j {
                x -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = x / djj;
        }
    }
    Ok(l)
}

/// Solves `L·x = b` for lower-triangular `L`.
pub fn solve_lower(l: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = l.rows();
    if b.len() != n || !l.is_square() {
        return Err(Error::invalid("triangular solve shape mismatch"));
    }
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut r = b[i];
        for k in 0..i {
            r -= l[(i, k)] * x[k];
        }
        let d = l[(i, i)];
        if d == 0.0 || !d.is_finite() {
            return Err(Error::numeric(format!(
                "singular triangular factor at row {i}"
            )));
        }
        x[i] = r / d;
    }
    Ok(x)
}

/// Solves a general square system by Gaussian elimination with partial pivoting.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if !a.is_square() || b.len() != n {
        return Err(Error::invalid("linear solve shape mismatch"));
    }
    let scale = a.max_abs();
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().partial_cmp(&m[(j, col)].abs()).unwrap())
            .unwrap();
        if m[(piv, col)].abs() <= 1e-14 * scale || scale == 0.0 {
            return Err(Error::numeric("singular linear system"));
        }
        if piv != col {
            for k in 0..n {
                let tmp = m[(col, k)];
                m[(col, k)] = m[(piv, k)];
                m[(piv, k)] = tmp;
            }
            rhs.swap(col, piv);
        }
        for i in (col + 1)..n {
            let f = m[(i, col)] / m[(col, col)];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[(i, k)] -= f * m[(col, k)];
            }
            rhs[i] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut r = rhs[i];
        for k in (i + 1)..n {
            r -= m[(i, k)] * x[k];
        }
        x[i] = r / m[(i, i)];
    }
    Ok(x)
}

/// Symmetric square root factor `F` with `F·Fᵀ = S` for positive semidefinite `S`.
/// Negative eigenvalues from roundoff are clipped to zero.
pub fn psd_factor(s: &SymmetricMatrix) -> Result<Matrix> {
    let spec = sym_eig(s)?;
    let n = s.dim();
    let mut f = spec.eigenvectors.clone();
    for k in 0..n {
        let r = spec.eigenvalues[k].max(0.0).sqrt();
        for i in 0..n {
            f[(i, k)] *= r;
        }
    }
    Ok(f)
}

/// Orthonormalizes the columns of a square matrix (modified Gram–Schmidt, two passes).
pub fn orthonormalize_columns(m: &Matrix) -> Result<Matrix> {
    let n = m.cols();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    for j in 0..n {
        for _pass in 0..2 {
            for k in 0..j {
                let proj = dot(&cols[j], &cols[k]);
                let (head, tail) = cols.split_at_mut(j);
                for (x, y) in tail[0].iter_mut().zip(&head[k]) {
                    *x -= proj * y;
                }
            }
        }
        let nrm = norm2(&cols[j]);
        if nrm < 1e-12 {
            return Err(Error::numeric("columns are linearly dependent"));
        }
        cols[j].iter_mut().for_each(|x| *x /= nrm);
    }
    Matrix::from_columns(&cols)
}

/// `‖MᵀM − I‖_max`, the orthogonality defect of the columns.
pub fn orthogonality_defect(m: &Matrix) -> f64 {
    m.transpose()
        .matmul(m)
        .max_abs_diff(&Matrix::identity(m.cols()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sym(rows: &[&[f64]]) -> SymmetricMatrix {
        SymmetricMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    // Closed-form eigenpairs of [[a, b], [b, c]].
    fn eig2(a: f64, b: f64, c: f64) -> ((f64, f64), [f64; 2]) {
        let mean = 0.5 * (a + c);
        let rad = (0.25 * (a - c).powi(2) + b * b).sqrt();
        let (l1, l2) = (mean + rad, mean - rad);
        let v = if b != 0.0 {
            [b, l1 - a]
        } else if a >= c {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        };
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        let mut v = [v[0] / n, v[1] / n];
        if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
            v = [-v[0], -v[1]];
        }
        ((l1, l2), v)
    }

    #[test]
    fn identity_spectrum() {
        let s = sym_eig(&SymmetricMatrix::identity(3)).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 1.0, 1.0]);
        assert!(orthogonality_defect(&s.eigenvectors) < 1e-15);
    }

    #[test]
    fn rank_one_ones() {
        let s = sym_eig(&sym(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap();
        assert!((s.eigenvalues[0] - 2.0).abs() < 1e-14);
        assert!(s.eigenvalues[1].abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v = s.eigenvector(0);
        assert!((v[0] - h).abs() < 1e-14 && (v[1] - h).abs() < 1e-14);
    }

    #[test]
    fn two_by_two_against_quadratic_formula() {
        let (a, b, c) = (1.0, 0.25, 0.25);
        let ((l1, l2), v1) = eig2(a, b, c);
        let s = sym_eig(&sym(&[&[a, b], &[b, c]])).unwrap();
        assert!((s.eigenvalues[0] - l1).abs() < 1e-14);
        assert!((s.eigenvalues[1] - l2).abs() < 1e-14);
        let v = s.eigenvector(0);
        assert!((v[0] - v1[0]).abs() < 1e-12 && (v[1] - v1[1]).abs() < 1e-12);
    }

    #[test]
    fn non_finite_rejected() {
        let m = Matrix {
            rows: 2,
            cols: 2,
            data: vec![1.0, f64::NAN, f64::NAN, 1.0],
        };
        assert!(matches!(
            SymmetricMatrix::new(m.clone()),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            Matrix::from_vec(2, 2, m.data),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn asymmetric_rejected() {
        assert!(SymmetricMatrix::from_rows(&[vec![1.0, 2.0], vec![2.1, 1.0]]).is_err());
    }

    #[test]
    fn pinv_cases() {
        let id = SymmetricMatrix::identity(4);
        assert!(
            pseudo_inverse(&id, 1e-12)
                .unwrap()
                .matrix()
                .max_abs_diff(id.matrix())
                < 1e-15
        );

        let d = SymmetricMatrix::from_diag(&[2.0, 0.0]);
        let p = pseudo_inverse(&d, 1e-12).unwrap();
        assert!(p.matrix().max_abs_diff(&Matrix::from_diag(&[0.5, 0.0])) < 1e-15);

        let z = SymmetricMatrix::zeros(3);
        assert_eq!(pseudo_inverse(&z, 1e-12).unwrap(), z);
        assert!(pseudo_inverse(&id, 0.0).is_err());
    }

    #[test]
    fn pinv_matches_adjugate() {
        let (a, b, c) = (1.25, 1.0, 1.25);
        let det = a * c - b * b;
        let expected =
            Matrix::from_rows(&[vec![c / det, -b / det], vec![-b / det, a / det]]).unwrap();
        let p = pseudo_inverse(&sym(&[&[a, b], &[b, c]]), 1e-12).unwrap();
        assert!(p.matrix().max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn trace_cases() {
        assert_eq!(trace(&SymmetricMatrix::identity(5)), 5.0);
        assert_eq!(trace(&SymmetricMatrix::zeros(4)), 0.0);
        let lams = [150.0, 5.0, 0.5, 0.4, 0.1, 0.8, 0.01, 0.0009, 0.005, 0.008];
        let c: Vec<f64> = lams.iter().map(|l| l * l / 3.0).collect();
        let direct = lams.iter().map(|l| l * l).sum::<f64>() / 3.0;
        assert!((trace(&SymmetricMatrix::from_diag(&c)) - direct).abs() < 1e-10);
    }

    #[test]
    fn degenerate_spectrum_projectors() {
        // diag(3,3,1) rotated: the top-2 eigenspace projector is basis independent.
        let q = orthonormalize_columns(
            &Matrix::from_rows(&[
                vec![1.0, 2.0, 0.5],
                vec![0.3, -1.0, 2.0],
                vec![1.5, 0.2, -0.7],
            ])
            .unwrap(),
        )
        .unwrap();
        let s = SymmetricMatrix::symmetrize(
            &q.matmul(&Matrix::from_diag(&[3.0, 3.0, 1.0]))
                .matmul(&q.transpose()),
        )
        .unwrap();
        let spec = sym_eig(&s).unwrap();
        let w = spec.eigenvectors.select_columns(&[0, 1]);
        let proj = w.matmul(&w.transpose());
        let qa = q.select_columns(&[0, 1]);
        assert!(proj.max_abs_diff(&qa.matmul(&qa.transpose())) < 1e-12);
    }

    #[test]
    fn cholesky_and_solvers() {
        let s = sym(&[&[4.0, 1.0], &[1.0, 3.0]]);
        let l = cholesky(&s).unwrap();
        assert!(l.matmul(&l.transpose()).max_abs_diff(s.matrix()) < 1e-14);
        let x = solve_lower(&l, &[2.0, 1.0]).unwrap();
        assert!(l
            .matvec(&x)
            .iter()
            .zip([2.0, 1.0])
            .all(|(a, b)| (a - b).abs() < 1e-14));
        assert!(cholesky(&sym(&[&[1.0, 2.0], &[2.0, 1.0]])).is_err());

        let a = Matrix::from_rows(&[vec![0.0, 2.0], vec![1.0, 1.0]]).unwrap();
        let x = solve(&a, &[4.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        assert!(solve(
            &Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap(),
            &[1.0, 1.0]
        )
        .is_err());
    }

    fn random_symmetric() -> impl Strategy<Value = SymmetricMatrix> {
        (1usize..=20).prop_flat_map(|n| {
            prop::collection::vec(-10.0..10.0_f64, n * n).prop_map(move |v| {
                SymmetricMatrix::symmetrize(&Matrix::from_vec(n, n, v).unwrap()).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn eig_invariants(s in random_symmetric()) {
            let spec = sym_eig(&s).unwrap();
            let n = s.dim();
            for w in spec.eigenvalues.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
            prop_assert!(orthogonality_defect(&spec.eigenvectors) <= 1e-10);
            for k in 0..n {
                let v = spec.eigenvector(k);
                let sv = s.matvec(&v);
                let lam = spec.eigenvalues[k];
                let res: f64 = sv.iter().zip(&v).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
                prop_assert!(res <= 1e-8 * lam.abs().max(1.0));
            }
            let recon = spec.reconstruct();
            prop_assert!(recon.max_abs_diff(s.matrix()) <= 1e-8 * s.matrix().max_abs().max(f64::MIN_POSITIVE));
            let tr = trace(&s);
            let sum: f64 = spec.eigenvalues.iter().sum();
            prop_assert!((tr - sum).abs() <= 1e-8 * tr.abs().max(1.0));
        }

        #[test]
        fn pinv_is_involutive_on_nonsingular(s in random_symmetric()) {
            let spec = sym_eig(&s).unwrap();
            let min = spec.eigenvalues.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
            let max = spec.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
            prop_assume!(min > 1e-3 * max);
            let back = pseudo_inverse(&pseudo_inverse(&s, 1e-12).unwrap(), 1e-12).unwrap();
            prop_assert!(back.matrix().max_abs_diff(s.matrix()) <= 1e-8 * max.max(1.0));
        }
    }
}
