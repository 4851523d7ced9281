//! Dense small-matrix numerics.
//!
//! Everything here targets the handful-of-states regime of the controllers in
//! this crate (n ≤ 10), so the algorithms favour simplicity over asymptotic
//! cost: Gaussian elimination, cyclic Jacobi, and a Kronecker-vectorized
//! Lyapunov solve.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Pivot threshold for eliminations on row-equilibrated systems.
pub const PIVOT_TOL: f64 = 1e-12;
/// Relative symmetry tolerance accepted by the symmetric routines.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Threshold used by [`controllability_rank`].
pub const RANK_TOL: f64 = 1e-10;
/// Off-diagonal Frobenius norm at which the Jacobi sweep stops.
pub const JACOBI_TOL: f64 = 1e-12;

/// Dense real column vector.
#[derive(Clone, PartialEq, Default)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::dim("vector must have positive dimension"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(Vector(data))
    }

    /// Builds a vector without validating entries.
    pub(crate) fn from_vec(data: Vec<f64>) -> Self {
        Vector(data)
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, k: f64) -> Vector {
        Vector(self.0.iter().map(|v| v * k).collect())
    }

    pub fn concat(&self, other: &Vector) -> Vector {
        let mut data = self.0.clone();
        data.extend_from_slice(&other.0);
        Vector(data)
    }

    /// Outer product `self · otherᵀ`.
    pub fn outer(&self, other: &Vector) -> Matrix {
        let mut data = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.0 {
            data.extend(other.0.iter().map(|b| a * b));
        }
        Matrix::from_raw(self.dim(), other.dim(), data)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for &Vector {
    type Output = Vector;
    fn add(self, rhs: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), rhs.dim());
        Vector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &Vector {
    type Output = Vector;
    fn sub(self, rhs: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), rhs.dim());
        Vector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self.scale(-1.0)
    }
}

/// Dense real matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dim("matrix must have positive dimensions"));
        }
        if rows * cols != data.len() {
            return Err(Error::dim(format!("{rows}x{cols} matrix needs {} entries, got {}", rows * cols, data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::dim("ragged rows"));
        }
        Matrix::new(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        Matrix::diag(&vec![1.0; n])
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Matrix::zeros(n, n);
        for (i, v) in entries.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn column(v: &Vector) -> Self {
        Matrix::from_raw(v.dim(), 1, v.as_slice().to_vec())
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vector {
        Vector((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = rhs.row(k);
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &Vector) -> Vector {
        assert_eq!(self.cols, v.dim(), "matvec dimension mismatch");
        Vector((0..self.rows).map(|i| self.row(i).iter().zip(v.iter()).map(|(a, b)| a * b).sum()).collect())
    }

    /// `selfᵀ · v` without forming the transpose.
    pub fn tr_matvec(&self, v: &Vector) -> Vector {
        assert_eq!(self.rows, v.dim(), "tr_matvec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        Vector(out)
    }

    pub fn scale(&self, k: f64) -> Matrix {
        Matrix::from_raw(self.rows, self.cols, self.data.iter().map(|v| v * k).collect())
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    /// Induced 2-norm, via the largest eigenvalue of `AᵀA`.
    pub fn norm2(&self) -> f64 {
        let gram = self.transpose().matmul(self);
        sym_eig_extremes(&gram).map_or(f64::NAN, |(_, hi)| hi.max(0.0).sqrt())
    }

    /// Horizontal concatenation `[self, rhs]`.
    pub fn hcat(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.rows, rhs.rows, "hcat row mismatch");
        let cols = self.cols + rhs.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(rhs.row(i));
        }
        Matrix::from_raw(self.rows, cols, data)
    }

    /// Vertical concatenation `[self; rhs]`.
    pub fn vcat(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.cols, "vcat column mismatch");
        let mut data = self.data.clone();
        data.extend_from_slice(&rhs.data);
        Matrix::from_raw(self.rows + rhs.rows, self.cols, data)
    }

    pub fn symmetrize(&self) -> Matrix {
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = avg;
                s[(j, i)] = avg;
            }
        }
        s
    }

    /// Largest `|S_ij − S_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn require_square(&self, what: &str) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(Error::dim(format!("{what} must be square, got {}x{}", self.rows, self.cols)))
        }
    }

    fn require_symmetric(&self) -> Result<()> {
        let asym = self.asymmetry();
        if asym > SYMMETRY_TOL * self.max_abs().max(1.0) {
            Err(Error::NotSymmetric(asym))
        } else {
            Ok(())
        }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.rows).map(|i| self.row(i)).collect();
        f.debug_list().entries(rows).finish()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        Matrix::from_raw(self.rows, self.cols, self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.shape(), rhs.shape(), "sub shape mismatch");
        Matrix::from_raw(self.rows, self.cols, self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect())
    }
}

impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        self.matmul(rhs)
    }
}

impl Mul<&Vector> for &Matrix {
    type Output = Vector;
    fn mul(self, rhs: &Vector) -> Vector {
        self.matvec(rhs)
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting on the
/// row-equilibrated system.
pub fn solve_linear(a: &Matrix, b: &Vector) -> Result<Vector> {
    let n = a.require_square("A")?;
    if b.dim() != n {
        return Err(Error::dim(format!("rhs has dim {}, expected {n}", b.dim())));
    }
    let mut m = a.clone();
    let mut rhs = b.as_slice().to_vec();

    for i in 0..n {
        let scale = m.row(i).iter().fold(0.0f64, |s, v| s.max(v.abs()));
        if scale < f64::MIN_POSITIVE {
            return Err(Error::SingularMatrix { pivot: 0.0 });
        }
        for v in &mut m.data[i * n..(i + 1) * n] {
            *v /= scale;
        }
        rhs[i] /= scale;
    }

    for k in 0..n {
        let (p, pivot) =
            (k..n).map(|i| (i, m[(i, k)].abs())).fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot < PIVOT_TOL {
            return Err(Error::SingularMatrix { pivot });
        }
        if p != k {
            for j in 0..n {
                m.data.swap(k * n + j, p * n + j);
            }
            rhs.swap(k, p);
        }
        for i in (k + 1)..n {
            let f = m[(i, k)] / m[(k, k)];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                m[(i, j)] -= f * m[(k, j)];
            }
            rhs[i] -= f * rhs[k];
        }
    }

    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let tail: f64 = ((i + 1)..n).map(|j| m[(i, j)] * x[j]).sum();
        x[i] = (rhs[i] - tail) / m[(i, i)];
    }
    Ok(Vector(x))
}

/// Cholesky factor `L` with `L Lᵀ = S`, or `None` when `S` is not positive
/// definite.
pub fn cholesky_pd(s: &Matrix) -> Result<Option<Matrix>> {
    let n = s.require_square("S")?;
    s.require_symmetric()?;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let d = s[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if d.is_nan() || d <= 0.0 {
            return Ok(None);
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let off = s[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = off / ljj;
        }
    }
    Ok(Some(l))
}

pub fn is_positive_definite(s: &Matrix) -> bool {
    matches!(cholesky_pd(s), Ok(Some(_)))
}

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi
/// rotations.
pub fn sym_eigenvalues(s: &Matrix) -> Result<Vec<f64>> {
    let n = s.require_square("S")?;
    s.require_symmetric()?;
    let mut a = s.symmetrize();
    let off = |a: &Matrix| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += a[(i, j)] * a[(i, j)];
                }
            }
        }
        acc.sqrt()
    };

    for _sweep in 0..100 {
        if off(&a) <= JACOBI_TOL {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
            }
        }
    }
    let mut eig = a.diagonal();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eig_extremes(s: &Matrix) -> Result<(f64, f64)> {
    let eig = sym_eigenvalues(s)?;
    Ok((eig[0], eig[eig.len() - 1]))
}

/// Kronecker-vectorized solve of `Aᵀ P + P A = −R` without the Hurwitz
/// precondition; shared by [`solve_lyapunov`] and [`is_hurwitz`].
fn lyapunov_vectorized(a: &Matrix, r: &Matrix) -> Result<Matrix> {
    let n = a.require_square("A")?;
    if r.shape() != (n, n) {
        return Err(Error::dim("R must match A"));
    }
    let nn = n * n;
    let mut k = Matrix::zeros(nn, nn);
    // Row (i,j) of the operator: Σ_k A_ki P_kj + Σ_k P_ik A_kj.
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for m in 0..n {
                k[(row, m * n + j)] += a[(m, i)];
                k[(row, i * n + m)] += a[(m, j)];
            }
        }
    }
    let rhs = Vector(r.as_slice().iter().map(|v| -v).collect());
    let p = solve_linear(&k, &rhs)?;
    Ok(Matrix::from_raw(n, n, p.into_vec()).symmetrize())
}

/// Unique symmetric positive-definite `P` with `A_nᵀ P + P A_n + R = 0`.
pub fn solve_lyapunov(a_n: &Matrix, r: &Matrix) -> Result<Matrix> {
    a_n.require_square("A_n")?;
    r.require_square("R")?;
    if !is_hurwitz(a_n) {
        return Err(Error::NotHurwitz);
    }
    if !is_positive_definite(r) {
        return Err(Error::invalid("R must be symmetric positive definite"));
    }
    lyapunov_vectorized(a_n, r)
}

/// `A` is Hurwitz iff `Aᵀ P + P A = −I` has a positive-definite solution.
pub fn is_hurwitz(a: &Matrix) -> bool {
    let Ok(n) = a.require_square("A") else {
        return false;
    };
    match lyapunov_vectorized(a, &Matrix::identity(n)) {
        Ok(p) => p.is_finite() && is_positive_definite(&p),
        Err(_) => false,
    }
}

/// `B_i = (BᵀB)⁻¹ Bᵀ`.
pub fn left_pseudoinverse(b: &Matrix) -> Result<Matrix> {
    let bt = b.transpose();
    let gram = bt.matmul(b);
    if !is_positive_definite(&gram) {
        return Err(Error::RankDeficient);
    }
    let m = gram.rows();
    let mut cols = Vec::with_capacity(b.rows());
    for i in 0..b.rows() {
        cols.push(solve_linear(&gram, &bt.col(i))?);
    }
    let mut out = Matrix::zeros(m, b.rows());
    for (j, c) in cols.iter().enumerate() {
        for i in 0..m {
            out[(i, j)] = c[i];
        }
    }
    Ok(out)
}

/// Numerical rank by Gaussian elimination with full pivoting.
pub fn rank(m: &Matrix) -> usize {
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let tol = RANK_TOL * a.max_abs().max(1.0);
    let mut rank = 0;
    for _ in 0..rows.min(cols) {
        let mut best = (0, 0, 0.0f64);
        for i in rank..rows {
            for j in rank..cols {
                if a[(i, j)].abs() > best.2 {
                    best = (i, j, a[(i, j)].abs());
                }
            }
        }
        if best.2 <= tol {
            break;
        }
        let (pi, pj, _) = best;
        for j in 0..cols {
            a.data.swap(rank * cols + j, pi * cols + j);
        }
        for i in 0..rows {
            a.data.swap(i * cols + rank, i * cols + pj);
        }
        for i in (rank + 1)..rows {
            let f = a[(i, rank)] / a[(rank, rank)];
            for j in rank..cols {
                a[(i, j)] -= f * a[(rank, j)];
            }
        }
        rank += 1;
    }
    rank
}

/// Rank of `[B, AB, …, Aⁿ⁻¹B]`.
pub fn controllability_rank(a: &Matrix, b: &Matrix) -> Result<usize> {
    let n = a.require_square("A")?;
    if b.rows() != n {
        return Err(Error::dim("B must have as many rows as A"));
    }
    let mut block = b.clone();
    let mut ctrb = b.clone();
    for _ in 1..n {
        block = a.matmul(&block);
        ctrb = ctrb.hcat(&block);
    }
    Ok(rank(&ctrb))
}
