//! Dense real matrices and vectors with the special operators the rest of
//! the crate is written in: the diagonal part Diag(A), the off-diagonal
//! part Ā = A − Diag(A), the rescaling A_p = pA + (1−p)Diag(A), Hadamard
//! products, a cyclic-Jacobi symmetric eigensolver, an SPD solver, and a
//! truncated Neumann series for inverting operators on matrices.
//!
//! Matrices are immutable values; every operation returns a fresh matrix,
//! so sharing across threads needs no synchronization. Entries are checked
//! finite at every public constructor.

use crate::error::{Error, Result};

/// Maximum Jacobi sweeps before the eigensolver reports failure.
const JACOBI_MAX_SWEEPS: usize = 64;

/// Off-diagonal mass threshold, relative to the Frobenius norm, at which
/// the Jacobi iteration stops.
const JACOBI_OFF_TOL: f64 = 1e-15;

/// Dense column vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    /// Vector from raw entries; rejects NaN and infinities.
    pub fn new(data: Vec<f64>) -> Result<Vector> {
        for (i, &x) in data.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    context: "vector entry",
                    index: i,
                    value: x,
                });
            }
        }
        Ok(Vector { data })
    }

    pub fn zeros(len: usize) -> Vector {
        Vector {
            data: vec![0.0; len],
        }
    }

    pub fn ones(len: usize) -> Vector {
        Vector {
            data: vec![1.0; len],
        }
    }

    /// Standard basis vector e_i.
    pub fn basis(len: usize, i: usize) -> Vector {
        let mut data = vec![0.0; len];
        data[i] = 1.0;
        Vector { data }
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> f64) -> Vector {
        Vector {
            data: (0..len).map(f).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(
            self.len(),
            other.len(),
            "dot product needs equal lengths ({} vs {})",
            self.len(),
            other.len()
        );
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Euclidean norm.
    pub fn norm2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector {
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// Outer product u vᵀ.
    pub fn outer(&self, other: &Vector) -> Matrix {
        let mut m = Matrix::zeros(self.len(), other.len());
        for i in 0..self.len() {
            for j in 0..other.len() {
                m.data[i * other.len() + j] = self.data[i] * other.data[j];
            }
        }
        m
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::Add for &Vector {
    type Output = Vector;
    fn add(self, rhs: &Vector) -> Vector {
        assert_eq!(self.len(), rhs.len(), "vector addition needs equal lengths");
        Vector {
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl std::ops::Sub for &Vector {
    type Output = Vector;
    fn sub(self, rhs: &Vector) -> Vector {
        assert_eq!(
            self.len(),
            rhs.len(),
            "vector subtraction needs equal lengths"
        );
        Vector {
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Matrix from row-major entries; rejects NaN/Inf and length mismatch.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "Matrix::new",
                expected: format!("{} entries for {rows}x{cols}", rows * cols),
                got: format!("{} entries", data.len()),
            });
        }
        for (i, &x) in data.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    context: "matrix entry",
                    index: i,
                    value: x,
                });
            }
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Matrix from nested rows; all rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    op: "Matrix::from_rows",
                    expected: format!("{c} entries per row"),
                    got: format!("{} entries in row {i}", row.len()),
                });
            }
        }
        Matrix::new(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(d: usize) -> Matrix {
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            m.data[i * d + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Matrix {
        let d = diag.len();
        let mut m = Matrix::zeros(d, d);
        for (i, &value) in diag.iter().enumerate() {
            m.data[i * d + i] = value;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Matrix {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
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

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> Vector {
        Vector {
            data: self.data[i * self.cols..(i + 1) * self.cols].to_vec(),
        }
    }

    pub fn col(&self, j: usize) -> Vector {
        Vector {
            data: (0..self.rows).map(|i| self.get(i, j)).collect(),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| self.data[i * self.cols..(i + 1) * self.cols].to_vec())
            .collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        assert!(self.is_square(), "trace needs a square matrix");
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Exactly symmetric average (A + Aᵀ)/2; entries mirrored, not
    /// recomputed, so the result is bitwise symmetric.
    pub fn symmetrize(&self) -> Matrix {
        assert!(self.is_square(), "symmetrize needs a square matrix");
        let d = self.rows;
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            m.data[i * d + i] = self.get(i, i);
            for j in (i + 1)..d {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                m.data[i * d + j] = v;
                m.data[j * d + i] = v;
            }
        }
        m
    }

    /// Gram matrix AᵀA, computed once per (i, j) pair and mirrored so the
    /// result is bitwise symmetric.
    pub fn gram(&self) -> Matrix {
        let d = self.cols;
        let mut g = Matrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let mut s = 0.0;
                for k in 0..self.rows {
                    s += self.get(k, i) * self.get(k, j);
                }
                g.data[i * d + j] = s;
                g.data[j * d + i] = s;
            }
        }
        g
    }

    fn require_square(&self, op: &'static str) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                op,
                expected: "square matrix".into(),
                got: format!("{}x{}", self.rows, self.cols),
            })
        }
    }

    /// Diag(A): the main diagonal of A with zeros elsewhere.
    pub fn diag_part(&self) -> Result<Matrix> {
        self.require_square("diag_part")?;
        let d = self.rows;
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            m.data[i * d + i] = self.get(i, i);
        }
        Ok(m)
    }

    /// Ā = A − Diag(A): off-diagonal entries copied verbatim, diagonal set
    /// to exact zero, so Diag(A) + Ā reproduces A bitwise.
    pub fn overline(&self) -> Result<Matrix> {
        self.require_square("overline")?;
        let d = self.rows;
        let mut m = self.clone();
        for i in 0..d {
            m.data[i * d + i] = 0.0;
        }
        Ok(m)
    }

    /// A_p = pA + (1−p)Diag(A): off-diagonal entries scaled by p, diagonal
    /// kept verbatim.
    pub fn p_rescale(&self, p: f64) -> Result<Matrix> {
        self.require_square("p_rescale")?;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidProbability { value: p });
        }
        let d = self.rows;
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m.data[i * d + j] = if i == j {
                    self.get(i, i)
                } else {
                    p * self.get(i, j)
                };
            }
        }
        Ok(m)
    }

    /// Entrywise (Hadamard) product A ⊙ B.
    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                op: "hadamard",
                expected: format!("{}x{}", self.rows, self.cols),
                got: format!("{}x{}", other.rows, other.cols),
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    /// Largest singular value, computed as √λ_max(AᵀA) via the Jacobi
    /// eigensolver. Returns 0 for the zero matrix.
    pub fn spectral_norm(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let scaled = self.scale(1.0 / scale);
        let gram = scaled.gram();
        let eig = gram
            .sym_eig()
            .expect("AᵀA is symmetric by construction and Jacobi converges on it");
        let lam_max = eig.eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
        lam_max.sqrt() * scale
    }

    /// Full spectral decomposition of a symmetric matrix by cyclic Jacobi
    /// rotations. Eigenvalues come back ascending with matching
    /// orthonormal eigenvector columns.
    pub fn sym_eig(&self) -> Result<SymEig> {
        self.require_square("sym_eig")?;
        let d = self.rows;
        let scale = self.max_abs();
        for i in 0..d {
            for j in (i + 1)..d {
                let gap = (self.get(i, j) - self.get(j, i)).abs();
                if gap > 1e-12 * scale.max(1.0) {
                    return Err(Error::NotSymmetric { row: i, col: j, gap });
                }
            }
        }
        if d == 0 {
            return Ok(SymEig {
                eigenvalues: vec![],
                eigenvectors: Matrix::zeros(0, 0),
            });
        }

        let mut a = self.symmetrize();
        let mut v = Matrix::identity(d);
        let frob = a.frobenius().max(f64::MIN_POSITIVE);
        let mut off = off_diagonal_norm(&a);
        let mut sweeps = 0;
        while off > JACOBI_OFF_TOL * frob {
            if sweeps >= JACOBI_MAX_SWEEPS {
                return Err(Error::NoConvergence {
                    what: "Jacobi eigensolver",
                    limit: JACOBI_MAX_SWEEPS,
                    residual: off / frob,
                });
            }
            for p in 0..d - 1 {
                for q in (p + 1)..d {
                    jacobi_rotate(&mut a, &mut v, p, q);
                }
            }
            off = off_diagonal_norm(&a);
            sweeps += 1;
        }

        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| {
            a.get(i, i)
                .partial_cmp(&a.get(j, j))
                .expect("eigenvalues are finite")
        });
        let eigenvalues: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
        let eigenvectors = Matrix::from_fn(d, d, |i, j| v.get(i, order[j]));
        Ok(SymEig {
            eigenvalues,
            eigenvectors,
        })
    }

    /// Solves A x = b for symmetric positive definite A by Cholesky
    /// factorization.
    pub fn solve_spd(&self, b: &Vector) -> Result<Vector> {
        if b.len() != self.rows {
            return Err(Error::DimensionMismatch {
                op: "solve_spd",
                expected: format!("right-hand side of length {}", self.rows),
                got: format!("length {}", b.len()),
            });
        }
        let chol = self.cholesky()?;
        Ok(chol_solve_vec(&chol, b))
    }

    /// Solves A X = B columnwise for symmetric positive definite A.
    pub fn solve_spd_matrix(&self, b: &Matrix) -> Result<Matrix> {
        if b.rows() != self.rows {
            return Err(Error::DimensionMismatch {
                op: "solve_spd_matrix",
                expected: format!("right-hand side with {} rows", self.rows),
                got: format!("{} rows", b.rows()),
            });
        }
        let chol = self.cholesky()?;
        let d = self.rows;
        let mut out = Matrix::zeros(d, b.cols());
        for j in 0..b.cols() {
            let x = chol_solve_vec(&chol, &b.col(j));
            for i in 0..d {
                out.data[i * b.cols() + j] = x[i];
            }
        }
        Ok(out)
    }

    /// Inverse of a symmetric positive definite matrix.
    pub fn spd_inverse(&self) -> Result<Matrix> {
        let inv = self.solve_spd_matrix(&Matrix::identity(self.rows))?;
        // the exact inverse is symmetric; mirror away factorization roundoff
        Ok(inv.symmetrize())
    }

    /// Lower-triangular Cholesky factor.
    fn cholesky(&self) -> Result<Matrix> {
        self.require_square("cholesky")?;
        let d = self.rows;
        let scale = self.max_abs();
        for i in 0..d {
            for j in (i + 1)..d {
                let gap = (self.get(i, j) - self.get(j, i)).abs();
                if gap > 1e-12 * scale.max(1.0) {
                    return Err(Error::NotSymmetric { row: i, col: j, gap });
                }
            }
        }
        let mut l = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..=i {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { index: i, pivot: s });
                    }
                    l.data[i * d + j] = s.sqrt();
                } else {
                    l.data[i * d + j] = s / l.get(j, j);
                }
            }
        }
        Ok(l)
    }

    /// Matrix text format used by the CLI: one row per line, entries
    /// comma-separated, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.get(i, j).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses the CSV format written by [`Matrix::to_csv`].
    pub fn from_csv(text: &str) -> Result<Matrix> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for field in line.split(',') {
                let value: f64 = field.trim().parse().map_err(|_| Error::InvalidConfig {
                    path: format!("csv line {}", lineno + 1),
                    message: format!("cannot parse '{}' as a number", field.trim()),
                })?;
                row.push(value);
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::InvalidConfig {
                path: "csv".into(),
                message: "no rows found".into(),
            });
        }
        Matrix::from_rows(&rows)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl serde::Serialize for Matrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> serde::Deserialize<'de> for Matrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

impl serde::Serialize for Vector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.data.serialize(serializer)
    }
}

impl<'de> serde::Deserialize<'de> for Vector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Vector, D::Error> {
        let data = Vec::<f64>::deserialize(deserializer)?;
        Vector::new(data).map_err(serde::de::Error::custom)
    }
}

impl std::ops::Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        assert!(
            self.rows == rhs.rows && self.cols == rhs.cols,
            "matrix addition shape mismatch: {}x{} vs {}x{}",
            self.rows,
            self.cols,
            rhs.rows,
            rhs.cols
        );
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl std::ops::Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        assert!(
            self.rows == rhs.rows && self.cols == rhs.cols,
            "matrix subtraction shape mismatch: {}x{} vs {}x{}",
            self.rows,
            self.cols,
            rhs.rows,
            rhs.cols
        );
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl std::ops::Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matrix product shape mismatch: {}x{} times {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += aik * rhs.get(k, j);
                }
            }
        }
        out
    }
}

impl std::ops::Mul<&Vector> for &Matrix {
    type Output = Vector;
    fn mul(self, rhs: &Vector) -> Vector {
        assert_eq!(
            self.cols,
            rhs.len(),
            "matrix-vector shape mismatch: {}x{} times length {}",
            self.rows,
            self.cols,
            rhs.len()
        );
        Vector::from_fn(self.rows, |i| {
            (0..self.cols).map(|j| self.get(i, j) * rhs[j]).sum()
        })
    }
}

/// Spectral decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Eigenvalues in ascending order.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors, column j pairing with eigenvalue j.
    pub eigenvectors: Matrix,
}

impl SymEig {
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        *self
            .eigenvalues
            .last()
            .expect("decomposition of an empty matrix")
    }

    /// Rebuilds V Λ Vᵀ, for residual checks.
    pub fn reconstruct(&self) -> Matrix {
        let v = &self.eigenvectors;
        let lam = Matrix::from_diag(&self.eigenvalues);
        &(v * &lam) * &v.transpose()
    }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let d = a.rows();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                s += a.get(i, j) * a.get(i, j);
            }
        }
    }
    s.sqrt()
}

/// One Jacobi rotation zeroing entry (p, q) of the symmetric matrix `a`,
/// accumulating the rotation into `v`.
fn jacobi_rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let d = a.rows();
    let apq = a.get(p, q);
    if apq == 0.0 {
        return;
    }
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    let tau = (aqq - app) / (2.0 * apq);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    // A ← JᵀAJ with J the rotation in the (p, q) plane
    for k in 0..d {
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        a.data[k * d + p] = c * akp - s * akq;
        a.data[k * d + q] = s * akp + c * akq;
    }
    for k in 0..d {
        let apk = a.get(p, k);
        let aqk = a.get(q, k);
        a.data[p * d + k] = c * apk - s * aqk;
        a.data[q * d + k] = s * apk + c * aqk;
    }
    // the rotation annihilates (p, q) exactly in real arithmetic
    a.data[p * d + q] = 0.0;
    a.data[q * d + p] = 0.0;

    for k in 0..d {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.data[k * d + p] = c * vkp - s * vkq;
        v.data[k * d + q] = s * vkp + c * vkq;
    }
}

fn chol_solve_vec(l: &Matrix, b: &Vector) -> Vector {
    let d = l.rows();
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut s = b[i];
        for (k, &yk) in y.iter().enumerate().take(i) {
            s -= l.get(i, k) * yk;
        }
        y[i] = s / l.get(i, i);
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let mut s = y[i];
        for (k, &xk) in x.iter().enumerate().skip(i + 1) {
            s -= l.get(k, i) * xk;
        }
        x[i] = s / l.get(i, i);
    }
    Vector { data: x }
}

/// Truncated Neumann series (id − op)⁻¹B = B + op(B) + op²(B) + …, summed
/// until the newest term's spectral norm drops to `tol`. Returns the sum
/// and the number of terms taken. The caller asserts that the operator
/// norm of `op` is below one; divergence shows up as `NoConvergence`.
pub fn neumann_apply_inverse(
    op: impl Fn(&Matrix) -> Matrix,
    b: &Matrix,
    tol: f64,
    max_terms: usize,
) -> Result<(Matrix, usize)> {
    let mut sum = b.clone();
    let mut term = b.clone();
    let mut terms = 1usize;
    let mut residual = term.spectral_norm();
    while terms < max_terms {
        term = op(&term);
        residual = term.spectral_norm();
        if residual == 0.0 {
            return Ok((sum, terms));
        }
        sum = &sum + &term;
        terms += 1;
        if residual <= tol {
            return Ok((sum, terms));
        }
    }
    Err(Error::NoConvergence {
        what: "Neumann series",
        limit: max_terms,
        residual,
    })
}
