//! Dense complex linear algebra used by the optimizers.
//!
//! Only what the solvers need: a row-major [`ComplexMatrix`], Hermitian
//! positive-definite solves, the dominant eigenvalue of a Hermitian PSD
//! matrix, Hadamard products and a principal-argument helper.

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Relative asymmetry accepted by [`hermitian_solve`].
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Default relative tolerance of the power iteration.
pub const EIG_TOL: f64 = 1e-9;
/// Default iteration cap of the power iteration.
pub const EIG_MAX_ITER: usize = 10_000;

/// Dense complex matrix stored row-major.
///
/// Zero-sized dimensions are allowed so that an IRS with no elements can be
/// represented; the factorizations below reject them.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(rows: usize, columns: &[Vec<C64>]) -> Result<Self> {
        let mut m = Self::zeros(rows, columns.len());
        for (j, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(Error::Dimension(format!(
                    "column {j} has length {}, expected {rows}",
                    col.len()
                )));
            }
            for (i, &z) in col.iter().enumerate() {
                m[(i, j)] = z;
            }
        }
        Ok(m)
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
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, col: &[C64]) {
        debug_assert_eq!(col.len(), self.rows);
        for (i, &z) in col.iter().enumerate() {
            self[(i, j)] = z;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `self * x`.
    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dotu(self.row(i), x)).collect()
    }

    /// `self^H * x`.
    pub fn adjoint_mul_vec(&self, x: &[C64]) -> Vec<C64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![ZERO; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a.conj() * xi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// Adds `alpha * x * y^H` in place.
    pub fn add_outer(&mut self, alpha: C64, x: &[C64], y: &[C64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for (i, &xi) in x.iter().enumerate() {
            let s = alpha * xi;
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (r, yj) in row.iter_mut().zip(y) {
                *r += s * yj.conj();
            }
        }
    }

    /// Largest `|a_ij - conj(a_ji)|` relative to the Frobenius norm.
    pub fn hermitian_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let norm = self.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst / norm
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.4e}{:+.4e}j  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Unconjugated dot product `sum a_i b_i`.
#[inline]
pub fn dotu(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugated dot product `a^H b`.
#[inline]
pub fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

#[inline]
pub fn norm(a: &[C64]) -> f64 {
    norm_sqr(a).sqrt()
}

/// Entrywise product of two equally sized matrices.
pub fn hadamard(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.check_same_shape(b)?;
    Ok(ComplexMatrix {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    })
}

/// Angle of `z` normalized to `[0, 2π)`. The angle of zero is defined as 0.
pub fn principal_arg(z: C64) -> f64 {
    if z == ZERO {
        return 0.0;
    }
    wrap_angle(z.im.atan2(z.re))
}

/// Maps any finite angle into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Solves `A x = b` for Hermitian positive-definite `A`.
///
/// Uses a Cholesky factorization. A non-positive pivot means `A` is not
/// positive definite and is reported as a singular system; a positive but
/// tiny pivot (below `1e-14 * trace`) switches to partially pivoted
/// Gaussian elimination.
pub fn hermitian_solve(a: &ComplexMatrix, b: &[C64]) -> Result<Vec<C64>> {
    let n = a.rows();
    if !a.is_square() || n == 0 {
        return Err(Error::Dimension(format!(
            "hermitian_solve needs a non-empty square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if b.len() != n {
        return Err(Error::Dimension(format!(
            "right-hand side has length {}, expected {n}",
            b.len()
        )));
    }
    let asym = a.hermitian_asymmetry();
    if asym > HERMITIAN_TOL {
        return Err(Error::NotHermitian(asym));
    }
    let trace = a.trace().re.abs();
    match cholesky(a, 1e-14 * trace)? {
        Some(l) => Ok(cholesky_solve(&l, b)),
        None => lu_solve(a, b),
    }
}

/// Lower-triangular Cholesky factor, or `None` if a pivot is positive but
/// below `small_pivot`.
fn cholesky(a: &ComplexMatrix, small_pivot: f64) -> Result<Option<ComplexMatrix>> {
    let n = a.rows();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return Err(Error::Singular(format!(
                "non-positive pivot {d:e} at column {j}"
            )));
        }
        if d < small_pivot {
            return Ok(None);
        }
        let djj = d.sqrt();
        l[(j, j)] = C64::new(djj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(Some(l))
}

fn cholesky_solve(l: &ComplexMatrix, b: &[C64]) -> Vec<C64> {
    let n = l.rows();
    // L y = b
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    // L^H x = y
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)].conj() * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

fn lu_solve(a: &ComplexMatrix, b: &[C64]) -> Result<Vec<C64>> {
    let n = a.rows();
    let mut m = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[(i, col)].norm().total_cmp(&m[(j, col)].norm()))
            .unwrap_or(col);
        if m[(pivot_row, col)].norm() == 0.0 {
            return Err(Error::Singular(format!("zero pivot at column {col}")));
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(pivot_row, j)];
                m[(pivot_row, j)] = tmp;
            }
            x.swap(col, pivot_row);
        }
        let p = m[(col, col)];
        for i in (col + 1)..n {
            let factor = m[(i, col)] / p;
            if factor == ZERO {
                continue;
            }
            for j in col..n {
                let v = m[(col, j)];
                m[(i, j)] -= factor * v;
            }
            let xv = x[col];
            x[i] -= factor * xv;
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s -= m[(i, j)] * x[j];
        }
        x[i] = s / m[(i, i)];
    }
    Ok(x)
}

/// Result of [`max_eigenvalue`].
#[derive(Debug, Clone, PartialEq)]
pub struct EigenEstimate {
    pub value: f64,
    /// Unit-norm iterate the estimate is the Rayleigh quotient of.
    pub vector: Vec<C64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Dominant eigenvalue of a Hermitian positive semi-definite matrix by power
/// iteration.
///
/// Stops when the Rayleigh quotient changes by at most `tol` relative. If
/// `max_iter` is reached the best estimate is returned with
/// `converged == false`.
pub fn max_eigenvalue(a: &ComplexMatrix, tol: f64, max_iter: usize) -> Result<EigenEstimate> {
    let n = a.rows();
    if !a.is_square() || n == 0 {
        return Err(Error::Dimension(format!(
            "max_eigenvalue needs a non-empty square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if a.norm() == 0.0 {
        let mut vector = vec![ZERO; n];
        vector[0] = ONE;
        return Ok(EigenEstimate {
            value: 0.0,
            vector,
            iterations: 0,
            converged: true,
        });
    }

    // Deterministic start with irregular phases, tilted towards the largest
    // diagonal entry so it cannot lie in the null space of a PSD matrix.
    let heaviest = (0..n)
        .max_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re))
        .unwrap_or(0);
    let mut x: Vec<C64> = (0..n)
        .map(|i| C64::from_polar(1.0, 2.399_963_229_728_653 * i as f64))
        .collect();
    x[heaviest] += C64::new(n as f64, 0.0);
    let nx = norm(&x);
    x.iter_mut().for_each(|z| *z /= nx);

    let mut rho = 0.0_f64;
    for it in 1..=max_iter {
        let y = a.mul_vec(&x);
        let next = dotc(&x, &y).re;
        let ny = norm(&y);
        if ny == 0.0 {
            // x fell into the null space; every eigenvalue it saw is zero.
            return Ok(EigenEstimate {
                value: rho.max(0.0),
                vector: x,
                iterations: it,
                converged: true,
            });
        }
        if it > 1 && (next - rho).abs() <= tol * next.abs() {
            return Ok(EigenEstimate {
                value: next.max(0.0),
                vector: x,
                iterations: it,
                converged: true,
            });
        }
        x = y.into_iter().map(|z| z / ny).collect();
        rho = next;
    }
    let value = dotc(&x, &a.mul_vec(&x)).re.max(0.0);
    Ok(EigenEstimate {
        value,
        vector: x,
        iterations: max_iter,
        converged: false,
    })
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::Rng;

    pub fn random_cvec<R: Rng>(rng: &mut R, n: usize) -> Vec<C64> {
        (0..n)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    /// `X X^H + shift I`, Hermitian PSD (PD when `shift > 0`).
    pub fn random_hermitian_psd<R: Rng>(rng: &mut R, n: usize, rank: usize, shift: f64) -> ComplexMatrix {
        let x = random_matrix(rng, n, rank);
        let mut g = x.matmul(&x.adjoint()).unwrap();
        for i in 0..n {
            g[(i, i)] += shift;
        }
        // Exact Hermitian symmetry.
        ComplexMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(g[(i, i)].re, 0.0)
            } else if i < j {
                g[(i, j)]
            } else {
                g[(j, i)].conj()
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const J: C64 = C64::new(0.0, 1.0);

    /// Textbook Gauss-Jordan with full row pivoting, independent of the
    /// factorizations above.
    fn gauss_jordan(a: &ComplexMatrix, b: &[C64]) -> Vec<C64> {
        let n = a.rows();
        let mut aug: Vec<Vec<C64>> = (0..n)
            .map(|i| {
                let mut r = a.row(i).to_vec();
                r.push(b[i]);
                r
            })
            .collect();
        for c in 0..n {
            let p = (c..n)
                .max_by(|&i, &j| aug[i][c].norm().partial_cmp(&aug[j][c].norm()).unwrap())
                .unwrap();
            aug.swap(c, p);
            let piv = aug[c][c];
            for v in aug[c].iter_mut() {
                *v /= piv;
            }
            for r in 0..n {
                if r != c {
                    let f = aug[r][c];
                    let src = aug[c].clone();
                    for (v, s) in aug[r].iter_mut().zip(src) {
                        *v -= f * s;
                    }
                }
            }
        }
        aug.into_iter().map(|r| r[n]).collect()
    }

    fn residual(a: &ComplexMatrix, x: &[C64], b: &[C64]) -> f64 {
        let ax = a.mul_vec(x);
        let r: Vec<C64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
        norm(&r) / norm(b)
    }

    #[test]
    fn solve_identity() {
        let x = hermitian_solve(&ComplexMatrix::identity(2), &[ONE, J]).unwrap();
        assert_eq!(x, vec![ONE, J]);
    }

    #[test]
    fn solve_diagonal() {
        let a = ComplexMatrix::from_diag(&[C64::new(2.0, 0.0), C64::new(4.0, 0.0)]);
        let x = hermitian_solve(&a, &[C64::new(2.0, 0.0), C64::new(4.0, 0.0)]).unwrap();
        assert!((x[0] - ONE).norm() < 1e-15 && (x[1] - ONE).norm() < 1e-15);
    }

    #[test]
    fn solve_matches_gauss_jordan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_hermitian_psd(&mut rng, 5, 5, 0.5);
        let b = random_cvec(&mut rng, 5);
        let x = hermitian_solve(&a, &b).unwrap();
        let oracle = gauss_jordan(&a, &b);
        for (p, q) in x.iter().zip(&oracle) {
            assert!((p - q).norm() <= 1e-10 * norm(&oracle));
        }
        assert!(residual(&a, &x, &b) <= 1e-8);
    }

    #[test]
    fn solve_rejects_indefinite() {
        let a = ComplexMatrix::from_diag(&[ONE, C64::new(-1.0, 0.0)]);
        assert!(matches!(hermitian_solve(&a, &[ONE, ONE]), Err(Error::Singular(_))));
        let z = ComplexMatrix::zeros(2, 2);
        assert!(matches!(hermitian_solve(&z, &[ONE, ONE]), Err(Error::Singular(_))));
    }

    #[test]
    fn solve_rejects_non_hermitian_and_bad_shapes() {
        let mut a = ComplexMatrix::identity(2);
        a[(0, 1)] = C64::new(0.5, 0.0);
        assert!(matches!(hermitian_solve(&a, &[ONE, ONE]), Err(Error::NotHermitian(_))));
        assert!(matches!(
            hermitian_solve(&ComplexMatrix::identity(2), &[ONE]),
            Err(Error::Dimension(_))
        ));
        assert!(hermitian_solve(&ComplexMatrix::zeros(2, 3), &[ONE, ONE]).is_err());
    }

    #[test]
    fn solve_falls_back_on_tiny_pivot() {
        // Second pivot is 1e-20, far below 1e-14 * trace, but still positive.
        let a = ComplexMatrix::from_diag(&[ONE, C64::new(1e-20, 0.0)]);
        let x = hermitian_solve(&a, &[ONE, C64::new(1e-20, 0.0)]).unwrap();
        assert!((x[1] - ONE).norm() < 1e-12);
    }

    #[test]
    fn solve_residual_on_many_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..1000 {
            let n = 1 + trial % 16;
            let a = random_hermitian_psd(&mut rng, n, n, 1e-3);
            let b = random_cvec(&mut rng, n);
            let x = hermitian_solve(&a, &b).unwrap();
            assert!(residual(&a, &x, &b) <= 1e-8, "trial {trial} n={n}");
        }
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = max_eigenvalue(&ComplexMatrix::identity(3), EIG_TOL, EIG_MAX_ITER).unwrap();
        assert!((e.value - 1.0).abs() < 1e-12 && e.converged);
        let d = ComplexMatrix::from_diag(&[ONE, C64::new(3.0, 0.0)]);
        let e = max_eigenvalue(&d, EIG_TOL, EIG_MAX_ITER).unwrap();
        assert!((e.value - 3.0).abs() < 1e-8);
    }

    #[test]
    fn eig_zero_and_nonconvergence_flag() {
        let e = max_eigenvalue(&ComplexMatrix::zeros(4, 4), EIG_TOL, EIG_MAX_ITER).unwrap();
        assert_eq!(e.value, 0.0);
        // Nearly degenerate top pair with one iteration allowed.
        let d = ComplexMatrix::from_diag(&[ONE, C64::new(0.999, 0.0), C64::new(0.5, 0.0)]);
        let e = max_eigenvalue(&d, 1e-15, 1).unwrap();
        assert!(!e.converged);
        assert!(e.value <= 1.0 + 1e-12);
    }

    fn dense_max_eig(a: &ComplexMatrix) -> f64 {
        let n = a.rows();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            nalgebra::Complex::new(a[(i, j)].re, a[(i, j)].im)
        });
        let eig = nalgebra::SymmetricEigen::new(m);
        eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max)
    }

    #[test]
    fn eig_matches_dense_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_hermitian_psd(&mut rng, 8, 8, 0.0);
            let est = max_eigenvalue(&a, EIG_TOL, EIG_MAX_ITER).unwrap();
            let oracle = dense_max_eig(&a);
            assert!(
                (est.value - oracle).abs() <= 1e-6 * oracle,
                "{} vs {}",
                est.value,
                oracle
            );
        }
    }

    #[test]
    fn hadamard_identity_mask_and_zero() {
        let a = ComplexMatrix::from_row_major(
            2,
            2,
            vec![C64::new(1.0, 2.0), C64::new(3.0, 0.0), C64::new(0.0, -1.0), C64::new(5.0, 5.0)],
        )
        .unwrap();
        let masked = hadamard(&a, &ComplexMatrix::identity(2)).unwrap();
        assert_eq!(masked, ComplexMatrix::from_diag(&a.diagonal()));
        let zero = hadamard(&a, &ComplexMatrix::zeros(2, 2)).unwrap();
        assert_eq!(zero, ComplexMatrix::zeros(2, 2));
        assert!(hadamard(&a, &ComplexMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn hadamard_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_matrix(&mut rng, 3, 3);
        let b = random_matrix(&mut rng, 3, 3);
        let h = hadamard(&a, &b).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(h[(i, j)], a[(i, j)] * b[(i, j)]);
            }
        }
    }

    #[test]
    fn principal_arg_quadrants() {
        assert_eq!(principal_arg(ONE), 0.0);
        assert!((principal_arg(C64::new(-1.0, 0.0)) - PI).abs() < 1e-15);
        assert!((principal_arg(-J) - 1.5 * PI).abs() < 1e-15);
        assert_eq!(principal_arg(ZERO), 0.0);
        assert_eq!(wrap_angle(-1e-18), 0.0);
    }

    proptest! {
        #[test]
        fn principal_arg_inverts_polar(a in 0.0..TAU) {
            let got = principal_arg(C64::from_polar(1.0, a));
            let diff = (got - a).abs();
            prop_assert!(diff <= 1e-12 || (TAU - diff) <= 1e-12);
            prop_assert!((0.0..TAU).contains(&got));
        }

        #[test]
        fn eig_bounds_rayleigh_quotient(seed in any::<u64>(), n in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_hermitian_psd(&mut rng, n, 1 + n / 2, 0.0);
            let est = max_eigenvalue(&a, EIG_TOL, EIG_MAX_ITER).unwrap();
            prop_assert!(est.value >= 0.0);
            for _ in 0..8 {
                let x = random_cvec(&mut rng, n);
                let rq = dotc(&x, &a.mul_vec(&x)).re / norm_sqr(&x);
                prop_assert!(est.value >= rq - 1e-8 * est.value.max(1.0));
            }
        }
    }
}
