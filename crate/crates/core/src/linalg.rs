//! Small dense complex matrices.
//!
//! Every operator in this crate lives on a 9-dimensional (two modes, three
//! levels each) or 4-dimensional (two qubits) space, so a plain row-major
//! `Vec` with straightforward loops beats any general-purpose backend. The
//! only decomposition needed is the Hermitian eigenproblem, solved with
//! cyclic complex Jacobi rotations; matrix exponentials, spectral norms and
//! singular values are all derived from it.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Complex scalar.
pub type C<T> = Complex<T>;

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T: Real> {
    rows: usize,
    cols: usize,
    data: Vec<C<T>>,
}

/// Eigen-decomposition of a Hermitian matrix: `A = V diag(values) V†`.
#[derive(Clone, Debug)]
pub struct HermitianEigen<T: Real> {
    /// Eigenvalues in ascending order.
    pub values: Vec<T>,
    /// Unitary whose columns are the matching eigenvectors.
    pub vectors: CMatrix<T>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![C::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Build from row-major entries. Panics if the length does not match.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C<T>>) -> Self {
        assert_eq!(data.len(), rows * cols, "entry count must equal rows*cols");
        Self { rows, cols, data }
    }

    pub fn from_real_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C::new(d, T::zero());
        }
        m
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

    pub fn entries(&self) -> &[C<T>] {
        &self.data
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).fold(C::new(T::zero(), T::zero()), |a, b| a + b)
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    /// Elementwise map.
    pub fn map(&self, mut f: impl FnMut(usize, usize, C<T>) -> C<T>) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| f(i, j, self[(i, j)]))
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "inner dimensions must agree");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d = *d + a * b;
                }
            }
        }
        out
    }

    /// `[A, B] = AB − BA`.
    pub fn commutator(&self, rhs: &Self) -> Self {
        &self.matmul(rhs) - &rhs.matmul(self)
    }

    pub fn kron(&self, rhs: &Self) -> Self {
        Self::from_fn(self.rows * rhs.rows, self.cols * rhs.cols, |i, j| {
            self[(i / rhs.rows, j / rhs.cols)] * rhs[(i % rhs.rows, j % rhs.cols)]
        })
    }

    /// Extract the submatrix on the given row and column index lists.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> T {
        if self.data.iter().all(|z| z.re == T::zero() && z.im == T::zero()) {
            return T::zero();
        }
        let gram = self.dagger().matmul(self);
        let eig = gram.hermitian_eigen_unchecked();
        eig.values.last().copied().unwrap_or(T::zero()).max(T::zero()).sqrt()
    }

    /// Singular values in ascending order.
    pub fn singular_values(&self) -> Vec<T> {
        let gram = self.dagger().matmul(self);
        gram.hermitian_eigen_unchecked()
            .values
            .into_iter()
            .map(|v| v.max(T::zero()).sqrt())
            .collect()
    }

    /// Frobenius norm of `A − A†`.
    pub fn hermiticity_defect(&self) -> T {
        assert!(self.is_square());
        (self - &self.dagger()).frobenius_norm()
    }

    /// Frobenius norm of `A†A − I`.
    pub fn unitarity_defect(&self) -> T {
        assert!(self.is_square());
        (&self.dagger().matmul(self) - &Self::identity(self.rows)).frobenius_norm()
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.is_square() && self.hermiticity_defect() < tol
    }

    pub fn is_unitary(&self, tol: T) -> bool {
        self.is_square() && self.unitarity_defect() < tol
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Hermitian eigen-decomposition; errors if the input is not Hermitian
    /// to within `1e3·ε·‖A‖`.
    pub fn hermitian_eigen(&self) -> Result<HermitianEigen<T>> {
        if !self.is_square() {
            return Err(Error::Dimension(format!(
                "eigen-decomposition needs a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("matrix passed to eigen-decomposition".into()));
        }
        let scale = self.frobenius_norm().max(T::one());
        let tol = T::lit(1e3) * T::epsilon() * scale;
        if self.hermiticity_defect() > tol {
            return Err(Error::NotHermitian(self.hermiticity_defect().as_f64()));
        }
        Ok(self.hermitian_eigen_unchecked())
    }

    /// Cyclic Jacobi with complex rotations. Only the upper triangle's
    /// Hermitian part is meaningful; callers guarantee Hermiticity.
    pub(crate) fn hermitian_eigen_unchecked(&self) -> HermitianEigen<T> {
        let n = self.rows;
        let mut a = self.clone();
        // Symmetrize so rounding noise in the input cannot bias the result.
        for i in 0..n {
            a[(i, i)] = C::new(a[(i, i)].re, T::zero());
            for j in (i + 1)..n {
                let avg = (a[(i, j)] + a[(j, i)].conj()).scale(T::lit(0.5));
                a[(i, j)] = avg;
                a[(j, i)] = avg.conj();
            }
        }
        let mut v = Self::identity(n);
        let total = a.frobenius_norm();
        let eps = T::epsilon();
        for _sweep in 0..64 {
            let mut off = T::zero();
            for i in 0..n {
                for j in (i + 1)..n {
                    off = off + a[(i, j)].norm_sqr();
                }
            }
            if off.sqrt() <= eps * eps.sqrt() * total || off == T::zero() {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let b = a[(p, q)];
                    let mag = b.norm();
                    if mag <= T::min_positive_value() {
                        continue;
                    }
                    let app = a[(p, p)].re;
                    let aqq = a[(q, q)].re;
                    // Phase that makes the (p, q) entry real and positive.
                    let phase = b / mag;
                    let theta = (aqq - app) / (T::lit(2.0) * mag);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    // G = diag(1, conj(phase)) · [[c, s], [-s, c]]
                    let g_pp = C::new(c, T::zero());
                    let g_pq = C::new(s, T::zero());
                    let g_qp = phase.conj() * (-s);
                    let g_qq = phase.conj() * c;
                    // A <- A G
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = akp * g_pp + akq * g_qp;
                        a[(k, q)] = akp * g_pq + akq * g_qq;
                    }
                    // A <- G† A
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = g_pp.conj() * apk + g_qp.conj() * aqk;
                        a[(q, k)] = g_pq.conj() * apk + g_qq.conj() * aqk;
                    }
                    a[(p, q)] = C::new(T::zero(), T::zero());
                    a[(q, p)] = C::new(T::zero(), T::zero());
                    a[(p, p)] = C::new(a[(p, p)].re, T::zero());
                    a[(q, q)] = C::new(a[(q, q)].re, T::zero());
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = vkp * g_pp + vkq * g_qp;
                        v[(k, q)] = vkp * g_pq + vkq * g_qq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| a[(x, x)].re.partial_cmp(&a[(y, y)].re).unwrap_or(std::cmp::Ordering::Equal));
        let values = order.iter().map(|&k| a[(k, k)].re).collect();
        let vectors = Self::from_fn(n, n, |i, j| v[(i, order[j])]);
        HermitianEigen { values, vectors }
    }

    /// `exp(−i·H·t)` for Hermitian `H`.
    pub fn expm_hermitian(&self, t: T) -> Result<Self> {
        let eig = self.hermitian_eigen()?;
        Ok(eig.reconstruct_with(|lam| {
            let phase = -lam * t;
            C::new(phase.cos(), phase.sin())
        }))
    }

    /// `exp(S)` for anti-Hermitian `S`, computed as `exp(−i·(iS))`.
    pub fn expm_anti_hermitian(&self) -> Result<Self> {
        let h = self.scale(C::new(T::zero(), T::one()));
        h.expm_hermitian(T::one())
    }
}

impl<T: Real> HermitianEigen<T> {
    /// `V f(Λ) V†`.
    pub fn reconstruct_with(&self, mut f: impl FnMut(T) -> C<T>) -> CMatrix<T> {
        let n = self.values.len();
        let fv: Vec<C<T>> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = C::new(T::zero(), T::zero());
                for (k, &fk) in fv.iter().enumerate() {
                    acc = acc + self.vectors[(i, k)] * fk * self.vectors[(j, k)].conj();
                }
                out[(i, j)] = acc;
            }
        }
        out
    }
}

impl<T: Real> Index<(usize, usize)> for CMatrix<T> {
    type Output = C<T>;
    fn index(&self, (i, j): (usize, usize)) -> &C<T> {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for CMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C<T> {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

macro_rules! elementwise {
    ($trait:ident, $method:ident, $op:tt) => {
        impl<T: Real> $trait<&CMatrix<T>> for &CMatrix<T> {
            type Output = CMatrix<T>;
            fn $method(self, rhs: &CMatrix<T>) -> CMatrix<T> {
                assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
                CMatrix {
                    rows: self.rows,
                    cols: self.cols,
                    data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a $op b).collect(),
                }
            }
        }
        impl<T: Real> $trait<CMatrix<T>> for CMatrix<T> {
            type Output = CMatrix<T>;
            fn $method(self, rhs: CMatrix<T>) -> CMatrix<T> {
                &self $op &rhs
            }
        }
        impl<T: Real> $trait<&CMatrix<T>> for CMatrix<T> {
            type Output = CMatrix<T>;
            fn $method(self, rhs: &CMatrix<T>) -> CMatrix<T> {
                &self $op rhs
            }
        }
    };
}

elementwise!(Add, add, +);
elementwise!(Sub, sub, -);

impl<T: Real> AddAssign<&CMatrix<T>> for CMatrix<T> {
    fn add_assign(&mut self, rhs: &CMatrix<T>) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a = *a + b;
        }
    }
}

impl<T: Real> SubAssign<&CMatrix<T>> for CMatrix<T> {
    fn sub_assign(&mut self, rhs: &CMatrix<T>) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a = *a - b;
        }
    }
}

impl<T: Real> Mul<&CMatrix<T>> for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn mul(self, rhs: &CMatrix<T>) -> CMatrix<T> {
        self.matmul(rhs)
    }
}

impl<T: Real> Mul<CMatrix<T>> for CMatrix<T> {
    type Output = CMatrix<T>;
    fn mul(self, rhs: CMatrix<T>) -> CMatrix<T> {
        self.matmul(&rhs)
    }
}

impl<T: Real> Neg for &CMatrix<T> {
    type Output = CMatrix<T>;
    fn neg(self) -> CMatrix<T> {
        self.scale_real(-T::one())
    }
}

impl<T: Real> Neg for CMatrix<T> {
    type Output = CMatrix<T>;
    fn neg(self) -> CMatrix<T> {
        self.scale_real(-T::one())
    }
}

/// `i` as a complex scalar.
pub fn imag_unit<T: Real>() -> C<T> {
    C::new(T::zero(), T::one())
}

pub fn real<T: Real>(x: T) -> C<T> {
    C::new(x, T::zero())
}
