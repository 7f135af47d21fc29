//! Small dense linear algebra for the state dimensions this crate deals in
//! (d ≤ ~10). Everything is row-major and generic over [`Real`].

use std::ops::{Index, IndexMut};

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Matrices up to 4×4 are stored inline.
type Storage<T> = SmallVec<[T; 16]>;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Storage<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: smallvec::smallvec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[T]) -> Self {
        assert_eq!(data.len(), rows * cols, "row slice has wrong length");
        Self {
            rows,
            cols,
            data: Storage::from_slice(data),
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Storage::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
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

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> T {
        self.diagonal().into_iter().sum()
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

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] = out[(i, j)] + a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mul_vec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + a * b))
            .collect()
    }

    /// `selfᵀ v`.
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len(), "tr_mul_vec dimension mismatch");
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for (j, o) in out.iter_mut().enumerate() {
                *o = *o + self[(i, j)] * v[i];
            }
        }
        out
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    /// `A ← (A + Aᵀ)/2`.
    pub fn symmetrize(&mut self) {
        debug_assert!(self.is_square());
        let half = T::of(0.5);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Mat<T>,
    log_det: T,
}

impl<T: Real> Cholesky<T> {
    /// Plain factorisation; `None` unless `a` is numerically positive definite.
    pub fn new(a: &Mat<T>) -> Option<Self> {
        let n = a.rows();
        debug_assert!(a.is_square());
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag = diag - l[(j, k)] * l[(j, k)];
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return None;
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        let log_det = (0..n).map(|i| T::of(2.0) * l[(i, i)].ln()).sum();
        Some(Self { l, log_det })
    }

    /// Factorise, retrying with diagonal jitter `c·tr(A)/d` for
    /// `c ∈ {1e-10, 1e-9, 1e-8, 1e-7}` (floored at the type's precision).
    pub fn with_jitter(a: &Mat<T>) -> Option<Self> {
        if let Some(c) = Self::new(a) {
            return Some(c);
        }
        let n = a.rows();
        let scale = a.trace() / T::of_usize(n.max(1));
        if !(scale > T::zero()) || !scale.is_finite() {
            return None;
        }
        let base = T::of(1e-10).max(T::epsilon() * T::of(10.0));
        let mut jitter = base * scale;
        for _ in 0..4 {
            let mut aj = a.clone();
            for i in 0..n {
                aj[(i, i)] = aj[(i, i)] + jitter;
            }
            if let Some(c) = Self::new(&aj) {
                return Some(c);
            }
            jitter = jitter * T::of(10.0);
        }
        None
    }

    pub fn l(&self) -> &Mat<T> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// `ln det A`.
    pub fn log_det(&self) -> T {
        self.log_det
    }

    /// Solves `L z = b`.
    pub fn forward(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut z = b.to_vec();
        for i in 0..n {
            let s = (0..i).fold(z[i], |s, k| s - self.l[(i, k)] * z[k]);
            z[i] = s / self.l[(i, i)];
        }
        z
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x = self.forward(b);
        for i in (0..n).rev() {
            let s = ((i + 1)..n).fold(x[i], |s, k| s - self.l[(k, i)] * x[k]);
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: &Mat<T>) -> Mat<T> {
        let mut out = Mat::zeros(b.rows(), b.cols());
        let mut col = vec![T::zero(); b.rows()];
        for j in 0..b.cols() {
            for i in 0..b.rows() {
                col[i] = b[(i, j)];
            }
            let x = self.solve(&col);
            for i in 0..b.rows() {
                out[(i, j)] = x[i];
            }
        }
        out
    }

    /// `(x - mean)ᵀ A⁻¹ (x - mean)`.
    pub fn mahalanobis_sq(&self, x: &[T], mean: &[T]) -> T {
        let n = self.dim();
        let mut z: SmallVec<[T; 8]> = SmallVec::with_capacity(n);
        let mut total = T::zero();
        for i in 0..n {
            let mut s = x[i] - mean[i];
            for (k, &zk) in z.iter().enumerate() {
                s = s - self.l[(i, k)] * zk;
            }
            let zi = s / self.l[(i, i)];
            total = total + zi * zi;
            z.push(zi);
        }
        total
    }

    /// `ln N(x; mean, A)`.
    pub fn log_density(&self, x: &[T], mean: &[T]) -> T {
        let d = T::of_usize(self.dim());
        -T::of(0.5) * (self.mahalanobis_sq(x, mean) + self.log_det()) - d * T::half_ln_2pi()
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and a matrix whose columns are the eigenvectors.
pub fn sym_eigen<T: Real>(a: &Mat<T>) -> (Vec<T>, Mat<T>) {
    let n = a.rows();
    let mut m = a.clone();
    m.symmetrize();
    let mut v = Mat::identity(n);
    if n == 1 {
        return (vec![m[(0, 0)]], v);
    }
    let scale = m.frobenius();
    if scale == T::zero() {
        return (vec![T::zero(); n], v);
    }
    let tol = T::epsilon() * scale;
    for _sweep in 0..64 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off + m[(p, q)].abs();
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (m.diagonal(), v)
}

pub fn min_eigenvalue<T: Real>(a: &Mat<T>) -> T {
    sym_eigen(a).0.into_iter().fold(T::infinity(), T::min)
}

/// Symmetric square root `S = Q diag(√λ⁺) Qᵀ`; negative eigenvalues are
/// clamped to zero so rank-deficient inputs are fine.
pub fn psd_sqrt<T: Real>(a: &Mat<T>) -> Mat<T> {
    let n = a.rows();
    if n == 1 {
        return Mat::from_diag(&[a[(0, 0)].max(T::zero()).sqrt()]);
    }
    if n == 2 {
        // (A + √det·I) / √(tr + 2√det) for PSD A.
        let off = T::of(0.5) * (a[(0, 1)] + a[(1, 0)]);
        let det = a[(0, 0)] * a[(1, 1)] - off * off;
        let tr = a[(0, 0)] + a[(1, 1)];
        if det >= T::zero() && tr >= T::zero() {
            let s = det.sqrt();
            let t = (tr + T::of(2.0) * s).sqrt();
            if t == T::zero() {
                return Mat::zeros(2, 2);
            }
            return Mat::from_row_slice(2, 2, &[(a[(0, 0)] + s) / t, off / t, off / t, (a[(1, 1)] + s) / t]);
        }
    }
    let (vals, q) = sym_eigen(a);
    let mut s = Mat::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        let r = lam.max(T::zero()).sqrt();
        if r == T::zero() {
            continue;
        }
        for i in 0..n {
            let qi = q[(i, k)] * r;
            for j in 0..n {
                s[(i, j)] = s[(i, j)] + qi * q[(j, k)];
            }
        }
    }
    s
}

/// `ln N(x; mean, cov)` with the shared jitter policy.
pub fn gaussian_log_density<T: Real>(x: &[T], mean: &[T], cov: &Mat<T>) -> Result<T> {
    if x.len() == 1 {
        let v = cov[(0, 0)];
        if !(v > T::zero()) {
            return Err(Error::SingularCovariance);
        }
        let r = x[0] - mean[0];
        return Ok(-T::of(0.5) * (r * r / v + v.ln()) - T::half_ln_2pi());
    }
    Cholesky::with_jitter(cov)
        .map(|c| c.log_density(x, mean))
        .ok_or(Error::SingularCovariance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd3() -> Mat<f64> {
        Mat::from_rows(&[vec![4.0, 1.0, 0.5], vec![1.0, 3.0, -0.2], vec![0.5, -0.2, 2.0]])
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = spd3();
        let c = Cholesky::new(&a).unwrap();
        let back = c.l().matmul(&c.l().transpose());
        assert!(back.sub(&a).frobenius() < 1e-12);
        let x = c.solve(&[1.0, 2.0, 3.0]);
        let ax = a.mul_vec(&x);
        for (u, v) in ax.iter().zip([1.0, 2.0, 3.0]) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn jitter_rescues_semidefinite_but_not_zero() {
        let a = Mat::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(Cholesky::new(&a).is_none());
        assert!(Cholesky::with_jitter(&a).is_some());
        assert!(Cholesky::<f64>::with_jitter(&Mat::zeros(2, 2)).is_none());
    }

    #[test]
    fn eigen_and_sqrt() {
        let a = spd3();
        let (vals, q) = sym_eigen(&a);
        let recon = q.matmul(&Mat::from_diag(&vals)).matmul(&q.transpose());
        assert!(recon.sub(&a).frobenius() < 1e-12);
        let s = psd_sqrt(&a);
        assert!(s.matmul(&s.transpose()).sub(&a).frobenius() < 1e-12);
        assert!(s.max_asymmetry() < 1e-14);
    }

    #[test]
    fn sqrt_of_rank_deficient() {
        let a = Mat::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let s = psd_sqrt(&a);
        assert!(s.matmul(&s).sub(&a).frobenius() < 1e-12);
    }

    #[test]
    fn scalar_density_matches_cholesky_path() {
        let c = Cholesky::new(&Mat::from_diag(&[2.5f64])).unwrap();
        let a = c.log_density(&[1.0], &[0.2]);
        let b = gaussian_log_density(&[1.0], &[0.2], &Mat::from_diag(&[2.5])).unwrap();
        assert!((a - b).abs() < 1e-14);
    }
}
