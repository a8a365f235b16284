//! Dense complex matrices, diagonal matrices, and the matricial half-plane
//! predicates.
//!
//! `Operand` abstracts over the two representations so that the
//! subordination solvers run unchanged on dense arguments and on the
//! diagonal arguments the channel pipeline uses.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};
use num_complex::Complex64;

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::opval::MatrixCauchyMap;

pub type C64 = Complex64;

/// Square dense complex matrix.
#[derive(Clone, Debug)]
pub struct ComplexMatrix(Mat<C64>);

impl PartialEq for ComplexMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && (0..self.dim()).all(|i| (0..self.dim()).all(|j| self.0[(i, j)] == other.0[(i, j)]))
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        ComplexMatrix(Mat::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        ComplexMatrix(Mat::identity(dim, dim))
    }

    pub fn scalar(dim: usize, c: C64) -> Self {
        Self::from_fn(dim, |i, j| if i == j { c } else { C64::new(0.0, 0.0) })
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        ComplexMatrix(Mat::from_fn(dim, dim, f))
    }

    pub fn from_diagonal(d: &[C64]) -> Self {
        Self::from_fn(d.len(), |i, j| if i == j { d[i] } else { C64::new(0.0, 0.0) })
    }

    /// Builds a matrix from rows; every row must have as many entries as there are rows.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::Dimension { expected: n, got: r.len() });
        }
        Ok(Self::from_fn(n, |i, j| rows[i][j]))
    }

    pub fn from_faer(m: Mat<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Dimension { expected: m.nrows(), got: m.ncols() });
        }
        Ok(ComplexMatrix(m))
    }

    pub fn as_faer(&self) -> &Mat<C64> {
        &self.0
    }

    pub fn into_faer(self) -> Mat<C64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.0[(i, j)] = v;
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        ComplexMatrix(self.0.adjoint().to_owned())
    }

    pub fn scale(&self, c: C64) -> Self {
        let n = self.dim();
        Self::from_fn(n, |i, j| c * self.0[(i, j)])
    }

    pub fn add(&self, other: &Self) -> Self {
        ComplexMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        ComplexMatrix(&self.0 - &other.0)
    }

    pub fn mul(&self, other: &Self) -> Self {
        ComplexMatrix(&self.0 * &other.0)
    }

    pub fn max_abs(&self) -> f64 {
        let n = self.dim();
        let mut m = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                m = m.max(self.0[(i, j)].norm());
            }
        }
        m
    }

    fn norm1(&self) -> f64 {
        let n = self.dim();
        (0..n).map(|j| (0..n).map(|i| self.0[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn max_offdiag(&self) -> f64 {
        let n = self.dim();
        let mut m = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    m = m.max(self.0[(i, j)].norm());
                }
            }
        }
        m
    }

    pub fn is_diagonal(&self, tol: &Tolerances) -> bool {
        self.max_offdiag() <= tol.diagonal * (1.0 + self.max_abs())
    }

    /// Largest |A[i,j] - conj(A[j,i])|.
    pub fn asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut m = 0.0f64;
        for j in 0..n {
            for i in 0..=j {
                m = m.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        m
    }

    pub fn is_hermitian(&self, tol: &Tolerances) -> bool {
        self.asymmetry() <= tol.hermitian * (1.0 + self.max_abs())
    }

    /// Im(B) = (B - B*)/(2i), which is Hermitian by construction.
    pub fn imag_part(&self) -> Self {
        let n = self.dim();
        let half = C64::new(0.0, -0.5);
        Self::from_fn(n, |i, j| half * (self.0[(i, j)] - self.0[(j, i)].conj()))
    }

    /// Smallest eigenvalue of Im(B); positive iff B lies in the upper half-plane.
    pub fn half_plane_margin(&self) -> f64 {
        let im = self.imag_part();
        if im.max_offdiag() == 0.0 {
            return im.diagonal().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        }
        match im.0.self_adjoint_eigenvalues(Side::Lower) {
            Ok(ev) => ev[0],
            Err(_) => f64::NAN,
        }
    }

    pub fn in_upper_half_plane_with(&self, tol: &Tolerances) -> bool {
        self.half_plane_margin() > tol.half_plane * self.max_abs().max(1.0)
    }

    pub fn in_upper_half_plane(&self) -> bool {
        self.in_upper_half_plane_with(&Tolerances::DEFAULT)
    }

    pub fn inverse_with(&self, tol: &Tolerances) -> Result<Self> {
        let n = self.dim();
        if self.max_offdiag() == 0.0 {
            let d = self.diagonal();
            let dmax = d.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let dmin = d.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
            let condition = if dmin > 0.0 { dmax / dmin } else { f64::INFINITY };
            if !(condition <= tol.max_condition) {
                return Err(Error::Singular { condition });
            }
            return Ok(Self::from_diagonal(&d.iter().map(|z| z.inv()).collect::<Vec<_>>()));
        }
        let inv = ComplexMatrix(self.0.partial_piv_lu().inverse());
        let finite = (0..n).all(|i| (0..n).all(|j| inv.0[(i, j)].is_finite()));
        let condition = if finite { self.norm1() * inv.norm1() } else { f64::INFINITY };
        if !(condition.is_finite() && condition <= tol.max_condition) {
            return Err(Error::Singular { condition });
        }
        Ok(inv)
    }

    pub fn inverse(&self) -> Result<Self> {
        self.inverse_with(&Tolerances::DEFAULT)
    }

    pub fn normalized_trace(&self) -> C64 {
        let n = self.dim();
        (0..n).map(|i| self.0[(i, i)]).sum::<C64>() / n as f64
    }

    /// Eigenvalues of a Hermitian matrix in non-increasing order.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        let asymmetry = self.asymmetry();
        if asymmetry > Tolerances::DEFAULT.hermitian * (1.0 + self.max_abs()) {
            return Err(Error::NotHermitian { asymmetry });
        }
        let mut ev = self.0.self_adjoint_eigenvalues(Side::Lower).map_err(|_| Error::Eigen)?;
        ev.reverse();
        Ok(ev)
    }
}

pub fn inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.inverse()
}

pub fn in_upper_half_plane(b: &ComplexMatrix) -> bool {
    b.in_upper_half_plane()
}

pub fn normalized_trace(a: &ComplexMatrix) -> C64 {
    a.normalized_trace()
}

pub fn hermitian_eigenvalues(a: &ComplexMatrix) -> Result<Vec<f64>> {
    a.hermitian_eigenvalues()
}

/// Diagonal matrix stored as its diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalMatrix(pub Vec<C64>);

impl DiagonalMatrix {
    pub fn to_dense(&self) -> ComplexMatrix {
        ComplexMatrix::from_diagonal(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfPlane {
    Upper,
    Lower,
    Neither,
}

/// Element of the amalgamating matrix algebra, as seen by the solvers.
pub trait Operand: Clone + Send + Sync + Sized {
    fn scalar(dim: usize, c: C64) -> Self;
    fn dim(&self) -> usize;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn scale(&self, c: C64) -> Self;
    fn inverse(&self) -> Result<Self>;
    fn adjoint(&self) -> Self;
    fn max_abs(&self) -> f64;
    fn is_finite(&self) -> bool;
    /// Smallest eigenvalue of the imaginary part.
    fn half_plane_margin(&self) -> f64;
    fn apply(map: &dyn MatrixCauchyMap, x: &Self) -> Result<Self>;
    /// Free coordinates, for solvers that need a flat vector.
    fn coords(&self) -> Vec<C64>;
    fn from_coords(dim: usize, v: &[C64]) -> Self;

    fn half_plane(&self) -> HalfPlane {
        let scale = self.max_abs().max(1.0) * Tolerances::DEFAULT.half_plane;
        if self.half_plane_margin() > scale {
            HalfPlane::Upper
        } else if self.adjoint().half_plane_margin() > scale {
            HalfPlane::Lower
        } else {
            HalfPlane::Neither
        }
    }
}

impl Operand for ComplexMatrix {
    fn scalar(dim: usize, c: C64) -> Self {
        ComplexMatrix::scalar(dim, c)
    }
    fn dim(&self) -> usize {
        ComplexMatrix::dim(self)
    }
    fn add(&self, other: &Self) -> Self {
        ComplexMatrix::add(self, other)
    }
    fn sub(&self, other: &Self) -> Self {
        ComplexMatrix::sub(self, other)
    }
    fn mul(&self, other: &Self) -> Self {
        ComplexMatrix::mul(self, other)
    }
    fn scale(&self, c: C64) -> Self {
        ComplexMatrix::scale(self, c)
    }
    fn inverse(&self) -> Result<Self> {
        ComplexMatrix::inverse(self)
    }
    fn adjoint(&self) -> Self {
        ComplexMatrix::adjoint(self)
    }
    fn max_abs(&self) -> f64 {
        ComplexMatrix::max_abs(self)
    }
    fn is_finite(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| self.0[(i, j)].is_finite()))
    }
    fn half_plane_margin(&self) -> f64 {
        ComplexMatrix::half_plane_margin(self)
    }
    fn apply(map: &dyn MatrixCauchyMap, x: &Self) -> Result<Self> {
        map.evaluate(x)
    }
    fn coords(&self) -> Vec<C64> {
        let n = self.dim();
        (0..n).flat_map(|j| (0..n).map(move |i| (i, j))).map(|(i, j)| self.0[(i, j)]).collect()
    }
    fn from_coords(dim: usize, v: &[C64]) -> Self {
        ComplexMatrix::from_fn(dim, |i, j| v[j * dim + i])
    }
}

impl Operand for DiagonalMatrix {
    fn scalar(dim: usize, c: C64) -> Self {
        DiagonalMatrix(vec![c; dim])
    }
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn add(&self, other: &Self) -> Self {
        DiagonalMatrix(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
    fn sub(&self, other: &Self) -> Self {
        DiagonalMatrix(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
    fn mul(&self, other: &Self) -> Self {
        DiagonalMatrix(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }
    fn scale(&self, c: C64) -> Self {
        DiagonalMatrix(self.0.iter().map(|a| c * a).collect())
    }
    fn inverse(&self) -> Result<Self> {
        let dmax = self.0.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let dmin = self.0.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        let condition = if dmin > 0.0 { dmax / dmin } else { f64::INFINITY };
        if !(condition <= Tolerances::DEFAULT.max_condition) {
            return Err(Error::Singular { condition });
        }
        Ok(DiagonalMatrix(self.0.iter().map(|z| z.inv()).collect()))
    }
    fn adjoint(&self) -> Self {
        DiagonalMatrix(self.0.iter().map(|z| z.conj()).collect())
    }
    fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
    fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.is_finite())
    }
    fn half_plane_margin(&self) -> f64 {
        self.0.iter().map(|z| z.im).fold(f64::INFINITY, f64::min)
    }
    fn apply(map: &dyn MatrixCauchyMap, x: &Self) -> Result<Self> {
        map.evaluate_diagonal(&x.0).map(DiagonalMatrix)
    }
    fn coords(&self) -> Vec<C64> {
        self.0.clone()
    }
    fn from_coords(_dim: usize, v: &[C64]) -> Self {
        DiagonalMatrix(v.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn inverse_of_identity_and_diagonal() {
        let id = ComplexMatrix::identity(2);
        assert_eq!(id.inverse().unwrap(), id);
        let d = ComplexMatrix::from_diagonal(&[c(2.0, 0.0), c(0.0, 4.0)]);
        let inv = d.inverse().unwrap().diagonal();
        assert!((inv[0] - c(0.5, 0.0)).norm() < 1e-15);
        assert!((inv[1] - c(0.0, -0.25)).norm() < 1e-15);
    }

    #[test]
    fn singular_matrix_reports_condition() {
        let a = ComplexMatrix::from_rows(&[vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(2.0, 0.0), c(4.0, 0.0)]]).unwrap();
        match a.inverse() {
            Err(Error::Singular { condition }) => assert!(condition > 1e14),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn half_plane_examples() {
        assert!(ComplexMatrix::scalar(2, c(0.0, 3.0)).in_upper_half_plane());
        assert!(!ComplexMatrix::scalar(2, c(0.0, -1.0)).in_upper_half_plane());
        assert!(!ComplexMatrix::from_diagonal(&[c(1.0, 2.0), c(1.0, -1e-3)]).in_upper_half_plane());
    }

    #[test]
    fn trace_examples() {
        assert_eq!(ComplexMatrix::identity(3).normalized_trace(), c(1.0, 0.0));
        assert_eq!(ComplexMatrix::from_diagonal(&[c(2.0, 0.0), c(4.0, 0.0)]).normalized_trace(), c(3.0, 0.0));
    }

    #[test]
    fn eigenvalue_examples() {
        let d = ComplexMatrix::from_diagonal(&[c(1.0, 0.0), c(5.0, 0.0), c(3.0, 0.0)]);
        let ev = d.hermitian_eigenvalues().unwrap();
        for (a, b) in ev.iter().zip([5.0, 3.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        // v = (1, 2i, sqrt(2)) has |v|^2 = 7
        let v = [c(1.0, 0.0), c(0.0, 2.0), c(2f64.sqrt(), 0.0)];
        let r1 = ComplexMatrix::from_fn(3, |i, j| v[i] * v[j].conj());
        let ev = r1.hermitian_eigenvalues().unwrap();
        assert!((ev[0] - 7.0).abs() < 1e-12 && ev[1].abs() < 1e-12 && ev[2].abs() < 1e-12);
    }

    #[test]
    fn non_hermitian_rejected() {
        let a = ComplexMatrix::from_rows(&[vec![c(1.0, 0.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]]).unwrap();
        assert!(matches!(a.hermitian_eigenvalues(), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn diagonal_operand_half_planes() {
        let up = DiagonalMatrix(vec![c(1.0, 1.0), c(-2.0, 0.5)]);
        assert_eq!(up.half_plane(), HalfPlane::Upper);
        assert_eq!(up.adjoint().half_plane(), HalfPlane::Lower);
        assert_eq!(DiagonalMatrix(vec![c(1.0, 1.0), c(1.0, -1.0)]).half_plane(), HalfPlane::Neither);
    }
}
