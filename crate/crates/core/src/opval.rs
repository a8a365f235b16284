//! Operator-valued Cauchy transforms over M_m(C): the closed forms for a
//! scalar variable placed on one coordinate, for the diagonal correlation
//! operator Q, and for one circular block X̂_{k,l}; plus the r- and
//! h-transforms and the reflection rule below the real axis.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, HalfPlane, Operand, C64};
use crate::scalar::{cauchy_mp_scaled, cauchy_semicircle_ext, ScalarMeasure};

/// Runtime representation of G_X(B) = E[(B − X)⁻¹].
pub trait MatrixCauchyMap: Send + Sync {
    fn dim(&self) -> usize;

    /// Diagonal arguments produce diagonal values.
    fn diagonal_preserving(&self) -> bool;

    /// The map is a closed form, valid at any invertible argument (both
    /// half-planes and mixed-sign diagonals), so reflection is not needed.
    fn closed_form(&self) -> bool {
        false
    }

    fn evaluate(&self, b: &ComplexMatrix) -> Result<ComplexMatrix>;

    fn evaluate_diagonal(&self, d: &[C64]) -> Result<Vec<C64>> {
        if !self.diagonal_preserving() {
            return Err(Error::InvalidArgument("map does not preserve diagonal matrices".into()));
        }
        Ok(self.evaluate(&ComplexMatrix::from_diagonal(d))?.diagonal())
    }
}

pub type SharedMap = Arc<dyn MatrixCauchyMap>;

fn check_dim(map: &dyn MatrixCauchyMap, got: usize) -> Result<()> {
    if map.dim() != got {
        return Err(Error::Dimension { expected: map.dim(), got });
    }
    Ok(())
}

/// G(B*)* for B in the lower half-plane; direct evaluation in the upper one.
pub fn extend_reflect<O: Operand>(g: &dyn MatrixCauchyMap, b: &O) -> Result<O> {
    match b.half_plane() {
        HalfPlane::Upper => O::apply(g, b),
        HalfPlane::Lower => Ok(O::apply(g, &b.adjoint())?.adjoint()),
        HalfPlane::Neither => {
            Err(Error::NeitherHalfPlane { upper: b.half_plane_margin(), lower: b.adjoint().half_plane_margin() })
        }
    }
}

/// Evaluates G at any admissible argument: closed forms directly, others by reflection.
pub fn evaluate_extended<O: Operand>(g: &dyn MatrixCauchyMap, b: &O) -> Result<O> {
    if g.closed_form() {
        O::apply(g, b)
    } else {
        extend_reflect(g, b)
    }
}

/// r(B) = G(B)⁻¹ − B.
pub fn r_transform<O: Operand>(g: &dyn MatrixCauchyMap, b: &O) -> Result<O> {
    Ok(evaluate_extended(g, b)?.inverse()?.sub(b))
}

/// h(B) = B⁻¹ − G(B⁻¹)⁻¹.
pub fn h_transform<O: Operand>(g: &dyn MatrixCauchyMap, b: &O) -> Result<O> {
    let binv = b.inverse()?;
    let gv = evaluate_extended(g, &binv)?;
    Ok(binv.sub(&gv.inverse()?))
}

/// The zero variable: G(B) = B⁻¹.
#[derive(Debug, Clone)]
pub struct ZeroVariable {
    pub dim: usize,
}

impl MatrixCauchyMap for ZeroVariable {
    fn dim(&self) -> usize {
        self.dim
    }
    fn diagonal_preserving(&self) -> bool {
        true
    }
    fn closed_form(&self) -> bool {
        true
    }
    fn evaluate(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_dim(self, b.dim())?;
        b.inverse()
    }
    fn evaluate_diagonal(&self, d: &[C64]) -> Result<Vec<C64>> {
        check_dim(self, d.len())?;
        Ok(crate::matrix::DiagonalMatrix(d.to_vec()).inverse()?.0)
    }
}

/// A deterministic matrix A: G(B) = (B − A)⁻¹.
#[derive(Debug, Clone)]
pub struct Deterministic {
    a: ComplexMatrix,
    diagonal: bool,
}

impl Deterministic {
    pub fn new(a: ComplexMatrix) -> Self {
        let diagonal = a.max_offdiag() == 0.0;
        Deterministic { a, diagonal }
    }
}

impl MatrixCauchyMap for Deterministic {
    fn dim(&self) -> usize {
        self.a.dim()
    }
    fn diagonal_preserving(&self) -> bool {
        self.diagonal
    }
    fn closed_form(&self) -> bool {
        true
    }
    fn evaluate(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_dim(self, b.dim())?;
        b.sub(&self.a).inverse()
    }
    fn evaluate_diagonal(&self, d: &[C64]) -> Result<Vec<C64>> {
        check_dim(self, d.len())?;
        if !self.diagonal {
            return Err(Error::InvalidArgument("map does not preserve diagonal matrices".into()));
        }
        let shifted: Vec<C64> = d.iter().zip(self.a.diagonal()).map(|(x, a)| x - a).collect();
        Ok(crate::matrix::DiagonalMatrix(shifted).inverse()?.0)
    }
}

/// E[(B − r·E_kk)⁻¹] for a scalar variable r with law `mu`.
///
/// By Sherman–Morrison this is B⁻¹ + g⁻²(G_μ(1/g) − g)·B⁻¹E_kkB⁻¹ with g = [B⁻¹]_kk.
pub fn cauchy_r_times_unit(mu: &ScalarMeasure, k: usize, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let m = b.dim();
    if k >= m {
        return Err(Error::InvalidArgument(format!("coordinate {k} out of range for dimension {m}")));
    }
    let binv = b.inverse()?;
    let g = binv.get(k, k);
    if g.norm() <= f64::EPSILON * binv.max_abs() || g.norm() == 0.0 {
        return Err(Error::DegeneratePoint { k });
    }
    let coef = (mu.cauchy_ext(g.inv()) - g) / (g * g);
    Ok(ComplexMatrix::from_fn(m, |i, j| binv.get(i, j) + coef * binv.get(i, k) * binv.get(k, j)))
}

/// The variable r·E_kk as a map.
#[derive(Debug, Clone)]
pub struct UnitCoordinate {
    pub measure: ScalarMeasure,
    pub k: usize,
    pub dim: usize,
}

impl MatrixCauchyMap for UnitCoordinate {
    fn dim(&self) -> usize {
        self.dim
    }
    fn diagonal_preserving(&self) -> bool {
        true
    }
    fn closed_form(&self) -> bool {
        true
    }
    fn evaluate(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_dim(self, b.dim())?;
        cauchy_r_times_unit(&self.measure, self.k, b)
    }
    fn evaluate_diagonal(&self, d: &[C64]) -> Result<Vec<C64>> {
        check_dim(self, d.len())?;
        let mut out = crate::matrix::DiagonalMatrix(d.to_vec()).inverse()?.0;
        out[self.k] = self.measure.cauchy_ext(d[self.k]);
        Ok(out)
    }
}

/// diag(G_{r₁²}(d₁), …, G_{r_n²}(d_n), G_{t₁²}(d_{n+1}), …, G_{t_n²}(d_{2n})).
///
/// Off the upper half-plane the scalar transforms are continued analytically,
/// which coincides with the reflection rule.
pub fn cauchy_q_diagonal(r_measures: &[ScalarMeasure], t_measures: &[ScalarMeasure], d: &[C64]) -> Result<Vec<C64>> {
    let n = r_measures.len();
    if t_measures.len() != n {
        return Err(Error::Dimension { expected: n, got: t_measures.len() });
    }
    if d.len() != 2 * n {
        return Err(Error::Dimension { expected: 2 * n, got: d.len() });
    }
    Ok(r_measures.iter().chain(t_measures).zip(d).map(|(mu, &z)| mu.cauchy_ext(z)).collect())
}

/// Q = diag(r₁², …, r_n², t₁², …, t_n²) with free entries.
#[derive(Debug, Clone)]
pub struct CorrelationDiagonal {
    pub r_measures: Vec<ScalarMeasure>,
    pub t_measures: Vec<ScalarMeasure>,
}

impl MatrixCauchyMap for CorrelationDiagonal {
    fn dim(&self) -> usize {
        2 * self.r_measures.len()
    }
    fn diagonal_preserving(&self) -> bool {
        true
    }
    fn closed_form(&self) -> bool {
        true
    }
    fn evaluate(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_dim(self, b.dim())?;
        let offdiag = b.max_offdiag();
        if offdiag > 0.0 {
            return Err(Error::NotDiagonal { offdiag });
        }
        Ok(ComplexMatrix::from_diagonal(&self.evaluate_diagonal(&b.diagonal())?))
    }
    fn evaluate_diagonal(&self, d: &[C64]) -> Result<Vec<C64>> {
        cauchy_q_diagonal(&self.r_measures, &self.t_measures, d)
    }
}

/// One circular block √v·(D·P) ⊗ x of X̂, in hermitized form.
///
/// `permutation[i]` is the column holding the one in row i of P, so
/// M = D·P has entries M[i][permutation[i]] = diagonal[i].
#[derive(Debug, Clone, PartialEq)]
pub struct CircularBlock {
    pub variance: f64,
    pub diagonal: Vec<f64>,
    pub permutation: Vec<usize>,
    inverse_permutation: Vec<usize>,
}

impl CircularBlock {
    pub fn new(variance: f64, diagonal: Vec<f64>, permutation: Vec<usize>) -> Result<Self> {
        let n = diagonal.len();
        if n == 0 {
            return Err(Error::InvalidModel("block diagonal must be nonempty".into()));
        }
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::InvalidModel(format!("block variance {variance} must be finite and nonnegative")));
        }
        if diagonal.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(Error::InvalidModel("block diagonal entries must be finite and nonnegative".into()));
        }
        if permutation.len() != n {
            return Err(Error::InvalidModel(format!("permutation has length {}, expected {n}", permutation.len())));
        }
        let mut inverse_permutation = vec![usize::MAX; n];
        for (i, &p) in permutation.iter().enumerate() {
            if p >= n || inverse_permutation[p] != usize::MAX {
                return Err(Error::InvalidModel(format!("{permutation:?} is not a permutation of 0..{n}")));
            }
            inverse_permutation[p] = i;
        }
        Ok(CircularBlock { variance, diagonal, permutation, inverse_permutation })
    }

    pub fn n(&self) -> usize {
        self.diagonal.len()
    }

    pub fn is_zero(&self) -> bool {
        self.variance == 0.0 || self.diagonal.iter().all(|d| *d == 0.0)
    }

    /// M = D·P as a dense real matrix.
    pub fn m_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][self.permutation[i]] = self.diagonal[i];
        }
        m
    }

    /// Same block with the variance pushed into D.
    pub fn with_unit_variance(&self) -> Self {
        let s = self.variance.sqrt();
        CircularBlock::new(1.0, self.diagonal.iter().map(|d| d * s).collect(), self.permutation.clone()).unwrap()
    }
}

/// Diagonal of G_{X̂_{k,l}}(J) for diagonal J = diag(J₁, J₂).
///
/// With s_i = v·|d_i|², entry i of the upper block is J₂[π(i)]/s_i·G(J₁[i]J₂[π(i)]/s_i)
/// and entry π(i) of the lower block is J₁[i]/s_i·G(J₁[i]J₂[π(i)]/s_i), G the
/// Marchenko–Pastur transform. Rows with s_i = 0 give 1/J.
pub fn cauchy_xhat_kl(block: &CircularBlock, j: &[C64]) -> Result<Vec<C64>> {
    let n = block.n();
    if j.len() != 2 * n {
        return Err(Error::Dimension { expected: 2 * n, got: j.len() });
    }
    let mut out = vec![C64::new(0.0, 0.0); 2 * n];
    for i in 0..n {
        let p = block.permutation[i];
        let (j1, j2) = (j[i], j[n + p]);
        let s = block.variance * block.diagonal[i] * block.diagonal[i];
        if s == 0.0 {
            out[i] = j1.inv();
            out[n + p] = j2.inv();
        } else {
            let g = cauchy_mp_scaled(j1 * j2, s);
            out[i] = j2 * g;
            out[n + p] = j1 * g;
        }
    }
    if out.iter().any(|z| !z.is_finite()) {
        return Err(Error::Domain { arg: j[0], what: "circular block transform is singular at this argument" });
    }
    debug_assert!(block.inverse_permutation.len() == n);
    Ok(out)
}

impl MatrixCauchyMap for CircularBlock {
    fn dim(&self) -> usize {
        2 * self.n()
    }
    fn diagonal_preserving(&self) -> bool {
        true
    }
    fn closed_form(&self) -> bool {
        true
    }
    fn evaluate(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_dim(self, b.dim())?;
        let offdiag = b.max_offdiag();
        if offdiag > 0.0 {
            return Err(Error::NotDiagonal { offdiag });
        }
        Ok(ComplexMatrix::from_diagonal(&cauchy_xhat_kl(self, &b.diagonal())?))
    }
    fn evaluate_diagonal(&self, d: &[C64]) -> Result<Vec<C64>> {
        cauchy_xhat_kl(self, d)
    }
}

/// Scalar laws acting on 1×1 matrices.
#[derive(Debug, Clone)]
pub enum ScalarLaw {
    Measure(ScalarMeasure),
    Semicircle { variance: f64 },
    MarchenkoPastur { variance: f64 },
}

impl ScalarLaw {
    pub fn cauchy(&self, z: C64) -> C64 {
        match self {
            ScalarLaw::Measure(mu) => mu.cauchy_ext(z),
            ScalarLaw::Semicircle { variance } => cauchy_semicircle_ext(z, *variance),
            ScalarLaw::MarchenkoPastur { variance } => cauchy_mp_scaled(z, *variance),
        }
    }
}

impl MatrixCauchyMap for ScalarLaw {
    fn dim(&self) -> usize {
        1
    }
    fn diagonal_preserving(&self) -> bool {
        true
    }
    fn closed_form(&self) -> bool {
        true
    }
    fn evaluate(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_dim(self, b.dim())?;
        Ok(ComplexMatrix::scalar(1, self.cauchy(b.get(0, 0))))
    }
    fn evaluate_diagonal(&self, d: &[C64]) -> Result<Vec<C64>> {
        check_dim(self, d.len())?;
        Ok(vec![self.cauchy(d[0])])
    }
}
