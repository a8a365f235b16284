#![allow(dead_code)]

use faer::{Mat, Side};
use ovkron_core::matrix::{ComplexMatrix, C64};
use ovkron_core::mc::{ginibre, McEstimate};
use ovkron_core::opval::CircularBlock;
use ovkron_core::pipeline::{build_model, BlockSpec, ChannelModel, CovarianceSpec, ModelSpec};
use ovkron_core::scalar::{discretize_uniform01, ScalarMeasure};
use rand::Rng;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn atoms(a: &[(f64, f64)]) -> ScalarMeasure {
    ScalarMeasure::from_atoms(a.to_vec()).unwrap()
}

pub fn trivial_model() -> ChannelModel {
    build_model(&ModelSpec {
        n_r: 1,
        n_t: 1,
        gamma: 1.0,
        r_measures: vec![ScalarMeasure::dirac(1.0)],
        t_measures: vec![ScalarMeasure::dirac(1.0)],
        covariance: CovarianceSpec::EntryVariances(vec![vec![1.0]]),
    })
    .unwrap()
}

/// X = [[x1, x2], [x2, x1]] with r², t² uniform on [0, 1] (discretized).
pub fn symmetric_model(uniform_atoms: usize) -> ChannelModel {
    let u = discretize_uniform01(uniform_atoms).unwrap();
    build_model(&ModelSpec {
        n_r: 2,
        n_t: 2,
        gamma: 1.0,
        r_measures: vec![u.clone(); 2],
        t_measures: vec![u; 2],
        covariance: CovarianceSpec::Blocks(vec![
            BlockSpec { variance: 1.0, diagonal: vec![1.0, 1.0], permutation: vec![0, 1] },
            BlockSpec { variance: 1.0, diagonal: vec![1.0, 1.0], permutation: vec![1, 0] },
        ]),
    })
    .unwrap()
}

pub const K_ENTRIES: [[f64; 2]; 2] = [[3.0 / 8.0, 5.0 / 8.0], [9.0 / 8.0, 15.0 / 8.0]];

/// Law of r² when r takes 1, 1/2, 1/4 with weights 18, 12, 8 (over 38).
pub fn pattern_r2() -> ScalarMeasure {
    atoms(&[(1.0, 18.0 / 38.0), (0.25, 12.0 / 38.0), (1.0 / 16.0, 8.0 / 38.0)])
}

pub fn classical_r2() -> ScalarMeasure {
    atoms(&[(0.5, 0.5), (1.5, 0.5)])
}

pub fn classical_t2() -> ScalarMeasure {
    atoms(&[(0.75, 0.5), (1.25, 0.5)])
}

/// 2×2 model with independent entries of variance K and the given antenna law on every r_k², t_k².
pub fn separable_model(antenna: ScalarMeasure) -> ChannelModel {
    build_model(&ModelSpec {
        n_r: 2,
        n_t: 2,
        gamma: 1.0,
        r_measures: vec![antenna.clone(); 2],
        t_measures: vec![antenna; 2],
        covariance: CovarianceSpec::EntryVariances(K_ENTRIES.iter().map(|r| r.to_vec()).collect()),
    })
    .unwrap()
}

/// Deterministic equivalent for Gram matrices with a block variance profile S:
/// m_k = −1/(z(1 + Σ_l S_kl m̃_l)), m̃_l = −1/(z(1 + Σ_k S_kl m_k)).
/// Returns the mean of −m_k, the transform of HH* under the receive trace.
pub fn variance_profile_cauchy(s: &[Vec<f64>], z: C64) -> C64 {
    let (nr, nt) = (s.len(), s[0].len());
    let mut m = vec![-1.0 / z; nr];
    let mut mt = vec![-1.0 / z; nt];
    for _ in 0..1_000_000 {
        let mn: Vec<C64> =
            (0..nr).map(|k| -1.0 / (z * (1.0 + (0..nt).map(|l| s[k][l] * mt[l]).sum::<C64>()))).collect();
        let mtn: Vec<C64> =
            (0..nt).map(|l| -1.0 / (z * (1.0 + (0..nr).map(|k| s[k][l] * mn[k]).sum::<C64>()))).collect();
        let delta = m.iter().zip(&mn).chain(mt.iter().zip(&mtn)).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        for k in 0..nr {
            m[k] = 0.5 * (m[k] + mn[k]);
        }
        for l in 0..nt {
            mt[l] = 0.5 * (mt[l] + mtn[l]);
        }
        if delta < 1e-15 {
            break;
        }
    }
    -m.iter().sum::<C64>() / nr as f64
}

/// Marchenko–Pastur CDF on [0, 4] via x = 4 sin²θ.
pub fn mp_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 4.0 {
        return 1.0;
    }
    let th = (x.sqrt() / 2.0).asin();
    2.0 / std::f64::consts::PI * (th + th.sin() * th.cos())
}

/// ∫ log(1 + Pξ) dMP(ξ) by composite Simpson in θ, where the integrand is smooth.
pub fn mp_information_quadrature(p: f64) -> f64 {
    let n = 20_000;
    let h = std::f64::consts::FRAC_PI_2 / n as f64;
    let f = |th: f64| 4.0 / std::f64::consts::PI * (4.0 * p * th.sin().powi(2)).ln_1p() * th.cos().powi(2);
    let mut acc = f(0.0) + f(std::f64::consts::FRAC_PI_2);
    for k in 1..n {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    acc * h / 3.0
}

/// Diagonal point of H⁺ with imaginary parts in [lo, hi].
pub fn random_diagonal<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<C64> {
    (0..n).map(|_| c(rng.random_range(-2.0..2.0), rng.random_range(lo..hi))).collect()
}

/// Dense point of H⁺: diagonal imaginary shift plus a small Hermitian and anti-Hermitian perturbation.
pub fn random_dense_upper<R: Rng>(rng: &mut R, n: usize) -> ComplexMatrix {
    let a = ComplexMatrix::from_fn(n, |_, _| c(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)));
    let h = a.add(&a.adjoint()).scale(c(0.5, 0.0));
    let b = ComplexMatrix::from_fn(n, |_, _| c(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)));
    let pos = b.mul(&b.adjoint()).add(&ComplexMatrix::scalar(n, c(rng.random_range(0.3..1.5), 0.0)));
    h.add(&pos.scale(c(0.0, 1.0)))
}

/// Per-entry Monte Carlo estimates from per-trial matrices.
pub struct EntryStats {
    pub dim: usize,
    pub re: Vec<McEstimate>,
    pub im: Vec<McEstimate>,
}

impl EntryStats {
    pub fn new(trials: &[ComplexMatrix]) -> Self {
        let dim = trials[0].dim();
        let mut re = Vec::new();
        let mut im = Vec::new();
        for i in 0..dim {
            for j in 0..dim {
                let r: Vec<f64> = trials.iter().map(|m| m.get(i, j).re).collect();
                let q: Vec<f64> = trials.iter().map(|m| m.get(i, j).im).collect();
                re.push(McEstimate::from_samples(&r));
                im.push(McEstimate::from_samples(&q));
            }
        }
        EntryStats { dim, re, im }
    }

    /// Largest |MC − exact| in units of (3·SE + 1e-10), over all entries and both parts.
    /// The floor covers rounding in entries that are deterministic (SE = 0).
    pub fn worst_ratio(&self, exact: &ComplexMatrix) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let e = exact.get(i, j);
                let k = i * self.dim + j;
                for (est, want) in [(self.re[k], e.re), (self.im[k], e.im)] {
                    worst = worst.max((est.mean - want).abs() / (3.0 * est.std_error + 1e-10));
                }
            }
        }
        worst
    }
}

/// Samples (B − λ_i·E_kk)⁻¹ for λ_i drawn from μ. Their mean is the partial trace of the
/// resolvent of B⊗I − E_kk⊗r for r with eigenvalues λ_i (any eigenbasis gives the same block trace).
pub fn unit_coordinate_samples<R: Rng>(
    mu: &ScalarMeasure,
    k: usize,
    b: &ComplexMatrix,
    n: usize,
    rng: &mut R,
) -> Vec<ComplexMatrix> {
    (0..n)
        .map(|_| {
            let lambda = mu.sample(rng);
            let mut m = b.clone();
            m.set(k, k, m.get(k, k) - lambda);
            m.inverse().unwrap()
        })
        .collect()
}

/// Samples diag((d_k − λ_k)⁻¹) with λ_k drawn from the k-th law. Their mean is the diagonal
/// partial trace of (D − Q)⁻¹ for Q = diag(r_1², …, t_n²), each an N×N matrix with these eigenvalues.
pub fn correlation_samples<R: Rng>(laws: &[ScalarMeasure], d: &[C64], n: usize, rng: &mut R) -> Vec<ComplexMatrix> {
    let per_law: Vec<Vec<C64>> =
        laws.iter().zip(d).map(|(mu, &z)| (0..n).map(|_| 1.0 / (z - mu.sample(rng))).collect()).collect();
    (0..n).map(|i| ComplexMatrix::from_diagonal(&per_law.iter().map(|v| v[i]).collect::<Vec<_>>())).collect()
}

/// Entrywise mean of a set of matrices.
pub fn mean_matrix(ms: &[ComplexMatrix]) -> ComplexMatrix {
    let mut acc = ComplexMatrix::zeros(ms[0].dim());
    for m in ms {
        acc = acc.add(m);
    }
    acc.scale(c(1.0 / ms.len() as f64, 0.0))
}

/// Singular values s_i of a Ginibre matrix x = UΣV* (entry variance 1/N)
/// together with w_i = (V*U)_ii.
pub struct GinibreDraw {
    pub s: Vec<f64>,
    pub w: Vec<C64>,
}

pub fn ginibre_draw<R: Rng>(n: usize, rng: &mut R) -> GinibreDraw {
    let x = ginibre(n, 1.0 / n as f64, rng);
    let mut g = Mat::<C64>::zeros(n, n);
    faer::linalg::matmul::matmul(
        g.as_mut(),
        faer::Accum::Replace,
        x.adjoint(),
        x.as_ref(),
        c(1.0, 0.0),
        faer::Par::Seq,
    );
    let eig = g.self_adjoint_eigen(Side::Lower).unwrap();
    let v = eig.U();
    let s: Vec<f64> = (0..n).map(|i| eig.S().column_vector()[i].re.max(0.0).sqrt()).collect();
    let mut xv = Mat::<C64>::zeros(n, n);
    faer::linalg::matmul::matmul(xv.as_mut(), faer::Accum::Replace, x.as_ref(), v, c(1.0, 0.0), faer::Par::Seq);
    // U = x·V·Σ⁻¹, so (V*U)_ii = v_i*·x·v_i / s_i
    let w = (0..n).map(|i| (0..n).map(|r| v[(r, i)].conj() * xv[(r, i)]).sum::<C64>() / s[i]).collect();
    GinibreDraw { s, w }
}

/// Partial trace of (J⊗I − X̂)⁻¹ for one circular block √v·(M⊗x) hermitized.
///
/// Conjugation by diag(I⊗U, I⊗V) reduces the resolvent to 2n×2n matrices
/// A(i) = (J − √v·s_i·[[0, M], [Mᵀ, 0]])⁻¹. Diagonal blocks trace to the
/// mean of A(i); off-diagonal blocks pick up (V*U)_ii.
pub fn circular_block_resolvent(block: &CircularBlock, j: &[C64], draw: &GinibreDraw) -> ComplexMatrix {
    let nb = block.n();
    let dim = 2 * nb;
    let n = draw.s.len();
    let m = block.m_matrix();
    let sv = block.variance.sqrt();
    let mut acc = ComplexMatrix::zeros(dim);
    for i in 0..n {
        let si = sv * draw.s[i];
        let a = ComplexMatrix::from_fn(dim, |p, q| {
            let mut val = if p == q { j[p] } else { c(0.0, 0.0) };
            if p < nb && q >= nb {
                val -= si * m[p][q - nb];
            }
            if p >= nb && q < nb {
                val -= si * m[q][p - nb];
            }
            val
        })
        .inverse()
        .unwrap();
        let wi = draw.w[i];
        let weighted = ComplexMatrix::from_fn(dim, |p, q| match (p < nb, q < nb) {
            (true, false) => a.get(p, q) * wi,
            (false, true) => a.get(p, q) * wi.conj(),
            _ => a.get(p, q),
        });
        acc = acc.add(&weighted);
    }
    acc.scale(c(1.0 / n as f64, 0.0))
}
