//! Monte Carlo ground truth: finite-size channel draws, empirical spectra,
//! mutual information, and the small-γ / large-γ checks of the phase model.

use std::io::Write;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, C64};
use crate::pipeline::ChannelModel;
use crate::scalar::ScalarMeasure;

#[derive(Debug, Clone)]
pub struct McConfig {
    pub block_size: usize,
    pub trials: usize,
    pub seed: u64,
    pub model: ChannelModel,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 {
            return Err(Error::InvalidArgument("block size must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be positive".into()));
        }
        Ok(())
    }
}

/// Independent generator for one trial: the master seed with the trial index as stream.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Circularly symmetric complex Gaussian with E|z|² = variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

pub fn ginibre<R: Rng + ?Sized>(n: usize, variance: f64, rng: &mut R) -> Mat<C64> {
    let mut m = Mat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            m[(i, j)] = complex_gaussian(rng, variance);
        }
    }
    m
}

/// Haar unitary from the QR factorization of a Ginibre matrix, with the
/// phases of diag(R) moved into Q.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat<C64> {
    let z = ginibre(n, 1.0, rng);
    let qr = z.qr();
    let mut q = qr.compute_Q();
    let r = qr.R();
    for j in 0..n {
        let d = r[(j, j)];
        let norm = d.norm();
        let phase = if norm > 0.0 { d / norm } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

fn mul(a: &Mat<C64>, b: &Mat<C64>) -> Mat<C64> {
    let mut out = Mat::zeros(a.nrows(), b.ncols());
    matmul(out.as_mut(), Accum::Replace, a.as_ref(), b.as_ref(), C64::new(1.0, 0.0), Par::Seq);
    out
}

fn mul_adjoint(a: &Mat<C64>, b: &Mat<C64>) -> Mat<C64> {
    let mut out = Mat::zeros(a.nrows(), b.nrows());
    matmul(out.as_mut(), Accum::Replace, a.as_ref(), b.adjoint(), C64::new(1.0, 0.0), Par::Seq);
    out
}

/// An N×N correlation root r = U·diag(√λ)·U*, λ drawn from the law of r².
/// Point masses give a multiple of the identity, kept as a scalar.
#[derive(Debug, Clone)]
pub enum CorrelationRoot {
    Scalar(f64),
    Dense(Mat<C64>),
}

impl CorrelationRoot {
    pub fn sample<R: Rng + ?Sized>(mu: &ScalarMeasure, n: usize, rng: &mut R) -> Self {
        if mu.density().is_none() && mu.atoms().len() == 1 {
            return CorrelationRoot::Scalar(mu.atoms()[0].0.max(0.0).sqrt());
        }
        let u = haar_unitary(n, rng);
        let mut us = u.clone();
        for i in 0..n {
            let s = mu.sample(rng).max(0.0).sqrt();
            for row in 0..n {
                us[(row, i)] *= s;
            }
        }
        CorrelationRoot::Dense(mul_adjoint(&us, &u))
    }

    fn left(&self, x: &Mat<C64>) -> Mat<C64> {
        match self {
            CorrelationRoot::Scalar(s) => x * faer::Scale(C64::new(*s, 0.0)),
            CorrelationRoot::Dense(r) => mul(r, x),
        }
    }

    fn right(&self, x: &Mat<C64>) -> Mat<C64> {
        match self {
            CorrelationRoot::Scalar(s) => x * faer::Scale(C64::new(*s, 0.0)),
            CorrelationRoot::Dense(t) => mul(x, t),
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, CorrelationRoot::Scalar(s) if *s == 0.0)
    }
}

/// One draw of H = R·X·T restricted to the n_R·N receive rows and n_T·N
/// transmit columns (the padded rows and columns vanish).
#[derive(Debug, Clone)]
pub struct ChannelSample {
    pub h: Mat<C64>,
}

impl ChannelSample {
    /// Eigenvalues of HH* in non-decreasing order.
    pub fn hhstar_eigenvalues(&self) -> Result<Vec<f64>> {
        let g = mul_adjoint(&self.h, &self.h);
        let ev = g.self_adjoint_eigenvalues(Side::Lower).map_err(|_| Error::Eigen)?;
        Ok(ev.into_iter().map(|x| x.max(0.0)).collect())
    }
}

/// Draw for one trial. X blocks are circular with entry variance v/N so that
/// the spectrum of HH* stays O(1).
pub fn sample_channel_trial(cfg: &McConfig, trial: usize) -> Result<ChannelSample> {
    cfg.validate()?;
    let mut rng = trial_rng(cfg.seed, trial);
    let model = &cfg.model;
    let (nb, n_r, n_t) = (cfg.block_size, model.n_r(), model.n_t());
    let r: Vec<CorrelationRoot> =
        model.r_measures()[..n_r].iter().map(|mu| CorrelationRoot::sample(mu, nb, &mut rng)).collect();
    let t: Vec<CorrelationRoot> =
        model.t_measures()[..n_t].iter().map(|mu| CorrelationRoot::sample(mu, nb, &mut rng)).collect();

    let mut x: Vec<Vec<Option<Mat<C64>>>> = vec![vec![None; n_t]; n_r];
    for block in model.scaled_blocks() {
        if block.is_zero() {
            continue;
        }
        let g = ginibre(nb, 1.0 / nb as f64, &mut rng);
        for i in 0..n_r {
            let l = block.permutation[i];
            let c = block.variance.sqrt() * block.diagonal[i];
            if c == 0.0 || l >= n_t {
                continue;
            }
            let scaled = &g * faer::Scale(C64::new(c, 0.0));
            x[i][l] = Some(match x[i][l].take() {
                Some(acc) => acc + scaled,
                None => scaled,
            });
        }
    }

    let mut h = Mat::zeros(n_r * nb, n_t * nb);
    for i in 0..n_r {
        for l in 0..n_t {
            let Some(xil) = &x[i][l] else { continue };
            if r[i].is_zero() || t[l].is_zero() {
                continue;
            }
            let blk = t[l].right(&r[i].left(xil));
            h.as_mut().submatrix_mut(i * nb, l * nb, nb, nb).copy_from(&blk);
        }
    }
    Ok(ChannelSample { h })
}

pub fn sample_channel(cfg: &McConfig) -> Result<Vec<ChannelSample>> {
    cfg.validate()?;
    (0..cfg.trials).into_par_iter().map(|k| sample_channel_trial(cfg, k)).collect()
}

/// Eigenvalues of HH* per trial, in trial order.
pub fn sample_spectra(cfg: &McConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    (0..cfg.trials).into_par_iter().map(|k| sample_channel_trial(cfg, k)?.hhstar_eigenvalues()).collect()
}

/// Pooled eigenvalues with the exact empirical CDF.
#[derive(Debug, Clone)]
pub struct EmpiricalSpectrum {
    sorted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
    pub frequency: f64,
}

impl EmpiricalSpectrum {
    pub fn new(spectra: &[Vec<f64>]) -> Result<Self> {
        let mut sorted: Vec<f64> = spectra.iter().flatten().copied().collect();
        if sorted.is_empty() {
            return Err(Error::InvalidArgument("empty sample list".into()));
        }
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalSpectrum { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of eigenvalues ≤ x.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|v| *v <= x) as f64 / self.sorted.len() as f64
    }

    /// sup_x |F_emp(x) − F(x)|, evaluated on both sides of every jump.
    pub fn ks_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        let n = self.sorted.len() as f64;
        let mut d = 0.0f64;
        let mut i = 0;
        while i < self.sorted.len() {
            let x = self.sorted[i];
            let mut j = i;
            while j < self.sorted.len() && self.sorted[j] == x {
                j += 1;
            }
            let f = cdf(x);
            d = d.max((f - i as f64 / n).abs()).max((f - j as f64 / n).abs());
            i = j;
        }
        d
    }

    /// Equal-width histogram on [0, max eigenvalue].
    pub fn histogram(&self, bins: usize) -> Result<Vec<HistogramBin>> {
        if bins == 0 {
            return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
        }
        let lo = self.sorted[0].min(0.0);
        let hi = self.sorted[self.sorted.len() - 1].max(lo + f64::MIN_POSITIVE);
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &x in &self.sorted {
            let k = (((x - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        let total = self.sorted.len() as f64;
        Ok(counts
            .into_iter()
            .enumerate()
            .map(|(k, count)| HistogramBin {
                left: lo + k as f64 * width,
                right: lo + (k + 1) as f64 * width,
                count,
                frequency: count as f64 / total,
            })
            .collect())
    }
}

pub fn write_histogram_csv(bins: &[HistogramBin], w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "bin_left,bin_right,count,frequency")?;
    for b in bins {
        writeln!(w, "{:.10e},{:.10e},{},{:.10e}", b.left, b.right, b.count, b.frequency)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl McEstimate {
    pub fn from_samples(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let std_error = if x.len() > 1 {
            (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            f64::NAN
        };
        McEstimate { mean, std_error }
    }
}

/// Mean over trials of (1/dim) Σ log(1 + P·λ), dim the number of receive
/// coordinates, with its standard error.
pub fn mc_mutual_info(spectra: &[Vec<f64>], p: f64) -> Result<McEstimate> {
    if !(p > 0.0) {
        return Err(Error::InvalidArgument(format!("power must be positive, got {p}")));
    }
    if spectra.is_empty() {
        return Err(Error::InvalidArgument("empty sample list".into()));
    }
    let per_trial: Vec<f64> =
        spectra.iter().map(|ev| ev.iter().map(|&l| (p * l.max(0.0)).ln_1p()).sum::<f64>() / ev.len() as f64).collect();
    if let Some(bad) = per_trial.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite log-determinant {bad}")));
    }
    Ok(McEstimate::from_samples(&per_trial))
}

/// Entries exp(i·γ·A[k,l]).
pub fn entrywise_exp(a: &ComplexMatrix, gamma: f64) -> ComplexMatrix {
    let i_gamma = C64::new(0.0, gamma);
    ComplexMatrix::from_fn(a.dim(), |k, l| (i_gamma * a.get(k, l)).exp())
}

/// Singular values in non-increasing order, as square roots of the eigenvalues of A*A.
pub fn singular_values(a: &ComplexMatrix) -> Result<Vec<f64>> {
    let m = a.as_faer();
    let mut g = Mat::zeros(m.ncols(), m.ncols());
    matmul(g.as_mut(), Accum::Replace, m.adjoint(), m.as_ref(), C64::new(1.0, 0.0), Par::Seq);
    let mut ev = g.self_adjoint_eigenvalues(Side::Lower).map_err(|_| Error::Eigen)?;
    ev.reverse();
    Ok(ev.into_iter().map(|x| x.max(0.0).sqrt()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub quantity: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

impl BoundReport {
    fn new(quantity: &str, lhs: f64, rhs: f64) -> Self {
        let holds = lhs <= rhs;
        if !holds {
            log::warn!("bound={quantity} lhs={lhs:e} rhs={rhs:e} event=violation");
        }
        BoundReport { quantity: quantity.into(), lhs, rhs, slack: rhs - lhs, holds }
    }

    pub fn write_csv(reports: &[BoundReport], w: &mut dyn Write) -> std::io::Result<()> {
        writeln!(w, "quantity,lhs,rhs,slack")?;
        for r in reports {
            writeln!(w, "{},{:.10e},{:.10e},{:.10e}", r.quantity, r.lhs, r.rhs, r.slack)?;
        }
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(())
}

/// (1/N) Σ_{k≥2} |σ_k(X/γ) − σ_k(A)| ≤ γ·e^{‖A‖} + 2‖A‖/N for X = exp∘(iγA).
pub fn gamma_bulk_bound_check(a: &ComplexMatrix, gamma: f64) -> Result<BoundReport> {
    check_gamma(gamma)?;
    let n = a.dim();
    let x = entrywise_exp(a, gamma).scale(C64::new(1.0 / gamma, 0.0));
    let sx = singular_values(&x)?;
    let sa = singular_values(a)?;
    let norm = sa[0];
    let lhs = sx.iter().zip(&sa).skip(1).fold(0.0, |acc, (p, q)| acc + (p - q).abs()) / n as f64;
    let rhs = gamma * norm.exp() + 2.0 * norm / n as f64;
    Ok(BoundReport::new("bulk_singular_values", lhs, rhs))
}

/// |σ₁(X/γ)/(N/γ) − 1| ≤ γ·(γ·e^{‖A‖} + ‖A‖).
pub fn gamma_top_singular_check(a: &ComplexMatrix, gamma: f64) -> Result<BoundReport> {
    check_gamma(gamma)?;
    let n = a.dim() as f64;
    let x = entrywise_exp(a, gamma).scale(C64::new(1.0 / gamma, 0.0));
    let s1 = singular_values(&x)?[0];
    let norm = singular_values(a)?[0];
    let lhs = (s1 / (n / gamma) - 1.0).abs();
    let rhs = gamma * (gamma * norm.exp() + norm);
    Ok(BoundReport::new("top_singular_value", lhs, rhs))
}

fn real_square(m: &[Vec<f64>], what: &str) -> Result<usize> {
    let n = m.len();
    if n == 0 || m.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument(format!("{what} must be a nonempty square matrix")));
    }
    Ok(n)
}

fn require_full_rank(m: &[Vec<f64>], what: &str) -> Result<()> {
    let c = ComplexMatrix::from_fn(m.len(), |i, j| C64::new(m[i][j], 0.0));
    c.inverse().map(|_| ()).map_err(|_| Error::InvalidArgument(format!("{what} must have full rank")))
}

/// Π_{i,j} exp(−(γ²/2)·(Σ_{k,l} n_{kl} R_{ki} T_{jl})²): the joint moment
/// E Π A_{kl}^{n_{kl}} of A = exp∘(iγ·R·X·T) for X with standard real Gaussian entries.
pub fn gamma_infinity_closed_form(r: &[Vec<f64>], t: &[Vec<f64>], exponents: &[Vec<i64>], gamma: f64) -> Result<f64> {
    let n = real_square(r, "R")?;
    if real_square(t, "T")? != n || exponents.len() != n || exponents.iter().any(|e| e.len() != n) {
        return Err(Error::InvalidArgument("R, T and the exponents must share one dimension".into()));
    }
    require_full_rank(r, "R")?;
    require_full_rank(t, "T")?;
    let mut log = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut c = 0.0;
            for k in 0..n {
                for l in 0..n {
                    c += exponents[k][l] as f64 * r[k][i] * t[j][l];
                }
            }
            log -= 0.5 * gamma * gamma * c * c;
        }
    }
    Ok(log.exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentComparison {
    pub closed_form: f64,
    pub mc_mean: C64,
    /// Standard errors of the real and imaginary parts.
    pub mc_std_error: (f64, f64),
}

impl MomentComparison {
    /// Both parts within `k` standard errors of the (real) closed form.
    pub fn agrees_within(&self, k: f64) -> bool {
        (self.mc_mean.re - self.closed_form).abs() <= k * self.mc_std_error.0
            && self.mc_mean.im.abs() <= k * self.mc_std_error.1
    }
}

/// Closed form next to a Monte Carlo estimate from `samples` draws of X.
/// Negative exponents act as conjugates, since |A_{kl}| = 1.
pub fn gamma_infinity_moment<R: Rng + ?Sized>(
    r: &[Vec<f64>],
    t: &[Vec<f64>],
    exponents: &[Vec<i64>],
    gamma: f64,
    samples: usize,
    rng: &mut R,
) -> Result<MomentComparison> {
    let closed_form = gamma_infinity_closed_form(r, t, exponents, gamma)?;
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let n = r.len();
    let mut re = Vec::with_capacity(samples);
    let mut im = Vec::with_capacity(samples);
    let mut x = vec![vec![0.0; n]; n];
    for _ in 0..samples {
        for row in x.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
        }
        let mut phase = 0.0;
        for k in 0..n {
            for l in 0..n {
                if exponents[k][l] == 0 {
                    continue;
                }
                let mut h = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        h += r[k][i] * x[i][j] * t[j][l];
                    }
                }
                phase += exponents[k][l] as f64 * gamma * h;
            }
        }
        re.push(phase.cos());
        im.push(phase.sin());
    }
    let (a, b) = (McEstimate::from_samples(&re), McEstimate::from_samples(&im));
    Ok(MomentComparison { closed_form, mc_mean: C64::new(a.mean, b.mean), mc_std_error: (a.std_error, b.std_error) })
}
