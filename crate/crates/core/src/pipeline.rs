//! The channel pipeline: model construction, the transform of HH* through
//! Q·X̂, spectral density and mutual information.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::config::FixedPointConfig;
use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, DiagonalMatrix, C64};
use crate::opval::{cauchy_xhat_kl, CircularBlock, CorrelationDiagonal, MatrixCauchyMap, SharedMap};
use crate::scalar::{finish_density, mass_near_zero, DensityEstimate, ScalarMeasure};
use crate::subordination::{multiplicative_subordinator_from, SolveStats, SubordinatedSum};

/// One circular block of the covariance decomposition, before γ scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub variance: f64,
    pub diagonal: Vec<f64>,
    /// `permutation[i]` is the transmit index paired with receive index i.
    pub permutation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceSpec {
    /// Explicit diagonal-times-permutation blocks on the padded n×n index set.
    Blocks(Vec<BlockSpec>),
    /// Independent entries: σ²_{kl} for k < n_R, l < n_T.
    EntryVariances(Vec<Vec<f64>>),
    /// Σ² = E(vec H vec H*) over the row-major index k·n_T + l.
    Full(Vec<Vec<f64>>),
}

/// Unvalidated model description.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub n_r: usize,
    pub n_t: usize,
    pub gamma: f64,
    /// Laws of r_k², one per receive antenna.
    pub r_measures: Vec<ScalarMeasure>,
    /// Laws of t_k², one per transmit antenna.
    pub t_measures: Vec<ScalarMeasure>,
    pub covariance: CovarianceSpec,
}

/// Validated operator-valued Kronecker model on the padded dimension n.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    n_r: usize,
    n_t: usize,
    gamma: f64,
    r_measures: Vec<ScalarMeasure>,
    t_measures: Vec<ScalarMeasure>,
    blocks: Vec<CircularBlock>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidModel(msg.into())
}

const PATTERN_ERROR: &str =
    "covariance is not a sum of diagonal-times-permutation blocks D_{k,l}·P_{k,l} (each P_{k,l} must be a permutation matrix)";

/// Splits Σ² into rank-one blocks supported on partial permutations.
fn decompose_full(sigma2: &[Vec<f64>], n_r: usize, n_t: usize, n: usize) -> Result<Vec<BlockSpec>> {
    let m = n_r * n_t;
    if sigma2.len() != m || sigma2.iter().any(|r| r.len() != m) {
        return Err(invalid(format!("full covariance must be {m}x{m}")));
    }
    let scale = sigma2.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    let tol = 1e-10 * scale;
    for a in 0..m {
        if sigma2[a][a] < -tol {
            return Err(invalid("full covariance has a negative diagonal entry"));
        }
        for b in 0..m {
            if (sigma2[a][b] - sigma2[b][a]).abs() > tol {
                return Err(invalid("full covariance is not symmetric"));
            }
        }
    }
    let mut seen = vec![false; m];
    let mut blocks = Vec::new();
    for start in 0..m {
        if seen[start] || sigma2[start][start] <= tol {
            if sigma2[start][start] <= tol && (0..m).any(|b| b != start && sigma2[start][b].abs() > tol) {
                return Err(invalid(PATTERN_ERROR));
            }
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut head = 0;
        while head < comp.len() {
            let a = comp[head];
            head += 1;
            for b in 0..m {
                if !seen[b] && sigma2[a][b].abs() > tol {
                    seen[b] = true;
                    comp.push(b);
                }
            }
        }
        comp.sort_unstable();
        let u: Vec<f64> = comp.iter().map(|&a| sigma2[a][a].max(0.0).sqrt()).collect();
        for (x, &a) in comp.iter().enumerate() {
            for (y, &b) in comp.iter().enumerate() {
                if (sigma2[a][b] - u[x] * u[y]).abs() > 1e-8 * scale {
                    return Err(invalid(PATTERN_ERROR));
                }
            }
        }
        let mut diagonal = vec![0.0; n];
        let mut pairing = vec![usize::MAX; n];
        let mut used_cols = vec![false; n];
        for (x, &a) in comp.iter().enumerate() {
            let (k, l) = (a / n_t, a % n_t);
            if pairing[k] != usize::MAX || used_cols[l] {
                return Err(invalid(PATTERN_ERROR));
            }
            pairing[k] = l;
            used_cols[l] = true;
            diagonal[k] = u[x];
        }
        blocks.push(BlockSpec { variance: 1.0, diagonal, permutation: complete_permutation(pairing, used_cols) });
    }
    Ok(blocks)
}

/// Fills unassigned rows with the unused columns in increasing order.
fn complete_permutation(mut pairing: Vec<usize>, mut used: Vec<bool>) -> Vec<usize> {
    for k in 0..pairing.len() {
        if pairing[k] == usize::MAX {
            let l = used.iter().position(|u| !u).expect("square pairing");
            used[l] = true;
            pairing[k] = l;
        }
    }
    pairing
}

/// The block for one independent entry (k, l): D = E_kk and P pairing k with l.
fn entry_block(variance: f64, k: usize, l: usize, n: usize) -> BlockSpec {
    let mut diagonal = vec![0.0; n];
    diagonal[k] = 1.0;
    let mut pairing = vec![usize::MAX; n];
    let mut used = vec![false; n];
    pairing[k] = l;
    used[l] = true;
    BlockSpec { variance, diagonal, permutation: complete_permutation(pairing, used) }
}

pub fn build_model(spec: &ModelSpec) -> Result<ChannelModel> {
    let (n_r, n_t) = (spec.n_r, spec.n_t);
    if n_r == 0 || n_t == 0 {
        return Err(invalid("n_R and n_T must be positive"));
    }
    if !(spec.gamma > 0.0 && spec.gamma.is_finite()) {
        return Err(invalid(format!("gamma must be positive, got {}", spec.gamma)));
    }
    if spec.r_measures.len() != n_r {
        return Err(invalid(format!("expected {n_r} receive measures, got {}", spec.r_measures.len())));
    }
    if spec.t_measures.len() != n_t {
        return Err(invalid(format!("expected {n_t} transmit measures, got {}", spec.t_measures.len())));
    }
    if let Some(mu) = spec.r_measures.iter().chain(&spec.t_measures).find(|mu| !mu.is_nonnegative()) {
        return Err(invalid(format!("correlation laws must live on [0, inf); support {:?}", mu.support())));
    }
    let n = n_r.max(n_t);
    let mut r_measures = spec.r_measures.clone();
    r_measures.resize(n, ScalarMeasure::dirac(0.0));
    let mut t_measures = spec.t_measures.clone();
    t_measures.resize(n, ScalarMeasure::dirac(0.0));

    let block_specs = match &spec.covariance {
        CovarianceSpec::Blocks(b) => {
            if b.is_empty() {
                return Err(invalid("block list is empty"));
            }
            b.clone()
        }
        CovarianceSpec::EntryVariances(s) => {
            if s.len() != n_r || s.iter().any(|r| r.len() != n_t) {
                return Err(invalid(format!("entry_variances must be {n_r}x{n_t}")));
            }
            let mut blocks = Vec::new();
            for (k, row) in s.iter().enumerate() {
                for (l, &v) in row.iter().enumerate() {
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(invalid(format!("entry variance ({k},{l}) = {v} must be finite and nonnegative")));
                    }
                    if v > 0.0 {
                        blocks.push(entry_block(v, k, l, n));
                    }
                }
            }
            if blocks.is_empty() {
                blocks.push(entry_block(0.0, 0, 0, n));
            }
            blocks
        }
        CovarianceSpec::Full(sigma2) => {
            let mut b = decompose_full(sigma2, n_r, n_t, n)?;
            if b.is_empty() {
                b.push(entry_block(0.0, 0, 0, n));
            }
            b
        }
    };
    let mut blocks = Vec::with_capacity(block_specs.len());
    for (idx, b) in block_specs.iter().enumerate() {
        if b.diagonal.len() != n {
            return Err(invalid(format!("block {idx}: diagonal has length {}, expected n = {n}", b.diagonal.len())));
        }
        let block = CircularBlock::new(b.variance, b.diagonal.clone(), b.permutation.clone())
            .map_err(|e| e.context(format!("block {idx}")))?;
        for i in 0..n {
            if block.diagonal[i] != 0.0 && (i >= n_r || block.permutation[i] >= n_t) {
                return Err(invalid(format!("block {idx} couples padded antenna index {i}")));
            }
        }
        blocks.push(block);
    }
    let model = ChannelModel { n_r, n_t, gamma: spec.gamma, r_measures, t_measures, blocks };
    model.check_covariance()?;
    Ok(model)
}

impl ChannelModel {
    pub fn n_r(&self) -> usize {
        self.n_r
    }
    pub fn n_t(&self) -> usize {
        self.n_t
    }
    /// Padded dimension max(n_R, n_T).
    pub fn n(&self) -> usize {
        self.r_measures.len()
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    /// Laws of r_k² on the padded index set.
    pub fn r_measures(&self) -> &[ScalarMeasure] {
        &self.r_measures
    }
    pub fn t_measures(&self) -> &[ScalarMeasure] {
        &self.t_measures
    }
    /// Blocks as specified, before γ² scaling.
    pub fn blocks(&self) -> &[CircularBlock] {
        &self.blocks
    }

    /// Blocks with γ² applied to the variances.
    pub fn scaled_blocks(&self) -> Vec<CircularBlock> {
        let g2 = self.gamma * self.gamma;
        self.blocks
            .iter()
            .map(|b| CircularBlock::new(b.variance * g2, b.diagonal.clone(), b.permutation.clone()).unwrap())
            .collect()
    }

    /// Σ² over the padded index k·n + l, γ² included.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut s = vec![vec![0.0; n * n]; n * n];
        for b in self.scaled_blocks() {
            for i in 0..n {
                for j in 0..n {
                    let a = i * n + b.permutation[i];
                    let c = j * n + b.permutation[j];
                    s[a][c] += b.variance * b.diagonal[i] * b.diagonal[j];
                }
            }
        }
        s
    }

    fn check_covariance(&self) -> Result<()> {
        let n = self.n();
        if n > 16 {
            return Ok(());
        }
        let s = self.covariance();
        let scale = s.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs())).max(1.0);
        let m = ComplexMatrix::from_fn(n * n, |i, j| C64::new(s[i][j], 0.0));
        let min = m.hermitian_eigenvalues()?.last().copied().unwrap_or(0.0);
        if min < -1e-10 * scale {
            return Err(invalid(format!("assembled covariance is not positive semidefinite (eigenvalue {min:e})")));
        }
        Ok(())
    }

    /// Per-entry variance profile S[k][l] = Σ_b v_b d_{b,k}² [π_b(k) = l], γ² included.
    pub fn variance_profile(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut s = vec![vec![0.0; n]; n];
        for b in self.scaled_blocks() {
            for i in 0..n {
                s[i][b.permutation[i]] += b.variance * b.diagonal[i] * b.diagonal[i];
            }
        }
        s
    }

    /// First moment of the eigenvalue distribution of HH* under tr_{n_R}.
    pub fn mean_eigenvalue(&self) -> f64 {
        let s = self.variance_profile();
        let mut total = 0.0;
        for (i, row) in s.iter().enumerate().take(self.n_r) {
            for (l, v) in row.iter().enumerate() {
                total += self.r_measures[i].moment(1) * v * self.t_measures[l].moment(1);
            }
        }
        total / self.n_r as f64
    }

    /// Crude bound on the right edge of the spectrum.
    pub fn edge_bound(&self) -> f64 {
        let s = self.variance_profile();
        let n = self.n();
        let row = s.iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max);
        let col = (0..n).map(|l| s.iter().map(|r| r[l]).sum::<f64>()).fold(0.0, f64::max);
        let rmax = self.r_measures.iter().map(|m| m.support().1).fold(0.0, f64::max);
        let tmax = self.t_measures.iter().map(|m| m.support().1).fold(0.0, f64::max);
        rmax * tmax * (row.sqrt() + col.sqrt()).powi(2)
    }

    fn active_blocks(&self) -> Vec<CircularBlock> {
        self.scaled_blocks().into_iter().filter(|b| !b.is_zero()).collect()
    }

    pub fn is_zero_channel(&self) -> bool {
        self.active_blocks().is_empty()
            || self.r_measures[..self.n_r].iter().all(|m| m.is_zero())
            || self.t_measures[..self.n_t].iter().all(|m| m.is_zero())
    }

    /// G_{X̂} as a left fold of the circular blocks; `None` when X̂ = 0.
    pub fn xhat_map(&self, cfg: &FixedPointConfig) -> Result<Option<SharedMap>> {
        let maps: Vec<SharedMap> = self.active_blocks().into_iter().map(|b| Arc::new(b) as SharedMap).collect();
        if maps.is_empty() {
            return Ok(None);
        }
        SubordinatedSum::fold(maps, *cfg).map(Some)
    }

    pub fn q_map(&self) -> CorrelationDiagonal {
        CorrelationDiagonal { r_measures: self.r_measures.clone(), t_measures: self.t_measures.clone() }
    }

    /// Same model with the antenna labels permuted: receive k becomes `recv[k]`, transmit l becomes `trans[l]`.
    pub fn relabeled(&self, recv: &[usize], trans: &[usize]) -> Result<ChannelModel> {
        let n = self.n();
        if recv.len() != n || trans.len() != n {
            return Err(Error::Dimension { expected: n, got: recv.len().min(trans.len()) });
        }
        let mut r = self.r_measures.clone();
        let mut t = self.t_measures.clone();
        for k in 0..n {
            r[recv[k]] = self.r_measures[k].clone();
            t[trans[k]] = self.t_measures[k].clone();
        }
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let mut d = vec![0.0; n];
                let mut p = vec![0; n];
                for i in 0..n {
                    d[recv[i]] = b.diagonal[i];
                    p[recv[i]] = trans[b.permutation[i]];
                }
                CircularBlock::new(b.variance, d, p)
            })
            .collect::<Result<_>>()?;
        Ok(ChannelModel { blocks, r_measures: r, t_measures: t, ..self.clone() })
    }
}

/// G_{X̂}(J) for diagonal J, folding the blocks by additive subordination.
pub fn cauchy_xhat(model: &ChannelModel, j: &[C64], cfg: &FixedPointConfig) -> Result<Vec<C64>> {
    let blocks = model.active_blocks();
    match blocks.len() {
        0 => Ok(j.iter().map(|z| z.inv()).collect()),
        1 => cauchy_xhat_kl(&blocks[0], j),
        _ => model.xhat_map(cfg)?.expect("nonempty").evaluate_diagonal(j),
    }
}

/// Restriction of a diagonal-preserving map to the coordinates in `keep`.
/// Only valid when the dropped coordinates are decoupled from the kept ones,
/// so the value placed there does not matter.
struct Restricted {
    inner: SharedMap,
    keep: Vec<usize>,
}

impl Restricted {
    fn lift(&self, d: &[C64]) -> Vec<C64> {
        let mut full = vec![C64::new(0.0, 1.0); self.inner.dim()];
        for (&k, &z) in self.keep.iter().zip(d) {
            full[k] = z;
        }
        full
    }
}

impl MatrixCauchyMap for Restricted {
    fn dim(&self) -> usize {
        self.keep.len()
    }
    fn diagonal_preserving(&self) -> bool {
        true
    }
    fn closed_form(&self) -> bool {
        self.inner.closed_form()
    }
    fn evaluate(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        let offdiag = b.max_offdiag();
        if offdiag > 0.0 {
            return Err(Error::NotDiagonal { offdiag });
        }
        Ok(ComplexMatrix::from_diagonal(&self.evaluate_diagonal(&b.diagonal())?))
    }
    fn evaluate_diagonal(&self, d: &[C64]) -> Result<Vec<C64>> {
        if d.len() != self.keep.len() {
            return Err(Error::Dimension { expected: self.keep.len(), got: d.len() });
        }
        let out = self.inner.evaluate_diagonal(&self.lift(d))?;
        Ok(self.keep.iter().map(|&k| out[k]).collect())
    }
}

/// The model with every entry of X removed whose receive or transmit law is δ₀.
/// Those entries only meet zero rows of Q^{1/2}, so the spectrum is unchanged.
fn masked(model: &ChannelModel) -> ChannelModel {
    let mut m = model.clone();
    for b in &mut m.blocks {
        for i in 0..b.diagonal.len() {
            if model.r_measures[i].is_zero() || model.t_measures[b.permutation[i]].is_zero() {
                b.diagonal[i] = 0.0;
            }
        }
    }
    m
}

/// Coordinates of the 2n-dimensional product Q·X̂ that carry signal: those
/// where X̂ has a nonzero row. The others (padding, silent antennas) are
/// decoupled and only add an atom at zero.
fn active_coordinates(model: &ChannelModel) -> Vec<usize> {
    let n = model.n();
    let mut coupled = vec![false; 2 * n];
    for b in model.active_blocks() {
        for i in 0..n {
            if b.diagonal[i] != 0.0 {
                coupled[i] = true;
                coupled[n + b.permutation[i]] = true;
            }
        }
    }
    (0..2 * n).filter(|&k| coupled[k]).collect()
}

/// Transform of HH* and H*H at one point, with solver diagnostics.
#[derive(Debug, Clone)]
pub struct PointValue {
    /// G_F(ζ): normalized trace over the receive coordinates.
    pub receive: C64,
    /// Same over the transmit coordinates (the H*H side).
    pub transmit: C64,
    pub omega2: Option<DiagonalMatrix>,
    pub stats: Option<SolveStats>,
}

/// Precomputed maps for repeated evaluation of one model.
pub struct Pipeline {
    model: ChannelModel,
    keep: Vec<usize>,
    q: SharedMap,
    xhat: Option<SharedMap>,
    cfg: FixedPointConfig,
}

impl Pipeline {
    pub fn new(model: &ChannelModel, cfg: &FixedPointConfig) -> Result<Self> {
        cfg.validate()?;
        let mut q: SharedMap = Arc::new(model.q_map());
        let effective = masked(model);
        if effective.is_zero_channel() {
            return Ok(Pipeline { model: model.clone(), keep: Vec::new(), q, xhat: None, cfg: *cfg });
        }
        let keep = active_coordinates(&effective);
        let mut xhat = effective.xhat_map(cfg)?.expect("nonzero channel");
        if keep.len() < 2 * model.n() {
            xhat = Arc::new(Restricted { inner: xhat, keep: keep.clone() });
            q = Arc::new(Restricted { inner: q, keep: keep.clone() });
        }
        Ok(Pipeline { model: model.clone(), keep, q, xhat: Some(xhat), cfg: *cfg })
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    /// One multiplicative solve at ζ, without continuation.
    pub fn evaluate_at(&self, zeta: C64, warm: Option<&DiagonalMatrix>) -> Result<PointValue> {
        let Some(xhat) = &self.xhat else {
            return Ok(PointValue { receive: zeta.inv(), transmit: zeta.inv(), omega2: None, stats: None });
        };
        let w = zeta.sqrt();
        let sol =
            multiplicative_subordinator_from::<DiagonalMatrix>(self.q.as_ref(), xhat.as_ref(), w, warm, &self.cfg)?;
        let n = self.model.n();
        let mut d = vec![w.inv(); 2 * n];
        for (&k, &v) in self.keep.iter().zip(&sol.value.0) {
            d[k] = v;
        }
        let receive = d[..self.model.n_r].iter().sum::<C64>() / (w * self.model.n_r as f64);
        let transmit = d[n..n + self.model.n_t].iter().sum::<C64>() / (w * self.model.n_t as f64);
        Ok(PointValue { receive, transmit, omega2: Some(sol.omega2), stats: Some(sol.stats) })
    }

    /// Evaluation at ζ with the η-ladder: below Im ζ = 0.1 the solve is
    /// continued from heights 1e-1, 1e-2, … down to Im ζ.
    pub fn evaluate(&self, zeta: C64) -> Result<PointValue> {
        if !(zeta.im > 0.0) {
            return Err(Error::Domain { arg: zeta, what: "the transform of HH* is evaluated in H+" });
        }
        let mut warm: Option<DiagonalMatrix> = None;
        let mut eta = 0.1;
        let mut total = 0;
        while eta > zeta.im * 1.0001 {
            let v = self.evaluate_at(C64::new(zeta.re, eta), warm.as_ref())?;
            total += v.stats.map_or(0, |s| s.iterations);
            warm = v.omega2;
            eta *= 0.1;
        }
        let mut v = self.evaluate_at(zeta, warm.as_ref())?;
        if let Some(s) = v.stats.as_mut() {
            log::trace!(
                "point re={} im={:e} ladder_iterations={total} final_iterations={}",
                zeta.re,
                zeta.im,
                s.iterations
            );
        }
        Ok(v)
    }

    pub fn scalar_cauchy(&self, zeta: C64) -> Result<C64> {
        self.evaluate(zeta).map(|v| v.receive).map_err(|e| e.context(format!("zeta={zeta}")))
    }

    /// Density on `grid`, keeping failed points as zeros with their errors.
    pub fn density_lenient(&self, grid: &[f64], eta: f64) -> (DensityEstimate, Vec<(f64, Error)>) {
        let raw: Vec<std::result::Result<f64, Error>> = grid
            .par_iter()
            .map(|&x| self.scalar_cauchy(C64::new(x, eta)).map(|g| -g.im / std::f64::consts::PI))
            .collect();
        let mut failures = Vec::new();
        let values = raw
            .into_iter()
            .zip(grid)
            .map(|(r, &x)| {
                r.unwrap_or_else(|e| {
                    failures.push((x, e));
                    0.0
                })
            })
            .collect();
        let head = match mass_near_zero(|z| self.scalar_cauchy(z), grid[0]) {
            Ok(h) => Some(h),
            Err(e) => {
                log::warn!("event=head_mass_failed x0={} error={e}", grid[0]);
                None
            }
        };
        let est = finish_density(grid.to_vec(), values, eta, head).expect("grid validated by caller");
        (est, failures)
    }

    fn auto_xi_max(&self) -> Result<f64> {
        let mut x = 1.1 * self.model.edge_bound().max(1e-12);
        for _ in 0..40 {
            let eta = 1e-9 * x.max(1.0);
            let f = -self.scalar_cauchy(C64::new(x, eta))?.im / std::f64::consts::PI;
            if f < 1e-8 {
                return Ok(x);
            }
            x *= 2.0;
        }
        Err(Error::InvalidModel("could not locate the right edge of the spectrum".into()))
    }
}

/// G_F(ζ) for the law F of HH* under tr_{n_R}.
pub fn scalar_cauchy_hhstar(model: &ChannelModel, zeta: C64, cfg: &FixedPointConfig) -> Result<C64> {
    Pipeline::new(model, cfg)?.scalar_cauchy(zeta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XiMax {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityOptions {
    pub xi_max: XiMax,
    pub points: usize,
    /// Defaults to 1e-3·xi_max/points.
    pub eta: Option<f64>,
}

impl Default for DensityOptions {
    fn default() -> Self {
        DensityOptions { xi_max: XiMax::Auto, points: 800, eta: None }
    }
}

impl DensityOptions {
    fn resolve(&self, pipeline: &Pipeline) -> Result<(Vec<f64>, f64)> {
        if self.points < 16 {
            return Err(Error::InvalidArgument(format!("need at least 16 grid points, got {}", self.points)));
        }
        let xi_max = match self.xi_max {
            XiMax::Fixed(x) if x > 0.0 && x.is_finite() => x,
            XiMax::Fixed(x) => return Err(Error::InvalidArgument(format!("xi_max must be positive, got {x}"))),
            XiMax::Auto => pipeline.auto_xi_max()?,
        };
        let eta = self.eta.unwrap_or(1e-3 * xi_max / self.points as f64);
        if !(eta > 0.0) {
            return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
        }
        let grid = (1..=self.points).map(|k| xi_max * k as f64 / self.points as f64).collect();
        Ok((grid, eta))
    }
}

/// Density of HH* on a uniform grid of (0, xi_max].
pub fn spectral_density(
    model: &ChannelModel,
    opts: &DensityOptions,
    cfg: &FixedPointConfig,
) -> Result<DensityEstimate> {
    let (est, mut failures) = spectral_density_lenient(model, opts, cfg)?;
    match failures.is_empty() {
        true => Ok(est),
        false => {
            let (x, e) = failures.swap_remove(0);
            Err(e.context(format!("grid point xi={x}")))
        }
    }
}

/// As [`spectral_density`], but grid points whose solve fails are kept as
/// zeros and reported alongside.
pub fn spectral_density_lenient(
    model: &ChannelModel,
    opts: &DensityOptions,
    cfg: &FixedPointConfig,
) -> Result<(DensityEstimate, Vec<(f64, Error)>)> {
    let pipeline = Pipeline::new(model, cfg)?;
    let (grid, eta) = opts.resolve(&pipeline)?;
    if pipeline.xhat.is_none() {
        let est = DensityEstimate { values: vec![0.0; grid.len()], grid, eta, mass_at_zero: 1.0, head: None };
        return Ok((est, Vec::new()));
    }
    Ok(pipeline.density_lenient(&grid, eta))
}

/// ∫ log(1 + Pξ) dF(ξ) by the trapezoid rule on the density grid.
///
/// On [0, grid[0]] the density follows the power-law head of the estimate,
/// and mass_at_zero contributes nothing.
pub fn mutual_information(f: &DensityEstimate, p: f64) -> f64 {
    assert!(p > 0.0, "power must be positive");
    let g: Vec<f64> = f.grid.iter().zip(&f.values).map(|(&x, &v)| (p * x).ln_1p() * v).collect();
    head_information(f, p) + crate::scalar::trapezoid(&f.grid, &g)
}

/// ∫₀^{x₀} log(1 + Pξ)·f₀(ξ/x₀)^α dξ, with u = (ξ/x₀)^{1+α} and Simpson in u.
fn head_information(f: &DensityEstimate, p: f64) -> f64 {
    let x0 = f.grid[0];
    if !(x0 > 0.0) || f.values[0] == 0.0 {
        return 0.0;
    }
    let power = 1.0 + f.head_exponent();
    let n = 64;
    let h = 1.0 / n as f64;
    let g = |u: f64| (p * x0 * u.powf(1.0 / power)).ln_1p();
    let mut acc = g(0.0) + g(1.0);
    for k in 1..n {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * g(k as f64 * h);
    }
    f.head_mass() * acc * h / 3.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct MutualInfoCurve {
    /// (P, nats per receive antenna)
    pub points: Vec<(f64, f64)>,
}

impl MutualInfoCurve {
    pub fn from_density(f: &DensityEstimate, powers: &[f64]) -> Self {
        MutualInfoCurve { points: powers.iter().map(|&p| (p, mutual_information(f, p))).collect() }
    }

    pub fn write_csv(&self, w: &mut dyn Write) -> std::io::Result<()> {
        writeln!(w, "P,info_nats")?;
        for (p, i) in &self.points {
            writeln!(w, "{p:.10e},{i:.10e}")?;
        }
        Ok(())
    }
}

/// The classical Kronecker model R·X·T as the n = 1 operator-valued model.
pub fn classical_model(r2: &ScalarMeasure, t2: &ScalarMeasure) -> Result<ChannelModel> {
    build_model(&ModelSpec {
        n_r: 1,
        n_t: 1,
        gamma: 1.0,
        r_measures: vec![r2.clone()],
        t_measures: vec![t2.clone()],
        covariance: CovarianceSpec::Blocks(vec![BlockSpec {
            variance: 1.0,
            diagonal: vec![1.0],
            permutation: vec![0],
        }]),
    })
}

pub fn classical_kronecker_reference(
    r2: &ScalarMeasure,
    t2: &ScalarMeasure,
    powers: &[f64],
    opts: &DensityOptions,
    cfg: &FixedPointConfig,
) -> Result<MutualInfoCurve> {
    let f = spectral_density(&classical_model(r2, t2)?, opts, cfg)?;
    Ok(MutualInfoCurve::from_density(&f, powers))
}
