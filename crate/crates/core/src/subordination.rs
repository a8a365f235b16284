//! Subordination fixed points for additive and multiplicative free
//! convolution over the matrix algebra.

use std::sync::{Arc, Once};

use crate::config::FixedPointConfig;
use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, DiagonalMatrix, HalfPlane, Operand, C64};
use crate::opval::{evaluate_extended, h_transform, r_transform, MatrixCauchyMap, SharedMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// ‖f(ω) − ω‖_max at the returned point.
    pub residual: f64,
    pub damping: f64,
    pub min_damping: f64,
    /// Newton steps taken after Picard stalled (0 when Picard converged).
    pub newton_steps: usize,
}

#[derive(Debug, Clone)]
pub struct AdditiveSolution<O> {
    pub omega1: O,
    /// G_{X+Y}(B) = G_X(ω₁).
    pub value: O,
    pub stats: SolveStats,
}

#[derive(Debug, Clone)]
pub struct MultiplicativeSolution<O> {
    pub omega2: O,
    /// G_{XY}(ζI).
    pub value: O,
    pub stats: SolveStats,
}

const MIN_DAMPING: f64 = 1e-6;
const STAGNATION_WINDOW: usize = 25;
/// Picard iterations before a slow solve is handed to Newton.
const NEWTON_AFTER: usize = 200;
const NEWTON_STEPS: usize = 60;

fn converged<O: Operand>(residual: f64, w: &O, cfg: &FixedPointConfig) -> bool {
    residual <= cfg.tolerance * w.max_abs().max(1.0)
}

/// Damped Picard iteration W ← W + d·(f(W) − W) with adaptive d.
///
/// Near spectral edges the iteration can spiral slowly around the fixed
/// point; after `NEWTON_AFTER` iterations one Newton attempt is made from the
/// best iterate so far, and Picard resumes if it fails.
fn picard<O: Operand>(
    label: &str,
    w0: O,
    f: impl Fn(&O) -> Result<O>,
    cfg: &FixedPointConfig,
    keep_upper: bool,
) -> Result<(O, SolveStats)> {
    cfg.validate()?;
    let mut w = w0;
    let mut d = cfg.damping;
    let mut min_d = d;
    let mut prev = f64::INFINITY;
    let (mut rises, mut falls) = (0usize, 0usize);
    let mut residual = f64::NAN;
    // stagnation (e.g. a 2-cycle with constant residual) also halves the damping
    let (mut best, mut since_best) = (f64::INFINITY, 0usize);
    let mut best_w = w.clone();
    let mut best_residual = f64::INFINITY;
    let mut newton_tried = false;
    for it in 0..cfg.max_iterations {
        let fw = f(&w)?;
        let step = fw.sub(&w);
        residual = step.max_abs();
        if !residual.is_finite() {
            return Err(Error::NonConvergence { iterations: it, residual }.context(label));
        }
        if converged(residual, &w, cfg) {
            let stats = SolveStats { iterations: it, residual, damping: d, min_damping: min_d, newton_steps: 0 };
            log::trace!("solver={label} iterations={it} residual={residual:.3e} damping={d} min_damping={min_d}");
            return Ok((w, stats));
        }
        if residual < best_residual {
            best_residual = residual;
            best_w = w.clone();
        }
        if it >= NEWTON_AFTER && !newton_tried {
            newton_tried = true;
            if let Some((wn, r, steps)) = newton(&best_w, &f, cfg, keep_upper) {
                log::debug!(
                    "solver={label} event=newton_rescue picard_iterations={it} newton_steps={steps} residual={r:.3e}"
                );
                let stats =
                    SolveStats { iterations: it, residual: r, damping: d, min_damping: min_d, newton_steps: steps };
                return Ok((wn, stats));
            }
            log::debug!("solver={label} event=newton_failed picard_iterations={it}");
        }
        if residual < 0.9 * best {
            best = residual;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= STAGNATION_WINDOW && d > MIN_DAMPING {
            d = (0.5 * d).max(MIN_DAMPING);
            min_d = min_d.min(d);
            since_best = 0;
            best = residual;
            falls = 0;
            log::trace!("solver={label} iteration={it} event=stagnation damping={d}");
        } else if residual > prev {
            rises += 1;
            falls = 0;
            if rises >= 2 {
                d = (0.5 * d).max(MIN_DAMPING);
                min_d = min_d.min(d);
                rises = 0;
                log::trace!("solver={label} iteration={it} event=damping_halved damping={d}");
            }
        } else {
            falls += 1;
            rises = 0;
            if falls >= 10 && d < cfg.damping {
                d = (2.0 * d).min(cfg.damping);
                falls = 0;
            }
        }
        prev = residual;
        w = w.add(&step.scale(C64::new(d, 0.0)));
        if keep_upper {
            let margin = w.half_plane_margin();
            if !(margin > 0.0) {
                return Err(Error::HalfPlaneViolation { iteration: it, margin });
            }
        }
    }
    log::debug!("solver={label} event=non_convergence iterations={} residual={residual:.3e}", cfg.max_iterations);
    Err(Error::NonConvergence { iterations: cfg.max_iterations, residual }.context(label))
}

/// Newton on F(W) = f(W) − W with a forward-difference Jacobian and
/// backtracking. The maps are holomorphic in W, so real increments suffice.
fn newton<O: Operand>(
    w0: &O,
    f: &impl Fn(&O) -> Result<O>,
    cfg: &FixedPointConfig,
    keep_upper: bool,
) -> Option<(O, f64, usize)> {
    let dim = w0.dim();
    let residual_of = |w: &O| -> Option<(Vec<C64>, f64)> {
        let r = f(w).ok()?.sub(w);
        let v = r.coords();
        let norm = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        norm.is_finite().then_some((v, norm))
    };
    let mut x = w0.coords();
    let (mut fx, mut norm) = residual_of(w0)?;
    for step in 0..NEWTON_STEPS {
        let w = O::from_coords(dim, &x);
        if converged(norm, &w, cfg) {
            return Some((w, norm, step));
        }
        let m = x.len();
        let mut jac = ComplexMatrix::zeros(m);
        for j in 0..m {
            let h = 1e-7 * x[j].norm().max(1.0);
            let mut xp = x.clone();
            xp[j] += h;
            let (fp, _) = residual_of(&O::from_coords(dim, &xp))?;
            for i in 0..m {
                jac.set(i, j, (fp[i] - fx[i]) / h);
            }
        }
        let inv = jac.inverse().ok()?;
        let delta: Vec<C64> = (0..m).map(|i| -(0..m).map(|k| inv.get(i, k) * fx[k]).sum::<C64>()).collect();
        let mut lambda = 1.0;
        loop {
            let xt: Vec<C64> = x.iter().zip(&delta).map(|(a, b)| a + b * lambda).collect();
            let wt = O::from_coords(dim, &xt);
            let admissible = !keep_upper || wt.half_plane_margin() > 0.0;
            if admissible {
                if let Some((ft, nt)) = residual_of(&wt) {
                    if nt < (1.0 - 1e-4 * lambda) * norm {
                        x = xt;
                        fx = ft;
                        norm = nt;
                        break;
                    }
                }
            }
            lambda *= 0.5;
            if lambda < 1.0 / 1024.0 {
                return None;
            }
        }
    }
    let w = O::from_coords(dim, &x);
    converged(norm, &w, cfg).then_some((w, norm, NEWTON_STEPS))
}

fn same_dim(x: &dyn MatrixCauchyMap, y: &dyn MatrixCauchyMap) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::Dimension { expected: x.dim(), got: y.dim() });
    }
    Ok(())
}

/// Solves ω₁ = r_Y(r_X(ω₁) + B) + B and returns G_{X+Y}(B) = G_X(ω₁).
pub fn additive_subordinator<O: Operand>(
    gx: &dyn MatrixCauchyMap,
    gy: &dyn MatrixCauchyMap,
    b: &O,
    cfg: &FixedPointConfig,
) -> Result<AdditiveSolution<O>> {
    additive_subordinator_from(gx, gy, b, None, cfg)
}

/// As [`additive_subordinator`], starting from `warm` instead of B.
pub fn additive_subordinator_from<O: Operand>(
    gx: &dyn MatrixCauchyMap,
    gy: &dyn MatrixCauchyMap,
    b: &O,
    warm: Option<&O>,
    cfg: &FixedPointConfig,
) -> Result<AdditiveSolution<O>> {
    same_dim(gx, gy)?;
    if b.dim() != gx.dim() {
        return Err(Error::Dimension { expected: gx.dim(), got: b.dim() });
    }
    if b.half_plane() != HalfPlane::Upper {
        return Err(Error::NeitherHalfPlane { upper: b.half_plane_margin(), lower: b.adjoint().half_plane_margin() });
    }
    let first = additive_once(gx, gy, b, warm, cfg);
    match first {
        Err(e) if e.is_non_convergence() && warm.is_none() => additive_continued(gx, gy, b, cfg).map_err(|_| e),
        r => r,
    }
}

fn additive_once<O: Operand>(
    gx: &dyn MatrixCauchyMap,
    gy: &dyn MatrixCauchyMap,
    b: &O,
    warm: Option<&O>,
    cfg: &FixedPointConfig,
) -> Result<AdditiveSolution<O>> {
    let f = |w: &O| -> Result<O> { Ok(r_transform(gy, &r_transform(gx, w)?.add(b))?.add(b)) };
    let (omega1, stats) = picard("additive", warm.cloned().unwrap_or_else(|| b.clone()), f, cfg, true)?;
    let value = evaluate_extended(gx, &omega1)?;
    Ok(AdditiveSolution { omega1, value, stats })
}

/// Continuation for arguments close to the real axis: solve at B + iδ for
/// δ = 10⁻¹·s, 10⁻²·s, … (s = max(1, ‖B‖)) and warm-start each solve from
/// the previous subordinator.
fn additive_continued<O: Operand>(
    gx: &dyn MatrixCauchyMap,
    gy: &dyn MatrixCauchyMap,
    b: &O,
    cfg: &FixedPointConfig,
) -> Result<AdditiveSolution<O>> {
    let dim = b.dim();
    let scale = b.max_abs().max(1.0);
    let mut delta = 0.1 * scale;
    let mut warm: Option<O> = None;
    let mut steps = 0;
    while delta > 1e-14 * scale && steps < 16 {
        let shifted = b.add(&O::scalar(dim, C64::new(0.0, delta)));
        warm = Some(additive_once(gx, gy, &shifted, warm.as_ref(), cfg)?.omega1);
        delta *= 0.1;
        steps += 1;
        if let Ok(sol) = additive_once(gx, gy, b, warm.as_ref(), cfg) {
            log::debug!("solver=additive event=continuation steps={steps}");
            return Ok(sol);
        }
    }
    additive_once(gx, gy, b, warm.as_ref(), cfg)
}

static HYPOTHESIS_NOTE: Once = Once::new();

/// G_{XY}(ζI) for positive X, through the subordinator ω₂ of W ↦ B·h_X(h_Y(W)·B).
///
/// The iteration runs at B = conj(1/ζ), which lies in the upper half-plane,
/// and h_{XY}(1/ζ) is recovered by reflection: h_{XY}(B)* with
/// h_{XY}(B) = ω₂·h_Y(ω₂)/B. Then G_{XY}(ζI) = (ζI − h_{XY}(ζ⁻¹I))⁻¹.
pub fn multiplicative_subordinator<O: Operand>(
    gx: &dyn MatrixCauchyMap,
    gy: &dyn MatrixCauchyMap,
    zeta: C64,
    cfg: &FixedPointConfig,
) -> Result<MultiplicativeSolution<O>> {
    multiplicative_subordinator_from(gx, gy, zeta, None, cfg)
}

pub fn multiplicative_subordinator_from<O: Operand>(
    gx: &dyn MatrixCauchyMap,
    gy: &dyn MatrixCauchyMap,
    zeta: C64,
    warm: Option<&O>,
    cfg: &FixedPointConfig,
) -> Result<MultiplicativeSolution<O>> {
    same_dim(gx, gy)?;
    if !(zeta.im > 0.0) || !zeta.is_finite() {
        return Err(Error::Domain { arg: zeta, what: "multiplicative subordination requires zeta in H+" });
    }
    HYPOTHESIS_NOTE.call_once(|| {
        log::debug!("note=subordination_hypothesis the product iteration is also run when E(Y) is singular");
    });
    let dim = gx.dim();
    let b = zeta.inv().conj();
    let g = |w: &O| -> Result<O> { Ok(h_transform(gx, &h_transform(gy, w)?.scale(b))?.scale(b)) };
    let w0 = warm.cloned().unwrap_or_else(|| O::scalar(dim, b));
    let (omega2, stats) = picard("multiplicative", w0, g, cfg, false)?;
    let h_xy = omega2.mul(&h_transform(gy, &omega2)?).scale(b.inv()).adjoint();
    let value = O::scalar(dim, zeta).sub(&h_xy).inverse()?;
    Ok(MultiplicativeSolution { omega2, value, stats })
}

/// G_{X+Y} for X, Y free over the matrix algebra, evaluated by additive subordination.
pub struct SubordinatedSum {
    x: SharedMap,
    y: SharedMap,
    cfg: FixedPointConfig,
}

impl SubordinatedSum {
    pub fn new(x: SharedMap, y: SharedMap, cfg: FixedPointConfig) -> Result<Self> {
        same_dim(x.as_ref(), y.as_ref())?;
        cfg.validate()?;
        Ok(SubordinatedSum { x, y, cfg })
    }

    /// Left fold X₁ + X₂ + ⋯ of free summands.
    pub fn fold(maps: Vec<SharedMap>, cfg: FixedPointConfig) -> Result<SharedMap> {
        let mut it = maps.into_iter();
        let mut acc = it.next().ok_or_else(|| Error::InvalidArgument("empty sum".into()))?;
        for m in it {
            acc = Arc::new(SubordinatedSum::new(acc, m, cfg)?);
        }
        Ok(acc)
    }
}

impl MatrixCauchyMap for SubordinatedSum {
    fn dim(&self) -> usize {
        self.x.dim()
    }
    fn diagonal_preserving(&self) -> bool {
        self.x.diagonal_preserving() && self.y.diagonal_preserving()
    }
    fn evaluate(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        Ok(additive_subordinator(self.x.as_ref(), self.y.as_ref(), b, &self.cfg)?.value)
    }
    fn evaluate_diagonal(&self, d: &[C64]) -> Result<Vec<C64>> {
        let b = DiagonalMatrix(d.to_vec());
        Ok(additive_subordinator(self.x.as_ref(), self.y.as_ref(), &b, &self.cfg)?.value.0)
    }
}
