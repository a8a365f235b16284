//! Scalar Cauchy transforms, the Marchenko–Pastur and semicircle closed
//! forms, and Stieltjes inversion.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::C64;

const MASS_TOLERANCE: f64 = 1e-6;

/// Sampled absolutely continuous part of a measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPart {
    pub locations: Vec<f64>,
    pub values: Vec<f64>,
}

impl DensityPart {
    fn cell_masses(&self) -> Vec<f64> {
        self.locations
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] + f[1]))
            .collect()
    }

    fn mass(&self) -> f64 {
        self.cell_masses().iter().sum()
    }
}

/// Compactly supported probability measure on the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMeasure {
    atoms: Vec<(f64, f64)>,
    density: Option<DensityPart>,
}

impl ScalarMeasure {
    pub fn new(atoms: Vec<(f64, f64)>, density: Option<DensityPart>) -> Result<Self> {
        for &(loc, w) in &atoms {
            if !loc.is_finite() {
                return Err(Error::InvalidMeasure(format!("atom location {loc} is not finite")));
            }
            if !(w > 0.0 && w <= 1.0 + MASS_TOLERANCE) {
                return Err(Error::InvalidMeasure(format!("atom weight {w} outside (0, 1]")));
            }
        }
        if let Some(d) = &density {
            if d.locations.len() != d.values.len() || d.locations.len() < 2 {
                return Err(Error::InvalidMeasure(
                    "density part needs at least two matching (location, value) pairs".into(),
                ));
            }
            if d.locations.windows(2).any(|w| !(w[1] > w[0])) || d.locations.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidMeasure("density locations must be finite and strictly increasing".into()));
            }
            if d.values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidMeasure("density values must be finite and nonnegative".into()));
            }
        }
        let m = ScalarMeasure { atoms, density };
        let mass = m.mass();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMeasure(format!("total mass {mass} differs from 1")));
        }
        Ok(m)
    }

    pub fn from_atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(atoms, None)
    }

    pub fn dirac(location: f64) -> Self {
        ScalarMeasure { atoms: vec![(location, 1.0)], density: None }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&DensityPart> {
        self.density.as_ref()
    }

    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum::<f64>() + self.density.as_ref().map_or(0.0, |d| d.mass())
    }

    pub fn moment(&self, k: i32) -> f64 {
        let a: f64 = self.atoms.iter().map(|&(x, w)| w * x.powi(k)).sum();
        let d = self.density.as_ref().map_or(0.0, |d| {
            d.locations
                .windows(2)
                .zip(d.values.windows(2))
                .map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] * x[0].powi(k) + f[1] * x[1].powi(k)))
                .sum()
        });
        a + d
    }

    /// Smallest closed interval containing the support.
    pub fn support(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(x, _) in &self.atoms {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        if let Some(d) = &self.density {
            lo = lo.min(d.locations[0]);
            hi = hi.max(*d.locations.last().unwrap());
        }
        (lo, hi)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.support().0 >= 0.0
    }

    /// True for the point mass at the origin.
    pub fn is_zero(&self) -> bool {
        self.density.is_none() && self.atoms.iter().all(|a| a.0 == 0.0)
    }

    /// Law of c·x for x distributed according to `self`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if c == 0.0 {
            return Ok(Self::dirac(0.0));
        }
        let atoms = self.atoms.iter().map(|&(x, w)| (c * x, w)).collect();
        let density = self.density.as_ref().map(|d| {
            let mut pts: Vec<(f64, f64)> =
                d.locations.iter().zip(&d.values).map(|(&x, &f)| (c * x, f / c.abs())).collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            DensityPart { locations: pts.iter().map(|p| p.0).collect(), values: pts.iter().map(|p| p.1).collect() }
        });
        Self::new(atoms, density)
    }

    /// Pushforward of an atomic measure under `f`.
    pub fn map_atoms(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        if self.density.is_some() {
            return Err(Error::InvalidMeasure("pushforward is only supported for atomic measures".into()));
        }
        Self::from_atoms(self.atoms.iter().map(|&(x, w)| (f(x), w)).collect())
    }

    /// Σ wᵢ/(z − aᵢ) plus the trapezoid integral of the density part, for any z
    /// off the support. The value below the axis equals the reflection conj(G(conj z)).
    pub fn cauchy_ext(&self, z: C64) -> C64 {
        let mut g: C64 = self.atoms.iter().map(|&(a, w)| w / (z - a)).sum();
        if let Some(d) = &self.density {
            let f: Vec<C64> = d.locations.iter().zip(&d.values).map(|(&x, &v)| v / (z - x)).collect();
            for k in 0..f.len() - 1 {
                g += 0.5 * (d.locations[k + 1] - d.locations[k]) * (f[k] + f[k + 1]);
            }
        }
        g
    }

    pub fn cauchy(&self, zeta: C64) -> Result<C64> {
        cauchy_of_measure(self, zeta)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>() * self.mass();
        let mut acc = 0.0;
        for &(x, w) in &self.atoms {
            acc += w;
            if u < acc {
                return x;
            }
        }
        if let Some(d) = &self.density {
            let cells = d.cell_masses();
            for (k, m) in cells.iter().enumerate() {
                acc += m;
                if u < acc {
                    let t: f64 = rng.random();
                    return d.locations[k] + t * (d.locations[k + 1] - d.locations[k]);
                }
            }
            return *d.locations.last().unwrap();
        }
        self.atoms.last().map_or(0.0, |a| a.0)
    }
}

pub fn cauchy_of_measure(mu: &ScalarMeasure, zeta: C64) -> Result<C64> {
    if !(zeta.im > 0.0) {
        return Err(Error::Domain { arg: zeta, what: "Cauchy transform requires Im(zeta) > 0" });
    }
    Ok(mu.cauchy_ext(zeta))
}

/// Marchenko–Pastur transform analytically continued to C \ [0, 4].
///
/// √z·√(z−4) with principal roots has its cut exactly on [0, 4] and behaves
/// like z at infinity, which selects the physical branch everywhere.
pub fn cauchy_mp_ext(z: C64) -> C64 {
    let s = z.sqrt() * (z - 4.0).sqrt();
    (z - s) / (2.0 * z)
}

/// Marchenko–Pastur transform (ratio one, unit variance).
///
/// Accepts the closed upper half-plane minus the support [0, 4].
pub fn cauchy_mp(zeta: C64) -> Result<C64> {
    if zeta.im < 0.0 || (zeta.im == 0.0 && (0.0..=4.0).contains(&zeta.re)) || !zeta.is_finite() {
        return Err(Error::Domain { arg: zeta, what: "Marchenko-Pastur transform requires zeta in H+ off [0,4]" });
    }
    let w = ((zeta - 2.0) * (zeta - 2.0) - 4.0).sqrt();
    let mut g = (zeta - w) / (2.0 * zeta);
    if zeta.im > 0.0 && g.im >= 0.0 {
        g = (zeta + w) / (2.0 * zeta);
    } else if zeta.im == 0.0 {
        g = cauchy_mp_ext(zeta);
    }
    Ok(g)
}

/// Transform of the Marchenko–Pastur law dilated by `variance`.
pub fn cauchy_mp_scaled(z: C64, variance: f64) -> C64 {
    cauchy_mp_ext(z / variance) / variance
}

pub fn mp_density(x: f64) -> f64 {
    if x <= 0.0 || x >= 4.0 {
        return 0.0;
    }
    (4.0 - (x - 2.0) * (x - 2.0)).sqrt() / (2.0 * std::f64::consts::PI * x)
}

/// Semicircle transform of the given variance, continued to C \ [−2σ, 2σ].
pub fn cauchy_semicircle_ext(z: C64, variance: f64) -> C64 {
    let s = variance.sqrt();
    (z - (z - 2.0 * s).sqrt() * (z + 2.0 * s).sqrt()) / (2.0 * variance)
}

/// Gridded density estimate with the mass not resolved on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub eta: f64,
    pub mass_at_zero: f64,
    /// Mass on (0, grid[0]] when it was measured independently of the grid values.
    pub head: Option<f64>,
}

impl DensityEstimate {
    /// Local exponent α of f(x) ≈ f₀·(x/x₀)^α on [0, grid[0]], from the first two
    /// grid values. Hard edges of square channels give α ≈ −1/2.
    /// With a measured head mass m the exponent is the one giving f₀·x₀/(1+α) = m.
    pub fn head_exponent(&self) -> f64 {
        let (x0, x1) = (self.grid[0], self.grid.get(1).copied().unwrap_or(0.0));
        let (f0, f1) = (self.values[0], self.values.get(1).copied().unwrap_or(0.0));
        if let Some(m) = self.head {
            return if m > 0.0 && x0 > 0.0 { (x0 * f0 / m - 1.0).clamp(-0.99, 4.0) } else { 0.0 };
        }
        if !(x0 > 0.0 && x1 > x0 && f0 > 0.0 && f1 > 0.0) {
            return 0.0;
        }
        ((f1 / f0).ln() / (x1 / x0).ln()).clamp(-0.95, 4.0)
    }

    /// Mass on [0, grid[0]] under the power-law head.
    pub fn head_mass(&self) -> f64 {
        if let Some(m) = self.head {
            return m;
        }
        if self.grid[0] > 0.0 {
            self.grid[0] * self.values[0] / (1.0 + self.head_exponent())
        } else {
            0.0
        }
    }

    /// Mass on the grid by the trapezoid rule, plus the head segment.
    pub fn trapezoid_mass(&self) -> f64 {
        self.head_mass() + trapezoid(&self.grid, &self.values)
    }

    /// Distribution function F(x) = 1 − ∫ₓ^{xmax} f, so mass missing from the grid
    /// is attributed to the left end.
    pub fn cdf(&self) -> impl Fn(f64) -> f64 + '_ {
        let n = self.grid.len();
        let mut tail = vec![0.0; n];
        for k in (0..n - 1).rev() {
            tail[k] = tail[k + 1] + 0.5 * (self.grid[k + 1] - self.grid[k]) * (self.values[k] + self.values[k + 1]);
        }
        let head = self.head_mass();
        let power = 1.0 + self.head_exponent();
        move |x: f64| {
            if x >= self.grid[n - 1] {
                return 1.0;
            }
            if x < 0.0 {
                return 0.0;
            }
            if x < self.grid[0] {
                return (1.0 - tail[0] - head * (1.0 - (x / self.grid[0]).powf(power))).clamp(0.0, 1.0);
            }
            let k = self.grid.partition_point(|&g| g <= x) - 1;
            let h = self.grid[k + 1] - self.grid[k];
            let t = (x - self.grid[k]) / h;
            let fx = self.values[k] + t * (self.values[k + 1] - self.values[k]);
            let partial = 0.5 * (self.grid[k + 1] - x) * (fx + self.values[k + 1]);
            (1.0 - tail[k + 1] - partial).clamp(0.0, 1.0)
        }
    }

    pub fn write_csv(&self, w: &mut dyn Write) -> std::io::Result<()> {
        writeln!(w, "# eta={:e} mass_at_zero={:e} head_mass={:e}", self.eta, self.mass_at_zero, self.head_mass())?;
        writeln!(w, "xi,density")?;
        for (x, f) in self.grid.iter().zip(&self.values) {
            writeln!(w, "{x:.10e},{f:.10e}")?;
        }
        Ok(())
    }
}

pub(crate) fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    x.windows(2).zip(f.windows(2)).map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] + f[1])).sum()
}

/// Recovers a density from its Cauchy transform at height `eta` above the grid.
pub fn stieltjes_invert<G>(g: G, grid: &[f64], eta: f64) -> Result<DensityEstimate>
where
    G: Fn(C64) -> Result<C64> + Sync,
{
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("grid must be nonempty and strictly increasing".into()));
    }
    let raw: Vec<f64> = grid
        .par_iter()
        .map(|&x| {
            g(C64::new(x, eta))
                .map(|v| -v.im / std::f64::consts::PI)
                .map_err(|e| e.context(format!("grid point xi={x}")))
        })
        .collect::<Result<_>>()?;
    finish_density(grid.to_vec(), raw, eta, None)
}

/// Gauss–Legendre nodes and weights on [−1, 1] (Golub–Welsch).
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = faer::Mat::<f64>::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = jac.self_adjoint_eigen(faer::Side::Lower).expect("symmetric tridiagonal");
    let nodes = (0..n).map(|i| eig.S().column_vector()[i]).collect();
    let weights = (0..n).map(|i| 2.0 * eig.U()[(0, i)].powi(2)).collect();
    (nodes, weights)
}

const HEAD_NODES: usize = 48;

/// Mass of a measure on [0, ∞) inside [0, x0], and the part of it sitting at 0,
/// from its Cauchy transform on H⁺.
///
/// The mass is ∮ G/2πi over the circle |ζ| = x0, which by G(ζ̄) = conj G(ζ) is
/// Im ∫₀^π G(x0·e^{iθ})·i·x0·e^{iθ} dθ / π. The atom is Re(iy·G(iy)) at
/// y = 1e-6·x0; a density ~ x^{-1/2} leaks about 1e-3·√x0 into it, so values
/// below 1e-3 are reported as no atom.
pub fn mass_near_zero<G>(g: G, x0: f64) -> Result<(f64, f64)>
where
    G: Fn(C64) -> Result<C64> + Sync,
{
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {x0}")));
    }
    let (t, w) = gauss_legendre(HEAD_NODES);
    let terms: Vec<C64> = t
        .par_iter()
        .zip(&w)
        .map(|(&t, &w)| {
            let z = C64::from_polar(x0, std::f64::consts::FRAC_PI_2 * (1.0 + t));
            g(z).map(|v| v * C64::new(0.0, 1.0) * z * w)
        })
        .collect::<Result<_>>()?;
    let inside = (terms.iter().sum::<C64>() * std::f64::consts::FRAC_PI_2).im / std::f64::consts::PI;
    let z = C64::new(0.0, 1e-6 * x0);
    let atom = (C64::new(0.0, 1.0) * z.im * g(z)?).re;
    let atom = if atom > 1e-3 { atom.min(1.0) } else { 0.0 };
    Ok(((inside - atom).max(0.0), atom))
}

/// Clamps negative values and settles the mass at zero. `head` is the measured
/// (mass on (0, grid[0]], atom at 0); without it, any deficit above 0.02 is
/// attributed to an atom at zero.
pub(crate) fn finish_density(
    grid: Vec<f64>,
    raw: Vec<f64>,
    eta: f64,
    head: Option<(f64, f64)>,
) -> Result<DensityEstimate> {
    let worst = raw.iter().cloned().fold(0.0, f64::min);
    if worst < -1e-6 {
        log::warn!("event=negative_density min={worst:e} eta={eta:e}");
    }
    let values = raw.into_iter().map(|v| v.max(0.0)).collect();
    if let Some((m, atom)) = head {
        return Ok(DensityEstimate { grid, values, eta, mass_at_zero: atom, head: Some(m) });
    }
    let mut est = DensityEstimate { grid, values, eta, mass_at_zero: 0.0, head: None };
    let residual = 1.0 - est.trapezoid_mass();
    if residual > 0.02 {
        est.mass_at_zero = residual;
    }
    Ok(est)
}

/// Quantile discretization of Uniform[0, 1].
pub fn discretize_uniform01(n_atoms: usize) -> Result<ScalarMeasure> {
    if n_atoms < 2 {
        return Err(Error::InvalidArgument(format!("uniform discretization needs at least 2 atoms, got {n_atoms}")));
    }
    let w = 1.0 / n_atoms as f64;
    ScalarMeasure::from_atoms((0..n_atoms).map(|k| ((k as f64 + 0.5) * w, w)).collect())
}
