//! Free additive convolution of the unit semicircle with an atomic measure.
//!
//! With `μ_b` the semicircle on `[−2, 2]` the subordination map is
//! `H(z) = z + G_{μ_a}(z)`. For each `u` the density of `μ_a ⊞ μ_b` at
//! `ψ(u) = Re H(u + i v(u))` is `v(u)/π`, where `v(u) ≥ 0` solves
//! `∫ dμ_a(x) / ((u−x)² + v²) = 1`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, LabError, Result};

/// Atoms plus a piecewise-linear density on a sorted grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridMeasure {
    pub atoms: Vec<(f64, f64)>,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

/// Tolerance on total mass accepted by [`GridMeasure::new`].
pub const MASS_TOLERANCE: f64 = 1e-6;

impl GridMeasure {
    pub fn new(atoms: Vec<(f64, f64)>, grid: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if grid.len() != density.len() {
            return domain("grid and density lengths differ");
        }
        if grid.windows(2).any(|w| !(w[1] >= w[0])) {
            return domain("grid must be sorted");
        }
        if density.iter().any(|d| !(*d >= 0.0)) || atoms.iter().any(|(_, m)| !(*m >= 0.0)) {
            return domain("density and atom masses must be nonnegative");
        }
        let m = GridMeasure { atoms, grid, density };
        let mass = m.mass();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(LabError::Inconsistency(format!("total mass {mass} is not 1")));
        }
        Ok(m)
    }

    /// Atom masses plus the trapezoid integral of the density.
    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|(_, m)| m).sum::<f64>() + self.continuous_mass()
    }

    pub fn continuous_mass(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
            .sum()
    }

    /// Linear interpolation of the density, zero off the grid.
    pub fn density_at(&self, x: f64) -> f64 {
        let g = &self.grid;
        if g.is_empty() || x < g[0] || x > g[g.len() - 1] {
            return 0.0;
        }
        let i = g.partition_point(|&t| t <= x).clamp(1, g.len() - 1);
        let (x0, x1) = (g[i - 1], g[i]);
        if x1 == x0 {
            return self.density[i].max(self.density[i - 1]);
        }
        let t = (x - x0) / (x1 - x0);
        self.density[i - 1] * (1.0 - t) + self.density[i] * t
    }

    /// Distribution function, exact for the piecewise-linear density.
    pub fn cdf(&self, x: f64) -> f64 {
        let mut total: f64 = self.atoms.iter().filter(|(a, _)| *a <= x).map(|(_, m)| m).sum();
        for (xs, ds) in self.grid.windows(2).zip(self.density.windows(2)) {
            if x >= xs[1] {
                total += 0.5 * (xs[1] - xs[0]) * (ds[0] + ds[1]);
            } else {
                if x > xs[0] {
                    let h = x - xs[0];
                    let slope = (ds[1] - ds[0]) / (xs[1] - xs[0]);
                    total += h * ds[0] + 0.5 * slope * h * h;
                }
                break;
            }
        }
        total
    }
}

/// `∫ f(x)/(z−x) dx` over `[a, b]` for `f` linear from `fa` to `fb`.
fn linear_cell_resolvent(a: f64, b: f64, fa: f64, fb: f64, z: Complex64) -> Complex64 {
    if b <= a {
        return Complex64::new(0.0, 0.0);
    }
    let slope = (fb - fa) / (b - a);
    let f_at_z = fa + slope * (z - a);
    let log_ratio = (z - a).ln() - (z - b).ln();
    f_at_z * log_ratio - slope * (b - a)
}

/// `G(z) = ∫ dμ(x)/(z − x)`; the density part is integrated exactly for its
/// piecewise-linear interpolant.
pub fn resolvent(measure: &GridMeasure, z: Complex64) -> Result<Complex64> {
    if z.im == 0.0 {
        let x = z.re;
        if measure.atoms.iter().any(|(a, m)| *a == x && *m > 0.0) {
            return domain(format!("resolvent evaluated on an atom at {x}"));
        }
        let on_support = measure.grid.windows(2).zip(measure.density.windows(2)).any(|(xs, ds)| {
            x >= xs[0] && x <= xs[1] && (ds[0] > 0.0 || ds[1] > 0.0)
        });
        if on_support {
            return domain(format!("resolvent evaluated on the support at {x}"));
        }
    }
    let mut g: Complex64 = measure.atoms.iter().map(|(a, m)| *m / (z - a)).sum();
    for (xs, ds) in measure.grid.windows(2).zip(measure.density.windows(2)) {
        if ds[0] != 0.0 || ds[1] != 0.0 {
            g += linear_cell_resolvent(xs[0], xs[1], ds[0], ds[1], z);
        }
    }
    Ok(g)
}

/// Density of the unit semicircle `√(4−x²)/(2π)`.
pub fn semicircle_density(x: f64) -> f64 {
    if x.abs() >= 2.0 {
        0.0
    } else {
        (4.0 - x * x).sqrt() / (2.0 * std::f64::consts::PI)
    }
}

/// `G(z) = (z − √(z²−4))/2` on the branch with `G(z) ~ 1/z`.
pub fn semicircle_resolvent(z: Complex64) -> Complex64 {
    (z - (z - 2.0).sqrt() * (z + 2.0).sqrt()) * 0.5
}

/// Solves `1/G_b(E) = θ` above `e_max`. `None` when `θ ≤ 1/G_b(e_max)`.
pub fn outlier_location(theta: f64, g_b: impl Fn(f64) -> f64, e_max: f64) -> Option<f64> {
    if !(theta > 0.0) {
        return None;
    }
    let h = |e: f64| 1.0 / g_b(e) - theta;
    if h(e_max) >= 0.0 {
        return None;
    }
    let mut lo = e_max;
    let mut step = 1.0f64.max(theta);
    let mut hi = e_max + step;
    while h(hi) < 0.0 {
        lo = hi;
        step *= 2.0;
        hi = e_max + step;
        if !hi.is_finite() {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Outlier of the semicircle perturbed by a spike `θ` (small-`r` limit).
pub fn semicircle_outlier(theta: f64) -> Option<f64> {
    outlier_location(theta, |e| semicircle_resolvent(Complex64::new(e, 0.0)).re, 2.0)
}

/// Output of [`semicircle_plus_atomic`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvolutionResult {
    pub measure: GridMeasure,
    pub support_intervals: Vec<(f64, f64)>,
    /// Small-`r` spike predictions lying outside the computed support.
    pub outliers: Vec<f64>,
    /// Parametric samples `(u, v(u), ψ(u))` on each support interval.
    pub parametric: Vec<Vec<(f64, f64, f64)>>,
}

/// Atomic measure `Σ m_i δ_{a_i}` with merged, sorted atoms.
#[derive(Clone, Debug)]
struct Atoms(Vec<(f64, f64)>);

impl Atoms {
    fn new(raw: &[(f64, f64)]) -> Self {
        let mut v: Vec<(f64, f64)> = raw.iter().copied().filter(|(_, m)| *m > 0.0).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (a, m) in v {
            match merged.last_mut() {
                Some(last) if last.0 == a => last.1 += m,
                _ => merged.push((a, m)),
            }
        }
        Atoms(merged)
    }

    /// `∫ dμ_a / ((u−x)² + v²)`.
    fn f(&self, u: f64, v: f64) -> f64 {
        self.0.iter().map(|(a, m)| m / ((u - a).powi(2) + v * v)).sum()
    }

    fn psi(&self, u: f64, v: f64) -> f64 {
        u + self.0.iter().map(|(a, m)| m * (u - a) / ((u - a).powi(2) + v * v)).sum::<f64>()
    }

    fn resolvent(&self, z: Complex64) -> Complex64 {
        self.0.iter().map(|(a, m)| *m / (z - a)).sum()
    }
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    // f(lo) and f(hi) have opposite signs
    let flo_pos = f(lo) > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == flo_pos {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= 1e-15 * mid.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Intervals in `u` where `∫ dμ_a/(u−x)² > 1`, each given by its
/// breakpoints: the two edges plus the minima joining merged clusters.
fn u_intervals(atoms: &Atoms) -> Vec<Vec<f64>> {
    let a = &atoms.0;
    let f0 = |u: f64| atoms.f(u, 0.0) - 1.0;
    let first = a[0].0;
    let last = a[a.len() - 1].0;
    let near = |x: f64| 1e-12 * x.abs().max(1.0);
    let left = bisect(first - 1.0, first - near(first), f0);
    let right = bisect(last + near(last), last + 1.0, f0);
    let mut intervals = Vec::new();
    let mut current = vec![left];
    for w in a.windows(2) {
        let (x0, x1) = (w[0].0, w[1].0);
        // F(·,0) is convex between consecutive atoms
        let (mut lo, mut hi) = (x0, x1);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if f0(m1) < f0(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let umin = 0.5 * (lo + hi);
        // a minimum touching 1 within roundoff joins the two clusters
        if f0(umin) < -CRITICAL_TOLERANCE {
            let r1 = bisect(x0 + near(x0), umin, f0);
            let r2 = bisect(umin, x1 - near(x1), f0);
            current.push(r1);
            intervals.push(std::mem::replace(&mut current, vec![r2]));
        } else {
            current.push(umin);
        }
    }
    current.push(right);
    intervals.push(current);
    intervals
}

/// Slack on `∫ dμ_a/(u−x)² = 1` below which clusters count as touching.
const CRITICAL_TOLERANCE: f64 = 1e-9;

/// `v(u)` by bisection on `(0, 1]`; `∫ dμ_a/v² ≤ 1/v²` bounds the root by 1.
fn solve_v(atoms: &Atoms, u: f64) -> Option<f64> {
    if atoms.f(u, 0.0) <= 1.0 {
        return None;
    }
    if atoms.f(u, 1.0) >= 1.0 {
        return Some(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-12 * hi.max(1e-3) {
        let mid = 0.5 * (lo + hi);
        if atoms.f(u, mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn cosine_nodes(a: f64, b: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|j| {
            let t = std::f64::consts::PI * j as f64 / (count - 1) as f64;
            0.5 * (a + b) - 0.5 * (b - a) * t.cos()
        })
        .collect()
}

/// Default number of output grid points per support interval.
pub const DEFAULT_GRID: usize = 2000;

/// Fewest output points per interval that keep the trapezoid mass within
/// [`MASS_TOLERANCE`].
pub const MIN_GRID: usize = 1500;

/// `μ_a ⊞ semicircle` for a general finite atomic `μ_a`. The output grid is
/// the image `ψ(u_j)` of edge-clustered nodes in `u`, `grid_n` per cluster,
/// carrying the density `v(u_j)/π`; `ψ` flattens where the density is
/// rough, so the grid refines itself there.
pub fn semicircle_plus_atoms(atoms: &[(f64, f64)], grid_n: usize) -> Result<ConvolutionResult> {
    let total: f64 = atoms.iter().map(|(_, m)| m).sum();
    if atoms.is_empty() || (total - 1.0).abs() > 1e-12 || atoms.iter().any(|(a, m)| !a.is_finite() || *m < 0.0) {
        return domain("atoms must be finite with nonnegative masses summing to 1");
    }
    if grid_n < MIN_GRID {
        return domain(format!(
            "grid_n = {grid_n} is below {MIN_GRID}, too coarse for the mass tolerance"
        ));
    }
    let atoms = Atoms::new(atoms);
    let intervals = u_intervals(&atoms);
    let mut parametric = Vec::with_capacity(intervals.len());
    for breaks in &intervals {
        let (ul, ur) = (breaks[0], breaks[breaks.len() - 1]);
        let mut nodes = vec![ul];
        for w in breaks.windows(2) {
            nodes.extend(cosine_nodes(w[0], w[1], grid_n).into_iter().skip(1));
        }
        let mut samples: Vec<(f64, f64, f64)> = nodes
            .par_iter()
            .enumerate()
            .map(|(j, &u)| {
                if j == 0 || j + 1 == nodes.len() {
                    return Ok((u, 0.0, atoms.psi(u, 0.0)));
                }
                let v = match solve_v(&atoms, u) {
                    Some(v) => v,
                    // contact point of touching clusters
                    None if atoms.f(u, 0.0) >= 1.0 - CRITICAL_TOLERANCE => 0.0,
                    None => {
                        return Err(LabError::NonConvergence(format!(
                            "no root for v(u) at interior u = {u}"
                        )))
                    }
                };
                Ok((u, v, atoms.psi(u, v)))
            })
            .collect::<Result<_>>()?;
        // ψ is increasing; near a contact point ψ' vanishes and roundoff may
        // produce tiny reversals
        let scale = ur - ul + 1.0;
        for j in 1..samples.len() {
            let prev = samples[j - 1].2;
            if samples[j].2 < prev {
                if prev - samples[j].2 > 1e-9 * scale {
                    return Err(LabError::Inconsistency(format!(
                        "ψ(u) decreases near u = {} on [{ul}, {ur}]",
                        samples[j].0
                    )));
                }
                samples[j].2 = prev;
            }
        }
        parametric.push(samples);
    }
    let mut grid = Vec::new();
    let mut density = Vec::new();
    for samples in &parametric {
        for &(_, v, x) in samples {
            grid.push(x);
            density.push(v / std::f64::consts::PI);
        }
    }
    let measure = GridMeasure::new(Vec::new(), grid, density)?;
    let support: Vec<(f64, f64)> = parametric
        .iter()
        .map(|s| (s[0].2, s[s.len() - 1].2))
        .collect();
    let outliers = atoms
        .0
        .iter()
        .filter_map(|&(a, _)| {
            let e = if a >= 0.0 {
                semicircle_outlier(a)
            } else {
                semicircle_outlier(-a).map(|e| -e)
            }?;
            (!support.iter().any(|&(l, r)| e >= l && e <= r)).then_some(e)
        })
        .collect();
    Ok(ConvolutionResult {
        measure,
        support_intervals: support,
        outliers,
        parametric,
    })
}

/// `((1−r)δ₀ + rδ_θ) ⊞ semicircle`.
pub fn semicircle_plus_atomic(r: f64, theta: f64, grid_n: usize) -> Result<ConvolutionResult> {
    if !(r > 0.0 && r < 1.0) {
        return domain(format!("r = {r} must lie in (0, 1)"));
    }
    if !theta.is_finite() {
        return domain("theta must be finite");
    }
    semicircle_plus_atoms(&[(0.0, 1.0 - r), (theta, r)], grid_n)
}

/// Largest deviation `|G_{a+b}(ψ(u) + iε) − G_a(u + i v(u))|` over
/// parametric points with `v(u) ≥ v_min`.
pub fn subordination_defect(result: &ConvolutionResult, atoms: &[(f64, f64)], eps: f64, v_min: f64, stride: usize) -> Result<f64> {
    let atoms = Atoms::new(atoms);
    let mut worst: f64 = 0.0;
    for samples in &result.parametric {
        for &(u, v, psi) in samples.iter().step_by(stride.max(1)) {
            if v < v_min {
                continue;
            }
            let lhs = resolvent(&result.measure, Complex64::new(psi, eps))?;
            let rhs = atoms.resolvent(Complex64::new(u, v));
            worst = worst.max((lhs - rhs).norm());
        }
    }
    Ok(worst)
}

/// Eigenvalues of `W + diag(θ,…,θ,0,…,0)` with `W` a real Wigner matrix
/// normalized to the unit semicircle and `round(r·n)` entries equal to θ.
pub fn wigner_plus_diagonal_spectrum(n: usize, r: f64, theta: f64, seed: u64) -> Result<Vec<f64>> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    if n == 0 {
        return domain("dimension must be positive");
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (n as f64).sqrt();
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let g: f64 = StandardNormal.sample(&mut rng);
            if i == j {
                m[(i, i)] = g * scale * std::f64::consts::SQRT_2;
            } else {
                m[(i, j)] = g * scale;
                m[(j, i)] = g * scale;
            }
        }
    }
    let spikes = (r * n as f64).round() as usize;
    for i in 0..spikes.min(n) {
        m[(i, i)] += theta;
    }
    let mut eig: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    Ok(eig)
}

/// Kolmogorov–Smirnov distance between sorted samples and a measure.
pub fn ks_distance(sorted: &[f64], measure: &GridMeasure) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = measure.cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}
