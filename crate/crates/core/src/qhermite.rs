//! q-Hermite polynomials in the monic combinatorial normalization
//! `x·H_n = H_{n+1} + [n]_q·H_{n-1}`, their linearization coefficients, the
//! q-Gaussian measure ν_q with a θ-substituted Gauss–Legendre quadrature, and
//! the conditional q-normal (Mehler) kernel.

use std::collections::HashMap;

use num_traits::{One, Zero};

use crate::chordcombi::transfer_vacuum_moment;
use crate::error::{domain, LabError, Result};
use crate::qcore::{
    binomial, int, q_binomial_row, q_factorial, q_integer, rational_pow, Exponents, MultiPoly,
    Rational,
};

/// Largest q accepted by the floating-point density and kernel paths.
pub const Q_MAX: f64 = 0.99;

/// Coefficients of a finite linear combination of q-Hermite polynomials,
/// indexed by degree. Trailing zeros are trimmed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HermiteExpansion {
    coeffs: Vec<MultiPoly>,
}

impl HermiteExpansion {
    pub fn new(mut coeffs: Vec<MultiPoly>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        HermiteExpansion { coeffs }
    }

    pub fn coeffs(&self) -> &[MultiPoly] {
        &self.coeffs
    }

    /// Coefficient of `H_d`; zero beyond the stored degree.
    pub fn coeff(&self, d: usize) -> MultiPoly {
        self.coeffs.get(d).cloned().unwrap_or_default()
    }

    /// Highest degree with a nonzero coefficient.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// `H_n` as a polynomial in x: entry `i` is the coefficient of `x^i`.
pub fn hermite_in_x(n: usize) -> Vec<MultiPoly> {
    let mut prev: Vec<MultiPoly> = Vec::new();
    let mut cur = vec![MultiPoly::one()];
    for j in 0..n {
        // H_{j+1} = x·H_j − [j]_q·H_{j−1}
        let mut next = vec![MultiPoly::zero(); j + 2];
        for (i, c) in cur.iter().enumerate() {
            next[i + 1] += c;
        }
        let qj = q_integer(j as u32);
        for (i, c) in prev.iter().enumerate() {
            next[i] += -(&qj * c);
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// Expansion of `x^k` in the q-Hermite basis; the coefficient of `H_{k-2m}`
/// is `c_{m,k}`.
pub fn monomial_to_hermite(k: usize) -> HermiteExpansion {
    let mut cur = vec![MultiPoly::one()];
    for _ in 0..k {
        let mut next = vec![MultiPoly::zero(); cur.len() + 1];
        for (j, c) in cur.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            next[j + 1] += c;
            if j > 0 {
                next[j - 1] += &q_integer(j as u32) * c;
            }
        }
        cur = next;
    }
    HermiteExpansion::new(cur)
}

/// Table of `c_{m,k}` for `k = 0..=k_max`: `table[k][m]`.
pub fn c_table(k_max: usize) -> Vec<Vec<MultiPoly>> {
    (0..=k_max)
        .map(|k| {
            let e = monomial_to_hermite(k);
            (0..=k / 2).map(|m| e.coeff(k - 2 * m)).collect()
        })
        .collect()
}

/// Closed-form alternating sum for `c_{m,n}` evaluated at a rational `q ≠ 1`.
pub fn c_closed_form(m: usize, n: usize, q_value: &Rational) -> Result<Rational> {
    if 2 * m > n {
        return domain(format!("c_closed_form: 2m = {} exceeds n = {n}", 2 * m));
    }
    if q_value.is_one() {
        return domain("c_closed_form: q = 1 is a pole of the prefactor");
    }
    let mut sum = Rational::zero();
    for j in 0..=m {
        let sign = if j % 2 == 0 { int(1) } else { int(-1) };
        let qpow = rational_pow(q_value, (j + j * j.saturating_sub(1) / 2) as u32);
        let ratio = Rational::new(
            ((n - 2 * m + 2 * j + 1) as i64).into(),
            ((n + 1) as i64).into(),
        );
        let binom = Rational::from_integer(binomial((n + 1) as u64, (m - j) as u64));
        let top = (n - 2 * m + j) as u32;
        let qbin = q_binomial_row(top)[j]
            .eval(q_value, &Rational::zero(), &Rational::zero());
        sum += sign * qpow * ratio * binom * qbin;
    }
    let denom = rational_pow(&(Rational::one() - q_value), m as u32);
    Ok(sum / denom)
}

/// Memoized linearization coefficients keyed by the sorted list of positive
/// degrees. Pass one instance through a computation to share work.
#[derive(Default)]
pub struct LinearizationCache {
    values: HashMap<Vec<u32>, MultiPoly>,
    binomial_rows: Vec<Vec<MultiPoly>>,
    factorials: Vec<MultiPoly>,
}

impl LinearizationCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn q_binomial(&mut self, n: u32, k: u32) -> &MultiPoly {
        while self.binomial_rows.len() <= n as usize {
            let next = self.binomial_rows.len() as u32;
            self.binomial_rows.push(q_binomial_row(next));
        }
        &self.binomial_rows[n as usize][k as usize]
    }

    fn q_factorial(&mut self, n: u32) -> &MultiPoly {
        while self.factorials.len() <= n as usize {
            let next = self.factorials.len() as u32;
            self.factorials.push(q_factorial(next));
        }
        &self.factorials[n as usize]
    }

    /// Vacuum expectation of `H_{d_1} ⋯ H_{d_l}` under ν_q.
    pub fn get(&mut self, degrees: &[u32]) -> MultiPoly {
        let mut key: Vec<u32> = degrees.iter().copied().filter(|&d| d > 0).collect();
        key.sort_unstable();
        if let Some(v) = self.values.get(&key) {
            return v.clone();
        }
        let v = self.compute(&key);
        self.values.insert(key, v.clone());
        v
    }

    fn compute(&mut self, degrees: &[u32]) -> MultiPoly {
        let total: u32 = degrees.iter().sum();
        if total % 2 == 1 {
            return MultiPoly::zero();
        }
        let l = degrees.len();
        if l == 0 {
            return MultiPoly::one();
        }
        let pairs: Vec<(usize, usize)> = (0..l)
            .flat_map(|i| (i + 1..l).map(move |j| (i, j)))
            .collect();
        let mut counts = vec![vec![0u32; l]; l];
        let mut remaining = degrees.to_vec();
        let mut acc = MultiPoly::zero();
        self.enumerate(&pairs, 0, &mut counts, &mut remaining, degrees, &mut acc);
        acc
    }

    fn enumerate(
        &mut self,
        pairs: &[(usize, usize)],
        idx: usize,
        counts: &mut Vec<Vec<u32>>,
        remaining: &mut Vec<u32>,
        degrees: &[u32],
        acc: &mut MultiPoly,
    ) {
        if idx == pairs.len() {
            if remaining.iter().all(|&r| r == 0) {
                let w = self.weight(counts, degrees);
                *acc += w;
            }
            return;
        }
        let (i, j) = pairs[idx];
        let hi = remaining[i].min(remaining[j]);
        // the last pair touching row i must exhaust it
        let last_for_i = j == degrees.len() - 1;
        let lo = if last_for_i { remaining[i] } else { 0 };
        if lo > hi {
            return;
        }
        for v in lo..=hi {
            counts[i][j] = v;
            counts[j][i] = v;
            remaining[i] -= v;
            remaining[j] -= v;
            self.enumerate(pairs, idx + 1, counts, remaining, degrees, acc);
            remaining[i] += v;
            remaining[j] += v;
        }
        counts[i][j] = 0;
        counts[j][i] = 0;
    }

    fn weight(&mut self, counts: &[Vec<u32>], degrees: &[u32]) -> MultiPoly {
        let l = degrees.len();
        let mut w = MultiPoly::one();
        for i in 0..l {
            let mut left = degrees[i];
            for j in 0..l {
                if j == i || counts[i][j] == 0 {
                    continue;
                }
                let b = self.q_binomial(left, counts[i][j]).clone();
                w = &w * &b;
                left -= counts[i][j];
            }
        }
        for i in 0..l {
            for j in i + 1..l {
                if counts[i][j] > 1 {
                    let f = self.q_factorial(counts[i][j]).clone();
                    w = &w * &f;
                }
            }
        }
        let mut b = 0u32;
        for i in 0..l {
            for j in i + 1..l {
                for m in j + 1..l {
                    for p in m + 1..l {
                        b += counts[i][m] * counts[j][p];
                    }
                }
            }
        }
        w.shift(Exponents::new(b, 0, 0))
    }
}

/// Vacuum expectation `∫ ∏ H_{d_j} dν_q` as a polynomial in q.
pub fn linearization(degrees: &[u32]) -> MultiPoly {
    LinearizationCache::new().get(degrees)
}

/// The 2k-th moment of ν_q, `Σ_{π ∈ P₂(2k)} q^{cr(π)}`.
pub fn rt_moment(k: usize) -> MultiPoly {
    transfer_vacuum_moment(2 * k, k).expect("truncation k is always sufficient")
}

/// Default number of product factors for ν_q at a given q: the smallest K
/// with `q^K < 1e-16`.
pub fn default_truncation(q: f64) -> usize {
    if q <= 0.0 {
        0
    } else {
        ((1e-16f64).ln() / q.ln()).ceil() as usize
    }
}

fn check_q(q: f64) -> Result<()> {
    if !(0.0..=Q_MAX).contains(&q) {
        return domain(format!("q = {q} outside [0, {Q_MAX}]"));
    }
    Ok(())
}

fn check_truncation(q: f64, k: usize) -> Result<()> {
    if q > 0.0 && q.powi(k as i32) >= 1e-16 {
        return Err(LabError::Truncation(format!(
            "K = {k} leaves q^K = {:e} >= 1e-16",
            q.powi(k as i32)
        )));
    }
    Ok(())
}

/// Unnormalized θ-density of ν_q: `(2/π)·sin²θ·∏_{k=1}^K (1−q^k)(1−2q^k cos 2θ+q^{2k})`.
fn theta_density(theta: f64, q: f64, k_max: usize) -> f64 {
    let s = theta.sin();
    let c2 = (2.0 * theta).cos();
    let mut prod = 1.0;
    let mut qk = 1.0;
    for _ in 0..k_max {
        qk *= q;
        prod *= (1.0 - qk) * (1.0 - 2.0 * qk * c2 + qk * qk);
    }
    2.0 / std::f64::consts::PI * s * s * prod
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 0 { 0.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Quadrature rule for ν_q in the variable x, built by substituting
/// `x = 2cos θ/√(1−q)` and integrating over θ ∈ [0, π].
#[derive(Clone, Debug)]
pub struct QGaussianQuadrature {
    pub q: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub truncation_k: usize,
    /// Total weight before renormalization; close to 1 when the product
    /// truncation is adequate.
    pub raw_mass: f64,
}

impl QGaussianQuadrature {
    pub const DEFAULT_PANELS: usize = 64;
    pub const DEFAULT_POINTS: usize = 8;

    pub fn new(q: f64) -> Result<Self> {
        Self::with_options(q, Self::DEFAULT_PANELS, Self::DEFAULT_POINTS, default_truncation(q))
    }

    pub fn with_options(q: f64, panels: usize, points: usize, truncation_k: usize) -> Result<Self> {
        check_q(q)?;
        check_truncation(q, truncation_k)?;
        if panels == 0 || points == 0 {
            return domain("quadrature needs at least one panel and one point");
        }
        let (gx, gw) = gauss_legendre(points);
        let h = std::f64::consts::PI / panels as f64;
        let scale = 2.0 / (1.0 - q).sqrt();
        let mut nodes = Vec::with_capacity(panels * points);
        let mut weights = Vec::with_capacity(panels * points);
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for (x, w) in gx.iter().zip(&gw) {
                let theta = mid + 0.5 * h * x;
                nodes.push(scale * theta.cos());
                weights.push(0.5 * h * w * theta_density(theta, q, truncation_k));
            }
        }
        let raw_mass: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= raw_mass;
        }
        Ok(QGaussianQuadrature {
            q,
            nodes,
            weights,
            truncation_k,
            raw_mass,
        })
    }

    pub fn edge(&self) -> f64 {
        2.0 / (1.0 - self.q).sqrt()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Density of ν_q with respect to x, renormalized by the same constant
    /// as the weights.
    pub fn density(&self, x: f64) -> Result<f64> {
        let edge = self.edge();
        if x.abs() > edge * (1.0 + 1e-12) {
            return domain(format!("x = {x} outside support [-{edge}, {edge}]"));
        }
        let theta = (x / edge).clamp(-1.0, 1.0).acos();
        let s = theta.sin();
        if s == 0.0 {
            return Ok(0.0);
        }
        // dx = 2 sinθ/√(1−q) dθ
        let jac = s * edge;
        Ok(theta_density(theta, self.q, self.truncation_k) / jac / self.raw_mass)
    }
}

/// Density of ν_q at x.
pub fn nu_q_density(x: f64, q: f64, truncation_k: usize) -> Result<f64> {
    QGaussianQuadrature::with_options(
        q,
        QGaussianQuadrature::DEFAULT_PANELS,
        QGaussianQuadrature::DEFAULT_POINTS,
        truncation_k,
    )?
    .density(x)
}

/// Numerical values `H_0(x), …, H_n(x)`.
pub fn hermite_values(n: usize, x: f64, q: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(x);
    }
    let mut qint = 1.0;
    for j in 1..n {
        // qint = [j]_q
        out.push(x * out[j] - qint * out[j - 1]);
        qint = 1.0 + q * qint;
    }
    out
}

/// Mehler-type kernel `Σ_{n ≤ truncation} r^n H_n(x) H_n(y) / [n]_q!`.
///
/// Fails with non-convergence if the terms have not fallen below roundoff
/// relative to the partial sum by the time the truncation is reached.
pub fn conditional_kernel(x: f64, y: f64, r: f64, q: f64, truncation: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return domain(format!("q = {q} outside [0, 1)"));
    }
    if !(0.0..1.0).contains(&r) {
        return domain(format!("r = {r} outside [0, 1)"));
    }
    let edge = 2.0 / (1.0 - q).sqrt();
    if x.abs() > edge * (1.0 + 1e-12) || y.abs() > edge * (1.0 + 1e-12) {
        return domain("kernel arguments outside the support of ν_q");
    }
    // orthonormal recurrence h_n = H_n/√[n]!
    let (mut hx0, mut hx1) = (1.0f64, x);
    let (mut hy0, mut hy1) = (1.0f64, y);
    let mut sum = 1.0;
    let mut rn = 1.0;
    let mut qint = 1.0; // [n]_q for current n
    let mut quiet = 0;
    for n in 1..=truncation {
        rn *= r;
        let term = rn * hx1 * hy1;
        sum += term;
        if term.abs() <= 1e-16 * sum.abs().max(1.0) {
            quiet += 1;
            if quiet >= 5 {
                return Ok(sum);
            }
        } else {
            quiet = 0;
        }
        let next_int = 1.0 + q * qint; // [n+1]_q
        let nx = (x * hx1 - qint.sqrt() * hx0) / next_int.sqrt();
        let ny = (y * hy1 - qint.sqrt() * hy0) / next_int.sqrt();
        hx0 = hx1;
        hx1 = nx;
        hy0 = hy1;
        hy1 = ny;
        qint = next_int;
        let _ = n;
    }
    Err(LabError::NonConvergence(format!(
        "kernel series not settled after {truncation} terms at r = {r}, q = {q}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{rat, Var};

    fn poly_q(c: &[i64]) -> MultiPoly {
        MultiPoly::from_q_coeffs(c)
    }

    #[test]
    fn hermite_in_x_low_degrees() {
        assert_eq!(hermite_in_x(0), vec![MultiPoly::one()]);
        let h2 = hermite_in_x(2);
        assert_eq!(h2[0], -MultiPoly::one());
        assert!(h2[1].is_zero());
        assert_eq!(h2[2], MultiPoly::one());
        let h3 = hermite_in_x(3);
        assert_eq!(h3[1], -(&q_integer(1) + &q_integer(2)));
        assert_eq!(h3[3], MultiPoly::one());
    }

    #[test]
    fn monomial_expansions() {
        assert_eq!(monomial_to_hermite(2).coeff(0), MultiPoly::one());
        assert_eq!(monomial_to_hermite(3).coeff(1), poly_q(&[2, 1]));
        let e4 = monomial_to_hermite(4);
        assert_eq!(e4.coeff(2), poly_q(&[3, 2, 1]));
        assert_eq!(e4.coeff(0), poly_q(&[2, 1]));
        assert_eq!(e4.coeff(4), MultiPoly::one());
    }

    #[test]
    fn monomial_parity() {
        for k in 0..10 {
            let e = monomial_to_hermite(k);
            for (d, c) in e.coeffs().iter().enumerate() {
                if d % 2 != k % 2 {
                    assert!(c.is_zero());
                }
            }
        }
    }

    #[test]
    fn basis_change_round_trip() {
        // x^k = Σ c_{m,k} H_{k-2m}, and H_d written in x recovers x^k
        for k in 0..8 {
            let e = monomial_to_hermite(k);
            let mut x_coeffs = vec![MultiPoly::zero(); k + 1];
            for (d, c) in e.coeffs().iter().enumerate() {
                for (i, h) in hermite_in_x(d).iter().enumerate() {
                    x_coeffs[i] += c * h;
                }
            }
            for (i, c) in x_coeffs.iter().enumerate() {
                let expect = if i == k { MultiPoly::one() } else { MultiPoly::zero() };
                assert_eq!(c, &expect, "k={k} i={i}");
            }
        }
    }

    #[test]
    fn closed_form_anchors() {
        assert_eq!(c_closed_form(0, 5, &rat(1, 3)).unwrap(), int(1));
        assert_eq!(c_closed_form(1, 3, &rat(1, 2)).unwrap(), rat(5, 2));
        assert_eq!(c_closed_form(2, 4, &rat(1, 3)).unwrap(), rat(7, 3));
        assert!(c_closed_form(1, 3, &int(1)).is_err());
        assert!(c_closed_form(3, 4, &rat(1, 2)).is_err());
    }

    #[test]
    fn closed_form_matches_recurrence() {
        let table = c_table(12);
        for qv in [int(0), rat(1, 3), rat(1, 2)] {
            for (k, row) in table.iter().enumerate() {
                for (m, c) in row.iter().enumerate() {
                    let rec = c.substitute(Var::Q, &qv).coeff(Exponents::ZERO);
                    assert_eq!(rec, c_closed_form(m, k, &qv).unwrap(), "m={m} k={k} q={qv}");
                }
            }
        }
    }

    #[test]
    fn linearization_anchors() {
        assert_eq!(linearization(&[1, 1]), MultiPoly::one());
        assert_eq!(linearization(&[2, 2]), poly_q(&[1, 1]));
        assert_eq!(linearization(&[1, 1, 1, 1]), poly_q(&[2, 1]));
        assert!(linearization(&[1, 2]).is_zero());
        assert!(linearization(&[3]).is_zero());
        assert_eq!(linearization(&[]), MultiPoly::one());
        assert_eq!(linearization(&[0, 2, 0, 2]), poly_q(&[1, 1]));
    }

    #[test]
    fn linearization_pair_is_factorial() {
        for n in 0..7 {
            assert_eq!(linearization(&[n, n]), q_factorial(n));
        }
    }

    #[test]
    fn linearization_of_ones_is_rt() {
        for k in 1..5 {
            assert_eq!(linearization(&vec![1; 2 * k]), rt_moment(k));
        }
    }

    #[test]
    fn rt_anchors() {
        assert_eq!(rt_moment(1), MultiPoly::one());
        assert_eq!(rt_moment(2), poly_q(&[2, 1]));
        assert_eq!(rt_moment(3), poly_q(&[5, 6, 3, 1]));
    }

    #[test]
    fn rt_limits() {
        let catalan = [1, 1, 2, 5, 14, 42, 132, 429];
        let mut dfact = 1i64;
        for k in 1..8 {
            dfact *= 2 * k as i64 - 1;
            let p = rt_moment(k);
            assert_eq!(p.eval(&int(1), &int(0), &int(0)), int(dfact));
            assert_eq!(p.eval(&int(0), &int(0), &int(0)), int(catalan[k]));
        }
    }

    #[test]
    fn gauss_legendre_exactness() {
        let (x, w) = gauss_legendre(8);
        for deg in 0..16 {
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((s - exact).abs() < 1e-14, "deg {deg}: {s}");
        }
    }

    #[test]
    fn density_anchors() {
        let d = nu_q_density(0.0, 0.0, 0).unwrap();
        assert!((d - 1.0 / std::f64::consts::PI).abs() < 1e-12);
        for x in [-1.5, 0.3, 1.9] {
            let d = nu_q_density(x, 0.0, 0).unwrap();
            let sc = (4.0 - x * x).sqrt() / (2.0 * std::f64::consts::PI);
            assert!((d - sc).abs() < 1e-12);
        }
        let q = 0.4;
        let edge = 2.0 / (1.0f64 - q).sqrt();
        assert_eq!(nu_q_density(edge, q, default_truncation(q)).unwrap(), 0.0);
        assert!(nu_q_density(edge + 0.1, q, default_truncation(q)).is_err());
        assert!(nu_q_density(0.0, 0.995, 10_000).is_err());
        assert!(matches!(nu_q_density(0.0, 0.5, 3), Err(LabError::Truncation(_))));
    }

    #[test]
    fn quadrature_moments_match_rt() {
        for q in [0.0, 0.5, 0.9] {
            let quad = QGaussianQuadrature::new(q).unwrap();
            assert!((quad.raw_mass - 1.0).abs() < 1e-10, "raw mass {}", quad.raw_mass);
            for k in 1..=3 {
                let num = quad.integrate(|x| x.powi(2 * k as i32));
                let exact = rt_moment(k).eval_f64(q, 0.0, 0.0);
                assert!((num - exact).abs() < 1e-7, "q={q} k={k}");
            }
        }
    }

    #[test]
    fn quadrature_fourth_moment_at_half() {
        let quad = QGaussianQuadrature::new(0.5).unwrap();
        assert!((quad.integrate(|x| x.powi(4)) - 2.5).abs() < 1e-8);
    }

    #[test]
    fn orthogonality() {
        for q in [0.0, 0.3, 0.7] {
            let quad = QGaussianQuadrature::new(q).unwrap();
            for m in 0..=8 {
                for n in 0..=8 {
                    let num = quad.integrate(|x| {
                        let h = hermite_values(8, x, q);
                        h[m] * h[n]
                    });
                    let exact = if m == n {
                        q_factorial(n as u32).eval_f64(q, 0.0, 0.0)
                    } else {
                        0.0
                    };
                    assert!((num - exact).abs() < 1e-8, "q={q} m={m} n={n}: {num}");
                }
            }
        }
    }

    #[test]
    fn hermite_values_match_symbolic() {
        let q = 0.3;
        let x = 0.7;
        let vals = hermite_values(6, x, q);
        for (n, v) in vals.iter().enumerate() {
            let sym: f64 = hermite_in_x(n)
                .iter()
                .enumerate()
                .map(|(i, c)| c.eval_f64(q, 0.0, 0.0) * x.powi(i as i32))
                .sum();
            assert!((v - sym).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_properties() {
        assert_eq!(conditional_kernel(0.3, -1.0, 0.0, 0.5, 50).unwrap(), 1.0);
        let (q, r) = (0.5, 0.6);
        let quad = QGaussianQuadrature::new(q).unwrap();
        for x in [-1.2, 0.0, 0.8] {
            let mass = quad.integrate(|y| conditional_kernel(x, y, r, q, 400).unwrap());
            assert!((mass - 1.0).abs() < 1e-8);
            let h2 = quad.integrate(|y| {
                (y * y - 1.0) * conditional_kernel(x, y, r, q, 400).unwrap()
            });
            assert!((h2 - r * r * (x * x - 1.0)).abs() < 1e-6);
        }
        assert!(matches!(
            conditional_kernel(0.5, 0.5, 0.9, 0.5, 3),
            Err(LabError::NonConvergence(_))
        ));
    }
}
