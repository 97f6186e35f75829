//! Reduced moments `m_n` of the SYK Hamiltonian with a constant diagonal
//! perturbation, as exact polynomials in (q, q̃, θ).
//!
//! Two independent routes are provided: the interval-sum formula
//! ([`reduced_moment`]) and extraction from the generating function
//! `n·[z^n]⟨log 1/(1 − B(z, x₀))⟩` ([`reduced_moment_gf`]). The module also
//! carries the q̃ ∈ {0, 1} limit formulas, the continued fraction for B, and
//! the partition-function integral `Z_n`.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, LabError, Result};
use crate::qcore::{binomial, int, Exponents, MultiPoly, Rational, Var};
use crate::qhermite::{
    c_table, default_truncation, rt_moment, HermiteExpansion, LinearizationCache,
    QGaussianQuadrature, Q_MAX,
};

/// Largest n accepted by the symbolic moment routes.
pub const MAX_N: usize = 14;

fn check_n(n: usize) -> Result<()> {
    if n == 0 || n > MAX_N {
        return domain(format!("n = {n} outside 1..={MAX_N}"));
    }
    Ok(())
}

fn theta_pow(k: usize) -> Exponents {
    Exponents::new(0, 0, k as u32)
}

/// `E[x₁^k | x₀]` in the Hermite basis of x₀: `Σ_m c_{m,k} q̃^{(k−2m)/2} H_{k−2m}`.
///
/// The q̃ slot of each coefficient counts powers of √q̃.
pub fn conditional_moment_expansion(k: usize) -> HermiteExpansion {
    conditional_from_table(k, &c_table(k))
}

fn conditional_from_table(k: usize, ctab: &[Vec<MultiPoly>]) -> HermiteExpansion {
    let mut coeffs = vec![MultiPoly::zero(); k + 1];
    for (m, c) in ctab[k].iter().enumerate() {
        let s = k - 2 * m;
        coeffs[s] = c.shift(Exponents::new(0, s as u32, 0));
    }
    HermiteExpansion::new(coeffs)
}

/// Integer partitions of `total` as weakly decreasing lists.
fn integer_partitions(total: usize) -> Vec<Vec<usize>> {
    fn rec(rest: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest == 0 {
            out.push(cur.clone());
            return;
        }
        for p in (1..=rest.min(max)).rev() {
            cur.push(p);
            rec(rest - p, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, total, &mut Vec::new(), &mut out);
    out
}

/// Number of distinct orderings of a multiset.
fn orderings(parts: &[usize]) -> Rational {
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for &p in parts {
        *counts.entry(p).or_default() += 1;
    }
    let mut acc = num_bigint::BigInt::one();
    let mut placed = 0u64;
    for &c in counts.values() {
        placed += c;
        acc *= binomial(placed, c);
    }
    Rational::from_integer(acc)
}

/// Contribution of one choice of interval sizes `k_1..k_l`: per-interval sums
/// over `c_{m_i,k_i}`, paired across intervals by the linearization
/// coefficient of the leftover singletons, each singleton weighted √q̃.
fn interval_sum(parts: &[usize], ctab: &[Vec<MultiPoly>], cache: &mut LinearizationCache) -> MultiPoly {
    let mut by_singletons: BTreeMap<Vec<u32>, MultiPoly> = BTreeMap::new();
    by_singletons.insert(Vec::new(), MultiPoly::one());
    for &k in parts {
        let mut next: BTreeMap<Vec<u32>, MultiPoly> = BTreeMap::new();
        for (s, acc) in &by_singletons {
            for (m, c) in ctab[k].iter().enumerate() {
                let mut key = s.clone();
                key.push((k - 2 * m) as u32);
                key.sort_unstable();
                *next.entry(key).or_default() += acc * c;
            }
        }
        by_singletons = next;
    }
    let mut total = MultiPoly::zero();
    for (s, c) in by_singletons {
        let singles: u32 = s.iter().sum();
        let lin = cache.get(&s);
        if lin.is_zero() {
            continue;
        }
        total += (&c * &lin).shift(Exponents::new(0, singles / 2, 0));
    }
    total
}

/// `m_n` by the interval-sum formula.
pub fn reduced_moment(n: usize) -> Result<MultiPoly> {
    check_n(n)?;
    let ctab = c_table(n);
    let mut cache = LinearizationCache::new();
    Ok(reduced_moment_with(n, &ctab, &mut cache))
}

fn reduced_moment_with(n: usize, ctab: &[Vec<MultiPoly>], cache: &mut LinearizationCache) -> MultiPoly {
    let mut acc = MultiPoly::var_pow(Var::Theta, n as u32);
    for j in 1..=(n - 1) / 2 {
        let slots = n - 2 * j;
        let cyclic = Rational::new((n as i64).into(), (slots as i64).into());
        let mut inner = MultiPoly::zero();
        for parts in integer_partitions(2 * j) {
            let l = parts.len();
            if l > slots.min(2 * j) {
                continue;
            }
            let weight = orderings(&parts)
                * Rational::from_integer(binomial(slots as u64, l as u64));
            inner += interval_sum(&parts, ctab, cache).scale(&weight);
        }
        acc += inner.scale(&cyclic).shift(theta_pow(slots));
    }
    acc
}

/// Formal products of q-Hermite polynomials: sorted nonzero degrees mapped to
/// a coefficient.
type FormalSeries = BTreeMap<Vec<u32>, MultiPoly>;

fn formal_mul(a: &FormalSeries, b: &HermiteExpansion) -> FormalSeries {
    let mut out = FormalSeries::new();
    for (key, ca) in a {
        for (d, cb) in b.coeffs().iter().enumerate() {
            if cb.is_zero() {
                continue;
            }
            let mut k = key.clone();
            if d > 0 {
                let pos = k.partition_point(|&x| x < d as u32);
                k.insert(pos, d as u32);
            }
            *out.entry(k).or_default() += ca * cb;
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

fn formal_add(into: &mut FormalSeries, other: &FormalSeries) {
    for (k, c) in other {
        *into.entry(k.clone()).or_default() += c;
    }
    into.retain(|_, c| !c.is_zero());
}

/// Truncated series of `B(z, x₀)`; `coeffs[k]` is the coefficient of `z^{k+1}`,
/// equal to θ times the k-th conditional moment.
#[derive(Clone, Debug)]
pub struct BSeries {
    pub order: usize,
    pub coeffs: Vec<HermiteExpansion>,
}

impl BSeries {
    pub fn new(order: usize) -> Self {
        let ctab = c_table(order);
        let coeffs = (0..=order)
            .map(|k| {
                let e = conditional_from_table(k, &ctab);
                HermiteExpansion::new(e.coeffs().iter().map(|c| c.shift(theta_pow(1))).collect())
            })
            .collect();
        BSeries { order, coeffs }
    }

    /// Numerical partial sum `Σ_{k ≤ order} coeffs[k] z^{k+1}` at x₀.
    pub fn evaluate(&self, z: f64, x0: f64, q: f64, qt: f64, theta: f64) -> f64 {
        let sqrt_qt = qt.sqrt();
        let h = crate::qhermite::hermite_values(self.order, x0, q);
        let mut total = 0.0;
        for (k, e) in self.coeffs.iter().enumerate() {
            let mut bk = 0.0;
            for (d, c) in e.coeffs().iter().enumerate() {
                // qt slot holds √q̃ powers
                bk += c.eval_f64(q, sqrt_qt, theta) * h[d];
            }
            total += bk * z.powi(k as i32 + 1);
        }
        total
    }
}

/// `m_n = n·[z^n]⟨log 1/(1 − B)⟩`, with every vacuum expectation of a
/// Hermite product resolved by linearization at the end.
pub fn reduced_moment_gf(n: usize) -> Result<MultiPoly> {
    check_n(n)?;
    let ctab = c_table(n);
    let mut cache = LinearizationCache::new();
    // b[k] = conditional moment of order k (θ applied separately)
    let b: Vec<HermiteExpansion> = (0..n).map(|k| conditional_from_table(k, &ctab)).collect();
    // powers[d] = [z^d] (Σ_k b_k z^k)^r, updated for r = 1, 2, …
    let mut powers: Vec<FormalSeries> = (0..n)
        .map(|d| formal_mul(&FormalSeries::from([(Vec::new(), MultiPoly::one())]), &b[d]))
        .collect();
    let mut total = MultiPoly::zero();
    for r in 1..=n {
        // [z^n] B^r = θ^r [z^{n−r}] (Σ b_k z^k)^r
        let mut expect = MultiPoly::zero();
        for (key, c) in &powers[n - r] {
            let lin = cache.get(key);
            if !lin.is_zero() {
                expect += c * &lin;
            }
        }
        let weight = Rational::new((n as i64).into(), (r as i64).into());
        total += expect.scale(&weight).shift(theta_pow(r));
        if r == n {
            break;
        }
        let mut next: Vec<FormalSeries> = vec![FormalSeries::new(); n];
        for d in 0..n - r {
            for k in 0..=d {
                let prod = formal_mul(&powers[d - k], &b[k]);
                formal_add(&mut next[d], &prod);
            }
        }
        powers = next;
    }
    total.halve_qt()
}

/// `⟨tr H^n⟩ = r·m_n + E[x^n]` with `E[x^n]` the pure-SYK moment.
pub fn full_moment(n: usize, r: &Rational) -> Result<MultiPoly> {
    if !(r > &Rational::zero() && r <= &Rational::one()) {
        return domain(format!("r = {r} outside (0, 1]"));
    }
    let mut out = reduced_moment(n)?.scale(r);
    if n % 2 == 0 {
        out += rt_moment(n / 2);
    }
    Ok(out)
}

/// Moments of the single-entry perturbation: a Boolean moment-cumulant sum
/// over multisets `{k_i}` with `Σ i·k_i = j` of Riordan–Touchard products.
pub fn boolean_moment_c1(n: usize) -> Result<MultiPoly> {
    check_n(n)?;
    let mut acc = MultiPoly::var_pow(Var::Theta, n as u32);
    let rts: Vec<MultiPoly> = (0..=n / 2).map(rt_moment).collect();
    for j in 1..=(n - 1) / 2 {
        let slots = n - 2 * j;
        let cyclic = Rational::new((n as i64).into(), (slots as i64).into());
        for parts in integer_partitions(j) {
            let used = parts.len();
            if used > slots {
                continue;
            }
            // multinomial (slots; k_1, …, k_j, slots − Σk) = C(slots, used)·orderings
            let mult = Rational::from_integer(binomial(slots as u64, used as u64))
                * orderings(&parts);
            let mut prod = MultiPoly::one();
            for &i in &parts {
                prod = &prod * &rts[i];
            }
            acc += prod.scale(&(mult * &cyclic)).shift(theta_pow(slots));
        }
    }
    Ok(acc)
}

/// q̃ = 1 limit: `Σ_{i<n} C(n, i) E[x^i] θ^{n−i}`.
pub fn binomial_shift_moment(n: usize) -> MultiPoly {
    let mut acc = MultiPoly::zero();
    for i in (0..n).step_by(2) {
        let c = Rational::from_integer(binomial(n as u64, i as u64));
        acc += rt_moment(i / 2).scale(&c).shift(theta_pow(n - i));
    }
    acc
}

/// Which end of the q̃ range to check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QtLimit {
    Zero,
    One,
}

/// Specializes `m_n` at q̃ ∈ {0, 1} and checks it against the independent
/// limit formula, returning the specialized polynomial.
pub fn qtilde_limit_check(n: usize, which: QtLimit) -> Result<MultiPoly> {
    let m = reduced_moment(n)?;
    let (value, reference) = match which {
        QtLimit::Zero => (m.substitute(Var::Qt, &int(0)), boolean_moment_c1(n)?),
        QtLimit::One => (m.substitute(Var::Qt, &int(1)), binomial_shift_moment(n)),
    };
    if value != reference {
        return Err(LabError::Inconsistency(format!(
            "n = {n}, {which:?}: {value} differs from {reference}"
        )));
    }
    Ok(value)
}

/// B(z, x₀) from its Jacobi continued fraction with levels
/// `1 − √q̃ qⁿ x₀ z − (1 − q̃ qⁿ)[n+1]_q z² / (…)`.
pub fn b_continued_fraction(
    z: f64,
    x0: f64,
    q: f64,
    qt: f64,
    theta: f64,
    depth: usize,
) -> Result<f64> {
    if depth < 20 {
        return domain(format!("depth = {depth} is below 20"));
    }
    let sqrt_qt = qt.sqrt();
    let q_int = |m: f64| if q == 1.0 { m } else { (1.0 - q.powf(m)) / (1.0 - q) };
    // f_n = 1 − b_n z − λ_{n+1} z² / f_{n+1}, with b_n = √q̃ qⁿ x₀ and
    // λ_n = (1 − q̃ q^{n−1}) [n]_q
    let eval = |levels: usize| -> f64 {
        let mut f = 1.0 - sqrt_qt * q.powf(levels as f64) * x0 * z;
        for level in (0..levels).rev() {
            let lf = level as f64;
            let lambda = (1.0 - qt * q.powf(lf)) * q_int(lf + 1.0);
            f = 1.0 - sqrt_qt * q.powf(lf) * x0 * z - lambda * z * z / f;
        }
        theta * z / f
    };
    let full = eval(depth);
    let shorter = eval(depth - 5);
    if !full.is_finite() || (full - shorter).abs() > 1e-13 * full.abs().max(1e-300) {
        return Err(LabError::NonConvergence(format!(
            "continued fraction unsettled at depth {depth}: {full} vs {shorter}"
        )));
    }
    Ok(full)
}

/// `Γ_q(x, z) = ∏_{k ≥ 0} 1/(1 − (1−q)q^k z x + (1−q)q^{2k} z²)`, truncated
/// once `q^k < 1e-16`.
pub fn gamma_q(x: f64, z: f64, q: f64) -> f64 {
    let k_max = default_truncation(q).max(1);
    let mut prod = 1.0;
    let mut qk = 1.0;
    for _ in 0..k_max {
        prod /= 1.0 - (1.0 - q) * qk * z * x + (1.0 - q) * qk * qk * z * z;
        qk *= q;
        if qk == 0.0 {
            break;
        }
    }
    prod
}

fn check_zn_params(q: f64, qt: f64) -> Result<()> {
    if !(0.0..=Q_MAX).contains(&q) {
        return domain(format!("q = {q} outside [0, {Q_MAX}]"));
    }
    if !(0.0..1.0).contains(&qt) {
        return domain(format!("qt = {qt} outside [0, 1)"));
    }
    Ok(())
}

/// `Z_n = ∫ (e^{−βE} Γ_q(E, q̃))^n ν_q(dE)`.
///
/// Evaluated with the default θ-panel quadrature and checked against a rule
/// with twice as many panels.
pub fn z_n(n: usize, beta: f64, q: f64, qt: f64) -> Result<f64> {
    check_zn_params(q, qt)?;
    if n == 0 {
        return domain("n must be positive");
    }
    let k = default_truncation(q);
    let f = |e: f64| ((-beta * e).exp() * gamma_q(e, qt, q)).powi(n as i32);
    let coarse = QGaussianQuadrature::with_options(q, 64, 8, k)?.integrate(f);
    let fine = QGaussianQuadrature::with_options(q, 128, 8, k)?.integrate(f);
    if (coarse - fine).abs() > 1e-10 * fine.abs().max(1.0) {
        return Err(LabError::NonConvergence(format!(
            "Z_{n} quadrature unsettled: {coarse} vs {fine}"
        )));
    }
    Ok(fine)
}

/// `Z_1` by composite Simpson in θ on the explicit x-density, independent of
/// the Gauss–Legendre rule used by [`z_n`].
pub fn z1_direct(beta: f64, q: f64, qt: f64, intervals: usize) -> Result<f64> {
    check_zn_params(q, qt)?;
    let intervals = intervals + intervals % 2;
    let k = default_truncation(q);
    let edge = 2.0 / (1.0 - q).sqrt();
    let h = std::f64::consts::PI / intervals as f64;
    let integrand = |t: f64| {
        let s = t.sin();
        let c2 = (2.0 * t).cos();
        let mut prod = 1.0;
        let mut qk = 1.0;
        for _ in 0..k {
            qk *= q;
            prod *= (1.0 - qk) * (1.0 - 2.0 * qk * c2 + qk * qk);
        }
        let e = edge * t.cos();
        let density_x = (1.0 - q).sqrt() / std::f64::consts::PI * s * prod;
        // dE = edge·sinθ dθ
        (-beta * e).exp() * gamma_q(e, qt, q) * density_x * edge * s
    };
    let mut sum = integrand(0.0) + integrand(std::f64::consts::PI);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * integrand(i as f64 * h);
    }
    Ok(sum * h / 3.0)
}

/// Whether the moment values are symbolic or numerically specialized.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ParamsNote {
    pub q: Option<f64>,
    pub qt: Option<f64>,
    pub theta: Option<f64>,
}

/// `m_1 … m_{max_n}`.
#[derive(Clone, Debug, Serialize)]
pub struct MomentTable {
    pub max_n: usize,
    pub values: Vec<MultiPoly>,
    pub params_note: ParamsNote,
}

impl MomentTable {
    /// Computes the symbolic table, one task per n.
    pub fn compute(max_n: usize) -> Result<Self> {
        check_n(max_n)?;
        let values = (1..=max_n)
            .into_par_iter()
            .map(reduced_moment)
            .collect::<Result<Vec<_>>>()?;
        Ok(MomentTable {
            max_n,
            values,
            params_note: ParamsNote::default(),
        })
    }

    /// Evaluates every entry at numeric parameters.
    pub fn specialize(&self, q: f64, qt: f64, theta: f64) -> Vec<f64> {
        self.values.iter().map(|p| p.eval_f64(q, qt, theta)).collect()
    }

    pub fn to_csv(&self, q: f64, qt: f64, theta: f64) -> String {
        let mut s = String::from("n,m_n\n");
        for (i, v) in self.specialize(q, qt, theta).iter().enumerate() {
            s.push_str(&format!("{},{:.17e}\n", i + 1, v));
        }
        s
    }
}
