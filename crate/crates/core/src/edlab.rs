//! Exact diagonalization at finite N.
//!
//! Majorana operators are Jordan–Wigner strings, stored as phased
//! permutations of the computational basis (`op|b⟩ = i^{phase[b]} |target[b]⟩`)
//! and densified only when a matrix is needed. The basis is relabelled so that
//! the chirality operator and the last pair parities are single-site `σ₃`
//! factors; in that basis `D_c = diag(1,…,1,0,…,0)` is the product of their
//! projectors and has an expansion in Majorana products.
//!
//! Site 1 is the most significant bit of a basis index.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, LabError, Result};
use crate::qcore::{binomial, rational_to_f64, Rational};

/// Largest number of Majoranas for which matrices are materialized.
pub const MAX_MAJORANAS: usize = 24;

fn check_n_majorana(n: usize) -> Result<()> {
    if n == 0 || n % 2 == 1 {
        return domain(format!("N = {n} must be even and positive"));
    }
    if n > MAX_MAJORANAS {
        return domain(format!("N = {n} exceeds the dimension cap N <= {MAX_MAJORANAS}"));
    }
    Ok(())
}

/// Operator that maps each basis state to a single basis state times a power
/// of i.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhasedPerm {
    target: Vec<usize>,
    phase: Vec<u8>,
}

fn i_pow(k: u8) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

impl PhasedPerm {
    pub fn identity(dim: usize) -> Self {
        PhasedPerm {
            target: (0..dim).collect(),
            phase: vec![0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.target.len()
    }

    /// `self · other`.
    pub fn compose(&self, other: &PhasedPerm) -> PhasedPerm {
        let mut target = Vec::with_capacity(other.dim());
        let mut phase = Vec::with_capacity(other.dim());
        for b in 0..other.dim() {
            let mid = other.target[b];
            target.push(self.target[mid]);
            phase.push((other.phase[b] + self.phase[mid]) % 4);
        }
        PhasedPerm { target, phase }
    }

    /// Multiplies by `i^k`.
    pub fn times_i_pow(&self, k: u8) -> PhasedPerm {
        PhasedPerm {
            target: self.target.clone(),
            phase: self.phase.iter().map(|p| (p + k) % 4).collect(),
        }
    }

    /// Adds `coeff · self` into a dense matrix.
    pub fn accumulate(&self, coeff: Complex64, into: &mut DMatrix<Complex64>) {
        for b in 0..self.dim() {
            into[(self.target[b], b)] += coeff * i_pow(self.phase[b]);
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        self.accumulate(Complex64::new(1.0, 0.0), &mut m);
        m
    }
}

/// Index map `b → c` with `c₁ = b₁ ⊕ … ⊕ b_n` and `c_j = b_{n−j+2}` for
/// `j ≥ 2`, sites counted from the most significant bit.
fn relabel(b: usize, sites: usize) -> usize {
    let bit = |x: usize, s: usize| (x >> (sites - s)) & 1;
    let mut c = 0;
    let parity = (b.count_ones() & 1) as usize;
    c |= parity << (sites - 1);
    for j in 2..=sites {
        c |= bit(b, sites - j + 2) << (sites - j);
    }
    c
}

fn relabel_inverse(c: usize, sites: usize) -> usize {
    let bit = |x: usize, s: usize| (x >> (sites - s)) & 1;
    let mut b = 0;
    let mut rest_parity = 0;
    for j in 2..=sites {
        let v = bit(c, j);
        rest_parity ^= v;
        b |= v << (sites - (sites - j + 2));
    }
    b |= (bit(c, 1) ^ rest_parity) << (sites - 1);
    b
}

/// All N Majorana operators `ψ_1 … ψ_N` as phased permutations.
pub fn majorana_ops(n_majorana: usize) -> Result<Vec<PhasedPerm>> {
    check_n_majorana(n_majorana)?;
    let sites = n_majorana / 2;
    let dim = 1usize << sites;
    let mut ops = Vec::with_capacity(n_majorana);
    for s in 1..=sites {
        for odd in [true, false] {
            // standard string on the c labels: σ₃ on sites < s, σ₁ or σ₂ on s
            let mut target = vec![0; dim];
            let mut phase = vec![0u8; dim];
            for b in 0..dim {
                let c = relabel(b, sites);
                let shift = sites - s;
                let c_bit = (c >> shift) & 1;
                let string = (c >> (shift + 1)).count_ones() as u8 & 1;
                let mut ph = 2 * string;
                if !odd {
                    // σ₂|0⟩ = i|1⟩, σ₂|1⟩ = −i|0⟩
                    ph += if c_bit == 0 { 1 } else { 3 };
                }
                target[b] = relabel_inverse(c ^ (1 << shift), sites);
                phase[b] = ph % 4;
            }
            ops.push(PhasedPerm { target, phase });
        }
    }
    Ok(ops)
}

/// Dense matrix of `ψ_l`, `l` in `1..=N`.
pub fn majorana(l: usize, n_majorana: usize) -> Result<DMatrix<Complex64>> {
    if l == 0 || l > n_majorana {
        return domain(format!("Majorana index {l} outside 1..={n_majorana}"));
    }
    Ok(majorana_ops(n_majorana)?[l - 1].to_dense())
}

/// `(−i)^{m/2} ψ_1 ⋯ ψ_m` for even `m`.
fn chirality_prefix(ops: &[PhasedPerm], m: usize) -> PhasedPerm {
    let mut acc = PhasedPerm::identity(ops[0].dim());
    for op in &ops[..m] {
        acc = acc.compose(op);
    }
    // (−i)^{m/2} = i^{3m/2}
    acc.times_i_pow(((3 * (m / 2)) % 4) as u8)
}

/// `(−i)^{N/2} ψ_1 ⋯ ψ_N`.
pub fn chirality(n_majorana: usize) -> Result<DMatrix<Complex64>> {
    let ops = majorana_ops(n_majorana)?;
    Ok(chirality_prefix(&ops, n_majorana).to_dense())
}

/// Parameters of one ensemble.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    /// Number of Majoranas N.
    pub n_majorana: usize,
    pub p: usize,
    pub theta: f64,
    /// `c = 2^{N/2−k}` nonzero diagonal entries, `r = 2^{−k}`.
    pub k: usize,
    pub seed: u64,
    pub samples: usize,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        check_n_majorana(self.n_majorana)?;
        if self.n_majorana / 2 > 12 {
            return domain("dimension 2^{N/2} exceeds 2^12");
        }
        if self.p == 0 || self.p % 2 == 1 || self.p > self.n_majorana {
            return domain(format!("p = {} must be even with 0 < p <= N", self.p));
        }
        if self.k > self.n_majorana / 2 {
            return domain(format!("k = {} exceeds N/2", self.k));
        }
        if self.samples == 0 {
            return domain("samples must be positive");
        }
        if !self.theta.is_finite() {
            return domain("theta must be finite");
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1 << (self.n_majorana / 2)
    }

    pub fn r(&self) -> f64 {
        (0.5f64).powi(self.k as i32)
    }
}

/// Index sets `{i_1 < … < i_p}` of `1..=n` in lexicographic order.
fn index_sets(n: usize, p: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, p: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == p {
            out.push(cur.clone());
            return;
        }
        for i in start..=n {
            if n - i + 1 < p - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, n, p, &mut Vec::new(), &mut out);
    out
}

/// The interaction strings `Ψ_α = i^{p(p−1)/2} ψ_{i_1} ⋯ ψ_{i_p}`.
pub fn interaction_terms(n_majorana: usize, p: usize) -> Result<Vec<PhasedPerm>> {
    let ops = majorana_ops(n_majorana)?;
    let prefactor = ((p * (p - 1) / 2) % 4) as u8;
    Ok(index_sets(n_majorana, p)
        .into_iter()
        .map(|set| {
            let mut acc = PhasedPerm::identity(ops[0].dim());
            for &i in &set {
                acc = acc.compose(&ops[i - 1]);
            }
            acc.times_i_pow(prefactor)
        })
        .collect())
}

/// `H_SYK = Σ_α J_α Ψ_α` with `J_α ~ N(0, 1/C(N,p))`, couplings drawn in
/// lexicographic order of α.
pub fn build_h_syk(params: &ModelParams, rng: &mut impl rand::Rng) -> Result<DMatrix<Complex64>> {
    params.validate()?;
    let terms = interaction_terms(params.n_majorana, params.p)?;
    Ok(assemble_h_syk(&terms, params.dim(), rng))
}

fn assemble_h_syk(terms: &[PhasedPerm], dim: usize, rng: &mut impl rand::Rng) -> DMatrix<Complex64> {
    let scale = 1.0 / (terms.len() as f64).sqrt();
    let mut h = DMatrix::zeros(dim, dim);
    for t in terms {
        let j: f64 = StandardNormal.sample(rng);
        t.accumulate(Complex64::new(j * scale, 0.0), &mut h);
    }
    h
}

/// `D_c`: the first `2^{N/2−k}` diagonal entries are 1, the rest 0.
pub fn build_dc(n_majorana: usize, k: usize) -> Result<DMatrix<Complex64>> {
    check_n_majorana(n_majorana)?;
    if k > n_majorana / 2 {
        return domain(format!("k = {k} exceeds N/2"));
    }
    let dim = 1usize << (n_majorana / 2);
    let ones = dim >> k;
    Ok(DMatrix::from_fn(dim, dim, |i, j| {
        if i == j && i < ones {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::zero()
        }
    }))
}

/// Majorana expansion of `D_c`: `2^{−k} Σ_m (−i)^m Σ_{l_1<…<l_m ≤ k−2}
/// ∏ ψ_{N−2l−1} ψ_{N−2l} · (1 + Γ)`.
pub fn dc_from_majoranas(n_majorana: usize, k: usize) -> Result<DMatrix<Complex64>> {
    check_n_majorana(n_majorana)?;
    let sites = n_majorana / 2;
    if k == 0 || k > sites {
        return domain(format!("k = {k} outside 1..=N/2"));
    }
    let ops = majorana_ops(n_majorana)?;
    let dim = ops[0].dim();
    let gamma = chirality_prefix(&ops, n_majorana);
    let one_plus_gamma = {
        let mut m = DMatrix::identity(dim, dim);
        gamma.accumulate(Complex64::new(1.0, 0.0), &mut m);
        m
    };
    let mut sum = DMatrix::zeros(dim, dim);
    let free = k - 1; // l ranges over 0..=k−2
    for mask in 0u32..(1 << free) {
        let ls: Vec<usize> = (0..free).filter(|&l| mask >> l & 1 == 1).collect();
        let m = ls.len();
        // product over n = 0..m−1 of ψ_{N−2l_{m−n}−1} ψ_{N−2l_{m−n}}
        let mut prod = PhasedPerm::identity(dim);
        for &l in ls.iter().rev() {
            prod = prod
                .compose(&ops[n_majorana - 2 * l - 2])
                .compose(&ops[n_majorana - 2 * l - 1]);
        }
        let prod = prod.times_i_pow(((3 * m) % 4) as u8);
        sum += prod.to_dense() * &one_plus_gamma;
    }
    Ok(sum / Complex64::new((1u64 << k) as f64, 0.0))
}

/// The three explicitly written expansions for `k = 1, 2, 3`.
pub fn dc_displayed(n_majorana: usize, k: usize) -> Result<DMatrix<Complex64>> {
    check_n_majorana(n_majorana)?;
    let n = n_majorana;
    let ops = majorana_ops(n)?;
    let dim = ops[0].dim();
    let psi = |l: usize| &ops[l - 1];
    let gamma_prefix = |m: usize| chirality_prefix(&ops, m);
    let pair = |a: usize, b: usize| psi(a).compose(psi(b));
    let one = PhasedPerm::identity(dim);
    let terms: Vec<PhasedPerm> = match k {
        1 if n >= 2 => vec![one, gamma_prefix(n)],
        2 if n >= 4 => vec![
            one,
            gamma_prefix(n),
            gamma_prefix(n - 2),
            pair(n - 1, n).times_i_pow(3),
        ],
        3 if n >= 6 => vec![
            one,
            gamma_prefix(n),
            gamma_prefix(n - 2),
            gamma_prefix(n - 4),
            pair(n - 1, n).times_i_pow(3),
            pair(n - 3, n - 2).times_i_pow(3),
            pair(n - 3, n - 2).compose(&pair(n - 1, n)).times_i_pow(2),
            // (−i)^{(N−2)/2} ψ_{N−1} ψ_N ψ_1 ⋯ ψ_{N−4}
            pair(n - 1, n)
                .compose(&{
                    let mut acc = PhasedPerm::identity(dim);
                    for op in &ops[..n - 4] {
                        acc = acc.compose(op);
                    }
                    acc
                })
                .times_i_pow(((3 * ((n - 2) / 2)) % 4) as u8),
        ],
        _ => return domain(format!("no displayed expansion for k = {k}, N = {n}")),
    };
    let mut m = DMatrix::zeros(dim, dim);
    for t in &terms {
        t.accumulate(Complex64::new(1.0, 0.0), &mut m);
    }
    Ok(m / Complex64::new((1u64 << k) as f64, 0.0))
}

fn first_difference(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, tol: f64) -> Option<(usize, usize, Complex64, Complex64)> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if (a[(i, j)] - b[(i, j)]).norm() >= tol {
                return Some((i, j, a[(i, j)], b[(i, j)]));
            }
        }
    }
    None
}

/// Checks both the general expansion and the written special case against
/// [`build_dc`], entrywise within 1e-12.
pub fn verify_dc_majorana_expansion(n_majorana: usize, k: usize) -> Result<bool> {
    if !(1..=3).contains(&k) {
        return domain(format!("k = {k} outside 1..=3"));
    }
    if n_majorana > 10 {
        return domain("verification is limited to N <= 10");
    }
    let target = build_dc(n_majorana, k)?;
    for (name, m) in [
        ("general expansion", dc_from_majoranas(n_majorana, k)?),
        ("displayed expansion", dc_displayed(n_majorana, k)?),
    ] {
        if let Some((i, j, got, want)) = first_difference(&m, &target, 1e-12) {
            return Err(LabError::Inconsistency(format!(
                "{name} at N = {n_majorana}, k = {k}: entry ({i}, {j}) is {got}, expected {want}"
            )));
        }
    }
    Ok(true)
}

/// Sorted eigenvalues of one realization.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumSample {
    pub eigenvalues: Vec<f64>,
    pub params: ModelParams,
    pub sample_index: usize,
}

/// Spectra of `H = H_SYK + θ D_c` and of `H_SYK` alone for one coupling draw.
#[derive(Clone, Debug)]
pub struct PairedSample {
    pub full: SpectrumSample,
    pub syk: SpectrumSample,
}

fn hermitian_eigenvalues(h: DMatrix<Complex64>) -> Result<Vec<f64>> {
    let eig = nalgebra::linalg::SymmetricEigen::try_new(h, f64::EPSILON, 10_000)
        .ok_or_else(|| LabError::NonConvergence("Hermitian eigensolver did not converge".into()))?;
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v)
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn run_samples(params: &ModelParams, with_syk: bool) -> Result<Vec<PairedSample>> {
    params.validate()?;
    let terms = interaction_terms(params.n_majorana, params.p)?;
    let dim = params.dim();
    let ones = dim >> params.k;
    (0..params.samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = sample_rng(params.seed, s);
            let h_syk = assemble_h_syk(&terms, dim, &mut rng);
            let mut h = h_syk.clone();
            for i in 0..ones {
                h[(i, i)] += Complex64::new(params.theta, 0.0);
            }
            let full = hermitian_eigenvalues(h)
                .map_err(|e| LabError::NonConvergence(format!("sample {s}: {e}")))?;
            let syk = if with_syk {
                hermitian_eigenvalues(h_syk)
                    .map_err(|e| LabError::NonConvergence(format!("sample {s}: {e}")))?
            } else {
                Vec::new()
            };
            let wrap = |eigenvalues| SpectrumSample {
                eigenvalues,
                params: params.clone(),
                sample_index: s,
            };
            Ok(PairedSample {
                full: wrap(full),
                syk: wrap(syk),
            })
        })
        .collect()
}

/// One spectrum of `H_SYK + θ D_c` per sample, each from its own stream of
/// the seeded generator.
pub fn sample_spectra(params: &ModelParams) -> Result<Vec<SpectrumSample>> {
    Ok(run_samples(params, false)?.into_iter().map(|p| p.full).collect())
}

/// Like [`sample_spectra`], also diagonalizing `H_SYK` with the same couplings.
pub fn sample_paired_spectra(params: &ModelParams) -> Result<Vec<PairedSample>> {
    run_samples(params, true)
}

fn normalized_power_trace(eigs: &[f64], n: usize) -> f64 {
    eigs.iter().map(|x| x.powi(n as i32)).sum::<f64>() / eigs.len() as f64
}

/// Sample means of `tr H^n` (normalized trace) for `n = 0..=max_n`.
pub fn empirical_moments(spectra: &[SpectrumSample], max_n: usize) -> Vec<f64> {
    (0..=max_n)
        .map(|n| {
            spectra.iter().map(|s| normalized_power_trace(&s.eigenvalues, n)).sum::<f64>()
                / spectra.len().max(1) as f64
        })
        .collect()
}

/// Mean and standard error of a per-sample statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

pub fn mean_and_stderr(values: &[f64]) -> Estimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Estimate {
            mean,
            stderr: f64::INFINITY,
        };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate {
        mean,
        stderr: (var / n).sqrt(),
    }
}

/// Reduced moments `(tr H^n − tr H_SYK^n)/r` per sample, averaged, for
/// `n = 1..=max_n`. The matched SYK term is subtracted at every n.
pub fn reduced_moment_estimates(pairs: &[PairedSample], max_n: usize) -> Vec<Estimate> {
    (1..=max_n)
        .map(|n| {
            let vals: Vec<f64> = pairs
                .iter()
                .map(|p| {
                    let r = p.full.params.r();
                    (normalized_power_trace(&p.full.eigenvalues, n)
                        - normalized_power_trace(&p.syk.eigenvalues, n))
                        / r
                })
                .collect();
            mean_and_stderr(&vals)
        })
        .collect()
}

fn ratio(num: BigInt, den: BigInt) -> Rational {
    Rational::new(num, den)
}

/// Finite-N crossing weight `C(N,p)^{-1} Σ_c (−1)^c C(p,c) C(N−p, p−c)`.
pub fn qn_finite(p: usize, n_majorana: usize) -> Result<Rational> {
    if p > n_majorana {
        return domain(format!("p = {p} exceeds N = {n_majorana}"));
    }
    let (p64, n64) = (p as u64, n_majorana as u64);
    let mut sum = BigInt::zero();
    for c in 0..=p64 {
        let term = binomial(p64, c) * binomial(n64 - p64, p64 - c);
        if c % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    Ok(ratio(sum, binomial(n64, p64)))
}

/// Average sign picked up by `Ψ_α` commuting past a product of `2j` Majoranas:
/// `C(N,p)^{-1} Σ_l (−1)^l C(2j,l) C(N−2j, p−l)`.
pub fn q_j(p: usize, n_majorana: usize, j: usize) -> Result<Rational> {
    if 2 * j > n_majorana || p > n_majorana {
        return domain(format!("q_j needs 2j <= N and p <= N (j = {j}, p = {p}, N = {n_majorana})"));
    }
    let (p64, n64, j2) = (p as u64, n_majorana as u64, 2 * j as u64);
    let mut sum = BigInt::zero();
    for l in 0..=j2.min(p64) {
        let term = binomial(j2, l) * binomial(n64 - j2, p64 - l);
        if l % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    Ok(ratio(sum, binomial(n64, p64)))
}

fn check_qtilde_args(p: usize, n_majorana: usize, k: usize) -> Result<()> {
    if p % 2 == 1 {
        return domain(format!("p = {p} must be even"));
    }
    if k == 0 || 2 * (k - 1) > n_majorana {
        return domain(format!("k = {k} needs 1 <= k and 2(k-1) <= N"));
    }
    Ok(())
}

/// Wall weight `q̃ = 2^{1−k} Σ_{j=0}^{k−1} C(k−1, j) q_j`, the exact average of
/// `tr(D_c Ψ_α D_c Ψ_α)/tr D_c` over α.
pub fn qtilde_weight(p: usize, n_majorana: usize, k: usize) -> Result<Rational> {
    check_qtilde_args(p, n_majorana, k)?;
    let mut sum = Rational::zero();
    for j in 0..k {
        sum += q_j(p, n_majorana, j)?
            * Rational::from_integer(binomial((k - 1) as u64, j as u64));
    }
    Ok(sum / Rational::from_integer(BigInt::from(1u64 << (k - 1))))
}

/// The weighting `(q_0 + (k−1)(q_1 + … + q_{k−2}) + q_{k−1}) / 2^{k−1}`;
/// equal to [`qtilde_weight`] for `k <= 4` only.
pub fn qtilde_weight_printed(p: usize, n_majorana: usize, k: usize) -> Result<Rational> {
    check_qtilde_args(p, n_majorana, k)?;
    if k == 1 {
        return q_j(p, n_majorana, 0);
    }
    let mut sum = q_j(p, n_majorana, 0)? + q_j(p, n_majorana, k - 1)?;
    let weight = Rational::from_integer(BigInt::from(k as u64 - 1));
    for j in 1..k - 1 {
        sum += q_j(p, n_majorana, j)? * &weight;
    }
    Ok(sum / Rational::from_integer(BigInt::from(1u64 << (k - 1))))
}

/// The shorter `k = 3` weighting `(q_0 + 2q_1)/4` written alongside the
/// numerical comparison, kept for reporting next to [`qtilde_weight`].
pub fn qtilde_k3_short(p: usize, n_majorana: usize) -> Result<Rational> {
    check_qtilde_args(p, n_majorana, 3)?;
    Ok((q_j(p, n_majorana, 0)? + q_j(p, n_majorana, 1)? * Rational::from_integer(2.into()))
        / Rational::from_integer(4.into()))
}

/// One row of an analytic-versus-ED comparison of reduced moments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub n: usize,
    pub analytic: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub zscore: f64,
}

/// Relative floor applied to standard errors: m₁ and m₂ are fixed exactly
/// by each sample, so their spread is pure roundoff.
pub const STDERR_FLOOR: f64 = 1e-10;

/// Compares ED reduced moments with `m_n` at `q = qn_finite`, `q̃ = qtilde_weight`.
pub fn compare_moments(params: &ModelParams, n_max: usize) -> Result<(Vec<CompareRow>, f64, f64)> {
    params.validate()?;
    let q = rational_to_f64(&qn_finite(params.p, params.n_majorana)?);
    let qt = if params.k == 0 {
        1.0
    } else {
        rational_to_f64(&qtilde_weight(params.p, params.n_majorana, params.k)?)
    };
    let pairs = sample_paired_spectra(params)?;
    let est = reduced_moment_estimates(&pairs, n_max);
    let mut rows = Vec::with_capacity(n_max);
    for (i, e) in est.iter().enumerate() {
        let n = i + 1;
        let analytic = crate::moments::reduced_moment(n)?.eval_f64(q, qt, params.theta);
        let floor = STDERR_FLOOR * analytic.abs().max(e.mean.abs()).max(1.0);
        let stderr = e.stderr.max(floor);
        rows.push(CompareRow {
            n,
            analytic,
            empirical: e.mean,
            stderr: e.stderr,
            zscore: (e.mean - analytic) / stderr,
        });
    }
    Ok((rows, q, qt))
}

/// Gap statistics of one pooled spectrum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseCell {
    pub theta: f64,
    pub k: usize,
    /// Largest nearest-neighbour gap leaving at least `min_side_fraction`
    /// of the eigenvalues on each side.
    pub gap: f64,
    /// Location (midpoint) of that gap.
    pub gap_center: f64,
    /// Median level spacing of a single realization, averaged over samples.
    pub median_gap: f64,
    pub bimodal: bool,
}

/// Options for [`phase_scan`].
#[derive(Clone, Debug)]
pub struct PhaseScanOptions {
    pub threshold: f64,
    pub min_side_fraction: f64,
}

impl Default for PhaseScanOptions {
    fn default() -> Self {
        PhaseScanOptions {
            threshold: 10.0,
            min_side_fraction: 0.02,
        }
    }
}

/// Median spacing between distinct levels; exact degeneracies (N ≡ 4 mod 8
/// gives pairs) would otherwise drive the median to roundoff.
fn median_spacing(sorted: &[f64]) -> f64 {
    let width = match (sorted.first(), sorted.last()) {
        (Some(a), Some(b)) => b - a,
        _ => return 0.0,
    };
    let mut gaps: Vec<f64> = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|g| *g > 1e-9 * width)
        .collect();
    if gaps.is_empty() {
        return 0.0;
    }
    gaps.sort_by(|a, b| a.total_cmp(b));
    gaps[gaps.len() / 2]
}

/// Gap analysis of a pooled, sorted spectrum. `median_gap` is the typical
/// level spacing of one realization: pooling many independent spectra
/// shrinks the pooled median like 1/samples while a true gap survives.
pub fn analyze_gaps(sorted: &[f64], median_gap: f64, theta: f64, k: usize, opts: &PhaseScanOptions) -> PhaseCell {
    let m = sorted.len();
    let min_side = ((opts.min_side_fraction * m as f64).ceil() as usize).max(1);
    let mut best = (0.0, 0.0);
    for (i, w) in sorted.windows(2).enumerate() {
        let g = w[1] - w[0];
        let left = i + 1;
        if left >= min_side && m - left >= min_side && g > best.0 {
            best = (g, 0.5 * (w[0] + w[1]));
        }
    }
    PhaseCell {
        theta,
        k,
        gap: best.0,
        gap_center: best.1,
        median_gap,
        bimodal: median_gap > 0.0 && best.0 > opts.threshold * median_gap,
    }
}

/// For each θ, pools the sampled spectra (same seed for every θ) and
/// reports the largest interior gap and a bimodality flag.
pub fn phase_scan(base: &ModelParams, thetas: &[f64], opts: &PhaseScanOptions) -> Result<Vec<PhaseCell>> {
    thetas
        .iter()
        .map(|&theta| {
            let params = ModelParams {
                theta,
                ..base.clone()
            };
            let spectra = sample_spectra(&params)?;
            let median_gap = spectra.iter().map(|s| median_spacing(&s.eigenvalues)).sum::<f64>()
                / spectra.len() as f64;
            let mut pooled: Vec<f64> = spectra.into_iter().flat_map(|s| s.eigenvalues).collect();
            pooled.sort_by(|a, b| a.total_cmp(b));
            Ok(analyze_gaps(&pooled, median_gap, theta, params.k, opts))
        })
        .collect()
}

/// Histogram with `bins` equal bins over `[lo, hi]`: rows of
/// `(left_edge, count, density)`.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Vec<(f64, usize, f64)>> {
    if bins == 0 || !(hi > lo) {
        return domain("histogram needs bins > 0 and hi > lo");
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v >= lo && v <= hi {
            let i = (((v - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
    }
    let total = values.len().max(1) as f64;
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, c, c as f64 / (total * width)))
        .collect())
}

/// Exact α-average of `tr(D_c Ψ_α D_c Ψ_α) / tr(D_c)` by summing over every
/// interaction string.
pub fn qtilde_by_trace(p: usize, n_majorana: usize, k: usize) -> Result<f64> {
    let terms = interaction_terms(n_majorana, p)?;
    let dim = terms[0].dim();
    let ones = dim >> k;
    let mut total = 0.0;
    for t in &terms {
        // D Ψ D Ψ on the support of D: only states mapped into the support count
        let mut tr = Complex64::zero();
        for b in 0..ones {
            let mid = t.target[b];
            if mid < ones {
                let back = t.target[mid];
                if back == b {
                    tr += i_pow(t.phase[b]) * i_pow(t.phase[mid]);
                }
            }
        }
        total += tr.re;
    }
    Ok(total / terms.len() as f64 / ones as f64)
}

/// `ToPrimitive` helper for reporting exact ratios.
pub fn rational_as_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| rational_to_f64(r))
}
