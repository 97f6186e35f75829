//! Exact arithmetic foundation.
//!
//! [`MultiPoly`] is a sparse polynomial over the rationals in the three formal
//! variables `q`, `qt` (the wall weight q̃) and `theta`. Every symbolic result
//! in the crate is a `MultiPoly`. The q-deformed integers, factorials,
//! binomials and multinomials live here as well.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, LabError, Result};

/// Arbitrary-precision rational, always reduced with a positive denominator.
pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// One of the three formal variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    Q,
    Qt,
    Theta,
}

/// Exponent triple of a monomial `q^q · qt^qt · theta^theta`.
///
/// The derived ordering (q, then qt, then theta) is the canonical term order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exponents {
    pub q: u32,
    pub qt: u32,
    pub theta: u32,
}

impl Exponents {
    pub const ZERO: Exponents = Exponents { q: 0, qt: 0, theta: 0 };

    pub fn new(q: u32, qt: u32, theta: u32) -> Self {
        Exponents { q, qt, theta }
    }

    pub fn get(&self, var: Var) -> u32 {
        match var {
            Var::Q => self.q,
            Var::Qt => self.qt,
            Var::Theta => self.theta,
        }
    }

    fn with(mut self, var: Var, value: u32) -> Self {
        match var {
            Var::Q => self.q = value,
            Var::Qt => self.qt = value,
            Var::Theta => self.theta = value,
        }
        self
    }
}

impl Add for Exponents {
    type Output = Exponents;
    fn add(self, o: Exponents) -> Exponents {
        Exponents::new(self.q + o.q, self.qt + o.qt, self.theta + o.theta)
    }
}

/// Sparse multivariate polynomial in (q, q̃, θ) with rational coefficients.
///
/// Zero coefficients are never stored and terms iterate in canonical order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct MultiPoly {
    terms: BTreeMap<Exponents, Rational>,
}

impl MultiPoly {
    pub fn zero() -> Self {
        MultiPoly::default()
    }

    pub fn one() -> Self {
        MultiPoly::constant(Rational::one())
    }

    pub fn constant(c: Rational) -> Self {
        MultiPoly::monomial(Exponents::ZERO, c)
    }

    pub fn from_int(c: i64) -> Self {
        MultiPoly::constant(int(c))
    }

    pub fn monomial(exps: Exponents, c: Rational) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(exps, c);
        }
        MultiPoly { terms }
    }

    /// `var^power` with unit coefficient.
    pub fn var_pow(var: Var, power: u32) -> Self {
        MultiPoly::monomial(Exponents::ZERO.with(var, power), Rational::one())
    }

    pub fn q() -> Self {
        MultiPoly::var_pow(Var::Q, 1)
    }

    pub fn qt() -> Self {
        MultiPoly::var_pow(Var::Qt, 1)
    }

    pub fn theta() -> Self {
        MultiPoly::var_pow(Var::Theta, 1)
    }

    /// Builds a polynomial in q alone from integer coefficients of q^0, q^1, …
    pub fn from_q_coeffs(coeffs: &[i64]) -> Self {
        let mut p = MultiPoly::zero();
        for (i, &c) in coeffs.iter().enumerate() {
            p.add_term(Exponents::new(i as u32, 0, 0), int(c));
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &Rational)> {
        self.terms.iter()
    }

    pub fn coeff(&self, exps: Exponents) -> Rational {
        self.terms.get(&exps).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn add_term(&mut self, exps: Exponents, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(exps) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn scale(&self, c: &Rational) -> MultiPoly {
        if c.is_zero() {
            return MultiPoly::zero();
        }
        MultiPoly {
            terms: self.terms.iter().map(|(e, v)| (*e, v * c)).collect(),
        }
    }

    /// Multiplies every term by the monomial `exps`.
    pub fn shift(&self, exps: Exponents) -> MultiPoly {
        MultiPoly {
            terms: self.terms.iter().map(|(e, v)| (*e + exps, v.clone())).collect(),
        }
    }

    pub fn pow(&self, n: u32) -> MultiPoly {
        let mut acc = MultiPoly::one();
        for _ in 0..n {
            acc = &acc * self;
        }
        acc
    }

    pub fn max_degree(&self, var: Var) -> Option<u32> {
        self.terms.keys().map(|e| e.get(var)).max()
    }

    /// Coefficient polynomial of `var^power`, with `var` removed.
    pub fn coefficient_of(&self, var: Var, power: u32) -> MultiPoly {
        let mut out = MultiPoly::zero();
        for (e, c) in &self.terms {
            if e.get(var) == power {
                out.add_term(e.with(var, 0), c.clone());
            }
        }
        out
    }

    /// Exact specialization of one variable to a rational value.
    pub fn substitute(&self, var: Var, value: &Rational) -> MultiPoly {
        let mut out = MultiPoly::zero();
        for (e, c) in &self.terms {
            let k = e.get(var);
            let factor = rational_pow(value, k);
            out.add_term(e.with(var, 0), c * factor);
        }
        out
    }

    pub fn eval(&self, q: &Rational, qt: &Rational, theta: &Rational) -> Rational {
        self.terms
            .iter()
            .map(|(e, c)| {
                c * rational_pow(q, e.q) * rational_pow(qt, e.qt) * rational_pow(theta, e.theta)
            })
            .fold(Rational::zero(), |a, b| a + b)
    }

    pub fn eval_f64(&self, q: f64, qt: f64, theta: f64) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                rational_to_f64(c)
                    * q.powi(e.q as i32)
                    * qt.powi(e.qt as i32)
                    * theta.powi(e.theta as i32)
            })
            .sum()
    }

    /// Reinterprets the q̃ slot as counting powers of √q̃ and converts back to
    /// whole powers of q̃. Fails if any exponent is odd.
    pub fn halve_qt(&self) -> Result<MultiPoly> {
        let mut out = MultiPoly::zero();
        for (e, c) in &self.terms {
            if e.qt % 2 != 0 {
                return Err(LabError::Inconsistency(format!(
                    "half-integer power of qt survives in term {:?}",
                    e
                )));
            }
            out.add_term(Exponents::new(e.q, e.qt / 2, e.theta), c.clone());
        }
        Ok(out)
    }

    /// True if every coefficient is an integer.
    pub fn is_integral(&self) -> bool {
        self.terms.values().all(|c| c.is_integer())
    }
}

pub(crate) fn rational_pow(x: &Rational, k: u32) -> Rational {
    let mut acc = Rational::one();
    for _ in 0..k {
        acc *= x;
    }
    acc
}

pub fn rational_to_f64(x: &Rational) -> f64 {
    match (x.numer().to_f64(), x.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            // huge components: scale down before converting
            let shift = x.numer().bits().max(x.denom().bits()).saturating_sub(1000);
            let n = (x.numer() >> shift).to_f64().unwrap_or(f64::NAN);
            let d = (x.denom() >> shift).to_f64().unwrap_or(f64::NAN);
            n / d
        }
    }
}

/// Exact conversion of a finite float to a rational.
pub fn f64_to_rational(x: f64) -> Result<Rational> {
    Rational::from_float(x).ok_or_else(|| LabError::Domain(format!("{x} is not finite")))
}

impl<'a> Add<&'a MultiPoly> for &'a MultiPoly {
    type Output = MultiPoly;
    fn add(self, rhs: &MultiPoly) -> MultiPoly {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Add for MultiPoly {
    type Output = MultiPoly;
    fn add(mut self, rhs: MultiPoly) -> MultiPoly {
        self += &rhs;
        self
    }
}

impl<'a> AddAssign<&'a MultiPoly> for MultiPoly {
    fn add_assign(&mut self, rhs: &MultiPoly) {
        for (e, c) in &rhs.terms {
            self.add_term(*e, c.clone());
        }
    }
}

impl AddAssign for MultiPoly {
    fn add_assign(&mut self, rhs: MultiPoly) {
        *self += &rhs;
    }
}

impl Neg for &MultiPoly {
    type Output = MultiPoly;
    fn neg(self) -> MultiPoly {
        MultiPoly {
            terms: self.terms.iter().map(|(e, c)| (*e, -c)).collect(),
        }
    }
}

impl Neg for MultiPoly {
    type Output = MultiPoly;
    fn neg(self) -> MultiPoly {
        -&self
    }
}

impl<'a> Sub<&'a MultiPoly> for &'a MultiPoly {
    type Output = MultiPoly;
    fn sub(self, rhs: &MultiPoly) -> MultiPoly {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(*e, -c);
        }
        out
    }
}

impl Sub for MultiPoly {
    type Output = MultiPoly;
    fn sub(self, rhs: MultiPoly) -> MultiPoly {
        &self - &rhs
    }
}

impl<'a> Mul<&'a MultiPoly> for &'a MultiPoly {
    type Output = MultiPoly;
    fn mul(self, rhs: &MultiPoly) -> MultiPoly {
        let mut out = MultiPoly::zero();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                out.add_term(*ea + *eb, ca * cb);
            }
        }
        out
    }
}

impl Mul for MultiPoly {
    type Output = MultiPoly;
    fn mul(self, rhs: MultiPoly) -> MultiPoly {
        &self * &rhs
    }
}

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        // highest powers of theta first reads most naturally for moments
        let mut terms: Vec<_> = self.terms.iter().collect();
        terms.sort_by(|a, b| {
            (b.0.theta, b.0.qt, b.0.q).cmp(&(a.0.theta, a.0.qt, a.0.q))
        });
        for (i, (e, c)) in terms.into_iter().enumerate() {
            let negative = c.is_negative();
            let abs = c.abs();
            if i == 0 {
                if negative {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if negative { "-" } else { "+" })?;
            }
            let mut factors = Vec::new();
            for (name, k) in [("theta", e.theta), ("qt", e.qt), ("q", e.q)] {
                match k {
                    0 => {}
                    1 => factors.push(name.to_string()),
                    _ => factors.push(format!("{name}^{k}")),
                }
            }
            if factors.is_empty() {
                write!(f, "{abs}")?;
            } else if abs.is_one() {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{}*{}", abs, factors.join("*"))?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TermRecord {
    q: u32,
    qt: u32,
    theta: u32,
    num: String,
    den: String,
}

impl Serialize for MultiPoly {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let records: Vec<TermRecord> = self
            .terms
            .iter()
            .map(|(e, c)| TermRecord {
                q: e.q,
                qt: e.qt,
                theta: e.theta,
                num: c.numer().to_string(),
                den: c.denom().to_string(),
            })
            .collect();
        records.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MultiPoly {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let records = Vec::<TermRecord>::deserialize(d)?;
        let mut p = MultiPoly::zero();
        for r in records {
            let num: BigInt = r.num.parse().map_err(D::Error::custom)?;
            let den: BigInt = r.den.parse().map_err(D::Error::custom)?;
            if den.is_zero() {
                return Err(D::Error::custom("zero denominator"));
            }
            p.add_term(Exponents::new(r.q, r.qt, r.theta), Rational::new(num, den));
        }
        Ok(p)
    }
}

/// `[n]_q = 1 + q + … + q^{n-1}`; the zero polynomial for `n = 0`.
pub fn q_integer(n: u32) -> MultiPoly {
    let mut p = MultiPoly::zero();
    for k in 0..n {
        p.add_term(Exponents::new(k, 0, 0), Rational::one());
    }
    p
}

/// `[n]_q! = [1]_q [2]_q … [n]_q`.
pub fn q_factorial(n: u32) -> MultiPoly {
    (1..=n).fold(MultiPoly::one(), |acc, k| &acc * &q_integer(k))
}

/// Gaussian binomial via the q-Pascal rule
/// `[n, k] = [n-1, k-1] + q^k [n-1, k]`.
pub fn q_binomial(n: u32, k: u32) -> Result<MultiPoly> {
    if k > n {
        return domain(format!("q_binomial: k = {k} exceeds n = {n}"));
    }
    Ok(q_binomial_row(n).swap_remove(k as usize))
}

/// Row `n` of the q-Pascal triangle: `[n, 0], …, [n, n]`.
pub fn q_binomial_row(n: u32) -> Vec<MultiPoly> {
    let mut row = vec![MultiPoly::one()];
    for m in 1..=n {
        let mut next = Vec::with_capacity(m as usize + 1);
        for k in 0..=m {
            let mut entry = MultiPoly::zero();
            if k >= 1 {
                entry += &row[(k - 1) as usize];
            }
            if k < m {
                entry += row[k as usize].shift(Exponents::new(k, 0, 0));
            }
            next.push(entry);
        }
        row = next;
    }
    row
}

/// Gaussian binomial as `[n]_q! / ([k]_q! [n-k]_q!)` by exact polynomial
/// division. Kept as an independent route for testing the recurrence.
pub fn q_binomial_by_division(n: u32, k: u32) -> Result<MultiPoly> {
    if k > n {
        return domain(format!("q_binomial: k = {k} exceeds n = {n}"));
    }
    let num = q_factorial(n);
    let den = &q_factorial(k) * &q_factorial(n - k);
    divide_exact_in_q(&num, &den)
}

/// Exact division of polynomials in `q` alone. Fails on a nonzero remainder.
pub fn divide_exact_in_q(num: &MultiPoly, den: &MultiPoly) -> Result<MultiPoly> {
    let to_dense = |p: &MultiPoly| -> Result<Vec<Rational>> {
        let deg = p.max_degree(Var::Q).unwrap_or(0) as usize;
        let mut v = vec![Rational::zero(); deg + 1];
        for (e, c) in p.terms() {
            if e.qt != 0 || e.theta != 0 {
                return domain("divide_exact_in_q: polynomial depends on qt or theta");
            }
            v[e.q as usize] = c.clone();
        }
        Ok(v)
    };
    let mut rem = to_dense(num)?;
    let d = to_dense(den)?;
    let lead = d.last().cloned().unwrap_or_else(Rational::zero);
    if lead.is_zero() {
        return domain("divide_exact_in_q: division by zero polynomial");
    }
    let mut quot = MultiPoly::zero();
    while rem.len() >= d.len() && rem.iter().any(|c| !c.is_zero()) {
        let shift = rem.len() - d.len();
        let c = rem.last().unwrap() / &lead;
        for (i, di) in d.iter().enumerate() {
            rem[shift + i] -= &c * di;
        }
        quot.add_term(Exponents::new(shift as u32, 0, 0), c);
        rem.pop();
    }
    if rem.iter().any(|c| !c.is_zero()) {
        return Err(LabError::Inconsistency("inexact polynomial division".into()));
    }
    Ok(quot)
}

/// q-multinomial `[n; parts]_q` as a product of nested q-binomials.
pub fn q_multinomial(n: u32, parts: &[u32]) -> Result<MultiPoly> {
    let total: u32 = parts.iter().sum();
    if total != n {
        return domain(format!(
            "q_multinomial: parts sum to {total}, expected {n}"
        ));
    }
    let mut remaining = n;
    let mut acc = MultiPoly::one();
    for &p in parts {
        acc = &acc * &q_binomial(remaining, p)?;
        remaining -= p;
    }
    Ok(acc)
}

/// Ordinary binomial coefficient as an exact integer.
pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}
