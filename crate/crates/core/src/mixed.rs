//! Mixed moments of words in a standardized q-Gaussian `x` and a constant
//! `d = θ`, and the free-cumulant check for `d`.
//!
//! A word's moment sums `q̃^{bc} q^{cr} θ^{#d}` over perfect matchings of its
//! `x` positions. `cr` counts crossing chord pairs; `bc` counts chords that
//! separate the `d` letters around the cycle, i.e. have at least one `d`
//! strictly inside and one strictly outside.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::chordcombi::count_crossings;
use crate::error::{domain, LabError, Result};
use crate::qcore::{int, Exponents, MultiPoly};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Letter {
    X,
    D,
}

/// A nonempty word over `{x, d}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Word {
    letters: Vec<Letter>,
}

impl Word {
    pub fn new(letters: Vec<Letter>) -> Result<Self> {
        if letters.is_empty() {
            return domain("word must be nonempty");
        }
        Ok(Word { letters })
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn count(&self, letter: Letter) -> usize {
        self.letters.iter().filter(|&&l| l == letter).count()
    }

    /// The word rotated left by `k` positions.
    pub fn rotate(&self, k: usize) -> Word {
        let mut letters = self.letters.clone();
        let len = letters.len();
        letters.rotate_left(k % len);
        Word { letters }
    }

    /// Word number `index` of length `n` in binary order, bit `n−1−i` of the
    /// index giving letter `i` (`1` is `d`).
    pub fn from_index(n: usize, index: u64) -> Word {
        let letters = (0..n)
            .map(|i| {
                if index >> (n - 1 - i) & 1 == 1 {
                    Letter::D
                } else {
                    Letter::X
                }
            })
            .collect();
        Word { letters }
    }
}

impl FromStr for Word {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Word> {
        let letters = s
            .chars()
            .map(|c| match c.to_ascii_lowercase() {
                'x' => Ok(Letter::X),
                'd' => Ok(Letter::D),
                other => Err(LabError::Parse(format!("letter '{other}' is not x or d"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Word::new(letters)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.letters {
            write!(f, "{}", if *l == Letter::X { 'x' } else { 'd' })?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixedMomentResult {
    pub value: MultiPoly,
    /// Number of perfect matchings of the x positions.
    pub partition_count: u64,
}

/// `φ(w)` for a word over `{x, d}`.
pub fn mixed_moment(w: &Word) -> MixedMomentResult {
    let xs: Vec<usize> = (0..w.len()).filter(|&i| w.letters[i] == Letter::X).collect();
    let ds: Vec<usize> = (0..w.len()).filter(|&i| w.letters[i] == Letter::D).collect();
    let theta = ds.len() as u32;
    if xs.len() % 2 == 1 {
        return MixedMomentResult {
            value: MultiPoly::zero(),
            partition_count: 0,
        };
    }
    let mut hist: BTreeMap<(u32, u32), i64> = BTreeMap::new();
    let mut count = 0u64;
    let mut used = vec![false; xs.len()];
    let mut pairs = Vec::with_capacity(xs.len() / 2);
    fn rec(
        xs: &[usize],
        ds: &[usize],
        used: &mut Vec<bool>,
        pairs: &mut Vec<(usize, usize)>,
        hist: &mut BTreeMap<(u32, u32), i64>,
        count: &mut u64,
    ) {
        let Some(first) = used.iter().position(|u| !u) else {
            let cr = count_crossings(pairs) as u32;
            let bc = pairs.iter().filter(|&&(a, b)| separates(a, b, ds)).count() as u32;
            *hist.entry((bc, cr)).or_default() += 1;
            *count += 1;
            return;
        };
        used[first] = true;
        for j in first + 1..used.len() {
            if !used[j] {
                used[j] = true;
                pairs.push((xs[first], xs[j]));
                rec(xs, ds, used, pairs, hist, count);
                pairs.pop();
                used[j] = false;
            }
        }
        used[first] = false;
    }
    rec(&xs, &ds, &mut used, &mut pairs, &mut hist, &mut count);
    let mut value = MultiPoly::zero();
    for ((bc, cr), c) in hist {
        value.add_term(Exponents::new(cr, bc, theta), int(c));
    }
    MixedMomentResult {
        value,
        partition_count: count,
    }
}

/// A chord `(a, b)` separates the d letters if some lie strictly inside and
/// some strictly outside.
fn separates(a: usize, b: usize, ds: &[usize]) -> bool {
    let inside = ds.iter().any(|&p| a < p && p < b);
    let outside = ds.iter().any(|&p| p < a || p > b);
    inside && outside
}

/// Largest word length accepted by [`word_sum_moment`].
pub const MAX_WORD_SUM: usize = 12;

/// `φ((x + d)^n)`: the sum of [`mixed_moment`] over all `2^n` words.
pub fn word_sum_moment(n: usize) -> Result<MultiPoly> {
    if n == 0 || n > MAX_WORD_SUM {
        return domain(format!("n = {n} outside 1..={MAX_WORD_SUM}"));
    }
    Ok((0..1u64 << n)
        .into_par_iter()
        .map(|i| mixed_moment(&Word::from_index(n, i)).value)
        .reduce(MultiPoly::zero, |a, b| a + b))
}

/// Block-size profiles of the non-crossing partitions of `{1..n}`: sorted
/// block sizes mapped to the number of partitions with that profile.
pub fn non_crossing_profiles(n: usize) -> BTreeMap<Vec<usize>, u64> {
    let mut memo: Vec<Option<BTreeMap<Vec<usize>, u64>>> = vec![None; n + 1];
    nc_profiles(n, &mut memo)
}

fn nc_profiles(
    n: usize,
    memo: &mut Vec<Option<BTreeMap<Vec<usize>, u64>>>,
) -> BTreeMap<Vec<usize>, u64> {
    if let Some(v) = &memo[n] {
        return v.clone();
    }
    let mut out = BTreeMap::new();
    if n == 0 {
        out.insert(Vec::new(), 1);
    } else {
        // block of the first element has size s; the s gaps after its
        // elements hold independent non-crossing partitions
        for s in 1..=n {
            for gaps in weak_compositions(n - s, s) {
                let mut acc: BTreeMap<Vec<usize>, u64> = BTreeMap::from([(vec![s], 1)]);
                for g in gaps {
                    let part = nc_profiles(g, memo);
                    let mut next = BTreeMap::new();
                    for (ka, ca) in &acc {
                        for (kb, cb) in &part {
                            let mut k = ka.clone();
                            k.extend(kb);
                            k.sort_unstable();
                            *next.entry(k).or_default() += ca * cb;
                        }
                    }
                    acc = next;
                }
                for (k, c) in acc {
                    *out.entry(k).or_default() += c;
                }
            }
        }
    }
    memo[n] = Some(out.clone());
    out
}

fn weak_compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![Vec::new()] } else { Vec::new() };
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in weak_compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Free cumulants `κ_1..κ_n` of a moment sequence (`moments[k−1] = m_k`), by
/// Möbius inversion on the non-crossing partition lattice.
pub fn free_cumulants(moments: &[MultiPoly]) -> Vec<MultiPoly> {
    let mut kappa: Vec<MultiPoly> = Vec::with_capacity(moments.len());
    for n in 1..=moments.len() {
        let mut lower = MultiPoly::zero();
        for (profile, count) in non_crossing_profiles(n) {
            if profile == [n] {
                continue;
            }
            let mut prod = MultiPoly::from_int(count as i64);
            for &b in &profile {
                prod = &prod * &kappa[b - 1];
            }
            lower += prod;
        }
        kappa.push(&moments[n - 1] - &lower);
    }
    kappa
}

/// `Σ_{π ∈ NC(n)} ∏_{B ∈ π} κ_{|B|}(d)` with the free cumulants of d derived
/// from the moment sequence `φ(d^k) = θ^k`.
pub fn free_moment_d(n: usize) -> Result<MultiPoly> {
    if n == 0 || n > 12 {
        return domain(format!("n = {n} outside 1..=12"));
    }
    let moments: Vec<MultiPoly> = (1..=n as u32)
        .map(|k| MultiPoly::var_pow(crate::qcore::Var::Theta, k))
        .collect();
    let kappa = free_cumulants(&moments);
    let mut total = MultiPoly::zero();
    for (profile, count) in non_crossing_profiles(n) {
        let mut prod = MultiPoly::from_int(count as i64);
        for &b in &profile {
            prod = &prod * &kappa[b - 1];
        }
        total += prod;
    }
    Ok(total)
}
