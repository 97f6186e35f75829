//! Enumeration oracles for chord diagrams and the transfer-matrix model.
//!
//! Points are labelled `1..=n`. Enumeration order is lexicographic by the
//! smallest unmatched element, so output is deterministic.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::qcore::{q_integer, Exponents, MultiPoly};
use crate::qhermite::HermiteExpansion;

/// A partition of `{1..n}`; blocks are sorted and ordered by their minimum.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SetPartition {
    pub blocks: Vec<Vec<usize>>,
}

impl SetPartition {
    pub fn new(mut blocks: Vec<Vec<usize>>) -> Self {
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.sort_by_key(|b| b[0]);
        SetPartition { blocks }
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.blocks.iter().filter(|b| b.len() == 2).map(|b| (b[0], b[1]))
    }

    fn singletons(&self) -> impl Iterator<Item = usize> + '_ {
        self.blocks.iter().filter(|b| b.len() == 1).map(|b| b[0])
    }

    /// Number of crossing pairs of two-element blocks.
    pub fn crossings(&self) -> usize {
        let pairs: Vec<_> = self.pairs().collect();
        count_crossings(&pairs)
    }

    /// Σ over singletons of the number of pairs nesting over it.
    pub fn singleton_depth(&self) -> usize {
        let pairs: Vec<_> = self.pairs().collect();
        self.singletons()
            .map(|s| pairs.iter().filter(|&&(a, b)| a < s && s < b).count())
            .sum()
    }
}

pub(crate) fn count_crossings(pairs: &[(usize, usize)]) -> usize {
    let mut cr = 0;
    for (i, &(a, b)) in pairs.iter().enumerate() {
        for &(c, d) in &pairs[i + 1..] {
            if (a < c && c < b && b < d) || (c < a && a < d && d < b) {
                cr += 1;
            }
        }
    }
    cr
}

/// A partition together with its crossing statistics.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MatchingStats {
    pub partition: SetPartition,
    pub cr: usize,
    pub sd: usize,
    pub singleton_count: usize,
}

impl MatchingStats {
    pub fn from_partition(partition: SetPartition) -> Self {
        let cr = partition.crossings();
        let sd = partition.singleton_depth();
        let singleton_count = partition.singletons().count();
        MatchingStats {
            partition,
            cr,
            sd,
            singleton_count,
        }
    }
}

/// Calls `visit` on every partition of `{1..n}` into blocks of size at most
/// two (`allow_singletons`) or exactly two.
fn for_each_p12(n: usize, allow_singletons: bool, visit: &mut dyn FnMut(&[Vec<usize>])) {
    fn rec(
        used: &mut Vec<bool>,
        blocks: &mut Vec<Vec<usize>>,
        allow: bool,
        visit: &mut dyn FnMut(&[Vec<usize>]),
    ) {
        let Some(first) = used.iter().position(|u| !u) else {
            visit(blocks);
            return;
        };
        used[first] = true;
        if allow {
            blocks.push(vec![first + 1]);
            rec(used, blocks, allow, visit);
            blocks.pop();
        }
        for j in first + 1..used.len() {
            if !used[j] {
                used[j] = true;
                blocks.push(vec![first + 1, j + 1]);
                rec(used, blocks, allow, visit);
                blocks.pop();
                used[j] = false;
            }
        }
        used[first] = false;
    }
    rec(&mut vec![false; n], &mut Vec::new(), allow_singletons, visit);
}

/// All perfect matchings of `{1..n}`. Odd `n` yields an empty list.
pub fn enumerate_pair_partitions(n: usize) -> Vec<MatchingStats> {
    if n % 2 == 1 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for_each_p12(n, false, &mut |blocks| {
        out.push(MatchingStats::from_partition(SetPartition::new(blocks.to_vec())));
    });
    out
}

/// All partitions of `{1..k}` into blocks of size one or two.
pub fn enumerate_p12(k: usize) -> Vec<MatchingStats> {
    let mut out = Vec::new();
    for_each_p12(k, true, &mut |blocks| {
        out.push(MatchingStats::from_partition(SetPartition::new(blocks.to_vec())));
    });
    out
}

/// `Σ_{π ∈ P₂(n)} q^{cr(π)}` without materializing the partitions.
pub fn pair_partition_polynomial(n: usize) -> MultiPoly {
    if n % 2 == 1 {
        return MultiPoly::zero();
    }
    let mut hist: BTreeMap<usize, i64> = BTreeMap::new();
    for_each_p12(n, false, &mut |blocks| {
        let pairs: Vec<_> = blocks.iter().map(|b| (b[0], b[1])).collect();
        *hist.entry(count_crossings(&pairs)).or_default() += 1;
    });
    histogram_to_poly(&hist)
}

fn histogram_to_poly(hist: &BTreeMap<usize, i64>) -> MultiPoly {
    let mut p = MultiPoly::zero();
    for (&e, &c) in hist {
        p.add_term(Exponents::new(e as u32, 0, 0), crate::qcore::int(c));
    }
    p
}

/// Aggregates `q^{cr+sd}` over `P_{1,2}(k)` by singleton count.
pub fn p12_hermite_expansion(k: usize) -> HermiteExpansion {
    let mut hists: Vec<BTreeMap<usize, i64>> = vec![BTreeMap::new(); k + 1];
    for s in enumerate_p12(k) {
        *hists[s.singleton_count].entry(s.cr + s.sd).or_default() += 1;
    }
    HermiteExpansion::new(hists.iter().map(histogram_to_poly).collect())
}

/// Expands `(x + Δ)^k` into normal-ordered words `x^a Δ^b` using
/// `Δx → 1 + q·xΔ`, and returns the terms that survive on the vacuum
/// (`b = 0`) as a Hermite expansion.
pub fn normal_order_power(k: usize) -> HermiteExpansion {
    let nf = normal_form_power(k);
    let mut coeffs = vec![MultiPoly::zero(); k + 1];
    for ((a, b), c) in nf {
        if b == 0 {
            coeffs[a] += c;
        }
    }
    HermiteExpansion::new(coeffs)
}

/// Full normal form of `(x + Δ)^k`: map `(a, b) → coefficient of x^a Δ^b`.
pub fn normal_form_power(k: usize) -> BTreeMap<(usize, usize), MultiPoly> {
    let mut cache: Vec<BTreeMap<(usize, usize), MultiPoly>> = Vec::new();
    let mut cur: BTreeMap<(usize, usize), MultiPoly> = BTreeMap::new();
    cur.insert((0, 0), MultiPoly::one());
    for _ in 0..k {
        let mut next: BTreeMap<(usize, usize), MultiPoly> = BTreeMap::new();
        for ((a, b), c) in &cur {
            // right multiplication by Δ
            *next.entry((*a, b + 1)).or_default() += c;
            // right multiplication by x: x^a (Δ^b x)
            for ((a2, b2), c2) in delta_power_times_x(*b, &mut cache) {
                *next.entry((a + a2, b2)).or_default() += c * &c2;
            }
        }
        next.retain(|_, c| !c.is_zero());
        cur = next;
    }
    cur
}

/// Normal form of `Δ^b x`, built by moving x left across one Δ at a time:
/// `Δ^b x = Δ^{b−1}(1 + q·xΔ)`.
fn delta_power_times_x(
    b: usize,
    cache: &mut Vec<BTreeMap<(usize, usize), MultiPoly>>,
) -> BTreeMap<(usize, usize), MultiPoly> {
    while cache.len() <= b {
        let m = cache.len();
        let mut nf: BTreeMap<(usize, usize), MultiPoly> = BTreeMap::new();
        if m == 0 {
            nf.insert((1, 0), MultiPoly::one());
        } else {
            // Δ^{m−1}·1
            *nf.entry((0, m - 1)).or_default() += MultiPoly::one();
            // q·(Δ^{m−1} x)·Δ
            for ((a, bb), c) in &cache[m - 1] {
                *nf.entry((*a, bb + 1)).or_default() += c.shift(Exponents::new(1, 0, 0));
            }
        }
        cache.push(nf);
    }
    cache[b].clone()
}

/// `Σ q^{cr}` over perfect matchings of points laid out by class, with no
/// chord joining two points of the same class.
pub fn inhomogeneous_matching_oracle(class_sizes: &[usize]) -> MultiPoly {
    let n: usize = class_sizes.iter().sum();
    if n % 2 == 1 {
        return MultiPoly::zero();
    }
    let class: Vec<usize> = class_sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat(c).take(s))
        .collect();
    let mut hist: BTreeMap<usize, i64> = BTreeMap::new();
    fn rec(
        used: &mut Vec<bool>,
        class: &[usize],
        pairs: &mut Vec<(usize, usize)>,
        hist: &mut BTreeMap<usize, i64>,
    ) {
        let Some(first) = used.iter().position(|u| !u) else {
            *hist.entry(count_crossings(pairs)).or_default() += 1;
            return;
        };
        used[first] = true;
        for j in first + 1..used.len() {
            if !used[j] && class[j] != class[first] {
                used[j] = true;
                pairs.push((first, j));
                rec(used, class, pairs, hist);
                pairs.pop();
                used[j] = false;
            }
        }
        used[first] = false;
    }
    rec(&mut vec![false; n], &class, &mut Vec::new(), &mut hist);
    histogram_to_poly(&hist)
}

/// Truncated transfer matrix on levels `0..=L`:
/// `T|l⟩ = |l+1⟩ + [l]_q |l−1⟩`.
#[derive(Clone, Debug)]
pub struct TransferMatrix {
    pub truncation: usize,
    /// `entries[i][j]` is the `(i, j)` entry.
    pub entries: Vec<Vec<MultiPoly>>,
}

impl TransferMatrix {
    pub fn new(truncation: usize) -> Self {
        let size = truncation + 1;
        let mut entries = vec![vec![MultiPoly::zero(); size]; size];
        for l in 0..size {
            if l + 1 < size {
                entries[l + 1][l] = MultiPoly::one();
            }
            if l >= 1 {
                entries[l - 1][l] = q_integer(l as u32);
            }
        }
        TransferMatrix {
            truncation,
            entries,
        }
    }

    pub fn apply(&self, v: &[MultiPoly]) -> Vec<MultiPoly> {
        let size = self.truncation + 1;
        (0..size)
            .map(|i| {
                let mut acc = MultiPoly::zero();
                for (j, vj) in v.iter().enumerate() {
                    let e = &self.entries[i][j];
                    if !e.is_zero() && !vj.is_zero() {
                        acc += e * vj;
                    }
                }
                acc
            })
            .collect()
    }
}

/// `⟨0|T^k|0⟩` over the polynomial ring, with the matrix truncated at level L.
pub fn transfer_vacuum_moment(k: usize, truncation: usize) -> Result<MultiPoly> {
    if truncation < k.div_ceil(2) {
        return Err(LabError::Truncation(format!(
            "L = {truncation} is below ceil(k/2) = {}",
            k.div_ceil(2)
        )));
    }
    let t = TransferMatrix::new(truncation);
    let mut v = vec![MultiPoly::zero(); truncation + 1];
    v[0] = MultiPoly::one();
    for _ in 0..k {
        v = t.apply(&v);
    }
    Ok(v.swap_remove(0))
}

/// JSON listing of partitions with their statistics.
pub fn dump_json(stats: &[MatchingStats]) -> Result<String> {
    Ok(serde_json::to_string_pretty(stats)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qhermite::{linearization, monomial_to_hermite};

    fn poly_q(c: &[i64]) -> MultiPoly {
        MultiPoly::from_q_coeffs(c)
    }

    #[test]
    fn pair_partition_anchors() {
        let two = enumerate_pair_partitions(2);
        assert_eq!(two.len(), 1);
        assert_eq!(two[0].cr, 0);
        let four = enumerate_pair_partitions(4);
        let mut crs: Vec<_> = four.iter().map(|s| s.cr).collect();
        crs.sort();
        assert_eq!(crs, vec![0, 0, 1]);
        assert_eq!(enumerate_pair_partitions(6).len(), 15);
        assert_eq!(pair_partition_polynomial(6), poly_q(&[5, 6, 3, 1]));
        assert!(enumerate_pair_partitions(5).is_empty());
    }

    #[test]
    fn enumeration_order_is_lexicographic() {
        let four = enumerate_pair_partitions(4);
        let blocks: Vec<_> = four.iter().map(|s| s.partition.blocks.clone()).collect();
        assert_eq!(
            blocks,
            vec![
                vec![vec![1, 2], vec![3, 4]],
                vec![vec![1, 3], vec![2, 4]],
                vec![vec![1, 4], vec![2, 3]],
            ]
        );
    }

    #[test]
    fn footnote_partition_stats() {
        let s = MatchingStats::from_partition(SetPartition::new(vec![
            vec![1, 3],
            vec![2, 5],
            vec![4],
        ]));
        assert_eq!((s.cr, s.sd, s.singleton_count), (1, 1, 1));
        assert!(enumerate_p12(5).contains(&s));
    }

    #[test]
    fn p12_small() {
        let one = enumerate_p12(1);
        assert_eq!(one.len(), 1);
        assert_eq!((one[0].cr, one[0].sd, one[0].singleton_count), (0, 0, 1));
        let two = enumerate_p12(2);
        assert_eq!(two.len(), 2);
        assert!(two.iter().all(|s| s.cr == 0 && s.sd == 0));
    }

    #[test]
    fn counts() {
        let mut dfact = 1;
        for k in 1..=6 {
            dfact *= 2 * k - 1;
            assert_eq!(enumerate_pair_partitions(2 * k).len(), dfact);
        }
        let involutions = [1, 1, 2, 4, 10, 26, 76, 232, 764, 2620, 9496];
        for (k, &inv) in involutions.iter().enumerate() {
            assert_eq!(enumerate_p12(k).len(), inv);
        }
    }

    #[test]
    fn normal_order_anchors() {
        let t2 = normal_order_power(2);
        assert_eq!(t2.coeff(2), MultiPoly::one());
        assert_eq!(t2.coeff(0), MultiPoly::one());
        assert_eq!(normal_order_power(3).coeff(1), poly_q(&[2, 1]));
        let t4 = normal_order_power(4);
        assert_eq!(t4.coeff(0), poly_q(&[2, 1]));
        assert_eq!(t4.coeff(2), poly_q(&[3, 2, 1]));
    }

    #[test]
    fn three_routes_to_hermite_expansion() {
        for k in 0..=10 {
            let rewrite = normal_order_power(k);
            assert_eq!(rewrite, monomial_to_hermite(k), "k={k}");
            assert_eq!(rewrite, p12_hermite_expansion(k), "k={k}");
        }
    }

    #[test]
    fn transfer_matches_enumeration() {
        for k in 0..=7 {
            assert_eq!(
                transfer_vacuum_moment(2 * k, k).unwrap(),
                pair_partition_polynomial(2 * k)
            );
        }
        assert!(transfer_vacuum_moment(5, 3).unwrap().is_zero());
        assert_eq!(transfer_vacuum_moment(2, 1).unwrap(), MultiPoly::one());
        assert!(matches!(
            transfer_vacuum_moment(6, 2),
            Err(LabError::Truncation(_))
        ));
    }

    #[test]
    fn transfer_matrix_shape() {
        let t = TransferMatrix::new(3);
        assert_eq!(t.entries[1][0], MultiPoly::one());
        assert_eq!(t.entries[1][2], q_integer(2));
        assert!(t.entries[0][0].is_zero());
        assert!(t.entries[0][2].is_zero());
    }

    #[test]
    fn inhomogeneous_anchors() {
        assert_eq!(inhomogeneous_matching_oracle(&[1, 1]), MultiPoly::one());
        assert_eq!(inhomogeneous_matching_oracle(&[2, 2]), poly_q(&[1, 1]));
        assert!(inhomogeneous_matching_oracle(&[2]).is_zero());
        assert!(inhomogeneous_matching_oracle(&[1, 2]).is_zero());
    }

    fn compositions_upto(total: usize) -> Vec<Vec<usize>> {
        // all lists of positive parts with sum ≤ total, plus zeros sprinkled in
        let mut out = vec![vec![]];
        let mut frontier = vec![(vec![], 0usize)];
        while let Some((v, s)) = frontier.pop() {
            for p in 0..=(total - s) {
                if v.len() >= 5 {
                    break;
                }
                let mut w: Vec<usize> = v.clone();
                w.push(p);
                out.push(w.clone());
                if p > 0 || w.len() < 3 {
                    frontier.push((w, s + p));
                }
            }
        }
        out
    }

    #[test]
    fn linearization_matches_oracle() {
        for classes in compositions_upto(10) {
            let degrees: Vec<u32> = classes.iter().map(|&c| c as u32).collect();
            assert_eq!(
                linearization(&degrees),
                inhomogeneous_matching_oracle(&classes),
                "{classes:?}"
            );
        }
    }

    #[test]
    fn json_dump() {
        let s = dump_json(&enumerate_pair_partitions(2)).unwrap();
        assert!(s.contains("\"cr\": 0"));
    }
}
