//! Orderings of node labels and the proposal moves the sampler walks with.
//!
//! Labels and positions are 0-based in the library API. The text form used in
//! files and on the command line is 1-based (`"3,1,2"`).

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A permutation of the labels `0..p`; `perm[t]` is the node at position `t`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ordering {
    perm: Vec<usize>,
    inv: Vec<usize>,
}

impl Ordering {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let p = perm.len();
        if p == 0 {
            return Err(Error::invalid("ordering must contain at least one node"));
        }
        let mut inv = vec![usize::MAX; p];
        for (pos, &label) in perm.iter().enumerate() {
            if label >= p {
                return Err(Error::invalid(format!(
                    "label {} out of range for p = {p}",
                    label + 1
                )));
            }
            if inv[label] != usize::MAX {
                return Err(Error::invalid(format!("label {} repeated", label + 1)));
            }
            inv[label] = pos;
        }
        Ok(Ordering { perm, inv })
    }

    /// Builds an ordering from 1-based labels, as written in the text format.
    pub fn from_one_based(labels: &[usize]) -> Result<Self> {
        let perm = labels
            .iter()
            .map(|&l| {
                l.checked_sub(1)
                    .ok_or_else(|| Error::invalid("labels are 1-based; got 0"))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(perm)
    }

    pub fn identity(p: usize) -> Self {
        let perm: Vec<usize> = (0..p).collect();
        Ordering {
            inv: perm.clone(),
            perm,
        }
    }

    pub fn random<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..p).collect();
        perm.shuffle(rng);
        Self::from_valid(perm)
    }

    pub(crate) fn from_valid(perm: Vec<usize>) -> Self {
        let mut inv = vec![0; perm.len()];
        for (pos, &label) in perm.iter().enumerate() {
            inv[label] = pos;
        }
        Ordering { perm, inv }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.perm.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Node at position `pos`.
    #[inline]
    pub fn at(&self, pos: usize) -> usize {
        self.perm[pos]
    }

    /// Position of node `label` (the inverse permutation).
    #[inline]
    pub fn position(&self, label: usize) -> usize {
        self.inv[label]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inv
    }

    /// 1-based labels, for display and serialization.
    pub fn to_one_based(&self) -> Vec<usize> {
        self.perm.iter().map(|l| l + 1).collect()
    }

    pub fn reversed(&self) -> Self {
        let mut perm = self.perm.clone();
        perm.reverse();
        Self::from_valid(perm)
    }

    /// True when `a` comes before `b`.
    #[inline]
    pub fn precedes(&self, a: usize, b: usize) -> bool {
        self.inv[a] < self.inv[b]
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.len() {
            return Err(Error::invalid(format!(
                "label {} out of range for p = {}",
                label + 1,
                self.len()
            )));
        }
        Ok(())
    }

    fn check_position(&self, pos: usize) -> Result<()> {
        if pos >= self.len() {
            return Err(Error::invalid(format!(
                "position {} out of range for p = {}",
                pos + 1,
                self.len()
            )));
        }
        Ok(())
    }

    /// The nodes placed before `label`, in ordering order.
    pub fn predecessor_slice(&self, label: usize) -> &[usize] {
        &self.perm[..self.inv[label]]
    }

    /// The predecessor set of `label`, sorted by label.
    pub fn predecessors(&self, label: usize) -> Result<Vec<usize>> {
        self.check_label(label)?;
        let mut preds = self.predecessor_slice(label).to_vec();
        preds.sort_unstable();
        Ok(preds)
    }

    /// Removes the element at position `from` and reinserts it so that it ends
    /// up at position `to`.
    pub fn insert_move(&self, from: usize, to: usize) -> Self {
        let mut perm = self.perm.clone();
        let label = perm[from];
        if from < to {
            perm.copy_within(from + 1..=to, from);
        } else {
            perm.copy_within(to..from, to + 1);
        }
        perm[to] = label;
        Self::from_valid(perm)
    }

    /// Random-to-random move. For `i < j` the element at position `j` is
    /// reinserted immediately before the element at position `i`; for `i > j`
    /// it is reinserted immediately after the element at position `i`.
    pub fn r2r(&self, i: usize, j: usize) -> Result<Self> {
        self.check_position(i)?;
        self.check_position(j)?;
        if i == j {
            return Err(Error::invalid("r2r move requires distinct positions"));
        }
        // In both cases the moved element lands at position i.
        Ok(self.insert_move(j, i))
    }

    /// Swaps the elements at positions `i` and `i + 1`.
    pub fn adj(&self, i: usize) -> Result<Self> {
        if i + 1 >= self.len() {
            return Err(Error::invalid(format!(
                "adjacent swap position {} out of range for p = {}",
                i + 1,
                self.len()
            )));
        }
        Ok(self.swap(i, i + 1))
    }

    /// Swaps the elements at positions `i < j`.
    pub fn rts(&self, i: usize, j: usize) -> Result<Self> {
        self.check_position(j)?;
        if i >= j {
            return Err(Error::invalid("random transposition requires i < j"));
        }
        Ok(self.swap(i, j))
    }

    fn swap(&self, i: usize, j: usize) -> Self {
        let mut next = self.clone();
        next.perm.swap(i, j);
        next.inv[next.perm[i]] = i;
        next.inv[next.perm[j]] = j;
        next
    }

    /// All distinct orderings one random-to-random move away; `(p-1)^2` of them.
    pub fn r2r_neighborhood(&self) -> Result<Vec<Self>> {
        Neighborhood::R2R.all(self)
    }

    /// The leftward half of the neighborhood: every element moved to an earlier
    /// position.
    pub fn r2r_left_neighborhood(&self) -> Vec<Self> {
        let p = self.len();
        let mut out = Vec::with_capacity(p * p.saturating_sub(1) / 2);
        for from in 1..p {
            for to in 0..from {
                out.push(self.insert_move(from, to));
            }
        }
        out
    }
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, label) in self.perm.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", label + 1)?;
        }
        Ok(())
    }
}

impl FromStr for Ordering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let labels = s
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("bad label {tok:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_one_based(&labels)
    }
}

impl Serialize for Ordering {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Ordering {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One proposal move, in position coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    /// Remove the element at `from`, reinsert it so it lands at `to`.
    Insert { from: usize, to: usize },
    /// Exchange the elements at two positions.
    Swap { i: usize, j: usize },
}

impl Move {
    pub fn apply(&self, sigma: &Ordering) -> Ordering {
        match *self {
            Move::Insert { from, to } => sigma.insert_move(from, to),
            Move::Swap { i, j } => sigma.swap(i, j),
        }
    }

    /// Inclusive range of positions whose predecessor sets may change.
    pub fn span(&self) -> (usize, usize) {
        match *self {
            Move::Insert { from, to } => (from.min(to), from.max(to)),
            Move::Swap { i, j } => (i.min(j), i.max(j)),
        }
    }
}

/// Proposal neighborhoods over orderings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Neighborhood {
    /// Random-to-random insertion, `(p-1)^2` moves.
    R2R,
    /// Adjacent transpositions, `p-1` moves.
    Adj,
    /// Arbitrary transpositions, `p(p-1)/2` moves.
    Rts,
}

impl Neighborhood {
    pub fn size(&self, p: usize) -> usize {
        if p < 2 {
            return 0;
        }
        match self {
            Neighborhood::R2R => (p - 1) * (p - 1),
            Neighborhood::Adj => p - 1,
            Neighborhood::Rts => p * (p - 1) / 2,
        }
    }

    /// The `index`-th move of the canonical enumeration, `index < size(p)`.
    ///
    /// For R2R the enumeration lists every leftward insertion `(from, to < from)`
    /// first, then rightward insertions by at least two places. An adjacent swap
    /// is therefore represented only by its leftward form.
    pub fn nth_move(&self, p: usize, index: usize) -> Move {
        debug_assert!(index < self.size(p));
        match self {
            Neighborhood::R2R => {
                let left = p * (p - 1) / 2;
                if index < left {
                    let (from, to) = triangle_index(index);
                    Move::Insert { from, to }
                } else {
                    // Rightward moves with to >= from + 2, i.e. pairs (from, to)
                    // with from < to - 1 over to in 2..p.
                    let (a, from) = triangle_index(index - left);
                    Move::Insert { from, to: a + 1 }
                }
            }
            Neighborhood::Adj => Move::Swap {
                i: index,
                j: index + 1,
            },
            Neighborhood::Rts => {
                let (j, i) = triangle_index(index);
                Move::Swap { i, j }
            }
        }
    }

    pub fn moves(&self, p: usize) -> impl Iterator<Item = Move> + '_ {
        (0..self.size(p)).map(move |idx| self.nth_move(p, idx))
    }

    /// Every neighbor of `sigma` under the canonical enumeration.
    pub fn all(&self, sigma: &Ordering) -> Result<Vec<Ordering>> {
        let p = sigma.len();
        if p < 2 {
            return Err(Error::invalid("a neighborhood needs at least two nodes"));
        }
        Ok(self.moves(p).map(|m| m.apply(sigma)).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, p: usize, rng: &mut R) -> Move {
        let idx = rng.random_range(0..self.size(p));
        self.nth_move(p, idx)
    }
}

impl FromStr for Neighborhood {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "r2r" => Ok(Neighborhood::R2R),
            "adj" => Ok(Neighborhood::Adj),
            "rts" => Ok(Neighborhood::Rts),
            other => Err(Error::Parse(format!("unknown neighborhood {other:?}"))),
        }
    }
}

impl fmt::Display for Neighborhood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Neighborhood::R2R => "r2r",
            Neighborhood::Adj => "adj",
            Neighborhood::Rts => "rts",
        })
    }
}

/// Maps `k` to the pair `(row, col)` with `col < row` in row-major order of the
/// strict lower triangle: 0 -> (1,0), 1 -> (2,0), 2 -> (2,1), ...
fn triangle_index(k: usize) -> (usize, usize) {
    let mut row = ((((8 * k + 1) as f64).sqrt() + 1.0) / 2.0) as usize;
    while row * (row - 1) / 2 > k {
        row -= 1;
    }
    while (row + 1) * row / 2 <= k {
        row += 1;
    }
    (row, k - row * (row - 1) / 2)
}

/// Kendall rank correlation between two orderings of the same labels.
pub fn kendall_tau(a: &Ordering, b: &Ordering) -> Result<f64> {
    let d = discordant_pairs(a, b)?;
    Ok(tau_from_discordant(d, a.len(), 1))
}

/// Number of label pairs ranked differently by `a` and `b`.
pub(crate) fn discordant_pairs(a: &Ordering, b: &Ordering) -> Result<usize> {
    let p = a.len();
    if b.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: b.len(),
        });
    }
    let mut discordant = 0usize;
    for x in 0..p {
        for y in x + 1..p {
            if a.precedes(x, y) != b.precedes(x, y) {
                discordant += 1;
            }
        }
    }
    Ok(discordant)
}

/// Mean Kendall tau of `count` comparisons with `total` discordant pairs in
/// all. A single rounding step, so a mean of equal values is exact.
pub(crate) fn tau_from_discordant(total: usize, p: usize, count: usize) -> f64 {
    if p < 2 {
        return 1.0;
    }
    let pairs = p * (p - 1) / 2;
    1.0 - (2 * total) as f64 / (pairs * count) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ord(labels: &[usize]) -> Ordering {
        Ordering::from_one_based(labels).unwrap()
    }

    #[test]
    fn predecessors_examples() {
        assert!(ord(&[1, 2, 3]).predecessors(0).unwrap().is_empty());
        assert_eq!(ord(&[3, 1, 2]).predecessors(1).unwrap(), vec![0, 2]);
        assert_eq!(ord(&[2, 4, 1, 3]).predecessors(0).unwrap(), vec![1, 3]);
        assert!(ord(&[1, 2]).predecessors(2).is_err());
    }

    #[test]
    fn r2r_examples() {
        let s = ord(&[1, 2, 3, 4]);
        assert_eq!(s.r2r(0, 2).unwrap(), ord(&[3, 1, 2, 4]));
        assert_eq!(s.r2r(3, 0).unwrap(), ord(&[2, 3, 4, 1]));
        assert_eq!(s.r2r(1, 2).unwrap(), ord(&[1, 3, 2, 4]));
        assert_eq!(s.r2r(2, 1).unwrap(), ord(&[1, 3, 2, 4]));
        assert!(s.r2r(1, 1).is_err());
        assert!(s.r2r(0, 4).is_err());
    }

    #[test]
    fn adj_and_rts_examples() {
        assert_eq!(ord(&[1, 2, 3]).adj(0).unwrap(), ord(&[2, 1, 3]));
        assert_eq!(ord(&[1, 2, 3, 4]).rts(0, 3).unwrap(), ord(&[4, 2, 3, 1]));
        assert!(ord(&[1, 2, 3]).adj(2).is_err());
        assert!(ord(&[1, 2, 3]).rts(2, 1).is_err());
        for p in 2..8 {
            assert_eq!(Neighborhood::Adj.size(p), p - 1);
            assert_eq!(Neighborhood::Rts.size(p), p * (p - 1) / 2);
        }
    }

    #[test]
    fn neighborhood_small_cases() {
        let n2 = ord(&[1, 2]).r2r_neighborhood().unwrap();
        assert_eq!(n2, vec![ord(&[2, 1])]);
        let n4 = Ordering::identity(4).r2r_neighborhood().unwrap();
        assert_eq!(n4.len(), 9);
        assert!(Ordering::identity(1).r2r_neighborhood().is_err());
    }

    #[test]
    fn r2r_neighborhood_matches_brute_force_p5() {
        let sigma = ord(&[3, 5, 1, 4, 2]);
        let mut brute = HashSet::new();
        for from in 0..5 {
            for to in 0..5 {
                if from != to {
                    brute.insert(sigma.insert_move(from, to));
                }
            }
        }
        let canon: HashSet<_> = sigma.r2r_neighborhood().unwrap().into_iter().collect();
        assert_eq!(brute.len(), 16);
        assert_eq!(canon, brute);
    }

    #[test]
    fn triangle_index_enumerates_lower_triangle() {
        let mut k = 0;
        for row in 1..30 {
            for col in 0..row {
                assert_eq!(triangle_index(k), (row, col));
                k += 1;
            }
        }
    }

    #[test]
    fn kendall_examples() {
        let a = ord(&[1, 2, 3, 4]);
        assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        assert_eq!(kendall_tau(&a, &a.reversed()).unwrap(), -1.0);
        let b = ord(&[2, 1, 3, 4]);
        assert!((kendall_tau(&a, &b).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(kendall_tau(&a, &ord(&[1, 2])).is_err());
    }

    #[test]
    fn text_round_trip_and_validation() {
        let s: Ordering = "3,1,2".parse().unwrap();
        assert_eq!(s.as_slice(), &[2, 0, 1]);
        assert_eq!(s.to_string(), "3,1,2");
        assert!("1,1,2".parse::<Ordering>().is_err());
        assert!("0,1".parse::<Ordering>().is_err());
        assert!("1,x".parse::<Ordering>().is_err());
        assert!(Ordering::new(vec![]).is_err());
    }
}
