//! Directed acyclic graphs stored as dense parent bitsets.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::permutations::Ordering;

/// A DAG on nodes `0..p`. Row `j` of the bit matrix holds the parents of `j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dag {
    p: usize,
    words: usize,
    parents: Vec<u64>,
}

#[inline]
fn words_for(p: usize) -> usize {
    p.div_ceil(64).max(1)
}

impl Dag {
    pub fn empty(p: usize) -> Self {
        let words = words_for(p);
        Dag {
            p,
            words,
            parents: vec![0; p * words],
        }
    }

    /// Builds a DAG from `(from, to)` pairs, rejecting self-loops, duplicate
    /// arcs in both directions and directed cycles.
    pub fn from_edges<I>(p: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Dag::empty(p);
        for (i, j) in edges {
            if i >= p || j >= p {
                return Err(Error::invalid(format!(
                    "edge {}->{} out of range for p = {p}",
                    i + 1,
                    j + 1
                )));
            }
            if i == j {
                return Err(Error::invalid(format!("self-loop at node {}", i + 1)));
            }
            g.set(i, j);
        }
        if !g.check_acyclic() {
            return Err(Error::Cycle);
        }
        Ok(g)
    }

    /// Builds the DAG whose node `j` has parents `parent_sets[j]`.
    pub fn from_parent_sets(parent_sets: &[Vec<usize>]) -> Result<Self> {
        let p = parent_sets.len();
        Self::from_edges(
            p,
            parent_sets
                .iter()
                .enumerate()
                .flat_map(|(j, pa)| pa.iter().map(move |&i| (i, j))),
        )
    }

    /// Graph with the given parent sets, which the caller guarantees to be
    /// consistent with some ordering.
    pub(crate) fn from_parent_sets_unchecked<'a, I>(p: usize, sets: I) -> Self
    where
        I: IntoIterator<Item = (usize, &'a [usize])>,
    {
        let mut g = Dag::empty(p);
        for (j, pa) in sets {
            for &i in pa {
                g.set(i, j);
            }
        }
        debug_assert!(g.check_acyclic());
        g
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize) {
        self.parents[j * self.words + i / 64] |= 1 << (i % 64);
    }

    #[inline]
    fn clear(&mut self, i: usize, j: usize) {
        self.parents[j * self.words + i / 64] &= !(1 << (i % 64));
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    /// True when `i -> j` is present.
    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.parents[j * self.words + i / 64] >> (i % 64) & 1 == 1
    }

    /// True when `i` and `j` are adjacent in either direction.
    #[inline]
    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.has_edge(i, j) || self.has_edge(j, i)
    }

    pub fn n_edges(&self) -> usize {
        self.parents.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn parent_words(&self, j: usize) -> &[u64] {
        &self.parents[j * self.words..(j + 1) * self.words]
    }

    /// Parents of `j` in increasing label order.
    pub fn parents(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.parent_words(j)
            .iter()
            .enumerate()
            .flat_map(|(w, &bits)| BitIter(bits).map(move |b| w * 64 + b))
    }

    pub fn parent_vec(&self, j: usize) -> Vec<usize> {
        self.parents(j).collect()
    }

    pub fn in_degree(&self, j: usize) -> usize {
        self.parent_words(j)
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum()
    }

    pub fn max_in_degree(&self) -> usize {
        (0..self.p).map(|j| self.in_degree(j)).max().unwrap_or(0)
    }

    pub fn children(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.p).filter(move |&j| self.has_edge(i, j))
    }

    /// All edges `(from, to)` sorted lexicographically.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = (0..self.p)
            .flat_map(|j| self.parents(j).map(move |i| (i, j)))
            .collect();
        out.sort_unstable();
        out
    }

    fn check_acyclic(&self) -> bool {
        self.topological_sort().is_some()
    }

    /// Kahn's algorithm, smallest available label first.
    fn topological_sort(&self) -> Option<Vec<usize>> {
        let mut indeg: Vec<usize> = (0..self.p).map(|j| self.in_degree(j)).collect();
        let mut ready: BTreeSet<usize> = (0..self.p).filter(|&j| indeg[j] == 0).collect();
        let mut order = Vec::with_capacity(self.p);
        while let Some(&v) = ready.iter().next() {
            ready.remove(&v);
            order.push(v);
            for c in self.children(v) {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == self.p).then_some(order)
    }

    /// The lexicographically smallest ordering consistent with the graph.
    pub fn topological_order(&self) -> Ordering {
        let order = self
            .topological_sort()
            .expect("Dag invariant: graph is acyclic");
        Ordering::new(order).expect("topological sort is a permutation")
    }

    /// True when every edge points forward in `sigma`.
    pub fn is_consistent(&self, sigma: &Ordering) -> bool {
        if sigma.len() != self.p {
            return false;
        }
        (0..self.p).all(|j| self.parents(j).all(|i| sigma.precedes(i, j)))
    }

    /// Unordered adjacent pairs `(i, j)` with `i < j`.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.edges()
            .into_iter()
            .map(|(i, j)| (i.min(j), i.max(j)))
            .collect()
    }

    /// Colliders `i -> j <- k` with `i < k` and `i`, `k` non-adjacent.
    pub fn v_structures(&self) -> BTreeSet<(usize, usize, usize)> {
        let mut out = BTreeSet::new();
        for j in 0..self.p {
            let pa = self.parent_vec(j);
            for (a, &i) in pa.iter().enumerate() {
                for &k in &pa[a + 1..] {
                    if !self.adjacent(i, k) {
                        out.insert((i, j, k));
                    }
                }
            }
        }
        out
    }

    /// True when `Pa(j) = Pa(i) ∪ {i}` for the edge `i -> j`.
    pub fn is_covered(&self, i: usize, j: usize) -> bool {
        if !self.has_edge(i, j) {
            return false;
        }
        let mut expected = self.parent_words(i).to_vec();
        expected[i / 64] |= 1 << (i % 64);
        expected == self.parent_words(j)
    }

    pub fn covered_edges(&self) -> Vec<(usize, usize)> {
        self.edges()
            .into_iter()
            .filter(|&(i, j)| self.is_covered(i, j))
            .collect()
    }

    /// The graph with `i -> j` replaced by `j -> i`.
    pub fn reverse_edge(&self, i: usize, j: usize) -> Result<Self> {
        if !self.has_edge(i, j) {
            return Err(Error::invalid(format!(
                "edge {}->{} not present",
                i + 1,
                j + 1
            )));
        }
        let mut g = self.clone();
        g.clear(i, j);
        g.set(j, i);
        if !g.check_acyclic() {
            return Err(Error::Cycle);
        }
        Ok(g)
    }

    /// Reverses a covered edge; the result is always acyclic.
    pub(crate) fn reverse_covered(&self, i: usize, j: usize) -> Self {
        debug_assert!(self.is_covered(i, j));
        let mut g = self.clone();
        g.clear(i, j);
        g.set(j, i);
        g
    }

    pub fn with_edge(&self, i: usize, j: usize) -> Result<Self> {
        let mut edges = self.edges();
        edges.push((i, j));
        Dag::from_edges(self.p, edges)
    }

    pub fn without_edge(&self, i: usize, j: usize) -> Self {
        let mut g = self.clone();
        g.clear(i, j);
        g
    }

    /// Number of ordered pairs whose adjacency indicators differ.
    pub fn hamming(&self, other: &Dag) -> Result<usize> {
        if self.p != other.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: other.p,
            });
        }
        Ok(self
            .parents
            .iter()
            .zip(&other.parents)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    /// 0/1 adjacency matrix with `m[i][j] = 1` iff `i -> j`.
    pub fn adjacency_matrix(&self) -> Vec<Vec<u8>> {
        (0..self.p)
            .map(|i| (0..self.p).map(|j| self.has_edge(i, j) as u8).collect())
            .collect()
    }

    /// Edge-list text: a `p=<n>` header then one `i,j` line per edge, 1-based.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("p={}\n", self.p);
        for (i, j) in self.edges() {
            let _ = writeln!(out, "{},{}", i + 1, j + 1);
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty edge list".into()))?;
        let p = header
            .strip_prefix("p=")
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::Parse(format!("expected header p=<n>, got {header:?}")))?;
        let mut edges = Vec::new();
        for line in lines {
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("bad edge line {line:?}")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&v| v >= 1)
                    .ok_or_else(|| Error::Parse(format!("bad node label {s:?}")))
            };
            edges.push((parse(a)? - 1, parse(b)? - 1));
        }
        Dag::from_edges(p, edges)
    }

    /// Adjacency-matrix CSV, one row per source node.
    pub fn to_adjacency_csv(&self) -> String {
        let mut out = String::new();
        for row in self.adjacency_matrix() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_adjacency_csv(text: &str) -> Result<Self> {
        let rows: Vec<Vec<u8>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split(',')
                    .map(|v| match v.trim() {
                        "0" => Ok(0),
                        "1" => Ok(1),
                        other => Err(Error::Parse(format!("bad adjacency entry {other:?}"))),
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let p = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: bad.len(),
            });
        }
        let edges = rows.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &v)| v == 1)
                .map(move |(j, _)| (i, j))
        });
        Dag::from_edges(p, edges.collect::<Vec<_>>())
    }
}

struct BitIter(u64);

impl Iterator for BitIter {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let b = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(b)
    }
}

/// A linear structural equation model on a DAG: `X_j = sum_i B_ij X_i + e_j`
/// with `e_j ~ N(0, noise_vars[j])`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedDag {
    dag: Dag,
    weights: Vec<f64>,
    noise_vars: Vec<f64>,
}

impl WeightedDag {
    /// `weights` lists one coefficient per edge of `dag`.
    pub fn new(dag: Dag, weights: &[((usize, usize), f64)], noise_vars: Vec<f64>) -> Result<Self> {
        let p = dag.p();
        if noise_vars.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: noise_vars.len(),
            });
        }
        if let Some(v) = noise_vars.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!(
                "noise variances must be positive, got {v}"
            )));
        }
        let mut dense = vec![0.0; p * p];
        let mut seen = 0;
        for &((i, j), w) in weights {
            if i >= p || j >= p || !dag.has_edge(i, j) {
                return Err(Error::invalid(format!(
                    "weight given for {}->{} which is not an edge",
                    i + 1,
                    j + 1
                )));
            }
            if w == 0.0 || !w.is_finite() {
                return Err(Error::invalid(format!(
                    "edge {}->{} needs a finite nonzero weight",
                    i + 1,
                    j + 1
                )));
            }
            if dense[i * p + j] != 0.0 {
                return Err(Error::invalid("duplicate edge weight"));
            }
            dense[i * p + j] = w;
            seen += 1;
        }
        if seen != dag.n_edges() {
            return Err(Error::invalid("every edge needs exactly one weight"));
        }
        Ok(WeightedDag {
            dag,
            weights: dense,
            noise_vars,
        })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn p(&self) -> usize {
        self.dag.p()
    }

    /// Coefficient `B_ij` of the edge `i -> j`, zero when absent.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.p() + j]
    }

    pub fn noise_vars(&self) -> &[f64] {
        &self.noise_vars
    }

    pub fn edge_weights(&self) -> Vec<((usize, usize), f64)> {
        self.dag
            .edges()
            .into_iter()
            .map(|(i, j)| ((i, j), self.weight(i, j)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(p: usize, edges: &[(usize, usize)]) -> Dag {
        Dag::from_edges(p, edges.iter().map(|&(i, j)| (i - 1, j - 1))).unwrap()
    }

    fn ord(labels: &[usize]) -> Ordering {
        Ordering::from_one_based(labels).unwrap()
    }

    #[test]
    fn consistency_examples() {
        assert!(Dag::empty(3).is_consistent(&ord(&[3, 1, 2])));
        assert!(!g(2, &[(1, 2)]).is_consistent(&ord(&[2, 1])));
        assert!(g(3, &[(1, 3), (2, 3)]).is_consistent(&ord(&[2, 1, 3])));
    }

    #[test]
    fn v_structure_examples() {
        assert_eq!(
            g(3, &[(1, 3), (2, 3)]).v_structures(),
            BTreeSet::from([(0, 2, 1)])
        );
        assert!(g(3, &[(1, 3), (2, 3), (1, 2)]).v_structures().is_empty());
        assert!(g(3, &[(1, 2), (2, 3)]).v_structures().is_empty());
    }

    #[test]
    fn covered_edge_examples() {
        assert_eq!(g(2, &[(1, 2)]).covered_edges(), vec![(0, 1)]);
        assert!(g(3, &[(1, 3), (2, 3)]).covered_edges().is_empty());
        // Pa(2) = {1} = Pa(1) ∪ {1}; Pa(3) = {1,2} = Pa(2) ∪ {2}; Pa(3) != Pa(1) ∪ {1}.
        assert_eq!(
            g(3, &[(1, 2), (1, 3), (2, 3)]).covered_edges(),
            vec![(0, 1), (1, 2)]
        );
    }

    #[test]
    fn hamming_examples() {
        let a = g(3, &[(1, 2), (1, 3)]);
        assert_eq!(a.hamming(&a).unwrap(), 0);
        assert_eq!(g(2, &[(1, 2)]).hamming(&g(2, &[(2, 1)])).unwrap(), 2);
        assert_eq!(a.hamming(&g(3, &[(1, 2)])).unwrap(), 1);
        assert!(a.hamming(&Dag::empty(4)).is_err());
    }

    #[test]
    fn rejects_bad_graphs() {
        assert_eq!(Dag::from_edges(2, [(0, 1), (1, 0)]), Err(Error::Cycle));
        assert!(Dag::from_edges(2, [(0, 0)]).is_err());
        assert!(Dag::from_edges(2, [(0, 2)]).is_err());
        assert_eq!(
            Dag::from_edges(3, [(0, 1), (1, 2), (2, 0)]),
            Err(Error::Cycle)
        );
    }

    #[test]
    fn wide_graphs_use_multiple_words() {
        let p = 130;
        let d = Dag::from_edges(p, [(0, 129), (128, 129), (64, 3)]).unwrap();
        assert_eq!(d.parent_vec(129), vec![0, 128]);
        assert!(d.has_edge(64, 3));
        assert_eq!(d.n_edges(), 3);
        assert!(d.is_consistent(&d.topological_order()));
    }

    #[test]
    fn text_formats() {
        let d = g(4, &[(1, 3), (2, 3), (3, 4)]);
        let text = d.to_edge_list();
        assert_eq!(text, "p=4\n1,3\n2,3\n3,4\n");
        assert_eq!(Dag::from_edge_list(&text).unwrap(), d);
        assert_eq!(Dag::from_adjacency_csv(&d.to_adjacency_csv()).unwrap(), d);
        assert!(Dag::from_edge_list("1,2\n").is_err());
        assert!(Dag::from_edge_list("p=2\n1,2\n2,1\n").is_err());
    }

    #[test]
    fn weighted_dag_validation() {
        let d = g(2, &[(1, 2)]);
        assert!(WeightedDag::new(d.clone(), &[((0, 1), 0.7)], vec![1.0, 1.0]).is_ok());
        assert!(WeightedDag::new(d.clone(), &[], vec![1.0, 1.0]).is_err());
        assert!(WeightedDag::new(d.clone(), &[((1, 0), 0.7)], vec![1.0, 1.0]).is_err());
        assert!(WeightedDag::new(d.clone(), &[((0, 1), 0.7)], vec![1.0, 0.0]).is_err());
        assert!(WeightedDag::new(d, &[((0, 1), 0.0)], vec![1.0, 1.0]).is_err());
    }
}
