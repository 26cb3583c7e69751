//! Population-level combinatorics for small graphs: Markov equivalence
//! classes, essential arrows, linear extensions, population minimal I-maps
//! and the sparsest-permutation score, and a brute-force joint argmax over
//! all orderings.

use std::collections::{BTreeSet, HashSet, VecDeque};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dag::{Dag, WeightedDag};
use crate::error::{Error, Result};
use crate::linalg;
use crate::permutations::Ordering;

/// Default coefficient tolerance for population minimal I-maps.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Size limits of the brute-force routines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleLimits {
    /// Largest `p` for equivalence-class search and linear extensions.
    pub max_class_nodes: usize,
    /// Largest `p` for enumeration of all `p!` orderings.
    pub max_enumeration_nodes: usize,
    /// Largest equivalence class explored before giving up.
    pub max_class_size: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_class_nodes: 10,
            max_enumeration_nodes: 8,
            max_class_size: 200_000,
        }
    }
}

/// A symmetric positive-definite covariance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Covariance {
    matrix: DMatrix<f64>,
}

impl Covariance {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let (r, c) = matrix.shape();
        if r != c || r == 0 {
            return Err(Error::invalid(format!(
                "covariance must be square, got {r} x {c}"
            )));
        }
        let scale = matrix.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for i in 0..r {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::invalid("covariance is not symmetric"));
                }
            }
        }
        let mut a: Vec<f64> = (0..r * r).map(|k| matrix[(k / r, k % r)]).collect();
        if linalg::cholesky(&mut a, r, 0.0).is_err() {
            return Err(Error::invalid("covariance is not positive definite"));
        }
        Ok(Covariance { matrix })
    }

    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }
}

/// `Sigma = (I - B^T)^{-1} Omega (I - B)^{-1}` for the linear SCM
/// `X = B^T X + eps`, `Cov(eps) = Omega`.
pub fn population_covariance(scm: &WeightedDag) -> Result<Covariance> {
    let p = scm.p();
    // A = (I - B^T)^{-1} is built row by row in topological order:
    // X_j = sum_i B_ij X_i + eps_j, so A_j. = e_j + sum_i B_ij A_i. .
    let order = scm.dag().topological_order();
    let mut a = DMatrix::<f64>::zeros(p, p);
    for &j in order.as_slice() {
        a[(j, j)] = 1.0;
        for i in scm.dag().parents(j) {
            let w = scm.weight(i, j);
            for c in 0..p {
                a[(j, c)] += w * a[(i, c)];
            }
        }
    }
    let omega = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(scm.noise_vars()));
    let mut sigma = &a * omega * a.transpose();
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    Covariance::new(sigma)
}

/// Regression coefficients of `j` on the sorted `preds`, standardized by
/// `sqrt(Sigma_ii / Sigma_jj)`.
fn standardized_coefficients(cov: &Covariance, j: usize, preds: &[usize]) -> Result<Vec<f64>> {
    let s = preds.len();
    if s == 0 {
        return Ok(Vec::new());
    }
    let mut a = vec![0.0; s * s];
    for (x, &px) in preds.iter().enumerate() {
        for (y, &py) in preds.iter().enumerate() {
            a[x * s + y] = cov.get(px, py);
        }
    }
    let b: Vec<f64> = preds.iter().map(|&i| cov.get(i, j)).collect();
    let beta = linalg::spd_solve(&a, s, &b, crate::scoring::SINGULAR_PIVOT_TOL)
        .ok_or(Error::SingularDesign { node: j })?;
    let sjj = cov.get(j, j);
    Ok(beta
        .iter()
        .zip(preds)
        .map(|(bi, &i)| bi * (cov.get(i, i) / sjj).sqrt())
        .collect())
}

/// Parents of `j` in the population minimal I-map, given its predecessors.
fn minimal_parents(cov: &Covariance, j: usize, preds: &[usize], tol: f64) -> Result<Vec<usize>> {
    let mut sorted = preds.to_vec();
    sorted.sort_unstable();
    let beta = standardized_coefficients(cov, j, &sorted)?;
    Ok(sorted
        .into_iter()
        .zip(beta)
        .filter(|(_, b)| b.abs() > tol)
        .map(|(i, _)| i)
        .collect())
}

/// The minimal I-map of `N(0, cov)` with respect to `sigma`: `i -> j` iff the
/// standardized coefficient of `i` in the regression of `j` on its
/// predecessors exceeds `tol` in absolute value.
pub fn population_minimal_imap(sigma: &Ordering, cov: &Covariance, tol: f64) -> Result<Dag> {
    let p = cov.p();
    if sigma.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: sigma.len(),
        });
    }
    let sets = (0..p)
        .map(|j| minimal_parents(cov, j, sigma.predecessor_slice(j), tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dag::from_parent_sets_unchecked(
        p,
        sets.iter().enumerate().map(|(j, s)| (j, s.as_slice())),
    ))
}

/// Sparsest-permutation score: minus the edge count of the minimal I-map.
pub fn psi1(sigma: &Ordering, cov: &Covariance, tol: f64) -> Result<i64> {
    Ok(-(population_minimal_imap(sigma, cov, tol)?.n_edges() as i64))
}

/// Same skeleton and same v-structures.
pub fn markov_equivalent(g: &Dag, h: &Dag) -> bool {
    g.p() == h.p() && g.skeleton() == h.skeleton() && g.v_structures() == h.v_structures()
}

/// A Markov equivalence class and its essential arrows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivalenceClass {
    pub members: BTreeSet<Dag>,
    pub essential: BTreeSet<(usize, usize)>,
}

impl EquivalenceClass {
    /// Every ordering consistent with at least one member.
    pub fn consistent_orderings(&self) -> Result<BTreeSet<Ordering>> {
        let mut out = BTreeSet::new();
        for g in &self.members {
            out.extend(linear_extensions(g.p(), &g.edges())?);
        }
        Ok(out)
    }
}

/// Closure of `g` under covered-edge reversals, explored breadth first.
pub fn equivalence_class(g: &Dag, limits: &OracleLimits) -> Result<EquivalenceClass> {
    if g.p() > limits.max_class_nodes {
        return Err(Error::LimitExceeded(format!(
            "equivalence class search supports p <= {}, got {}",
            limits.max_class_nodes,
            g.p()
        )));
    }
    let mut seen: HashSet<Dag> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(g.clone());
    queue.push_back(g.clone());
    while let Some(cur) = queue.pop_front() {
        for (i, j) in cur.covered_edges() {
            let next = cur.reverse_covered(i, j);
            if seen.insert(next.clone()) {
                if seen.len() > limits.max_class_size {
                    return Err(Error::LimitExceeded(format!(
                        "equivalence class larger than {}",
                        limits.max_class_size
                    )));
                }
                queue.push_back(next);
            }
        }
    }
    let essential = g
        .edges()
        .into_iter()
        .filter(|&(i, j)| seen.iter().all(|m| m.has_edge(i, j)))
        .collect();
    Ok(EquivalenceClass {
        members: seen.into_iter().collect(),
        essential,
    })
}

/// All orderings of `0..p` in which every `(i, j)` of `edges` has `i` first,
/// in lexicographic order.
pub fn linear_extensions(p: usize, edges: &[(usize, usize)]) -> Result<Vec<Ordering>> {
    let g = Dag::from_edges(p, edges.iter().copied())?;
    let mut indeg: Vec<usize> = (0..p).map(|j| g.in_degree(j)).collect();
    let mut used = vec![false; p];
    let mut prefix = Vec::with_capacity(p);
    let mut out = Vec::new();
    extend(&g, &mut indeg, &mut used, &mut prefix, &mut out);
    Ok(out)
}

fn extend(
    g: &Dag,
    indeg: &mut [usize],
    used: &mut [bool],
    prefix: &mut Vec<usize>,
    out: &mut Vec<Ordering>,
) {
    let p = g.p();
    if prefix.len() == p {
        out.push(Ordering::from_valid(prefix.clone()));
        return;
    }
    for v in 0..p {
        if used[v] || indeg[v] > 0 {
            continue;
        }
        used[v] = true;
        prefix.push(v);
        for c in g.children(v) {
            indeg[c] -= 1;
        }
        extend(g, indeg, used, prefix, out);
        for c in g.children(v) {
            indeg[c] += 1;
        }
        prefix.pop();
        used[v] = false;
    }
}

/// `{s(j) -> s(j+1) : 2 <= j <= p-1} ∪ {s(1) -> s(3)}` in 1-based positions.
pub fn e_max(sigma_star: &Ordering) -> Result<BTreeSet<(usize, usize)>> {
    let p = sigma_star.len();
    if p < 3 {
        return Err(Error::invalid("E_max needs at least three nodes"));
    }
    let s = sigma_star.as_slice();
    let mut out: BTreeSet<(usize, usize)> = (1..p - 1).map(|t| (s[t], s[t + 1])).collect();
    out.insert((s[0], s[2]));
    Ok(out)
}

/// `sigma` with its first two elements exchanged.
pub fn sigma_dagger(sigma: &Ordering) -> Result<Ordering> {
    if sigma.len() < 2 {
        return Err(Error::invalid("need at least two nodes"));
    }
    let mut perm = sigma.as_slice().to_vec();
    perm.swap(0, 1);
    Ok(Ordering::from_valid(perm))
}

/// Calls `f` on every permutation of `0..p` in lexicographic order.
pub fn for_each_ordering(p: usize, mut f: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..p).collect();
    loop {
        f(&perm);
        if !next_permutation(&mut perm) {
            break;
        }
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Minimal I-map edge counts of one covariance for every
/// `(node, predecessor set)`, for `p <= 16`.
pub struct ImapTable {
    p: usize,
    counts: Vec<u8>,
}

impl ImapTable {
    pub fn new(cov: &Covariance, tol: f64) -> Result<Self> {
        let p = cov.p();
        if p > 16 {
            return Err(Error::LimitExceeded(format!(
                "edge-count tables need p <= 16, got {p}"
            )));
        }
        let masks = 1usize << p;
        let rows: Vec<Vec<u8>> = (0..p)
            .into_par_iter()
            .map(|j| {
                (0..masks)
                    .map(|mask| {
                        if mask & (1 << j) != 0 {
                            return Ok(0);
                        }
                        let preds: Vec<usize> = (0..p).filter(|i| mask & (1 << i) != 0).collect();
                        Ok(minimal_parents(cov, j, &preds, tol)?.len() as u8)
                    })
                    .collect::<Result<Vec<u8>>>()
            })
            .collect::<Result<_>>()?;
        Ok(ImapTable {
            p,
            counts: rows.concat(),
        })
    }

    /// `|G_sigma|` for the ordering given as a label slice.
    pub fn edges(&self, perm: &[usize]) -> i64 {
        let mut mask = 0usize;
        let mut total = 0i64;
        for &j in perm {
            total += self.counts[(j << self.p) + mask] as i64;
            mask |= 1 << j;
        }
        total
    }
}

/// Result of [`joint_argmax`].
#[derive(Clone, Debug, PartialEq)]
pub struct JointArgmax {
    /// Maximizers of the summed sparsest-permutation score, sorted.
    pub argmax: Vec<Ordering>,
    /// The maximal score value.
    pub best: i64,
    /// Intersection over datasets of the orderings consistent with some
    /// member of each true graph's equivalence class.
    pub intersection: BTreeSet<Ordering>,
    /// Union over datasets of essential arrows.
    pub essential_union: BTreeSet<(usize, usize)>,
}

impl JointArgmax {
    /// True when `E_max(sigma_star)` lies inside the essential-arrow union.
    pub fn emax_satisfied(&self, sigma_star: &Ordering) -> Result<bool> {
        Ok(e_max(sigma_star)?.is_subset(&self.essential_union))
    }
}

/// Exhaustive maximization of `sum_k psi1_k` over all `p!` orderings, with
/// the equivalence-class quantities needed to cross-check the result.
pub fn joint_argmax(scms: &[WeightedDag], tol: f64, limits: &OracleLimits) -> Result<JointArgmax> {
    let first = scms
        .first()
        .ok_or_else(|| Error::invalid("joint argmax needs at least one model"))?;
    let p = first.p();
    if let Some(bad) = scms.iter().find(|s| s.p() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: bad.p(),
        });
    }
    if p > limits.max_enumeration_nodes {
        return Err(Error::LimitExceeded(format!(
            "ordering enumeration supports p <= {}, got {p}",
            limits.max_enumeration_nodes
        )));
    }
    let covs = scms
        .iter()
        .map(population_covariance)
        .collect::<Result<Vec<_>>>()?;
    let (argmax, best) = argmax_over_orderings(&covs, tol)?;

    let mut intersection: Option<BTreeSet<Ordering>> = None;
    let mut essential_union = BTreeSet::new();
    for scm in scms {
        let class = equivalence_class(scm.dag(), limits)?;
        essential_union.extend(class.essential.iter().copied());
        let ords = class.consistent_orderings()?;
        intersection = Some(match intersection {
            None => ords,
            Some(acc) => acc.intersection(&ords).cloned().collect(),
        });
    }
    Ok(JointArgmax {
        argmax,
        best,
        intersection: intersection.unwrap_or_default(),
        essential_union,
    })
}

/// Maximizers of `sum_k psi1_k(sigma)` over all orderings, sorted, and the
/// maximum.
pub fn argmax_over_orderings(covs: &[Covariance], tol: f64) -> Result<(Vec<Ordering>, i64)> {
    let p = covs.first().map_or(0, Covariance::p);
    if p == 0 || p > 16 {
        return Err(Error::LimitExceeded(format!(
            "ordering enumeration needs 1 <= p <= 16, got {p}"
        )));
    }
    let tables = covs
        .iter()
        .map(|c| ImapTable::new(c, tol))
        .collect::<Result<Vec<_>>>()?;
    // Partition by the first element; each part is enumerated sequentially.
    let parts: Vec<(i64, Vec<Vec<usize>>)> = (0..p)
        .into_par_iter()
        .map(|head| {
            let rest: Vec<usize> = (0..p).filter(|&v| v != head).collect();
            let mut best = i64::MIN;
            let mut winners = Vec::new();
            let mut perm = vec![head];
            perm.extend_from_slice(&rest);
            for_each_ordering(p - 1, |idx| {
                for (t, &k) in idx.iter().enumerate() {
                    perm[t + 1] = rest[k];
                }
                let score: i64 = -tables.iter().map(|t| t.edges(&perm)).sum::<i64>();
                if score > best {
                    best = score;
                    winners.clear();
                }
                if score == best {
                    winners.push(perm.clone());
                }
            });
            (best, winners)
        })
        .collect();
    let best = parts.iter().map(|(b, _)| *b).max().unwrap_or(i64::MIN);
    let mut argmax: Vec<Ordering> = parts
        .into_iter()
        .filter(|(b, _)| *b == best)
        .flat_map(|(_, w)| w.into_iter().map(Ordering::from_valid))
        .collect();
    argmax.sort();
    Ok((argmax, best))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dag1(p: usize, edges: &[(usize, usize)]) -> Dag {
        Dag::from_edges(p, edges.iter().map(|&(i, j)| (i - 1, j - 1))).unwrap()
    }

    fn one(labels: &[usize]) -> Ordering {
        Ordering::from_one_based(labels).unwrap()
    }

    fn cancelled_triangle() -> WeightedDag {
        let (a, c) = (0.8_f64, 0.6_f64);
        let b = -a * c - c / a;
        let g = dag1(3, &[(1, 2), (1, 3), (2, 3)]);
        WeightedDag::new(g, &[((0, 1), a), ((0, 2), b), ((1, 2), c)], vec![1.0; 3]).unwrap()
    }

    /// Every DAG on `p` nodes with the skeleton of `g`, filtered by v-structures.
    fn brute_force_class(g: &Dag) -> BTreeSet<Dag> {
        let skel: Vec<(usize, usize)> = g.skeleton().into_iter().collect();
        let mut out = BTreeSet::new();
        for bits in 0..(1usize << skel.len()) {
            let edges =
                skel.iter()
                    .enumerate()
                    .map(|(t, &(i, j))| if bits >> t & 1 == 1 { (j, i) } else { (i, j) });
            if let Ok(h) = Dag::from_edges(g.p(), edges) {
                if h.v_structures() == g.v_structures() {
                    out.insert(h);
                }
            }
        }
        out
    }

    #[test]
    fn markov_equivalence_examples() {
        assert!(markov_equivalent(&dag1(2, &[(1, 2)]), &dag1(2, &[(2, 1)])));
        assert!(!markov_equivalent(
            &dag1(3, &[(1, 3), (2, 3)]),
            &dag1(3, &[(3, 1), (2, 3)])
        ));
        assert!(markov_equivalent(
            &dag1(3, &[(1, 2), (2, 3)]),
            &dag1(3, &[(3, 2), (2, 1)])
        ));
    }

    #[test]
    fn collider_class_is_singleton() {
        let g = dag1(3, &[(1, 3), (2, 3)]);
        let class = equivalence_class(&g, &OracleLimits::default()).unwrap();
        assert_eq!(class.members.len(), 1);
        assert_eq!(class.essential, [(0, 2), (1, 2)].into_iter().collect());
    }

    #[test]
    fn chain_class() {
        let g = dag1(3, &[(1, 2), (2, 3)]);
        let class = equivalence_class(&g, &OracleLimits::default()).unwrap();
        let expected: BTreeSet<Dag> = [
            dag1(3, &[(1, 2), (2, 3)]),
            dag1(3, &[(2, 1), (2, 3)]),
            dag1(3, &[(2, 1), (3, 2)]),
        ]
        .into_iter()
        .collect();
        assert_eq!(class.members, expected);
        assert!(class.essential.is_empty());
    }

    #[test]
    fn star_example_ordering_sets() {
        // G = {1->2, 2->3, 2->4}: a star on centre 2, no v-structures.
        let g = dag1(4, &[(1, 2), (2, 3), (2, 4)]);
        let limits = OracleLimits::default();
        let class = equivalence_class(&g, &limits).unwrap();
        assert!(class.essential.is_empty());
        // Rooting the star at any of its four nodes gives a member.
        assert_eq!(class.members, brute_force_class(&g));
        assert_eq!(class.members.len(), 4);
        for member in [
            dag1(4, &[(3, 2), (2, 1), (2, 4)]),
            dag1(4, &[(4, 2), (2, 1), (2, 3)]),
        ] {
            assert!(class.members.contains(&member));
        }
        assert_eq!(linear_extensions(4, &g.edges()).unwrap().len(), 2);
        assert_eq!(class.consistent_orderings().unwrap().len(), 12);
        assert_eq!(linear_extensions(4, &[]).unwrap().len(), 24);
    }

    #[test]
    fn linear_extension_examples() {
        assert_eq!(linear_extensions(3, &[]).unwrap().len(), 6);
        assert_eq!(
            linear_extensions(3, &[(0, 1), (1, 2)]).unwrap(),
            vec![Ordering::identity(3)]
        );
        assert_eq!(
            linear_extensions(3, &[(0, 1), (1, 2), (2, 0)]),
            Err(Error::Cycle)
        );
    }

    #[test]
    fn e_max_examples() {
        let e = e_max(&one(&[1, 2, 3, 4])).unwrap();
        assert_eq!(e, [(1, 2), (2, 3), (0, 2)].into_iter().collect());
        let e = e_max(&one(&[2, 1, 3])).unwrap();
        assert_eq!(e, [(0, 2), (1, 2)].into_iter().collect());
        for p in 3..=8 {
            assert_eq!(e_max(&Ordering::identity(p)).unwrap().len(), p - 1);
        }
        assert!(e_max(&Ordering::identity(2)).is_err());
        assert_eq!(sigma_dagger(&one(&[3, 1, 2])).unwrap(), one(&[1, 3, 2]));
    }

    #[test]
    fn covariance_examples() {
        let empty = WeightedDag::new(Dag::empty(3), &[], vec![1.0; 3]).unwrap();
        assert_eq!(
            population_covariance(&empty).unwrap().matrix(),
            &DMatrix::identity(3, 3)
        );
        let b = 0.7;
        let g = WeightedDag::new(dag1(2, &[(1, 2)]), &[((0, 1), b)], vec![1.0, 1.0]).unwrap();
        let s = population_covariance(&g).unwrap();
        assert!((s.get(1, 1) - (1.0 + b * b)).abs() < 1e-15);
        assert!((s.get(0, 1) - b).abs() < 1e-15);
        assert!((s.get(0, 0) - 1.0).abs() < 1e-15);
        let s = population_covariance(&cancelled_triangle()).unwrap();
        assert!(s.get(1, 2).abs() < 1e-12);
    }

    #[test]
    fn covariance_validation() {
        assert!(Covariance::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0])).is_err());
        assert!(Covariance::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(Covariance::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).is_ok());
    }

    #[test]
    fn unfaithful_triangle_scores() {
        let s = population_covariance(&cancelled_triangle()).unwrap();
        assert_eq!(psi1(&one(&[1, 2, 3]), &s, DEFAULT_TOL).unwrap(), -3);
        assert_eq!(psi1(&one(&[2, 3, 1]), &s, DEFAULT_TOL).unwrap(), -2);
        let g = population_minimal_imap(&one(&[2, 3, 1]), &s, DEFAULT_TOL).unwrap();
        assert_eq!(g, dag1(3, &[(2, 1), (3, 1)]));
    }

    #[test]
    fn minimal_imap_examples() {
        let diag = Covariance::new(DMatrix::from_diagonal_element(4, 4, 2.0)).unwrap();
        assert_eq!(
            population_minimal_imap(&one(&[3, 1, 4, 2]), &diag, DEFAULT_TOL)
                .unwrap()
                .n_edges(),
            0
        );
        let g = dag1(3, &[(1, 2), (1, 3), (2, 3)]);
        let scm = WeightedDag::new(
            g.clone(),
            &[((0, 1), 0.9), ((0, 2), -0.6), ((1, 2), 0.7)],
            vec![1.0; 3],
        )
        .unwrap();
        let s = population_covariance(&scm).unwrap();
        assert_eq!(
            population_minimal_imap(&Ordering::identity(3), &s, DEFAULT_TOL).unwrap(),
            g
        );
        assert_eq!(psi1(&Ordering::identity(3), &s, DEFAULT_TOL).unwrap(), -3);
    }

    #[test]
    fn collider_argmax() {
        let g = dag1(3, &[(1, 3), (2, 3)]);
        let scm =
            WeightedDag::new(g.clone(), &[((0, 2), 0.8), ((1, 2), -0.7)], vec![1.0; 3]).unwrap();
        let res = joint_argmax(&[scm], DEFAULT_TOL, &OracleLimits::default()).unwrap();
        let ext: BTreeSet<Ordering> = linear_extensions(3, &g.edges())
            .unwrap()
            .into_iter()
            .collect();
        assert_eq!(res.argmax.len(), 2);
        assert_eq!(res.argmax.iter().cloned().collect::<BTreeSet<_>>(), ext);
        assert_eq!(res.intersection, ext);
        assert_eq!(res.best, -2);
    }

    #[test]
    fn class_sizes_match_brute_force() {
        // Every DAG on 4 nodes consistent with the identity ordering.
        for bits in 0..(1usize << 6) {
            let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
            let g = Dag::from_edges(
                4,
                pairs
                    .iter()
                    .enumerate()
                    .filter(|(t, _)| bits >> t & 1 == 1)
                    .map(|(_, &e)| e),
            )
            .unwrap();
            let class = equivalence_class(&g, &OracleLimits::default()).unwrap();
            assert_eq!(class.members, brute_force_class(&g));
            for m in &class.members {
                assert!(markov_equivalent(m, &g));
            }
        }
    }

    #[test]
    fn first_arrow_never_essential() {
        // sigma*(1) -> sigma*(2) is covered in any graph consistent with sigma*.
        for p in 2..=5 {
            let pairs: Vec<(usize, usize)> = (0..p)
                .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
                .collect();
            for bits in 0..(1usize << pairs.len()) {
                if bits & 1 == 0 {
                    continue; // pairs[0] is (0, 1)
                }
                let g = Dag::from_edges(
                    p,
                    pairs
                        .iter()
                        .enumerate()
                        .filter(|(t, _)| bits >> t & 1 == 1)
                        .map(|(_, &e)| e),
                )
                .unwrap();
                let class = equivalence_class(&g, &OracleLimits::default()).unwrap();
                assert!(!class.essential.contains(&(0, 1)));
            }
        }
    }

    #[test]
    fn union_inside_essential_extensions() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let p = rng.random_range(3..=6);
            let sigma = Ordering::random(p, &mut rng);
            let mut edges = Vec::new();
            for a in 0..p {
                for b in a + 1..p {
                    if rng.random_bool(0.4) {
                        edges.push((sigma.at(a), sigma.at(b)));
                    }
                }
            }
            let g = Dag::from_edges(p, edges).unwrap();
            let class = equivalence_class(&g, &OracleLimits::default()).unwrap();
            let union = class.consistent_orderings().unwrap();
            let ess: Vec<_> = class.essential.iter().copied().collect();
            let le: BTreeSet<Ordering> = linear_extensions(p, &ess).unwrap().into_iter().collect();
            assert!(union.is_subset(&le));
        }
    }

    #[test]
    fn limits_are_enforced() {
        let limits = OracleLimits::default();
        assert!(matches!(
            equivalence_class(&Dag::empty(11), &limits),
            Err(Error::LimitExceeded(_))
        ));
        let scm = WeightedDag::new(Dag::empty(9), &[], vec![1.0; 9]).unwrap();
        assert!(matches!(
            joint_argmax(&[scm], DEFAULT_TOL, &limits),
            Err(Error::LimitExceeded(_))
        ));
    }

    #[test]
    fn permutation_enumeration_counts() {
        for p in 1..=6 {
            let mut n = 0;
            let mut prev: Option<Vec<usize>> = None;
            for_each_ordering(p, |perm| {
                if let Some(q) = &prev {
                    assert!(q.as_slice() < perm);
                }
                prev = Some(perm.to_vec());
                n += 1;
            });
            assert_eq!(n, (1..=p).product::<usize>());
        }
    }
}
