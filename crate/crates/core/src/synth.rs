//! Synthetic data: random DAGs consistent with an ordering, edge weights,
//! Gaussian samples, common/private edge collections, orderings at a target
//! rank correlation and path-cancelling (unfaithful) weights.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::analysis::pairwise_u;
use crate::dag::{Dag, WeightedDag};
use crate::equivalence_oracle::population_covariance;
use crate::error::{Error, Result};
use crate::permutations::{kendall_tau, Ordering};
use crate::scoring::Dataset;

/// Default absolute weight range.
pub const DEFAULT_WEIGHT_RANGE: (f64, f64) = (0.5, 1.0);
/// Weight range of the common/private edge experiments.
pub const WIDE_WEIGHT_RANGE: (f64, f64) = (0.1, 1.0);
/// Default per-source sample size.
pub const DEFAULT_N: usize = 1000;
/// Tolerance on the Kendall tau of [`similar_orderings`].
pub const SIMILARITY_TOL: f64 = 0.02;

/// Default edge probability `3 / (2p - 2)`, about 1.5 expected parents per node.
pub fn default_edge_prob(p: usize) -> f64 {
    if p < 2 {
        0.0
    } else {
        (3.0 / (2.0 * p as f64 - 2.0)).min(1.0)
    }
}

/// Includes each forward pair `sigma(a) -> sigma(b)`, `a < b`, independently
/// with probability `p_edge`.
pub fn random_ordered_dag<R: Rng + ?Sized>(
    p: usize,
    p_edge: f64,
    sigma: &Ordering,
    rng: &mut R,
) -> Result<Dag> {
    if !(0.0..=1.0).contains(&p_edge) {
        return Err(Error::invalid(format!(
            "edge probability must lie in [0, 1], got {p_edge}"
        )));
    }
    if sigma.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: sigma.len(),
        });
    }
    let mut edges = Vec::new();
    for a in 0..p {
        for b in a + 1..p {
            if rng.random_bool(p_edge) {
                edges.push((sigma.at(a), sigma.at(b)));
            }
        }
    }
    Dag::from_edges(p, edges)
}

fn check_range(low: f64, high: f64) -> Result<()> {
    if !(low > 0.0 && low < high && high.is_finite()) {
        return Err(Error::invalid(format!(
            "weight range needs 0 < low < high, got [{low}, {high}]"
        )));
    }
    Ok(())
}

fn draw_weight<R: Rng + ?Sized>(low: f64, high: f64, rng: &mut R) -> f64 {
    let mag = rng.random_range(low..=high);
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}

/// Weights uniform on `[-high, -low] ∪ [low, high]`, unit noise variances.
pub fn sample_weights<R: Rng + ?Sized>(
    g: &Dag,
    low: f64,
    high: f64,
    rng: &mut R,
) -> Result<WeightedDag> {
    check_range(low, high)?;
    let weights: Vec<((usize, usize), f64)> = g
        .edges()
        .into_iter()
        .map(|e| (e, draw_weight(low, high, rng)))
        .collect();
    WeightedDag::new(g.clone(), &weights, vec![1.0; g.p()])
}

/// Draws `n` observations from the linear Gaussian SCM in topological order.
/// The returned dataset is column-centered.
pub fn simulate<R: Rng + ?Sized>(scm: &WeightedDag, n: usize, rng: &mut R) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 samples, got {n}")));
    }
    let p = scm.p();
    let order = scm.dag().topological_order();
    let noise = scm
        .noise_vars()
        .iter()
        .map(|&v| Normal::new(0.0, v.sqrt()).map_err(|e| Error::invalid(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let parents: Vec<Vec<(usize, f64)>> = (0..p)
        .map(|j| {
            scm.dag()
                .parents(j)
                .map(|i| (i, scm.weight(i, j)))
                .collect()
        })
        .collect();
    let mut x = DMatrix::<f64>::zeros(n, p);
    for r in 0..n {
        for &j in order.as_slice() {
            let mut v = noise[j].sample(rng);
            for &(i, w) in &parents[j] {
                v += w * x[(r, i)];
            }
            x[(r, j)] = v;
        }
    }
    Dataset::from_matrix(x)
}

/// `K` graphs consistent with `sigma_star` sharing `n_common` edges, each with
/// `n_private` extra edges drawn without replacement from the pairs outside
/// the common set.
pub fn common_private_collection<R: Rng + ?Sized>(
    p: usize,
    k: usize,
    n_common: usize,
    n_private: usize,
    sigma_star: &Ordering,
    rng: &mut R,
) -> Result<Vec<Dag>> {
    if sigma_star.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: sigma_star.len(),
        });
    }
    let pairs: Vec<(usize, usize)> = (0..p)
        .flat_map(|a| (a + 1..p).map(move |b| (a, b)))
        .map(|(a, b)| (sigma_star.at(a), sigma_star.at(b)))
        .collect();
    if n_common + n_private > pairs.len() {
        return Err(Error::invalid(format!(
            "{n_common} common + {n_private} private edges exceed the {} available pairs",
            pairs.len()
        )));
    }
    let common: BTreeSet<usize> = index::sample(rng, pairs.len(), n_common)
        .into_iter()
        .collect();
    let rest: Vec<usize> = (0..pairs.len()).filter(|t| !common.contains(t)).collect();
    (0..k)
        .map(|_| {
            let private = index::sample(rng, rest.len(), n_private);
            let edges = common
                .iter()
                .copied()
                .chain(private.into_iter().map(|t| rest[t]))
                .map(|t| pairs[t]);
            Dag::from_edges(p, edges)
        })
        .collect()
}

/// Orderings drawn around the identity at a target rank correlation.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarOrderings {
    pub orderings: Vec<Ordering>,
    /// Mean pairwise Kendall tau of `orderings`; `None` when `K < 2`.
    pub u: Option<f64>,
}

/// `K` orderings whose Kendall tau with the identity lies within
/// [`SIMILARITY_TOL`] of `target_tau`.
///
/// Each ordering comes from a Metropolis walk over adjacent transpositions
/// started at the identity, with stationary weight `exp(-|D - D*|)` where `D`
/// is the number of discordant pairs and `D*` the count matching the target.
/// Given `D`, the stationary law is uniform. After a mixing phase of `20 p^2`
/// steps the first state within tolerance is returned.
pub fn similar_orderings<R: Rng + ?Sized>(
    p: usize,
    k: usize,
    target_tau: f64,
    rng: &mut R,
) -> Result<SimilarOrderings> {
    if !(-1.0..=1.0).contains(&target_tau) {
        return Err(Error::invalid(format!(
            "target tau must lie in [-1, 1], got {target_tau}"
        )));
    }
    if p < 2 {
        return Err(Error::invalid("need at least two nodes"));
    }
    if target_tau.abs() == 1.0 {
        let base = Ordering::identity(p);
        let o = if target_tau > 0.0 {
            base
        } else {
            base.reversed()
        };
        let orderings = vec![o; k];
        let u = if k >= 2 {
            Some(pairwise_u(&orderings)?)
        } else {
            None
        };
        return Ok(SimilarOrderings { orderings, u });
    }
    let pairs = (p * (p - 1) / 2) as f64;
    let target_disc = (1.0 - target_tau) * pairs / 2.0;
    let mixing = 20 * p * p;
    let max_steps = mixing + 1_000_000;
    let mut orderings = Vec::with_capacity(k);
    for _ in 0..k {
        let mut perm: Vec<usize> = (0..p).collect();
        let mut disc = 0.0_f64;
        let mut found = None;
        for step in 0..max_steps {
            let tau = 1.0 - 2.0 * disc / pairs;
            if step >= mixing && (tau - target_tau).abs() <= SIMILARITY_TOL {
                found = Some(Ordering::from_valid(perm.clone()));
                break;
            }
            let i = rng.random_range(0..p - 1);
            let delta = if perm[i] < perm[i + 1] { 1.0 } else { -1.0 };
            let log_ratio = -((disc + delta - target_disc).abs() - (disc - target_disc).abs());
            let u: f64 = rng.random();
            if log_ratio >= 0.0 || u.ln() < log_ratio {
                perm.swap(i, i + 1);
                disc += delta;
            }
        }
        match found {
            Some(o) => orderings.push(o),
            None => {
                return Err(Error::invalid(format!(
                    "no ordering on {p} nodes within {SIMILARITY_TOL} of tau = {target_tau}"
                )))
            }
        }
    }
    debug_assert!(orderings.iter().all(|o| {
        let t = kendall_tau(o, &Ordering::identity(p)).unwrap();
        (t - target_tau).abs() <= SIMILARITY_TOL + 1e-12
    }));
    let u = if k >= 2 {
        Some(pairwise_u(&orderings)?)
    } else {
        None
    };
    Ok(SimilarOrderings { orderings, u })
}

/// Triangles `i -> j, i -> l, j -> l` of `g`.
pub fn triangles(g: &Dag) -> Vec<Triangle> {
    let mut out = Vec::new();
    for l in 0..g.p() {
        let pa = g.parent_vec(l);
        for &i in &pa {
            for &j in &pa {
                if g.has_edge(i, j) {
                    out.push((i, j, l));
                }
            }
        }
    }
    out
}

type Triangle = (usize, usize, usize);

/// Whether two triangles cannot both be cancelled: same sink, or one's
/// cancelled pair `{j, l}` is the other's `{i, j}`.
fn clash(a: Triangle, b: Triangle) -> bool {
    let pair = |x: usize, y: usize| (x.min(y), x.max(y));
    a.2 == b.2 || pair(a.1, a.2) == pair(b.0, b.1) || pair(b.1, b.2) == pair(a.0, a.1)
}

/// Whether `g` has `motifs` triangles that [`unfaithful_scm`] can cancel
/// together.
pub fn cancellable_motifs(g: &Dag, motifs: usize) -> bool {
    fn extend(all: &[Triangle], from: usize, chosen: &mut Vec<Triangle>, need: usize) -> bool {
        if chosen.len() == need {
            return true;
        }
        for (t, &tri) in all.iter().enumerate().skip(from) {
            if !chosen.iter().any(|&c| clash(c, tri)) {
                chosen.push(tri);
                if extend(all, t + 1, chosen, need) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }
    extend(&triangles(g), 0, &mut Vec::new(), motifs)
}

/// Weights on `g` under which `motifs` randomly chosen triangles
/// `i -> j, i -> l, j -> l` have `Cov(X_j, X_l) = 0` exactly.
///
/// All weights are first drawn as in [`sample_weights`]. Then, visiting the
/// chosen triangles in topological order of `l`, `B_il` is solved from the
/// analytic covariance so that `Cov(X_j, X_l) = 0`. For a three-node graph this
/// is `B_il = -ac - c/a` with `a = B_ij`, `c = B_jl`. Chosen triangles have
/// distinct sinks `l`, so later solves leave earlier cancellations intact, and
/// no triangle's `{i, j}` is another's cancelled pair `{j, l}`, since the solve
/// divides by `Cov(X_j, X_i)`.
pub fn unfaithful_scm<R: Rng + ?Sized>(
    g: &Dag,
    motifs: usize,
    low: f64,
    high: f64,
    rng: &mut R,
) -> Result<WeightedDag> {
    let mut scm = sample_weights(g, low, high, rng)?;
    if motifs == 0 {
        return Ok(scm);
    }
    let mut all = triangles(g);
    all.shuffle(rng);
    let mut chosen: Vec<Triangle> = Vec::new();
    for t in all {
        if chosen.len() == motifs {
            break;
        }
        if !chosen.iter().any(|c| clash(*c, t)) {
            chosen.push(t);
        }
    }
    if chosen.len() < motifs {
        return Err(Error::invalid(format!(
            "graph has {} usable triangular motifs, {motifs} requested",
            chosen.len()
        )));
    }
    let topo = g.topological_order();
    chosen.sort_by_key(|t| topo.position(t.2));
    for (i, j, l) in chosen {
        let cov = population_covariance(&scm)?;
        let b = scm.weight(i, l);
        let s_ji = cov.get(j, i);
        if s_ji.abs() < 1e-8 {
            return Err(Error::invalid(format!(
                "cannot cancel paths through {}->{}: Cov(X{}, X{}) vanishes",
                i + 1,
                l + 1,
                j + 1,
                i + 1
            )));
        }
        // Cov(X_j, X_l) = b Cov(X_j, X_i) + rest, linear in b.
        let rest = cov.get(j, l) - b * s_ji;
        let new_b = -rest / s_ji;
        let mut weights = scm.edge_weights();
        for (e, w) in weights.iter_mut() {
            if *e == (i, l) {
                *w = new_b;
            }
        }
        scm = WeightedDag::new(g.clone(), &weights, scm.noise_vars().to_vec())?;
    }
    Ok(scm)
}
