//! Posterior summaries and evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::dag::Dag;
use crate::error::{Error, Result};
use crate::permutations::{discordant_pairs, kendall_tau, tau_from_discordant, Ordering};
use crate::sampler::ChainTrace;

/// Dense `p x p` real matrix, row `i`, column `j` for the edge `i -> j`.
pub type EdgeMatrix = Vec<Vec<f64>>;

/// Cap reported for a divergent Gelman-Rubin statistic.
pub const RHAT_CAP: f64 = 1e6;

fn check_k(trace: &ChainTrace, k: usize) -> Result<()> {
    if trace.samples.is_empty() {
        return Err(Error::invalid("trace has no recorded samples"));
    }
    if k >= trace.n_datasets() {
        return Err(Error::invalid(format!(
            "dataset {} out of range for a trace over {} datasets",
            k + 1,
            trace.n_datasets()
        )));
    }
    Ok(())
}

/// Fraction of recorded samples whose dataset-`k` MAP graph holds each edge.
pub fn edge_inclusion(trace: &ChainTrace, k: usize) -> Result<EdgeMatrix> {
    edge_inclusion_pooled(std::slice::from_ref(trace), k)
}

/// As [`edge_inclusion`], pooling the samples of several chains.
pub fn edge_inclusion_pooled(traces: &[ChainTrace], k: usize) -> Result<EdgeMatrix> {
    let first = traces
        .first()
        .ok_or_else(|| Error::invalid("no traces given"))?;
    for t in traces {
        check_k(t, k)?;
    }
    let p = first.initial.len();
    let mut counts = vec![vec![0usize; p]; p];
    let mut total = 0usize;
    for t in traces {
        if t.initial.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: t.initial.len(),
            });
        }
        for s in &t.samples {
            for (i, j) in s.graphs[k].edges() {
                counts[i][j] += 1;
            }
        }
        total += t.samples.len();
    }
    Ok(counts
        .into_iter()
        .map(|row| row.into_iter().map(|c| c as f64 / total as f64).collect())
        .collect())
}

fn dag_matrix(g: &Dag) -> EdgeMatrix {
    g.adjacency_matrix()
        .into_iter()
        .map(|r| r.into_iter().map(f64::from).collect())
        .collect()
}

/// Mean over datasets of `sum_ij |truth_ij - estimate_ij|`. Estimates may be
/// binary or posterior-mean matrices.
pub fn delta(truth: &[Dag], estimates: &[EdgeMatrix]) -> Result<f64> {
    if truth.is_empty() || truth.len() != estimates.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: estimates.len(),
        });
    }
    let mut total = 0.0;
    for (g, est) in truth.iter().zip(estimates) {
        let p = g.p();
        if est.len() != p || est.iter().any(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: est.len(),
            });
        }
        for (i, row) in est.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                total += (f64::from(g.has_edge(i, j) as u8) - v).abs();
            }
        }
    }
    Ok(total / truth.len() as f64)
}

/// [`delta`] for binary estimates.
pub fn delta_binary(truth: &[Dag], estimates: &[Dag]) -> Result<f64> {
    let mats: Vec<EdgeMatrix> = estimates.iter().map(dag_matrix).collect();
    delta(truth, &mats)
}

/// Mean Kendall tau between `sigma_star` and the recorded orderings.
pub fn tau_star(trace: &ChainTrace, sigma_star: &Ordering) -> Result<f64> {
    tau_star_pooled(std::slice::from_ref(trace), sigma_star)
}

/// As [`tau_star`], pooling the samples of several chains.
pub fn tau_star_pooled(traces: &[ChainTrace], sigma_star: &Ordering) -> Result<f64> {
    let mut discordant = 0usize;
    let mut n = 0usize;
    for t in traces {
        for s in &t.samples {
            discordant += discordant_pairs(sigma_star, &s.ordering)?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("no recorded samples"));
    }
    Ok(tau_from_discordant(discordant, sigma_star.len(), n))
}

/// True positive rate and false discovery rate of `estimate`. The FDR of an
/// empty estimate is 0; the TPR against an empty truth is 1.
pub fn tpr_fdr(truth: &Dag, estimate: &Dag) -> Result<(f64, f64)> {
    if truth.p() != estimate.p() {
        return Err(Error::DimensionMismatch {
            expected: truth.p(),
            got: estimate.p(),
        });
    }
    let est = estimate.edges();
    let hits = est.iter().filter(|&&(i, j)| truth.has_edge(i, j)).count();
    let tpr = if truth.n_edges() == 0 {
        1.0
    } else {
        hits as f64 / truth.n_edges() as f64
    };
    let fdr = if est.is_empty() {
        0.0
    } else {
        (est.len() - hits) as f64 / est.len() as f64
    };
    Ok((tpr, fdr))
}

/// Point estimate from inclusion probabilities: edges with probability above
/// `cutoff`, added in decreasing probability and skipped when they would
/// close a cycle.
pub fn threshold(gamma: &EdgeMatrix, cutoff: f64) -> Result<Dag> {
    let p = gamma.len();
    if gamma.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("inclusion matrix must be square"));
    }
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (i, row) in gamma.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j && v > cutoff {
                cand.push((v, i, j));
            }
        }
    }
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut g = Dag::empty(p);
    for (_, i, j) in cand {
        match g.with_edge(i, j) {
            Ok(h) => g = h,
            Err(Error::Cycle) => {
                log::debug!("threshold: skipped {}->{} closing a cycle", i + 1, j + 1)
            }
            Err(e) => return Err(e),
        }
    }
    Ok(g)
}

/// Classic Gelman-Rubin statistic from per-chain means and variances of
/// series of length `n`.
pub fn rhat(means: &[f64], vars: &[f64], n: usize) -> f64 {
    let m = means.len() as f64;
    let nf = n as f64;
    let grand = means.iter().sum::<f64>() / m;
    let b = nf / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = vars.iter().sum::<f64>() / m;
    let scale = 1e-14 * (1.0 + grand.abs());
    if w <= scale * scale {
        return if b <= scale { 1.0 } else { RHAT_CAP };
    }
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    (var_plus / w).sqrt().min(RHAT_CAP)
}

/// Gelman-Rubin statistics for every edge-indicator series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GelmanRubin {
    /// `values[k][i][j]` for the edge `i -> j` of dataset `k`; diagonal unused.
    pub values: Vec<Vec<Vec<f64>>>,
    pub max: f64,
    pub frac_lt_1p1: f64,
    pub frac_lt_1p001: f64,
}

/// Classic (non-split) R-hat of the binary series of each ordered pair per
/// dataset across chains.
pub fn gelman_rubin(traces: &[ChainTrace]) -> Result<GelmanRubin> {
    if traces.len() < 2 {
        return Err(Error::invalid("Gelman-Rubin needs ≥2 chains"));
    }
    let n = traces[0].samples.len();
    let k_count = traces[0].n_datasets();
    let p = traces[0].initial.len();
    for t in traces {
        if t.samples.len() != n {
            return Err(Error::invalid("chains must have equal recorded lengths"));
        }
        if t.n_datasets() != k_count || t.initial.len() != p {
            return Err(Error::invalid("chains must cover the same datasets"));
        }
    }
    if n < 2 {
        return Err(Error::invalid(
            "Gelman-Rubin needs at least 2 recorded samples per chain",
        ));
    }
    if k_count == 0 {
        return Err(Error::invalid("traces carry no graphs"));
    }
    let mut values = Vec::with_capacity(k_count);
    let (mut max, mut lt1, mut lt2, mut cells) = (f64::NEG_INFINITY, 0usize, 0usize, 0usize);
    for k in 0..k_count {
        let freqs = traces
            .iter()
            .map(|t| edge_inclusion(t, k))
            .collect::<Result<Vec<_>>>()?;
        let mut mat = vec![vec![1.0; p]; p];
        for i in 0..p {
            for j in 0..p {
                if i == j {
                    continue;
                }
                let means: Vec<f64> = freqs.iter().map(|f| f[i][j]).collect();
                // Sample variance of a 0/1 series with mean q.
                let vars: Vec<f64> = means
                    .iter()
                    .map(|&q| n as f64 * q * (1.0 - q) / (n as f64 - 1.0))
                    .collect();
                let r = rhat(&means, &vars, n);
                mat[i][j] = r;
                max = max.max(r);
                lt1 += (r < 1.1) as usize;
                lt2 += (r < 1.001) as usize;
                cells += 1;
            }
        }
        values.push(mat);
    }
    let cells = cells.max(1) as f64;
    Ok(GelmanRubin {
        values,
        max,
        frac_lt_1p1: lt1 as f64 / cells,
        frac_lt_1p001: lt2 as f64 / cells,
    })
}

/// Mean Kendall tau over unordered pairs of orderings.
pub fn pairwise_u(orderings: &[Ordering]) -> Result<f64> {
    if orderings.len() < 2 {
        return Err(Error::invalid(
            "pairwise similarity needs at least two orderings",
        ));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (a, x) in orderings.iter().enumerate() {
        for y in &orderings[a + 1..] {
            sum += kendall_tau(x, y)?;
            n += 1;
        }
    }
    Ok(sum / n as f64)
}

/// Group-level connectivity of one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeConnectivity {
    /// 0-based node label.
    pub node: usize,
    pub case_mean: f64,
    pub control_mean: f64,
    /// `case_mean - control_mean`.
    pub diff: f64,
}

fn connectivity(gamma: &EdgeMatrix, v: usize) -> f64 {
    gamma.iter().map(|row| row[v]).sum::<f64>() + gamma[v].iter().sum::<f64>() - 2.0 * gamma[v][v]
}

fn group_means(group: &[EdgeMatrix], p: usize) -> Result<Vec<f64>> {
    if group.is_empty() {
        return Err(Error::invalid("empty group"));
    }
    for g in group {
        if g.len() != p || g.iter().any(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: g.len(),
            });
        }
    }
    Ok((0..p)
        .map(|v| group.iter().map(|g| connectivity(g, v)).sum::<f64>() / group.len() as f64)
        .collect())
}

/// Nodes ranked by the absolute difference of mean in+out posterior edge
/// probability between two groups; ties keep label order.
pub fn connectivity_diff(
    case: &[EdgeMatrix],
    control: &[EdgeMatrix],
) -> Result<Vec<NodeConnectivity>> {
    let p = case.first().map_or(0, Vec::len);
    let a = group_means(case, p)?;
    let b = group_means(control, p)?;
    let mut out: Vec<NodeConnectivity> = (0..p)
        .map(|v| NodeConnectivity {
            node: v,
            case_mean: a[v],
            control_mean: b[v],
            diff: a[v] - b[v],
        })
        .collect();
    out.sort_by(|x, y| {
        y.diff
            .abs()
            .total_cmp(&x.diff.abs())
            .then(x.node.cmp(&y.node))
    });
    Ok(out)
}
