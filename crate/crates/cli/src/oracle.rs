use std::path::Path;

use jod_core::equivalence_oracle::{joint_argmax, OracleLimits, DEFAULT_TOL};
use jod_core::rng::stream_rng;
use jod_core::synth::{sample_weights, DEFAULT_WEIGHT_RANGE};
use jod_core::{Dag, Ordering, WeightedDag};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// One graph of a collection; labels are 1-based. Weights follow `edges`
/// and are drawn from the seed when absent.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub edges: Vec<[usize; 2]>,
    pub weights: Option<Vec<f64>>,
    pub noise: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Collection {
    pub p: usize,
    pub graphs: Vec<GraphSpec>,
    pub sigma_star: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub argmax: Vec<Ordering>,
    pub best: i64,
    pub essential_union: Vec<[usize; 2]>,
    pub sigma_star: Ordering,
    pub emax_satisfied: bool,
    /// Whether the maximizers are exactly the orderings consistent with some
    /// equivalent of every graph.
    pub argmax_is_intersection: bool,
}

fn build(p: usize, spec: &GraphSpec, seed: u64, index: usize) -> CliResult<WeightedDag> {
    let mut edges = Vec::with_capacity(spec.edges.len());
    for &[i, j] in &spec.edges {
        if i == 0 || j == 0 || i > p || j > p {
            return Err(CliError::invalid(format!(
                "edge {i}->{j} out of range for p = {p}"
            )));
        }
        edges.push((i - 1, j - 1));
    }
    let g = Dag::from_edges(p, edges.clone())?;
    let noise = spec.noise.clone().unwrap_or_else(|| vec![1.0; p]);
    match &spec.weights {
        Some(w) => {
            if w.len() != edges.len() {
                return Err(CliError::invalid(format!(
                    "graph {}: {} weights for {} edges",
                    index + 1,
                    w.len(),
                    edges.len()
                )));
            }
            let pairs: Vec<_> = edges.into_iter().zip(w.iter().copied()).collect();
            Ok(WeightedDag::new(g, &pairs, noise)?)
        }
        None => {
            let mut rng = stream_rng(seed, index as u64);
            let drawn =
                sample_weights(&g, DEFAULT_WEIGHT_RANGE.0, DEFAULT_WEIGHT_RANGE.1, &mut rng)?;
            Ok(WeightedDag::new(g, &drawn.edge_weights(), noise)?)
        }
    }
}

pub fn run(path: &Path, sigma_flag: Option<Ordering>, seed: u64) -> CliResult<OracleReport> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let coll: Collection = serde_json::from_str(&text)
        .map_err(|e| CliError::invalid(format!("{}: bad graph collection: {e}", path.display())))?;
    if coll.graphs.is_empty() {
        return Err(CliError::invalid("graph collection is empty"));
    }
    let scms = coll
        .graphs
        .iter()
        .enumerate()
        .map(|(i, g)| build(coll.p, g, seed, i))
        .collect::<CliResult<Vec<_>>>()?;
    let sigma_star = match (sigma_flag, &coll.sigma_star) {
        (Some(s), _) => s,
        (None, Some(s)) => Ordering::from_one_based(s)?,
        // Any topological order of the union graph gives the same E_max test.
        (None, None) => {
            let union: std::collections::BTreeSet<(usize, usize)> =
                scms.iter().flat_map(|s| s.dag().edges()).collect();
            Dag::from_edges(coll.p, union)
                .map_err(|_| {
                    CliError::invalid("the union of the graphs is cyclic; pass --sigma-star")
                })?
                .topological_order()
        }
    };
    if sigma_star.len() != coll.p {
        return Err(CliError::invalid(format!(
            "sigma_star has {} labels, p = {}",
            sigma_star.len(),
            coll.p
        )));
    }
    let res = joint_argmax(&scms, DEFAULT_TOL, &OracleLimits::default())?;
    let argmax_is_intersection = res
        .argmax
        .iter()
        .cloned()
        .collect::<std::collections::BTreeSet<_>>()
        == res.intersection;
    Ok(OracleReport {
        emax_satisfied: res.emax_satisfied(&sigma_star)?,
        argmax: res.argmax,
        best: res.best,
        essential_union: res
            .essential_union
            .iter()
            .map(|&(i, j)| [i + 1, j + 1])
            .collect(),
        sigma_star,
        argmax_is_intersection,
    })
}
