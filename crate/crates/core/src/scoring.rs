//! Data-level scores: residual variances from the cached Gram matrix, the
//! node-wise log score, graph scores and per-ordering log posteriors.
//!
//! For a node `j` with candidate parent set `S` on a dataset with `n` rows
//! and `p` columns the node score is
//!
//! ```text
//! phi_j(S) = -(c0 ln p + ln(1 + alpha/gamma) / 2) |S| - (alpha n + kappa)/2 · ln(n · omega_j(S))
//! ```
//!
//! where `omega_j(S)` is the residual variance of the least-squares regression
//! of column `j` on the columns in `S`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Mutex;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dag::Dag;
use crate::error::{Error, Result};
use crate::linalg;
use crate::permutations::Ordering;
use crate::selection;

/// Relative pivot threshold below which a Gram submatrix counts as singular.
pub const SINGULAR_PIVOT_TOL: f64 = 1e-10;
/// Residual variances below this fraction of `G_jj / n` are degenerate.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Hyperparameters of the score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    pub alpha: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub c0: f64,
    /// Maximum in-degree; `None` means unbounded (`d = p`).
    pub max_in_degree: Option<usize>,
}

impl Default for ScoreParams {
    fn default() -> Self {
        ScoreParams {
            alpha: 0.99,
            gamma: 0.01,
            kappa: 0.0,
            c0: 3.0,
            max_in_degree: None,
        }
    }
}

impl ScoreParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(Error::invalid(format!(
                "kappa must be non-negative, got {}",
                self.kappa
            )));
        }
        if !(self.c0 > 0.0) || !self.c0.is_finite() {
            return Err(Error::invalid(format!(
                "c0 must be positive, got {}",
                self.c0
            )));
        }
        if self.max_in_degree == Some(0) {
            return Err(Error::invalid("max in-degree must be at least 1"));
        }
        Ok(())
    }

    /// Score cost of one edge: `c0 ln p + ln(1 + alpha/gamma) / 2`.
    pub fn edge_penalty(&self, p: usize) -> f64 {
        self.c0 * (p as f64).ln() + 0.5 * (1.0 + self.alpha / self.gamma).ln()
    }

    /// Effective in-degree cap for a graph on `p` nodes.
    pub fn degree_cap(&self, p: usize) -> usize {
        self.max_in_degree.unwrap_or(p).min(p)
    }
}

/// One source's observations, column-centered, with its Gram matrix cached.
pub struct Dataset {
    n: usize,
    p: usize,
    data: DMatrix<f64>,
    gram: Vec<f64>,
    cache: ResidualCache,
}

impl Clone for Dataset {
    /// The clone starts with an empty residual cache.
    fn clone(&self) -> Self {
        Dataset {
            n: self.n,
            p: self.p,
            data: self.data.clone(),
            gram: self.gram.clone(),
            cache: ResidualCache::new(self.p),
        }
    }
}

impl std::fmt::Debug for Dataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dataset")
            .field("n", &self.n)
            .field("p", &self.p)
            .finish_non_exhaustive()
    }
}

impl Dataset {
    /// Centers the columns of `data` and caches `X^T X`.
    pub fn from_matrix(mut data: DMatrix<f64>) -> Result<Self> {
        let (n, p) = data.shape();
        if n < 2 || p == 0 {
            return Err(Error::invalid(format!(
                "dataset needs at least 2 rows and 1 column, got {n} x {p}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        for mut col in data.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        let g = data.transpose() * &data;
        let mut gram = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                // Symmetrize exactly.
                gram[i * p + j] = if i <= j { g[(i, j)] } else { g[(j, i)] };
            }
        }
        Ok(Dataset {
            n,
            p,
            data,
            gram,
            cache: ResidualCache::new(p),
        })
    }

    /// Builds a dataset from row-major observations.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: bad.len(),
            });
        }
        Self::from_matrix(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    /// Reads a CSV with a header row and one numeric column per variable.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let row = rec
                .iter()
                .map(|v| {
                    v.parse::<f64>().map_err(|e| {
                        Error::Parse(format!("row {}: bad value {v:?}: {e}", line + 2))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    /// Writes the centered data with header `x1..xp` in full-precision
    /// scientific notation.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (1..=self.p).map(|j| format!("x{j}")).collect();
        w.write_record(&header)
            .map_err(|e| Error::Parse(e.to_string()))?;
        for i in 0..self.n {
            let row: Vec<String> = (0..self.p)
                .map(|j| format!("{:e}", self.data[(i, j)]))
                .collect();
            w.write_record(&row)
                .map_err(|e| Error::Parse(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    #[inline]
    pub fn gram(&self, i: usize, j: usize) -> f64 {
        self.gram[i * self.p + j]
    }

    /// Number of memoized residual variances.
    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    pub fn clear_cache(&self) {
        self.cache.clear();
    }

    fn check_node(&self, j: usize, parents: &[usize]) -> Result<()> {
        if j >= self.p {
            return Err(Error::invalid(format!(
                "node {} out of range for p = {}",
                j + 1,
                self.p
            )));
        }
        for &i in parents {
            if i >= self.p {
                return Err(Error::invalid(format!(
                    "node {} out of range for p = {}",
                    i + 1,
                    self.p
                )));
            }
            if i == j {
                return Err(Error::invalid(format!(
                    "node {} cannot be its own parent",
                    j + 1
                )));
            }
        }
        Ok(())
    }

    /// Residual variance `omega_j(S)` of column `j` regressed on `parents`,
    /// clamped at zero. Memoized per `(j, S)`.
    pub fn residual_variance(&self, j: usize, parents: &[usize]) -> Result<f64> {
        self.check_node(j, parents)?;
        let mut sorted = parents.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        self.residual_variance_sorted(j, &sorted)
    }

    /// As [`residual_variance`](Self::residual_variance) for a sorted,
    /// duplicate-free, in-range parent list.
    pub(crate) fn residual_variance_sorted(&self, j: usize, parents: &[usize]) -> Result<f64> {
        let key = subset_key(parents, self.p);
        let value = match self.cache.get(j, &key) {
            Some(v) => v,
            None => {
                let v = self
                    .compute_residual_variance(j, parents)
                    .unwrap_or(f64::NAN);
                self.cache.insert(j, key, v);
                v
            }
        };
        if value.is_nan() {
            Err(Error::SingularDesign { node: j })
        } else {
            Ok(value)
        }
    }

    /// `(G_jj - G_jS G_SS^{-1} G_Sj) / n` via a Cholesky factor of `G_SS`,
    /// computed in sorted-label order. `None` when `G_SS` is singular.
    fn compute_residual_variance(&self, j: usize, parents: &[usize]) -> Option<f64> {
        let s = parents.len();
        let gjj = self.gram(j, j);
        if s == 0 {
            return Some((gjj / self.n as f64).max(0.0));
        }
        if s >= self.n {
            return None;
        }
        let mut l = vec![0.0; s * s];
        for (a, &pa) in parents.iter().enumerate() {
            for (b, &pb) in parents.iter().enumerate() {
                l[a * s + b] = self.gram(pa, pb);
            }
        }
        linalg::cholesky(&mut l, s, SINGULAR_PIVOT_TOL).ok()?;
        let mut z: Vec<f64> = parents.iter().map(|&pa| self.gram(pa, j)).collect();
        linalg::forward_substitute(&l, s, &mut z);
        let explained: f64 = z.iter().map(|v| v * v).sum();
        Some(((gjj - explained) / self.n as f64).max(0.0))
    }

    /// Node score `phi_j(S)`.
    pub fn node_score(&self, j: usize, parents: &[usize], params: &ScoreParams) -> Result<f64> {
        self.check_node(j, parents)?;
        let mut sorted = parents.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() > params.degree_cap(self.p) {
            return Err(Error::invalid(format!(
                "node {} has {} parents, above the in-degree cap {}",
                j + 1,
                sorted.len(),
                params.degree_cap(self.p)
            )));
        }
        self.node_score_sorted(j, &sorted, params)
    }

    pub(crate) fn node_score_sorted(
        &self,
        j: usize,
        parents: &[usize],
        params: &ScoreParams,
    ) -> Result<f64> {
        let omega = self.residual_variance_sorted(j, parents)?;
        let n = self.n as f64;
        let floor = VARIANCE_FLOOR * self.gram(j, j) / n;
        if !(omega > floor) {
            return Err(Error::DegenerateVariance { node: j });
        }
        Ok(-params.edge_penalty(self.p) * parents.len() as f64
            - 0.5 * (params.alpha * n + params.kappa) * (n * omega).ln())
    }

    /// Decomposable graph score: the sum of node scores over all nodes.
    pub fn graph_score(&self, g: &Dag, params: &ScoreParams) -> Result<f64> {
        if g.p() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: g.p(),
            });
        }
        let mut total = 0.0;
        for j in 0..self.p {
            total += self.node_score(j, &g.parent_vec(j), params)?;
        }
        Ok(total)
    }
}

/// Unnormalized log posterior of `sigma` given the MAP graph of every dataset.
pub fn log_posterior(
    sigma: &Ordering,
    datasets: &[Dataset],
    params: &ScoreParams,
    map_graphs: &[Dag],
) -> Result<f64> {
    if datasets.len() != map_graphs.len() {
        return Err(Error::DimensionMismatch {
            expected: datasets.len(),
            got: map_graphs.len(),
        });
    }
    let mut total = 0.0;
    for (ds, g) in datasets.iter().zip(map_graphs) {
        if ds.p() != sigma.len() {
            return Err(Error::DimensionMismatch {
                expected: sigma.len(),
                got: ds.p(),
            });
        }
        if !g.is_consistent(sigma) {
            return Err(Error::invalid(
                "MAP graph is not consistent with the ordering",
            ));
        }
        total += ds.graph_score(g, params)?;
    }
    Ok(total)
}

/// Log posterior of `sigma` with MAP graphs chosen by forward-backward selection.
pub fn ordering_log_posterior(
    sigma: &Ordering,
    datasets: &[Dataset],
    params: &ScoreParams,
) -> Result<f64> {
    let graphs = datasets
        .iter()
        .map(|ds| selection::forward_backward(ds, sigma, params))
        .collect::<Result<Vec<_>>>()?;
    log_posterior(sigma, datasets, params, &graphs)
}

/// Log of the alpha-fractional Bayes factor of `sigma` against `tau`.
pub fn log_bayes_factor(
    sigma: &Ordering,
    tau: &Ordering,
    datasets: &[Dataset],
    params: &ScoreParams,
) -> Result<f64> {
    if sigma == tau {
        return Ok(0.0);
    }
    Ok(ordering_log_posterior(sigma, datasets, params)?
        - ordering_log_posterior(tau, datasets, params)?)
}

/// Bitset key of a parent set.
pub(crate) fn subset_key(parents: &[usize], p: usize) -> Box<[u64]> {
    let mut key = vec![0u64; p.div_ceil(64).max(1)];
    for &i in parents {
        key[i / 64] |= 1 << (i % 64);
    }
    key.into_boxed_slice()
}

/// Entries per node kept by the residual memo before it is flushed.
const CACHE_SHARD_CAP: usize = 1 << 18;

/// Memo of residual variances keyed by `(node, parent set)`, one lock per node.
/// Singular designs are stored as NaN. A shard that outgrows
/// [`CACHE_SHARD_CAP`] is flushed; values are recomputed identically.
struct ResidualCache {
    shards: Vec<Mutex<HashMap<Box<[u64]>, f64>>>,
}

impl ResidualCache {
    fn new(p: usize) -> Self {
        ResidualCache {
            shards: (0..p).map(|_| Mutex::new(HashMap::new())).collect(),
        }
    }

    fn get(&self, j: usize, key: &[u64]) -> Option<f64> {
        self.shards[j].lock().unwrap().get(key).copied()
    }

    fn insert(&self, j: usize, key: Box<[u64]>, value: f64) {
        let mut shard = self.shards[j].lock().unwrap();
        if shard.len() >= CACHE_SHARD_CAP {
            shard.clear();
        }
        shard.insert(key, value);
    }

    fn len(&self) -> usize {
        self.shards.iter().map(|s| s.lock().unwrap().len()).sum()
    }

    fn clear(&self) {
        for s in &self.shards {
            s.lock().unwrap().clear();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        // Columns already centered: X1 = (1,-1,0), X2 = (1,1,-2).
        Dataset::from_rows(&[vec![1.0, 1.0], vec![-1.0, 1.0], vec![0.0, -2.0]]).unwrap()
    }

    #[test]
    fn residual_variance_hand_example() {
        let ds = tiny();
        // G_22 = 6, G_12 = 0, G_11 = 2: omega = (6 - 0^2 / 2) / 3 = 2.
        assert!((ds.residual_variance(1, &[0]).unwrap() - 2.0).abs() < 1e-14);
        assert!((ds.residual_variance(1, &[]).unwrap() - 2.0).abs() < 1e-14);
        assert!((ds.residual_variance(0, &[]).unwrap() - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn residual_in_span_is_zero_and_degenerate() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| {
                let a = i as f64;
                let b = (i * i) as f64;
                vec![a, b, 2.0 * a - b]
            })
            .collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        let omega = ds.residual_variance(2, &[0, 1]).unwrap();
        assert!(omega < 1e-12);
        let err = ds.node_score(2, &[0, 1], &ScoreParams::default());
        assert_eq!(err, Err(Error::DegenerateVariance { node: 2 }));
    }

    #[test]
    fn collinear_predictors_are_singular() {
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|i| {
                let a = (i as f64).sin();
                vec![a, 3.0 * a, (i as f64).cos()]
            })
            .collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        assert_eq!(
            ds.residual_variance(2, &[0, 1]),
            Err(Error::SingularDesign { node: 2 })
        );
        // Cached failures stay failures.
        assert_eq!(
            ds.residual_variance(2, &[1, 0]),
            Err(Error::SingularDesign { node: 2 })
        );
    }

    #[test]
    fn node_score_plug_in() {
        // S = {}, omega = 1, n = 100, alpha = 1, kappa = 0: phi = -50 ln 100.
        let n = 100;
        let mut col: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        col[0] = 1.0;
        let rows: Vec<Vec<f64>> = col.iter().map(|&v| vec![v]).collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        assert!((ds.residual_variance(0, &[]).unwrap() - 1.0).abs() < 1e-14);
        let params = ScoreParams {
            alpha: 1.0,
            ..ScoreParams::default()
        };
        let phi = ds.node_score(0, &[], &params).unwrap();
        assert!((phi - (-50.0 * 100f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn params_validation() {
        assert!(ScoreParams::default().validate().is_ok());
        for bad in [
            ScoreParams {
                alpha: 0.0,
                ..Default::default()
            },
            ScoreParams {
                alpha: 1.5,
                ..Default::default()
            },
            ScoreParams {
                gamma: 0.0,
                ..Default::default()
            },
            ScoreParams {
                kappa: -1.0,
                ..Default::default()
            },
            ScoreParams {
                c0: 0.0,
                ..Default::default()
            },
            ScoreParams {
                max_in_degree: Some(0),
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn centering_and_gram() {
        let ds = Dataset::from_rows(&[vec![1.0, 5.0], vec![3.0, 7.0], vec![8.0, -3.0]]).unwrap();
        for j in 0..2 {
            assert!(ds.data().column(j).mean().abs() < 1e-12);
        }
        let g = ds.data().transpose() * ds.data();
        for i in 0..2 {
            for j in 0..2 {
                assert!((g[(i, j)] - ds.gram(i, j)).abs() < 1e-10);
            }
        }
        assert!(Dataset::from_rows(&[vec![1.0]]).is_err());
        assert!(Dataset::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let ds =
            Dataset::from_rows(&[vec![1.5, -2.0], vec![0.25, 4.0], vec![-1.75, -2.0]]).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2\n"));
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.data(), ds.data());
    }
}
