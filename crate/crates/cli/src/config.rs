//! Simulation configs, named presets and the manifest written by `simulate`.

use std::path::{Path, PathBuf};

use jod_core::{Neighborhood, ScoreParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Sampler settings a config may suggest to `fit`. Command-line flags win.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDefaults {
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub kappa: Option<f64>,
    pub c0: Option<f64>,
    pub d: Option<usize>,
    pub iters: Option<usize>,
    pub burn_in: Option<usize>,
    pub chains: Option<usize>,
    pub neighborhood: Option<Neighborhood>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub p: usize,
    #[serde(alias = "K")]
    pub k: usize,
    pub n: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    /// Total sample size split evenly, `n_total / K` each.
    pub n_total: Option<usize>,
    /// Edge probability; defaults to `3 / (2p - 2)`.
    pub p_edge: Option<f64>,
    /// Shared edge count; set together with `n_private`.
    pub n_common: Option<usize>,
    pub n_private: Option<usize>,
    pub weight_range: Option<[f64; 2]>,
    /// Target Kendall tau of each dataset's ordering with the reference.
    pub target_u: Option<f64>,
    #[serde(default)]
    pub unfaithful_motifs: usize,
    #[serde(default)]
    pub seed: u64,
    pub outdir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitDefaults>,
}

impl SimConfig {
    /// Sample sizes per dataset.
    pub fn sizes(&self) -> CliResult<Vec<usize>> {
        match (self.n, &self.n_list, self.n_total) {
            (Some(n), None, None) => Ok(vec![n; self.k]),
            (None, Some(list), None) if list.len() == self.k => Ok(list.clone()),
            (None, Some(list), None) => Err(CliError::invalid(format!(
                "n_list has {} entries but K = {}",
                list.len(),
                self.k
            ))),
            (None, None, Some(total)) => Ok(vec![total / self.k.max(1); self.k]),
            _ => Err(CliError::invalid(
                "give exactly one of n, n_list or n_total",
            )),
        }
    }

    pub fn weights(&self) -> (f64, f64) {
        self.weight_range
            .map(|[a, b]| (a, b))
            .unwrap_or(jod_core::synth::DEFAULT_WEIGHT_RANGE)
    }

    /// Checks everything that can be checked before drawing anything.
    pub fn validate(&self) -> CliResult<()> {
        if self.p < 2 {
            return Err(CliError::invalid(format!(
                "p must be at least 2, got {}",
                self.p
            )));
        }
        if self.k == 0 {
            return Err(CliError::invalid("K must be at least 1"));
        }
        if self.sizes()?.iter().any(|&n| n < 2) {
            return Err(CliError::invalid("every sample size must be at least 2"));
        }
        if let Some(pe) = self.p_edge {
            if !(0.0..=1.0).contains(&pe) {
                return Err(CliError::invalid(format!(
                    "p_edge must lie in [0, 1], got {pe}"
                )));
            }
        }
        let (lo, hi) = self.weights();
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(CliError::invalid(format!(
                "weight_range needs 0 < low < high, got [{lo}, {hi}]"
            )));
        }
        match (self.n_common, self.n_private) {
            (Some(c), Some(r)) => {
                if self.p_edge.is_some() {
                    return Err(CliError::invalid(
                        "p_edge cannot be combined with n_common/n_private",
                    ));
                }
                if self.target_u.is_some() {
                    return Err(CliError::invalid(
                        "target_u cannot be combined with n_common/n_private",
                    ));
                }
                let pairs = self.p * (self.p - 1) / 2;
                if c + r > pairs {
                    return Err(CliError::invalid(format!(
                        "{c} common + {r} private edges exceed the {pairs} available pairs"
                    )));
                }
            }
            (None, None) => {}
            _ => {
                return Err(CliError::invalid(
                    "n_common and n_private must be given together",
                ))
            }
        }
        if let Some(u) = self.target_u {
            if !(-1.0..=1.0).contains(&u) {
                return Err(CliError::invalid(format!(
                    "target_u must lie in [-1, 1], got {u}"
                )));
            }
        }
        if let Some(fit) = &self.fit {
            fit_params(fit).validate()?;
        }
        Ok(())
    }
}

/// Score parameters implied by config defaults alone.
pub fn fit_params(fit: &FitDefaults) -> ScoreParams {
    let base = ScoreParams::default();
    ScoreParams {
        alpha: fit.alpha.unwrap_or(base.alpha),
        gamma: fit.gamma.unwrap_or(base.gamma),
        kappa: fit.kappa.unwrap_or(base.kappa),
        c0: fit.c0.unwrap_or(base.c0),
        max_in_degree: fit.d,
    }
}

const PRESETS: &[(&str, &str)] = &[
    ("table1", include_str!("../presets/table1.toml")),
    (
        "table1_small_n",
        include_str!("../presets/table1_small_n.toml"),
    ),
    ("fixed_total", include_str!("../presets/fixed_total.toml")),
    ("convergence", include_str!("../presets/convergence.toml")),
    ("table4", include_str!("../presets/table4.toml")),
    (
        "table4_balanced",
        include_str!("../presets/table4_balanced.toml"),
    ),
    ("faithfulness", include_str!("../presets/faithfulness.toml")),
    ("similarity", include_str!("../presets/similarity.toml")),
    ("highdim", include_str!("../presets/highdim.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset(name: &str) -> CliResult<SimConfig> {
    let text = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let known: Vec<_> = preset_names().collect();
            CliError::invalid(format!(
                "unknown preset {name:?}; known: {}",
                known.join(", ")
            ))
        })?;
    parse_config(text, name)
}

/// TOML first, then JSON.
pub fn parse_config(text: &str, origin: &str) -> CliResult<SimConfig> {
    match toml::from_str(text) {
        Ok(c) => Ok(c),
        Err(toml_err) => serde_json::from_str(text).map_err(|json_err| {
            CliError::invalid(format!(
                "{origin}: not a valid config (TOML: {}; JSON: {json_err})",
                toml_err.message()
            ))
        }),
    }
}

pub fn load_config(path: &Path) -> CliResult<SimConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}

/// One simulated dataset as recorded in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub data: String,
    pub truth: String,
    pub n: usize,
    /// Ordering the graph was drawn consistent with, 1-based.
    pub ordering: Vec<usize>,
    pub n_edges: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    /// Reference ordering, 1-based.
    pub sigma_star: Vec<usize>,
    pub u: Option<f64>,
    pub datasets: Vec<DatasetEntry>,
    /// The full config the datasets were drawn from.
    pub settings: SimConfig,
}

impl Manifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::invalid(format!("{}: bad manifest: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for name in preset_names() {
            let c = preset(name).unwrap();
            c.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        let t1 = preset("table1").unwrap();
        assert_eq!((t1.p, t1.k, t1.sizes().unwrap()[0]), (10, 20, 1000));
        let ft = preset("fixed_total").unwrap();
        assert_eq!(ft.sizes().unwrap(), vec![400; 10]);
    }

    #[test]
    fn json_fallback() {
        let c = parse_config(r#"{"p": 5, "K": 2, "n": 100, "seed": 3}"#, "inline").unwrap();
        assert_eq!((c.p, c.k, c.seed), (5, 2, 3));
    }

    #[test]
    fn rejects_bad_values() {
        let bad = parse_config("p = 5\nK = 2\nn = 100\np_edge = 2.0\n", "x").unwrap();
        assert!(matches!(bad.validate(), Err(CliError::Validation(_))));
        let both = parse_config("p = 5\nK = 2\nn = 100\nn_list = [1, 2]\n", "x").unwrap();
        assert!(both.validate().is_err());
        let none = parse_config("p = 5\nK = 2\n", "x").unwrap();
        assert!(none.validate().is_err());
        assert!(parse_config("p = 5\nK = 2\nbogus = 1\n", "x").is_err());
    }
}
