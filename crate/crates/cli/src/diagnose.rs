use std::path::{Path, PathBuf};

use jod_core::analysis::{
    delta, edge_inclusion_pooled, gelman_rubin, tau_star_pooled, threshold, tpr_fdr, EdgeMatrix,
};
use jod_core::{Dag, Ordering};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::fit::{load_run, read_truth};
use crate::simulate::write;

#[derive(Clone, Debug)]
pub struct DiagnoseArgs {
    pub run: PathBuf,
    /// Adjacency CSVs overriding the truth stored with the run.
    pub truth: Vec<PathBuf>,
    pub sigma_star: Option<Ordering>,
    pub gr: bool,
    pub cutoff: f64,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrSummary {
    pub max: f64,
    pub frac_lt_1p1: f64,
    pub frac_lt_1p001: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub chains: usize,
    pub samples: usize,
    pub delta: Option<f64>,
    pub tau_star: Option<f64>,
    pub tpr: Option<f64>,
    pub fdr: Option<f64>,
    pub gr: Option<GrSummary>,
}

fn matrix_csv(m: &EdgeMatrix) -> String {
    let mut out = String::new();
    for row in m {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn run(args: &DiagnoseArgs) -> CliResult<Summary> {
    if !(0.0..=1.0).contains(&args.cutoff) {
        return Err(CliError::invalid(format!(
            "cutoff must lie in [0, 1], got {}",
            args.cutoff
        )));
    }
    let (record, traces) = load_run(&args.run)?;
    if args.gr && traces.len() < 2 {
        return Err(CliError::invalid(format!(
            "≥2 chains required for Gelman-Rubin, run has {}",
            traces.len()
        )));
    }
    let truth: Option<Vec<Dag>> = if !args.truth.is_empty() {
        Some(
            args.truth
                .iter()
                .map(|p| read_truth(p))
                .collect::<CliResult<_>>()?,
        )
    } else {
        record
            .truth
            .as_ref()
            .map(|t| {
                t.iter()
                    .map(|edges| {
                        Dag::from_edges(record.p, edges.iter().map(|e| (e[0] - 1, e[1] - 1)))
                    })
                    .collect::<jod_core::Result<Vec<_>>>()
            })
            .transpose()?
    };
    if let Some(t) = &truth {
        if t.len() != record.k || t.iter().any(|g| g.p() != record.p) {
            return Err(CliError::invalid(format!(
                "truth must be {} graphs on {} nodes",
                record.k, record.p
            )));
        }
    }
    let sigma_star = match (&args.sigma_star, &record.sigma_star) {
        (Some(s), _) => Some(s.clone()),
        (None, Some(s)) => Some(Ordering::from_one_based(s)?),
        (None, None) => None,
    };

    let gammas = (0..record.k)
        .map(|k| edge_inclusion_pooled(&traces, k))
        .collect::<jod_core::Result<Vec<_>>>()?;
    let estimates = gammas
        .iter()
        .map(|g| threshold(g, args.cutoff))
        .collect::<jod_core::Result<Vec<_>>>()?;
    let (mut tpr, mut fdr) = (None, None);
    let mut delta_value = None;
    if let Some(t) = &truth {
        delta_value = Some(delta(t, &gammas)?);
        let rates = t
            .iter()
            .zip(&estimates)
            .map(|(g, e)| tpr_fdr(g, e))
            .collect::<jod_core::Result<Vec<_>>>()?;
        let k = rates.len() as f64;
        tpr = Some(rates.iter().map(|r| r.0).sum::<f64>() / k);
        fdr = Some(rates.iter().map(|r| r.1).sum::<f64>() / k);
    }
    let tau = sigma_star
        .as_ref()
        .map(|s| tau_star_pooled(&traces, s))
        .transpose()?;
    let gr = if args.gr {
        Some(gelman_rubin(&traces)?)
    } else {
        None
    };

    let summary = Summary {
        chains: traces.len(),
        samples: traces.iter().map(|t| t.samples.len()).sum(),
        delta: delta_value,
        tau_star: tau,
        tpr,
        fdr,
        gr: gr.as_ref().map(|g| GrSummary {
            max: g.max,
            frac_lt_1p1: g.frac_lt_1p1,
            frac_lt_1p001: g.frac_lt_1p001,
        }),
    };
    let out: &Path = args.out.as_deref().unwrap_or(&args.run);
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    for (k, (gamma, est)) in gammas.iter().zip(&estimates).enumerate() {
        write(
            &out.join(format!("gamma_{}.csv", k + 1)),
            matrix_csv(gamma).as_bytes(),
        )?;
        write(
            &out.join(format!("estimate_{}.csv", k + 1)),
            est.to_adjacency_csv().as_bytes(),
        )?;
    }
    if let Some(g) = &gr {
        for (k, m) in g.values.iter().enumerate() {
            write(
                &out.join(format!("rhat_{}.csv", k + 1)),
                matrix_csv(m).as_bytes(),
            )?;
        }
    }
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(&out.join("summary.json"), json.as_bytes())?;
    Ok(summary)
}
