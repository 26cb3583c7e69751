use std::fs;
use std::path::{Path, PathBuf};

use jod_core::rng::stream_rng;
use jod_core::synth::{
    cancellable_motifs, common_private_collection, default_edge_prob, random_ordered_dag,
    sample_weights, similar_orderings, simulate, unfaithful_scm,
};
use jod_core::{Dag, Ordering};

use crate::config::{DatasetEntry, Manifest, SimConfig};
use crate::error::{CliError, CliResult};

/// Redraws allowed while looking for a graph with enough triangles.
const MAX_REDRAWS: usize = 10_000;

/// Draws graphs and data for `config` and writes the bundle into `outdir`.
/// Everything is drawn before the first write.
pub fn run(config: &SimConfig, outdir: &Path) -> CliResult<Manifest> {
    config.validate()?;
    let p = config.p;
    let sizes = config.sizes()?;
    let (lo, hi) = config.weights();
    let sigma_star = Ordering::identity(p);
    let mut rng = stream_rng(config.seed, 0);

    let (orderings, u) = match config.target_u {
        Some(t) => {
            let sim = similar_orderings(p, config.k, t, &mut rng)?;
            (sim.orderings, sim.u)
        }
        None => (vec![sigma_star.clone(); config.k], None),
    };
    let p_edge = config.p_edge.unwrap_or_else(|| default_edge_prob(p));
    let graphs: Vec<Dag> = match (config.n_common, config.n_private) {
        (Some(c), Some(r)) => common_private_collection(p, config.k, c, r, &sigma_star, &mut rng)?,
        _ => orderings
            .iter()
            .map(|sigma| draw_graph(p, p_edge, sigma, config.unfaithful_motifs, &mut rng))
            .collect::<CliResult<_>>()?,
    };
    let mut bundle = Vec::with_capacity(config.k);
    for (k, g) in graphs.iter().enumerate() {
        // One stream per dataset keeps data independent of earlier draws.
        let mut data_rng = stream_rng(config.seed, 1 + k as u64);
        let scm = if config.unfaithful_motifs > 0 {
            cancelling_scm(g, config.unfaithful_motifs, lo, hi, &mut data_rng)?
        } else {
            sample_weights(g, lo, hi, &mut data_rng)?
        };
        bundle.push(simulate(&scm, sizes[k], &mut data_rng)?);
    }

    fs::create_dir_all(outdir).map_err(|e| CliError::io(outdir, e))?;
    let mut datasets = Vec::with_capacity(config.k);
    for (k, (ds, g)) in bundle.iter().zip(&graphs).enumerate() {
        let data_name = format!("data_{}.csv", k + 1);
        let truth_name = format!("truth_{}.csv", k + 1);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf)?;
        write(&outdir.join(&data_name), &buf)?;
        write(&outdir.join(&truth_name), g.to_edge_list().as_bytes())?;
        datasets.push(DatasetEntry {
            data: data_name,
            truth: truth_name,
            n: ds.n(),
            ordering: orderings[k].to_one_based(),
            n_edges: g.n_edges(),
        });
    }
    let manifest = Manifest {
        p,
        k: config.k,
        seed: config.seed,
        sigma_star: sigma_star.to_one_based(),
        u,
        datasets,
        settings: config.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(&outdir.join("manifest.json"), json.as_bytes())?;
    log::info!("wrote {} datasets to {}", config.k, outdir.display());
    Ok(manifest)
}

fn draw_graph(
    p: usize,
    p_edge: f64,
    sigma: &Ordering,
    motifs: usize,
    rng: &mut jod_core::rng::Rng,
) -> CliResult<Dag> {
    for _ in 0..MAX_REDRAWS {
        let g = random_ordered_dag(p, p_edge, sigma, rng)?;
        if motifs == 0 || cancellable_motifs(&g, motifs) {
            return Ok(g);
        }
    }
    Err(CliError::invalid(format!(
        "no graph with {motifs} triangular motifs after {MAX_REDRAWS} draws; raise p_edge"
    )))
}

/// Motif choice is random and two triangles sharing an edge may not both be
/// cancellable, so a failed choice is redrawn a few times.
fn cancelling_scm(
    g: &Dag,
    motifs: usize,
    lo: f64,
    hi: f64,
    rng: &mut jod_core::rng::Rng,
) -> CliResult<jod_core::WeightedDag> {
    let mut last = None;
    for _ in 0..100 {
        match unfaithful_scm(g, motifs, lo, hi, rng) {
            Ok(scm) => return Ok(scm),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt").into())
}

pub fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Output directory: flag, then config, then `out`.
pub fn resolve_outdir(flag: Option<PathBuf>, config: &SimConfig) -> PathBuf {
    flag.or_else(|| config.outdir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}
