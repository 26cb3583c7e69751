use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use jod_core::sampler::{
    adj_equivalent_iterations, run_ensemble, ChainConfig, ChainTrace, EvalMode, JointModel,
};
use jod_core::{Dag, Dataset, Neighborhood, Ordering, ScoreParams};
use serde::{Deserialize, Serialize};

use crate::config::{FitDefaults, Manifest};
use crate::error::{CliError, CliResult};
use crate::simulate::write;

/// Settings from the command line; `None` falls back to the manifest's
/// suggestions, then to the defaults.
#[derive(Clone, Debug)]
pub struct FitArgs {
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub kappa: Option<f64>,
    pub c0: Option<f64>,
    pub d: Option<usize>,
    pub iters: Option<usize>,
    pub burn_in: Option<usize>,
    pub chains: Option<usize>,
    pub seed: u64,
    pub neighborhood: Option<Neighborhood>,
    pub thin: usize,
    pub match_r2r_budget: bool,
    pub eval: EvalMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain: usize,
    pub seed: u64,
    pub initial: Ordering,
    pub final_ordering: Ordering,
    pub final_log_post: f64,
    pub acceptance_rate: f64,
    pub recorded: usize,
    pub trace: String,
    pub maps: Vec<String>,
}

/// Everything `diagnose` needs besides the chain files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub p: usize,
    pub k: usize,
    pub n: Vec<usize>,
    pub params: ScoreParams,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub neighborhood: Neighborhood,
    pub eval: EvalMode,
    /// Reference ordering from the manifest, 1-based.
    pub sigma_star: Option<Vec<usize>>,
    /// True edge lists from the manifest, 1-based.
    pub truth: Option<Vec<Vec<[usize; 2]>>>,
    pub chains: Vec<ChainSummary>,
}

struct Inputs {
    datasets: Vec<Dataset>,
    manifest: Option<Manifest>,
    truth: Option<Vec<Dag>>,
}

fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Dataset::read_csv(std::io::BufReader::new(file))
        .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

/// A true graph as an edge list (`p=<n>` header) or an adjacency matrix.
pub fn read_truth(path: &Path) -> CliResult<Dag> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let parsed = if text.trim_start().starts_with("p=") {
        Dag::from_edge_list(&text)
    } else {
        Dag::from_adjacency_csv(&text)
    };
    parsed.map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

/// Either one manifest or a list of CSV files.
fn load_inputs(paths: &[PathBuf]) -> CliResult<Inputs> {
    if paths.is_empty() {
        return Err(CliError::invalid("no input files"));
    }
    let is_manifest = |p: &PathBuf| p.extension().is_some_and(|e| e == "json");
    if paths.iter().any(is_manifest) {
        if paths.len() != 1 {
            return Err(CliError::invalid(
                "give a single manifest or a list of CSV files",
            ));
        }
        let manifest = Manifest::load(&paths[0])?;
        let dir = paths[0].parent().unwrap_or(Path::new("."));
        let datasets = manifest
            .datasets
            .iter()
            .map(|d| read_dataset(&dir.join(&d.data)))
            .collect::<CliResult<Vec<_>>>()?;
        let truth = manifest
            .datasets
            .iter()
            .map(|d| read_truth(&dir.join(&d.truth)))
            .collect::<CliResult<Vec<_>>>()?;
        return Ok(Inputs {
            datasets,
            manifest: Some(manifest),
            truth: Some(truth),
        });
    }
    let datasets = paths
        .iter()
        .map(|p| read_dataset(p))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Inputs {
        datasets,
        manifest: None,
        truth: None,
    })
}

fn check_dims(datasets: &[Dataset]) -> CliResult<usize> {
    let p = datasets[0].p();
    for (k, ds) in datasets.iter().enumerate() {
        if ds.p() != p {
            return Err(CliError::invalid(format!(
                "dataset {} has {} columns, dataset 1 has {p}",
                k + 1,
                ds.p()
            )));
        }
    }
    Ok(p)
}

pub fn edges_to_vec(g: &Dag) -> Vec<[usize; 2]> {
    g.edges().into_iter().map(|(i, j)| [i + 1, j + 1]).collect()
}

/// `1>3;2>3`, 1-based; empty for no edges.
pub fn encode_edges(g: &Dag) -> String {
    g.edges()
        .iter()
        .map(|(i, j)| format!("{}>{}", i + 1, j + 1))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn decode_edges(p: usize, text: &str) -> CliResult<Dag> {
    let bad = || CliError::invalid(format!("bad edge encoding {text:?}"));
    let mut edges = Vec::new();
    for tok in text.split(';').map(str::trim).filter(|t| !t.is_empty()) {
        let (a, b) = tok.split_once('>').ok_or_else(bad)?;
        let i: usize = a.trim().parse().map_err(|_| bad())?;
        let j: usize = b.trim().parse().map_err(|_| bad())?;
        if i == 0 || j == 0 {
            return Err(bad());
        }
        edges.push((i - 1, j - 1));
    }
    Ok(Dag::from_edges(p, edges)?)
}

fn write_chain(
    dir: &Path,
    c: usize,
    trace: &ChainTrace,
    k: usize,
) -> CliResult<(String, Vec<String>)> {
    let trace_name = format!("chain_{c}.trace.csv");
    let path = dir.join(&trace_name);
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let io = |e: csv::Error| CliError::io(&path, e);
    w.write_record(["iter", "log_post", "accepted", "ordering"])
        .map_err(io)?;
    for s in &trace.samples {
        w.write_record([
            s.iter.to_string(),
            format!("{:e}", s.log_post),
            (trace.accepted[s.iter - 1] as u8).to_string(),
            s.ordering.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    // MAP graphs are written only where they change.
    let mut maps = Vec::with_capacity(k);
    for kk in 0..k {
        let name = format!("chain_{c}.map_{}.csv", kk + 1);
        let mut out = String::from("iter,edges\n");
        let mut last: Option<&Dag> = None;
        for s in &trace.samples {
            let g = &s.graphs[kk];
            if last != Some(g) {
                out.push_str(&format!("{},{}\n", s.iter, encode_edges(g)));
                last = Some(g);
            }
        }
        write(&dir.join(&name), out.as_bytes())?;
        maps.push(name);
    }
    Ok((trace_name, maps))
}

pub fn run(args: &FitArgs) -> CliResult<RunRecord> {
    let inputs = load_inputs(&args.inputs)?;
    let p = check_dims(&inputs.datasets)?;
    let k = inputs.datasets.len();
    let hints: FitDefaults = inputs
        .manifest
        .as_ref()
        .and_then(|m| m.settings.fit.clone())
        .unwrap_or_default();
    let base = ScoreParams::default();
    let params = ScoreParams {
        alpha: args.alpha.or(hints.alpha).unwrap_or(base.alpha),
        gamma: args.gamma.or(hints.gamma).unwrap_or(base.gamma),
        kappa: args.kappa.or(hints.kappa).unwrap_or(base.kappa),
        c0: args.c0.or(hints.c0).unwrap_or(base.c0),
        max_in_degree: args.d.or(hints.d),
    };
    params.validate()?;
    let neighborhood = args
        .neighborhood
        .or(hints.neighborhood)
        .unwrap_or(Neighborhood::R2R);
    let iterations = match args.iters.or(hints.iters) {
        Some(t) => t,
        None if args.match_r2r_budget && neighborhood != Neighborhood::R2R => {
            adj_equivalent_iterations(ChainConfig::default_iterations(p), p)
        }
        None => ChainConfig::default_iterations(p),
    };
    let n_chains = args.chains.or(hints.chains).unwrap_or(1);
    if n_chains == 0 {
        return Err(CliError::invalid("at least one chain is required"));
    }
    let configs: Vec<ChainConfig> = (0..n_chains)
        .map(|c| ChainConfig {
            iterations,
            burn_in: args.burn_in.or(hints.burn_in),
            neighborhood,
            seed: args.seed.wrapping_add(c as u64),
            initial: None,
            thin: args.thin,
        })
        .collect();
    configs[0].validate(p)?;

    let n: Vec<usize> = inputs.datasets.iter().map(Dataset::n).collect();
    let model = JointModel::new(inputs.datasets, params, args.eval)?;
    log::info!(
        "fitting p = {p}, K = {k}, {n_chains} chain(s) of {iterations} iterations ({neighborhood})"
    );
    let traces = run_ensemble(&model, &configs)
        .into_iter()
        .collect::<jod_core::Result<Vec<_>>>()?;

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let mut chains = Vec::with_capacity(n_chains);
    for (c, (trace, config)) in traces.iter().zip(&configs).enumerate() {
        let (trace_name, maps) = write_chain(&args.out, c + 1, trace, k)?;
        chains.push(ChainSummary {
            chain: c + 1,
            seed: config.seed,
            initial: trace.initial.clone(),
            final_ordering: trace.final_ordering().clone(),
            final_log_post: trace
                .log_post_path
                .last()
                .copied()
                .unwrap_or(trace.initial_log_post),
            acceptance_rate: trace.acceptance_rate(),
            recorded: trace.samples.len(),
            trace: trace_name,
            maps,
        });
    }
    let record = RunRecord {
        p,
        k,
        n,
        params,
        iterations,
        burn_in: configs[0].burn_in(),
        thin: args.thin,
        neighborhood,
        eval: args.eval,
        sigma_star: inputs.manifest.as_ref().map(|m| m.sigma_star.clone()),
        truth: inputs.truth.map(|t| t.iter().map(edges_to_vec).collect()),
        chains,
    };
    let json = serde_json::to_string_pretty(&record).expect("run record serializes");
    write(&args.out.join("run.json"), json.as_bytes())?;
    Ok(record)
}

/// Reads back the chains written by [`run`].
pub fn load_run(dir: &Path) -> CliResult<(RunRecord, Vec<ChainTrace>)> {
    let path = dir.join("run.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let record: RunRecord = serde_json::from_str(&text)
        .map_err(|e| CliError::invalid(format!("{}: bad run record: {e}", path.display())))?;
    let traces = record
        .chains
        .iter()
        .map(|c| load_chain(dir, &record, c))
        .collect::<CliResult<Vec<_>>>()?;
    Ok((record, traces))
}

fn load_chain(dir: &Path, record: &RunRecord, chain: &ChainSummary) -> CliResult<ChainTrace> {
    use jod_core::sampler::Sample;
    use std::sync::Arc;

    let path = dir.join(&chain.trace);
    let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
    let mut rdr = csv::Reader::from_reader(std::io::BufReader::new(file));
    let bad = |what: String| CliError::invalid(format!("{}: {what}", path.display()));
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", rec.len())));
        }
        let iter: usize = rec[0]
            .parse()
            .map_err(|_| bad(format!("bad iteration {:?}", &rec[0])))?;
        let log_post: f64 = rec[1]
            .parse()
            .map_err(|_| bad(format!("bad log posterior {:?}", &rec[1])))?;
        let ordering: Ordering = rec[3].parse().map_err(|e| bad(format!("{e}")))?;
        if ordering.len() != record.p {
            return Err(bad(format!(
                "ordering {ordering} is not over {} nodes",
                record.p
            )));
        }
        rows.push((iter, log_post, ordering));
    }
    // Per dataset, the graph in force at each recorded iteration.
    let mut per_dataset: Vec<Vec<Dag>> = Vec::with_capacity(record.k);
    for name in &chain.maps {
        let path = dir.join(name);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let mut changes: Vec<(usize, Dag)> = Vec::new();
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let (it, edges) = line.split_once(',').ok_or_else(|| {
                CliError::invalid(format!("{}: bad line {line:?}", path.display()))
            })?;
            let it: usize = it.parse().map_err(|_| {
                CliError::invalid(format!("{}: bad iteration {it:?}", path.display()))
            })?;
            changes.push((it, decode_edges(record.p, edges)?));
        }
        let mut graphs = Vec::with_capacity(rows.len());
        let mut at = 0;
        for (iter, _, _) in &rows {
            while at + 1 < changes.len() && changes[at + 1].0 <= *iter {
                at += 1;
            }
            let g = changes.get(at).filter(|c| c.0 <= *iter).ok_or_else(|| {
                CliError::invalid(format!("{}: no graph for iteration {iter}", path.display()))
            })?;
            graphs.push(g.1.clone());
        }
        per_dataset.push(graphs);
    }
    let samples = rows
        .into_iter()
        .enumerate()
        .map(|(t, (iter, log_post, ordering))| Sample {
            iter,
            ordering,
            log_post,
            graphs: Arc::new(per_dataset.iter().map(|g| g[t].clone()).collect()),
        })
        .collect();
    let config = ChainConfig {
        iterations: record.iterations,
        burn_in: Some(record.burn_in),
        neighborhood: record.neighborhood,
        seed: chain.seed,
        initial: Some(chain.initial.clone()),
        thin: record.thin,
    };
    Ok(ChainTrace {
        config,
        initial: chain.initial.clone(),
        initial_log_post: f64::NAN,
        samples,
        log_post_path: Vec::new(),
        accepted: Vec::new(),
        acceptances: (chain.acceptance_rate * record.iterations as f64).round() as usize,
    })
}
