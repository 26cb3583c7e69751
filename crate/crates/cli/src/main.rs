//! `jod`: simulate data, fit the joint ordering sampler, and summarize runs.

mod config;
mod diagnose;
mod error;
mod fit;
mod oracle;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jod_core::sampler::{adj_equivalent_iterations, ChainConfig, EvalMode};
use jod_core::{Neighborhood, Ordering};

use error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "jod",
    version,
    about = "Joint order-based structure learning of Gaussian DAGs"
)]
struct Cli {
    /// Worker threads; JOD_THREADS takes precedence. Defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate datasets from a config file or a named preset.
    Simulate {
        /// TOML or JSON config.
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Overrides the config's outdir.
        #[arg(long)]
        outdir: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// List the presets and exit.
        #[arg(long)]
        list_presets: bool,
    },
    /// Run the ordering sampler on a manifest or a list of CSV files.
    Fit {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "fit")]
        out: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        c0: Option<f64>,
        /// Maximum in-degree; defaults to p.
        #[arg(long)]
        d: Option<usize>,
        /// Iterations per chain; defaults to 20 p^2.
        #[arg(long)]
        iters: Option<usize>,
        /// Defaults to half the iterations.
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// r2r, adj or rts.
        #[arg(long)]
        neighborhood: Option<Neighborhood>,
        #[arg(long, default_value_t = 1)]
        thin: usize,
        /// Without --iters, scale the default budget to the cost of r2r moves.
        #[arg(long)]
        match_r2r_budget: bool,
        /// Recompute every MAP graph on each proposal instead of only the
        /// affected nodes.
        #[arg(long)]
        full_recompute: bool,
    },
    /// Posterior summaries and convergence diagnostics of a fit directory.
    Diagnose {
        run: PathBuf,
        /// Adjacency CSVs of the true graphs, one per dataset.
        #[arg(long, num_args = 1..)]
        truth: Vec<PathBuf>,
        /// Reference ordering, 1-based and comma separated.
        #[arg(long)]
        sigma_star: Option<Ordering>,
        /// Per-edge Gelman-Rubin across chains.
        #[arg(long)]
        gr: bool,
        #[arg(long, default_value_t = 0.5)]
        cutoff: f64,
        /// Defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive population-level check of a small graph collection.
    Oracle {
        /// JSON {p, graphs: [{edges, weights?, noise?}], sigma_star?}.
        collection: PathBuf,
        #[arg(long)]
        sigma_star: Option<Ordering>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Iterations for adj or rts chains matching an r2r budget.
    Budget {
        #[arg(long)]
        p: usize,
        /// The r2r budget; defaults to 20 p^2.
        #[arg(long)]
        iters: Option<usize>,
    },
}

fn threads(flag: Option<usize>) -> CliResult<Option<usize>> {
    match std::env::var("JOD_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| {
                CliError::invalid(format!("JOD_THREADS must be a positive integer, got {v:?}"))
            }),
        Err(_) => match flag {
            Some(0) => Err(CliError::invalid("--threads must be positive")),
            other => Ok(other),
        },
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("serializable")
    );
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = threads(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::invalid(format!("cannot size the thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate {
            config,
            preset,
            outdir,
            seed,
            list_presets,
        } => {
            if list_presets {
                for name in config::preset_names() {
                    println!("{name}");
                }
                return Ok(());
            }
            let mut cfg = match (config, preset) {
                (Some(path), None) => config::load_config(&path)?,
                (None, Some(name)) => config::preset(&name)?,
                _ => return Err(CliError::invalid("give a config file or --preset")),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = simulate::resolve_outdir(outdir, &cfg);
            let manifest = simulate::run(&cfg, &dir)?;
            println!("{}", dir.join("manifest.json").display());
            log::info!("{} datasets on {} nodes", manifest.k, manifest.p);
        }
        Command::Fit {
            inputs,
            out,
            alpha,
            gamma,
            kappa,
            c0,
            d,
            iters,
            burn_in,
            chains,
            seed,
            neighborhood,
            thin,
            match_r2r_budget,
            full_recompute,
        } => {
            let args = fit::FitArgs {
                inputs,
                out,
                alpha,
                gamma,
                kappa,
                c0,
                d,
                iters,
                burn_in,
                chains,
                seed,
                neighborhood,
                thin,
                match_r2r_budget,
                eval: if full_recompute {
                    EvalMode::Full
                } else {
                    EvalMode::Incremental
                },
            };
            let record = fit::run(&args)?;
            for c in &record.chains {
                println!(
                    "chain {}: acceptance {:.3}, final log posterior {:.4}, final ordering {}",
                    c.chain, c.acceptance_rate, c.final_log_post, c.final_ordering
                );
            }
        }
        Command::Diagnose {
            run,
            truth,
            sigma_star,
            gr,
            cutoff,
            out,
        } => {
            let summary = diagnose::run(&diagnose::DiagnoseArgs {
                run,
                truth,
                sigma_star,
                gr,
                cutoff,
                out,
            })?;
            print_json(&summary);
        }
        Command::Oracle {
            collection,
            sigma_star,
            seed,
        } => print_json(&oracle::run(&collection, sigma_star, seed)?),
        Command::Budget { p, iters } => {
            if p < 2 {
                return Err(CliError::invalid("p must be at least 2"));
            }
            let t = iters.unwrap_or_else(|| ChainConfig::default_iterations(p));
            println!("{}", adj_equivalent_iterations(t, p));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
