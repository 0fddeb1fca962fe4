use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use feds::baselines::fedepl_dimension;
use feds::harness::{compare_runs, run_experiment, write_run_dir, ExperimentConfig, Federation, RunRecord};
use feds::kg::synthetic::SyntheticKg;
use feds::kg::{write_federation, write_triples};
use feds::ledger::theoretical_ratio;

#[derive(Parser)]
#[command(name = "feds", version, about = "Federated KGE simulator with entity-wise Top-K sparsification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a TSV of triples into a relation-partitioned federation directory.
    Partition {
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        clients: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory; defaults to `runs/<strategy>-seed<seed>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a run against a baseline run (directories or summary.json files).
    Compare {
        run: PathBuf,
        baseline: PathBuf,
        /// Also write the comparison as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Expected per-cycle traffic ratio of sparsified vs full exchange.
    Ratio { p: f64, s: usize, dim: usize },
    /// Embedding dimension with the same per-cycle traffic as sparsified exchange.
    FedeplDim { p: f64, s: usize, dim: usize },
    /// Write a synthetic clustered knowledge graph as TSV.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1500)]
        entities: usize,
        #[arg(long, default_value_t = 30)]
        relations: usize,
        #[arg(long, default_value_t = 8000)]
        triples: usize,
        #[arg(long, default_value_t = 12)]
        clusters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Partition { input, clients, seed, out } => {
            let federation = Federation::open(&input, clients, seed)?;
            write_federation(&out, &federation.store, &federation.spec)?;
            for shard in &federation.spec.clients {
                println!(
                    "client {}: {} entities ({} shared), {}/{}/{} train/valid/test",
                    shard.client_id,
                    shard.num_entities(),
                    shard.num_shared(),
                    shard.train.len(),
                    shard.valid.len(),
                    shard.test.len()
                );
            }
            println!("fingerprint {}", federation.fingerprint);
        }
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let out = out.unwrap_or_else(|| PathBuf::from(format!("runs/{}-seed{}", cfg.strategy, cfg.seed)));
            let output = run_experiment(&cfg)?;
            let summary = write_run_dir(&out, &output)?;
            println!(
                "{} seed {}: MRR@CG {:.4} Hits@10@CG {:.4} R@CG {} params up {} down {}",
                summary.strategy,
                summary.seed,
                summary.mrr_cg,
                summary.hits10_cg,
                summary.r_cg,
                summary.total_params_up,
                summary.total_params_down
            );
            println!("artifacts in {}", out.display());
        }
        Command::Compare { run, baseline, json } => {
            let comparison = compare_runs(&RunRecord::load(&run)?, &RunRecord::load(&baseline)?)?;
            print!("{}", comparison.render());
            if let Some(path) = json {
                std::fs::write(&path, comparison.to_json()?).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Ratio { p, s, dim } => {
            anyhow::ensure!(p > 0.0 && p <= 1.0 && s >= 1 && dim >= 1, "need 0 < p <= 1, s >= 1, dim >= 1");
            println!("{:.4}", theoretical_ratio(p, s, dim));
        }
        Command::FedeplDim { p, s, dim } => println!("{}", fedepl_dimension(p, s, dim)?),
        Command::Generate { out, entities, relations, triples, clusters, seed } => {
            let store = SyntheticKg { entities, relations, triples, clusters, seed, ..SyntheticKg::default() }.generate()?;
            write_triples(&out, &store)?;
            println!("{} triples, {} entities, {} relations", store.triples.len(), store.entities.len(), store.relations.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
