use std::collections::HashSet;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ExperimentConfig, Federation, Strategy};
use crate::baselines::{
    fede_round, fede_svd_round, fedepl_dimension, kd_round, kd_train_epoch, svdplus_final_epoch, DualEmbeddingTable,
};
use crate::error::{Error, Result};
use crate::kg::{ClientShard, FederationSpec, Triple};
use crate::kge::{
    evaluate_ranking, init_embeddings, local_train, train_epoch, weighted_metrics, AdamState, EmbeddingTable,
};
use crate::ledger::{CommLedger, Direction, RunLog, RunLogRow};
use crate::matrix::Matrix;
use crate::protocol::{
    apply_sync, build_upload, client_merge, full_sync_exchange, server_aggregate_personalized,
    server_select_topk_download, DownloadMessage, UploadMessage,
};
use crate::seed::{self, tags};

/// Per-client models. FedE-KD clients carry a low/high pair; everything else
/// a single table.
#[derive(Debug, Clone)]
pub enum Models {
    Plain(Vec<EmbeddingTable>),
    Dual(Vec<DualEmbeddingTable>),
}

impl Models {
    /// The tables that are exchanged and evaluated.
    pub fn tables(&self) -> Vec<&EmbeddingTable> {
        match self {
            Models::Plain(t) => t.iter().collect(),
            Models::Dual(d) => d.iter().map(|d| &d.low).collect(),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Models::Plain(t) => t.iter().all(EmbeddingTable::is_finite),
            Models::Dual(d) => d.iter().all(|d| d.low.is_finite() && d.high.is_finite()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RoundState {
    /// Rounds completed so far.
    pub round: usize,
    pub models: Models,
    pub adam: Vec<AdamState>,
    /// Optimizer state of FedE-KD high tables; empty otherwise.
    pub adam_high: Vec<AdamState>,
    rngs: Vec<ChaCha8Rng>,
    server_rng: ChaCha8Rng,
    pub best_mrr: Option<f64>,
    pub declines: usize,
}

/// What an observer sees after each round's exchange.
pub struct RoundEvent<'a> {
    pub round: usize,
    /// True when every shared entity was overwritten with its owner mean.
    pub synchronized: bool,
    pub state: &'a RoundState,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub fingerprint: String,
    /// Embedding dimension actually trained (differs from `config.dim` for
    /// FedEPL and the FedE-KD low table).
    pub trained_dim: usize,
    pub runlog: RunLog,
    pub ledger: CommLedger,
    /// Tables at the best-validation evaluation.
    pub best_tables: Vec<EmbeddingTable>,
    pub final_state: RoundState,
    pub rounds_run: usize,
}

fn trained_dim(config: &ExperimentConfig) -> Result<usize> {
    Ok(match config.strategy {
        Strategy::Fedepl => fedepl_dimension(config.p, config.s, config.dim)?,
        Strategy::FedeKd => config.low_dim(),
        _ => config.dim,
    })
}

fn init_state(config: &ExperimentConfig, spec: &FederationSpec) -> Result<RoundState> {
    let hp = config.hyperparams();
    let dim = trained_dim(config)?;
    let method = config.kge_method;
    let mut adam = Vec::new();
    let mut adam_high = Vec::new();
    let models = if config.strategy == Strategy::FedeKd {
        let high_seed = seed::derive(config.seed, tags::HIGH_TABLE, 0);
        let mut duals = Vec::new();
        for shard in &spec.clients {
            let low = init_embeddings(shard, &hp, method, dim, config.seed)?;
            let high = init_embeddings(shard, &hp, method, config.dim, high_seed)?;
            adam.push(AdamState::for_table(&low));
            adam_high.push(AdamState::for_table(&high));
            duals.push(DualEmbeddingTable::new(low, high)?);
        }
        Models::Dual(duals)
    } else {
        let mut tables = Vec::new();
        for shard in &spec.clients {
            let table = init_embeddings(shard, &hp, method, dim, config.seed)?;
            adam.push(AdamState::for_table(&table));
            tables.push(table);
        }
        Models::Plain(tables)
    };
    Ok(RoundState {
        round: 0,
        models,
        adam,
        adam_high,
        rngs: (0..spec.clients.len())
            .map(|c| seed::rng(config.seed, tags::CLIENT_TRAIN, c as u64))
            .collect(),
        server_rng: seed::rng(config.seed, tags::SERVER, 0),
        best_mrr: None,
        declines: 0,
    })
}

fn train_clients(config: &ExperimentConfig, spec: &FederationSpec, state: &mut RoundState, round_start: &[Matrix]) -> Result<()> {
    let hp = config.hyperparams();
    let svd = config.svd();
    let strategy = config.strategy;
    let losses: Vec<Result<Option<f64>>> = match &mut state.models {
        Models::Plain(tables) => tables
            .par_iter_mut()
            .zip(state.adam.par_iter_mut())
            .zip(state.rngs.par_iter_mut())
            .zip(spec.clients.par_iter())
            .enumerate()
            .map(|(c, (((table, adam), rng), shard))| {
                if strategy == Strategy::FedeSvdplus {
                    for _ in 1..hp.local_epochs {
                        train_epoch(shard, table, adam, &hp, rng)?;
                    }
                    svdplus_final_epoch(shard, table, adam, &round_start[c], &hp, &svd, rng).map(Some)
                } else {
                    local_train(shard, table, adam, &hp, rng)
                }
            })
            .collect(),
        Models::Dual(duals) => duals
            .par_iter_mut()
            .zip(state.adam.par_iter_mut().zip(state.adam_high.par_iter_mut()))
            .zip(state.rngs.par_iter_mut())
            .zip(spec.clients.par_iter())
            .map(|(((dual, (adam_low, adam_high)), rng), shard)| {
                let mut last = None;
                for _ in 0..hp.local_epochs {
                    last = Some(kd_train_epoch(shard, dual, adam_low, adam_high, &hp, config.kd_weight, rng)?);
                }
                Ok(last)
            })
            .collect(),
    };
    for (c, loss) in losses.into_iter().enumerate() {
        if let Some(l) = loss? {
            if !l.is_finite() {
                return Err(Error::NonFinite(format!("client {c} local loss {l} at round {}", state.round)));
            }
        }
    }
    Ok(())
}

fn record(ledger: &mut CommLedger, uploads: &[UploadMessage], downloads: &[DownloadMessage]) {
    uploads.iter().for_each(|u| ledger.record_upload(u));
    downloads.iter().for_each(|d| ledger.record_download(d));
}

/// Runs the exchange step of `round`. Returns whether it synchronized.
fn exchange(
    config: &ExperimentConfig,
    spec: &FederationSpec,
    state: &mut RoundState,
    round: usize,
    round_start: &[Matrix],
    ledger: &mut CommLedger,
) -> Result<bool> {
    let schedule = config.schedule();
    match (config.strategy, &mut state.models) {
        (Strategy::Feds, Models::Plain(tables)) => {
            let uploads: Vec<UploadMessage> = tables
                .iter_mut()
                .enumerate()
                .map(|(c, t)| build_upload(c, t, round, schedule, config.p))
                .collect::<Result<_>>()?;
            if schedule.is_sync_round(round) {
                let downloads = full_sync_exchange(&uploads, spec)?;
                for (table, message) in tables.iter_mut().zip(&downloads) {
                    apply_sync(table, message)?;
                }
                record(ledger, &uploads, &downloads);
                return Ok(true);
            }
            let mut downloads = Vec::with_capacity(tables.len());
            for shard in &spec.clients {
                let aggregates = server_aggregate_personalized(&uploads, shard.client_id, spec)?;
                downloads.push(server_select_topk_download(&aggregates, shard, config.p, round, &mut state.server_rng)?);
            }
            for (table, message) in tables.iter_mut().zip(&downloads) {
                client_merge(table, message, round)?;
            }
            record(ledger, &uploads, &downloads);
            Ok(false)
        }
        (Strategy::Fedep | Strategy::Fedepl, Models::Plain(tables)) => {
            let (uploads, downloads) = fede_round(tables, spec, round)?;
            record(ledger, &uploads, &downloads);
            Ok(true)
        }
        (Strategy::FedeKd, Models::Dual(duals)) => {
            let (uploads, downloads) = kd_round(duals, spec, round)?;
            record(ledger, &uploads, &downloads);
            Ok(true)
        }
        (Strategy::FedeSvd | Strategy::FedeSvdplus, Models::Plain(tables)) => {
            let counts = fede_svd_round(tables, round_start, spec, &config.svd())?;
            for (c, (up, down)) in counts.into_iter().enumerate() {
                ledger.record_dense(round, c, Direction::Up, up);
                ledger.record_dense(round, c, Direction::Down, down);
            }
            Ok(false)
        }
        (Strategy::Single, _) => Ok(false),
        (strategy, _) => Err(Error::Config(format!("strategy {strategy} has no matching client models"))),
    }
}

fn evaluate(tables: &[&EmbeddingTable], spec: &FederationSpec, filters: &[HashSet<Triple>]) -> Result<[f64; 4]> {
    let mut valid = Vec::with_capacity(tables.len());
    let mut test = Vec::with_capacity(tables.len());
    for ((table, shard), filter) in tables.iter().zip(&spec.clients).zip(filters) {
        valid.push(evaluate_ranking(table, &shard.valid, filter)?);
        test.push(evaluate_ranking(table, &shard.test, filter)?);
    }
    let weights = |f: fn(&ClientShard) -> usize| spec.clients.iter().map(f).collect::<Vec<_>>();
    let (v_mrr, v_hits) = weighted_metrics(&valid, &weights(|s| s.valid.len()))?;
    let (t_mrr, t_hits) = weighted_metrics(&test, &weights(|s| s.test.len()))?;
    Ok([v_mrr, v_hits, t_mrr, t_hits])
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    let federation = Federation::load(config)?;
    run_on(config, &federation)
}

pub fn run_on(config: &ExperimentConfig, federation: &Federation) -> Result<RunOutput> {
    run_observed(config, federation, |_| {})
}

/// The round loop. Each round: local training on every client in
/// parallel, the strategy's exchange, then (on evaluation rounds) weighted
/// validation and test metrics over all clients. Stops after `patience`
/// consecutive evaluations without a new best validation MRR, or at
/// `max_rounds`.
pub fn run_observed(
    config: &ExperimentConfig,
    federation: &Federation,
    mut observer: impl FnMut(&RoundEvent),
) -> Result<RunOutput> {
    config.validate()?;
    let spec = &federation.spec;
    let mut state = init_state(config, spec)?;
    let mut ledger = CommLedger::new(config.counting_mode);
    let mut runlog = RunLog::default();
    let filters: Vec<HashSet<Triple>> = spec.clients.iter().map(ClientShard::known_triples).collect();
    let cadence = if config.strategy == Strategy::Single {
        config.single_eval_every
    } else {
        config.eval_every
    };
    let keeps_start = matches!(config.strategy, Strategy::FedeSvd | Strategy::FedeSvdplus);
    let mut best_tables: Vec<EmbeddingTable> = state.models.tables().into_iter().cloned().collect();

    for round in 0..config.max_rounds {
        let round_start: Vec<Matrix> = if keeps_start {
            state.models.tables().iter().map(|t| t.entities.clone()).collect()
        } else {
            Vec::new()
        };
        train_clients(config, spec, &mut state, &round_start)?;
        let synchronized = exchange(config, spec, &mut state, round, &round_start, &mut ledger)?;
        if !state.models.is_finite() {
            return Err(Error::NonFinite(format!("embeddings diverged at round {round}")));
        }
        state.round = round + 1;
        observer(&RoundEvent {
            round,
            synchronized,
            state: &state,
        });

        if state.round % cadence != 0 {
            continue;
        }
        let [mrr, hits10, test_mrr, test_hits10] = evaluate(&state.models.tables(), spec, &filters)?;
        runlog.push(RunLogRow {
            round: state.round,
            mrr,
            hits10,
            test_mrr,
            test_hits10,
            cumulative_params: ledger.total(),
        })?;
        if state.best_mrr.is_none_or(|b| mrr > b) {
            state.best_mrr = Some(mrr);
            state.declines = 0;
            best_tables = state.models.tables().into_iter().cloned().collect();
        } else {
            state.declines += 1;
            if state.declines >= config.patience {
                break;
            }
        }
    }

    Ok(RunOutput {
        config: config.clone(),
        fingerprint: federation.fingerprint.clone(),
        trained_dim: trained_dim(config)?,
        rounds_run: state.round,
        runlog,
        ledger,
        best_tables,
        final_state: state,
    })
}
