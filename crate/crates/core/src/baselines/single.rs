use std::collections::HashSet;

use crate::error::Result;
use crate::kg::{ClientShard, Triple};
use crate::kge::{evaluate_ranking, init_embeddings, local_train, AdamState, Hyperparams, KgeMethod, RankingResult};
use crate::seed::{self, tags};

/// Trains one client on its own triples with no communication, validating
/// every `eval_every` rounds and stopping after `patience` evaluations
/// without improvement. Returns test metrics of the best-validation round.
#[allow(clippy::too_many_arguments)]
pub fn single_baseline(
    shard: &ClientShard,
    hp: &Hyperparams,
    method: KgeMethod,
    dim: usize,
    seed: u64,
    eval_every: usize,
    patience: usize,
    max_rounds: usize,
) -> Result<RankingResult> {
    let mut table = init_embeddings(shard, hp, method, dim, seed)?;
    let mut adam = AdamState::for_table(&table);
    let mut rng = seed::rng(seed, tags::CLIENT_TRAIN, shard.client_id as u64);
    let filter: HashSet<Triple> = shard.known_triples();
    let mut best: Option<(f64, RankingResult)> = None;
    let mut declines = 0;
    for round in 1..=max_rounds {
        local_train(shard, &mut table, &mut adam, hp, &mut rng)?;
        if round % eval_every.max(1) != 0 {
            continue;
        }
        let valid = evaluate_ranking(&table, &shard.valid, &filter)?;
        if best.as_ref().is_none_or(|(b, _)| valid.mrr > *b) {
            best = Some((valid.mrr, evaluate_ranking(&table, &shard.test, &filter)?));
            declines = 0;
        } else {
            declines += 1;
            if declines >= patience {
                break;
            }
        }
    }
    match best {
        Some((_, test)) => Ok(test),
        None => evaluate_ranking(&table, &shard.test, &filter),
    }
}
