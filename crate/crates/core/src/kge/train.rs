use rand::seq::SliceRandom;
use rand::Rng;

use super::{adam_step, sample_batch, self_adversarial_loss_into, AdamConfig, AdamState, EmbeddingTable, Gradients, Hyperparams};
use crate::error::{ensure, Result};
use crate::kg::ClientShard;

/// One shuffled pass over `shard.train`. Returns the mean batch loss.
pub fn train_epoch(
    shard: &ClientShard,
    table: &mut EmbeddingTable,
    adam: &mut AdamState,
    hp: &Hyperparams,
    rng: &mut impl Rng,
) -> Result<f64> {
    ensure!(!shard.train.is_empty(), InvalidArgument, "client {} has no training triples", shard.client_id);
    let cfg = AdamConfig::with_lr(hp.learning_rate);
    let mut order = shard.train.clone();
    order.shuffle(rng);
    let mut grads = Gradients::for_table(table);
    let mut total = 0.0;
    let mut batches = 0;
    for chunk in order.chunks(hp.batch_size) {
        let samples = sample_batch(chunk, shard.num_entities(), hp.negatives, rng);
        total += self_adversarial_loss_into(table, &samples, hp, &mut grads)?;
        adam_step(table, &grads, adam, &cfg)?;
        batches += 1;
    }
    Ok(total / batches as f64)
}

/// `hp.local_epochs` passes of [`train_epoch`]. Returns the last epoch's
/// mean loss, or `None` when no epoch ran.
pub fn local_train(
    shard: &ClientShard,
    table: &mut EmbeddingTable,
    adam: &mut AdamState,
    hp: &Hyperparams,
    rng: &mut impl Rng,
) -> Result<Option<f64>> {
    ensure!(!shard.train.is_empty(), InvalidArgument, "client {} has no training triples", shard.client_id);
    let mut last = None;
    for _ in 0..hp.local_epochs {
        last = Some(train_epoch(shard, table, adam, hp, rng)?);
    }
    Ok(last)
}
