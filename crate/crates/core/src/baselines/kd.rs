//! FedE-KD: each client co-trains a low- and a high-dimensional table that
//! distill into each other; only the low table is exchanged.

use rand::seq::SliceRandom;
use rand::Rng;

use super::fede_round;
use crate::error::{ensure, Error, Result};
use crate::kg::{ClientShard, FederationSpec};
use crate::kge::{adam_step, relation_repr, sample_batch, AdamConfig, AdamState, EmbeddingTable, Gradients, Hyperparams, Sample};
use crate::kge::{backward_scores, forward_scores, sample_loss_terms, check_sample_bounds};
use crate::protocol::{DownloadMessage, UploadMessage};

#[derive(Debug, Clone, PartialEq)]
pub struct DualEmbeddingTable {
    pub low: EmbeddingTable,
    pub high: EmbeddingTable,
}

impl DualEmbeddingTable {
    pub fn new(low: EmbeddingTable, high: EmbeddingTable) -> Result<Self> {
        ensure!(low.dim < high.dim, InvalidArgument, "low dimension {} must be below high {}", low.dim, high.dim);
        ensure!(
            low.entities.rows() == high.entities.rows() && low.relations.rows() == high.relations.rows(),
            Shape,
            "low and high tables cover different vocabularies"
        );
        Ok(Self { low, high })
    }
}

/// Softmax-normalized `[positive, negatives…]` scores of one sample under
/// each table.
#[derive(Debug, Clone, PartialEq)]
pub struct KdScores {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

/// `KL(p ‖ q) = Σ p_i ln(p_i / q_i)`, with `0 · ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, q)| p * (p.ln() - q.ln()))
        .sum()
}

fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    xs.iter().map(|x| x - lse).collect()
}

/// Mean over `samples` of `L_L + L_H + w · [KL(S_L‖S_H) + KL(S_H‖S_L)] / (L_L + L_H)`,
/// the divisor held constant. With `kd_weight == 0` the low-table gradients
/// are exactly those of plain training.
pub fn kd_local_loss(
    dual: &DualEmbeddingTable,
    samples: &[Sample],
    hp: &Hyperparams,
    kd_weight: f64,
    grads_low: &mut Gradients,
    grads_high: &mut Gradients,
) -> Result<(f64, Vec<KdScores>)> {
    ensure!(!samples.is_empty(), InvalidArgument, "empty batch");
    grads_low.clear();
    grads_high.clear();
    let inv = 1.0 / samples.len() as f64;
    let mut total = 0.0;
    let mut normalized = Vec::with_capacity(samples.len());
    for sample in samples {
        check_sample_bounds(&dual.low, sample)?;
        check_sample_bounds(&dual.high, sample)?;
        let rel_low = relation_repr(dual.low.method, dual.low.relations.row(sample.positive.relation));
        let rel_high = relation_repr(dual.high.method, dual.high.relations.row(sample.positive.relation));
        let scores_low = forward_scores(&dual.low, sample, &rel_low);
        let scores_high = forward_scores(&dual.high, sample, &rel_high);
        let (loss_low, mut dpos_low, mut dneg_low) = sample_loss_terms(&scores_low, hp);
        let (loss_high, mut dpos_high, mut dneg_high) = sample_loss_terms(&scores_high, hp);
        let supervised = loss_low + loss_high;
        total += supervised;

        let a = scores_low.concat();
        let b = scores_high.concat();
        let (lp, lq) = (log_softmax(&a), log_softmax(&b));
        let p: Vec<f64> = lp.iter().map(|x| x.exp()).collect();
        let q: Vec<f64> = lq.iter().map(|x| x.exp()).collect();

        if kd_weight != 0.0 {
            if supervised == 0.0 || !supervised.is_finite() {
                return Err(Error::NonFinite(format!("co-distillation divisor {supervised}")));
            }
            let kl_pq = kl_divergence(&p, &q);
            let kl_qp = kl_divergence(&q, &p);
            let coeff = kd_weight / supervised;
            total += coeff * (kl_pq + kl_qp);
            // ∂/∂a and ∂/∂b of KL(p‖q) + KL(q‖p), p = softmax(a), q = softmax(b)
            for i in 0..a.len() {
                let ratio = lp[i] - lq[i];
                let da = p[i] * (ratio - kl_pq) + (p[i] - q[i]);
                let db = (q[i] - p[i]) + q[i] * (-ratio - kl_qp);
                if i == 0 {
                    dpos_low += coeff * da;
                    dpos_high += coeff * db;
                } else {
                    dneg_low[i - 1] += coeff * da;
                    dneg_high[i - 1] += coeff * db;
                }
            }
        }

        dneg_low.iter_mut().for_each(|d| *d *= inv);
        dneg_high.iter_mut().for_each(|d| *d *= inv);
        backward_scores(&dual.low, sample, &rel_low, dpos_low * inv, &dneg_low, grads_low);
        backward_scores(&dual.high, sample, &rel_high, dpos_high * inv, &dneg_high, grads_high);
        normalized.push(KdScores { low: p, high: q });
    }
    grads_low.finalize(&dual.low);
    grads_high.finalize(&dual.high);
    let loss = total * inv;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("kd loss {loss}")));
    }
    Ok((loss, normalized))
}

/// One shuffled pass over the shard. Batches and negatives are drawn
/// exactly as in plain local training and shared by both tables.
pub fn kd_train_epoch(
    shard: &ClientShard,
    dual: &mut DualEmbeddingTable,
    adam_low: &mut AdamState,
    adam_high: &mut AdamState,
    hp: &Hyperparams,
    kd_weight: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    ensure!(!shard.train.is_empty(), InvalidArgument, "client {} has no training triples", shard.client_id);
    let cfg = AdamConfig::with_lr(hp.learning_rate);
    let mut order = shard.train.clone();
    order.shuffle(rng);
    let mut g_low = Gradients::for_table(&dual.low);
    let mut g_high = Gradients::for_table(&dual.high);
    let mut total = 0.0;
    let mut batches = 0;
    for chunk in order.chunks(hp.batch_size) {
        let samples = sample_batch(chunk, shard.num_entities(), hp.negatives, rng);
        total += kd_local_loss(dual, &samples, hp, kd_weight, &mut g_low, &mut g_high)?.0;
        adam_step(&mut dual.low, &g_low, adam_low, &cfg)?;
        adam_step(&mut dual.high, &g_high, adam_high, &cfg)?;
        batches += 1;
    }
    Ok(total / batches as f64)
}

/// FedE exchange over the low tables only.
pub fn kd_round(
    duals: &mut [DualEmbeddingTable],
    spec: &FederationSpec,
    round: usize,
) -> Result<(Vec<UploadMessage>, Vec<DownloadMessage>)> {
    let mut lows: Vec<EmbeddingTable> = duals.iter().map(|d| d.low.clone()).collect();
    let messages = fede_round(&mut lows, spec, round)?;
    for (dual, low) in duals.iter_mut().zip(lows) {
        dual.low = low;
    }
    Ok(messages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kge::softmax;

    #[test]
    fn kl_cases() {
        assert!((kl_divergence(&[1.0, 0.0], &[0.5, 0.5]) - std::f64::consts::LN_2).abs() < 1e-15);
        let p = softmax(&[0.3, -1.0, 2.0]);
        assert!(kl_divergence(&p, &p).abs() <= 1e-12);
        assert!(kl_divergence(&p, &softmax(&[0.0, 0.0, 0.0])) > 0.0);
    }

    #[test]
    fn distillation_weight_grows_as_loss_falls() {
        let weights: Vec<f64> = [4.0, 2.0, 1.0, 0.5].iter().map(|l| 1.0 / l).collect();
        assert!(weights.windows(2).all(|w| w[1] > w[0]));
    }
}
