//! FedE-SVD exchange and the SVD+ final-epoch reparameterization.
//!
//! An entity's *update* is its embedding minus its value at the start of
//! the round. Updates travel as truncated SVD factors of their row-major
//! `m×n` reshape and are added back onto the receiver's round-start value.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::svd::{orthogonality_regularizer_grad, svd_compress, svd_restore, thin_svd, SvdConfig};
use crate::error::{ensure, Result};
use crate::kg::{ClientShard, FederationSpec};
use crate::kge::{
    adam_step_except, adam_update_row, sample_batch, self_adversarial_loss_into, AdamConfig, AdamState,
    EmbeddingTable, Gradients, Hyperparams, Sample,
};
use crate::matrix::Matrix;

fn reshape_rows(entity_width: usize, cols: usize) -> Result<usize> {
    ensure!(
        cols >= 1 && entity_width % cols == 0,
        InvalidArgument,
        "entity width {entity_width} is not divisible by {cols} columns"
    );
    Ok(entity_width / cols)
}

fn update_of(table: &EmbeddingTable, start: &Matrix, local: usize) -> Vec<f64> {
    table.entities.row(local).iter().zip(start.row(local)).map(|(e, s)| e - s).collect()
}

/// Compressed exchange of shared-entity updates. Clients send rank-`r`
/// factors, the server restores and averages them over owners, compresses
/// the mean again and every owner adds its restoration to its round-start
/// value. Returns `(up, down)` parameter counts per client.
pub fn fede_svd_round(
    tables: &mut [EmbeddingTable],
    round_start: &[Matrix],
    spec: &FederationSpec,
    cfg: &SvdConfig,
) -> Result<Vec<(u64, u64)>> {
    ensure!(tables.len() == spec.clients.len() && round_start.len() == tables.len(), Shape, "one table and start matrix per client");
    let width = tables.first().map_or(0, EmbeddingTable::entity_width);
    let m = reshape_rows(width, cfg.cols)?;
    let per_entity = super::svd_params(m, cfg.cols, cfg.rank) as u64;

    let mut received: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for (shard, (table, start)) in spec.clients.iter().zip(tables.iter().zip(round_start)) {
        for (i, &local) in table.shared.iter().enumerate() {
            let factors = svd_compress(&update_of(table, start, local), m, cfg.cols, cfg.rank)?;
            let restored = svd_restore(&factors, m, cfg.cols)?;
            let entry = received.entry(shard.shared_global(i)).or_insert_with(|| (vec![0.0; width], 0));
            for (a, r) in entry.0.iter_mut().zip(restored) {
                *a += r;
            }
            entry.1 += 1;
        }
    }
    let mut broadcast: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (global, (sum, count)) in received {
        let mean: Vec<f64> = sum.into_iter().map(|v| v / count as f64).collect();
        let factors = svd_compress(&mean, m, cfg.cols, cfg.rank)?;
        broadcast.insert(global, svd_restore(&factors, m, cfg.cols)?);
    }

    let mut counts = Vec::with_capacity(tables.len());
    for (shard, (table, start)) in spec.clients.iter().zip(tables.iter_mut().zip(round_start)) {
        for i in 0..table.num_shared() {
            let local = table.shared[i];
            let delta = &broadcast[&shard.shared_global(i)];
            for ((e, s), d) in table.entities.row_mut(local).iter_mut().zip(start.row(local)).zip(delta) {
                *e = s + d;
            }
        }
        let n = table.num_shared() as u64;
        counts.push((n * per_entity, n * per_entity));
    }
    Ok(counts)
}

/// Full-rank factors `U (m×n)`, `s (n)`, `V (n×n)` of one entity update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateFactors {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl UpdateFactors {
    fn from_update(update: &[f64], m: usize, n: usize) -> Result<Self> {
        let f = thin_svd(&Matrix::from_vec(m, n, update.to_vec())?)?;
        Ok(Self { u: f.u, s: f.s, v: f.v })
    }

    fn update(&self) -> Vec<f64> {
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for k in 0..n {
                let us = self.u[(i, k)] * self.s[k];
                for j in 0..n {
                    out[i * n + j] += us * self.v[(j, k)];
                }
            }
        }
        out
    }

    fn param_len(&self) -> usize {
        self.u.as_slice().len() + self.s.len() + self.v.as_slice().len()
    }

    fn params_mut(&mut self) -> [&mut [f64]; 3] {
        [self.u.as_mut_slice(), &mut self.s, self.v.as_mut_slice()]
    }
}

fn touched_entities(samples: &[Sample]) -> Vec<usize> {
    let mut out: Vec<usize> = samples
        .iter()
        .flat_map(|s| [s.positive.head, s.positive.tail].into_iter().chain(s.negatives.iter().copied()))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// KGE loss plus the orthogonality penalty of every reparameterized entity
/// the batch touches. `factors` is keyed by local entity id.
pub fn svdplus_objective(
    table: &EmbeddingTable,
    samples: &[Sample],
    hp: &Hyperparams,
    factors: &BTreeMap<usize, UpdateFactors>,
    alpha: f64,
) -> Result<f64> {
    let mut grads = Gradients::for_table(table);
    let mut value = self_adversarial_loss_into(table, samples, hp, &mut grads)?;
    for e in touched_entities(samples) {
        if let Some(f) = factors.get(&e) {
            value += super::orthogonality_regularizer(&f.u, &f.v, alpha);
        }
    }
    Ok(value)
}

/// The last local epoch of an SVD+ round: each shared entity's update since
/// `round_start` is reparameterized as `U·diag(s)·Vᵀ` and `(U, s, V)` are
/// trained against the KGE loss plus the orthogonality penalty. Exclusive
/// entities and relations train as usual.
pub fn svdplus_final_epoch(
    shard: &ClientShard,
    table: &mut EmbeddingTable,
    adam: &mut AdamState,
    round_start: &Matrix,
    hp: &Hyperparams,
    cfg: &SvdConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    ensure!(!shard.train.is_empty(), InvalidArgument, "client {} has no training triples", shard.client_id);
    let n = cfg.cols;
    let m = reshape_rows(table.entity_width(), n)?;
    ensure!(m >= n, InvalidArgument, "SVD+ needs at least as many rows ({m}) as columns ({n})");

    let mut frozen = vec![false; table.entities.rows()];
    let mut factors: BTreeMap<usize, UpdateFactors> = BTreeMap::new();
    for &local in &table.shared {
        frozen[local] = true;
        factors.insert(local, UpdateFactors::from_update(&update_of(table, round_start, local), m, n)?);
    }
    let param_len = factors.values().next().map_or(0, UpdateFactors::param_len);
    let mut moments: BTreeMap<usize, (Vec<f64>, Vec<f64>)> =
        factors.keys().map(|&e| (e, (vec![0.0; param_len], vec![0.0; param_len]))).collect();

    let cfg_adam = AdamConfig::with_lr(hp.learning_rate);
    let mut order = shard.train.clone();
    order.shuffle(rng);
    let mut grads = Gradients::for_table(table);
    let mut total = 0.0;
    let mut step = 0u64;
    let mut batches = 0;
    for chunk in order.chunks(hp.batch_size) {
        let samples = sample_batch(chunk, shard.num_entities(), hp.negatives, rng);
        let mut loss = self_adversarial_loss_into(table, &samples, hp, &mut grads)?;
        step += 1;
        for e in touched_entities(&samples) {
            let Some(f) = factors.get_mut(&e) else { continue };
            let g = Matrix::from_vec(m, n, grads.entities.row(e).to_vec())?;
            let (reg, reg_u, reg_v) = orthogonality_regularizer_grad(&f.u, &f.v, cfg.alpha)?;
            loss += reg;

            let gv = g.matmul(&f.v)?;
            let gtu = g.transpose().matmul(&f.u)?;
            let mut d_u = Matrix::zeros(m, n);
            let mut d_v = Matrix::zeros(n, n);
            let mut d_s = vec![0.0; n];
            for k in 0..n {
                for i in 0..m {
                    d_u[(i, k)] = gv[(i, k)] * f.s[k] + reg_u[(i, k)];
                    d_s[k] += f.u[(i, k)] * gv[(i, k)];
                }
                for j in 0..n {
                    d_v[(j, k)] = gtu[(j, k)] * f.s[k] + reg_v[(j, k)];
                }
            }
            let grad: Vec<f64> = d_u.as_slice().iter().chain(&d_s).chain(d_v.as_slice()).copied().collect();
            let (mom1, mom2) = moments.get_mut(&e).expect("moments per factor");
            let mut params: Vec<f64> = f.params_mut().iter().flat_map(|p| p.iter().copied()).collect();
            adam_update_row(&mut params, &grad, mom1, mom2, step, &cfg_adam);
            let mut offset = 0;
            for part in f.params_mut() {
                let len = part.len();
                part.copy_from_slice(&params[offset..offset + len]);
                offset += len;
            }
            let update = f.update();
            for ((dst, s), u) in table.entities.row_mut(e).iter_mut().zip(round_start.row(e)).zip(update) {
                *dst = s + u;
            }
        }
        adam_step_except(table, &grads, adam, &cfg_adam, &frozen)?;
        total += loss;
        batches += 1;
    }
    Ok(total / batches as f64)
}
