#![allow(dead_code)]

use std::path::Path;

use feds::harness::{ExperimentConfig, Federation, Strategy};
use feds::kg::synthetic::SyntheticKg;
use feds::kge::{EmbeddingTable, KgeMethod};
use feds::Matrix;
use rand::Rng;

/// Three clients over a clustered graph of at most 200 entities.
pub fn toy_federation(seed: u64) -> Federation {
    let store = SyntheticKg {
        entities: 180,
        relations: 9,
        triples: 900,
        clusters: 4,
        seed,
        ..SyntheticKg::default()
    }
    .generate()
    .unwrap();
    assert!(store.entities.len() <= 200);
    Federation::from_store(store, 3, seed).unwrap()
}

/// A fast configuration for the toy federation.
pub fn toy_config(strategy: Strategy) -> ExperimentConfig {
    ExperimentConfig {
        dataset: Path::new("toy").to_path_buf(),
        strategy,
        dim: 16,
        lr: 0.01,
        batch_size: 128,
        negatives: 8,
        local_epochs: 1,
        eval_every: 2,
        patience: 2,
        max_rounds: 20,
        ..ExperimentConfig::default()
    }
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// A table with no shared entities and random entries.
pub fn random_table(method: KgeMethod, dim: usize, entities: usize, relations: usize, rng: &mut impl Rng) -> EmbeddingTable {
    let rel_scale = if method == KgeMethod::RotatE { std::f64::consts::PI } else { 1.0 };
    EmbeddingTable {
        method,
        dim,
        entities: random_matrix(entities, method.entity_width(dim), 1.0, rng),
        relations: random_matrix(relations, method.relation_width(dim), rel_scale, rng),
        history: Matrix::zeros(0, method.entity_width(dim)),
        shared: Vec::new(),
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

fn triple_score(table: &EmbeddingTable, t: feds::kg::Triple) -> f64 {
    feds::kge::score(
        table.method,
        table.entities.row(t.head),
        table.relations.row(t.relation),
        table.entities.row(t.tail),
    )
    .unwrap()
}

/// Batch loss recomputed from single-triple scores with the adversarial
/// weights frozen at `weights`.
fn frozen_loss(table: &EmbeddingTable, samples: &[feds::kge::Sample], hp: &feds::kge::Hyperparams, weights: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (sample, w) in samples.iter().zip(weights) {
        total -= log_sigmoid(hp.gamma + triple_score(table, sample.positive));
        for (i, wi) in w.iter().enumerate() {
            total -= wi * log_sigmoid(-triple_score(table, sample.negative_triple(i)) - hp.gamma);
        }
    }
    total / samples.len() as f64
}

fn slot(t: &mut EmbeddingTable, which: usize, k: usize) -> &mut f64 {
    if which == 0 {
        &mut t.entities.as_mut_slice()[k]
    } else {
        &mut t.relations.as_mut_slice()[k]
    }
}

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Worst relative error between the analytic loss gradient and central
/// differences (step 1e-5) over every parameter of a random small table.
pub fn loss_gradient_error(method: KgeMethod, rng: &mut impl Rng) -> f64 {
    use feds::kge::{sample_batch, self_adversarial_loss, Hyperparams};
    let dim = rng.gen_range(2..5);
    let (n_ent, n_rel) = (rng.gen_range(3..7), rng.gen_range(1..3));
    let mut table = random_table(method, dim, n_ent, n_rel, rng);
    let hp = Hyperparams {
        gamma: rng.gen_range(0.5..3.0),
        adv_temperature: rng.gen_range(0.5..2.0),
        negatives: rng.gen_range(1..5),
        ..Hyperparams::default()
    };
    let positives: Vec<feds::kg::Triple> = (0..rng.gen_range(1..4))
        .map(|_| feds::kg::Triple::new(rng.gen_range(0..n_ent), rng.gen_range(0..n_rel), rng.gen_range(0..n_ent)))
        .collect();
    let samples = sample_batch(&positives, n_ent, hp.negatives, rng);
    let weights: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let scaled: Vec<f64> = (0..s.negatives.len())
                .map(|i| hp.adv_temperature * triple_score(&table, s.negative_triple(i)))
                .collect();
            softmax(&scaled)
        })
        .collect();
    let (loss, grads) = self_adversarial_loss(&table, &samples, &hp).unwrap();
    assert!((loss - frozen_loss(&table, &samples, &hp, &weights)).abs() < 1e-12);

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for which in 0..2 {
        let len = if which == 0 { table.entities.as_slice().len() } else { table.relations.as_slice().len() };
        for k in 0..len {
            let original = *slot(&mut table, which, k);
            *slot(&mut table, which, k) = original + h;
            let plus = frozen_loss(&table, &samples, &hp, &weights);
            *slot(&mut table, which, k) = original - h;
            let minus = frozen_loss(&table, &samples, &hp, &weights);
            *slot(&mut table, which, k) = original;
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = if which == 0 { grads.entities.as_slice()[k] } else { grads.relations.as_slice()[k] };
            worst = worst.max(relative_error(analytic, numeric));
        }
    }
    worst
}

/// Worst relative error of the orthogonality regularizer gradient against
/// central differences on random `U (m×n)`, `V (n×n)`.
pub fn regularizer_gradient_error(rng: &mut impl Rng) -> f64 {
    use feds::baselines::{orthogonality_regularizer, orthogonality_regularizer_grad};
    let n = rng.gen_range(1..5);
    let m = rng.gen_range(n..7);
    let alpha = rng.gen_range(0.01..1.0);
    let mut u = random_matrix(m, n, 1.0, rng);
    let mut v = random_matrix(n, n, 1.0, rng);
    let (_, du, dv) = orthogonality_regularizer_grad(&u, &v, alpha).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..m * n {
        let x = u.as_slice()[k];
        u.as_mut_slice()[k] = x + h;
        let plus = orthogonality_regularizer(&u, &v, alpha);
        u.as_mut_slice()[k] = x - h;
        let minus = orthogonality_regularizer(&u, &v, alpha);
        u.as_mut_slice()[k] = x;
        worst = worst.max(relative_error(du.as_slice()[k], (plus - minus) / (2.0 * h)));
    }
    for k in 0..n * n {
        let x = v.as_slice()[k];
        v.as_mut_slice()[k] = x + h;
        let plus = orthogonality_regularizer(&u, &v, alpha);
        v.as_mut_slice()[k] = x - h;
        let minus = orthogonality_regularizer(&u, &v, alpha);
        v.as_mut_slice()[k] = x;
        worst = worst.max(relative_error(dv.as_slice()[k], (plus - minus) / (2.0 * h)));
    }
    worst
}

/// Exhaustive filtered ranking: every candidate scored with the public
/// single-triple scorer, ties resolved to the mean position of the block.
pub fn brute_force_ranks(table: &EmbeddingTable, queries: &[feds::kg::Triple], known: &std::collections::HashSet<feds::kg::Triple>) -> Vec<f64> {
    let n = table.entities.rows();
    let score = |t: feds::kg::Triple| {
        feds::kge::score(table.method, table.entities.row(t.head), table.relations.row(t.relation), table.entities.row(t.tail)).unwrap()
    };
    let rank_of = |truth: feds::kg::Triple, corrupt: &dyn Fn(usize) -> feds::kg::Triple| {
        let target = score(truth);
        let mut block = vec![target];
        let mut better = 0.0;
        for e in 0..n {
            let cand = corrupt(e);
            if cand == truth || known.contains(&cand) {
                continue;
            }
            let s = score(cand);
            if s > target {
                better += 1.0;
            } else if s == target {
                block.push(s);
            }
        }
        // positions better+1 ..= better+len share their mean
        better + (1.0 + block.len() as f64) / 2.0
    };
    let mut ranks = Vec::new();
    for &q in queries {
        ranks.push(rank_of(q, &|e| feds::kg::Triple::new(q.head, q.relation, e)));
        ranks.push(rank_of(q, &|e| feds::kg::Triple::new(e, q.relation, q.tail)));
    }
    ranks
}

/// With p = 1 every sparsified round reproduces the owner mean.
pub fn p1_round_matches_owner_mean(seed: u64) -> f64 {
    use feds::baselines::fede_round;
    use feds::kge::{init_embeddings, Hyperparams};
    use feds::protocol::{build_upload, client_merge, server_aggregate_personalized, server_select_topk_download, SyncSchedule, UploadMessage};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let fed = toy_federation(seed);
    let spec = &fed.spec;
    let hp = Hyperparams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tables: Vec<EmbeddingTable> = spec
        .clients
        .iter()
        .map(|s| {
            let mut t = init_embeddings(s, &hp, KgeMethod::TransE, 8, seed).unwrap();
            let noise = random_matrix(t.entities.rows(), t.entities.cols(), 0.5, &mut rng);
            t.entities.as_mut_slice().iter_mut().zip(noise.as_slice()).for_each(|(e, n)| *e += n);
            t
        })
        .collect();
    let mut reference = tables.clone();
    fede_round(&mut reference, spec, 1).unwrap();

    let schedule = SyncSchedule::new(4).unwrap();
    let uploads: Vec<UploadMessage> = tables
        .iter_mut()
        .enumerate()
        .map(|(c, t)| build_upload(c, t, 1, schedule, 1.0).unwrap())
        .collect();
    let mut server_rng = ChaCha8Rng::seed_from_u64(0);
    for (c, shard) in spec.clients.iter().enumerate() {
        let aggs = server_aggregate_personalized(&uploads, c, spec).unwrap();
        let msg = server_select_topk_download(&aggs, shard, 1.0, 1, &mut server_rng).unwrap();
        client_merge(&mut tables[c], &msg, 1).unwrap();
    }
    tables
        .iter()
        .zip(&reference)
        .map(|(a, b)| max_abs_diff(a.entities.as_slice(), b.entities.as_slice()))
        .fold(0.0, f64::max)
}

