mod common;

use std::collections::HashSet;
use std::io::Write;

use common::{loss_gradient_error, random_table};
use feds::kg::{load_triples, Triple};
use feds::kge::{
    adam_step, evaluate_ranking, init_embeddings, local_train, sample_batch, self_adversarial_loss, AdamConfig,
    AdamState, Gradients, Hyperparams, KgeMethod, RankingResult,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const METHODS: [KgeMethod; 3] = [KgeMethod::TransE, KgeMethod::RotatE, KgeMethod::ComplEx];

#[test]
fn loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for method in METHODS {
        for _ in 0..40 {
            let err = loss_gradient_error(method, &mut rng);
            assert!(err <= 1e-4, "{method}: relative error {err}");
        }
    }
}

#[test]
fn load_triples_keeps_order_and_duplicates() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "a\tr\tb\nb\tr\tc\n\na\tr\tb").unwrap();
    let store = load_triples(file.path()).unwrap();
    assert_eq!(store.triples.len(), 3);
    assert_eq!(store.entities.len(), 3);
    assert_eq!(store.relations.len(), 1);
    assert_eq!(store.triples[0], store.triples[2]);
    assert_eq!(store.entities.names(), ["a", "b", "c"]);

    let mut bad = tempfile::NamedTempFile::new().unwrap();
    writeln!(bad, "a\tr\tb\na\tr").unwrap();
    let err = load_triples(bad.path()).unwrap_err().to_string();
    assert!(err.contains("line 2"), "{err}");

    let empty = tempfile::NamedTempFile::new().unwrap();
    assert!(load_triples(empty.path()).is_err());
    assert!(load_triples("/nonexistent/triples.tsv").is_err());
}

fn toy_shard() -> feds::kg::ClientShard {
    common::toy_federation(1).spec.clients[0].clone()
}

#[test]
fn local_training_lowers_loss_on_a_fixed_batch() {
    let shard = toy_shard();
    let hp = Hyperparams {
        learning_rate: 0.01,
        batch_size: 64,
        ..Hyperparams::default()
    };
    let mut table = init_embeddings(&shard, &hp, KgeMethod::TransE, 16, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let probe = sample_batch(&shard.valid, shard.num_entities(), hp.negatives, &mut rng);
    let before = self_adversarial_loss(&table, &probe, &hp).unwrap().0;
    let mut adam = AdamState::for_table(&table);
    local_train(&shard, &mut table, &mut adam, &hp, &mut rng).unwrap();
    let after = self_adversarial_loss(&table, &probe, &hp).unwrap().0;
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn zero_epochs_leave_the_table_alone() {
    let shard = toy_shard();
    let hp = Hyperparams {
        local_epochs: 0,
        ..Hyperparams::default()
    };
    let mut table = init_embeddings(&shard, &hp, KgeMethod::RotatE, 8, 3).unwrap();
    let before = table.clone();
    let mut adam = AdamState::for_table(&table);
    let out = local_train(&shard, &mut table, &mut adam, &hp, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(out, None);
    assert_eq!(table, before);

    let mut empty = shard.clone();
    empty.train.clear();
    assert!(local_train(&empty, &mut table, &mut adam, &hp, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

#[test]
fn training_is_sparse_and_deterministic() {
    let shard = toy_shard();
    let hp = Hyperparams {
        batch_size: 4,
        negatives: 2,
        ..Hyperparams::default()
    };
    let table = init_embeddings(&shard, &hp, KgeMethod::ComplEx, 8, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let samples = sample_batch(&shard.train[..4], shard.num_entities(), hp.negatives, &mut rng);
    let touched: HashSet<usize> = samples
        .iter()
        .flat_map(|s| (0..s.negatives.len()).flat_map(|i| [s.negative_triple(i).head, s.negative_triple(i).tail]).chain([s.positive.head, s.positive.tail]))
        .collect();
    let (_, grads) = self_adversarial_loss(&table, &samples, &hp).unwrap();
    let mut stepped = table.clone();
    let mut adam = AdamState::for_table(&table);
    adam_step(&mut stepped, &grads, &mut adam, &AdamConfig::default()).unwrap();
    for e in 0..table.entities.rows() {
        if !touched.contains(&e) {
            assert_eq!(stepped.entities.row(e), table.entities.row(e));
        }
    }
    let relations: HashSet<usize> = samples.iter().map(|s| s.positive.relation).collect();
    for r in 0..table.relations.rows() {
        if !relations.contains(&r) {
            assert_eq!(stepped.relations.row(r), table.relations.row(r));
        }
    }

    let run = || {
        let mut t = table.clone();
        let mut a = AdamState::for_table(&t);
        local_train(&shard, &mut t, &mut a, &hp, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        t
    };
    assert_eq!(run(), run());
}

#[test]
fn adam_rejects_mismatched_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut table = random_table(KgeMethod::TransE, 4, 5, 2, &mut rng);
    let other = random_table(KgeMethod::TransE, 4, 7, 2, &mut rng);
    let grads = Gradients::for_table(&table);
    let mut adam = AdamState::for_table(&other);
    assert!(adam_step(&mut table, &grads, &mut adam, &AdamConfig::default()).is_err());
}

#[test]
fn ranking_matches_brute_force_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for method in METHODS {
        let mut table = random_table(method, 3, 12, 2, &mut rng);
        // force tie blocks by duplicating rows
        let dup = table.entities.row(0).to_vec();
        table.entities.row_mut(5).copy_from_slice(&dup);
        table.entities.row_mut(7).copy_from_slice(&dup);
        let known: HashSet<Triple> = (0..30)
            .map(|_| Triple::new(rng.gen_range(0..12), rng.gen_range(0..2), rng.gen_range(0..12)))
            .collect();
        let queries: Vec<Triple> = known.iter().copied().take(10).collect();
        let got = evaluate_ranking(&table, &queries, &known).unwrap();
        let want = RankingResult::from_ranks(common::brute_force_ranks(&table, &queries, &known));
        assert_eq!(got, want, "{method}");
    }
}

#[test]
fn ranking_trivial_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut table = random_table(KgeMethod::TransE, 2, 5, 1, &mut rng);
    table.relations.row_mut(0).copy_from_slice(&[0.0, 0.0]);
    for e in 0..5 {
        table.entities.row_mut(e).copy_from_slice(&[e as f64 * 10.0, 0.0]);
    }
    let q = Triple::new(2, 0, 2);
    let known: HashSet<Triple> = [q].into_iter().collect();
    let r = evaluate_ranking(&table, &[q], &known).unwrap();
    assert_eq!(r.ranks, vec![1.0, 1.0]);
    assert_eq!(r.mrr, 1.0);

    for e in 0..5 {
        table.entities.row_mut(e).copy_from_slice(&[0.0, 0.0]);
    }
    let r = evaluate_ranking(&table, &[q], &known).unwrap();
    assert_eq!(r.ranks, vec![3.0, 3.0]);
    assert!(evaluate_ranking(&table, &[], &known).is_err());
}

#[test]
fn init_is_keyed_by_global_id() {
    let fed = common::toy_federation(2);
    let hp = Hyperparams::default();
    let tables: Vec<_> = fed
        .spec
        .clients
        .iter()
        .map(|s| init_embeddings(s, &hp, KgeMethod::TransE, 256, 7).unwrap())
        .collect();
    let bound = hp.init_bound(256);
    assert_eq!(bound, 0.0390625);
    for (shard, table) in fed.spec.clients.iter().zip(&tables) {
        assert!(table.entities.as_slice().iter().all(|x| x.abs() <= bound));
        for (i, &local) in shard.shared_entities.iter().enumerate() {
            assert_eq!(table.history.row(i), table.entities.row(local));
            let global = shard.local_to_global[local];
            for &other in fed.spec.owners(global) {
                let o = &fed.spec.clients[other];
                let row = tables[other].entities.row(o.global_to_local(global).unwrap());
                assert_eq!(row, table.entities.row(local));
            }
        }
    }
}
