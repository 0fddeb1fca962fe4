mod common;

use std::collections::{BTreeMap, HashSet};
use std::fs;

use common::{toy_config, toy_federation};
use feds::harness::{
    compare_runs, read_tables, run_observed, run_on, write_run_dir, ExperimentConfig, RunRecord, Strategy,
};
use feds::kg::{write_triples, Triple};
use feds::kge::{evaluate_ranking, weighted_metrics, KgeMethod};
use feds::ledger::{Attainment, Direction};

#[test]
fn fedep_sends_full_rows_every_round() {
    let fed = toy_federation(0);
    let out = run_on(&toy_config(Strategy::Fedep), &fed).unwrap();
    let width = 16;
    for round in 0..out.rounds_run {
        for shard in &fed.spec.clients {
            let full = (shard.num_shared() * width) as u64;
            assert_eq!(out.ledger.client_round(shard.client_id, round, Direction::Up), full);
            assert_eq!(out.ledger.client_round(shard.client_id, round, Direction::Down), full);
        }
    }
}

#[test]
fn feds_cycles_have_one_sync_round() {
    let fed = toy_federation(1);
    let mut cfg = toy_config(Strategy::Feds);
    cfg.s = 3;
    cfg.patience = 100;
    cfg.max_rounds = 13;
    let out = run_on(&cfg, &fed).unwrap();
    let len = cfg.s + 1;
    let mut sync_rounds: BTreeMap<usize, HashSet<bool>> = BTreeMap::new();
    for r in &out.ledger.records {
        sync_rounds.entry(r.round).or_default().insert(r.sign_bits == 0);
    }
    for cycle in 0..out.rounds_run / len {
        let syncs = (cycle * len..(cycle + 1) * len)
            .filter(|t| sync_rounds[t] == HashSet::from([true]))
            .count();
        assert_eq!(syncs, 1, "cycle {cycle}");
    }
    for (t, kinds) in &sync_rounds {
        assert_eq!(kinds.len(), 1);
        if kinds.contains(&true) {
            for shard in &fed.spec.clients {
                let c = shard.client_id;
                assert_eq!(out.ledger.client_round(c, *t, Direction::Up), out.ledger.client_round(c, *t, Direction::Down));
            }
        }
    }
    let mut running = 0;
    for t in 0..out.rounds_run {
        let through = out.ledger.total_through(t);
        assert!(through >= running);
        running = through;
    }
}

#[test]
fn early_stopping_follows_patience() {
    let fed = toy_federation(2);
    for patience in [1, 2] {
        let mut cfg = toy_config(Strategy::Feds);
        cfg.patience = patience;
        cfg.eval_every = 1;
        cfg.max_rounds = 60;
        let out = run_on(&cfg, &fed).unwrap();
        let rows = &out.runlog.rows;
        let mut best = f64::NEG_INFINITY;
        let mut declines = 0;
        for (i, row) in rows.iter().enumerate() {
            if row.mrr > best {
                best = row.mrr;
                declines = 0;
            } else {
                declines += 1;
            }
            if declines == patience {
                assert_eq!(i, rows.len() - 1, "run continued past {patience} declines");
            }
        }
        if out.rounds_run < cfg.max_rounds {
            assert_eq!(declines, patience);
        }
    }
}

#[test]
fn reported_metrics_come_from_the_best_checkpoint() {
    let fed = toy_federation(3);
    let mut cfg = toy_config(Strategy::Feds);
    cfg.eval_every = 1;
    cfg.patience = 3;
    let out = run_on(&cfg, &fed).unwrap();
    let best = *out.runlog.best().unwrap();
    let summary = out.summary().unwrap();
    assert_eq!(summary.mrr_cg, best.test_mrr);
    assert_eq!(summary.r_cg, best.round);
    let results: Vec<_> = fed
        .spec
        .clients
        .iter()
        .zip(&out.best_tables)
        .map(|(shard, table)| evaluate_ranking(table, &shard.test, &shard.known_triples()).unwrap())
        .collect();
    let weights: Vec<usize> = fed.spec.clients.iter().map(|s| s.test.len()).collect();
    assert_eq!(weighted_metrics(&results, &weights).unwrap().0, best.test_mrr);
}

#[test]
fn runs_are_reproducible_and_thread_count_independent() {
    let fed = toy_federation(4);
    let cfg = toy_config(Strategy::Feds);
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let a = run_on(&cfg, &fed).unwrap();
    let b = run_on(&cfg, &fed).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool.install(|| run_on(&cfg, &fed)).unwrap();
    for (dir, out) in dirs.iter().zip([&a, &b, &c]) {
        write_run_dir(dir.path(), out).unwrap();
    }
    for name in ["runlog.csv", "ledger.csv", "summary.json", "best_embeddings.bin"] {
        let first = fs::read(dirs[0].path().join(name)).unwrap();
        for d in &dirs[1..] {
            assert_eq!(first, fs::read(d.path().join(name)).unwrap(), "{name}");
        }
    }
}

#[test]
fn run_directory_contents() {
    let fed = toy_federation(5);
    let out = run_on(&toy_config(Strategy::Fedep), &fed).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = write_run_dir(dir.path(), &out).unwrap();
    let tables = read_tables(dir.path().join("best_embeddings.bin")).unwrap();
    assert_eq!(tables.len(), 3);
    for ((rows, cols, values), table) in tables.iter().zip(&out.best_tables) {
        assert_eq!((*rows, *cols), (table.entities.rows(), table.entities.cols()));
        assert_eq!(values[0], table.entities.as_slice()[0] as f32);
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    for key in ["strategy", "seed", "config", "MRR@CG", "Hits@10@CG", "R@CG", "total_params_up", "total_params_down", "P@CG", "P@99", "P@98"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert_eq!(json["P@CG"], summary.p_cg);
    let cfg = ExperimentConfig::load(dir.path().join("config.cfg")).unwrap();
    assert_eq!(cfg.dataset, dir.path().join("toy"));
    assert_eq!(ExperimentConfig { dataset: out.config.dataset.clone(), ..cfg }, out.config);
    let header = fs::read_to_string(dir.path().join("ledger.csv")).unwrap();
    assert!(header.starts_with("round,client_id,direction,embedding_params,sign_bits,priority_params"));
}

#[test]
fn comparisons() {
    let fed = toy_federation(6);
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for (name, strategy, dim) in [("a", Strategy::Feds, 16), ("b", Strategy::Fedep, 16), ("c", Strategy::Fedep, 8)] {
        let mut cfg = toy_config(strategy);
        cfg.dim = dim;
        let out = run_on(&cfg, &fed).unwrap();
        write_run_dir(dir.path().join(name), &out).unwrap();
        paths.push(dir.path().join(name));
    }
    let a = RunRecord::load(&paths[0]).unwrap();
    let b = RunRecord::load(paths[1].join("summary.json")).unwrap();
    let c = RunRecord::load(&paths[2]).unwrap();

    let same = compare_runs(&a, &a).unwrap();
    assert_eq!(same.metrics.p_cg, 1.0);
    assert_eq!(same.metrics.p_99, Attainment::Value(1.0));
    assert_eq!(same.metrics.p_98, Attainment::Value(1.0));
    assert!(same.render().contains("1.00x"));

    let vs = compare_runs(&a, &b).unwrap();
    assert!(vs.metrics.p_cg > 0.0);
    assert!(compare_runs(&a, &c).is_err());

    let other = toy_federation(7);
    let out = run_on(&toy_config(Strategy::Fedep), &other).unwrap();
    write_run_dir(dir.path().join("d"), &out).unwrap();
    let d = RunRecord::load(dir.path().join("d")).unwrap();
    assert!(compare_runs(&a, &d).unwrap_err().to_string().contains("different datasets"));
}

#[test]
fn every_strategy_and_method_runs() {
    let fed = toy_federation(8);
    for strategy in Strategy::ALL {
        let mut cfg = toy_config(strategy);
        cfg.max_rounds = 4;
        cfg.local_epochs = 2;
        cfg.single_eval_every = 2;
        cfg.svd_cols = 4;
        cfg.svd_rank = 2;
        let out = run_on(&cfg, &fed).unwrap();
        assert_eq!(out.runlog.rows.len(), 2, "{strategy}");
        let total = out.ledger.total();
        assert_eq!(total == 0, strategy == Strategy::Single, "{strategy}");
    }
    for method in [KgeMethod::RotatE, KgeMethod::ComplEx] {
        let mut cfg = toy_config(Strategy::Feds);
        cfg.kge_method = method;
        cfg.max_rounds = 4;
        let out = run_on(&cfg, &fed).unwrap();
        assert_eq!(out.best_tables[0].entity_width(), 32);
    }
}

#[test]
fn kd_ledger_counts_low_dimension_only() {
    let fed = toy_federation(9);
    let mut cfg = toy_config(Strategy::FedeKd);
    cfg.max_rounds = 2;
    cfg.kd_low_dim = 12;
    let out = run_on(&cfg, &fed).unwrap();
    for shard in &fed.spec.clients {
        assert_eq!(out.ledger.client_round(shard.client_id, 0, Direction::Up), (shard.num_shared() * 12) as u64);
    }
    assert_eq!(out.trained_dim, 12);
}

#[test]
fn sync_rounds_leave_owners_identical() {
    let fed = toy_federation(10);
    let mut cfg = toy_config(Strategy::Feds);
    cfg.s = 2;
    cfg.max_rounds = 9;
    cfg.patience = 100;
    let mut checked = 0;
    run_observed(&cfg, &fed, |event| {
        if !event.synchronized {
            return;
        }
        checked += 1;
        let tables = event.state.models.tables();
        for (global, owners) in fed.spec.existence.iter().enumerate() {
            if owners.len() < 2 {
                continue;
            }
            let row = |c: usize| tables[c].entities.row(fed.spec.clients[c].global_to_local(global).unwrap()).to_vec();
            let first = row(owners[0]);
            for &o in &owners[1..] {
                assert!(common::max_abs_diff(&row(o), &first) <= 1e-12);
            }
        }
    })
    .unwrap();
    assert_eq!(checked, 3);
}

#[test]
fn configs_load_datasets_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let fed = toy_federation(11);
    write_triples(dir.path().join("kg.tsv"), &fed.store).unwrap();
    feds::kg::write_federation(dir.path().join("fed"), &fed.store, &fed.spec).unwrap();
    for dataset in ["kg.tsv", "fed"] {
        let text = format!("dataset = {dataset}\npartition_seed = 11\ndim = 8\nmax_rounds = 2\neval_every = 1\nbatch_size = 256\n");
        fs::write(dir.path().join("run.cfg"), text).unwrap();
        let cfg = ExperimentConfig::load(dir.path().join("run.cfg")).unwrap();
        let out = feds::harness::run_experiment(&cfg).unwrap();
        assert_eq!(out.fingerprint, fed.fingerprint, "{dataset}");
    }
    assert!(ExperimentConfig::load(dir.path().join("missing.cfg")).is_err());
}

#[test]
fn single_baseline_is_deterministic_and_below_perfect() {
    let fed = toy_federation(12);
    let shard = &fed.spec.clients[0];
    let hp = toy_config(Strategy::Single).hyperparams();
    let run = || feds::baselines::single_baseline(shard, &hp, KgeMethod::TransE, 16, 3, 2, 2, 10).unwrap();
    let a = run();
    assert_eq!(a, run());
    assert!(a.mrr > 0.0 && a.mrr <= 1.0);
    let known: HashSet<Triple> = shard.known_triples();
    assert!(shard.test.iter().all(|t| known.contains(t)));
}

#[test]
fn bundled_configs_parse() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["feds", "fedep", "single"] {
        let cfg = ExperimentConfig::load(root.join(format!("{name}.cfg"))).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.strategy.name(), name);
        assert!(cfg.dataset.exists());
    }
}
