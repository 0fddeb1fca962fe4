use std::collections::HashSet;

use rand::seq::SliceRandom;

use super::{floor_fraction, Triple, TripleStore};
use crate::error::{ensure, Result};
use crate::seed::{self, tags};

/// One client's slice of the federation. All triple indices are local;
/// local entity `i` is global entity `local_to_global[i]`, and local ids are
/// assigned in ascending global order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientShard {
    pub client_id: usize,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub local_to_global: Vec<usize>,
    pub relation_to_global: Vec<usize>,
    /// Local indices of entities owned by at least one other client, ascending.
    pub shared_entities: Vec<usize>,
}

impl ClientShard {
    pub fn num_entities(&self) -> usize {
        self.local_to_global.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_to_global.len()
    }

    /// N_c.
    pub fn num_shared(&self) -> usize {
        self.shared_entities.len()
    }

    pub fn global_to_local(&self, global: usize) -> Option<usize> {
        self.local_to_global.binary_search(&global).ok()
    }

    pub fn shared_global(&self, shared_index: usize) -> usize {
        self.local_to_global[self.shared_entities[shared_index]]
    }

    /// Position of a global entity inside `shared_entities`.
    pub fn shared_index_of_global(&self, global: usize) -> Option<usize> {
        let local = self.global_to_local(global)?;
        self.shared_entities.binary_search(&local).ok()
    }

    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    pub fn triple_count(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn known_triples(&self) -> HashSet<Triple> {
        self.all_triples().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FederationSpec {
    pub clients: Vec<ClientShard>,
    /// Global entity → ascending owning client ids.
    pub existence: Vec<Vec<usize>>,
    pub num_relations: usize,
}

impl FederationSpec {
    pub fn num_entities(&self) -> usize {
        self.existence.len()
    }

    pub fn owners(&self, global: usize) -> &[usize] {
        &self.existence[global]
    }

    /// Rebuilds the existence table from the shards' entity maps.
    pub fn rebuild_existence(&mut self, num_entities: usize) {
        let mut existence = vec![Vec::new(); num_entities];
        for shard in &self.clients {
            for &g in &shard.local_to_global {
                existence[g].push(shard.client_id);
            }
        }
        self.existence = existence;
    }
}

/// Train/valid/test ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

/// Shuffles relations with `seed`, deals them round-robin into
/// `num_clients` groups and hands each client the triples of its group. All
/// of a client's triples land in `train` until [`split_shard`] runs.
pub fn partition_by_relation(
    store: &TripleStore,
    num_clients: usize,
    seed: u64,
) -> Result<FederationSpec> {
    ensure!(num_clients >= 2, InvalidArgument, "need at least 2 clients, got {num_clients}");
    let num_relations = store.relations.len();
    ensure!(
        num_relations >= num_clients,
        InvalidArgument,
        "{num_relations} relations cannot be split among {num_clients} clients"
    );

    let mut order: Vec<usize> = (0..num_relations).collect();
    order.shuffle(&mut seed::rng(seed, tags::PARTITION, 0));
    let mut owner_of_relation = vec![0; num_relations];
    for (slot, &rel) in order.iter().enumerate() {
        owner_of_relation[rel] = slot % num_clients;
    }

    let mut clients = Vec::with_capacity(num_clients);
    for client_id in 0..num_clients {
        let global: Vec<Triple> = store
            .triples
            .iter()
            .filter(|t| owner_of_relation[t.relation] == client_id)
            .copied()
            .collect();

        let mut entities: Vec<usize> = global.iter().flat_map(|t| [t.head, t.tail]).collect();
        entities.sort_unstable();
        entities.dedup();
        let mut relations: Vec<usize> = (0..num_relations)
            .filter(|&r| owner_of_relation[r] == client_id)
            .collect();
        relations.sort_unstable();

        let local = |g: usize| entities.binary_search(&g).expect("entity collected above");
        let rel_local = |g: usize| relations.binary_search(&g).expect("relation in group");
        let train = global
            .iter()
            .map(|t| Triple::new(local(t.head), rel_local(t.relation), local(t.tail)))
            .collect();

        clients.push(ClientShard {
            client_id,
            train,
            valid: Vec::new(),
            test: Vec::new(),
            local_to_global: entities,
            relation_to_global: relations,
            shared_entities: Vec::new(),
        });
    }

    let mut spec = FederationSpec {
        clients,
        existence: Vec::new(),
        num_relations,
    };
    spec.rebuild_existence(store.entities.len());
    Ok(compute_shared_entities(spec))
}

/// Deduplicates the shard's triples, shuffles them with `seed` and cuts
/// `floor(train·n)` / `floor(valid·n)` / remainder.
pub fn split_shard(shard: &ClientShard, ratios: SplitRatios, seed: u64) -> Result<ClientShard> {
    ensure!(
        ratios.train >= 0.0
            && ratios.valid >= 0.0
            && ratios.test >= 0.0
            && (ratios.train + ratios.valid + ratios.test - 1.0).abs() < 1e-9,
        InvalidArgument,
        "split ratios must be nonnegative and sum to 1: {ratios:?}"
    );
    let mut seen = HashSet::new();
    let mut triples: Vec<Triple> = shard
        .all_triples()
        .filter(|t| seen.insert(**t))
        .copied()
        .collect();
    let n = triples.len();
    ensure!(
        n >= 10,
        InvalidArgument,
        "client {} has {n} distinct triples; at least 10 are needed to split",
        shard.client_id
    );
    triples.shuffle(&mut seed::rng(seed, tags::SPLIT, shard.client_id as u64));

    let n_train = floor_fraction(n, ratios.train);
    let n_valid = floor_fraction(n, ratios.valid);
    let test = triples.split_off(n_train + n_valid);
    let valid = triples.split_off(n_train);
    Ok(ClientShard {
        train: triples,
        valid,
        test,
        ..shard.clone()
    })
}

/// Marks every entity owned by two or more clients as shared.
pub fn compute_shared_entities(mut spec: FederationSpec) -> FederationSpec {
    for shard in &mut spec.clients {
        shard.shared_entities = shard
            .local_to_global
            .iter()
            .enumerate()
            .filter(|(_, &g)| spec.existence[g].len() >= 2)
            .map(|(local, _)| local)
            .collect();
    }
    spec
}
